"""Exact evaluation on finite models.

A model has a data marginal q(x), a prior p(z) and two conditional tables:
``theta_q[i, j] = q(z=j | x=i)`` and ``theta_p[j, i] = p(x=i | z=j)``.
All joint-shaped arrays are indexed ``[x, z]``. Logs are natural, so every
information quantity is in nats. ``0 * log 0`` is taken as 0; a positive
mass on an event with zero reference probability gives an infinite KL.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import rel_entr, xlogy

from .objective import (
    BASIS,
    DistRef,
    KL_EXPRESSIONS,
    LagrangianObjective,
    Signature,
)

__all__ = [
    "TabularModel",
    "ModelDistributions",
    "MIBounds",
    "KernelSpec",
    "KernelError",
    "UnsupportedAtomError",
    "ModelValidationError",
    "distributions",
    "eval_term",
    "eval_terms",
    "kl_expression",
    "eval_objective",
    "eval_encoded",
    "mutual_information",
    "mi_bounds",
    "mmd",
    "mmd_z",
    "js_divergence",
    "elbo",
    "entropy",
    "feasible_model",
    "random_model",
    "register_atom_evaluator",
    "load_model",
    "save_model",
]

_TOL = 1e-12


class ModelValidationError(ValueError):
    pass


class KernelError(ValueError):
    pass


class UnsupportedAtomError(ValueError):
    pass


def _prob_vector(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ModelValidationError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(v)) or np.any(v < 0) or np.any(v > 1):
        raise ModelValidationError(f"{name} entries must lie in [0, 1]")
    if abs(v.sum() - 1) > _TOL:
        raise ModelValidationError(f"{name} sums to {v.sum()!r}, not 1")
    return v


def _stochastic(m, shape, name: str) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != shape:
        raise ModelValidationError(f"{name} has shape {m.shape}, expected {shape}")
    if not np.all(np.isfinite(m)) or np.any(m < 0) or np.any(m > 1):
        raise ModelValidationError(f"{name} entries must lie in [0, 1]")
    bad = np.abs(m.sum(axis=1) - 1) > _TOL
    if np.any(bad):
        raise ModelValidationError(f"rows {np.flatnonzero(bad).tolist()} of {name} do not sum to 1")
    return m


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TabularModel:
    q_x: np.ndarray
    p_z: np.ndarray
    theta_q: np.ndarray
    theta_p: np.ndarray

    def __post_init__(self):
        q_x = _prob_vector(self.q_x, "q_x")
        p_z = _prob_vector(self.p_z, "p_z")
        nx, nz = q_x.size, p_z.size
        theta_q = _stochastic(self.theta_q, (nx, nz), "theta_q")
        theta_p = _stochastic(self.theta_p, (nz, nx), "theta_p")
        for name, val in (("q_x", q_x), ("p_z", p_z), ("theta_q", theta_q), ("theta_p", theta_p)):
            object.__setattr__(self, name, _frozen(val))

    @property
    def nx(self) -> int:
        return self.q_x.size

    @property
    def nz(self) -> int:
        return self.p_z.size

    def with_theta(self, theta_q=None, theta_p=None) -> "TabularModel":
        return TabularModel(self.q_x, self.p_z,
                            self.theta_q if theta_q is None else theta_q,
                            self.theta_p if theta_p is None else theta_p)

    def to_dict(self) -> dict:
        return {"q_x": self.q_x.tolist(), "p_z": self.p_z.tolist(),
                "theta_q": self.theta_q.tolist(), "theta_p": self.theta_p.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TabularModel":
        missing = [k for k in ("q_x", "p_z", "theta_q", "theta_p") if k not in d]
        if missing:
            raise ModelValidationError(f"model is missing keys {missing}")
        return cls(d["q_x"], d["p_z"], d["theta_q"], d["theta_p"])

    def __eq__(self, other) -> bool:
        if not isinstance(other, TabularModel):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("q_x", "p_z", "theta_q", "theta_p"))


def load_model(path: str) -> TabularModel:
    with open(path, encoding="utf-8") as fh:
        return TabularModel.from_dict(json.load(fh))


def save_model(model: TabularModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=2)
        fh.write("\n")


def _conditional_rows(joint: np.ndarray, marg: np.ndarray) -> np.ndarray:
    # rows of joint divided by marg; zero-mass rows become uniform
    out = np.empty_like(joint)
    zero = marg <= 0
    out[~zero] = joint[~zero] / marg[~zero, None]
    out[zero] = 1.0 / joint.shape[1]
    return out


@dataclass(frozen=True, eq=False)
class ModelDistributions:
    """All joints, marginals and conditionals, indexed ``[x, z]``."""

    p_joint: np.ndarray
    q_joint: np.ndarray
    p_x: np.ndarray
    p_z: np.ndarray
    q_x: np.ndarray
    q_z: np.ndarray
    p_x_given_z: np.ndarray
    p_z_given_x: np.ndarray
    q_x_given_z: np.ndarray
    q_z_given_x: np.ndarray
    h_qx: float

    def table(self, d: DistRef) -> np.ndarray:
        """Probability table of a distribution, broadcast to ``[x, z]`` shape."""
        fam, sig = d.family, d.signature
        nx, nz = self.p_joint.shape
        if sig == Signature.JOINT:
            return self.p_joint if fam == "p" else self.q_joint
        if sig == Signature.X_GIVEN_Z:
            return self.p_x_given_z if fam == "p" else self.q_x_given_z
        if sig == Signature.Z_GIVEN_X:
            return self.p_z_given_x if fam == "p" else self.q_z_given_x
        if sig == Signature.MARG_X:
            v = self.p_x if fam == "p" else self.q_x
            return np.broadcast_to(v[:, None], (nx, nz))
        v = self.p_z if fam == "p" else self.q_z
        return np.broadcast_to(v[None, :], (nx, nz))

    def joint(self, family: str) -> np.ndarray:
        return self.p_joint if family == "p" else self.q_joint


def entropy(v) -> float:
    v = np.asarray(v, dtype=float)
    return float(-xlogy(v, v).sum())


def distributions(m: TabularModel) -> ModelDistributions:
    p_joint = (m.p_z[:, None] * m.theta_p).T
    q_joint = m.q_x[:, None] * m.theta_q
    p_x = p_joint.sum(axis=1)
    q_z = q_joint.sum(axis=0)
    p_zx = _conditional_rows(p_joint, p_x)
    q_xz = _conditional_rows(q_joint.T, q_z).T
    return ModelDistributions(
        p_joint=p_joint, q_joint=q_joint, p_x=p_x, p_z=np.array(m.p_z), q_x=np.array(m.q_x),
        q_z=q_z, p_x_given_z=np.array(m.theta_p.T), p_z_given_x=p_zx,
        q_x_given_z=q_xz, q_z_given_x=np.array(m.theta_q), h_qx=entropy(m.q_x),
    )


def _expect_log(weight: np.ndarray, prob: np.ndarray) -> float:
    # sum weight * log(prob) with 0 log(anything) = 0
    mass = weight > 0
    if np.any(prob[mass] <= 0):
        return -np.inf
    return float(np.sum(weight[mass] * np.log(prob[mass])))


def eval_term(m: TabularModel, basis_index: int, dists: ModelDistributions | None = None) -> float:
    """Value of one basis expectation ``E_outer[log d]``; -inf on support violation."""
    if not 0 <= basis_index < len(BASIS):
        raise IndexError(f"basis index {basis_index} out of range")
    dists = dists or distributions(m)
    outer, d = BASIS[basis_index]
    return _expect_log(dists.joint(outer), dists.table(d))


def eval_terms(m: TabularModel) -> np.ndarray:
    dists = distributions(m)
    return np.array([eval_term(m, i, dists) for i in range(len(BASIS))])


def _kl(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(rel_entr(a, b)))


def _cond_kl(weights: np.ndarray, a_rows: np.ndarray, b_rows: np.ndarray) -> float:
    # sum_i w_i KL(a_i || b_i), zero-weight rows skipped
    total = 0.0
    for w, a, b in zip(weights, a_rows, b_rows):
        if w > 0:
            total += w * _kl(a, b)
    return float(total)


def kl_expression(m: TabularModel, first: str, sig: Signature,
                  dists: ModelDistributions | None = None) -> float:
    """One of the ten KL expressions, computed from the distributions directly.

    Conditional KLs are averaged under the first argument's family.
    """
    d = dists or distributions(m)
    sig = Signature(sig)
    a, b = (("p", "q") if first == "p" else ("q", "p"))
    if sig == Signature.JOINT:
        return _kl(d.joint(a), d.joint(b))
    if sig == Signature.MARG_X:
        va, vb = (d.p_x, d.q_x) if a == "p" else (d.q_x, d.p_x)
        return _kl(va, vb)
    if sig == Signature.MARG_Z:
        va, vb = (d.p_z, d.q_z) if a == "p" else (d.q_z, d.p_z)
        return _kl(va, vb)
    if sig == Signature.Z_GIVEN_X:
        w = d.p_x if a == "p" else d.q_x
        ra, rb = (d.p_z_given_x, d.q_z_given_x) if a == "p" else (d.q_z_given_x, d.p_z_given_x)
        return _cond_kl(w, ra, rb)
    w = d.p_z if a == "p" else d.q_z
    ra, rb = (d.p_x_given_z, d.q_x_given_z) if a == "p" else (d.q_x_given_z, d.p_x_given_z)
    return _cond_kl(w, ra.T, rb.T)


def mutual_information(m: TabularModel, side: str = "q",
                       dists: ModelDistributions | None = None) -> float:
    d = dists or distributions(m)
    if side not in ("p", "q"):
        raise ValueError("side must be 'p' or 'q'")
    joint = d.joint(side)
    px = joint.sum(axis=1)
    pz = joint.sum(axis=0)
    return _kl(joint, np.outer(px, pz))


@dataclass(frozen=True)
class MIBounds:
    i_q: float
    i_q_upper: float
    i_q_lower: float
    gap_upper: float
    gap_lower: float
    i_p: float
    i_p_upper: float
    i_p_lower: float
    gap_upper_p: float
    gap_lower_p: float


def mi_bounds(m: TabularModel, dists: ModelDistributions | None = None) -> MIBounds:
    """Variational upper and lower bounds on both mutual informations.

    q side: the upper bound swaps q(z) for the prior, the lower bound swaps
    q(x|z) for the decoder; gaps are KL(q(z)||p(z)) and the q(z)-averaged
    KL(q(x|z)||p(x|z)). The p side is the mirror image with q(x) and the
    encoder.
    """
    d = dists or distributions(m)
    i_q = mutual_information(m, "q", d)
    upper = _cond_kl(d.q_x, d.q_z_given_x, np.broadcast_to(d.p_z, d.q_z_given_x.shape))
    lower = _expect_log(d.q_joint, d.p_x_given_z) + d.h_qx
    gap_u = _kl(d.q_z, d.p_z)
    gap_l = _cond_kl(d.q_z, d.q_x_given_z.T, d.p_x_given_z.T)
    i_p = mutual_information(m, "p", d)
    upper_p = _cond_kl(d.p_z, d.p_x_given_z.T, np.broadcast_to(d.q_x, (d.p_z.size, d.q_x.size)))
    lower_p = _expect_log(d.p_joint, d.q_z_given_x) + entropy(d.p_z)
    gap_up = _kl(d.p_x, d.q_x)
    gap_lp = _cond_kl(d.p_x, d.p_z_given_x, d.q_z_given_x)
    return MIBounds(i_q, upper, lower, gap_u, gap_l, i_p, upper_p, lower_p, gap_up, gap_lp)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel on category indices; ``gaussian`` uses the integer embedding."""

    kind: str = "gaussian"
    sigma: float = 1.0
    matrix: tuple | None = None

    def gram(self, n: int) -> np.ndarray:
        if self.matrix is not None:
            k = np.asarray(self.matrix, dtype=float)
            if k.shape != (n, n):
                raise KernelError(f"kernel matrix has shape {k.shape}, expected {(n, n)}")
        elif self.kind == "gaussian":
            if not self.sigma > 0:
                raise KernelError("bandwidth must be positive")
            idx = np.arange(n, dtype=float)
            k = np.exp(-((idx[:, None] - idx[None, :]) ** 2) / (2 * self.sigma ** 2))
        else:
            raise KernelError(f"unknown kernel kind {self.kind!r}")
        if not np.allclose(k, k.T, atol=1e-12):
            raise KernelError("kernel matrix is not symmetric")
        if np.linalg.eigvalsh(k).min() < -1e-10:
            raise KernelError("kernel matrix is not positive semidefinite")
        return k


def mmd(a, b, gram: np.ndarray) -> float:
    """Exact squared MMD between two probability vectors."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(max(diff @ gram @ diff, 0.0))


def mmd_z(m: TabularModel, kernel: KernelSpec | None = None,
          dists: ModelDistributions | None = None) -> float:
    kernel = kernel or KernelSpec()
    d = dists or distributions(m)
    return mmd(d.p_z, d.q_z, kernel.gram(m.nz))


def js_divergence(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mid = 0.5 * (a + b)
    return 0.5 * _kl(a, mid) + 0.5 * _kl(b, mid)


def elbo(m: TabularModel, dists: ModelDistributions | None = None) -> float:
    d = dists or distributions(m)
    recon = _expect_log(d.q_joint, d.p_x_given_z)
    rate = _cond_kl(d.q_x, d.q_z_given_x, np.broadcast_to(d.p_z, d.q_z_given_x.shape))
    return recon - rate


def feasible_model(q_x, p_z) -> TabularModel:
    """Decoder ignores z, encoder ignores x: both joints equal q(x) p(z)."""
    q_x = _prob_vector(q_x, "q_x")
    p_z = _prob_vector(p_z, "p_z")
    return TabularModel(q_x, p_z, np.tile(p_z, (q_x.size, 1)), np.tile(q_x, (p_z.size, 1)))


def random_model(nx: int, nz: int, rng: np.random.Generator, q_x=None, p_z=None,
                 concentration: float = 1.0) -> TabularModel:
    """Dirichlet-random model; given marginals are kept."""
    q_x = rng.dirichlet(np.full(nx, concentration)) if q_x is None else q_x
    p_z = rng.dirichlet(np.full(nz, concentration)) if p_z is None else p_z
    return TabularModel(q_x, p_z, rng.dirichlet(np.full(nz, concentration), size=nx),
                        rng.dirichlet(np.full(nx, concentration), size=nz))


# ---------------------------------------------------------------------------
# objective evaluation

AtomEvaluator = Callable[[np.ndarray, np.ndarray, KernelSpec], float]
_ATOM_EVALUATORS: dict[str, AtomEvaluator] = {}


def register_atom_evaluator(kind: str, fn: AtomEvaluator | None) -> None:
    """Install (or with ``None`` remove) an evaluator for W or F atoms.

    The evaluator receives the two probability tables as flat vectors (a
    joint is flattened row-major over ``[x, z]``) and the kernel spec.
    """
    if kind not in ("W", "F"):
        raise ValueError("only W and F atoms take plug-in evaluators")
    if fn is None:
        _ATOM_EVALUATORS.pop(kind, None)
    else:
        _ATOM_EVALUATORS[kind] = fn


def _atom_vector(d: ModelDistributions, ref: DistRef) -> np.ndarray:
    sig = ref.signature
    if sig == Signature.JOINT:
        return d.joint(ref.family).ravel()
    if sig == Signature.MARG_X:
        return d.p_x if ref.family == "p" else d.q_x
    if sig == Signature.MARG_Z:
        return d.p_z if ref.family == "p" else d.q_z
    raise UnsupportedAtomError(f"divergence atoms over conditionals ({ref}) cannot be evaluated")


def _joint_gram(nx: int, nz: int, kernel: KernelSpec) -> np.ndarray:
    return np.kron(kernel.gram(nx), kernel.gram(nz))


def _eval_atom(d: ModelDistributions, atom, kernel: KernelSpec) -> float:
    a = _atom_vector(d, atom.left)
    b = _atom_vector(d, atom.right)
    if atom.kind == "JS":
        return js_divergence(a, b)
    if atom.kind == "MMD":
        nx, nz = d.p_joint.shape
        sig = atom.left.signature
        gram = (kernel.gram(nx) if sig == Signature.MARG_X else
                kernel.gram(nz) if sig == Signature.MARG_Z else _joint_gram(nx, nz, kernel))
        return mmd(a, b, gram)
    fn = _ATOM_EVALUATORS.get(atom.kind)
    if fn is None:
        raise UnsupportedAtomError(f"no evaluator registered for {atom.kind} atoms")
    return float(fn(a, b, kernel))


def _weighted_sum(pairs) -> float:
    total = 0.0
    for coef, val in pairs:
        if coef == 0:
            continue
        total += coef * val
    if np.isnan(total):
        raise ValueError("objective mixes +inf and -inf contributions")
    return float(total)


def eval_objective(m: TabularModel, obj: LagrangianObjective,
                   kernel: KernelSpec | None = None) -> float:
    """Value of an objective: KL part from direct divergences, raw basis
    terms, and atoms. Support violations give +inf or -inf."""
    kernel = kernel or KernelSpec()
    d = distributions(m)
    vec = obj.kl_part.vector()
    values = [mutual_information(m, "q", d), mutual_information(m, "p", d)]
    values += [kl_expression(m, f, s, d) for f, s in KL_EXPRESSIONS]
    pairs = [(float(c), v) for c, v in zip(vec, values)]
    pairs += [(float(c), eval_term(m, i, d)) for i, c in obj.terms.items()]
    pairs += [(float(a.weight), _eval_atom(d, a, kernel)) for a in obj.atoms if not a.is_trivial]
    return _weighted_sum(pairs)


def eval_encoded(m: TabularModel, vec) -> float:
    """Value of a basis-coordinate vector, term by term."""
    terms = eval_terms(m)
    return _weighted_sum((float(c), t) for c, t in zip(vec, terms))

