"""Dual optimization on tabular models.

Encoder and decoder are row-softmax logits. The primal objective is an
information bound chosen by the sign of ``alpha1`` (upper bound when it is
non-negative, lower bound otherwise) plus the mirror-image term for
``alpha2``; constraints are divergences kept below ``epsilon`` by
multipliers that are ascended (LagVAE) or frozen (InfoVAE baseline).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from typing import Sequence

import numpy as np

from .tabular import KernelSpec, TabularModel, entropy

__all__ = [
    "CONSTRAINT_KINDS",
    "ConfigError",
    "DivergenceError",
    "GradientError",
    "SelectionError",
    "InfeasibleError",
    "DualConfig",
    "DualState",
    "DualTrace",
    "TraceRow",
    "OracleResult",
    "gradients",
    "evaluate",
    "init_state",
    "run_lagvae",
    "run_infovae_baseline",
    "select_epsilon",
    "primal_oracle",
    "explicit_lagvae_coefficients",
    "load_config",
]

CONSTRAINT_KINDS = ("neg_elbo", "mmd_z", "kl_joint_qp", "kl_z_qp", "kl_z_pq")


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class DivergenceError(RuntimeError):
    def __init__(self, message: str, trace: "DualTrace | None" = None):
        super().__init__(message)
        self.trace = trace


class GradientError(ArithmeticError):
    def __init__(self, message: str, constraint: str | None = None):
        super().__init__(message)
        self.constraint = constraint


class SelectionError(RuntimeError):
    pass


class InfeasibleError(RuntimeError):
    def __init__(self, message: str, best_violation: float = math.inf):
        super().__init__(message)
        self.best_violation = best_violation


# ---------------------------------------------------------------------------
# configuration

_REQUIRED = ("nx", "nz", "q_x", "p_z", "alpha1", "constraints", "seed")


@dataclass(frozen=True)
class DualConfig:
    nx: int
    nz: int
    q_x: tuple[float, ...]
    p_z: tuple[float, ...]
    alpha1: float
    constraints: tuple[tuple[str, float | None], ...]
    seed: int
    alpha2: float = 0.0
    gamma: tuple[float, ...] | None = None
    rho_theta: float = 0.05
    rho_lambda: float = 0.5
    iters: int = 20000
    lambda_init: float = 1.0
    baseline_lambdas: tuple[float, ...] | None = None
    select_iters: int | None = None
    select_lambdas: tuple[float, ...] | None = None
    scale_by_epsilon: bool = False
    kernel_sigma: float = 1.0
    init_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "q_x", tuple(float(v) for v in self.q_x))
        object.__setattr__(self, "p_z", tuple(float(v) for v in self.p_z))
        cons = []
        for c in self.constraints:
            if isinstance(c, dict):
                if "kind" not in c:
                    raise ConfigError("constraint entry is missing key 'kind'", "kind")
                c = (c["kind"], c.get("epsilon"))
            kind, eps = c
            if kind not in CONSTRAINT_KINDS:
                raise ConfigError(f"unknown constraint kind {kind!r}", "constraints")
            if eps is not None:
                eps = float(eps)
                if not (math.isfinite(eps) and eps > 0):
                    raise ConfigError(f"epsilon for {kind} must be finite and > 0", "constraints")
            cons.append((kind, eps))
        object.__setattr__(self, "constraints", tuple(cons))
        for name in ("gamma", "baseline_lambdas", "select_lambdas"):
            v = getattr(self, name)
            if v is not None:
                v = tuple(float(x) for x in v)
                if len(v) != len(cons):
                    raise ConfigError(f"{name} needs one entry per constraint", name)
                if any(x < 0 or not math.isfinite(x) for x in v):
                    raise ConfigError(f"{name} entries must be finite and >= 0", name)
                object.__setattr__(self, name, v)
        if len(self.q_x) != self.nx or len(self.p_z) != self.nz:
            raise ConfigError("q_x / p_z lengths must match nx / nz", "q_x")
        for name, v in (("q_x", self.q_x), ("p_z", self.p_z)):
            if any(x <= 0 for x in v) or abs(sum(v) - 1) > 1e-12:
                raise ConfigError(f"{name} must be a strictly positive probability vector", name)
        for name in ("rho_theta", "rho_lambda", "kernel_sigma"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0", name)
        if self.iters < 0 or (self.select_iters is not None and self.select_iters < 0):
            raise ConfigError("iteration budgets must be >= 0", "iters")

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.constraints)

    @property
    def epsilons(self) -> tuple[float | None, ...]:
        return tuple(e for _, e in self.constraints)

    def with_epsilons(self, eps: Sequence[float]) -> "DualConfig":
        return self.replace(constraints=tuple(zip(self.kinds, (float(e) for e in eps))))

    def replace(self, **changes) -> "DualConfig":
        d = self.to_dict()
        d.update(changes)
        return DualConfig.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["constraints"] = [{"kind": k, "epsilon": e} for k, e in self.constraints]
        for k in ("q_x", "p_z", "gamma", "baseline_lambdas", "select_lambdas"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DualConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        for key in _REQUIRED:
            if key not in d:
                raise ConfigError(f"config is missing required key {key!r}", key)
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}", unknown[0])
        d = dict(d)
        if isinstance(d["constraints"], (list, tuple)):
            d["constraints"] = tuple(
                c if isinstance(c, dict) else tuple(c) for c in d["constraints"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path: str) -> DualConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return DualConfig.from_dict(data)


# ---------------------------------------------------------------------------
# values and gradients

@dataclass
class DualState:
    logits_q: np.ndarray
    logits_p: np.ndarray
    lambdas: np.ndarray

    def model(self, cfg: DualConfig) -> TabularModel:
        return TabularModel(cfg.q_x, cfg.p_z, _softmax(self.logits_q), _softmax(self.logits_p))


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_backward(probs: np.ndarray, grad: np.ndarray) -> np.ndarray:
    return probs * (grad - (grad * probs).sum(axis=-1, keepdims=True))


class _Problem:
    """Fixed marginals and kernel; evaluates everything a step needs."""

    def __init__(self, cfg: DualConfig):
        self.cfg = cfg
        self.q_x = np.array(cfg.q_x)
        self.p_z = np.array(cfg.p_z)
        self.h_qx = entropy(self.q_x)
        self.h_pz = entropy(self.p_z)
        self.gram = KernelSpec(sigma=cfg.kernel_sigma).gram(cfg.nz)

    def values(self, tq: np.ndarray, tp: np.ndarray, grad: bool = False):
        """Values (and probability-space gradients) of every tracked quantity.

        ``tq`` is [x, z] = q(z|x); ``tp`` is [z, x] = p(x|z). Leading batch
        axes are allowed. Gradients are partials w.r.t. ``tq`` and ``tp``.
        """
        qx = self.q_x[:, None]
        pz = self.p_z[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            log_tq = np.log(tq)
            log_tp_xz = np.log(np.swapaxes(tp, -1, -2))          # [x, z]
            Q = qx * tq
            P = np.swapaxes(tp, -1, -2) * pz
            q_z = Q.sum(axis=-2)
            p_x = P.sum(axis=-1)
            log_q_z = np.log(q_z)
            log_p_x = np.log(p_x)
            recon = _xsum(Q, log_tp_xz)                        # E_q log p(x|z)
            upper = _xsum(Q, log_tq - np.log(pz))               # E_q KL(q(z|x)||p(z))
            enc_p = _xsum(P, log_tq)                            # E_p log q(z|x)
            upper_p = _xsum(P, log_tp_xz - np.log(qx))
            i_q = _xsum(Q, log_tq - log_q_z[..., None, :])
            diff = self.p_z - q_z
            out = {
                "I_q": i_q,
                "I_q_upper": upper,
                "I_q_lower": recon + self.h_qx,
                "I_p_upper": upper_p,
                "I_p_lower": enc_p + self.h_pz,
                "elbo": recon - upper,
                "neg_elbo": upper - recon,
                "kl_joint_qp": upper - recon - self.h_qx,
                "kl_z_qp": _xsum(q_z, log_q_z - np.log(self.p_z)),
                "kl_z_pq": _xsum(self.p_z, np.log(self.p_z) - log_q_z),
                "mmd_z": np.maximum(np.einsum("...i,ij,...j->...", diff, self.gram, diff), 0.0),
            }
            if not grad:
                return out, None
            g = {}
            one = np.ones_like(tq)
            d_upper_q = qx * (log_tq - np.log(pz) + one)
            d_recon_q = qx * log_tp_xz
            d_recon_p = np.swapaxes(Q, -1, -2) / tp
            d_lower_p_q = np.swapaxes(tp, -1, -2) * pz / tq
            d_lower_p_p = pz.T * np.swapaxes(log_tq, -1, -2)
            d_upper_p_p = pz.T * (np.swapaxes(log_tp_xz, -1, -2) - np.log(qx).T + 1)
            zero_q, zero_p = np.zeros_like(tq), np.zeros_like(tp)
            g["I_q_upper"] = (d_upper_q, zero_p)
            g["I_q_lower"] = (d_recon_q, d_recon_p)
            g["I_p_upper"] = (zero_q, d_upper_p_p)
            g["I_p_lower"] = (d_lower_p_q, d_lower_p_p)
            g["neg_elbo"] = (d_upper_q - d_recon_q, -d_recon_p)
            g["kl_joint_qp"] = g["neg_elbo"]
            g["kl_z_qp"] = (qx * (log_q_z[..., None, :] - np.log(pz) + 1), zero_p)
            g["kl_z_pq"] = (-qx * (pz / q_z[..., None, :]), zero_p)
            dmmd = 2 * np.einsum("ij,...j->...i", self.gram, q_z - self.p_z)
            g["mmd_z"] = (qx * dmmd[..., None, :], zero_p)
        return out, g

    def objective_terms(self, alpha1: float, alpha2: float) -> list[tuple[float, str]]:
        terms = [(alpha1, "I_q_upper" if alpha1 >= 0 else "I_q_lower")]
        if alpha2 != 0:
            terms.append((alpha2, "I_p_upper" if alpha2 >= 0 else "I_p_lower"))
        return terms


def _xsum(weight, logs):
    # sum over the last two (or last one) axes of weight * logs, 0 log 0 = 0
    prod = np.where(weight > 0, weight * logs, 0.0)
    axes = (-2, -1) if np.ndim(weight) >= 2 and np.ndim(logs) >= 2 else (-1,)
    return prod.sum(axis=axes)


def evaluate(state: DualState, cfg: DualConfig) -> dict:
    """Objective, constraint values and bound values at ``state``."""
    prob = _Problem(cfg)
    vals, _ = prob.values(_softmax(state.logits_q), _softmax(state.logits_p))
    f = sum(a * vals[k] for a, k in prob.objective_terms(cfg.alpha1, cfg.alpha2))
    out = {k: float(v) for k, v in vals.items()}
    out["f"] = float(f)
    out["D"] = [float(vals[k]) for k in cfg.kinds]
    return out


def gradients(state: DualState, cfg: DualConfig) -> dict:
    """Logit gradients of f and of every constraint.

    Returns ``{"f": (gq, gp), "constraints": [(gq, gp), ...]}`` where ``gq``
    has the shape of ``logits_q`` and ``gp`` of ``logits_p``.
    """
    prob = _Problem(cfg)
    tq, tp = _softmax(state.logits_q), _softmax(state.logits_p)
    vals, g = prob.values(tq, tp, grad=True)
    for kind in cfg.kinds:
        if not np.isfinite(vals[kind]):
            raise GradientError(f"constraint {kind} is infinite at this state", kind)

    def back(pair):
        return _softmax_backward(tq, pair[0]), _softmax_backward(tp, pair[1])

    fq, fp = np.zeros_like(tq), np.zeros_like(tp)
    for a, k in prob.objective_terms(cfg.alpha1, cfg.alpha2):
        fq = fq + a * g[k][0]
        fp = fp + a * g[k][1]
    return {"f": back((fq, fp)), "constraints": [back(g[k]) for k in cfg.kinds]}


# ---------------------------------------------------------------------------
# runs

@dataclass(frozen=True)
class TraceRow:
    iter: int
    lambdas: tuple[float, ...]
    D: tuple[float, ...]
    f: float
    I_q: float
    I_q_upper: float
    I_q_lower: float
    elbo: float


@dataclass
class DualTrace:
    rows: list[TraceRow] = field(default_factory=list)
    model: TabularModel | None = None
    epsilons: tuple[float, ...] = ()
    kinds: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def final(self) -> TraceRow:
        return self.rows[-1]

    def header(self) -> list[str]:
        k = len(self.kinds)
        return (["iter"] + [f"lambda_{i + 1}" for i in range(k)] + [f"D_{i + 1}" for i in range(k)]
                + ["f", "I_q", "I_q_upper", "I_q_lower", "elbo"])

    def to_csv(self, path_or_buf=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        for r in self.rows:
            w.writerow([r.iter, *map(repr, r.lambdas), *map(repr, r.D),
                        repr(r.f), repr(r.I_q), repr(r.I_q_upper), repr(r.I_q_lower), repr(r.elbo)])
        text = buf.getvalue()
        if path_or_buf is not None:
            if hasattr(path_or_buf, "write"):
                path_or_buf.write(text)
            else:
                with open(path_or_buf, "w", encoding="utf-8", newline="") as fh:
                    fh.write(text)
        return text

    def best_feasible_f(self, tol: float = 0.0) -> list[float]:
        """Running best f over feasible iterates (inf until the first one)."""
        best, out = math.inf, []
        eps = np.array(self.epsilons)
        for r in self.rows:
            if np.all(np.array(r.D) <= eps + tol):
                best = min(best, r.f)
            out.append(best)
        return out


def init_state(cfg: DualConfig, lambdas=None) -> DualState:
    rng = np.random.default_rng(cfg.seed)
    lq = rng.normal(scale=cfg.init_scale, size=(cfg.nx, cfg.nz))
    lp = rng.normal(scale=cfg.init_scale, size=(cfg.nz, cfg.nx))
    lam = np.full(len(cfg.constraints), cfg.lambda_init) if lambdas is None else np.array(lambdas, float)
    return DualState(lq, lp, lam)


def _loop(cfg: DualConfig, eps: np.ndarray, iters: int, lambdas=None, ascend: bool = True,
          alpha1: float | None = None, alpha2: float | None = None) -> DualTrace:
    prob = _Problem(cfg)
    a1 = cfg.alpha1 if alpha1 is None else alpha1
    a2 = cfg.alpha2 if alpha2 is None else alpha2
    terms = prob.objective_terms(a1, a2)
    state = init_state(cfg, lambdas)
    lq, lp, lam = state.logits_q, state.logits_p, state.lambdas
    kinds = cfg.kinds
    scale = 1.0 / eps if cfg.scale_by_epsilon else np.ones_like(eps)
    trace = DualTrace(epsilons=tuple(float(e) for e in eps), kinds=kinds)
    bad_streak = 0

    tq, tp = _softmax(lq), _softmax(lp)
    vals, g = prob.values(tq, tp, grad=True)
    for t in range(iters + 1):
        D = np.array([vals[k] for k in kinds], dtype=float)
        f = sum(a * vals[k] for a, k in terms)
        trace.rows.append(TraceRow(t, tuple(float(x) for x in lam), tuple(float(x) for x in D),
                                   float(f), float(vals["I_q"]), float(vals["I_q_upper"]),
                                   float(vals["I_q_lower"]), float(vals["elbo"])))
        if not np.all(np.isfinite(D)):
            bad_streak += 1
            if bad_streak >= 10:
                trace.model = TabularModel(cfg.q_x, cfg.p_z, tq, tp)
                raise DivergenceError(f"constraints infinite for 10 iterations at step {t}", trace)
        else:
            bad_streak = 0
        if t == iters:
            break
        if not (np.all(np.isfinite(lq)) and np.all(np.isfinite(lp))):
            trace.model = None
            raise DivergenceError(f"logits overflowed at step {t}", trace)
        gq = np.zeros_like(tq)
        gp = np.zeros_like(tp)
        for a, k in terms:
            gq += a * g[k][0]
            gp += a * g[k][1]
        for lk, sk, k in zip(lam, scale, kinds):
            gq += lk * sk * g[k][0]
            gp += lk * sk * g[k][1]
        lq = lq - cfg.rho_theta * _softmax_backward(tq, gq)
        lp = lp - cfg.rho_theta * _softmax_backward(tp, gp)
        tq, tp = _softmax(lq), _softmax(lp)
        vals, g = prob.values(tq, tp, grad=True)
        if ascend:
            D_new = np.array([vals[k] for k in kinds], dtype=float)
            step = scale * (D_new - eps) if cfg.scale_by_epsilon else D_new - eps
            lam = np.maximum(0.0, lam + cfg.rho_lambda * step)
    trace.model = TabularModel(cfg.q_x, cfg.p_z, tq, tp)
    return trace


def _require_eps(cfg: DualConfig) -> np.ndarray:
    if any(e is None for e in cfg.epsilons):
        raise ConfigError("every constraint needs an epsilon (set it or use select_epsilon)",
                          "constraints")
    return np.array(cfg.epsilons, dtype=float)


def run_lagvae(cfg: DualConfig) -> DualTrace:
    """Gradient descent on logits, projected ascent on the multipliers."""
    return _loop(cfg, _require_eps(cfg), cfg.iters)


def run_infovae_baseline(cfg: DualConfig) -> DualTrace:
    """Same loop with the multipliers frozen at ``cfg.baseline_lambdas``."""
    if cfg.baseline_lambdas is None:
        raise ConfigError("baseline run needs baseline_lambdas", "baseline_lambdas")
    eps = np.array([e if e is not None else 0.0 for e in cfg.epsilons])
    return _loop(cfg, eps, cfg.iters, lambdas=cfg.baseline_lambdas, ascend=False)


def select_epsilon(cfg: DualConfig) -> tuple[np.ndarray, np.ndarray]:
    """Constraint-only fit, then slack. Returns ``(epsilon, epsilon_hat)``.

    The constraints are minimized with fixed weights (1, 100, 100, ...) by
    default and no information term; epsilon_hat is the divergence vector
    reached, and epsilon = epsilon_hat + gamma.
    """
    k = len(cfg.constraints)
    lam = cfg.select_lambdas or tuple([1.0] + [100.0] * (k - 1))
    iters = cfg.iters if cfg.select_iters is None else cfg.select_iters
    try:
        trace = _loop(cfg, np.zeros(k), iters, lambdas=lam, ascend=False, alpha1=0.0, alpha2=0.0)
    except DivergenceError as exc:
        raise SelectionError(f"constraint-only run diverged: {exc}") from exc
    eps_hat = np.array(trace.final.D)
    if not np.all(np.isfinite(eps_hat)):
        raise SelectionError("constraint-only run ended with infinite divergences")
    gamma = np.zeros(k) if cfg.gamma is None else np.array(cfg.gamma)
    return eps_hat + gamma, eps_hat


# ---------------------------------------------------------------------------
# primal oracle

def _project_rows(v: np.ndarray, floor: float) -> np.ndarray:
    # Euclidean projection of each row onto {w >= floor, sum w = 1}
    n = v.shape[-1]
    mass = 1.0 - n * floor
    u = np.sort(v - floor, axis=-1)[..., ::-1]
    css = np.cumsum(u, axis=-1) - mass
    idx = np.arange(1, n + 1)
    cond = u - css / idx > 0
    r = n - 1 - np.argmax(cond[..., ::-1], axis=-1)
    tau = np.take_along_axis(css, r[..., None], axis=-1) / (r[..., None] + 1)
    return np.maximum(v - floor - tau, 0.0) + floor


@dataclass(frozen=True)
class OracleResult:
    f: float
    model: TabularModel
    spread: float
    n_feasible: int
    values: tuple[float, ...]


def primal_oracle(cfg: DualConfig, restarts: int = 128, stages: int = 5, steps: int = 3000,
                  mu0: float = 100.0, feas_tol: float = 1e-4, floor: float = 1e-10,
                  jitter: float = 1e-3) -> OracleResult:
    """Constrained primal by multi-restart penalized projected gradient.

    Works in probability space with a quadratic penalty on constraint
    excess, multiplied by 10 after each stage; every stage after the first
    starts from a slightly perturbed point. Restarts run as one batch.
    Returns the best feasible objective and the spread of the final values
    over all feasible restarts.
    """
    eps = _require_eps(cfg)
    prob = _Problem(cfg)
    terms = prob.objective_terms(cfg.alpha1, cfg.alpha2)
    kinds = cfg.kinds
    rng = np.random.default_rng(cfg.seed)
    tq = rng.dirichlet(np.ones(cfg.nz), size=(restarts, cfg.nx))
    tp = rng.dirichlet(np.ones(cfg.nx), size=(restarts, cfg.nz))
    tq, tp = _project_rows(tq, floor), _project_rows(tp, floor)

    def penalized(tq, tp, mu, grad):
        vals, g = prob.values(tq, tp, grad=grad)
        obj = sum(a * vals[k] for a, k in terms)
        excess = [np.maximum(vals[k] - e, 0.0) for k, e in zip(kinds, eps)]
        obj = obj + mu * sum(x ** 2 for x in excess)
        if not grad:
            return obj, None, None
        gq = sum(a * g[k][0] for a, k in terms)
        gp = sum(a * g[k][1] for a, k in terms)
        for x, k in zip(excess, kinds):
            gq = gq + (2 * mu * x)[:, None, None] * g[k][0]
            gp = gp + (2 * mu * x)[:, None, None] * g[k][1]
        return obj, gq, gp

    step = np.full(restarts, 0.1)
    mu = mu0
    for stage in range(stages):
        if stage and jitter > 0:
            # small kicks move restarts off saddles (e.g. tied encoder rows)
            tq = _project_rows(tq + rng.normal(scale=jitter, size=tq.shape), floor)
            tp = _project_rows(tp + rng.normal(scale=jitter, size=tp.shape), floor)
            step = np.full(restarts, 0.1)
        obj, gq, gp = penalized(tq, tp, mu, True)
        for _ in range(steps):
            s = step[:, None, None]
            nq = _project_rows(tq - s * gq, floor)
            np_ = _project_rows(tp - s * gp, floor)
            nobj, _, _ = penalized(nq, np_, mu, False)
            ok = nobj <= obj
            tq = np.where(ok[:, None, None], nq, tq)
            tp = np.where(ok[:, None, None], np_, tp)
            step = np.where(ok, np.minimum(step * 1.5, 10.0), step * 0.5)
            step = np.maximum(step, 1e-12)
            obj, gq, gp = penalized(tq, tp, mu, True)
        mu *= 10.0

    vals, _ = prob.values(tq, tp)
    f = sum(a * vals[k] for a, k in terms)
    viol = np.max(np.stack([vals[k] - e for k, e in zip(kinds, eps)]), axis=0) if kinds else np.zeros(restarts)
    feasible = viol <= feas_tol
    if not np.any(feasible):
        raise InfeasibleError(f"no restart met the constraints (best excess {viol.min():.3g})",
                              float(viol.min()))
    fvals = np.where(feasible, f, np.inf)
    best = int(np.argmin(fvals))
    feas_vals = np.sort(f[feasible])
    spread = float(feas_vals[-1] - feas_vals[0])
    model = TabularModel(cfg.q_x, cfg.p_z, tq[best], tp[best])
    return OracleResult(float(f[best]), model, spread, int(feasible.sum()), tuple(float(v) for v in feas_vals))


# ---------------------------------------------------------------------------
# explicit objectives

@dataclass(frozen=True)
class Affine:
    """c0 + c1*lambda1 + c2*lambda2 with exact coefficients."""

    c0: Fraction
    c1: Fraction
    c2: Fraction

    def at(self, lam1, lam2) -> Fraction:
        return self.c0 + self.c1 * Fraction(lam1) + self.c2 * Fraction(lam2)

    def nonnegative_on_orthant(self) -> bool:
        return self.c0 >= 0 and self.c1 >= 0 and self.c2 >= 0

    def nonpositive_on_orthant(self) -> bool:
        return self.c0 <= 0 and self.c1 <= 0 and self.c2 <= 0


def explicit_lagvae_coefficients(alpha1, eps1, eps2) -> dict[str, Affine]:
    """Coefficients of the epsilon-scaled LagVAE objective with constraints
    (-ELBO, MMD), written over the tractable pieces::

        likelihood  E_q[log p(x|z)]
        rate        E_q(x)[KL(q(z|x)||p(z))]
        mmd         MMD(q(z)||p(z))
        constant    (the -lambda1 - lambda2 offset)

    With alpha1 >= 0 the information term is the upper bound (the rate
    itself); with alpha1 < 0 it is the lower bound, which contributes
    through the likelihood. Inputs are converted to exact fractions.
    """
    a = Fraction(alpha1)
    e1, e2 = Fraction(eps1), Fraction(eps2)
    if e1 <= 0 or e2 <= 0:
        raise ValueError("epsilons must be positive")
    zero = Fraction(0)
    if a >= 0:
        like = Affine(zero, -1 / e1, zero)
        rate = Affine(a, 1 / e1, zero)
    else:
        like = Affine(a, -1 / e1, zero)
        rate = Affine(zero, 1 / e1, zero)
    return {
        "likelihood": like,
        "rate": rate,
        "mmd": Affine(zero, zero, 1 / e2),
        "constant": Affine(zero, Fraction(-1), Fraction(-1)),
    }
