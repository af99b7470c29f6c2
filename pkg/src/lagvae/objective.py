"""Objective language: distributions, the 20-term expectation basis and
Lagrangian objectives over KL expressions, mutual informations and
opaque divergence atoms.

Text syntax (whitespace is ignored)::

    objective := "0" | term (("+" | "-") term)*
    term      := ["+" | "-"] [number ["*"]] atom
    atom      := "I_q" | "I_p"
               | KIND "(" dist "||" dist ")"      KIND in KL JS MMD W F
               | ("E_p" | "E_q") "[" "log" dist "]"
    dist      := ("p" | "q") "(" ("x,z" | "x|z" | "z|x" | "x" | "z") ")"
    number    := digits ["." digits] [("e"|"E") ["+"|"-"] digits] ["/" digits]

``KL`` between two distributions of the same family and signature is the
zero expression. Conditional KLs take the outer expectation under the
family of their first argument.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping

from .algebra import RationalMatrix, as_fraction

__all__ = [
    "Signature",
    "DistRef",
    "BASIS",
    "BASIS_LABELS",
    "basis_index",
    "KL_EXPRESSIONS",
    "KLLagrangianCoeffs",
    "DivergenceAtom",
    "LagrangianObjective",
    "ObjectiveSyntaxError",
    "UnknownDistributionError",
    "parse_objective",
    "format_objective",
    "encode_kl",
    "objective_from_mapping",
    "objective_to_mapping",
    "load_objective",
    "builtin_matrix",
    "MATRIX_KINDS",
    "expression_vector",
]


class Signature(str, Enum):
    JOINT = "x,z"
    X_GIVEN_Z = "x|z"
    Z_GIVEN_X = "z|x"
    MARG_X = "x"
    MARG_Z = "z"

    @property
    def is_conditional(self) -> bool:
        return self in (Signature.X_GIVEN_Z, Signature.Z_GIVEN_X)

    @property
    def is_marginal(self) -> bool:
        return self in (Signature.MARG_X, Signature.MARG_Z)


# atom order inside each block of the basis
ATOM_ORDER = (Signature.JOINT, Signature.X_GIVEN_Z, Signature.Z_GIVEN_X,
              Signature.MARG_X, Signature.MARG_Z)


@dataclass(frozen=True, order=True)
class DistRef:
    family: str
    signature: Signature

    def __post_init__(self):
        if self.family not in ("p", "q"):
            raise UnknownDistributionError(f"unknown family {self.family!r}")
        object.__setattr__(self, "signature", Signature(self.signature))

    def __str__(self) -> str:
        return f"{self.family}({self.signature.value})"

    @classmethod
    def parse(cls, text: str) -> "DistRef":
        m = re.fullmatch(r"\s*([pq])\s*\(\s*([^)]*?)\s*\)\s*", text)
        if not m:
            raise UnknownDistributionError(f"unknown distribution {text!r}")
        sig = m.group(2).replace(" ", "")
        try:
            return cls(m.group(1), Signature(sig))
        except ValueError:
            raise UnknownDistributionError(f"unknown distribution {text!r}") from None


def _d(family: str, sig: Signature) -> DistRef:
    return DistRef(family, sig)


# Basis: (outer expectation, log-atom). Blocks E_p[p atoms], E_p[q atoms],
# E_q[p atoms], E_q[q atoms]; atoms ordered by ATOM_ORDER. Frozen.
BASIS: tuple[tuple[str, DistRef], ...] = tuple(
    (outer, _d(fam, sig))
    for outer in ("p", "q")
    for fam in ("p", "q")
    for sig in ATOM_ORDER
)
BASIS_LABELS: tuple[str, ...] = tuple(f"E_{o}[log {d}]" for o, d in BASIS)
_BASIS_INDEX = {b: i for i, b in enumerate(BASIS)}


def basis_index(outer: str, dist: DistRef) -> int:
    return _BASIS_INDEX[(outer, dist)]


# The ten KL expressions, keyed by (first family, signature), in the
# canonical coefficient order (after I_q, I_p).
KL_EXPRESSIONS: tuple[tuple[str, Signature], ...] = (
    ("p", Signature.JOINT), ("q", Signature.JOINT),
    ("p", Signature.MARG_X), ("q", Signature.MARG_X),
    ("p", Signature.MARG_Z), ("q", Signature.MARG_Z),
    ("p", Signature.Z_GIVEN_X), ("q", Signature.Z_GIVEN_X),
    ("p", Signature.X_GIVEN_Z), ("q", Signature.X_GIVEN_Z),
)

COEFF_NAMES: tuple[str, ...] = ("I_q", "I_p") + tuple(
    f"KL({_d(f, s)}||{_d('q' if f == 'p' else 'p', s)})" for f, s in KL_EXPRESSIONS
)


class ObjectiveSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UnknownDistributionError(ValueError):
    pass


class SignatureMismatchError(ValueError):
    pass


def _frac_map(d: Mapping | None) -> dict:
    out = {}
    for k, v in (d or {}).items():
        v = as_fraction(v)
        if v != 0:
            out[k] = v
    return out


@dataclass(frozen=True)
class KLLagrangianCoeffs:
    """Coefficients of I_q, I_p and the ten KL expressions."""

    info_q: Fraction = Fraction(0)
    info_p: Fraction = Fraction(0)
    kl: Mapping[tuple[str, Signature], Fraction] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "info_q", as_fraction(self.info_q))
        object.__setattr__(self, "info_p", as_fraction(self.info_p))
        kl = {}
        for (fam, sig), v in _frac_map(self.kl).items():
            key = (fam, Signature(sig))
            if key not in KL_EXPRESSIONS:
                raise KeyError(f"unknown KL expression {key}")
            kl[key] = v
        object.__setattr__(self, "kl", kl)

    def vector(self) -> tuple[Fraction, ...]:
        """The 12 coefficients in canonical order."""
        return (self.info_q, self.info_p) + tuple(self.kl.get(k, Fraction(0)) for k in KL_EXPRESSIONS)

    @classmethod
    def from_vector(cls, n) -> "KLLagrangianCoeffs":
        n = [as_fraction(x) for x in n]
        if len(n) != 12:
            raise ValueError("need exactly 12 coefficients")
        return cls(n[0], n[1], dict(zip(KL_EXPRESSIONS, n[2:])))

    def __add__(self, other: "KLLagrangianCoeffs") -> "KLLagrangianCoeffs":
        return KLLagrangianCoeffs.from_vector([a + b for a, b in zip(self.vector(), other.vector())])

    def scale(self, c) -> "KLLagrangianCoeffs":
        c = as_fraction(c)
        return KLLagrangianCoeffs.from_vector([c * a for a in self.vector()])


ATOM_KINDS = ("JS", "MMD", "W", "F")


@dataclass(frozen=True)
class DivergenceAtom:
    kind: str
    left: DistRef
    right: DistRef
    weight: Fraction = Fraction(1)

    def __post_init__(self):
        if self.kind not in ATOM_KINDS:
            raise ValueError(f"unknown divergence kind {self.kind!r}")
        if self.left.signature != self.right.signature:
            raise SignatureMismatchError(
                f"{self.kind}({self.left}||{self.right}) compares different signatures")
        object.__setattr__(self, "weight", as_fraction(self.weight))

    @property
    def key(self) -> tuple[str, DistRef, DistRef]:
        return (self.kind, self.left, self.right)

    @property
    def is_trivial(self) -> bool:
        return self.left == self.right

    def __str__(self) -> str:
        return f"{self.kind}({self.left}||{self.right})"


@dataclass(frozen=True)
class LagrangianObjective:
    """A linear objective: KL Lagrangian part, raw basis terms and opaque atoms.

    ``terms`` holds coefficients of ``E_*[log d]`` basis expectations written
    directly in the text form; they are added to the encoding verbatim.
    """

    kl_part: KLLagrangianCoeffs = field(default_factory=KLLagrangianCoeffs)
    atoms: tuple[DivergenceAtom, ...] = ()
    terms: Mapping[int, Fraction] = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "atoms", _merge_atoms(self.atoms))
        terms = {}
        for k, v in _frac_map(self.terms).items():
            if not 0 <= int(k) < len(BASIS):
                raise IndexError(f"basis index {k} out of range")
            terms[int(k)] = v
        object.__setattr__(self, "terms", terms)

    def __add__(self, other: "LagrangianObjective") -> "LagrangianObjective":
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms.get(k, Fraction(0)) + v
        return LagrangianObjective(self.kl_part + other.kl_part, self.atoms + other.atoms, terms, self.label)

    def __sub__(self, other: "LagrangianObjective") -> "LagrangianObjective":
        return self + other.scale(-1)

    def scale(self, c) -> "LagrangianObjective":
        c = as_fraction(c)
        return LagrangianObjective(
            self.kl_part.scale(c),
            tuple(DivergenceAtom(a.kind, a.left, a.right, a.weight * c) for a in self.atoms),
            {k: v * c for k, v in self.terms.items()},
            self.label,
        )

    def atom_weights(self) -> dict:
        return {a.key: a.weight for a in self.atoms if not a.is_trivial}

    def with_label(self, label: str) -> "LagrangianObjective":
        return LagrangianObjective(self.kl_part, self.atoms, self.terms, label)

    def __str__(self) -> str:
        return format_objective(self)


def _merge_atoms(atoms: Iterable[DivergenceAtom]) -> tuple[DivergenceAtom, ...]:
    merged: dict = {}
    for a in atoms:
        merged[a.key] = merged.get(a.key, Fraction(0)) + a.weight
    return tuple(DivergenceAtom(k, l, r, w) for (k, l, r), w in merged.items() if w != 0)


# ---------------------------------------------------------------------------
# parsing

_NUMBER = re.compile(r"\d+(?:\.\d*)?(?:[eE][+-]?\d+)?(?:/\d+)?|\.\d+(?:[eE][+-]?\d+)?")
_TOKEN = re.compile(
    r"(?P<info>I_[pq])"
    r"|(?P<div>KL|JS|MMD|W|F)\((?P<a>\w*\([^)]*\))\|\|(?P<b>\w*\([^)]*\))\)"
    r"|(?P<exp>E_[pq])\[log(?P<d>\w*\([^)]*\))\]"
)


def _strip_ws(text: str) -> tuple[str, list[int]]:
    chars, offsets = [], []
    pos = 0
    for ch in text:
        if not ch.isspace():
            chars.append(ch)
            offsets.append(pos)
        pos += len(ch.encode("utf-8"))
    offsets.append(pos)
    return "".join(chars), offsets


def _parse_fraction(s: str) -> Fraction:
    if "/" in s:
        num, den = s.split("/")
        if int(den) == 0:
            raise ZeroDivisionError("zero denominator")
        return Fraction(num) / int(den)
    return Fraction(s)


def parse_objective(text: str, label: str = "") -> LagrangianObjective:
    """Parse the text form into a :class:`LagrangianObjective`.

    Coefficients are exact: ``0.5`` becomes ``Fraction(1, 2)``.
    """
    s, offsets = _strip_ws(text)
    if not s:
        raise ObjectiveSyntaxError("empty objective", 0)
    if s == "0":
        return LagrangianObjective(label=label)
    info = {"q": Fraction(0), "p": Fraction(0)}
    kl: dict = {}
    terms: dict = {}
    atoms: list[DivergenceAtom] = []
    i = 0
    first = True
    while i < len(s):
        sign = 1
        if s[i] in "+-":
            sign = -1 if s[i] == "-" else 1
            i += 1
        elif not first:
            raise ObjectiveSyntaxError("expected '+' or '-'", offsets[i])
        first = False
        coef = Fraction(1)
        m = _NUMBER.match(s, i)
        if m:
            try:
                coef = _parse_fraction(m.group())
            except (ValueError, ZeroDivisionError) as exc:
                raise ObjectiveSyntaxError(f"bad number {m.group()!r}", offsets[i]) from exc
            i = m.end()
            if i < len(s) and s[i] == "*":
                i += 1
        coef *= sign
        m = _TOKEN.match(s, i)
        if not m:
            raise ObjectiveSyntaxError("expected an atom", offsets[min(i, len(s))])
        try:
            if m.group("info"):
                info[m.group("info")[-1]] += coef
            elif m.group("div"):
                left, right = DistRef.parse(m.group("a")), DistRef.parse(m.group("b"))
                kind = m.group("div")
                if left.signature != right.signature:
                    raise SignatureMismatchError(
                        f"{kind}({left}||{right}) compares different signatures")
                if kind == "KL":
                    if left.family != right.family:
                        key = (left.family, left.signature)
                        kl[key] = kl.get(key, Fraction(0)) + coef
                else:
                    atoms.append(DivergenceAtom(kind, left, right, coef))
            else:
                outer = m.group("exp")[-1]
                idx = basis_index(outer, DistRef.parse(m.group("d")))
                terms[idx] = terms.get(idx, Fraction(0)) + coef
        except (UnknownDistributionError, SignatureMismatchError) as exc:
            raise type(exc)(f"{exc} at byte offset {offsets[i]}") from None
        i = m.end()
    return LagrangianObjective(KLLagrangianCoeffs(info["q"], info["p"], kl), tuple(atoms), terms, label)


def _fmt_coef(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def format_objective(obj: LagrangianObjective) -> str:
    """Canonical text form; parses back to an identical objective."""
    parts: list[tuple[Fraction, str]] = []
    vec = obj.kl_part.vector()
    for name, c in zip(COEFF_NAMES, vec):
        if c != 0:
            parts.append((c, name))
    for idx in sorted(obj.terms):
        parts.append((obj.terms[idx], BASIS_LABELS[idx]))
    for a in obj.atoms:
        parts.append((a.weight, str(a)))
    if not parts:
        return "0"
    out = []
    for k, (c, name) in enumerate(parts):
        sign = "-" if c < 0 else ("" if k == 0 else "+")
        mag = abs(c)
        body = name if mag == 1 else f"{_fmt_coef(mag)}*{name}"
        out.append(f"{sign} {body}" if k else f"{sign}{body}")
    return " ".join(out)


# ---------------------------------------------------------------------------
# encoding onto the basis

def expression_vector(name: str) -> tuple[Fraction, ...]:
    """Basis coordinates of I_q, I_p or one KL expression, by canonical name."""
    return _EXPRESSION_VECTORS[name]


def _kl_vector(first: str, sig: Signature) -> list[Fraction]:
    second = "q" if first == "p" else "p"
    v = [Fraction(0)] * len(BASIS)
    v[basis_index(first, _d(first, sig))] += 1
    v[basis_index(first, _d(second, sig))] -= 1
    return v


def _info_vector(side: str) -> list[Fraction]:
    # I = E[log r(x,z) - log r(x) - log r(z)] under the same joint
    v = [Fraction(0)] * len(BASIS)
    v[basis_index(side, _d(side, Signature.JOINT))] += 1
    v[basis_index(side, _d(side, Signature.MARG_X))] -= 1
    v[basis_index(side, _d(side, Signature.MARG_Z))] -= 1
    return v


_EXPRESSION_VECTORS = {"I_q": tuple(_info_vector("q")), "I_p": tuple(_info_vector("p"))}
for _name, (_f, _s) in zip(COEFF_NAMES[2:], KL_EXPRESSIONS):
    _EXPRESSION_VECTORS[_name] = tuple(_kl_vector(_f, _s))


def encode_kl(obj: LagrangianObjective) -> tuple[Fraction, ...]:
    """Basis coordinates of the KL part plus raw basis terms (atoms excluded)."""
    out = [Fraction(0)] * len(BASIS)
    for name, c in zip(COEFF_NAMES, obj.kl_part.vector()):
        if c:
            for i, e in enumerate(_EXPRESSION_VECTORS[name]):
                out[i] += c * e
    for idx, c in obj.terms.items():
        out[idx] += c
    return tuple(out)


# ---------------------------------------------------------------------------
# structured (JSON) form

def objective_to_mapping(obj: LagrangianObjective) -> dict[str, str]:
    out = {}
    for name, c in zip(COEFF_NAMES, obj.kl_part.vector()):
        if c:
            out[name] = _fmt_coef(c)
    for idx in sorted(obj.terms):
        out[BASIS_LABELS[idx]] = _fmt_coef(obj.terms[idx])
    for a in obj.atoms:
        out[str(a)] = _fmt_coef(a.weight)
    return out


def objective_from_mapping(mapping: Mapping[str, object], label: str = "") -> LagrangianObjective:
    """Build an objective from ``{expression: coefficient}``.

    Values may be ints, numeric strings (``"1/3"``, ``"0.25"``) or floats;
    floats go through their shortest decimal repr.
    """
    total = LagrangianObjective(label=label)
    for key, value in mapping.items():
        if isinstance(value, float):
            value = repr(value)
        coef = as_fraction(value) if not isinstance(value, str) else _parse_fraction(value.strip())
        total = total + parse_objective(key).scale(coef)
    return total.with_label(label)


def load_objective(source: str) -> LagrangianObjective:
    """Objective from a text expression, a ``.json`` mapping file or a text file."""
    import os

    if os.path.isfile(source):
        with open(source, encoding="utf-8") as fh:
            content = fh.read()
        if source.endswith(".json"):
            data = json.loads(content)
            label = ""
            if isinstance(data, dict) and "objective" in data:
                label = data.get("label", "")
                data = data["objective"]
            if isinstance(data, str):
                return parse_objective(data, label)
            return objective_from_mapping(data, label)
        return parse_objective(content, os.path.basename(source))
    return parse_objective(source)


# ---------------------------------------------------------------------------
# frozen matrices

def _M(cols: list[list[int]]) -> RationalMatrix:
    return RationalMatrix.from_columns(cols, rows=20)


def _col(**entries: int) -> list[int]:
    # keyword form: pp_xz=1 means E_p[log p(x,z)] with coefficient 1
    v = [0] * 20
    names = {"xz": 0, "xgz": 1, "zgx": 2, "x": 3, "z": 4}
    for key, val in entries.items():
        block, atom = key[:2], key[3:]
        b = {"pp": 0, "pq": 1, "qp": 2, "qq": 3}[block]
        v[5 * b + names[atom]] = val
    return v


# Columns are I_q, I_p, then the ten KL expressions in canonical order.
R_MATRIX = _M([
    _col(qq_xz=1, qq_x=-1, qq_z=-1),    # I_q
    _col(pp_xz=1, pp_x=-1, pp_z=-1),    # I_p
    _col(pp_xz=1, pq_xz=-1),            # KL(p(x,z)||q(x,z))
    _col(qq_xz=1, qp_xz=-1),            # KL(q(x,z)||p(x,z))
    _col(pp_x=1, pq_x=-1),              # KL(p(x)||q(x))
    _col(qq_x=1, qp_x=-1),              # KL(q(x)||p(x))
    _col(pp_z=1, pq_z=-1),              # KL(p(z)||q(z))
    _col(qq_z=1, qp_z=-1),              # KL(q(z)||p(z))
    _col(pp_zgx=1, pq_zgx=-1),          # E KL(p(z|x)||q(z|x))
    _col(qq_zgx=1, qp_zgx=-1),          # E KL(q(z|x)||p(z|x))
    _col(pp_xgz=1, pq_xgz=-1),          # E KL(p(x|z)||q(x|z))
    _col(qq_xgz=1, qp_xgz=-1),          # E KL(q(x|z)||p(x|z))
])

# Elementary null expressions: two chain rules per (expectation, family)
# block plus the constants E_p[log p(z)] and E_q[log q(x)].
P_MATRIX = _M([
    _col(pp_xz=1, pp_xgz=-1, pp_z=-1),
    _col(pp_xz=1, pp_zgx=-1, pp_x=-1),
    _col(pp_z=1),
    _col(pq_xz=1, pq_xgz=-1, pq_z=-1),
    _col(pq_xz=1, pq_zgx=-1, pq_x=-1),
    _col(qp_xz=1, qp_xgz=-1, qp_z=-1),
    _col(qp_xz=1, qp_zgx=-1, qp_x=-1),
    _col(qq_xz=1, qq_xgz=-1, qq_z=-1),
    _col(qq_xz=1, qq_zgx=-1, qq_x=-1),
    _col(qq_x=1),
])
P_CONSTANT_COLUMNS = (2, 9)

# Tractable term columns: (label, column). Divergence columns are stored
# with the sign that makes them the named divergence.
_T1 = [
    ("E_p[log p(x,z)]", _col(pp_xz=1)),
    ("E_p[log p(x|z)]", _col(pp_xgz=1)),
    ("E_p[log p(z)]", _col(pp_z=1)),
    ("E_p[log q(z|x)]", _col(pq_zgx=1)),
    ("E_q[log p(x,z)]", _col(qp_xz=1)),
    ("E_q[log p(x|z)]", _col(qp_xgz=1)),
    ("E_q[log p(z)]", _col(qp_z=1)),
    ("E_q[log q(z|x)]", _col(qq_zgx=1)),
]
_T2 = [
    ("KL(p(x)||q(x))", _col(pp_x=1, pq_x=-1)),
    ("KL(p(z)||q(z))", _col(pp_z=1, pq_z=-1)),
    ("KL(q(x)||p(x))", _col(qq_x=1, qp_x=-1)),
    ("KL(q(z)||p(z))", _col(qq_z=1, qp_z=-1)),
]
_T3 = [
    ("KL(p(x,z)||q(x,z))", _col(pp_xz=1, pq_xz=-1)),
    ("KL(q(x,z)||p(x,z))", _col(qq_xz=1, qp_xz=-1)),
]


def _block_order(terms):
    # E_p block first, then E_q, matching the block-diagonal layout
    return [t for t in terms if t[0].startswith(("E_p", "KL(p"))] + \
           [t for t in terms if t[0].startswith(("E_q", "KL(q"))]


T_COLUMNS = {
    "T_lb": _block_order(_T1),
    "T_ulf": _block_order(_T1 + _T2),
    "T_blf": _block_order(_T1 + _T2 + _T3),
}

# Known-family spanning sets. Each column is a member (mod null
# expressions) of the family's parametric span; the tests re-derive every
# column from the catalog dual forms.
S_COLUMNS = {
    "S_VMI": [_col(pp_z=1, pq_zgx=-1)],
    "S_betaVAE": [
        _col(qp_xgz=-1, qq_x=1),
        _col(qp_z=-1, qq_xgz=1, qq_x=-1, qq_z=1),
    ],
    "S_InfoGAN": [
        _col(pp_xgz=-1, pp_zgx=1, pp_x=1, pq_zgx=-1),
        _col(pp_x=1, pq_x=-1),
        _col(qp_x=1, qq_x=-1),
    ],
    "S_InfoVAE": [
        _col(pp_z=-1, pq_z=1),
        _col(qq_zgx=1, qq_z=-1),
        _col(qp_xgz=-1, qq_xgz=1),
        _col(qp_z=-1, qq_z=1),
    ],
    "S_InfoBiGAN": [
        _col(pp_xgz=1, pp_x=-1),
        _col(pp_zgx=1, pq_zgx=-1),
        _col(pp_x=1, pq_x=-1),
        _col(qp_x=1, qq_x=-1),
    ],
}

MATRIX_KINDS = ("R", "P", "T_lb", "T_ulf", "T_blf",
                "S_VMI", "S_betaVAE", "S_InfoGAN", "S_InfoVAE", "S_InfoBiGAN")


def builtin_matrix(kind: str) -> RationalMatrix:
    """One of the frozen 20-row matrices, against the canonical basis."""
    if kind == "R":
        return R_MATRIX
    if kind == "P":
        return P_MATRIX
    if kind in T_COLUMNS:
        return _M([c for _, c in T_COLUMNS[kind]])
    if kind in S_COLUMNS:
        return _M(S_COLUMNS[kind])
    raise KeyError(f"unknown matrix kind {kind!r}; expected one of {MATRIX_KINDS}")


def t_column_labels(kind: str) -> list[str]:
    return [name for name, _ in T_COLUMNS[kind]]
