"""Sweeps over LagVAE epsilon grids and InfoVAE multiplier grids."""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dual import ConfigError, DualConfig, run_infovae_baseline, run_lagvae, select_epsilon

__all__ = ["WORKERS_ENV", "SweepPoint", "SweepResult", "load_sweep", "run_sweep", "pareto_violations",
           "resolve_workers"]

WORKERS_ENV = "LAGVAE_WORKERS"
DEFAULT_TOLERANCE = {"I_q": 0.02, "elbo": 0.02}


@dataclass(frozen=True)
class SweepPoint:
    run_id: str
    kind: str                      # "lagvae" or "infovae"
    params: tuple[float, ...]      # epsilon for lagvae, lambdas for infovae
    I_q: float
    elbo: float
    D: tuple[float, ...]
    trace_csv: str = ""


@dataclass
class SweepResult:
    points: list[SweepPoint]
    violations: list[tuple[str, str]]
    tolerance: dict
    epsilon_hat: tuple[float, ...]
    maximize: bool

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_csv(self) -> str:
        k = max((len(p.D) for p in self.points), default=0)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run_id", "kind", "hyperparameters", "I_q", "elbo"] + [f"D_{i + 1}" for i in range(k)])
        for p in self.points:
            w.writerow([p.run_id, p.kind, " ".join(map(repr, p.params)), repr(p.I_q), repr(p.elbo),
                        *map(repr, p.D)])
        return buf.getvalue()


def load_sweep(path) -> tuple[DualConfig, dict]:
    """Read a sweep file. ``base`` is a config mapping or a path relative
    to the sweep file."""
    path = Path(path)
    try:
        spec = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    for key in ("base", "lagvae_gamma", "infovae_lambdas"):
        if key not in spec:
            raise ConfigError(f"sweep is missing required key {key!r}", key)
    base = spec["base"]
    if isinstance(base, str):
        base_path = (path.parent / base)
        try:
            base = json.loads(base_path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"base config {base_path} not found", "base") from None
    return DualConfig.from_dict(base), spec


def _run_one(job):
    run_id, kind, cfg_dict = job
    cfg = DualConfig.from_dict(cfg_dict)
    trace = run_lagvae(cfg) if kind == "lagvae" else run_infovae_baseline(cfg)
    r = trace.final
    params = cfg.epsilons if kind == "lagvae" else cfg.baseline_lambdas
    return SweepPoint(run_id, kind, tuple(params), r.I_q, r.elbo, r.D, trace.to_csv())


def pareto_violations(points, tolerance=None, maximize=True) -> list[tuple[str, str]]:
    """Pairs (infovae id, lagvae id) where the InfoVAE point beats the LagVAE
    point by more than the tolerance in both mutual information (in the
    direction set by ``maximize``) and ELBO."""
    tol = dict(DEFAULT_TOLERANCE, **(tolerance or {}))
    sign = 1.0 if maximize else -1.0
    lag = [p for p in points if p.kind == "lagvae"]
    out = []
    for b in (p for p in points if p.kind == "infovae"):
        for a in lag:
            if sign * (b.I_q - a.I_q) > tol["I_q"] and b.elbo - a.elbo > tol["elbo"]:
                out.append((b.run_id, a.run_id))
    return out


def resolve_workers(workers=None) -> int:
    if workers is None:
        env = os.environ.get(WORKERS_ENV)
        if env is None:
            return 1
        try:
            workers = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}", WORKERS_ENV) from None
    if workers < 1:
        raise ConfigError("worker count must be >= 1", WORKERS_ENV)
    return workers


def run_sweep(base: DualConfig, spec: dict, workers=None) -> SweepResult:
    workers = resolve_workers(workers)
    tol = dict(DEFAULT_TOLERANCE, **spec.get("tolerance", {}))
    gammas = [tuple(float(x) for x in g) for g in spec["lagvae_gamma"]]
    lambdas = [tuple(float(x) for x in l) for l in spec["infovae_lambdas"]]
    k = len(base.constraints)
    for g in gammas + lambdas:
        if len(g) != k or any(x < 0 for x in g):
            raise ConfigError("grid entries need one non-negative value per constraint", "lagvae_gamma")
    # epsilon grid is anchored at the selected epsilon_hat, or at the base
    # epsilons when those are given explicitly
    if any(e is None for e in base.epsilons):
        _, anchor = select_epsilon(base)
    else:
        anchor = np.array(base.epsilons, dtype=float)
    jobs = []
    for i, g in enumerate(gammas):
        eps = anchor + np.array(g)
        jobs.append((f"lagvae_{i:02d}", "lagvae", base.with_epsilons(eps).to_dict()))
    for i, lam in enumerate(lambdas):
        cfg = base.replace(baseline_lambdas=list(lam))
        jobs.append((f"infovae_{i:02d}", "infovae", cfg.to_dict()))
    if workers == 1:
        points = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_run_one, jobs))
    maximize = base.alpha1 < 0
    return SweepResult(points, pareto_violations(points, tol, maximize), tol,
                       tuple(float(x) for x in anchor), maximize)
