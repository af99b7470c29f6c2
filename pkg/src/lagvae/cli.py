"""Command-line entry point.

Exit codes: 0 success, 1 verification or compilation failure, 2 input
error, 3 optimizer divergence. Inputs are parsed and validated before any
output file is created.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import __version__
from .algebra import RationalMatrix
from .dual import (ConfigError, DivergenceError, InfeasibleError, SelectionError, DualConfig,
                   load_config, primal_oracle, run_infovae_baseline, run_lagvae, select_epsilon)
from .objective import (MATRIX_KINDS, ObjectiveSyntaxError, SignatureMismatchError,
                        UnknownDistributionError, builtin_matrix, format_objective, load_objective,
                        objective_to_mapping)
from .tabular import (KernelSpec, ModelValidationError, KernelError, UnsupportedAtomError,
                      eval_objective, load_model, mi_bounds, save_model)
from .tractability import (NotCompilableError, TractabilityClass, classify, compile_objective,
                           verify_closure)

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_DIVERGED = 0, 1, 2, 3

_INPUT_ERRORS = (ConfigError, ObjectiveSyntaxError, UnknownDistributionError,
                 SignatureMismatchError, ModelValidationError, KernelError, UnsupportedAtomError,
                 FileNotFoundError, IsADirectoryError, json.JSONDecodeError, ValueError)


class InputError(Exception):
    pass


def _digest(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class _Outputs:
    """Collects files for one command and writes the manifest last."""

    def __init__(self, root: Path, command: str, inputs, seed=None):
        self.root = root
        self.command = command
        self.inputs = inputs
        self.seed = seed
        self.files: list[str] = []

    def write_text(self, name: str, text: str) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        self.files.append(name)
        return path

    def write_json(self, name: str, data) -> Path:
        return self.write_text(name, json.dumps(data, indent=2, sort_keys=True) + "\n")

    def finish(self, exit_code: int) -> int:
        manifest = {
            "command": self.command,
            "config_digest": _digest(self.inputs),
            "seed": self.seed,
            "tool_version": __version__,
            "outputs": sorted(self.files),
            "exit_code": exit_code,
        }
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return exit_code


def _out_dir(args, command: str) -> Path:
    return Path(args.out_dir) if args.out_dir else Path("lagvae-runs") / command


def _objective(source: str):
    try:
        return load_objective(source)
    except OSError as exc:
        raise InputError(f"cannot read objective: {exc}") from None


# ---------------------------------------------------------------------------
# commands

def cmd_verify_closure(args) -> int:
    overrides = None
    if args.inject_fault:
        # drop one column of a family matrix so the dimensions disagree
        s = builtin_matrix("S_InfoVAE")
        overrides = {"S_InfoVAE": s.select_columns(range(1, s.cols))}
    t0 = time.perf_counter()
    report = verify_closure(overrides)
    elapsed = time.perf_counter() - t0
    print(report.table())
    out = _Outputs(_out_dir(args, "verify-closure"), "verify-closure",
                   {"inject_fault": args.inject_fault, "emit_bases": args.emit_bases})
    data = report.to_dict()
    data["seconds"] = round(elapsed, 6)
    out.write_json("closure_report.json", data)
    out.write_text("closure_report.txt", report.table() + "\n")
    if args.emit_bases:
        for kind in MATRIX_KINDS:
            out.write_json(f"bases/{kind}.json", {"kind": kind,
                                                    "columns": _columns(builtin_matrix(kind))})
    return out.finish(EXIT_OK if report.passed else EXIT_FAIL)


def _columns(m: RationalMatrix) -> list[list[str]]:
    return [[str(x) for x in col] for col in m.columns()]


def cmd_classify(args) -> int:
    obj = _objective(args.objective)
    cls = classify(obj)
    print(cls.name.lower())
    out = _Outputs(_out_dir(args, "classify"), "classify", objective_to_mapping(obj))
    out.write_json("classify.json", {"objective": format_objective(obj), "class": cls.name.lower()})
    return out.finish(EXIT_OK)


def cmd_compile(args) -> int:
    obj = _objective(args.objective)
    target = TractabilityClass.parse(args.target)
    inputs = {"objective": objective_to_mapping(obj), "target": target.name}
    try:
        dec = compile_objective(obj, target)
    except NotCompilableError as exc:
        residual = [str(r) for r in exc.residual]
        print(f"not compilable: {exc}")
        if residual:
            print("residual: " + " ".join(residual))
        out = _Outputs(_out_dir(args, "compile"), "compile", inputs)
        out.write_json("compile.json", {"objective": format_objective(obj), "compilable": False,
                                        "target": target.name.lower(), "message": str(exc),
                                        "residual": residual})
        return out.finish(EXIT_FAIL)
    print(f"class: {dec.tractability.name.lower()}")
    for name, c in dec.tractable_coeffs.items():
        print(f"  {c} * {name}")
    print("null witness: " + " ".join(str(w) for w in dec.null_witness))
    out = _Outputs(_out_dir(args, "compile"), "compile", inputs)
    data = dec.to_dict()
    data.update(objective=format_objective(obj), compilable=True, target=target.name.lower(),
                tractable_form=format_objective(dec.to_objective()))
    out.write_json("compile.json", data)
    return out.finish(EXIT_OK)


def cmd_eval(args) -> int:
    obj = _objective(args.objective)
    try:
        model = load_model(args.model)
    except KeyError as exc:
        raise InputError(f"model file is missing key {exc}") from None
    kernel = KernelSpec(sigma=args.kernel_sigma)
    value = eval_objective(model, obj, kernel)
    b = mi_bounds(model)
    print(repr(value))
    out = _Outputs(_out_dir(args, "eval"), "eval",
                   {"objective": objective_to_mapping(obj), "model": model.to_dict(),
                    "kernel_sigma": args.kernel_sigma})
    out.write_json("eval.json", {"objective": format_objective(obj), "value": value,
                                 "I_q": b.i_q, "I_q_upper": b.i_q_upper, "I_q_lower": b.i_q_lower})
    return out.finish(EXIT_OK)


def _resolve_epsilons(cfg: DualConfig) -> tuple[DualConfig, list | None]:
    if all(e is not None for e in cfg.epsilons):
        return cfg, None
    if cfg.baseline_lambdas is not None:
        return cfg, None
    eps, eps_hat = select_epsilon(cfg)
    return cfg.with_epsilons(eps), [float(x) for x in eps_hat]


def cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    inputs = cfg.to_dict()
    baseline = cfg.baseline_lambdas is not None
    try:
        cfg, eps_hat = _resolve_epsilons(cfg)
        trace = run_infovae_baseline(cfg) if baseline else run_lagvae(cfg)
    except (DivergenceError, SelectionError) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    out = _Outputs(_out_dir(args, "optimize"), "optimize", inputs, cfg.seed)
    out.write_text("trace.csv", trace.to_csv())
    save_model(trace.model, str(out.root / "model.json"))
    out.files.append("model.json")
    r = trace.final
    summary = {"mode": "infovae" if baseline else "lagvae", "iters": cfg.iters,
               "epsilon": list(cfg.epsilons), "epsilon_hat": eps_hat,
               "lambdas": list(r.lambdas), "D": list(r.D), "f": r.f, "I_q": r.I_q,
               "I_q_upper": r.I_q_upper, "I_q_lower": r.I_q_lower, "elbo": r.elbo}
    out.write_json("summary.json", summary)
    print(json.dumps(summary, indent=2))
    return out.finish(EXIT_OK)


def cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    inputs = dict(cfg.to_dict(), restarts=args.restarts)
    if args.restarts < 1:
        raise InputError("--restarts must be >= 1")
    try:
        cfg, eps_hat = _resolve_epsilons(cfg)
    except SelectionError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    out = _Outputs(_out_dir(args, "oracle"), "oracle", inputs, cfg.seed)
    try:
        res = primal_oracle(cfg, restarts=args.restarts)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}")
        out.write_json("oracle.json", {"feasible": False, "message": str(exc),
                                       "best_violation": exc.best_violation})
        return out.finish(EXIT_FAIL)
    data = {"feasible": True, "f": res.f, "spread": res.spread, "n_feasible": res.n_feasible,
            "epsilon": list(cfg.epsilons), "epsilon_hat": eps_hat}
    out.write_json("oracle.json", data)
    save_model(res.model, str(out.root / "model.json"))
    out.files.append("model.json")
    print(json.dumps(data, indent=2))
    return out.finish(EXIT_OK)


def cmd_sweep(args) -> int:
    from .sweep import load_sweep, resolve_workers, run_sweep

    base, spec = load_sweep(args.sweep)
    if args.tol_iq is not None or args.tol_elbo is not None:
        tol = dict(spec.get("tolerance", {}))
        if args.tol_iq is not None:
            tol["I_q"] = args.tol_iq
        if args.tol_elbo is not None:
            tol["elbo"] = args.tol_elbo
        spec = dict(spec, tolerance=tol)
    workers = resolve_workers(args.workers)
    inputs = {"base": base.to_dict(), "spec": {k: v for k, v in spec.items() if k != "base"}}
    try:
        result = run_sweep(base, spec, workers)
    except (DivergenceError, SelectionError) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    out = _Outputs(_out_dir(args, "sweep"), "sweep", inputs, base.seed)
    out.write_text("sweep.csv", result.to_csv())
    if args.traces:
        for p in result.points:
            out.write_text(f"traces/{p.run_id}.csv", p.trace_csv)
    verdict = "PASS" if result.passed else "FAIL"
    out.write_json("pareto.json", {"verdict": verdict, "tolerance": result.tolerance,
                                   "maximize_I_q": result.maximize,
                                   "epsilon_anchor": list(result.epsilon_hat),
                                   "violations": [list(v) for v in result.violations]})
    print(result.to_csv(), end="")
    print(f"pareto: {verdict}")
    return out.finish(EXIT_OK if result.passed else EXIT_FAIL)


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lagvae", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("-o", "--out-dir", help="output directory (default lagvae-runs/<command>)")
        sp.set_defaults(func=fn)
        return sp

    sp = add("verify-closure", cmd_verify_closure, "check the closure dimension table")
    sp.add_argument("--emit-bases", action="store_true", help="also write every frozen matrix")
    sp.add_argument("--inject-fault", action="store_true",
                    help="corrupt a family matrix first; the check must then fail")

    sp = add("classify", cmd_classify, "smallest computability class of an objective")
    sp.add_argument("objective", help="objective text, or a .json/.txt file holding one")

    sp = add("compile", cmd_compile, "rewrite an objective in tractable terms")
    sp.add_argument("objective", help="objective text, or a .json/.txt file holding one")
    sp.add_argument("--target", default="blf",
                    help="lb, ulf or blf (likelihood-based, unary or binary likelihood-free)")

    sp = add("eval", cmd_eval, "evaluate an objective on a tabular model")
    sp.add_argument("objective")
    sp.add_argument("--model", required=True, help="model JSON (q_x, p_z, theta_q, theta_p)")
    sp.add_argument("--kernel-sigma", type=float, default=1.0)

    sp = add("optimize", cmd_optimize, "run the dual optimizer (or the fixed-multiplier baseline)")
    sp.add_argument("config")

    sp = add("oracle", cmd_oracle, "solve the constrained primal by penalized restarts")
    sp.add_argument("config")
    sp.add_argument("--restarts", type=int, default=128)

    sp = add("sweep", cmd_sweep, "epsilon and multiplier grids with a Pareto verdict")
    sp.add_argument("sweep")
    sp.add_argument("--workers", type=int, default=None,
                    help="parallel runs (default: $LAGVAE_WORKERS or 1)")
    sp.add_argument("--tol-iq", type=float, default=None)
    sp.add_argument("--tol-elbo", type=float, default=None)
    sp.add_argument("--traces", action="store_true", help="write one trace CSV per run")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConfigError as exc:
        key = f" (key: {exc.key})" if exc.key else ""
        print(f"config error: {exc}{key}", file=sys.stderr)
        return EXIT_INPUT
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
