"""Batch command line: ``gridmesh <command> SCENARIO [options]``.

Exit codes: 0 success, 2 invalid input, 3 infeasible model, 4 solver
failure, 5 iteration or time cap reached without convergence.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import (
    FIXED_ITERS,
    OBADMM,
    REFERENCE,
    emit_report,
    emit_trace,
    iteration_trend_exceptions,
    normalized_objective,
    run_summary,
    sweep_penalty,
    sweep_table,
)
from .lp_core import INFEASIBLE, SolverError, backend_from_env, export_mps, solve
from .microgrid_model import (
    ExchangeLedger,
    SubproblemContext,
    build_cem,
    build_subproblem,
    extract_all,
    microgrid_cost,
)
from .obadmm import AdmmConfig, public_view, run_obadmm, run_reference_admm
from .pea import PeaError, apply_pea, apply_to_solutions, pea_objective_report
from .scenario import ScenarioError, ScenarioValidationError, load_scenario, validate_scenario

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_SOLVER, EXIT_MAX_ITERS = 0, 2, 3, 4, 5

log = logging.getLogger("gridmesh")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _load(path: str):
    p = Path(path)
    try:
        return p, load_scenario(p)
    except ScenarioValidationError as exc:
        raise CliError(EXIT_INPUT, "invalid scenario:\n  " + "\n  ".join(exc.report.errors)) from exc
    except ScenarioError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc


def _out_dir(args) -> Path | None:
    if not getattr(args, "out", None):
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path | None, args, scen_path: Path, config: dict, started: str,
                    outputs: list[Path]) -> None:
    if out is None:
        return
    doc = {
        "command": args.command,
        "argv": sys.argv[1:],
        "scenario": {"path": str(scen_path), "sha256": _sha256(scen_path)},
        "config": config,
        "backend": args.backend or backend_from_env(),
        "version": __version__,
        "started": started,
        "finished": _now(),
        "outputs": sorted(p.name for p in outputs),
    }
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_ledger_csv(ledger: ExchangeLedger, path: Path) -> Path:
    """Non-zero flows as ``t, microgrid, counterpart, direction, value`` rows."""
    M, _, T = ledger.imp.shape
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "microgrid", "counterpart", "direction", "value"])
        for t in range(T):
            for m in range(M):
                if ledger.grid_imp[m, t] > 0:
                    w.writerow([t, m + 1, "grid", "import", repr(float(ledger.grid_imp[m, t]))])
                if ledger.grid_exp[m, t] > 0:
                    w.writerow([t, m + 1, "grid", "export", repr(float(ledger.grid_exp[m, t]))])
                for n in range(M):
                    if ledger.imp[m, n, t] > 0:
                        w.writerow([t, m + 1, n + 1, "import", repr(float(ledger.imp[m, n, t]))])
                    if ledger.exp[m, n, t] > 0:
                        w.writerow([t, m + 1, n + 1, "export", repr(float(ledger.exp[m, n, t]))])
    return path


# -- solvers ------------------------------------------------------------------

def solve_cem(s, backend=None, gap=None):
    """Solve the centralized model; returns ``(objective, solutions, ledger)``."""
    built = build_cem(s)
    res = solve(built.model, backend, gap=gap)
    if res.status == INFEASIBLE:
        raise CliError(EXIT_INFEASIBLE, "centralized model is infeasible")
    if not res.optimal:
        raise CliError(EXIT_SOLVER, f"centralized solve ended with status {res.status}")
    sols = extract_all(built, res)
    return res.objective, sols, ExchangeLedger.from_dispatch(sols)


def _per_mg(s, sols) -> dict[int, float]:
    return {d.mid: microgrid_cost(s.microgrid(d.mid), s, d) for d in sols}


def _admm_config(args) -> AdmmConfig:
    # an omitted --ks shrinks to fit a short --max-iters
    k_s = args.ks if args.ks is not None else min(AdmmConfig().k_s, args.max_iters)
    cfg = AdmmConfig(rho=args.rho, beta=args.beta, k_s=k_s, epsilon_th=args.eps_th,
                     max_iters=args.max_iters, pwl_cuts=args.pwl_cuts, backend=args.backend,
                     time_limit=args.time_limit)
    try:
        cfg.validate()
    except ValueError as exc:
        raise CliError(EXIT_INPUT, f"invalid configuration: {exc}") from exc
    return cfg


def _run_dem(s, args, cem_objective=None):
    cfg = _admm_config(args)
    runner = run_reference_admm if args.reference else run_obadmm
    try:
        res = runner(s, cfg, cem_objective=cem_objective, keep_arrays=False)
    except SolverError as exc:
        raise CliError(EXIT_SOLVER, str(exc)) from exc
    return cfg, res


def _pea(s, sols, ledger, strict):
    after = apply_pea(ledger)
    rep = pea_objective_report(s, sols, ledger, after, strict=strict)
    return after, rep


# -- commands -----------------------------------------------------------------

def cmd_solve_cem(args) -> int:
    started = _now()
    path, s = _load(args.scenario)
    out = _out_dir(args)
    obj, sols, ledger = solve_cem(s, args.backend, args.gap)
    extra = {"objective": obj}
    if args.pea:
        try:
            ledger, rep = _pea(s, sols, ledger, strict=True)
        except PeaError as exc:
            raise CliError(EXIT_SOLVER, str(exc)) from exc
        sols = apply_to_solutions(sols, ledger)
        extra["pea"] = rep.rows()
    per_mg = _per_mg(s, sols)
    doc = {"command": "solve-cem", "per_microgrid": {str(m): v for m, v in sorted(per_mg.items())},
           "total": sum(per_mg.values()), **extra}
    print(f"CEM objective {obj:.6f}")
    for m, v in sorted(per_mg.items()):
        print(f"  MG{m}: {v:.6f}")
    print(f"  total: {sum(per_mg.values()):.6f}")
    outputs = []
    if out:
        outputs = [emit_report(doc, out / "summary.json"), write_ledger_csv(ledger, out / "ledger.csv")]
    _write_manifest(out, args, path, {"gap": args.gap, "pea": args.pea}, started, outputs)
    return EXIT_OK


def _dem_outputs(s, args, res, cem_objective=None):
    sols, ledger = res.solutions, res.ledger
    extra = {}
    if args.pea:
        ledger, rep = _pea(s, sols, ledger, strict=False)
        sols = apply_to_solutions(sols, ledger)
        extra["pea"] = rep.rows()
        extra["pea_totals"] = {"before": rep.total_before, "after": rep.total_after}
    per_mg = _per_mg(s, sols)
    return sols, ledger, per_mg, extra


def cmd_solve_dem(args) -> int:
    started = _now()
    path, s = _load(args.scenario)
    out = _out_dir(args)
    cfg, res = _run_dem(s, args)
    _, ledger, per_mg, extra = _dem_outputs(s, args, res)
    doc = run_summary(res, per_mg, extra={"command": "solve-dem", **extra})
    print(f"{'reference ADMM' if args.reference else 'OB-ADMM'}: {res.stop_reason} at k={res.iterations}, "
          f"objective {res.objective:.6f}, eps {res.epsilon:.6g}")
    for m, v in sorted(per_mg.items()):
        print(f"  MG{m}: {v:.6f}")
    outputs = []
    if out:
        outputs = [emit_report(doc, out / "summary.json"), emit_trace(res.trace, out / "trace.csv"),
                   write_ledger_csv(ledger, out / "ledger.csv")]
    _write_manifest(out, args, path, asdict(cfg), started, outputs)
    return EXIT_OK if res.converged else EXIT_MAX_ITERS


def cmd_compare(args) -> int:
    started = _now()
    path, s = _load(args.scenario)
    out = _out_dir(args)
    cem_obj, cem_sols, cem_ledger = solve_cem(s, args.backend, args.gap)
    cfg, res = _run_dem(s, args, cem_objective=cem_obj)
    args.pea = True
    before = _per_mg(s, res.solutions)
    sols, ledger, per_mg, extra = _dem_outputs(s, args, res)
    total = sum(per_mg.values())
    norm = normalized_objective(total, cem_obj)
    print(f"CEM objective      {cem_obj:.6f}")
    print(f"DEM objective      {total:.6f}  ({res.stop_reason} at k={res.iterations})")
    print(f"normalized         {norm:.6f}")
    print(f"epsilon            {res.epsilon:.6g}")
    print(f"{'MG':>4} {'before PEA':>14} {'after PEA':>14}")
    for m in sorted(per_mg):
        print(f"{m:>4} {before[m]:>14.6f} {per_mg[m]:>14.6f}")
    print(f"{'all':>4} {sum(before.values()):>14.6f} {total:>14.6f}")
    doc = run_summary(res, per_mg, cem_objective=cem_obj,
                      extra={"command": "compare", "cem_objective": cem_obj,
                             "cem_per_microgrid": {str(m): v for m, v in sorted(_per_mg(s, cem_sols).items())},
                             "before_pea": {str(m): v for m, v in sorted(before.items())}, **extra})
    outputs = []
    if out:
        outputs = [emit_report(doc, out / "summary.json"), emit_trace(res.trace, out / "trace.csv"),
                   write_ledger_csv(ledger, out / "ledger.csv")]
    _write_manifest(out, args, path, asdict(cfg), started, outputs)
    return EXIT_OK if res.converged else EXIT_MAX_ITERS


def _parse_rhos(text: str) -> list[float]:
    try:
        rhos = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise CliError(EXIT_INPUT, f"bad --rhos list: {text!r}") from exc
    if not rhos or any(r <= 0 for r in rhos):
        raise CliError(EXIT_INPUT, "--rhos needs positive values")
    return rhos


def cmd_sweep(args) -> int:
    started = _now()
    path, s = _load(args.scenario)
    out = _out_dir(args)
    rhos = _parse_rhos(args.rhos)
    if args.mode == FIXED_ITERS and not args.iters:
        raise CliError(EXIT_INPUT, "--mode fixed_iters needs --iters")
    cem_obj, _, _ = solve_cem(s, args.backend, args.gap)
    cfg = _admm_config(args)
    rows = sweep_penalty(s, rhos, args.mode, cfg, cem_objective=cem_obj, epsilon_th=args.eps_th,
                         iterations=args.iters, workers=args.workers)
    table = sweep_table(rows)
    cols = ["rho", "iterations", "converged", "stop_reason", "objective", "normalized_objective",
            "final_epsilon", "trailing_eps_mean", "error"]
    print(" ".join(f"{c:>14}" for c in cols[:-1]))
    for r in table:
        print(" ".join(f"{'' if r[c] is None else r[c]!s:>14}" for c in cols[:-1]))
    exceptions = iteration_trend_exceptions(rows) if args.mode == REFERENCE else []
    if exceptions:
        print("iterations not non-increasing between rho pairs:", exceptions)
    outputs = []
    if out:
        p = out / "sweep.csv"
        with p.open("w", newline="") as fh:
            w = csv.DictWriter(fh, cols, lineterminator="\n")
            w.writeheader()
            for r in table:
                w.writerow({c: "" if r[c] is None else (repr(r[c]) if isinstance(r[c], float) else r[c])
                            for c in cols})
        outputs = [p, emit_report({"command": "sweep", "mode": args.mode, "cem_objective": cem_obj,
                                   "rows": table, "trend_exceptions": exceptions},
                                  out / "summary.json")]
    _write_manifest(out, args, path, {**asdict(cfg), "rhos": rhos, "mode": args.mode}, started, outputs)
    return EXIT_OK


def cmd_validate(args) -> int:
    path, s = _load(args.scenario)
    rep = validate_scenario(s)
    print(json.dumps({"errors": rep.errors, "warnings": rep.warnings}, indent=2))
    return EXIT_OK if rep.ok else EXIT_INPUT


def cmd_export_mps(args) -> int:
    path, s = _load(args.scenario)
    if args.model == "cem":
        model = build_cem(s).model
    elif args.model.startswith("sub:"):
        try:
            m = int(args.model[4:])
            s.microgrid(m)
        except (ValueError, KeyError) as exc:
            raise CliError(EXIT_INPUT, f"no microgrid {args.model[4:]!r} in scenario") from exc
        z = np.zeros((s.n, s.horizon))
        ctx = SubproblemContext(m, z, z, z, z, args.rho, args.pwl_cuts)
        model = build_subproblem(ctx, public_view(s, m)).model
    else:
        raise CliError(EXIT_INPUT, "--model must be 'cem' or 'sub:<id>'")
    text = export_mps(model)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--backend", choices=("highs", "mini"), default=None,
                   help="solver backend (default: $GRIDMESH_SOLVER or highs)")
    p.add_argument("--gap", type=float, default=None, help="relative MIP gap for centralized solves")


def _admm_flags(p: argparse.ArgumentParser) -> None:
    d = AdmmConfig()
    p.add_argument("--rho", type=float, default=d.rho)
    p.add_argument("--beta", type=float, default=d.beta)
    p.add_argument("--ks", type=int, default=None,
                   help=f"stopping window (default {d.k_s}, capped at --max-iters)")
    p.add_argument("--max-iters", type=int, default=d.max_iters)
    p.add_argument("--eps-th", type=float, default=d.epsilon_th)
    p.add_argument("--pwl-cuts", type=int, default=d.pwl_cuts)
    p.add_argument("--time-limit", type=float, default=None,
                   help="wall-clock seconds after which ADMM stops unconverged")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gridmesh", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-cem", help="solve the centralized model")
    _common(p)
    p.add_argument("--pea", action="store_true", help="apply proportional exchange allocation")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_solve_cem)

    p = sub.add_parser("solve-dem", help="run OB-ADMM (or reference ADMM)")
    _common(p)
    _admm_flags(p)
    p.add_argument("--reference", action="store_true", help="stop on eps <= --eps-th only")
    p.add_argument("--pea", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve_dem)

    p = sub.add_parser("compare", help="centralized vs decentralized, with PEA")
    _common(p)
    _admm_flags(p)
    p.add_argument("--reference", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="penalty sensitivity sweep")
    _common(p)
    _admm_flags(p)
    p.add_argument("--rhos", default="1e-4,1e-3,1e-2,0.1,1")
    p.add_argument("--mode", choices=(REFERENCE, FIXED_ITERS, OBADMM), default=REFERENCE)
    p.add_argument("--iters", type=int, default=None, help="run length for fixed_iters mode")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("export-mps", help="write a model in MPS format")
    p.add_argument("scenario")
    p.add_argument("--model", default="cem", help="'cem' or 'sub:<id>'")
    p.add_argument("--rho", type=float, default=AdmmConfig().rho)
    p.add_argument("--pwl-cuts", type=int, default=AdmmConfig().pwl_cuts)
    p.add_argument("--out", help="file to write (default: stdout)")
    p.set_defaults(func=cmd_export_mps)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
