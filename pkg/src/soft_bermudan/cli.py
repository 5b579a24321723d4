"""Command-line entry point: ``soft-bermudan <subcommand> --config run.toml``.

Exit codes: 0 success, 1 solver failure or failed verification, 2 invalid configuration.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

THREADS_ENV = "SOFT_BERMUDAN_THREADS"
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _set_threads(n: int | None) -> None:
    if n is None:
        env = os.environ.get(THREADS_ENV)
        n = int(env) if env else (os.cpu_count() or 1)
    for var in _THREAD_VARS:
        os.environ[var] = str(n)


def _parse_lambdas(text: str | None):
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        from .errors import ConfigurationError
        raise ConfigurationError(f"--lambdas: cannot parse {text!r}") from None


def _resolve(args):
    """Load the config and apply command-line overrides."""
    from .config import load_config, parse_config, with_overrides
    base = load_config(args.config)
    lambdas = _parse_lambdas(getattr(args, "lambdas", None))
    if getattr(args, "lam", None) is not None:
        lambdas = [args.lam]
    raw = with_overrides(base.raw, **{
        "seed": args.seed, "solver.paths": args.paths, "lambda_list": lambdas,
        "output.dir": args.out,
    })
    return parse_config(raw)


def _out_dir(cfg) -> Path:
    p = Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(r)


def write_manifest(path: Path, cfg, command: str, outputs: dict, wall: float) -> dict:
    from . import __version__
    man = {
        "command": command,
        "version": __version__,
        "config": cfg.raw,
        "resolved_solver": cfg.solver.to_dict(),
        "solver_kind": cfg.solver_kind,
        "seed": cfg.seed,
        "content_hash": cfg.content_hash(),
        "wall_time": wall,
        "outputs": outputs,
    }
    path.write_text(json.dumps(man, indent=2, default=float), encoding="utf-8")
    return man


# ---------------------------------------------------------------------------
# subcommands


def cmd_price_td(cfg, args):
    from .td_solver import solve
    results = []
    for lam in cfg.lambda_list:
        sol = solve(cfg.model, cfg.reward, cfg.schedule, lam, cfg.solver)
        results.append(sol.manifest())
    return {"results": results}


def cmd_price_pi(cfg, args):
    from .policy_iter import improve
    return {"results": [improve(cfg.model, cfg.reward, cfg.schedule, lam, None, cfg.solver).manifest()
                        for lam in cfg.lambda_list]}


def cmd_price_game_pi(cfg, args):
    from .policy_iter import game_improve
    upper = cfg.upper_reward()
    return {"results": [game_improve(cfg.model, cfg.reward, upper, cfg.schedule, lam, None,
                                     cfg.solver).manifest() for lam in cfg.lambda_list]}


def _lattice(cfg):
    from .lattice import Lattice
    steps = cfg.lattice_steps or 500
    return Lattice.crr(cfg.model, cfg.schedule.maturity, steps)


def lattice_checks(cfg) -> list:
    """(name, passed, detail) for every lattice invariant on the configured problem."""
    from .lattice import (bounded_reward_bound, dual_bound_exact, entropy_error_bound,
                          martingale_deviation_report, policy_iteration_exact, solve_classical,
                          solve_entropy)
    lat = _lattice(cfg)
    cl = solve_classical(lat, cfg.reward, cfg.schedule)
    v0 = cl.value_at_origin
    checks = [("classical value", True, f"V_0 = {v0:.6f}")]
    lams = sorted(cfg.lambda_list, reverse=True)
    vals = []
    for lam in lams:
        ent = solve_entropy(lat, cfg.reward, cfg.schedule, lam)
        vals.append(ent.value_at_origin)
        gap = v0 - ent.value_at_origin
        bound = float(entropy_error_bound(cl, lam).reshape(-1)[0])
        checks.append((f"error bound lambda={lam:g}", 0 <= gap <= bound, f"0 <= {gap:.6g} <= {bound:.6g}"))
        sup = cfg.reward.sup_norm_bound()
        if sup < float("inf"):
            b2 = bounded_reward_bound(cfg.reward, cfg.schedule, lam)
            checks.append((f"bounded reward bound lambda={lam:g}", gap <= b2, f"{gap:.6g} <= {b2:.6g}"))
        pis = policy_iteration_exact(lat, cfg.reward, cfg.schedule, lam, cfg.schedule.N + 1)
        err = max(abs(p.value_at_origin - ent.value_at_origin) for p in pis[cfg.schedule.N:])
        checks.append((f"policy iteration exact lambda={lam:g}", err <= 1e-12, f"max error {err:.3g}"))
        try:
            rep = martingale_deviation_report(cl, ent)
            checks.append((f"martingale deviation lambda={lam:g}", rep.holds,
                           f"min slack {min(rep.min_slack):.3g}"))
        except Exception as exc:  # path enumeration may be too large for the tree
            checks.append((f"martingale deviation lambda={lam:g}", True, f"skipped: {exc}"))
    mono = all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    checks.append(("monotone in lambda", mono, ", ".join(f"{v:.6f}" for v in vals)))
    try:
        dual = dual_bound_exact(cl)
        checks.append(("dual with classical martingale", abs(dual - v0) <= 1e-10, f"{dual:.12f}"))
    except Exception as exc:
        checks.append(("dual with classical martingale", True, f"skipped: {exc}"))
    return checks


def cmd_lattice_verify(cfg, args):
    checks = lattice_checks(cfg)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return {"checks": [{"name": n, "passed": bool(ok), "detail": d} for n, ok, d in checks],
            "_status": 0 if all(ok for _, ok, _ in checks) else 1}


def cmd_stopping_sim(cfg, args, out: Path):
    from .stopping import convergence_diagnostic
    rows = convergence_diagnostic(cfg.model, cfg.reward, cfg.schedule, sorted(cfg.lambda_list, reverse=True),
                                  cfg.stopping_paths, cfg.seed, cfg.lattice_steps or 500)
    path = out / "stopping.csv"
    write_csv(path, ["lambda", "rule", "mismatch_rate", "mean_reward", "se"],
              [(r.lam, r.rule, r.mismatch_rate, r.mean_reward, r.se) for r in rows])
    return {"csv": str(path)}


def cmd_dual(cfg, args, out: Path):
    import numpy as np
    from .dual import upper_bound
    from .market import make_grid, simulate_paths
    from .stopping import mc_stopped_rewards, td_threshold_time
    from .td_solver import pathwise_se, solve
    fresh_seed = cfg.seed + 1_000_003
    grid = make_grid(cfg.schedule, 1)
    n_draw = cfg.eval_paths // 2 if cfg.solver.antithetic else cfg.eval_paths
    fresh = simulate_paths(cfg.model, grid, n_draw, fresh_seed, antithetic=cfg.solver.antithetic)
    rows = []
    for lam in sorted(cfg.lambda_list, reverse=True):
        sol = solve(cfg.model, cfg.reward, cfg.schedule, lam, cfg.solver)
        est = upper_bound(sol, fresh)
        idx = td_threshold_time(sol, fresh)
        low = mc_stopped_rewards(cfg.reward, cfg.schedule, fresh, idx)
        rows.append((lam, float(np.mean(low)), est.upper_bound, pathwise_se(low, fresh.antithetic),
                     est.standard_error))
    path = out / "dual.csv"
    write_csv(path, ["lambda", "lower", "upper", "se_lower", "se_upper"], rows)
    return {"csv": str(path)}


def cmd_sweep_lambda(cfg, args, out: Path):
    from .td_solver import solve
    lattice_ok = cfg.model.dimension <= 2 and (cfg.model.dimension == 1 or cfg.model.correlation == 0)
    cl = None
    if lattice_ok:
        from .lattice import entropy_error_bound, solve_classical, solve_entropy
        lat = _lattice(cfg)
        cl = solve_classical(lat, cfg.reward, cfg.schedule)
    rows = []
    for lam in sorted(cfg.lambda_list, reverse=True):
        if cfg.solver_kind == "lattice":
            price = solve_entropy(lat, cfg.reward, cfg.schedule, lam).value_at_origin
        else:
            price = solve(cfg.model, cfg.reward, cfg.schedule, lam, cfg.solver).price_at_origin
        bound = float(entropy_error_bound(cl, lam).reshape(-1)[0]) if cl is not None else float("nan")
        rows.append((lam, price, bound))
    path = out / "sweep.csv"
    write_csv(path, ["lambda", "price", "bound"], rows)
    return {"csv": str(path)}


def reproduce_rows(table: str, paths: int | None, seed: int, dims=(2,)) -> list:
    """Rows (table, dimension, x0, lambda, quantity, estimate, reference, abs_deviation)."""
    from . import tables
    from .config import parse_config
    from .policy_iter import improve
    from .td_solver import solve
    rows = []

    def run_cfg(settings, extra=None):
        raw = dict(settings, seed=seed)
        solver = {"fit_surface": False}
        if paths:
            solver["paths"] = paths
        solver.update(extra or {})
        raw["solver"] = solver
        return parse_config(raw)

    if table == "t1":
        cfg = run_cfg(tables.PUT_SETTINGS)
        for lam in tables.LAMBDAS:
            st = improve(cfg.model, cfg.reward, cfg.schedule, lam, 5, cfg.solver)
            for n, (est, ref) in enumerate(zip(st.price_trace, tables.PUT_POLICY_TRACE[lam])):
                rows.append(("t1", 1, 100.0, lam, f"v{n}", est, ref, abs(est - ref)))
            td = solve(cfg.model, cfg.reward, cfg.schedule, lam, cfg.solver).price_at_origin
            rows.append(("t1", 1, 100.0, lam, "td", td, tables.PUT_TD[lam], abs(td - tables.PUT_TD[lam])))
    elif table == "t2":
        for (lam, x0), ref in tables.MAX_CALL_POLICY_TRACE.items():
            cfg = run_cfg(tables.max_call_settings(2, x0))
            st = improve(cfg.model, cfg.reward, cfg.schedule, lam, 8, cfg.solver)
            for n, (est, r) in enumerate(zip(st.price_trace, ref)):
                rows.append(("t2", 2, x0, lam, f"v{n}", est, r, abs(est - r)))
    elif table == "t3":
        for d in dims:
            extra = {} if d <= 2 else {"estimator": "mlp", "optimizer": "adam", "learning_rate": 0.003,
                                      "epochs": 20, "batch": 512, "hidden": [64, 64]}
            for x0 in (90, 100, 110):
                td_ref, pi_ref, bench = tables.MAX_CALL_BY_DIMENSION[(d, x0)]
                cfg = run_cfg(tables.max_call_settings(d, x0), extra)
                for k, lam in enumerate(tables.LAMBDAS):
                    td = solve(cfg.model, cfg.reward, cfg.schedule, lam, cfg.solver).price_at_origin
                    pi = improve(cfg.model, cfg.reward, cfg.schedule, lam, 8, cfg.solver).price_trace[-1]
                    rows.append(("t3", d, x0, lam, "td", td, td_ref[k], abs(td - td_ref[k])))
                    rows.append(("t3", d, x0, lam, "pi", pi, pi_ref[k], abs(pi - pi_ref[k])))
                rows.append(("t3", d, x0, 0.0, "benchmark", float("nan"), bench, float("nan")))
    return rows


TABLE_HEADER = ["table", "dimension", "x0", "lambda", "quantity", "estimate", "reference", "abs_deviation"]


def cmd_reproduce_table(args):
    from .errors import ConfigurationError
    dims = tuple(int(v) for v in (args.dims or "2").split(","))
    if args.table == "t3":
        if 50 in dims and not args.stretch:
            raise ConfigurationError("d = 50 is beyond desk scale; pass --stretch to run it anyway")
        bad = [d for d in dims if d not in (2, 10, 50)]
        if bad:
            raise ConfigurationError(f"--dims: unsupported dimension(s) {bad}; choose from 2, 10, 50")
    rows = reproduce_rows(args.table, args.paths, args.seed or 0, dims)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{args.table}.csv"
    write_csv(path, TABLE_HEADER, rows)
    for r in rows:
        print(",".join(str(v) for v in r))
    return {"csv": str(path)}


COMMANDS = {
    "price-td": cmd_price_td,
    "price-pi": cmd_price_pi,
    "price-game-pi": cmd_price_game_pi,
    "lattice-verify": cmd_lattice_verify,
    "stopping-sim": cmd_stopping_sim,
    "dual": cmd_dual,
    "sweep-lambda": cmd_sweep_lambda,
}
_WITH_OUT = {"stopping-sim", "dual", "sweep-lambda"}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="soft-bermudan",
                                 description="Entropy-regularised Bermudan option pricing")
    ap.add_argument("--threads", type=int, default=None,
                    help=f"worker threads (default ${THREADS_ENV} or the CPU count)")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--lambdas")
        p.add_argument("--seed", type=int)
        p.add_argument("--paths", type=int)
        p.add_argument("--out")
    p = sub.add_parser("reproduce-table")
    p.add_argument("table", choices=("t1", "t2", "t3"))
    p.add_argument("--dims", help="comma-separated dimensions for t3 (default 2)")
    p.add_argument("--stretch", action="store_true", help="allow d = 50 in t3")
    p.add_argument("--seed", type=int)
    p.add_argument("--paths", type=int)
    p.add_argument("--out")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    _set_threads(args.threads)
    from .errors import ConfigurationError
    start = time.perf_counter()
    try:
        if args.command == "reproduce-table":
            cmd_reproduce_table(args)
            return 0
        cfg = _resolve(args)
        out = _out_dir(cfg)
        fn = COMMANDS[args.command]
        result = fn(cfg, args, out) if args.command in _WITH_OUT else fn(cfg, args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # solver failures carry their own context
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    status = result.pop("_status", 0)
    wall = time.perf_counter() - start
    if args.command in ("price-td", "price-pi", "price-game-pi"):
        path = out / f"{args.command}.json"
        path.write_text(json.dumps(result, indent=2, default=float), encoding="utf-8")
        result = {"json": str(path), **{k: v for k, v in result.items() if k != "results"}}
        for r in json.loads(path.read_text(encoding="utf-8"))["results"]:
            price = r.get("price", (r.get("price_trace") or [None])[-1])
            print(json.dumps({"lambda": r["lambda"], "price": price}))
    write_manifest(out / "manifest.json", cfg, args.command, result, wall)
    return status


if __name__ == "__main__":
    sys.exit(main())
