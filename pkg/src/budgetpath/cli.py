"""Command-line entry point: ``budgetpath <command> ...``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .graph_core import BudgetLevels, read_graph
from .grid_field import ScenarioConfig, ScenarioError, extract_contour, write_contours, write_field

log = logging.getLogger("budgetpath")

EMIT_CHOICES = ["w2", "w1-top", "w1-full", "contours", "log", "paths"]


def _out_dir(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_config(args) -> ScenarioConfig:
    if getattr(args, "config", None):
        return ScenarioConfig.load(args.config)
    name = getattr(args, "name", None)
    if name:
        from .scenarios import catalog
        return catalog(name, N=args.N)[0]
    raise SystemExit("a scenario is required: --config FILE or a built-in name")


def write_log(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "dW1", "dW2", "safe_reachable", "unsafe_reachable", "seconds"])
        for r in records:
            w.writerow([r.k, repr(r.dW1), repr(r.dW2), r.safe_reachable, r.unsafe_reachable,
                        f"{r.seconds:.4f}"])


def write_path(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "b", "t"])
        for row in trace.points:
            w.writerow([repr(float(v)) for v in row])


def _emit_solution(sol, cfg, emit, out: Path, levels=None) -> list[Path]:
    from .scenarios import contour_levels_for
    written = []
    stem = cfg.name
    if "w2" in emit:
        p = out / f"{stem}_w2.txt"
        write_field(sol.W2, p)
        written.append(p)
    if "w1-top" in emit:
        p = out / f"{stem}_w1_top.txt"
        write_field(sol.W1[-1], p)
        written.append(p)
    if "w1-full" in emit:
        p = out / f"{stem}_w1.txt"
        write_field(sol.W1, p, sol.axis.B)
        written.append(p)
    if "log" in emit:
        p = out / f"{stem}_log.csv"
        write_log(sol.log, p)
        written.append(p)
    if "contours" in emit:
        lv = levels if levels else contour_levels_for(cfg, sol.W2)
        # contours of the combined top-level field: W2 on safe points, W1 at full budget elsewhere
        top = np.where(sol.grid.safe, sol.W2, sol.W1[-1])
        polys = []
        for v in lv:
            polys.extend(extract_contour(top, v))
        p = out / f"{stem}_contours.csv"
        write_contours(polys, p)
        written.append(p)
    return written


# --- subcommands -----------------------------------------------------------


def cmd_discrete(args) -> int:
    from .discrete_budget import solve_discrete
    graph, B = read_graph(args.graph)
    if args.budget is not None:
        B = args.budget
    table = solve_discrete(graph, B, args.mode)
    if args.output:
        table.write(args.output)
    else:
        for i in range(table.values.shape[0]):
            print(" ".join("inf" if not np.isfinite(v) else f"{v:g}" for v in table.values[i]))
    return 0


def cmd_ssp(args) -> int:
    from .stochastic_ssp import read_model, solve_budget_ssp, solve_reset_ssp, value_iteration
    model, B = read_model(args.model)
    if args.budget is not None:
        B = args.budget
    if args.mode == "plain":
        res = value_iteration(model, tol=args.tol)
        lines = [f"{i} {'inf' if not np.isfinite(v) else repr(float(v))} {int(p)}"
                 for i, (v, p) in enumerate(zip(res.values, res.policy))]
        text = "\n".join(lines) + "\n"
        if args.output:
            Path(args.output).write_text(text)
        else:
            sys.stdout.write(text)
        return 0
    levels = BudgetLevels(B)
    if args.mode == "budget":
        table = solve_budget_ssp(model, levels, tol=args.tol)
    else:
        res = solve_reset_ssp(model, levels, tol=args.tol)
        table = res.table
        log.info("reset alternation: %d iterations", res.iterations)
    if args.output:
        table.write(args.output)
    else:
        print(table.values)
    return 0


def cmd_hjb_solve(args) -> int:
    from .budget_reset_solver import solve_budget_reset
    cfg = _load_config(args)
    sol = solve_budget_reset(cfg, ntheta=args.ntheta, tol=args.tol, max_iters=args.max_iters)
    out = _out_dir(args)
    emit = args.emit or ["w2", "w1-top", "log"]
    for p in _emit_solution(sol, cfg, emit, out, args.levels):
        print(p)
    print(f"iterations={sol.iterations} converged={sol.converged}")
    return 0 if sol.converged else 2


def cmd_hjb_converge(args) -> int:
    from .scenarios import run_convergence_test
    out = _out_dir(args)
    reports = run_convergence_test(args.sizes, ntheta=args.ntheta or 64,
                                   tol=1e-8 if args.tol is None else args.tol,
                                   max_iters=args.max_iters or 100,
                                   out_dir=out if args.emit and "w1-full" in args.emit else None)
    with open(out / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "L1", "Linf_3h", "Linf_0.1", "mismatched", "iterations", "seconds"])
        for r in reports:
            w.writerow([r.N, r.L1, r.Linf_3h, r.Linf_01, r.mismatched, r.iterations, f"{r.seconds:.2f}"])
            print(r.row())
    return 0


def cmd_reach(args) -> int:
    from .reachability import solve_reachability
    cfg = _load_config(args)
    res = solve_reachability(cfg, max_iters=args.max_iters or 100)
    out = _out_dir(args)
    write_field(res.V, out / f"{cfg.name}_reach_V.txt")
    write_field(res.G, out / f"{cfg.name}_reach_G.txt")
    mask = np.isfinite(res.G) | (res.V <= cfg.B)
    np.savetxt(out / f"{cfg.name}_reach_mask.csv", mask.astype(int), fmt="%d", delimiter=",")
    with open(out / f"{cfg.name}_reach_counts.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "components", "safe_points"])
        w.writerows(res.counts)
    print(f"iterations={res.iterations}")
    return 0


def cmd_path(args) -> int:
    from .budget_reset_solver import extract_path, solve_budget_reset
    cfg = _load_config(args)
    sol = solve_budget_reset(cfg, ntheta=args.ntheta, tol=args.tol, max_iters=args.max_iters)
    trace = extract_path(sol, (args.x, args.y), b0=args.b0, raise_on_cap=False)
    out = _out_dir(args)
    p = out / f"{cfg.name}_path.csv"
    write_path(trace, p)
    print(f"{p} reached={trace.reached} cost={trace.cost:.6f}")
    return 0 if trace.reached else 2


def cmd_scenario(args) -> int:
    from .scenarios import catalog, run_scenario
    if args.config:
        cfgs = [ScenarioConfig.load(args.config)]
    else:
        try:
            cfgs = catalog(args.name, N=args.N, B=args.B)
        except ScenarioError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    out = _out_dir(args)
    emit = args.emit or EMIT_CHOICES[:2] + ["contours", "log", "paths"]
    for cfg in cfgs:
        bundle = run_scenario(cfg, ntheta=args.ntheta, tol=args.tol, max_iters=args.max_iters,
                              with_report=args.exact and cfg.name == "convergence")
        sol = bundle.solution
        if len(cfgs) > 1:
            cfg = cfg.replace(name=f"{cfg.name}_B{cfg.B:g}")
        for p in _emit_solution(sol, cfg, emit, out):
            print(p)
        if "paths" in emit:
            for k, tr in enumerate(bundle.paths):
                if tr is None:
                    continue
                p = out / f"{cfg.name}_path{k}.csv"
                write_path(tr, p)
                print(p)
        if bundle.report is not None:
            print(bundle.report.row())
        print(f"{cfg.name}: iterations={sol.iterations} converged={sol.converged}")
    return 0


# --- parser ----------------------------------------------------------------


def _solver_flags(p, emit=True):
    p.add_argument("--config", help="scenario file (JSON)")
    p.add_argument("--out-dir", default=".", help="directory for emitted files")
    p.add_argument("--ntheta", type=int, default=None, help="sampled control directions")
    p.add_argument("--tol", type=float, default=None, help="outer-loop tolerance")
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--N", type=int, default=None, help="grid size for built-in scenarios")
    if emit:
        p.add_argument("--emit", nargs="+", choices=EMIT_CHOICES, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="budgetpath",
                                 description="Budget-constrained path planning with budget resets.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("discrete", help="budget-expanded shortest paths on a graph file")
    p.add_argument("graph")
    p.add_argument("--budget", "-B", type=int, default=None, help="override the budget in the header")
    p.add_argument("--mode", choices=["noreset", "reset-dijkstra", "reset-iterative"], default="noreset")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_discrete)

    p = sub.add_parser("ssp", help="stochastic shortest path model file")
    p.add_argument("model")
    p.add_argument("--budget", "-B", type=int, default=None)
    p.add_argument("--mode", choices=["plain", "budget", "reset"], default="budget")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_ssp)

    hjb = sub.add_parser("hjb", help="grid solver")
    hsub = hjb.add_subparsers(dest="hjb_command", required=True)
    p = hsub.add_parser("solve", help="alternating solve on a scenario")
    p.add_argument("name", nargs="?", help="built-in scenario name")
    _solver_flags(p)
    p.add_argument("--levels", type=float, nargs="*", default=None, help="contour levels")
    p.set_defaults(func=cmd_hjb_solve)
    p = hsub.add_parser("converge", help="error table against the exact slab solution")
    p.add_argument("--sizes", type=int, nargs="+", default=[61, 121, 241])
    _solver_flags(p)
    p.set_defaults(func=cmd_hjb_converge)

    p = sub.add_parser("reach", help="reachable set without the budget axis")
    p.add_argument("name", nargs="?")
    _solver_flags(p, emit=False)
    p.set_defaults(func=cmd_reach)

    p = sub.add_parser("path", help="optimal path from a start point")
    p.add_argument("name", nargs="?")
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--y", type=float, required=True)
    p.add_argument("--b0", type=float, default=None, help="starting budget (default: full)")
    _solver_flags(p, emit=False)
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("scenario", help="run a built-in scenario end to end")
    p.add_argument("name", nargs="?", default="convergence")
    p.add_argument("--B", type=float, default=None, help="single budget instead of the catalog list")
    p.add_argument("--exact", action="store_true", help="attach the error report (slab scenario)")
    _solver_flags(p)
    p.set_defaults(func=cmd_scenario)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
