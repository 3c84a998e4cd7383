"""Command-line interface: generate, solve, check, bench.

Exit codes: 0 on success, 2 on validation errors (bad files, bad arguments,
invariant violations), 3 on solver failures.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bench, duals, lp, model, solvers


def _cmd_generate(args) -> int:
    spec = bench.GeneratorSpec(
        family=args.family,
        n=args.n,
        density=args.density,
        k_min=args.kmin,
        k_max=args.kmax,
        n_colors=args.colors,
        k=args.k,
        data_weight=args.data_weight,
        seed=args.seed,
    )
    instance = spec.build()
    model.save_instance(instance, args.out)
    print(f"wrote {args.out}: n={instance.n} edges={instance.num_edges}")
    return 0


def _cmd_solve(args) -> int:
    instance = model.load_instance(args.instance)
    config = solvers.SolverConfig(
        order=args.order,
        budget=args.budget,
        seed=args.seed,
        weights=args.weights,
        eps=args.eps,
    )
    if args.dump_lp:
        if args.solver != "lpdlp":
            raise model.ValidationError("--dump-lp applies to the lpdlp solver only")
        finite, _ = duals.big_m_substitute(instance)
        lp.write_mps(duals.build_dual_lp(finite), args.dump_lp)
        print(f"wrote LP dump to {args.dump_lp}")
    x, trace = solvers.SOLVER_REGISTRY[args.solver](instance, config)
    if args.trace:
        if str(args.trace).endswith(".json"):
            trace.write_json(args.trace)
        else:
            trace.write_csv(args.trace)
    dual = trace.final_dual
    print(
        f"{args.solver}: primal={trace.final_primal:.9g}"
        + (f" dual={dual:.9g}" if dual is not None else "")
        + f" sweeps={trace.rows[-1][0]}"
    )
    print("assignment:", " ".join(str(int(v)) for v in x))
    return 0


def _cmd_check(args) -> int:
    instance = model.load_instance(args.instance)
    forest, order = model.is_forest(instance)
    adj = instance.adjacency()
    degrees = adj.degree
    sizes = instance.domain_sizes
    print(f"n:            {instance.n}")
    print(f"edges:        {instance.num_edges}")
    print(f"domain sizes: min={min(sizes)} max={max(sizes)}")
    print(f"degrees:      min={min(degrees)} max={max(degrees)}")
    print(f"states:       {instance.states()}")
    print(f"forest:       {forest}")
    if forest and order is not None:
        print(f"elimination:  {len(order)} leaves")
    has_inf = any(not bool(np.isfinite(t).all()) for t in instance.tables)
    print(f"has +inf:     {has_inf}")
    return 0


def _cmd_bench(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    if args.no_plots:
        config["plots"] = False
    report = bench.run_benchmark(config, args.out)
    failures = [r for r in report.rows if "error" in r]
    print(f"{len(report.rows)} cells -> {args.out} ({len(failures)} failed)")
    for row in failures:
        print(f"  FAILED {row['family']}/{row['solver']}: {row['error']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sumbiv",
        description="Generate, inspect, solve, and benchmark sums of bivariate tables.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a seeded instance file")
    gen.add_argument("--family", required=True, choices=["random", "coloring", "signal", "tree"])
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--density", type=float, default=1.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--kmin", type=int, default=5, help="random family: smallest domain")
    gen.add_argument("--kmax", type=int, default=15, help="random family: largest domain")
    gen.add_argument("--colors", type=int, default=4, help="coloring family: palette size")
    gen.add_argument("--k", type=int, default=2, help="tree family: domain size")
    gen.add_argument(
        "--data-weight",
        type=float,
        default=1.0,
        help="signal family: scale on data terms (0.5 halves them)",
    )
    gen.set_defaults(func=_cmd_generate)

    solve = sub.add_parser("solve", help="run one solver on an instance file")
    solve.add_argument("--instance", required=True)
    solve.add_argument("--solver", required=True, choices=sorted(solvers.SOLVER_REGISTRY))
    solve.add_argument("--budget", type=int, default=10)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--eps", type=float, default=None)
    solve.add_argument("--weights", choices=["uniform", "random"], default="uniform")
    solve.add_argument("--order", choices=["identity", "random"], default="identity")
    solve.add_argument("--trace", default=None, help="trace file (.csv or .json)")
    solve.add_argument("--dump-lp", default=None, help="write the LP in MPS form (lpdlp only)")
    solve.set_defaults(func=_cmd_solve)

    check = sub.add_parser("check", help="validate an instance file and print stats")
    check.add_argument("--instance", required=True)
    check.set_defaults(func=_cmd_check)

    bench_p = sub.add_parser("bench", help="run a benchmark suite config")
    bench_p.add_argument("--config", required=True)
    bench_p.add_argument("--out", required=True)
    bench_p.add_argument("--no-plots", action="store_true")
    bench_p.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except model.ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except lp.SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
