"""Seeded instance generators, the benchmark runner, and report/figure output.

All generators are pure functions of their parameters and seed (NumPy PCG64
streams via ``default_rng``; draw order is part of the format and documented
per generator), so instances regenerate bit-identically.  The benchmark
runner executes a families x solvers x seeds grid, writes per-cell trace CSVs
plus a delimited report and aggregate, and renders one figure per family
alongside them.
"""

from __future__ import annotations

import csv
import hashlib
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import Instance, ValidationError
from .solvers import SOLVER_REGISTRY, SolverConfig


@dataclass(frozen=True)
class GeneratorSpec:
    """Declarative instance recipe used by the benchmark runner and CLI."""

    family: str
    n: int
    density: float = 1.0
    k_min: int = 5
    k_max: int = 15
    n_colors: int = 4
    k: int = 2
    data_weight: float = 1.0
    seed: int = 0

    def build(self) -> Instance:
        if self.family == "random":
            return gen_random(
                self.n, self.density, self.seed, k_range=(self.k_min, self.k_max)
            )
        if self.family == "coloring":
            return gen_coloring(self.n, self.density, self.n_colors, self.seed)
        if self.family == "signal":
            return gen_signal(self.n, self.seed, data_weight=self.data_weight)
        if self.family == "tree":
            return gen_random_tree(self.n, self.k, self.seed)
        raise ValidationError(f"unknown family {self.family!r}")


def density_to_edge_count(n: int, density: float) -> int:
    """``round(density * n(n-1)/2)``, at least 1."""
    if not (0.0 < density <= 1.0):
        raise ValidationError(f"density must lie in (0, 1], got {density}")
    return max(1, round(density * n * (n - 1) / 2))


def _edge_sample(n: int, m: int, rng) -> list[tuple[int, int]]:
    """m distinct pairs drawn uniformly from all i < j, lexicographically sorted."""
    total = n * (n - 1) // 2
    if m > total:
        raise ValidationError(f"cannot place {m} edges among {total} pairs")
    chosen = np.sort(rng.choice(total, size=m, replace=False))
    edges = []
    for flat in chosen:
        # unrank the lexicographic pair index
        flat = int(flat)
        i = 0
        remaining = flat
        row = n - 1
        while remaining >= row:
            remaining -= row
            i += 1
            row -= 1
        edges.append((i, i + 1 + remaining))
    return edges


def gen_random(
    n: int, density: float, seed: int, k_range: tuple[int, int] = (5, 15)
) -> Instance:
    """Uniform random graph with the given edge density, uniform domain sizes
    in ``k_range``, standard-normal table entries.

    Draw order: domain sizes, then the edge sample, then per-edge tables in
    edge order.
    """
    if n < 2:
        raise ValidationError(f"random family needs n >= 2, got {n}")
    rng = np.random.default_rng(seed)
    k_lo, k_hi = k_range
    sizes = rng.integers(k_lo, k_hi + 1, size=n)
    m = density_to_edge_count(n, density)
    edges = _edge_sample(n, m, rng)
    tables = [rng.standard_normal((sizes[i], sizes[j])) for i, j in edges]
    return Instance.create(n, sizes, edges, tables)


def gen_coloring(n: int, density: float, n_colors: int, seed: int) -> Instance:
    """Uniform random graph whose edge tables are equality indicators, so the
    objective counts monochromatic edges under an ``n_colors``-coloring."""
    if n < 2:
        raise ValidationError(f"coloring family needs n >= 2, got {n}")
    if n_colors < 2:
        raise ValidationError(f"need at least 2 colors, got {n_colors}")
    rng = np.random.default_rng(seed)
    m = density_to_edge_count(n, density)
    edges = _edge_sample(n, m, rng)
    defect = np.eye(n_colors)
    return Instance.create(n, [n_colors] * n, edges, [defect] * len(edges))


def gen_signal(n: int, seed: int, data_weight: float = 1.0) -> Instance:
    """Ring-shaped binary reconstruction objective.

    A binary signal and uniform noise on ``[-1, 1]`` are drawn per vertex
    (signal first, then noise).  The directed ring edge ``(i, i+1 mod n)``
    carries vertex ``i``'s data term ``|noisy(i) - x_i| * data_weight`` plus
    half a disagreement indicator; the wrap edge is stored transposed as
    ``(0, n-1)``.  ``data_weight=0.5`` halves every data term.
    """
    if n < 3:
        raise ValidationError(f"signal family needs n >= 3, got {n}")
    rng = np.random.default_rng(seed)
    signal = rng.integers(0, 2, size=n).astype(np.float64)
    noisy = signal + rng.uniform(-1.0, 1.0, size=n)
    disagree = 0.5 * (1.0 - np.eye(2))
    edges, tables = [], []
    for i in range(n):
        j = (i + 1) % n
        data = data_weight * np.abs(noisy[i] - np.array([0.0, 1.0]))
        table = data[:, None] + disagree
        if i < j:
            edges.append((i, j))
            tables.append(table)
        else:  # wrap edge, normalized orientation
            edges.append((j, i))
            tables.append(table.T)
    return Instance.create(n, [2] * n, edges, tables)


def gen_random_tree(n: int, k, seed: int) -> Instance:
    """Random tree by sequential parent attachment with normal tables.

    ``k`` is a fixed domain size or an inclusive ``(lo, hi)`` range sampled
    per vertex (sizes drawn first, then parents, then tables).
    """
    if n < 1:
        raise ValidationError(f"tree family needs n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    if isinstance(k, (tuple, list)):
        sizes = rng.integers(k[0], k[1] + 1, size=n)
    else:
        sizes = np.full(n, int(k))
    edges = []
    for v in range(1, n):
        parent = int(rng.integers(0, v))
        edges.append((parent, v))
    tables = [rng.standard_normal((sizes[i], sizes[j])) for i, j in edges]
    return Instance.create(n, sizes, edges, tables)


def cell_seed(suite_seed: int, family: str, index: int, solver: str = "") -> int:
    """Stable 63-bit seed for one benchmark cell, independent of scheduling."""
    key = f"{suite_seed}|{family}|{index}|{solver}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") >> 1


@dataclass
class BenchmarkReport:
    rows: list[dict] = field(default_factory=list)
    aggregates: list[dict] = field(default_factory=list)

    def mean_final_primal(self, family: str, solver: str) -> float:
        vals = [
            r["final_primal"]
            for r in self.rows
            if r["family"] == family and r["solver"] == solver and "error" not in r
        ]
        return float(np.mean(vals))


def _family_label(spec: dict) -> str:
    return spec.get("label") or spec["family"]


def run_benchmark(config: dict, out_dir) -> BenchmarkReport:
    """Execute a suite config and write report.csv, aggregate.csv, traces, and
    per-family figures under ``out_dir``.

    Config schema (JSON-friendly): ``{"suite_seed": int, "n_seeds": int,
    "families": [{"family": ..., "n": ..., ...}], "solvers": [{"solver": ...,
    "budget": ..., ...}], "plots": bool}``.  Per-cell failures are recorded
    as rows with an ``error`` field and the suite continues.
    """
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    suite_seed = int(config.get("suite_seed", 0))
    n_seeds = int(config.get("n_seeds", 1))
    families = config.get("families", [])
    solver_specs = config.get("solvers", [])
    if not families or not solver_specs:
        raise ValidationError("suite config needs both families and solvers")

    report = BenchmarkReport()
    series: dict[tuple[str, str], list] = {}
    for fam_spec in families:
        label = _family_label(fam_spec)
        for index in range(n_seeds):
            gspec = GeneratorSpec(
                family=fam_spec["family"],
                n=int(fam_spec["n"]),
                density=float(fam_spec.get("density", 1.0)),
                k_min=int(fam_spec.get("k_min", 5)),
                k_max=int(fam_spec.get("k_max", 15)),
                n_colors=int(fam_spec.get("n_colors", 4)),
                k=fam_spec.get("k", 2),
                data_weight=float(fam_spec.get("data_weight", 1.0)),
                seed=cell_seed(suite_seed, label, index),
            )
            instance = gspec.build()
            for sspec in solver_specs:
                solver = sspec["solver"]
                run_seed = cell_seed(suite_seed, label, index, solver)
                cfg = SolverConfig(
                    order=sspec.get("order", "identity"),
                    budget=int(sspec.get("budget", 10)),
                    seed=run_seed,
                    weights=sspec.get("weights", "uniform"),
                    eps=sspec.get("eps"),
                )
                name = sspec.get("label") or solver
                row = {
                    "family": label,
                    "n": gspec.n,
                    "density": gspec.density,
                    "solver": name,
                    "instance_seed": gspec.seed,
                    "run_seed": run_seed,
                }
                trace_path = out / "traces" / f"{label}_{index:03d}_{name}.csv"
                try:
                    tic = time.perf_counter()
                    _, trace = SOLVER_REGISTRY[solver](instance, cfg)
                    wall_ms = (time.perf_counter() - tic) * 1000.0
                    trace.write_csv(trace_path)
                    row.update(
                        final_primal=trace.final_primal,
                        final_dual=trace.final_dual,
                        wall_ms=wall_ms,
                        trace=str(trace_path.relative_to(out)),
                    )
                    series.setdefault((label, name), []).append(trace.rows)
                except Exception as exc:  # per-cell failures do not stop the suite
                    row["error"] = f"{type(exc).__name__}: {exc}"
                report.rows.append(row)

    _aggregate(report, series)
    _write_report(report, out)
    if config.get("plots", True):
        render_figures(report, series, out)
    return report


def _aggregate(report: BenchmarkReport, series) -> None:
    for (family, solver), runs in sorted(series.items()):
        depth = min(len(rows) for rows in runs)
        for t in range(depth):
            primal = [rows[t][2] for rows in runs]
            wall = [rows[t][1] for rows in runs]
            dual = [rows[t][3] for rows in runs if rows[t][3] is not None]
            report.aggregates.append(
                {
                    "family": family,
                    "solver": solver,
                    "t": runs[0][t][0],
                    "mean_wall_ms": float(np.mean(wall)),
                    "mean_primal_best": float(np.mean(primal)),
                    "mean_dual": float(np.mean(dual)) if dual else "",
                }
            )


def _write_report(report: BenchmarkReport, out: Path) -> None:
    fields = [
        "family",
        "n",
        "density",
        "solver",
        "instance_seed",
        "run_seed",
        "final_primal",
        "final_dual",
        "wall_ms",
        "trace",
        "error",
    ]
    with open(out / "report.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in report.rows:
            writer.writerow({k: row.get(k, "") for k in fields})
    agg_fields = ["family", "solver", "t", "mean_wall_ms", "mean_primal_best", "mean_dual"]
    with open(out / "aggregate.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=agg_fields)
        writer.writeheader()
        writer.writerows(report.aggregates)


def render_figures(report: BenchmarkReport, series, out: Path) -> list[Path]:
    """One PNG per family: mean best value vs mean wall time per solver,
    with the dual bound dashed where the solver defines one."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out)
    by_family: dict[str, dict[str, list]] = {}
    for (family, solver), runs in series.items():
        by_family.setdefault(family, {})[solver] = runs
    paths = []
    for family, solvers in sorted(by_family.items()):
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        for solver, runs in sorted(solvers.items()):
            depth = min(len(rows) for rows in runs)
            wall = [np.mean([rows[t][1] for rows in runs]) for t in range(depth)]
            primal = [np.mean([rows[t][2] for rows in runs]) for t in range(depth)]
            (line,) = ax.plot(wall, primal, marker="o", markersize=3, label=solver)
            duals = [
                (
                    np.mean([rows[t][1] for rows in runs]),
                    np.mean([rows[t][3] for rows in runs]),
                )
                for t in range(depth)
                if all(rows[t][3] is not None for rows in runs)
            ]
            if duals:
                ax.plot(
                    [w for w, _ in duals],
                    [d for _, d in duals],
                    linestyle="--",
                    color=line.get_color(),
                    alpha=0.7,
                )
        ax.set_xlabel("mean wall time [ms]")
        ax.set_ylabel("mean best value (dashed: dual bound)")
        ax.set_title(family)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out / f"{family}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths
