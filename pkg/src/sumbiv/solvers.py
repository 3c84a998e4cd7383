"""Iterative minimizers with per-sweep traces.

All solvers share the same contract: ``solve_*(instance, config)`` returns
``(best_assignment, trace)``.  Traces are deterministic functions of the
instance and config (timing column aside).  Dual columns, where present, are
certified lower bounds on the minimum; primal columns are objective values of
actual assignments.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import duals
from .model import Adjacency, Instance, ValidationError, evaluate


@dataclass(frozen=True)
class SolverConfig:
    """Shared knobs: sweep order, sweep budget, seed, and method extras.

    ``order`` is ``"identity"`` or ``"random"`` (a seeded permutation used
    for both the sweep order and primal recovery).  ``weights`` selects the
    excess-splitting weights of ``solve_bcadtr`` (``"uniform"`` or seeded
    ``"random"`` simplex draws, fresh per vertex and sweep).  ``eps`` is the
    smoothing coefficient for ``solve_bcadetr``.
    """

    order: str = "identity"
    budget: int = 10
    seed: int = 0
    weights: str = "uniform"
    eps: float | None = None

    def __post_init__(self):
        if self.budget < 1:
            raise ValidationError(f"budget must be >= 1, got {self.budget}")
        if self.order not in ("identity", "random"):
            raise ValidationError(f"unknown order {self.order!r}")
        if self.weights not in ("uniform", "random"):
            raise ValidationError(f"unknown weights mode {self.weights!r}")

    def echo(self) -> dict:
        return {
            "order": self.order,
            "budget": self.budget,
            "seed": self.seed,
            "weights": self.weights,
            "eps": self.eps,
        }


@dataclass
class SolverTrace:
    """Per-sweep rows ``(t, wall_ms, primal_best, dual)``; dual is None where
    the solver defines no bound.  Row ``t=0`` records the initial candidate."""

    solver: str
    config: dict
    rows: list[tuple[int, float, float, float | None]] = field(default_factory=list)
    best_assignment: np.ndarray | None = None
    clamp_counts: list[int] = field(default_factory=list)

    def add(self, t: int, wall_ms: float, primal: float, dual: float | None) -> None:
        self.rows.append((t, wall_ms, primal, dual))

    @property
    def primal_column(self) -> list[float]:
        return [row[2] for row in self.rows]

    @property
    def dual_column(self) -> list[float]:
        return [row[3] for row in self.rows if row[3] is not None]

    @property
    def final_primal(self) -> float:
        return self.rows[-1][2]

    @property
    def final_dual(self) -> float | None:
        return self.rows[-1][3]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "wall_ms", "primal_best", "dual"])
            for t, wall, primal, dual in self.rows:
                writer.writerow(
                    [t, f"{wall:.3f}", repr(primal), "" if dual is None else repr(dual)]
                )

    def write_json(self, path) -> None:
        doc = {
            "solver": self.solver,
            "config": self.config,
            "rows": [
                {"t": t, "wall_ms": wall, "primal_best": primal, "dual": dual}
                for t, wall, primal, dual in self.rows
            ],
            "best_assignment": (
                None
                if self.best_assignment is None
                else [int(v) for v in self.best_assignment]
            ),
            "clamp_counts": self.clamp_counts,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")


class _Graph:
    """Precomputed per-vertex incidence used by the sweep loops."""

    def __init__(self, instance: Instance):
        self.instance = instance
        self.adj: Adjacency = instance.adjacency()
        # per vertex: list of (edge_index, other_vertex, vertex_is_row)
        self.at: list[list[tuple[int, int, bool]]] = [
            [(e, o, v < o) for e, o in self.adj.incident[v]]
            for v in range(instance.n)
        ]


def _require_finite(instance: Instance, solver: str) -> None:
    for table in instance.tables:
        if not np.isfinite(table).all():
            raise ValidationError(
                f"{solver} requires finite tables; apply big_m_substitute first"
            )


def _make_order(instance: Instance, config: SolverConfig, rng) -> list[int]:
    if config.order == "identity":
        return list(range(instance.n))
    return [int(v) for v in rng.permutation(instance.n)]


def _random_assignment(instance: Instance, rng) -> np.ndarray:
    return np.array(
        [rng.integers(0, k) for k in instance.domain_sizes], dtype=np.int64
    )


def _positions(order: list[int], n: int) -> np.ndarray:
    pos = np.empty(n, dtype=np.int64)
    for idx, v in enumerate(order):
        pos[v] = idx
    return pos


def _recover(graph: _Graph, m_f, m_b, order, pos) -> np.ndarray:
    """Shared dual-to-primal sweep: fixed neighbors contribute edge terms,
    unfixed ones their min-marginal at the active vertex."""
    instance = graph.instance
    x = np.zeros(instance.n, dtype=np.int64)
    for v in order:
        scores = np.zeros(instance.domain_sizes[v])
        for e, other, at_row in graph.at[v]:
            if pos[other] < pos[v]:
                table = instance.tables[e]
                scores = scores + (table[:, x[other]] if at_row else table[x[other], :])
            else:
                scores = scores + (m_f[e] if at_row else m_b[e])
        x[v] = int(np.argmin(scores))
    return x


def _lp_dual_value(graph: _Graph, rho_f, rho_b) -> float:
    """Lower-bound value of directed potentials: per-vertex min of their sum."""
    instance = graph.instance
    total = 0.0
    for v in range(instance.n):
        if not graph.at[v]:
            continue
        sums = np.zeros(instance.domain_sizes[v])
        for e, _, at_row in graph.at[v]:
            sums = sums + (rho_f[e] if at_row else rho_b[e])
        total += float(sums.min())
    return total


def _repaired_dual_value(graph: _Graph, rho_f, rho_b) -> float:
    """Like :func:`_lp_dual_value` but first restores edge feasibility by
    splitting any constraint violation equally between the two directions,
    so the reported number is always a certified lower bound."""
    instance = graph.instance
    shift_f, shift_b = {}, {}
    for e, ((i, j), table) in enumerate(zip(instance.edges, instance.tables)):
        violation = float(
            (rho_f[e][:, None] + rho_b[e][None, :] - table).max()
        )
        if violation > 0.0:
            shift_f[e] = violation / 2.0
            shift_b[e] = violation / 2.0
    if not shift_f:
        return _lp_dual_value(graph, rho_f, rho_b)
    fixed_f = [rho_f[e] - shift_f.get(e, 0.0) for e in range(instance.num_edges)]
    fixed_b = [rho_b[e] - shift_b.get(e, 0.0) for e in range(instance.num_edges)]
    return _lp_dual_value(graph, fixed_f, fixed_b)


def solve_cd(instance: Instance, config: SolverConfig) -> tuple[np.ndarray, SolverTrace]:
    """Coordinate descent on the objective itself.

    Sweeps the vertices in order, setting each coordinate to the argmin of
    its incident edge terms given all others (smallest index on ties).  Stops
    after the budget or after a full sweep without any change.  Works on
    extended-real tables.
    """
    graph = _Graph(instance)
    rng = np.random.default_rng(config.seed)
    order = _make_order(instance, config, rng)
    x = _random_assignment(instance, rng)
    trace = SolverTrace(solver="cd", config=config.echo())
    start = time.perf_counter()
    trace.add(0, 0.0, evaluate(instance, x), None)
    for t in range(1, config.budget + 1):
        changed = False
        for v in order:
            scores = np.zeros(instance.domain_sizes[v])
            for e, other, at_row in graph.at[v]:
                table = instance.tables[e]
                scores = scores + (table[:, x[other]] if at_row else table[x[other], :])
            best = int(np.argmin(scores))
            if best != x[v]:
                x[v] = best
                changed = True
        wall = (time.perf_counter() - start) * 1000.0
        trace.add(t, wall, evaluate(instance, x), None)
        if not changed:
            break
    trace.best_assignment = x.copy()
    return x, trace


def solve_lpdlp(
    instance: Instance, config: SolverConfig, backend: str = "auto"
) -> tuple[np.ndarray, SolverTrace]:
    """One exact solve of the lower-bound LP followed by primal recovery.

    ``+inf`` entries are made finite by big-M substitution before the solve,
    the optimal potentials are canonicalized (degenerate LP optima can
    otherwise mislead the recovery sweep), and the reported primal evaluates
    the recovered assignment on the original instance.  Exact on forests.
    """
    finite, _ = duals.big_m_substitute(instance)
    rng = np.random.default_rng(config.seed)
    order = _make_order(instance, config, rng)
    start = time.perf_counter()
    value, potentials = duals.dual_lp_solve(finite, backend=backend)
    potentials = duals.canonicalize_potentials(finite, potentials)
    marginals = duals.min_marginals(finite, potentials)
    x = duals.recover_primal(finite, marginals, order)
    wall = (time.perf_counter() - start) * 1000.0
    trace = SolverTrace(solver="lpdlp", config=config.echo())
    trace.add(1, wall, evaluate(instance, x), value)
    trace.best_assignment = x.copy()
    return x, trace


def solve_bcadtr(
    instance: Instance, config: SolverConfig
) -> tuple[np.ndarray, SolverTrace]:
    """Block coordinate ascent on the lower-bound LP, one vertex per block.

    Each block recomputes the incoming min-marginals against the current
    opposite potentials and applies the closed-form star maximizer with the
    configured simplex weights.  The dual column is the potential value after
    each sweep (non-decreasing once every vertex has been visited); primal
    candidates come from the shared recovery sweep, keeping the best.
    """
    _require_finite(instance, "solve_bcadtr")
    graph = _Graph(instance)
    rng = np.random.default_rng(config.seed)
    order = _make_order(instance, config, rng)
    pos = _positions(order, instance.n)
    x_best = _random_assignment(instance, rng)
    f_best = evaluate(instance, x_best)

    num_edges = instance.num_edges
    rho_f = [np.zeros(instance.domain_sizes[i]) for i, _ in instance.edges]
    rho_b = [np.zeros(instance.domain_sizes[j]) for _, j in instance.edges]
    m_f = [np.zeros_like(v) for v in rho_f]
    m_b = [np.zeros_like(v) for v in rho_b]

    trace = SolverTrace(solver="bcadtr", config=config.echo())
    start = time.perf_counter()
    trace.add(0, 0.0, f_best, None)

    for t in range(1, config.budget + 1):
        for v in order:
            incident = graph.at[v]
            if not incident:
                continue
            deg = len(incident)
            m_local = []
            for e, other, at_row in incident:
                table = instance.tables[e]
                if at_row:
                    vec = (table - rho_b[e][None, :]).min(axis=1)
                    m_f[e] = vec
                else:
                    vec = (table - rho_f[e][:, None]).min(axis=0)
                    m_b[e] = vec
                m_local.append(vec)
            m_sum = np.sum(m_local, axis=0)
            excess = m_sum - m_sum.min()
            if config.weights == "uniform":
                w = np.full(deg, 1.0 / deg)
            else:
                draws = rng.exponential(size=deg)
                w = draws / draws.sum()
            for (e, other, at_row), vec, w_j in zip(incident, m_local, w):
                if at_row:
                    rho_f[e] = vec - w_j * excess
                else:
                    rho_b[e] = vec - w_j * excess
        y = _recover(graph, m_f, m_b, order, pos)
        f_y = evaluate(instance, y)
        if f_y < f_best:
            x_best, f_best = y, f_y
        dual = _lp_dual_value(graph, rho_f, rho_b)
        wall = (time.perf_counter() - start) * 1000.0
        trace.add(t, wall, f_best, dual)
    trace.best_assignment = x_best.copy()
    return x_best, trace


def solve_bcadetr(
    instance: Instance, config: SolverConfig
) -> tuple[np.ndarray, SolverTrace]:
    """Block coordinate ascent on the smoothed dual objective.

    Per vertex, the exact smoothed-star maximizer is applied to the tables
    reparameterized by the opposite potentials; the dual column is the
    smoothed objective after each sweep and is non-decreasing from the start
    (every block attains its unique optimum).  Exponent clamp counts are
    surfaced per sweep in the trace.
    """
    _require_finite(instance, "solve_bcadetr")
    if config.eps is None:
        raise ValidationError("solve_bcadetr requires config.eps")
    eps = float(config.eps)
    if not (1e-3 <= eps <= 1e3):
        raise ValidationError(f"eps must lie in [1e-3, 1e3], got {eps}")
    graph = _Graph(instance)
    rng = np.random.default_rng(config.seed)
    order = _make_order(instance, config, rng)
    pos = _positions(order, instance.n)
    x_best = _random_assignment(instance, rng)
    f_best = evaluate(instance, x_best)

    rho_f = [np.zeros(instance.domain_sizes[i]) for i, _ in instance.edges]
    rho_b = [np.zeros(instance.domain_sizes[j]) for _, j in instance.edges]
    m_f = [np.zeros_like(v) for v in rho_f]
    m_b = [np.zeros_like(v) for v in rho_b]
    rho_vertex = np.zeros(instance.n)

    def smoothed_objective() -> tuple[float, int]:
        penalty = 0.0
        clamps = 0
        for e, table in enumerate(instance.tables):
            exponent = (rho_f[e][:, None] + rho_b[e][None, :] - table) / eps - 1.0
            clamps += int((np.abs(exponent) > duals.EXP_CLAMP).sum())
            penalty += float(
                np.exp(np.clip(exponent, -duals.EXP_CLAMP, duals.EXP_CLAMP)).sum()
            )
        return float(rho_vertex.sum()) - eps * penalty, clamps

    trace = SolverTrace(solver="bcadetr", config=config.echo())
    start = time.perf_counter()
    trace.add(0, 0.0, f_best, None)
    trace.clamp_counts.append(0)

    for t in range(1, config.budget + 1):
        for v in order:
            incident = graph.at[v]
            if not incident:
                continue
            tables_from_v = []
            for e, other, at_row in incident:
                table = instance.tables[e]
                if at_row:
                    tables_from_v.append(table - rho_b[e][None, :])
                else:
                    tables_from_v.append(table.T - rho_f[e][None, :])
            rho_scalar, pots, _ = duals.entropy_star_block(eps, tables_from_v)
            rho_vertex[v] = rho_scalar
            for (e, other, at_row), vec in zip(incident, pots):
                if at_row:
                    rho_f[e] = vec
                else:
                    rho_b[e] = vec
        for e, table in enumerate(instance.tables):
            m_f[e] = (table - rho_b[e][None, :]).min(axis=1)
            m_b[e] = (table - rho_f[e][:, None]).min(axis=0)
        y = _recover(graph, m_f, m_b, order, pos)
        f_y = evaluate(instance, y)
        if f_y < f_best:
            x_best, f_best = y, f_y
        dual, clamps = smoothed_objective()
        wall = (time.perf_counter() - start) * 1000.0
        trace.add(t, wall, f_best, dual)
        trace.clamp_counts.append(clamps)
    trace.best_assignment = x_best.copy()
    return x_best, trace


def _trws_degrees(graph: _Graph, pos: np.ndarray) -> list[float]:
    """Per-vertex message weight 1 / max(#increasing, #decreasing edges)."""
    gammas = []
    for v in range(graph.instance.n):
        inc = sum(1 for _, o, _ in graph.at[v] if pos[v] < pos[o])
        dec = len(graph.at[v]) - inc
        p = max(inc, dec)
        gammas.append(1.0 / p if p > 0 else 0.0)
    return gammas


def solve_trws(
    instance: Instance, config: SolverConfig
) -> tuple[np.ndarray, SolverTrace]:
    """Sequential tree-reweighted sweeps with explicit potentials.

    Forward-only edge updates per sweep with the order reversed between
    sweeps; message weights are fixed at initialization from the starting
    order.  The dual column reports the potential value after a feasibility
    repair (violations split between directions), so it is always a valid
    lower bound even mid-stream.
    """
    _require_finite(instance, "solve_trws")
    graph = _Graph(instance)
    rng = np.random.default_rng(config.seed)
    order = _make_order(instance, config, rng)
    pos = _positions(order, instance.n)
    gammas = _trws_degrees(graph, pos)
    x_best = _random_assignment(instance, rng)
    f_best = evaluate(instance, x_best)

    rho_f = [np.zeros(instance.domain_sizes[i]) for i, _ in instance.edges]
    rho_b = [np.zeros(instance.domain_sizes[j]) for _, j in instance.edges]
    m_f = [np.zeros_like(v) for v in rho_f]
    m_b = [np.zeros_like(v) for v in rho_b]

    trace = SolverTrace(solver="trws", config=config.echo())
    start = time.perf_counter()
    trace.add(0, 0.0, f_best, None)

    for t in range(1, config.budget + 1):
        for v in order:
            incident = graph.at[v]
            if not incident:
                continue
            m_v = np.zeros(instance.domain_sizes[v])
            for e, other, at_row in incident:
                m_v = m_v + (m_f[e] if at_row else m_b[e])
            for e, other, at_row in incident:
                if pos[v] >= pos[other]:
                    continue
                table = instance.tables[e]
                if at_row:
                    m_f[e] = (table - rho_b[e][None, :]).min(axis=1)
                    rho_f[e] = m_f[e] - gammas[v] * m_v
                else:
                    m_b[e] = (table - rho_f[e][:, None]).min(axis=0)
                    rho_b[e] = m_b[e] - gammas[v] * m_v
        y = _recover(graph, m_f, m_b, order, pos)
        f_y = evaluate(instance, y)
        if f_y < f_best:
            x_best, f_best = y, f_y
        dual = _repaired_dual_value(graph, rho_f, rho_b)
        wall = (time.perf_counter() - start) * 1000.0
        trace.add(t, wall, f_best, dual)
        order = list(reversed(order))
        pos = _positions(order, instance.n)
    trace.best_assignment = x_best.copy()
    return x_best, trace


def solve_trws_leg(
    instance: Instance, config: SolverConfig
) -> tuple[np.ndarray, SolverTrace]:
    """Legacy message-passing variant: forward messages with explicit
    normalization shifts (kept even where they cancel), order reversal
    between sweeps, no potential bookkeeping (dual column empty).
    """
    _require_finite(instance, "solve_trws_leg")
    graph = _Graph(instance)
    rng = np.random.default_rng(config.seed)
    order = _make_order(instance, config, rng)
    pos = _positions(order, instance.n)
    gammas = _trws_degrees(graph, pos)
    x_best = _random_assignment(instance, rng)
    f_best = evaluate(instance, x_best)

    m_f = [np.zeros(instance.domain_sizes[i]) for i, _ in instance.edges]
    m_b = [np.zeros(instance.domain_sizes[j]) for _, j in instance.edges]

    trace = SolverTrace(solver="trws-leg", config=config.echo())
    start = time.perf_counter()
    trace.add(0, 0.0, f_best, None)

    for t in range(1, config.budget + 1):
        for v in order:
            incident = graph.at[v]
            if not incident:
                continue
            m_v = np.zeros(instance.domain_sizes[v])
            for e, other, at_row in incident:
                m_v = m_v + (m_f[e] if at_row else m_b[e])
            m_v = m_v - m_v.min()
            for e, other, at_row in incident:
                if pos[v] >= pos[other]:
                    continue
                table = instance.tables[e]
                if at_row:
                    unary = gammas[v] * m_v - m_f[e]
                    msg = (unary[:, None] + table).min(axis=0)
                    m_b[e] = msg - msg.min()
                else:
                    unary = gammas[v] * m_v - m_b[e]
                    msg = (unary[None, :] + table).min(axis=1)
                    m_f[e] = msg - msg.min()
        y = _recover(graph, m_f, m_b, order, pos)
        f_y = evaluate(instance, y)
        if f_y < f_best:
            x_best, f_best = y, f_y
        wall = (time.perf_counter() - start) * 1000.0
        trace.add(t, wall, f_best, None)
        order = list(reversed(order))
        pos = _positions(order, instance.n)
    trace.best_assignment = x_best.copy()
    return x_best, trace


SOLVER_REGISTRY = {
    "cd": solve_cd,
    "lpdlp": solve_lpdlp,
    "bcadtr": solve_bcadtr,
    "bcadetr": solve_bcadetr,
    "trws": solve_trws,
    "trws-leg": solve_trws_leg,
}
