"""Dual potentials: the lower-bound LP, star block maximizers, and smoothed forms.

Directed univariate potentials ``rho[(i, j)]`` (a vector over the domain of
``i`` for each edge ``{i, j}``) lower-bound the edge tables when
``rho[(i,j)](a) + rho[(j,i)](b) <= f_ij(a, b)``; requiring each vertex's
potential sum to be constant turns the best such bound into a linear program
whose value never exceeds the true minimum and matches it on forests.  The
smoothed (entropy-regularized) variant replaces hard mins by scaled
log-sum-exp terms and admits an exact per-star closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lp
from .lp import SolverError
from .model import Adjacency, Instance, ValidationError, is_forest

EXP_CLAMP = 500.0


@dataclass
class DualPotentials:
    """Directed potentials ``rho[(i, j)]`` plus per-vertex constants.

    ``rho_vertex[i]`` is meaningful when the vertex-constancy property holds
    (the potential sum at ``i`` is the same for every domain value); ``total``
    is then the certified lower bound ``sum_i rho_vertex[i]``.
    """

    instance: Instance
    rho: dict[tuple[int, int], np.ndarray]
    rho_vertex: np.ndarray

    @property
    def total(self) -> float:
        return float(self.rho_vertex.sum())

    def feasibility_gap(self) -> float:
        """Largest violation of ``rho_ij + rho_ji <= f_ij`` (0 when feasible)."""
        worst = 0.0
        for (i, j), table in zip(self.instance.edges, self.instance.tables):
            lhs = self.rho[(i, j)][:, None] + self.rho[(j, i)][None, :]
            gap = lhs - table
            finite = np.isfinite(table)
            if finite.any():
                worst = max(worst, float(gap[finite].max()))
        return max(0.0, worst)

    def constancy_gap(self) -> float:
        """Largest deviation of any vertex's potential sum from its constant."""
        adj = self.instance.adjacency()
        worst = 0.0
        for i in range(self.instance.n):
            sums = np.zeros(self.instance.domain_sizes[i])
            for _, other in adj.incident[i]:
                sums = sums + self.rho[(i, other)]
            worst = max(worst, float(np.abs(sums - self.rho_vertex[i]).max()))
        return worst


@dataclass(frozen=True)
class MinMarginals:
    """Per directed edge ``(i, j)``: ``min_b (f_ij(., b) - rho[(j, i)](b))``."""

    values: dict[tuple[int, int], np.ndarray]

    def __getitem__(self, key: tuple[int, int]) -> np.ndarray:
        return self.values[key]


def big_m_substitute(instance: Instance) -> tuple[Instance, float]:
    """Replace ``+inf`` entries by a large finite constant.

    ``M = 1 + num_edges * (1 + max finite |entry|) * 10`` exceeds any value an
    optimal assignment can see, so optima that avoid ``+inf`` entries are
    unchanged.  All-finite instances pass through untouched (same M reported).
    """
    finite_max = 0.0
    any_inf = False
    for table in instance.tables:
        finite = np.isfinite(table)
        any_inf = any_inf or not finite.all()
        if finite.any():
            finite_max = max(finite_max, float(np.abs(table[finite]).max()))
    m_value = 1.0 + instance.num_edges * (1.0 + finite_max) * 10.0
    if not any_inf:
        return instance, m_value
    tables = [np.where(np.isfinite(t), t, m_value) for t in instance.tables]
    return (
        Instance.create(instance.n, instance.domain_sizes, instance.edges, tables),
        m_value,
    )


def _lp_layout(instance: Instance):
    """Variable offsets: forward vector, backward vector per edge, then rho_i."""
    offsets_fwd, offsets_bwd = [], []
    pos = 0
    for i, j in instance.edges:
        offsets_fwd.append(pos)
        pos += instance.domain_sizes[i]
        offsets_bwd.append(pos)
        pos += instance.domain_sizes[j]
    vertex_offset = pos
    pos += instance.n
    return offsets_fwd, offsets_bwd, vertex_offset, pos


def build_dual_lp(instance: Instance) -> lp.LinearProgram:
    """The lower-bound LP: maximize the sum of per-vertex constants subject to
    edge feasibility and vertex constancy."""
    for table in instance.tables:
        if not np.isfinite(table).all():
            raise ValidationError(
                "dual LP requires finite tables; apply big_m_substitute first"
            )
    offs_f, offs_b, voff, num_vars = _lp_layout(instance)
    objective = np.zeros(num_vars)
    objective[voff : voff + instance.n] = 1.0
    program = lp.LinearProgram.maximize(objective)

    for e, ((i, j), table) in enumerate(zip(instance.edges, instance.tables)):
        for a in range(instance.domain_sizes[i]):
            for b in range(instance.domain_sizes[j]):
                program.add_ub(
                    [offs_f[e] + a, offs_b[e] + b], [1.0, 1.0], table[a, b]
                )
    adj = instance.adjacency()
    for i in range(instance.n):
        if adj.degree[i] == 0:
            program.add_eq([voff + i], [1.0], 0.0)
            continue
        for a in range(instance.domain_sizes[i]):
            cols, coefs = [], []
            for e, other in adj.incident[i]:
                off = offs_f[e] if i < other else offs_b[e]
                cols.append(off + a)
                coefs.append(1.0)
            cols.append(voff + i)
            coefs.append(-1.0)
            program.add_eq(cols, coefs, 0.0)
    return program


def dual_lp_solve(
    instance: Instance, backend: str = "auto"
) -> tuple[float, DualPotentials]:
    """Solve the lower-bound LP; the value never exceeds the true minimum and
    equals it on forests.  Raises :class:`SolverError` on backend failure."""
    program = build_dual_lp(instance)
    solution = lp.solve(program, backend=backend)
    offs_f, offs_b, voff, _ = _lp_layout(instance)
    rho: dict[tuple[int, int], np.ndarray] = {}
    for e, (i, j) in enumerate(instance.edges):
        rho[(i, j)] = solution.x[offs_f[e] : offs_f[e] + instance.domain_sizes[i]].copy()
        rho[(j, i)] = solution.x[offs_b[e] : offs_b[e] + instance.domain_sizes[j]].copy()
    rho_vertex = solution.x[voff : voff + instance.n].copy()
    return solution.value, DualPotentials(instance, rho, rho_vertex)


def zero_potentials(instance: Instance) -> DualPotentials:
    rho = {}
    for i, j in instance.edges:
        rho[(i, j)] = np.zeros(instance.domain_sizes[i])
        rho[(j, i)] = np.zeros(instance.domain_sizes[j])
    return DualPotentials(instance, rho, np.zeros(instance.n))


def canonicalize_potentials(
    instance: Instance, potentials: DualPotentials
) -> DualPotentials:
    """Re-maximize every star block of optimal potentials, leaves first.

    LP backends may return degenerate optima whose zero-slack structure is
    wider than any optimal assignment's support; the recovery sweep can then
    walk into a branch that no optimum extends.  Re-running the closed-form
    block maximizer per vertex (children before parents on forests, then the
    reverse; plain and reversed index order otherwise) keeps every block at
    its optimum, so the potentials remain feasible, vertex-constant, and of
    unchanged total value: the output is still an optimal dual solution, but
    with min-marginal slacks aligned so that recovery succeeds on forests.
    """
    adj = instance.adjacency()
    ok, elim = is_forest(instance)
    if ok:
        roots = [v for v in range(instance.n) if v not in set(elim)]
        leaf_first = list(elim) + roots
        orders = [leaf_first, list(reversed(leaf_first))]
    else:
        orders = [list(range(instance.n)), list(range(instance.n - 1, -1, -1))]
    rho = {key: vec.copy() for key, vec in potentials.rho.items()}
    rho_vertex = potentials.rho_vertex.copy()
    for order in orders:
        for v in order:
            incident = adj.incident[v]
            if not incident:
                continue
            m_vecs = []
            for e, other in incident:
                table = instance.tables[e]
                if v < other:
                    m_vecs.append((table - rho[(other, v)][None, :]).min(axis=1))
                else:
                    m_vecs.append((table.T - rho[(other, v)][None, :]).min(axis=1))
            weights = np.full(len(incident), 1.0 / len(incident))
            updated = star_block_maximize(m_vecs, weights)
            for (e, other), vec in zip(incident, updated):
                rho[(v, other)] = vec
            rho_vertex[v] = float(np.sum(m_vecs, axis=0).min())
    return DualPotentials(instance, rho, rho_vertex)


def min_marginals(instance: Instance, potentials: DualPotentials) -> MinMarginals:
    """Directed min-marginals of the reparameterized tables."""
    values: dict[tuple[int, int], np.ndarray] = {}
    for (i, j), table in zip(instance.edges, instance.tables):
        values[(i, j)] = np.min(table - potentials.rho[(j, i)][None, :], axis=1)
        values[(j, i)] = np.min(table - potentials.rho[(i, j)][:, None], axis=0)
    return MinMarginals(values)


def nscsdv_check(m_vectors, rho_vectors, tol: float = 1e-9) -> bool:
    """Optimality test for one star block.

    ``m_vectors`` and ``rho_vectors`` are aligned lists over the center's
    neighbors, all vectors over the center's domain.  Optimal blocks satisfy
    both inequality systems: each potential is bounded by its min-marginal,
    and the potential sum never drops below the min of the min-marginal sum.
    """
    m_sum = np.sum(m_vectors, axis=0)
    rho_sum = np.sum(rho_vectors, axis=0)
    if (rho_sum < m_sum.min() - tol).any():
        return False
    for m_vec, r_vec in zip(m_vectors, rho_vectors):
        if (r_vec > m_vec + tol).any():
            return False
    return True


def star_block_maximize(m_vectors, weights) -> list[np.ndarray]:
    """Closed-form maximizer of one star block of the lower-bound LP.

    Splits the excess of the min-marginal sum over its minimum across the
    neighbors by simplex weights; the returned potentials sum to the constant
    ``min_x sum_j m_j(x)`` and stay below their min-marginals, so they pass
    :func:`nscsdv_check`.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(m_vectors),):
        raise ValidationError("one weight per neighbor required")
    if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
        raise ValidationError("weights must be nonnegative and sum to 1")
    m_sum = np.sum(m_vectors, axis=0)
    excess = m_sum - m_sum.min()
    return [m_vec - w_j * excess for m_vec, w_j in zip(m_vectors, w)]


def lse(eps: float, values) -> float:
    """Scaled log-sum-exp ``eps * log sum exp(v / eps)``, max-shifted for
    stability; always at least ``max(v)`` and at most ``max(v) + eps log K``."""
    if eps <= 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    top = float(v.max())
    return top + eps * float(np.log(np.exp((v - top) / eps).sum()))


def _lse_rows(eps: float, matrix: np.ndarray) -> np.ndarray:
    """Row-wise scaled log-sum-exp of a 2-d array."""
    top = matrix.max(axis=1, keepdims=True)
    out = top[:, 0] + eps * np.log(np.exp((matrix - top) / eps).sum(axis=1))
    return out


def soft_min_marginals(eps: float, tables_from_center: list[np.ndarray]) -> list[np.ndarray]:
    """Smoothed min-marginals ``-lse_eps(-f_j(x, .))`` per neighbor table
    (rows indexed by the center's domain)."""
    return [-_lse_rows(eps, -t) for t in tables_from_center]


def entropy_star_block(
    eps: float, tables_from_center: list[np.ndarray]
) -> tuple[float, list[np.ndarray], float]:
    """Exact maximizer of one smoothed star block.

    Given the center's reparameterized tables (rows = center domain), returns
    ``(rho, potentials, value)`` where the potentials sum to the constant
    ``rho`` exactly and ``value = rho - eps * degree`` is the block optimum
    of the smoothed dual objective.

    Derivation sketch: eliminating the bivariate measures leaves per-entry
    exponential penalties; Lagrange stationarity equalizes the per-neighbor
    penalty mass, giving ``rho_j = softmin_j + s + rho / d`` with ``s`` the
    mean of ``lse_eps(-f_j(x, .))`` over neighbors, and the scalar condition
    ``rho = d * (eps - lse_eps over x of s(x))``.  At that point each block's
    penalty totals ``eps * d``, hence the block value.
    """
    if eps <= 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    d = len(tables_from_center)
    if d == 0:
        raise ValidationError("star must have at least one edge")
    soft = soft_min_marginals(eps, tables_from_center)  # -L_j
    s = -np.mean(soft, axis=0)  # s(x) = mean_j lse_eps(-f_j(x, .))
    rho = d * (eps - lse(eps, s))
    potentials = [sm + s + rho / d for sm in soft]
    value = rho - eps * d
    return rho, potentials, value


def entropy_star_closed_form(
    instance: Instance, eps: float, center: int | None = None
) -> tuple[float, dict[int, np.ndarray], float]:
    """Closed-form optimum of the smoothed dual for a star-shaped instance.

    Returns ``(rho, {neighbor: potential vector over the center's domain},
    value)``; the potentials satisfy vertex constancy at the center exactly
    and ``value`` is the global maximum of
    :func:`entropy_dual_objective` over feasible potentials.
    """
    if not (1e-3 <= eps <= 1e3):
        raise ValidationError(f"eps must lie in [1e-3, 1e3], got {eps}")
    for table in instance.tables:
        if not np.isfinite(table).all():
            raise ValidationError("smoothed dual requires finite tables")
    if instance.num_edges == 0:
        raise ValidationError("star must have at least one edge")
    counts = np.zeros(instance.n, dtype=np.int64)
    for i, j in instance.edges:
        counts[i] += 1
        counts[j] += 1
    if center is None:
        center = int(np.argmax(counts))
    if any(center not in e for e in instance.edges):
        raise ValidationError(f"vertex {center} is not incident to every edge")
    neighbors, tables = [], []
    for (i, j), table in zip(instance.edges, instance.tables):
        if i == center:
            neighbors.append(j)
            tables.append(table)
        else:
            neighbors.append(i)
            tables.append(table.T)
    rho, potentials, value = entropy_star_block(eps, tables)
    return rho, dict(zip(neighbors, potentials)), value


def entropy_dual_objective(
    instance: Instance,
    potentials: DualPotentials,
    eps: float,
    constancy_tol: float = 1e-6,
    return_clamps: bool = False,
):
    """Smoothed dual objective: vertex-constant total minus exponential
    penalties ``eps * exp((rho_ij + rho_ji - f_ij) / eps - 1)`` per entry.

    Exponents are clamped to ``+-500`` before exponentiation; the clamp count
    is a numerical diagnostic (requested via ``return_clamps``).
    """
    if eps <= 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    gap = potentials.constancy_gap()
    if gap > constancy_tol:
        raise ValidationError(
            f"vertex-constancy violated by {gap:.3g} (tol {constancy_tol:.3g})"
        )
    total = potentials.total
    penalty = 0.0
    clamps = 0
    for (i, j), table in zip(instance.edges, instance.tables):
        exponent = (
            potentials.rho[(i, j)][:, None]
            + potentials.rho[(j, i)][None, :]
            - table
        ) / eps - 1.0
        clamps += int((np.abs(exponent) > EXP_CLAMP).sum())
        penalty += float(np.exp(np.clip(exponent, -EXP_CLAMP, EXP_CLAMP)).sum())
    value = total - eps * penalty
    if return_clamps:
        return value, clamps
    return value


def recover_primal(instance: Instance, marginals: MinMarginals, order) -> np.ndarray:
    """Sweep the vertices in ``order``; each coordinate minimizes the already
    fixed incident edge terms plus the min-marginals toward unfixed neighbors.

    Ties resolve to the smallest domain index.  On a forest, with min-
    marginals from optimal potentials and a parent-before-child order, the
    result attains the true minimum.
    """
    order = [int(v) for v in order]
    if sorted(order) != list(range(instance.n)):
        raise ValidationError("order must be a permutation of the vertices")
    position = np.empty(instance.n, dtype=np.int64)
    for idx, v in enumerate(order):
        position[v] = idx
    adj: Adjacency = instance.adjacency()
    x = np.zeros(instance.n, dtype=np.int64)
    for v in order:
        scores = np.zeros(instance.domain_sizes[v])
        for e, other in adj.incident[v]:
            table = instance.tables[e]
            if position[other] < position[v]:
                scores = scores + (
                    table[:, x[other]] if v < other else table[x[other], :]
                )
            else:
                scores = scores + marginals[(v, other)]
        x[v] = int(np.argmin(scores))
    return x
