"""Edge-coupled measure families, entropy, and max-entropy reconstruction.

A :class:`MarginalFamily` assigns a nonnegative matrix to every edge and a
probability vector to every vertex; consistency means each matrix marginalizes
to its endpoints' vectors.  On forests such a family always extends to a
global measure on the product grid, and among all extensions the product-form
reconstruction below has maximal entropy.  On cyclic graphs no extension need
exist, so reconstruction refuses non-forests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import InstanceTooLargeError, NotAForestError, ValidationError

DEFAULT_CONSISTENCY_TOL = 1e-9
DEFAULT_GRID_CAP = 10_000_000


@dataclass(frozen=True)
class MarginalFamily:
    """Per-edge bivariate measures plus per-vertex univariate marginals."""

    domain_sizes: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    edge_measures: tuple[np.ndarray, ...]
    vertex_measures: tuple[np.ndarray, ...]

    @classmethod
    def create(cls, domain_sizes, edges, edge_measures, vertex_measures):
        domain_sizes = tuple(int(k) for k in domain_sizes)
        n = len(domain_sizes)
        edges = tuple((int(i), int(j)) for i, j in edges)
        if len(set(edges)) != len(edges):
            raise ValidationError("duplicate edges")
        for i, j in edges:
            if not (0 <= i < j < n):
                raise ValidationError(f"edge ({i},{j}) invalid for n={n}")
        if len(edge_measures) != len(edges) or len(vertex_measures) != n:
            raise ValidationError("measure counts do not match the graph")
        e_out, v_out = [], []
        for (i, j), m in zip(edges, edge_measures):
            arr = np.asarray(m, dtype=np.float64)
            if arr.shape != (domain_sizes[i], domain_sizes[j]):
                raise ValidationError(f"edge measure ({i},{j}) has wrong shape")
            if (arr < 0).any():
                raise ValidationError(f"edge measure ({i},{j}) has negative mass")
            arr = arr.copy()
            arr.flags.writeable = False
            e_out.append(arr)
        for i, m in enumerate(vertex_measures):
            arr = np.asarray(m, dtype=np.float64)
            if arr.shape != (domain_sizes[i],):
                raise ValidationError(f"vertex measure {i} has wrong shape")
            if (arr < 0).any():
                raise ValidationError(f"vertex measure {i} has negative mass")
            if abs(arr.sum() - 1.0) > 1e-12:
                raise ValidationError(
                    f"vertex measure {i} sums to {arr.sum():.17g}, expected 1"
                )
            arr = arr.copy()
            arr.flags.writeable = False
            v_out.append(arr)
        return cls(domain_sizes, edges, tuple(e_out), tuple(v_out))

    def degrees(self) -> np.ndarray:
        deg = np.zeros(len(self.domain_sizes), dtype=np.int64)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg


@dataclass(frozen=True)
class GlobalMeasure:
    """A probability measure on the full product grid, stored densely."""

    domain_sizes: tuple[int, ...]
    values: np.ndarray

    @classmethod
    def create(cls, domain_sizes, values) -> "GlobalMeasure":
        domain_sizes = tuple(int(k) for k in domain_sizes)
        arr = np.asarray(values, dtype=np.float64).reshape(domain_sizes).copy()
        if (arr < 0).any():
            raise ValidationError("global measure has negative mass")
        if abs(arr.sum() - 1.0) > 1e-12:
            raise ValidationError(
                f"global measure sums to {arr.sum():.17g}, expected 1"
            )
        arr.flags.writeable = False
        return cls(domain_sizes, arr)

    def marginal(self, i: int, j: int | None = None) -> np.ndarray:
        """Marginal on vertex ``i`` or on the pair ``(i, j)`` with ``i < j``."""
        keep = (i,) if j is None else (i, j)
        axes = tuple(a for a in range(len(self.domain_sizes)) if a not in keep)
        return self.values.sum(axis=axes) if axes else self.values.copy()


def check_consistency(
    family: MarginalFamily, tol: float = DEFAULT_CONSISTENCY_TOL
) -> bool:
    """True iff every edge measure marginalizes to its endpoint vectors."""
    for (i, j), m in zip(family.edges, family.edge_measures):
        if np.abs(m.sum(axis=1) - family.vertex_measures[i]).max() > tol:
            return False
        if np.abs(m.sum(axis=0) - family.vertex_measures[j]).max() > tol:
            return False
    return True


def entropy(measure) -> float:
    """Shannon entropy with the ``0 * log 0 = 0`` convention (natural log)."""
    p = _measure_values(measure)
    mask = p > 0.0
    return float(-(p[mask] * np.log(p[mask])).sum())


def kl(lam, mu) -> float:
    """KL-divergence of ``lam`` from ``mu``; ``+inf`` where ``lam`` escapes
    the support of ``mu``."""
    p = _measure_values(lam)
    q = _measure_values(mu)
    if p.shape != q.shape:
        raise ValidationError("kl requires measures on the same space")
    mask = p > 0.0
    if (q[mask] == 0.0).any():
        return math.inf
    return float((p[mask] * (np.log(p[mask]) - np.log(q[mask]))).sum())


def _measure_values(measure) -> np.ndarray:
    if isinstance(measure, GlobalMeasure):
        return measure.values.reshape(-1)
    arr = np.asarray(measure, dtype=np.float64).reshape(-1)
    if (arr < 0).any():
        raise ValidationError("measure has negative mass")
    return arr


def _forest_structure(family: MarginalFamily):
    n = len(family.domain_sizes)
    if len(family.edges) >= n and n > 0:
        raise NotAForestError("family graph has too many edges to be a forest")
    neighbors: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for e, (i, j) in enumerate(family.edges):
        neighbors[i].append((e, j))
        neighbors[j].append((e, i))
    # cycle detection by leaf peeling
    degree = [len(lst) for lst in neighbors]
    stack = [v for v in range(n) if degree[v] == 1]
    seen = 0
    removed = [False] * n
    while stack:
        v = stack.pop()
        if removed[v] or degree[v] != 1:
            continue
        removed[v] = True
        seen += 1
        for _, o in neighbors[v]:
            if not removed[o]:
                degree[o] -= 1
                if degree[o] == 1:
                    stack.append(o)
    if any(not removed[v] and degree[v] > 0 for v in range(n)):
        raise NotAForestError("family graph contains a cycle")
    return neighbors


def reconstruct_tree_measure(
    family: MarginalFamily,
    root: int | None = None,
    tol: float = DEFAULT_CONSISTENCY_TOL,
    cap: int = DEFAULT_GRID_CAP,
) -> GlobalMeasure:
    """Maximal-entropy global measure with the family as its marginals.

    With ``root=None`` the symmetric product form is used: the product of all
    edge measures divided by each vertex marginal to the power ``degree - 1``,
    with mass zero wherever any vertex marginal vanishes.  Passing a root
    evaluates the equivalent rooted product (root marginal times edge-over-
    parent ratios per component); the result does not depend on that choice.
    """
    neighbors = _forest_structure(family)
    if not check_consistency(family, tol=tol):
        raise ValidationError("family is not marginal-consistent")
    shape = family.domain_sizes
    size = math.prod(shape) if shape else 1
    if size > cap:
        raise InstanceTooLargeError(f"{size} grid points exceed the cap of {cap}")
    n = len(shape)

    def expand(vec_or_mat: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
        ex = [1] * n
        for a in axes:
            ex[a] = shape[a]
        return vec_or_mat.reshape(ex)

    positive = np.ones(shape, dtype=bool)
    for i in range(n):
        positive &= expand(family.vertex_measures[i] > 0.0, (i,))

    if root is None:
        log_mass = np.zeros(shape, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            for (i, j), m in zip(family.edges, family.edge_measures):
                log_mass = log_mass + expand(
                    np.where(m > 0.0, np.log(np.maximum(m, 1e-300)), -np.inf),
                    (i, j),
                )
            deg = family.degrees()
            for i in range(n):
                v = family.vertex_measures[i]
                logs = np.where(v > 0.0, np.log(np.maximum(v, 1e-300)), 0.0)
                log_mass = log_mass - (int(deg[i]) - 1) * expand(logs, (i,))
        mass = np.where(positive, np.exp(log_mass), 0.0)
        mass = np.where(np.isfinite(mass), mass, 0.0)
    else:
        if not (0 <= root < n):
            raise ValidationError(f"root {root} out of range")
        mass = np.ones(shape, dtype=np.float64)
        visited = [False] * n
        deg = family.degrees()
        components = sorted(
            range(n), key=lambda v: (v != root, v)
        )  # requested root first, then smallest-index roots per component
        for start in components:
            if visited[start]:
                continue
            visited[start] = True
            mass *= expand(family.vertex_measures[start], (start,))
            stack = [start]
            while stack:
                v = stack.pop()
                for e, o in neighbors[v]:
                    if visited[o]:
                        continue
                    visited[o] = True
                    i, j = family.edges[e]
                    m = family.edge_measures[e]
                    parent_vec = family.vertex_measures[v]
                    ratio = np.where(
                        parent_vec > 0.0, 1.0 / np.maximum(parent_vec, 1e-300), 0.0
                    )
                    if v == i:
                        factor = m * ratio[:, None]
                    else:
                        factor = m * ratio[None, :]
                    mass *= expand(factor, (i, j))
                    stack.append(o)
        mass = np.where(positive, mass, 0.0)

    total = mass.sum()
    if not math.isclose(total, 1.0, rel_tol=0.0, abs_tol=1e-9):
        raise ValidationError(
            f"reconstructed mass is {total:.12g}; family is too inconsistent"
        )
    return GlobalMeasure.create(shape, mass / total)


def max_entropy_value(family: MarginalFamily, tol: float = DEFAULT_CONSISTENCY_TOL) -> float:
    """Entropy of the maximal-entropy reconstruction, from marginals alone.

    Equals the sum of edge-measure entropies minus ``degree - 1`` times each
    vertex entropy, so isolated vertices contribute their entropy once.
    """
    _forest_structure(family)
    if not check_consistency(family, tol=tol):
        raise ValidationError("family is not marginal-consistent")
    total = 0.0
    for m in family.edge_measures:
        total += entropy(m)
    for i, deg in enumerate(family.degrees()):
        total -= (int(deg) - 1) * entropy(family.vertex_measures[i])
    return total


def family_from_global(
    measure: GlobalMeasure, edges
) -> MarginalFamily:
    """Marginalize a global measure onto an edge set (a consistent family)."""
    edges = tuple(sorted((int(i), int(j)) for i, j in edges))
    edge_measures = [measure.marginal(i, j) for i, j in edges]
    vertex_measures = [
        measure.marginal(i) for i in range(len(measure.domain_sizes))
    ]
    return MarginalFamily.create(
        measure.domain_sizes, edges, edge_measures, vertex_measures
    )
