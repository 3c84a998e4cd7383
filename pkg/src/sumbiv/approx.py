"""Least-squares approximation of grid functions by sums of bivariate tables.

The projection solves ``min ||G - sum_e f_e||`` over all table families on a
given edge set.  Optimality is characterized by the residual having zero
pair-marginal sums on every edge, which is also what makes membership testing
("is this function such a sum at all?") a residual-norm check.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .model import InstanceTooLargeError, ValidationError

DEFAULT_GRID_CAP = 10_000_000


@dataclass(frozen=True)
class DenseFunction:
    """A real function on a full finite product grid, stored flat row-major."""

    domain_sizes: tuple[int, ...]
    values: np.ndarray

    @classmethod
    def create(cls, domain_sizes, values) -> "DenseFunction":
        domain_sizes = tuple(int(k) for k in domain_sizes)
        if any(k < 1 for k in domain_sizes):
            raise ValidationError("every domain size must be >= 1")
        arr = np.asarray(values, dtype=np.float64).reshape(-1)
        expected = math.prod(domain_sizes)
        if arr.size != expected:
            raise ValidationError(
                f"expected {expected} grid values, got {arr.size}"
            )
        if not np.isfinite(arr).all():
            raise ValidationError("grid values must all be finite")
        arr = arr.copy()
        arr.flags.writeable = False
        return cls(domain_sizes=domain_sizes, values=arr)

    @property
    def n(self) -> int:
        return len(self.domain_sizes)

    def grid(self) -> np.ndarray:
        return self.values.reshape(self.domain_sizes)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class BivariateDecomposition:
    """Edge-indexed tables representing the sum ``x -> sum_e f_e(x_i, x_j)``."""

    domain_sizes: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    tables: tuple[np.ndarray, ...]

    def recompose(self) -> DenseFunction:
        """Evaluate the sum of tables on the full grid."""
        shape = self.domain_sizes
        grid = np.zeros(shape, dtype=np.float64)
        for (i, j), table in zip(self.edges, self.tables):
            expand = [1] * len(shape)
            expand[i] = shape[i]
            expand[j] = shape[j]
            grid += table.reshape(expand)
        return DenseFunction.create(shape, grid.reshape(-1))


def full_edge_set(n: int) -> tuple[tuple[int, int], ...]:
    return tuple((i, j) for i in range(n) for j in range(i + 1, n))


def _check_edges(n: int, edges) -> tuple[tuple[int, int], ...]:
    out = []
    for i, j in edges:
        i, j = int(i), int(j)
        if not (0 <= i < j < n):
            raise ValidationError(f"edge ({i},{j}) invalid for {n} arguments")
        out.append((i, j))
    if len(set(out)) != len(out):
        raise ValidationError("duplicate edges")
    return tuple(sorted(out))


def pair_marginal_sum(fn: DenseFunction, k: int, l: int) -> np.ndarray:
    """Sum the function over every argument except ``k`` and ``l`` (``k < l``).

    Entry ``(a, b)`` of the result sums all grid points with argument ``k``
    fixed to ``a`` and argument ``l`` fixed to ``b``.
    """
    if not (0 <= k < l < fn.n):
        raise ValidationError(f"need 0 <= k < l < {fn.n}, got ({k},{l})")
    axes = tuple(a for a in range(fn.n) if a not in (k, l))
    return fn.grid().sum(axis=axes) if axes else fn.grid().copy()


def _sum_tables(shape, edges, tables) -> np.ndarray:
    grid = np.zeros(shape, dtype=np.float64)
    for (i, j), table in zip(edges, tables):
        expand = [1] * len(shape)
        expand[i] = shape[i]
        expand[j] = shape[j]
        grid += table.reshape(expand)
    return grid


def _pair_marginals_of(grid: np.ndarray, edges) -> list[np.ndarray]:
    n = grid.ndim
    out = []
    for i, j in edges:
        axes = tuple(a for a in range(n) if a not in (i, j))
        out.append(grid.sum(axis=axes) if axes else grid.copy())
    return out


def l2_project(
    fn: DenseFunction,
    edges,
    cap: int = DEFAULT_GRID_CAP,
    rel_tol: float = 1e-13,
    max_iter: int | None = None,
) -> tuple[BivariateDecomposition, float]:
    """Best least-squares approximation of ``fn`` by a sum over ``edges``.

    Solves the normal equations with conjugate gradients, applying the design
    operator implicitly (tables -> grid sum, grid -> pair-marginal sums), so
    the full design matrix is never formed.  The system is rank-deficient
    (tables summing to zero are in the kernel); CG started at zero converges
    to the minimum-norm coefficient choice, and only the recomposed sum and
    the residual are contractual.

    Returns the decomposition and ``||fn - sum_e f_e||`` over the grid.
    """
    shape = fn.domain_sizes
    if math.prod(shape) > cap:
        raise InstanceTooLargeError(
            f"{math.prod(shape)} grid points exceed the cap of {cap}"
        )
    edges = _check_edges(fn.n, edges)
    target = fn.grid()

    def flatten(tables: list[np.ndarray]) -> np.ndarray:
        if not tables:
            return np.zeros(0)
        return np.concatenate([t.reshape(-1) for t in tables])

    def unflatten(vec: np.ndarray) -> list[np.ndarray]:
        out, pos = [], 0
        for i, j in edges:
            size = shape[i] * shape[j]
            out.append(vec[pos : pos + size].reshape(shape[i], shape[j]))
            pos += size
        return out

    def normal_apply(vec: np.ndarray) -> np.ndarray:
        grid = _sum_tables(shape, edges, unflatten(vec))
        return flatten(_pair_marginals_of(grid, edges))

    rhs = flatten(_pair_marginals_of(target, edges))
    dim = rhs.size
    if dim == 0:
        residual = float(np.linalg.norm(target))
        return BivariateDecomposition(shape, edges, ()), residual

    if max_iter is None:
        max_iter = 10 * dim + 100
    x = np.zeros(dim)
    r = rhs.copy()
    p = r.copy()
    rs = float(r @ r)
    threshold = (rel_tol * float(np.linalg.norm(rhs))) ** 2
    for _ in range(max_iter):
        if rs <= threshold:
            break
        ap = normal_apply(p)
        denom = float(p @ ap)
        if denom <= 0.0:
            break
        alpha = rs / denom
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new

    tables = tuple(t.copy() for t in unflatten(x))
    approx_grid = _sum_tables(shape, edges, tables)
    residual = float(np.linalg.norm((target - approx_grid).reshape(-1)))
    return BivariateDecomposition(shape, edges, tables), residual


def is_sum_of_bivariates(
    fn: DenseFunction, edges, tol: float = 1e-8, cap: int = DEFAULT_GRID_CAP
) -> bool:
    """True iff ``fn`` is (numerically) a sum of bivariate tables over ``edges``."""
    _, residual = l2_project(fn, edges, cap=cap)
    return residual <= tol * max(1.0, fn.norm())


@dataclass(frozen=True)
class NullDecomposition:
    """Directed univariate splitting of tables that sum to the zero function.

    ``rho[(i, j)]`` is the vector over the domain of ``i`` for edge ``{i, j}``;
    each table satisfies ``f_ij(a, b) = rho[(i,j)](a) + rho[(j,i)](b)``, the
    per-vertex sums are the constants ``rho_vertex``, and those constants sum
    to zero.
    """

    rho: dict[tuple[int, int], np.ndarray]
    rho_vertex: np.ndarray


def null_decompose(
    decomp: BivariateDecomposition, tol: float = 1e-8
) -> NullDecomposition | None:
    """Split a zero-sum decomposition into directed univariate potentials.

    Each table is mean-centered into row and column parts; if every table is
    additively separable, the per-vertex sums are constant, and the constants
    sum to zero, the input parameterizes the zero function and the splitting
    is returned.  Otherwise the input is not a parameterization of zero and
    the result is ``None``.
    """
    scale = max(
        [1.0] + [float(np.abs(t).max()) for t in decomp.tables if t.size]
    )
    slack = tol * scale
    rho: dict[tuple[int, int], np.ndarray] = {}
    for (i, j), table in zip(decomp.edges, decomp.tables):
        grand = table.mean()
        row_part = table.mean(axis=1) - grand / 2.0
        col_part = table.mean(axis=0) - grand / 2.0
        if np.abs(table - row_part[:, None] - col_part[None, :]).max() > slack:
            return None
        rho[(i, j)] = row_part
        rho[(j, i)] = col_part

    n = len(decomp.domain_sizes)
    rho_vertex = np.zeros(n)
    for i in range(n):
        partial = np.zeros(decomp.domain_sizes[i])
        for (a, b) in decomp.edges:
            if a == i:
                partial = partial + rho[(i, b)]
            elif b == i:
                partial = partial + rho[(i, a)]
        if partial.size and partial.max() - partial.min() > slack:
            return None
        rho_vertex[i] = partial.mean() if partial.size else 0.0
    if abs(rho_vertex.sum()) > slack * max(1, n):
        return None
    return NullDecomposition(rho=rho, rho_vertex=rho_vertex)


def save_dense_function(fn: DenseFunction, path) -> None:
    doc = {"domains": list(fn.domain_sizes), "values": fn.values.tolist()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_dense_function(path) -> DenseFunction:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict) or set(doc) != {"domains", "values"}:
        raise ValidationError(f"{path}: expected keys 'domains' and 'values'")
    return DenseFunction.create(doc["domains"], doc["values"])
