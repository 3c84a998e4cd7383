"""Core data model: objectives that decompose into edge-indexed bivariate tables.

An :class:`Instance` is a graph whose vertices carry finite domains and whose
edges carry dense value tables.  The objective of an instance is the sum of
its edge tables evaluated at an assignment, one value per vertex.  Table
entries are finite floats or ``+inf`` (hard exclusions); ``-inf`` and ``NaN``
are rejected.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass

import numpy as np


class ValidationError(ValueError):
    """An instance, file, or argument violates a structural invariant."""


class InvalidAssignmentError(ValidationError):
    """An assignment does not fit the instance it is evaluated against."""


class NotAForestError(ValidationError):
    """An operation that requires an acyclic graph was given a cyclic one."""


class InstanceTooLargeError(ValidationError):
    """An enumeration-based operation was given an instance above its cap."""


def _as_table(raw, k_row: int, k_col: int, name: str) -> np.ndarray:
    table = np.asarray(raw, dtype=np.float64)
    if table.shape != (k_row, k_col):
        raise ValidationError(
            f"table for {name} has shape {table.shape}, expected {(k_row, k_col)}"
        )
    if np.isnan(table).any():
        raise ValidationError(f"table for {name} contains NaN")
    if np.isneginf(table).any():
        raise ValidationError(f"table for {name} contains -inf")
    table.flags.writeable = False
    return table


@dataclass(frozen=True)
class Instance:
    """Immutable sum-of-bivariates objective.

    Attributes
    ----------
    n : number of vertices.
    domain_sizes : per-vertex domain cardinality ``K_i >= 1``.
    edges : unique pairs ``(i, j)`` with ``i < j``, sorted lexicographically.
    tables : per-edge ``K_i x K_j`` float arrays, read-only.

    Use :meth:`Instance.create` to build one; it normalizes edge orientation
    (transposing tables given as ``(j, i)`` with ``j > i``), sorts edges, and
    validates every invariant.
    """

    n: int
    domain_sizes: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    tables: tuple[np.ndarray, ...]

    @classmethod
    def create(cls, n, domain_sizes, edges, tables) -> "Instance":
        n = int(n)
        if n < 1:
            raise ValidationError(f"vertex count must be >= 1, got {n}")
        domain_sizes = tuple(int(k) for k in domain_sizes)
        if len(domain_sizes) != n:
            raise ValidationError(
                f"expected {n} domain sizes, got {len(domain_sizes)}"
            )
        if any(k < 1 for k in domain_sizes):
            raise ValidationError("every domain size must be >= 1")
        if len(edges) != len(tables):
            raise ValidationError(
                f"{len(edges)} edges but {len(tables)} tables"
            )

        normalized: list[tuple[tuple[int, int], np.ndarray]] = []
        for (i, j), raw in zip(edges, tables):
            i, j = int(i), int(j)
            if i == j:
                raise ValidationError(f"self-loop ({i},{j}) is not allowed")
            table = np.asarray(raw, dtype=np.float64)
            if i > j:
                i, j = j, i
                table = table.T.copy()
            if not (0 <= i < j < n):
                raise ValidationError(f"edge ({i},{j}) out of range for n={n}")
            table = _as_table(table, domain_sizes[i], domain_sizes[j], f"edge ({i},{j})")
            normalized.append(((i, j), table))

        normalized.sort(key=lambda item: item[0])
        sorted_edges = tuple(e for e, _ in normalized)
        if len(set(sorted_edges)) != len(sorted_edges):
            dupes = sorted({e for e in sorted_edges if sorted_edges.count(e) > 1})
            raise ValidationError(f"duplicate edges after normalization: {dupes}")
        return cls(
            n=n,
            domain_sizes=domain_sizes,
            edges=sorted_edges,
            tables=tuple(t for _, t in normalized),
        )

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def states(self) -> int:
        """Number of points in the full product domain."""
        out = 1
        for k in self.domain_sizes:
            out *= k
        return out

    def adjacency(self) -> "Adjacency":
        return Adjacency.from_instance(self)


@dataclass(frozen=True)
class Adjacency:
    """Undirected neighbor structure of an instance's graph.

    ``incident[i]`` lists ``(edge_index, other_vertex)`` pairs; vertex ``i``
    indexes the table rows of that edge exactly when ``i < other_vertex``.
    """

    neighbors: tuple[tuple[int, ...], ...]
    incident: tuple[tuple[tuple[int, int], ...], ...]
    degree: tuple[int, ...]

    @classmethod
    def from_instance(cls, instance: Instance) -> "Adjacency":
        incident: list[list[tuple[int, int]]] = [[] for _ in range(instance.n)]
        for e, (i, j) in enumerate(instance.edges):
            incident[i].append((e, j))
            incident[j].append((e, i))
        for lst in incident:
            lst.sort(key=lambda item: item[1])
        return cls(
            neighbors=tuple(tuple(o for _, o in lst) for lst in incident),
            incident=tuple(tuple(lst) for lst in incident),
            degree=tuple(len(lst) for lst in incident),
        )


def check_assignment(instance: Instance, x) -> np.ndarray:
    """Validate ``x`` against the instance and return it as an int array."""
    arr = np.asarray(x)
    if arr.shape != (instance.n,):
        raise InvalidAssignmentError(
            f"assignment has shape {arr.shape}, expected ({instance.n},)"
        )
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.rint(arr)
        if not np.array_equal(rounded, arr):
            raise InvalidAssignmentError("assignment coordinates must be integers")
        arr = rounded.astype(np.int64)
    arr = arr.astype(np.int64, copy=False)
    sizes = np.asarray(instance.domain_sizes)
    if (arr < 0).any() or (arr >= sizes).any():
        bad = int(np.flatnonzero((arr < 0) | (arr >= sizes))[0])
        raise InvalidAssignmentError(
            f"coordinate {bad} = {arr[bad]} outside domain of size {sizes[bad]}"
        )
    return arr


def evaluate(instance: Instance, x) -> float:
    """Objective value at ``x``: the sum of all edge-table entries it selects.

    Any ``+inf`` summand makes the result ``+inf``.
    """
    arr = check_assignment(instance, x)
    total = 0.0
    for (i, j), table in zip(instance.edges, instance.tables):
        total += table[arr[i], arr[j]]
    return float(total)


def local_value(instance: Instance, adjacency: Adjacency, x, i: int) -> float:
    """Sum of edge terms incident to vertex ``i`` at assignment ``x``."""
    total = 0.0
    for e, other in adjacency.incident[i]:
        table = instance.tables[e]
        if i < other:
            total += table[x[i], x[other]]
        else:
            total += table[x[other], x[i]]
    return float(total)


def is_forest(instance: Instance) -> tuple[bool, list[int] | None]:
    """Test acyclicity and return a leaf-elimination order when acyclic.

    The order repeatedly removes the highest-indexed current leaf, so each
    entry has exactly one not-yet-removed neighbor (its parent) at removal
    time.  Isolated vertices and the final vertex of each component do not
    appear in the order.
    """
    adj = instance.adjacency()
    if instance.num_edges >= instance.n:
        # a forest on n vertices has at most n - 1 edges
        return False, None
    degree = list(adj.degree)
    heap = [-i for i in range(instance.n) if degree[i] == 1]
    heapq.heapify(heap)
    removed = [False] * instance.n
    order: list[int] = []
    while heap:
        v = -heapq.heappop(heap)
        if removed[v] or degree[v] != 1:
            continue
        removed[v] = True
        order.append(v)
        for _, other in adj.incident[v]:
            if removed[other]:
                continue
            degree[other] -= 1
            if degree[other] == 1:
                heapq.heappush(heap, -other)
    acyclic = all(removed[i] or degree[i] == 0 for i in range(instance.n))
    if not acyclic:
        return False, None
    return True, order


def _entry_to_json(value: float):
    return "inf" if math.isinf(value) else value


def _entry_from_json(raw, where: str) -> float:
    if raw == "inf":
        return math.inf
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ValidationError(f"{where}: entry {raw!r} is not a number or 'inf'")
    return float(raw)


def save_instance(instance: Instance, path) -> None:
    """Write an instance as JSON; ``+inf`` entries become the string "inf"."""
    doc = {
        "n": instance.n,
        "domains": list(instance.domain_sizes),
        "edges": [list(e) for e in instance.edges],
        "tables": [
            [[_entry_to_json(v) for v in row] for row in table]
            for table in instance.tables
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


_INSTANCE_KEYS = {"n", "domains", "edges", "tables"}


def load_instance(path) -> Instance:
    """Load an instance from its JSON file format; see :func:`save_instance`."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: top-level value must be an object")
    unknown = set(doc) - _INSTANCE_KEYS
    if unknown:
        raise ValidationError(f"{path}: unknown keys {sorted(unknown)}")
    missing = _INSTANCE_KEYS - set(doc)
    if missing:
        raise ValidationError(f"{path}: missing keys {sorted(missing)}")
    tables = []
    for idx, raw_table in enumerate(doc["tables"]):
        tables.append(
            [
                [_entry_from_json(v, f"{path}: tables[{idx}]") for v in row]
                for row in raw_table
            ]
        )
    return Instance.create(doc["n"], doc["domains"], doc["edges"], tables)
