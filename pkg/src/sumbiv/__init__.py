"""sumbiv: minimize objectives that are sums of edge-indexed bivariate tables.

Submodules
----------
model     instance/assignment data model, evaluation, graph queries, file I/O
exact     brute-force and forest dynamic-programming minimizers
approx    least-squares projection onto sums of bivariates, membership tests
measures  edge-coupled measure families, entropy, max-entropy reconstruction
duals     lower-bound LP, star block maximizers, smoothed duals, recovery
solvers   iterative methods (cd, lpdlp, bcadtr, bcadetr, trws, trws-leg)
bench     seeded generators, benchmark runner, report and figure output
"""

from .model import (
    Adjacency,
    Instance,
    InstanceTooLargeError,
    InvalidAssignmentError,
    NotAForestError,
    ValidationError,
    evaluate,
    is_forest,
    load_instance,
    save_instance,
)

__all__ = [
    "Adjacency",
    "Instance",
    "InstanceTooLargeError",
    "InvalidAssignmentError",
    "NotAForestError",
    "ValidationError",
    "evaluate",
    "is_forest",
    "load_instance",
    "save_instance",
]

__version__ = "0.1.0"
