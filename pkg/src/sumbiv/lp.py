"""Minimal linear-programming layer behind a solver-agnostic interface.

Programs are built in sparse triplet form as ``max c @ x`` subject to
``A_ub x <= b_ub`` and ``A_eq x = b_eq`` with free variables.  The default
backend is SciPy's HiGHS wrapper; a self-contained dense two-phase simplex
serves as a fallback and as an independent cross-check at desk scale.  A
fixed-format MPS dump is available for checking against external solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SolverError(RuntimeError):
    """An LP backend failed or reported a status that should not occur."""


@dataclass
class LinearProgram:
    """``max c @ x`` s.t. ``A_ub x <= b_ub``, ``A_eq x = b_eq``, ``x`` free."""

    num_vars: int
    objective: np.ndarray
    ub_rows: list[tuple[list[int], list[float], float]] = field(default_factory=list)
    eq_rows: list[tuple[list[int], list[float], float]] = field(default_factory=list)

    @classmethod
    def maximize(cls, objective) -> "LinearProgram":
        c = np.asarray(objective, dtype=np.float64)
        return cls(num_vars=c.size, objective=c)

    def add_ub(self, cols, coefs, rhs: float) -> None:
        self.ub_rows.append((list(cols), [float(v) for v in coefs], float(rhs)))

    def add_eq(self, cols, coefs, rhs: float) -> None:
        self.eq_rows.append((list(cols), [float(v) for v in coefs], float(rhs)))


@dataclass(frozen=True)
class LpSolution:
    status: str
    value: float
    x: np.ndarray


def _rows_to_csr(rows, num_vars):
    from scipy import sparse

    data, indices, indptr = [], [], [0]
    rhs = []
    for cols, coefs, b in rows:
        indices.extend(cols)
        data.extend(coefs)
        indptr.append(len(indices))
        rhs.append(b)
    mat = sparse.csr_matrix(
        (np.asarray(data), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
        shape=(len(rows), num_vars),
    )
    return mat, np.asarray(rhs)


# simplex returns exact vertex solutions quickly on small programs but can
# crawl on large degenerate ones, where interior point is far faster
_IPM_ROW_THRESHOLD = 20_000


def solve_scipy(program: LinearProgram, method: str | None = None) -> LpSolution:
    from scipy.optimize import linprog

    kwargs = {}
    if program.ub_rows:
        kwargs["A_ub"], kwargs["b_ub"] = _rows_to_csr(
            program.ub_rows, program.num_vars
        )
    if program.eq_rows:
        kwargs["A_eq"], kwargs["b_eq"] = _rows_to_csr(
            program.eq_rows, program.num_vars
        )
    if method is None:
        rows = len(program.ub_rows) + len(program.eq_rows)
        method = "highs-ipm" if rows > _IPM_ROW_THRESHOLD else "highs"
    options = {}
    if method == "highs":
        options = {
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
        }
    res = linprog(
        -program.objective,
        bounds=(None, None),
        method=method,
        options=options,
        **kwargs,
    )
    if res.status != 0:
        raise SolverError(f"LP backend failed: status={res.status} ({res.message})")
    return LpSolution(status="optimal", value=float(-res.fun), x=np.asarray(res.x))


def solve_dense_simplex(
    program: LinearProgram, max_iter: int = 200_000, tol: float = 1e-9
) -> LpSolution:
    """Two-phase tableau simplex with Bland's rule; desk-scale instances only.

    Free variables are split into positive and negative parts, inequality
    rows get slacks, and phase one drives artificial variables out of the
    basis.  Dense arithmetic throughout, so keep the program small.
    """
    n = program.num_vars
    rows = [(cols, coefs, b, "ub") for cols, coefs, b in program.ub_rows]
    rows += [(cols, coefs, b, "eq") for cols, coefs, b in program.eq_rows]
    m = len(rows)
    n_slack = len(program.ub_rows)
    width = 2 * n + n_slack + m  # x+, x-, slacks, artificials

    a = np.zeros((m, width))
    b_vec = np.zeros(m)
    slack_idx = 0
    for r, (cols, coefs, b, kind) in enumerate(rows):
        for c, v in zip(cols, coefs):
            a[r, c] = v
            a[r, n + c] = -v
        if kind == "ub":
            a[r, 2 * n + slack_idx] = 1.0
            slack_idx += 1
        b_vec[r] = b
    flip = b_vec < 0
    a[flip] *= -1.0
    b_vec[flip] *= -1.0
    art = 2 * n + n_slack
    for r in range(m):
        a[r, art + r] = 1.0

    basis = [art + r for r in range(m)]

    def pivot(tableau, basis, row, col):
        tableau[row] /= tableau[row, col]
        for r in range(tableau.shape[0]):
            if r != row and abs(tableau[r, col]) > 0.0:
                tableau[r] -= tableau[r, col] * tableau[row]
        basis[row] = col

    def run_phase(tableau, basis, cost, allowed):
        # reduced costs for a minimization tableau; Bland's rule on `allowed`
        for _ in range(max_iter):
            z = cost.copy()
            for r, bc in enumerate(basis):
                if abs(cost[bc]) > 0.0:
                    z -= cost[bc] * tableau[r, :-1]
            entering = -1
            for cidx in range(width):
                if allowed[cidx] and z[cidx] < -tol:
                    entering = cidx
                    break
            if entering < 0:
                return
            ratios = [
                (tableau[r, -1] / tableau[r, entering], basis[r], r)
                for r in range(m)
                if tableau[r, entering] > tol
            ]
            if not ratios:
                raise SolverError("dense simplex: unbounded program")
            _, _, leaving = min(ratios)
            pivot(tableau, basis, leaving, entering)
        raise SolverError("dense simplex: iteration limit reached")

    tableau = np.hstack([a, b_vec[:, None]])

    phase1_cost = np.zeros(width)
    phase1_cost[art:] = 1.0
    allowed = np.ones(width, dtype=bool)
    run_phase(tableau, basis, phase1_cost, allowed)
    infeas = sum(tableau[r, -1] for r in range(m) if basis[r] >= art)
    if infeas > 1e-7:
        raise SolverError("dense simplex: infeasible program")
    # drive leftover (degenerate) artificials out of the basis where possible
    for r in range(m):
        if basis[r] >= art:
            for cidx in range(art):
                if abs(tableau[r, cidx]) > tol:
                    pivot(tableau, basis, r, cidx)
                    break
    # rows still pinned to an artificial are redundant constraints: drop them
    keep = [r for r in range(m) if basis[r] < art]
    if len(keep) < m:
        tableau = tableau[keep]
        basis = [basis[r] for r in keep]
        m = len(keep)

    phase2_cost = np.zeros(width)
    phase2_cost[:n] = -program.objective  # maximize -> minimize negation
    phase2_cost[n : 2 * n] = program.objective
    allowed = np.ones(width, dtype=bool)
    allowed[art:] = False
    run_phase(tableau, basis, phase2_cost, allowed)

    x = np.zeros(width)
    for r, bc in enumerate(basis):
        x[bc] = tableau[r, -1]
    solution = x[:n] - x[n : 2 * n]
    return LpSolution(
        status="optimal",
        value=float(program.objective @ solution),
        x=solution,
    )


def solve(program: LinearProgram, backend: str = "auto") -> LpSolution:
    if backend == "auto":
        try:
            import scipy  # noqa: F401

            backend = "scipy"
        except ImportError:
            backend = "dense"
    if backend == "scipy":
        return solve_scipy(program)
    if backend == "dense":
        return solve_dense_simplex(program)
    raise ValueError(f"unknown LP backend {backend!r}")


def write_mps(program: LinearProgram, path, name: str = "SUMBIV") -> None:
    """Emit the program (as a maximization) in fixed MPS format."""
    def var(c: int) -> str:
        return f"X{c:07d}"

    lines = [f"NAME          {name}", "ROWS", " N  OBJ"]
    for r in range(len(program.ub_rows)):
        lines.append(f" L  UB{r:07d}")
    for r in range(len(program.eq_rows)):
        lines.append(f" E  EQ{r:07d}")

    entries: dict[int, list[tuple[str, float]]] = {}
    for c in range(program.num_vars):
        if program.objective[c] != 0.0:
            entries.setdefault(c, []).append(("OBJ", -float(program.objective[c])))
    for r, (cols, coefs, _) in enumerate(program.ub_rows):
        for c, v in zip(cols, coefs):
            entries.setdefault(c, []).append((f"UB{r:07d}", v))
    for r, (cols, coefs, _) in enumerate(program.eq_rows):
        for c, v in zip(cols, coefs):
            entries.setdefault(c, []).append((f"EQ{r:07d}", v))

    lines.append("COLUMNS")
    for c in sorted(entries):
        for row_name, v in entries[c]:
            lines.append(f"    {var(c):<10}{row_name:<10}{v:.17g}")
    lines.append("RHS")
    for r, (_, _, b) in enumerate(program.ub_rows):
        if b != 0.0:
            lines.append(f"    RHS       UB{r:07d}   {b:.17g}")
    for r, (_, _, b) in enumerate(program.eq_rows):
        if b != 0.0:
            lines.append(f"    RHS       EQ{r:07d}   {b:.17g}")
    lines.append("BOUNDS")
    for c in range(program.num_vars):
        lines.append(f" FR BND       {var(c)}")
    lines.append("ENDATA")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
