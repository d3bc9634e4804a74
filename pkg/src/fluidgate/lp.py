"""Dense LP machinery for small allocation problems.

Everything here operates on inequality-form LPs

    max  obj @ y
    s.t. A @ y <= rhs,   0 <= y <= ub,

which get converted to an equality standard form by appending one slack
per inequality row and one slack per box bound.  The slack columns give a
trivially feasible starting basis (all paper-shaped instances have
``rhs >= 0``), so a single-phase primal simplex with Bland's rule is
enough and is fully deterministic.

A brute-force vertex enumerator over the standard-form bases serves as an
independent oracle for the simplex in tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .errors import DimensionError, OracleLimitError, SolverFailure, UsageError

#: absolute tolerance for feasibility, reduced costs, and zero detection
TOL = 1e-9

#: ratio-test tie tolerance (Bland tie-breaking among leaving rows)
_RATIO_TOL = 1e-12

_MAX_PIVOTS = 10_000


@dataclass(frozen=True)
class DenseLp:
    """Inequality-form maximization LP with box bounds.

    objective: length-n vector
    constraint_matrix: m x n
    rhs: length-m vector
    upper_bounds: length-n vector, finite and non-negative
    """

    objective: np.ndarray
    constraint_matrix: np.ndarray
    rhs: np.ndarray
    upper_bounds: np.ndarray

    def __post_init__(self):
        obj = np.asarray(self.objective, dtype=float)
        mat = np.atleast_2d(np.asarray(self.constraint_matrix, dtype=float))
        rhs = np.asarray(self.rhs, dtype=float)
        ub = np.asarray(self.upper_bounds, dtype=float)
        if obj.ndim != 1 or rhs.ndim != 1 or ub.ndim != 1:
            raise DimensionError("objective, rhs and upper_bounds must be vectors")
        m, n = mat.shape
        if obj.shape[0] != n:
            raise DimensionError(f"objective length {obj.shape[0]} != {n} columns")
        if rhs.shape[0] != m:
            raise DimensionError(f"rhs length {rhs.shape[0]} != {m} rows")
        if ub.shape[0] != n:
            raise DimensionError(f"upper_bounds length {ub.shape[0]} != {n} columns")
        if not np.all(np.isfinite(ub)) or np.any(ub < 0):
            raise DimensionError("upper_bounds must be finite and non-negative")
        object.__setattr__(self, "objective", obj)
        object.__setattr__(self, "constraint_matrix", mat)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "upper_bounds", ub)

    @property
    def n_rows(self) -> int:
        return self.constraint_matrix.shape[0]

    @property
    def n_vars(self) -> int:
        return self.constraint_matrix.shape[1]


@dataclass(frozen=True)
class StandardFormLp:
    """Equality system [A I 0; I 0 I] (y, s, z) derived from a DenseLp."""

    equality_matrix: np.ndarray
    equality_rhs: np.ndarray
    objective: np.ndarray
    n_vars: int
    n_rows: int  # inequality rows of the source LP


@dataclass(frozen=True)
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    primal: np.ndarray  # y
    resource_slacks: np.ndarray  # s
    box_slacks: np.ndarray  # z
    duals: np.ndarray  # row duals (lambda)
    gamma: np.ndarray  # box-bound duals
    objective_value: float
    basis: tuple  # standard-form column indices, row order
    primal_nonunique: bool = False
    dual_nonunique: bool = False


def to_standard_form(lp: DenseLp) -> StandardFormLp:
    """Append row slacks s and box slacks z: A y + s = rhs, y + z = ub."""
    m, n = lp.n_rows, lp.n_vars
    eq = np.zeros((m + n, 2 * n + m))
    eq[:m, :n] = lp.constraint_matrix
    eq[:m, n:n + m] = np.eye(m)
    eq[m:, :n] = np.eye(n)
    eq[m:, n + m:] = np.eye(n)
    rhs = np.concatenate([lp.rhs, lp.upper_bounds])
    obj = np.concatenate([lp.objective, np.zeros(m + n)])
    return StandardFormLp(eq, rhs, obj, n_vars=n, n_rows=m)


def _simplex(A, rhs, obj, basis, tol=TOL):
    """Primal simplex (maximization) with Bland's rule.

    ``basis`` must index a feasible starting basis.  Returns
    (basis, x_basic, row_duals, reduced, status).  Deterministic: lowest
    eligible entering index, lowest-column-index tie break on leaving.
    """
    M = A.shape[0]
    for _ in range(_MAX_PIVOTS):
        B = A[:, basis]
        xb = np.linalg.solve(B, rhs)
        lam = np.linalg.solve(B.T, obj[basis])
        reduced = obj - lam @ A
        reduced[basis] = 0.0
        improving = np.nonzero(reduced > tol)[0]
        if improving.size == 0:
            return basis, xb, lam, reduced, "optimal"
        e = improving[0]
        d = np.linalg.solve(B, A[:, e])
        pos = d > tol
        if not pos.any():
            return basis, xb, lam, reduced, "unbounded"
        ratios = np.full(M, np.inf)
        ratios[pos] = np.maximum(xb[pos], 0.0) / d[pos]
        rmin = ratios.min()
        ties = np.nonzero(ratios <= rmin + _RATIO_TOL)[0]
        leave = ties[np.argmin(basis[ties])]
        basis[leave] = e
    raise SolverFailure("pivot limit exceeded (anti-cycling exhausted)")


def _solve_standard(eq, rhs, obj, n, m, tol=TOL, start_basis=None):
    """Run simplex from the slack basis of a standard-form system.

    Lean path shared by :func:`solve` and the per-period policy LPs.
    ``start_basis`` (if given) is tried first and silently discarded when
    it is singular or infeasible for the current rhs, so warm starts can
    never change the answer, only the pivot count.
    Returns (y, s, z, lam, gamma, value, basis, reduced, xb).
    """
    basis = None
    if start_basis is not None:
        candidate = np.array(start_basis, dtype=int)
        try:
            xb0 = np.linalg.solve(eq[:, candidate], rhs)
        except np.linalg.LinAlgError:
            xb0 = None
        if xb0 is not None and np.all(xb0 >= -tol):
            basis = candidate
    if basis is None:
        basis = np.arange(n, 2 * n + m)  # s then z columns: identity basis
    basis, xb, lam_full, reduced, status = _simplex(eq, rhs, obj, basis, tol)
    if status != "optimal":
        return None, status
    x = np.zeros(2 * n + m)
    x[basis] = xb
    y = x[:n]
    s = x[n:n + m]
    z = x[n + m:]
    lam = lam_full[:m]
    gamma = lam_full[m:]
    value = float(obj[:n] @ y)
    return (y, s, z, lam, gamma, value, basis, reduced, xb), status


def solve(lp: DenseLp) -> LpSolution:
    """Solve a DenseLp to optimality.

    Requires ``rhs >= 0`` (all paper-shaped instances satisfy it); the
    slack basis is then feasible and no phase-1 is needed.
    """
    if np.any(lp.rhs < 0):
        raise UsageError("negative rhs entries are outside the model (capacities are non-negative)")
    sf = to_standard_form(lp)
    n, m = sf.n_vars, sf.n_rows
    out, status = _solve_standard(sf.equality_matrix, sf.equality_rhs, sf.objective, n, m)
    if status != "optimal":
        # cannot happen for box-bounded problems, kept for contract completeness
        empty = np.zeros(0)
        return LpSolution(status, empty, empty, empty, empty, empty, float("nan"), ())
    y, s, z, lam, gamma, value, basis, reduced, xb = out
    nonbasic = np.ones(2 * n + m, dtype=bool)
    nonbasic[basis] = False
    primal_nonunique = bool(np.any(np.abs(reduced[nonbasic]) <= TOL))
    dual_nonunique = bool(np.any(xb <= TOL))
    return LpSolution(
        status="optimal",
        primal=y,
        resource_slacks=s,
        box_slacks=z,
        duals=lam,
        gamma=gamma,
        objective_value=value,
        basis=tuple(int(b) for b in basis),
        primal_nonunique=primal_nonunique,
        dual_nonunique=dual_nonunique,
    )


def enumerate_vertices(lp: DenseLp, limit: int = 500_000):
    """Exhaustively enumerate basic feasible points of the standard form.

    Independent oracle: returns a list of ``(y, objective_value)`` pairs,
    one per basic feasible solution.  An empty list means the system is
    infeasible.  Refuses instances whose basis-candidate count exceeds
    ``limit``.
    """
    sf = to_standard_form(lp)
    eq, rhs = sf.equality_matrix, sf.equality_rhs
    M, N = eq.shape
    if comb(N, M) > limit:
        raise OracleLimitError(f"{comb(N, M)} basis candidates exceed limit {limit}")
    n = sf.n_vars
    out = []
    for cols in combinations(range(N), M):
        B = eq[:, cols]
        try:
            xb = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError:
            continue
        if np.max(np.abs(B @ xb - rhs)) > 1e-7 * (1.0 + np.max(np.abs(rhs), initial=0.0)):
            continue  # numerically singular basis
        if np.any(xb < -TOL):
            continue
        x = np.zeros(N)
        x[list(cols)] = xb
        y = x[:n]
        out.append((y, float(lp.objective @ y)))
    return out


@dataclass(frozen=True)
class NondegeneracyReport:
    nondegenerate: bool
    primal_nonzeros: int
    slack_nonzeros: int
    box_nonzeros: int
    expected: int

    @property
    def total(self) -> int:
        return self.primal_nonzeros + self.slack_nonzeros + self.box_nonzeros


def check_nondegenerate(sol: LpSolution, m: int, n: int, tol: float = TOL) -> NondegeneracyReport:
    """Count nonzeros of (y, s, z); nondegenerate iff the count is m + n."""
    if sol.status != "optimal":
        raise UsageError("nondegeneracy check requires an optimal solution")
    cy = int(np.sum(np.abs(sol.primal) > tol))
    cs = int(np.sum(np.abs(sol.resource_slacks) > tol))
    cz = int(np.sum(np.abs(sol.box_slacks) > tol))
    return NondegeneracyReport(cy + cs + cz == m + n, cy, cs, cz, m + n)


def enumerate_dual_bfs(lp: DenseLp, limit: int = 500_000):
    """Enumerate basic feasible solutions (lambda, gamma) of the dual.

    The dual of ``max obj@y, A y <= rhs, 0 <= y <= ub`` is

        min rhs@lambda + ub@gamma
        s.t. A.T lambda + gamma >= obj,  lambda, gamma >= 0.

    Enumerates bases of the equality form (with surplus variables) and
    keeps the non-negative ones.
    """
    m, n = lp.n_rows, lp.n_vars
    # columns: lambda (m), gamma (n), surplus w (n); rows: n
    eq = np.zeros((n, m + 2 * n))
    eq[:, :m] = lp.constraint_matrix.T
    eq[:, m:m + n] = np.eye(n)
    eq[:, m + n:] = -np.eye(n)
    rhs = lp.objective.copy()
    N = m + 2 * n
    if comb(N, n) > limit:
        raise OracleLimitError(f"{comb(N, n)} dual basis candidates exceed limit {limit}")
    out = []
    for cols in combinations(range(N), n):
        B = eq[:, cols]
        try:
            xb = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError:
            continue
        if np.max(np.abs(B @ xb - rhs)) > 1e-7 * (1.0 + np.max(np.abs(rhs), initial=0.0)):
            continue
        if np.any(xb < -TOL):
            continue
        x = np.zeros(N)
        x[list(cols)] = xb
        out.append((x[:m], x[m:m + n]))
    return out
