"""Structural constants of the allocation LP and its perturbation theory.

chi, sigma, delta are computed on the standard form of the deterministic
LP; L is the radius inside which any simultaneous perturbation of
(objective, columns, capacities) preserves the optimal basis and the
binding set.  lambda_bar and p_underline drive the degenerate-case
regret bound; the nondegenerate bound is a plug-in of the dual norm
and L.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, UsageError
from .lp import (DenseLp, LpSolution, TOL, check_nondegenerate,
                 enumerate_dual_bfs, solve, to_standard_form)
from .market import Market, build_dlp


@dataclass(frozen=True)
class Classification:
    """Partition of order types and resources at the DLP optimum."""

    all_accepted: tuple
    all_rejected: tuple
    partially_accepted: tuple
    binding: tuple
    nonbinding: tuple
    ambiguous: bool  # dual was non-unique; partition depends on the returned dual

    @property
    def basic_types(self) -> tuple:
        return tuple(sorted(self.all_accepted + self.partially_accepted))


@dataclass(frozen=True)
class StabilityReport:
    chi: float
    sigma: float
    delta: float
    L: float
    lambda_bar: float
    p_underline: float
    degenerate: bool
    classification: Classification

    def to_dict(self) -> dict:
        return {
            "chi": self.chi,
            "sigma": self.sigma,
            "delta": self.delta,
            "L": self.L,
            "lambda_bar": self.lambda_bar,
            "p_underline": self.p_underline,
            "degenerate": self.degenerate,
            "all_accepted": list(self.classification.all_accepted),
            "all_rejected": list(self.classification.all_rejected),
            "partially_accepted": list(self.classification.partially_accepted),
            "binding": list(self.classification.binding),
            "nonbinding": list(self.classification.nonbinding),
            "ambiguous": self.classification.ambiguous,
        }


def _type_margins(market: Market, duals: np.ndarray) -> np.ndarray:
    """Per-type accept/reject margin mu - c'lambda (max over arms for k>1)."""
    cons = market.consumption  # (n, m, k)
    margins = market.rewards - np.einsum("i,nik->nk", duals, cons)
    return margins.max(axis=1)


def classify(market: Market, rhs: np.ndarray | None = None,
             sol: LpSolution | None = None) -> Classification:
    """Partition types by dual-price margin and resources by bindingness."""
    lp = build_dlp(market, rhs)
    if sol is None:
        sol = solve(lp)
    if sol.status != "optimal":
        raise UsageError("DLP not solvable")
    margins = _type_margins(market, sol.duals)
    accepted = tuple(int(j) for j in np.nonzero(margins > TOL)[0])
    rejected = tuple(int(j) for j in np.nonzero(margins < -TOL)[0])
    partial = tuple(int(j) for j in range(market.n)
                    if j not in accepted and j not in rejected)
    row_slack = lp.rhs - lp.constraint_matrix @ sol.primal
    m = market.m  # bundle rows (k > 1) are not resources
    binding = tuple(int(i) for i in range(m) if row_slack[i] <= TOL)
    nonbinding = tuple(int(i) for i in range(m) if i not in binding)
    return Classification(accepted, rejected, partial, binding, nonbinding,
                          ambiguous=sol.dual_nonunique)


def _require_nondegenerate(market: Market, rhs=None):
    lp = build_dlp(market, rhs)
    sol = solve(lp)
    report = check_nondegenerate(sol, lp.n_rows, lp.n_vars)
    if not report.nondegenerate:
        raise DegenerateError(
            f"DLP is degenerate: {report.total} nonzeros, expected {report.expected}",
            report=report)
    return lp, sol


def compute_constants(market: Market, rhs: np.ndarray | None = None):
    """(chi, sigma, delta) of the standard-form DLP at its optimum.

    chi: min positive basic value; sigma: smallest singular value of the
    optimal basis submatrix; delta: min positive reduced cost among
    non-basic standard-form columns (minimization convention).
    """
    lp, sol = _require_nondegenerate(market, rhs)
    sf = to_standard_form(lp)
    x = np.concatenate([sol.primal, sol.resource_slacks, sol.box_slacks])
    positive = x[x > TOL]
    chi = float(positive.min())
    basis = np.asarray(sol.basis)
    A = sf.equality_matrix
    sigma = float(np.linalg.svd(A[:, basis], compute_uv=False).min())
    # reduced costs of the equivalent minimization: A_j'lam - c_j with c = -obj
    lam_full = np.linalg.solve(A[:, basis].T, sf.objective[basis])
    reduced = sf.objective - lam_full @ A  # <= 0 at a maximum
    nonbasic = np.ones(A.shape[1], dtype=bool)
    nonbasic[basis] = False
    pos_costs = -reduced[nonbasic]
    pos_costs = pos_costs[pos_costs > TOL]
    delta = float(pos_costs.min())
    return chi, sigma, delta


def compute_L(market: Market, rhs: np.ndarray | None = None) -> float:
    """Perturbation radius preserving basis and bindingness.

    Four-term min over chi, sigma, delta with the inequality-form
    dimensions n (variables) and m (rows) of the deterministic LP.
    """
    chi, sigma, delta = compute_constants(market, rhs)
    lp = build_dlp(market, rhs)
    n = lp.n_vars
    m = lp.n_rows
    root = math.sqrt(n + m)
    return min(
        min(1.0, sigma, sigma ** 2) * min(chi, delta) / (12.0 * n ** 2 * root),
        sigma * delta / (12.0 * math.sqrt(n * (n + m))),
        delta / 6.0,
        sigma * chi / (8.0 * root),
    )


def compute_lambda_bar(market: Market, rhs: np.ndarray | None = None,
                       limit: int = 500_000) -> float:
    """Max infinity-norm of the resource duals over all dual BFS."""
    lp = build_dlp(market, rhs)
    m = market.m
    best = 0.0
    for lam, _gamma in enumerate_dual_bfs(lp, limit):
        best = max(best, float(np.max(np.abs(lam[:m]), initial=0.0)))
    return best


def bound_nondegenerate(market: Market, rhs: np.ndarray | None = None) -> float:
    """Constant regret bound (48m + 4n + 12) * ||lambda*||_1 / L^2.

    The vanishing finite-horizon correction is omitted: it has no closed
    form and tends to zero with the horizon.
    """
    lp, sol = _require_nondegenerate(market, rhs)
    L = compute_L(market, rhs)
    lam1 = float(np.sum(np.abs(sol.duals[:market.m])))
    m, n = market.m, market.n
    if lam1 == 0.0:
        return 0.0
    return (48 * m + 4 * n + 12) * lam1 / L ** 2


def bound_degenerate(market: Market, T: int, lambda_bar: float | None = None) -> float:
    """Square-root-of-horizon regret bound; valid with or without degeneracy."""
    if T < 2:
        raise UsageError("bound requires T >= 2")
    if lambda_bar is None:
        lambda_bar = compute_lambda_bar(market)
    m, n = market.m, market.n
    p_under = float(market.probabilities.min())
    lead = max(1.0, lambda_bar)
    coeff = m * (math.sqrt(2.0) + math.sqrt(16.0 * n)) + n / math.sqrt(2.0 * p_under ** 2)
    return lead * coeff * math.sqrt(T) * math.sqrt(math.log(2.0 * T)) + 1 + n + m


def _solution_signature(lp: DenseLp, sol: LpSolution, m_resources: int):
    """(basis index set, binding resource set) used for invariance checks."""
    row_slack = lp.rhs - lp.constraint_matrix @ sol.primal
    binding = frozenset(int(i) for i in range(m_resources) if row_slack[i] <= TOL)
    return frozenset(sol.basis), binding


def check_perturbation_invariance(market: Market, perturbation, L: float,
                                  rhs: np.ndarray | None = None) -> bool:
    """True iff the perturbed DLP keeps the optimal basis and binding set.

    ``perturbation`` is (dC, dmu, db) applied to the aggregated
    coefficients: dC to the probability-weighted consumption matrix, dmu
    to the probability-weighted objective, db to the capacities.  The
    perturbation must lie in the stability box: sup-norm of dC and dmu
    at most L, |db_i| <= L on binding resources, db_i >= -L on
    non-binding ones (the upper side is free there).
    """
    dC, dmu, db = (np.asarray(x, dtype=float) for x in perturbation)
    lp = build_dlp(market, rhs)
    if dC.shape != lp.constraint_matrix.shape or dmu.shape != lp.objective.shape:
        raise UsageError("perturbation shapes do not match the DLP")
    if db.shape != lp.rhs.shape:
        raise UsageError("db shape does not match the DLP rhs")
    slack = 1e-12
    if np.max(np.abs(dC), initial=0.0) > L + slack or np.max(np.abs(dmu), initial=0.0) > L + slack:
        raise UsageError("coefficient perturbation outside the stability box")
    cls = classify(market, rhs)
    for i in range(market.m):
        if i in cls.binding:
            if abs(db[i]) > L + slack:
                raise UsageError(f"db[{i}] outside the two-sided box on a binding resource")
        elif db[i] < -L - slack:
            raise UsageError(f"db[{i}] below the one-sided box on a non-binding resource")
    if np.max(np.abs(db[market.m:]), initial=0.0) > L + slack:
        raise UsageError("bundle-row rhs perturbation outside the stability box")
    base_sol = solve(lp)
    perturbed = DenseLp(lp.objective + dmu, lp.constraint_matrix + dC,
                        lp.rhs + db, lp.upper_bounds)
    pert_sol = solve(perturbed)
    if pert_sol.status != "optimal":
        return False
    return (_solution_signature(lp, base_sol, market.m)
            == _solution_signature(perturbed, pert_sol, market.m))


def stability_report(market: Market, rhs: np.ndarray | None = None) -> StabilityReport:
    """All structural constants in one report; degenerate instances get
    chi/sigma/delta/L reported as 0 and flagged."""
    lp = build_dlp(market, rhs)
    sol = solve(lp)
    report = check_nondegenerate(sol, lp.n_rows, lp.n_vars)
    cls = classify(market, rhs, sol=sol)
    lam_bar = compute_lambda_bar(market, rhs)
    p_under = float(market.probabilities.min())
    if report.nondegenerate:
        chi, sigma, delta = compute_constants(market, rhs)
        L = compute_L(market, rhs)
    else:
        chi = sigma = delta = L = 0.0
    return StabilityReport(chi, sigma, delta, L, lam_bar, p_under,
                           degenerate=not report.nondegenerate,
                           classification=cls)
