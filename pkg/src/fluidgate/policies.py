"""Decision rules for the online allocation process.

Four policy kinds:

* ``adaptive_unknown`` -- re-solve the sampled LP each period with
  empirical type frequencies and the remaining average capacity.
* ``adaptive_known``   -- same, but with the true probabilities.
* ``static_fluid``     -- solve the deterministic LP once and follow its
  acceptance proportions for the whole horizon.
* ``greedy``           -- accept whenever feasible.

Acceptance is randomized-binary by default (accept with the LP
proportion as probability); ``partial`` mode accepts the fractional
amount deterministically.  Period 1 is a forced accept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .lp import TOL, _solve_standard
from .market import CountState, Market, _dlp_arrays, build_dlp
from . import lp as _lp

POLICY_KINDS = ("adaptive_unknown", "adaptive_known", "static_fluid", "greedy")
ACCEPTANCE_MODES = ("randomized_binary", "partial")
UNSEEN_RULES = ("dual_price", "always_accept")


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "adaptive_unknown"
    acceptance_mode: str = "randomized_binary"
    unseen_type_rule: str = "dual_price"

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise UsageError(f"unknown policy kind {self.kind!r}")
        if self.acceptance_mode not in ACCEPTANCE_MODES:
            raise UsageError(f"unknown acceptance mode {self.acceptance_mode!r}")
        if self.unseen_type_rule not in UNSEEN_RULES:
            raise UsageError(f"unknown unseen-type rule {self.unseen_type_rule!r}")


@dataclass
class DecisionContext:
    """Everything a policy may look at when period t's order arrives."""

    market: Market
    t: int
    remaining: np.ndarray  # B_t
    counts: CountState  # arrivals through t-1
    arriving_type: int
    rng: np.random.Generator | None = None


@dataclass(frozen=True)
class Decision:
    accepted_arm: int | None  # 0-based arm; None = reject
    amount: float  # x_t (0/1 in binary mode, fractional in partial mode)
    acceptance_probability: np.ndarray  # per-arm y*-slice used
    feasible: bool  # could the chosen arm have been served
    lp_value: float | None  # objective of the period LP, if one was solved


def _solve_weighted(market: Market, weights: np.ndarray, rhs: np.ndarray,
                    start_basis=None):
    """Solve the DLP-shaped LP for the given type weights; lean path.

    ``start_basis`` warm-starts the simplex (consecutive period LPs
    differ only slightly, so the optimal basis rarely moves).
    """
    obj, mat, full_rhs, ub = _dlp_arrays(market, weights, rhs)
    m, n = mat.shape
    eq = np.zeros((m + n, 2 * n + m))
    eq[:m, :n] = mat
    eq[:m, n:n + m] = np.eye(m)
    eq[m:, :n] = np.eye(n)
    eq[m:, n + m:] = np.eye(n)
    sf_rhs = np.concatenate([full_rhs, ub])
    sf_obj = np.concatenate([obj, np.zeros(m + n)])
    out, status = _solve_standard(eq, sf_rhs, sf_obj, n, m,
                                  start_basis=start_basis)
    if status != "optimal":
        raise _lp.SolverFailure(f"period LP ended with status {status}")
    y, _s, _z, lam, _gamma, value, basis, _reduced, _xb = out
    return y, lam[:market.m], value, basis


class PolicyEngine:
    """Episode-local policy state (cached static solution)."""

    def __init__(self, config: PolicyConfig, market: Market):
        self.config = config
        self.market = market
        self._static = None  # lazily solved fluid proportions
        self._warm_basis = None  # last optimal basis of the period LP

    # -- probabilities ------------------------------------------------------

    def _static_solution(self):
        if self._static is None:
            sol = _lp.solve(build_dlp(self.market))
            self._static = sol.primal.reshape(self.market.n, self.market.k)
        return self._static

    def _lp_probabilities(self, ctx: DecisionContext):
        """Solve the period LP, return (per-arm probs for the arriving
        type, lp objective)."""
        market = self.market
        t = ctx.t
        if t < 2:
            raise UsageError("adaptive policies solve the LP from period 2 on")
        if ctx.counts.t != t - 1:
            raise UsageError("counts must cover exactly the first t-1 arrivals")
        b_t = ctx.remaining / float(market.horizon - t + 1)
        if self.config.kind == "adaptive_known":
            weights = market.probabilities
        else:
            weights = ctx.counts.counts / float(t - 1)
        y, lam, value, basis = _solve_weighted(market, weights, b_t,
                                               start_basis=self._warm_basis)
        self._warm_basis = basis
        j = ctx.arriving_type
        k = market.k
        probs = y.reshape(market.n, k)[j].copy()
        if (self.config.kind == "adaptive_unknown"
                and ctx.counts.counts[j] == 0):
            probs = self._unseen_probabilities(ctx, lam)
        return probs, value

    def _unseen_probabilities(self, ctx: DecisionContext, lam: np.ndarray):
        """A type with empirical frequency zero has a vacuous LP column;
        fall back to the configured rule."""
        market = self.market
        j = ctx.arriving_type
        probs = np.zeros(market.k)
        if self.config.unseen_type_rule == "always_accept":
            arm = int(np.argmax(market.rewards[j]))
            probs[arm] = 1.0
            return probs
        margins = market.rewards[j] - lam @ market.types[j].consumption
        arm = int(np.argmax(margins))
        if margins[arm] >= -TOL:  # ties toward accept
            probs[arm] = 1.0
        return probs

    def acceptance_probabilities(self, ctx: DecisionContext) -> np.ndarray:
        """Per-arm acceptance probabilities before randomization (pure)."""
        kind = self.config.kind
        market = self.market
        j = ctx.arriving_type
        if kind == "greedy":
            probs = np.zeros(market.k)
            feas = self._feasible_arms(ctx)
            if feas.any():
                rewards = np.where(feas, market.rewards[j], -np.inf)
                probs[int(np.argmax(rewards))] = 1.0
            return probs
        if kind == "static_fluid":
            return self._static_solution()[j].copy()
        probs, _ = self._lp_probabilities(ctx)
        return probs

    # -- decisions ----------------------------------------------------------

    def _feasible_arms(self, ctx: DecisionContext) -> np.ndarray:
        cons = self.market.types[ctx.arriving_type].consumption  # (m, k)
        return np.all(cons <= ctx.remaining[:, None] + TOL, axis=0)

    def _forced_first(self, ctx: DecisionContext) -> Decision:
        """Period 1: accept.  Bundles take the feasible arm with the
        largest reward (ties toward the lowest arm index)."""
        market = self.market
        j = ctx.arriving_type
        feas = self._feasible_arms(ctx)
        probs = np.zeros(market.k)
        if not feas.any():
            return Decision(None, 0.0, probs, False, None)
        rewards = np.where(feas, market.rewards[j], -np.inf)
        arm = int(np.argmax(rewards))
        probs[arm] = 1.0
        return Decision(arm, 1.0, probs, True, None)

    def decide(self, ctx: DecisionContext) -> Decision:
        kind = self.config.kind
        if ctx.t == 1 and kind != "greedy":
            return self._forced_first(ctx)
        lp_value = None
        if kind in ("adaptive_unknown", "adaptive_known"):
            probs, lp_value = self._lp_probabilities(ctx)
        else:
            probs = self.acceptance_probabilities(ctx)
        if self.config.acceptance_mode == "partial" and kind != "greedy":
            return self._partial_decision(ctx, probs, lp_value)
        return self._binary_decision(ctx, probs, lp_value)

    def _binary_decision(self, ctx, probs, lp_value) -> Decision:
        # one uniform per randomized decision keeps paired-seed runs aligned
        total = float(probs.sum())
        if self.config.kind == "greedy":
            arm = int(np.argmax(probs)) if total > 0 else None
        else:
            if ctx.rng is None:
                raise UsageError("binary acceptance needs the episode rng")
            u = ctx.rng.random()
            arm = None
            if total > 0:
                edges = np.cumsum(probs)
                if u < min(total, 1.0):
                    arm = int(np.searchsorted(edges, u, side="right"))
                    arm = min(arm, probs.shape[0] - 1)
        if arm is None:
            return Decision(None, 0.0, probs, True, lp_value)
        feasible = bool(self._feasible_arms(ctx)[arm])
        if not feasible:
            return Decision(None, 0.0, probs, False, lp_value)
        return Decision(arm, 1.0, probs, True, lp_value)

    def _partial_decision(self, ctx, probs, lp_value) -> Decision:
        arm = int(np.argmax(probs))
        amount = float(probs[arm])
        if amount <= 0.0:
            return Decision(None, 0.0, probs, True, lp_value)
        cons = self.market.types[ctx.arriving_type].consumption[:, arm]
        if np.any(amount * cons > ctx.remaining + TOL):
            return Decision(None, 0.0, probs, False, lp_value)
        return Decision(arm, amount, probs, True, lp_value)


def decide(config: PolicyConfig, ctx: DecisionContext) -> Decision:
    """One-shot decision (builds a transient engine)."""
    return PolicyEngine(config, ctx.market).decide(ctx)


def acceptance_probabilities(config: PolicyConfig, ctx: DecisionContext) -> np.ndarray:
    """One-shot y*-slice for the arriving type (consumes no randomness)."""
    return PolicyEngine(config, ctx.market).acceptance_probabilities(ctx)
