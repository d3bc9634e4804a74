"""Episode simulation, regret benchmarks, and Monte Carlo aggregation.

One episode runs the online process over the full horizon, tracking the
capacity path, arrival/acceptance counts, the depletion stopping time
tau, and (for nondegenerate markets) the first exit tau_S of the
average-capacity process from the stability box.  Batches aggregate
fluid and hindsight regret over a horizon grid with 99% confidence
intervals and a log-log slope fit; everything is reproducible from
(market, policy, base seed) and independent of worker scheduling.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, UsageError
from .lp import solve
from .market import (CountState, Market, build_dlp, build_hindsight_collapsed,
                     episode_rngs, episode_seed, sample_sequence)
from .policies import Decision, DecisionContext, PolicyConfig, PolicyEngine
from .stability import classify, compute_L

#: 99% two-sided normal quantile, matching the reported confidence intervals
Z99 = 2.5758293035489004


@dataclass(frozen=True)
class StoppingBox:
    """Stability box for tau_S: two-sided on binding resources, lower
    bound only on non-binding ones."""

    L: float
    binding: np.ndarray  # boolean mask over resources


@dataclass(frozen=True)
class EpisodeResult:
    seed: int
    horizon: int
    reward_to_tau: float
    reward_to_T: float
    tau: int
    tau_S: int  # T+1 if the box is never left; -1 if not tracked
    accepted_at_tau: np.ndarray  # (n, k) acceptance mass through tau
    accepted_at_T: np.ndarray
    arrival_counts: np.ndarray  # (n,) n_j(T)
    remaining_at_tau: np.ndarray  # capacity left after period tau
    remaining_final: np.ndarray  # capacity left after period T
    hindsight_value: float | None


@dataclass(frozen=True)
class EpisodeStep:
    t: int
    arriving_type: int
    probabilities: np.ndarray
    amount: float
    remaining_before: np.ndarray  # B_t
    avg_capacity: np.ndarray  # b_t
    expected_consumption_gap: float | None
    lp_value: float | None


def stopping_threshold(market: Market) -> float:
    """Depletion threshold: the largest single consumption entry, so any
    order can still be served while every B_i stays above it."""
    return market.max_consumption


def stopping_box(market: Market) -> StoppingBox | None:
    """Stability box from L and the binding set; None when degenerate."""
    try:
        L = compute_L(market)
    except DegenerateError:
        return None
    cls = classify(market)
    mask = np.zeros(market.m, dtype=bool)
    mask[list(cls.binding)] = True
    return StoppingBox(L, mask)


def _box_exited(b_t: np.ndarray, b: np.ndarray, box: StoppingBox) -> bool:
    dev = b_t - b
    if np.any(np.abs(dev[box.binding]) > box.L):
        return True
    return bool(np.any(dev[~box.binding] < -box.L))


def run_episode(market: Market, policy_config: PolicyConfig, seed: int,
                trace: bool = False, box: StoppingBox | None = None,
                compute_hindsight: bool = True):
    """Simulate one full horizon.

    Returns an EpisodeResult, or (EpisodeResult, list[EpisodeStep]) when
    ``trace`` is set.  Deterministic in (market, policy_config, seed).
    ``box`` enables tau_S tracking; pass ``stopping_box(market)`` once
    per market to avoid recomputing it for every episode.
    """
    T = market.horizon
    n, m, k = market.n, market.m, market.k
    theta = stopping_threshold(market)
    arr_rng, dec_rng = episode_rngs(seed)
    seq = sample_sequence(market, arr_rng, seed)
    types = seq.type_indices
    cons = market.consumption  # (n, m, k)
    mu = market.rewards  # (n, k)
    b = market.avg_capacity

    engine = PolicyEngine(policy_config, market)
    B = T * b.astype(float).copy()
    counts = np.zeros(n, dtype=np.int64)
    accepted = np.zeros((n, k))
    total_reward = 0.0
    tau = None
    tau_S = None if box is not None else -1
    reward_at_tau = 0.0
    accepted_at_tau = None
    remaining_at_tau = None
    steps = [] if trace else None

    for t in range(1, T + 1):
        if tau is None and np.any(B <= theta + 1e-9):
            tau = t - 1
            reward_at_tau = total_reward
            accepted_at_tau = accepted.copy()
            remaining_at_tau = B.copy()
        b_t = B / float(T - t + 1)
        if box is not None and tau_S is None and _box_exited(b_t, b, box):
            tau_S = t
        j = int(types[t - 1])
        ctx = DecisionContext(market, t, B, CountState(counts.copy(), t - 1),
                              j, dec_rng)
        decision = engine.decide(ctx)
        if decision.amount > 0.0:
            arm = decision.accepted_arm
            consumed = decision.amount * cons[j, :, arm]
            B = B - consumed
            if np.any(B < -1e-9):
                raise UsageError(
                    f"no-shorting violated at t={t}: remaining {B}")
            total_reward += decision.amount * float(mu[j, arm])
            accepted[j, arm] += decision.amount
        counts[j] += 1
        if trace:
            gap = None
            if decision.acceptance_probability.size and t >= 2:
                gap = _consumption_gap(market, ctx.counts.counts, t - 1, b_t,
                                       policy_config, engine)
            steps.append(EpisodeStep(t, j, decision.acceptance_probability,
                                     decision.amount, B + (decision.amount *
                                     cons[j, :, decision.accepted_arm] if
                                     decision.amount > 0 else 0.0), b_t, gap,
                                     decision.lp_value))

    if tau is None:
        tau = T
        reward_at_tau = total_reward
        accepted_at_tau = accepted.copy()
        remaining_at_tau = B.copy()
    if tau_S is None:
        tau_S = T + 1

    hindsight = None
    if compute_hindsight:
        hs = solve(build_hindsight_collapsed(counts, market))
        hindsight = hs.objective_value

    result = EpisodeResult(
        seed=seed, horizon=T,
        reward_to_tau=reward_at_tau, reward_to_T=total_reward,
        tau=int(tau), tau_S=int(tau_S),
        accepted_at_tau=accepted_at_tau, accepted_at_T=accepted,
        arrival_counts=counts,
        remaining_at_tau=remaining_at_tau, remaining_final=B,
        hindsight_value=hindsight,
    )
    return (result, steps) if trace else result


def _consumption_gap(market, counts, t_obs, b_t, policy_config, engine):
    """||sum_j p_hat_j c_j y*_j - b_t||_inf for the trace log (k = 1)."""
    if market.k != 1 or policy_config.kind not in ("adaptive_unknown", "adaptive_known"):
        return None
    if policy_config.kind == "adaptive_known":
        weights = market.probabilities
    else:
        weights = counts / float(t_obs)
    from .policies import _solve_weighted
    y, _lam, _value, _basis = _solve_weighted(market, weights, b_t)
    expected = (market.consumption[:, :, 0].T * weights) @ y
    return float(np.max(np.abs(expected - b_t)))


# ---------------------------------------------------------------------------
# batches

@dataclass(frozen=True)
class HorizonSummary:
    T: int
    trials: int
    opt_fluid: float  # T * OPT_D
    mean_regret_fluid: float
    std_regret_fluid: float
    ci99_fluid: tuple
    mean_regret_hindsight: float
    ci99_hindsight: tuple
    mean_hindsight_value: float
    mean_tau: float
    mean_tau_s: float


@dataclass(frozen=True)
class RegretReport:
    policy: PolicyConfig
    base_seed: int
    rows: tuple  # HorizonSummary per T
    slope: float | None
    intercept: float | None
    residual: float | None
    episodes: tuple  # (T, trial, EpisodeResult) in grid order


def _mean_ci(values: np.ndarray):
    mean = float(values.mean())
    if values.size < 2:
        return mean, 0.0, (mean, mean)
    std = float(values.std(ddof=1))
    half = Z99 * std / math.sqrt(values.size)
    return mean, std, (mean - half, mean + half)


def _episode_task(args):
    market_dict, config, T, trials_lo, trials_hi, base_seed, box, hindsight = args
    from .market import market_from_dict
    market = market_from_dict(market_dict).with_horizon(T)
    out = []
    for trial in range(trials_lo, trials_hi):
        seed = episode_seed(base_seed, T, trial)
        out.append((T, trial, run_episode(market, config, seed, box=box,
                                          compute_hindsight=hindsight)))
    return out


def _worker_count(workers=None) -> int:
    if workers is not None:
        return max(1, int(workers))
    cap = os.environ.get("FLUIDGATE_THREADS")
    avail = os.cpu_count() or 1
    if cap:
        return max(1, min(int(cap), avail))
    return avail


def _run_grid(market: Market, config: PolicyConfig, T_grid, trials, base_seed,
              workers=None, compute_hindsight=True):
    """Episodes for every (T, trial); order-independent assembly."""
    box = stopping_box(market)
    from .market import market_to_dict
    mdict = market_to_dict(market)
    tasks = []
    chunk = max(1, trials // 16 or 1)
    for T in T_grid:
        lo = 0
        while lo < trials:
            hi = min(lo + chunk, trials)
            tasks.append((mdict, config, int(T), lo, hi, base_seed, box,
                          compute_hindsight))
            lo = hi
    nworkers = _worker_count(workers)
    results = {}
    if nworkers == 1 or len(tasks) == 1:
        for task in tasks:
            for T, trial, res in _episode_task(task):
                results[(T, trial)] = res
    else:
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            for batch in pool.map(_episode_task, tasks):
                for T, trial, res in batch:
                    results[(T, trial)] = res
    return [(T, trial, results[(int(T), trial)])
            for T in T_grid for trial in range(trials)]


def run_batch(market: Market, policy_config: PolicyConfig, T_grid, trials: int,
              base_seed: int, workers=None) -> RegretReport:
    """Monte Carlo sweep over a horizon grid.

    Per-episode seeds are stateless functions of (base_seed, T, trial),
    so the aggregate is identical for any worker count.
    """
    if trials < 2:
        raise UsageError("run_batch needs at least 2 trials (CI undefined)")
    T_grid = [int(T) for T in T_grid]
    opt_d = solve(build_dlp(market)).objective_value
    episodes = _run_grid(market, policy_config, T_grid, trials, base_seed,
                         workers)
    rows = []
    means = []
    for T in T_grid:
        rs = [r for (TT, _tr, r) in episodes if TT == T]
        fluid = np.array([T * opt_d - r.reward_to_tau for r in rs])
        hind_vals = np.array([r.hindsight_value for r in rs], dtype=float)
        hind = hind_vals - np.array([r.reward_to_tau for r in rs])
        mean_f, std_f, ci_f = _mean_ci(fluid)
        mean_h, _stdh, ci_h = _mean_ci(hind)
        rows.append(HorizonSummary(
            T=T, trials=trials, opt_fluid=T * opt_d,
            mean_regret_fluid=mean_f, std_regret_fluid=std_f, ci99_fluid=ci_f,
            mean_regret_hindsight=mean_h, ci99_hindsight=ci_h,
            mean_hindsight_value=float(hind_vals.mean()),
            mean_tau=float(np.mean([r.tau for r in rs])),
            mean_tau_s=float(np.mean([r.tau_S for r in rs])),
        ))
        means.append((T, mean_f))
    slope = intercept = residual = None
    if len(T_grid) >= 3:
        try:
            fit = fit_loglog_slope(means)
            slope, intercept, residual = fit.slope, fit.intercept, fit.residual
        except UsageError:
            pass
    return RegretReport(policy_config, base_seed, tuple(rows), slope,
                        intercept, residual, tuple(episodes))


# ---------------------------------------------------------------------------
# diagnostics

@dataclass(frozen=True)
class DecompositionReport:
    T: int
    trials: int
    term_basic: float
    term_rejected: float
    term_leftover: float
    total_rhs: float
    total_lhs: float
    se_lhs: float
    se_terms: tuple
    mean_diff: float  # lhs - rhs, paired per trial
    se_diff: float


def estimate_decomposition(market: Market, policy_config: PolicyConfig, T: int,
                           trials: int, base_seed: int,
                           workers=None) -> DecompositionReport:
    """Monte Carlo estimate of the three-term regret decomposition.

    Requires a nondegenerate market (the dual price must be unique).
    """
    market = market.with_horizon(T)
    lp = build_dlp(market)
    sol = solve(lp)
    from .lp import check_nondegenerate
    if not check_nondegenerate(sol, lp.n_rows, lp.n_vars).nondegenerate:
        raise DegenerateError("decomposition requires a unique dual price")
    cls = classify(market, sol=sol)
    lam = sol.duals[:market.m]
    # per-(type, arm) margins mu - c'lambda
    margins = market.rewards - np.einsum("i,nik->nk", lam, market.consumption)
    basic = set(cls.basic_types)
    rejected = set(cls.all_rejected)
    opt_d = sol.objective_value

    episodes = _run_grid(market, policy_config, [T], trials, base_seed,
                         workers, compute_hindsight=False)
    lhs, t_basic, t_rej, t_left = [], [], [], []
    for _T, _trial, r in episodes:
        lhs.append(T * opt_d - r.reward_to_tau)
        tb = 0.0
        for j in basic:
            best = margins[j].max()
            tb += best * r.arrival_counts[j] - float(margins[j] @ r.accepted_at_tau[j])
        t_basic.append(tb)
        tr = 0.0
        for j in rejected:
            tr += float((-margins[j]) @ r.accepted_at_tau[j])
        t_rej.append(tr)
        t_left.append(float(lam @ r.remaining_at_tau))
    lhs = np.array(lhs)
    t_basic = np.array(t_basic)
    t_rej = np.array(t_rej)
    t_left = np.array(t_left)
    rhs = t_basic + t_rej + t_left
    diff = lhs - rhs

    def se(x):
        return float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0

    return DecompositionReport(
        T=T, trials=trials,
        term_basic=float(t_basic.mean()), term_rejected=float(t_rej.mean()),
        term_leftover=float(t_left.mean()),
        total_rhs=float(rhs.mean()), total_lhs=float(lhs.mean()),
        se_lhs=se(lhs), se_terms=(se(t_basic), se(t_rej), se(t_left)),
        mean_diff=float(diff.mean()), se_diff=se(diff),
    )


@dataclass(frozen=True)
class PairedReport:
    T: int
    trials: int
    mean_regret_known: float
    mean_regret_unknown: float
    mean_diff: float  # unknown - known, paired by seed
    se_diff: float
    std_diff: float
    diffs: np.ndarray  # per-trial differences (histogram raw data)


def compare_known_unknown(market: Market, T: int, trials: int, base_seed: int,
                          workers=None,
                          base_config: PolicyConfig | None = None) -> PairedReport:
    """Paired (common random numbers) comparison of the adaptive policy
    with and without distribution knowledge."""
    market = market.with_horizon(T)
    if base_config is None:
        base_config = PolicyConfig()
    unknown = PolicyConfig("adaptive_unknown", base_config.acceptance_mode,
                           base_config.unseen_type_rule)
    known = PolicyConfig("adaptive_known", base_config.acceptance_mode,
                         base_config.unseen_type_rule)
    opt_d = solve(build_dlp(market)).objective_value
    eps_u = _run_grid(market, unknown, [T], trials, base_seed, workers,
                      compute_hindsight=False)
    eps_k = _run_grid(market, known, [T], trials, base_seed, workers,
                      compute_hindsight=False)
    reg_u = np.array([T * opt_d - r.reward_to_tau for _T, _t, r in eps_u])
    reg_k = np.array([T * opt_d - r.reward_to_tau for _T, _t, r in eps_k])
    diffs = reg_u - reg_k
    se = float(diffs.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return PairedReport(T, trials, float(reg_k.mean()), float(reg_u.mean()),
                        float(diffs.mean()), se,
                        float(diffs.std(ddof=1)) if trials > 1 else 0.0, diffs)


# ---------------------------------------------------------------------------
# slope fit

@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    residual: float  # RMS residual on the log-log scale
    points_used: int


def fit_loglog_slope(points) -> SlopeFit:
    """Least squares on (log T, log mean_regret); non-positive values are
    dropped with a warning."""
    pts = [(float(T), float(v)) for T, v in points]
    kept = [(T, v) for T, v in pts if v > 0 and T > 0]
    if len(kept) < len(pts):
        warnings.warn(f"dropped {len(pts) - len(kept)} non-positive point(s) "
                      "from the log-log fit")
    if len(kept) < 2:
        raise UsageError("log-log fit needs at least 2 positive points")
    x = np.log([T for T, _ in kept])
    y = np.log([v for _, v in kept])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return SlopeFit(float(slope), float(intercept), resid, len(kept))
