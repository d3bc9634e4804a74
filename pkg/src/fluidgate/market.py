"""The stochastic input model and constructors for every LP we solve.

An order type is an atom (mu_j, c_j) of a finite-support distribution;
a market bundles n types with probabilities p, per-period average
capacity b, and horizon T.  ``bundle_size`` k > 1 means each arrival
carries k candidate arms of which at most one may be accepted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, UsageError, ValidationError
from .lp import DenseLp


@dataclass(frozen=True)
class OrderType:
    """One support atom: per-arm rewards (k,) and consumption (m, k)."""

    reward: np.ndarray
    consumption: np.ndarray

    def __post_init__(self):
        r = np.atleast_1d(np.asarray(self.reward, dtype=float))
        c = np.asarray(self.consumption, dtype=float)
        if c.ndim == 1:
            c = c[:, None]  # m resources, k = 1
        if c.ndim != 2:
            raise DimensionError("consumption must be an m x k matrix")
        if c.shape[1] != r.shape[0]:
            raise DimensionError(
                f"consumption has {c.shape[1]} arms but reward has {r.shape[0]}")
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "consumption", c)

    @property
    def k(self) -> int:
        return self.reward.shape[0]

    @property
    def m(self) -> int:
        return self.consumption.shape[0]


@dataclass(frozen=True)
class Market:
    types: tuple
    probabilities: np.ndarray
    avg_capacity: np.ndarray
    horizon: int
    allow_unnormalized: bool = False

    def __post_init__(self):
        types = tuple(self.types)
        p = np.asarray(self.probabilities, dtype=float)
        b = np.atleast_1d(np.asarray(self.avg_capacity, dtype=float))
        if not types:
            raise DimensionError("market needs at least one order type")
        k = types[0].k
        m = types[0].m
        for ot in types:
            if ot.k != k or ot.m != m:
                raise DimensionError("all order types must share m and k")
        if p.shape[0] != len(types):
            raise DimensionError("probabilities length != number of types")
        if b.shape[0] != m:
            raise DimensionError("avg_capacity length != number of resources")
        object.__setattr__(self, "types", types)
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "avg_capacity", b)
        # stacked views are hot in the per-period loop; build them once
        object.__setattr__(self, "_rewards", np.stack([t.reward for t in types]))
        object.__setattr__(self, "_consumption",
                           np.stack([t.consumption for t in types]))

    @property
    def n(self) -> int:
        return len(self.types)

    @property
    def m(self) -> int:
        return self.types[0].m

    @property
    def k(self) -> int:
        return self.types[0].k

    @property
    def total_capacity(self) -> np.ndarray:
        return self.horizon * self.avg_capacity

    # stacked views used by the LP builders and the simulator
    @property
    def rewards(self) -> np.ndarray:
        """(n, k) reward matrix."""
        return self._rewards

    @property
    def consumption(self) -> np.ndarray:
        """(n, m, k) consumption tensor."""
        return self._consumption

    @property
    def max_consumption(self) -> float:
        """Largest single consumption entry; the depletion threshold scale."""
        return float(max(np.max(t.consumption, initial=0.0) for t in self.types))

    def with_horizon(self, T: int) -> "Market":
        return Market(self.types, self.probabilities, self.avg_capacity, int(T),
                      self.allow_unnormalized)


@dataclass
class CountState:
    """Arrival counts n_j(t) after t periods."""

    counts: np.ndarray
    t: int

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(self.counts < 0):
            raise UsageError("counts must be non-negative")
        if int(self.counts.sum()) != self.t:
            raise UsageError(f"counts sum {int(self.counts.sum())} != t={self.t}")


@dataclass(frozen=True)
class RealizedSequence:
    """One realized arrival stream (0-based type indices) and its seed."""

    type_indices: np.ndarray
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "type_indices",
                           np.asarray(self.type_indices, dtype=np.int64))

    def __len__(self):
        return self.type_indices.shape[0]


def validate(market: Market) -> list:
    """Return every violated model clause (empty list = ok).

    Boundedness violations (consumption or reward entries above 1) are
    reported but tolerated downstream when ``allow_unnormalized`` is set;
    the depletion threshold scales with the max consumption instead.
    """
    v = []
    p = market.probabilities
    if np.any(p <= 0):
        v.append("probabilities must be strictly positive")
    if abs(float(p.sum()) - 1.0) > 1e-9:
        v.append(f"probabilities sum to {float(p.sum()):.6g}, not 1")
    for j, ot in enumerate(market.types):
        if np.any(ot.reward < 0):
            v.append(f"type {j}: negative reward entry")
        if np.any(ot.reward > 1):
            v.append(f"type {j}: reward entry exceeds 1 (boundedness)")
        if np.any(ot.consumption < 0):
            v.append(f"type {j}: negative consumption entry")
        if np.any(ot.consumption > 1):
            v.append(f"type {j}: consumption entry exceeds 1 (boundedness)")
    if np.any(market.avg_capacity <= 0):
        v.append("avg_capacity entries must be positive")
    if market.horizon < 1:
        v.append("horizon must be a positive integer")
    return v


def _is_boundedness(violation: str) -> bool:
    return "boundedness" in violation


def check_market(market: Market) -> None:
    """Raise ValidationError unless every violation is a tolerated one."""
    violations = validate(market)
    blocking = [x for x in violations
                if not (market.allow_unnormalized and _is_boundedness(x))]
    if blocking:
        raise ValidationError(blocking)


def _dlp_arrays(market: Market, weights: np.ndarray, rhs: np.ndarray):
    """Shared assembly for the deterministic and sampled LPs.

    k = 1: one variable per type.  k > 1: variables y_{j,l} (j-major)
    with extra simplex rows 1' y_j <= 1 below the resource rows.
    """
    n, m, k = market.n, market.m, market.k
    mu = market.rewards  # (n, k)
    cons = market.consumption  # (n, m, k)
    if k == 1:
        obj = weights * mu[:, 0]
        mat = cons[:, :, 0].T * weights  # (m, n)
        full_rhs = rhs
        ub = np.ones(n)
    else:
        obj = (weights[:, None] * mu).reshape(n * k)
        mat = np.zeros((m + n, n * k))
        for j in range(n):
            mat[:m, j * k:(j + 1) * k] = weights[j] * cons[j]
            mat[m + j, j * k:(j + 1) * k] = 1.0
        full_rhs = np.concatenate([rhs, np.ones(n)])
        ub = np.ones(n * k)
    return obj, mat, full_rhs, ub


def build_dlp(market: Market, rhs: np.ndarray | None = None) -> DenseLp:
    """Certainty-equivalent LP: expectation weights p_j, capacity rhs."""
    b = market.avg_capacity if rhs is None else np.atleast_1d(np.asarray(rhs, dtype=float))
    if b.shape[0] != market.m:
        raise DimensionError("rhs length != number of resources")
    if np.any(b < 0):
        raise UsageError("rhs must be non-negative")
    obj, mat, full_rhs, ub = _dlp_arrays(market, market.probabilities, b)
    return DenseLp(obj, mat, full_rhs, ub)


def build_sampled_lp(state: CountState, market: Market, b_t: np.ndarray) -> DenseLp:
    """Per-period LP: empirical weights n_j(t-1)/(t-1), capacity b_t."""
    if state.t < 1:
        raise UsageError("sampled LP needs at least one observed arrival (t >= 2)")
    b_t = np.atleast_1d(np.asarray(b_t, dtype=float))
    if np.any(b_t < 0):
        raise UsageError("b_t must be non-negative")
    weights = state.counts / float(state.t)
    obj, mat, full_rhs, ub = _dlp_arrays(market, weights, b_t)
    return DenseLp(obj, mat, full_rhs, ub)


def build_hindsight_lp(seq: RealizedSequence, market: Market) -> DenseLp:
    """Offline LP over the realized stream: one [0,1] variable per arrival
    (per arm for bundles), capacity T*b."""
    T = len(seq)
    if T != market.horizon:
        raise UsageError("sequence length != market horizon")
    n, m, k = market.n, market.m, market.k
    mu = market.rewards
    cons = market.consumption
    idx = seq.type_indices
    if k == 1:
        obj = mu[idx, 0]
        mat = cons[idx, :, 0].T  # (m, T)
        rhs = market.total_capacity
        ub = np.ones(T)
    else:
        obj = mu[idx].reshape(T * k)
        mat = np.zeros((m + T, T * k))
        for t in range(T):
            mat[:m, t * k:(t + 1) * k] = cons[idx[t]]
            mat[m + t, t * k:(t + 1) * k] = 1.0
        rhs = np.concatenate([market.total_capacity, np.ones(T)])
        ub = np.ones(T * k)
    return DenseLp(obj, mat, rhs, ub)


def build_hindsight_collapsed(arrival_counts: np.ndarray, market: Market) -> DenseLp:
    """Type-aggregated hindsight LP.

    Arrivals of the same type are interchangeable, so the T-variable
    offline LP collapses to one variable per type (per arm) bounded by
    the realized count.  Same optimum, n-scale instead of T-scale.
    """
    counts = np.asarray(arrival_counts, dtype=float)
    n, m, k = market.n, market.m, market.k
    mu = market.rewards
    cons = market.consumption
    if k == 1:
        obj = mu[:, 0]
        mat = cons[:, :, 0].T
        rhs = market.total_capacity
        ub = counts
    else:
        obj = mu.reshape(n * k)
        mat = np.zeros((m + n, n * k))
        for j in range(n):
            mat[:m, j * k:(j + 1) * k] = cons[j]
            mat[m + j, j * k:(j + 1) * k] = 1.0
        rhs = np.concatenate([market.total_capacity, counts])
        ub = np.repeat(counts, k)
    return DenseLp(obj, mat, rhs, ub)


# ---------------------------------------------------------------------------
# sampling

def episode_seed(base_seed: int, T: int, trial: int) -> int:
    """Stateless per-episode seed: mixes (base_seed, T, trial)."""
    ss = np.random.SeedSequence([int(base_seed), int(T), int(trial)])
    return int(ss.generate_state(1, np.uint64)[0])


def episode_rngs(seed: int):
    """Two independent counter-based streams (arrivals, decisions)."""
    words = np.random.SeedSequence([int(seed)]).generate_state(4, np.uint64)
    arrivals = np.random.Generator(np.random.Philox(key=words[0:2]))
    decisions = np.random.Generator(np.random.Philox(key=words[2:4]))
    return arrivals, decisions


def sample_arrival(market: Market, rng: np.random.Generator) -> int:
    """Draw one type index by inverse CDF over cumulative p."""
    cdf = np.cumsum(market.probabilities)
    return int(np.searchsorted(cdf, rng.random(), side="right"))


def sample_sequence(market: Market, rng: np.random.Generator, seed: int = -1) -> RealizedSequence:
    """Draw the full arrival stream for one episode (inverse CDF)."""
    cdf = np.cumsum(market.probabilities)
    u = rng.random(market.horizon)
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), market.n - 1)
    return RealizedSequence(idx, seed)


# ---------------------------------------------------------------------------
# JSON instance files

def market_to_dict(market: Market) -> dict:
    return {
        "types": [
            {"mu": t.reward.tolist(), "c": t.consumption.tolist()}
            for t in market.types
        ],
        "p": market.probabilities.tolist(),
        "b": market.avg_capacity.tolist(),
        "T": market.horizon,
        "k": market.k,
        "allow_unnormalized": market.allow_unnormalized,
    }


def market_from_dict(data: dict) -> Market:
    for key in ("types", "p", "b", "T"):
        if key not in data:
            raise ValidationError([f"missing field '{key}'"])
    k = int(data.get("k", 1))
    types = []
    for j, td in enumerate(data["types"]):
        if "mu" not in td or "c" not in td:
            raise ValidationError([f"type {j}: missing 'mu' or 'c'"])
        mu = np.atleast_1d(np.asarray(td["mu"], dtype=float))
        c = np.asarray(td["c"], dtype=float)
        if c.ndim == 1 and k == 1:
            c = c[:, None]
        types.append(OrderType(mu, c))
    market = Market(
        types=tuple(types),
        probabilities=np.asarray(data["p"], dtype=float),
        avg_capacity=np.asarray(data["b"], dtype=float),
        horizon=int(data["T"]),
        allow_unnormalized=bool(data.get("allow_unnormalized", False)),
    )
    if market.k != k:
        raise ValidationError([f"declared k={k} but types carry k={market.k}"])
    return market


def load_market(path) -> Market:
    """Load, validate (honoring allow_unnormalized), and return a Market."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError([f"JSON parse error in {path}: {exc}"]) from exc
    market = market_from_dict(data)
    check_market(market)
    return market


def save_market(market: Market, path) -> None:
    with open(path, "w") as fh:
        json.dump(market_to_dict(market), fh, indent=2)
        fh.write("\n")
