"""Shared fixtures: the two reference instances and random-instance helpers."""

import numpy as np
import pytest

from fluidgate import (Market, OrderType, build_dlp, check_nondegenerate,
                       load_market, solve)
from fluidgate.cli import instance_path
from fluidgate.errors import DegenerateError
from fluidgate.lp import DenseLp
from fluidgate.stability import compute_constants


@pytest.fixture(scope="session")
def nd_market():
    return load_market(instance_path("paper_nondegenerate"))


@pytest.fixture(scope="session")
def dg_market():
    return load_market(instance_path("paper_degenerate"))


def random_dense_lp(rng: np.random.Generator) -> DenseLp:
    """Small random inequality LP with non-negative data (model-shaped)."""
    m = int(rng.integers(1, 4))
    n = int(rng.integers(2, 5))
    obj = rng.uniform(0.05, 1.0, n)
    mat = rng.uniform(0.0, 1.0, (m, n))
    rhs = rng.uniform(0.1, 1.5, m)
    ub = rng.uniform(0.5, 1.5, n)
    return DenseLp(obj, mat, rhs, ub)


def random_market(rng: np.random.Generator, n=None, m=None, T=1000) -> Market:
    """Random k=1 market with normalized data."""
    n = n or int(rng.integers(2, 5))
    m = m or int(rng.integers(1, 3))
    types = tuple(
        OrderType(rng.uniform(0.2, 1.0, 1), rng.uniform(0.05, 1.0, (m, 1)))
        for _ in range(n)
    )
    p = rng.dirichlet(np.ones(n) * 5.0)
    p = np.maximum(p, 0.02)
    p = p / p.sum()
    mean_cons = sum(pj * t.consumption[:, 0] for pj, t in zip(p, types))
    b = mean_cons * rng.uniform(0.3, 0.9, m)
    return Market(types, p, b, T)


def random_nondegenerate_market(rng: np.random.Generator, T=1000,
                                max_tries=200) -> Market:
    """Rejection-sample a market whose DLP is nondegenerate with positive
    stability constants."""
    for _ in range(max_tries):
        market = random_market(rng, T=T)
        lp = build_dlp(market)
        sol = solve(lp)
        if not check_nondegenerate(sol, lp.n_rows, lp.n_vars).nondegenerate:
            continue
        try:
            chi, sigma, delta = compute_constants(market)
        except DegenerateError:
            continue
        if min(chi, sigma, delta) > 1e-8:
            return market
    raise RuntimeError("could not sample a nondegenerate market")
