"""Brute-force optimum of the sampled chance-constrained dispatch."""

import itertools

import numpy as np

from ccdispatch import model, qp, scenario


def sample_optimum(cfg, sset, p):
    """Minimum cost over every kept set of size ceil(p*N); returns (cost, kept tuple)."""
    q = scenario.quota(p, sset.n_samples)
    best = (np.inf, None)
    W = sset.samples
    for kept in itertools.combinations(range(sset.n_samples), q):
        rhs = W[list(kept)].min(axis=0)
        sol = qp.solve(model.build_qp(cfg, rhs))
        if sol.optimal:
            cost = sol.value + cfg.storage_constant()
            if cost < best[0]:
                best = (cost, kept)
    return best


def small_instance(seed, wind, n_samples=12):
    from conftest import small_cfg
    wecs, corr = wind
    return small_cfg(), scenario.generate(wecs, corr, corr.n_farms, 2, n_samples, seed)
