"""Shared fixtures: one small simulated dataset and a short reusable fit."""

import numpy as np
import pytest

from curemc3 import (
    Mc3Config,
    SurvivalDataset,
    Theta,
    promotion_spec,
    run_mc3,
    simulate_dataset,
)

TRUE_BETA = np.array([0.5, -0.8, 0.6])
TRUE_THETA = Theta(beta=TRUE_BETA, gamma=-0.5, lam=1.0, alpha=np.array([1.2, 0.9]))


def make_design(n, rng):
    """Intercept, one standard-normal covariate, one balanced 0/1 factor."""
    z = rng.standard_normal(n)
    u = (rng.random(n) < 0.5).astype(float)
    return np.column_stack([np.ones(n), z, u])


def make_dataset(n, seed, censoring_rate=0.15):
    spec = promotion_spec("weibull")
    rng = np.random.default_rng(seed)
    X = make_design(n, rng)
    sim = simulate_dataset(spec, TRUE_THETA, X, censoring_rate, rng)
    data = SurvivalDataset(sim["y"], sim["delta"], X)
    return data, sim["true_status"], spec


@pytest.fixture(scope="session")
def small_fit():
    """A 600-cycle two-chain fit on 150 simulated subjects.

    Shared across test modules; everything downstream treats it read-only.
    """
    data, true_status, spec = make_dataset(150, seed=7)
    cfg = Mc3Config(
        mcmc_cycles=600,
        n_chains=2,
        sweeps_per_cycle=2,
        mala_probability=0.15,
        seed=23,
    )
    fit = run_mc3(data, spec, cfg=cfg)
    return fit, data, spec, true_status
