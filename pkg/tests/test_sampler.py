"""Sampler mechanics: ladder, kernels, MALA, swaps, reproducibility."""

import math

import numpy as np
import pytest
from scipy import stats

from curemc3 import (
    ConfigError,
    GradientUnavailable,
    Mc3Config,
    PriorConfig,
    SurvivalDataset,
    Theta,
    complete_log_likelihood,
    default_temperatures,
    full_latent,
    latent_susceptible_probs,
    log_prior,
    mala_step,
    numeric_gradient,
    observed_log_likelihood,
    promotion_spec,
    run_mc3,
)
from curemc3 import _kernels
from curemc3.sampler import ChainState, make_context, swap_move

from conftest import make_dataset

WEI = promotion_spec("weibull")

# frozen: mpmath (1.001)^{-(c^{d0}-1)} at 50 digits
LADDER_C4 = (1.0, 0.96949059005330555, 0.78515111180848692, 0.35969859268948977)
LADDER_C5 = (
    1.0,
    0.98974439596806327,
    0.95528791299421372,
    0.88078956370225735,
    0.7570171764031492,
)


def test_ladder_frozen_values():
    got4 = default_temperatures(4, 0.001)
    np.testing.assert_allclose(got4, LADDER_C4, rtol=5e-13)
    got5 = default_temperatures(5, 0.001)
    np.testing.assert_allclose(got5, LADDER_C5, rtol=5e-13)


def test_ladder_formula_and_regimes():
    # d0 = 5 through C=4, 3.5 for 5..8, 3 for 9 and beyond
    for C, d0 in ((2, 5.0), (4, 5.0), (5, 3.5), (8, 3.5), (9, 3.0), (12, 3.0)):
        got = default_temperatures(C, 0.001)
        want = [(1.001) ** -((c + 1) ** d0 - 1.0) for c in range(C)]
        np.testing.assert_allclose(got, want, rtol=1e-12)
        assert got[0] == 1.0
        assert np.all(np.diff(got) < 0)
    assert default_temperatures(1, 0.001) == (1.0,)


def test_config_validation():
    with pytest.raises(ConfigError):
        Mc3Config(mcmc_cycles=0)
    with pytest.raises(ConfigError):
        Mc3Config(n_chains=0)
    with pytest.raises(ConfigError):
        Mc3Config(mala_probability=1.5)
    with pytest.raises(ConfigError):
        Mc3Config(mala_tau=0.0)
    with pytest.raises(ConfigError):
        Mc3Config(temperatures=(1.0, 0.5), n_chains=3)
    with pytest.raises(ConfigError):
        Mc3Config(temperatures=(0.9, 0.5), n_chains=2)  # cold chain must be heat 1
    with pytest.raises(ConfigError):
        Mc3Config(temperatures=(1.0, 1.5), n_chains=2)


def _tiny_context(n=30, seed=3, spec=WEI):
    data, _, _ = make_dataset(n, seed=seed)
    return make_context(data, spec, PriorConfig()), data


def test_chain_initial_state_pins():
    ctx, _ = _tiny_context()
    state = ChainState(ctx, 1.0, np.random.default_rng(0))
    np.testing.assert_array_equal(state.beta, np.zeros(3))
    assert state.lam == 1.0
    assert abs(state.gamma) == 0.1  # sign is the chain rng's first decision
    med = stats.invgamma.ppf(0.5, 2.1, scale=1.1)
    np.testing.assert_allclose(state.comp, [med, med], rtol=1e-12)
    assert np.all(state.latent == 1)
    assert math.isfinite(state.cll) and math.isfinite(state.lp)


def test_chain_initial_state_mixture_weights():
    data, _, _ = make_dataset(25, seed=9)
    spec = promotion_spec("gamma_mixture", n_components=3)
    ctx = make_context(data, spec, PriorConfig())
    state = ChainState(ctx, 1.0, np.random.default_rng(1))
    np.testing.assert_allclose(state.w, np.full(3, 1.0 / 3.0), rtol=1e-15)
    assert state.alpha_natural().shape == (3 + 6,)


def test_kernels_match_reference_model():
    """The compiled likelihood kernels agree with the numpy formulas."""
    ctx, data = _tiny_context(n=40, seed=13)
    rng = np.random.default_rng(8)
    for _ in range(25):
        theta = Theta(
            beta=rng.normal(0.0, 0.4, size=3),
            gamma=float(rng.uniform(-1.0, 1.0)),
            lam=float(np.exp(rng.normal(0.0, 0.2))),
            alpha=np.exp(rng.normal(0.0, 0.2, size=2)),
        )
        eta = data.X @ theta.beta
        th = np.exp(eta)
        logf, logF = ctx.family_eval(theta.alpha)
        ll_kernel = _kernels.observed_ll(
            theta.gamma, theta.lam, eta, th, logf, logF, data.delta
        )
        assert ll_kernel == pytest.approx(
            observed_log_likelihood(theta, data, WEI), rel=1e-12, abs=1e-10
        )
        cen_lat = (rng.random(data.n_censored) < 0.5).astype(np.uint8)
        lat = full_latent(data, cen_lat)
        cll_kernel = _kernels.complete_ll(
            theta.gamma, theta.lam, eta, th, logf, logF, data.delta, lat
        )
        assert cll_kernel == pytest.approx(
            complete_log_likelihood(theta, data, lat, WEI), rel=1e-12, abs=1e-10
        )
        probs = np.empty(data.n)  # full length: events are pinned to 1.0
        _kernels.latent_probs(
            theta.gamma, theta.lam, eta, th, logf, logF, data.delta, 0.7, probs
        )
        assert np.all(probs[data.delta == 1] == 1.0)
        np.testing.assert_allclose(
            probs[data.delta == 0],
            latent_susceptible_probs(theta, data, WEI, heat=0.7),
            rtol=1e-10,
            atol=1e-12,
        )


def test_gibbs_and_cll_fused_kernel_consistency():
    """The fused draw returns the same cll as recomputing from its output."""
    ctx, data = _tiny_context(n=35, seed=4)
    state = ChainState(ctx, 0.8, np.random.default_rng(2))
    u = np.random.default_rng(3).random(data.n_censored)
    latent = state.latent.copy()
    cll = _kernels.gibbs_and_cll(
        state.gamma, state.lam, state.eta, state.th, state.logf, state.logF,
        ctx.delta, 0.8, u, latent,
    )
    direct = _kernels.complete_ll(
        state.gamma, state.lam, state.eta, state.th, state.logf, state.logF,
        ctx.delta, latent,
    )
    assert cll == pytest.approx(direct, rel=1e-13)
    # and the indicator draw itself matches the tempered probabilities
    probs = latent_susceptible_probs(state.theta(), data, WEI, heat=0.8)
    cen_idx = np.flatnonzero(data.delta == 0)
    np.testing.assert_array_equal(latent[cen_idx], (u < probs).astype(np.uint8))


def test_swap_move_equal_heats_always_accepts():
    ctx, _ = _tiny_context(n=20, seed=5)
    rng = np.random.default_rng(7)
    states = [ChainState(ctx, 1.0, np.random.default_rng(i)) for i in range(3)]
    for s in states:
        s.heat = 1.0
    attempts = np.zeros(2, dtype=np.int64)
    accepts = np.zeros(2, dtype=np.int64)
    for _ in range(50):
        swap_move(states, rng, attempts, accepts)
    assert attempts.sum() == 50
    assert accepts.sum() == attempts.sum()


def test_swap_move_exchanges_full_payload():
    ctx, _ = _tiny_context(n=20, seed=6)
    a = ChainState(ctx, 1.0, np.random.default_rng(10))
    b = ChainState(ctx, 0.5, np.random.default_rng(11))
    b.beta = b.beta + 1.0
    b.refresh(ctx)
    beta_a, beta_b = a.beta.copy(), b.beta.copy()
    cll_a, cll_b = a.cll, b.cll
    a.swap_payload_with(b)
    np.testing.assert_array_equal(a.beta, beta_b)
    np.testing.assert_array_equal(b.beta, beta_a)
    assert (a.cll, b.cll) == (cll_b, cll_a)
    assert (a.heat, b.heat) == (1.0, 0.5)  # heats stay with the slots


def test_numeric_gradient_matches_high_order_stencil():
    def f(z):
        return float(-0.5 * z @ z + np.sin(z[0]) * z[1])

    z = np.array([0.4, -1.2, 2.0])
    grad = numeric_gradient(f, z, fd_step=1e-6)

    want = []
    for j in range(3):
        h = 1e-4 * max(1.0, abs(z[j]))
        def at(dz, j=j):
            zz = z.copy()
            zz[j] += dz
            return f(zz)
        want.append((-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h))
    np.testing.assert_allclose(grad, want, rtol=1e-7, atol=1e-9)


def test_numeric_gradient_unavailable():
    def f(z):
        return float("nan")

    with pytest.raises(GradientUnavailable):
        numeric_gradient(f, np.array([0.0]))


def test_mala_step_standard_normal_moments():
    """MALA on a standard normal: mean/variance within 4 SE of the truth."""

    def logpi(z):
        return float(-0.5 * z @ z)

    def grad(z):
        return -z

    rng = np.random.default_rng(123)
    z = np.zeros(1)
    lp = logpi(z)
    draws = np.empty(10000)
    accepted = 0
    for i in range(draws.shape[0]):
        z, lp, acc = mala_step(z, lp, logpi, grad, 0.5, rng)
        accepted += acc
        draws[i] = z[0]
    draws = draws[2000:]
    m = draws.shape[0]
    # batch-means standard errors absorb the autocorrelation
    batches = draws.reshape(40, -1).mean(axis=1)
    se_mean = batches.std(ddof=1) / math.sqrt(40)
    assert abs(draws.mean()) < 4 * se_mean
    b2 = (draws**2).reshape(40, -1).mean(axis=1)
    se_var = b2.std(ddof=1) / math.sqrt(40)
    assert abs((draws**2).mean() - 1.0) < 4 * se_var
    assert 0.3 < accepted / 10000 < 0.95


def test_mala_acceptance_approaches_one_as_tau_shrinks():
    def logpi(z):
        return float(-0.5 * z @ z)

    def grad(z):
        return -z

    rates = []
    for tau in (2.0, 0.5, 1e-2, 1e-6):
        rng = np.random.default_rng(321)
        z = np.array([0.3])
        lp = logpi(z)
        acc = 0
        for _ in range(2000):
            z, lp, ok = mala_step(z, lp, logpi, grad, tau, rng)
            acc += ok
        rates.append(acc / 2000)
    assert rates[0] < rates[1] < rates[2] <= rates[3]
    assert rates[3] > 0.999


def test_mala_step_rejects_on_gradient_failure():
    def logpi(z):
        return float(-0.5 * z @ z)

    calls = {"n": 0}

    def grad(z):
        calls["n"] += 1
        if calls["n"] > 1:
            raise GradientUnavailable("forced")
        return -z

    rng = np.random.default_rng(1)
    z0 = np.array([0.5])
    z, lp, acc = mala_step(z0, logpi(z0), logpi, grad, 0.3, rng)
    assert not acc
    np.testing.assert_array_equal(z, z0)


def test_grad_z_matches_wide_stencil():
    """Sampler's packed-space gradient vs a 4th-order stencil of the target."""
    from curemc3.sampler import _ZEval, _grad_z, _pack_z

    ctx, _ = _tiny_context(n=5, seed=21)
    state = ChainState(ctx, 1.0, np.random.default_rng(2))
    z0 = _pack_z(state, ctx)
    got = _grad_z(ctx, state, state.latent, state.heat, z0, 1e-6)

    def target(z):
        return _ZEval(ctx, state.latent, state.heat, z).target

    want = []
    for j in range(z0.shape[0]):
        h = 1e-4 * max(1.0, abs(z0[j]))
        def at(dz, j=j):
            zz = z0.copy()
            zz[j] += dz
            return target(zz)
        want.append((-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h))
    np.testing.assert_allclose(got, want, rtol=1e-4, atol=1e-6)


@pytest.fixture(scope="module")
def quick_fit_pair():
    data, _, spec = make_dataset(60, seed=17)
    base = dict(mcmc_cycles=120, n_chains=2, sweeps_per_cycle=2, seed=5)
    fit1 = run_mc3(data, spec, cfg=Mc3Config(threads=1, **base))
    fit2 = run_mc3(data, spec, cfg=Mc3Config(threads=2, **base))
    return fit1, fit2, data, spec


def test_thread_count_does_not_change_samples(quick_fit_pair):
    fit1, fit2, _, _ = quick_fit_pair
    np.testing.assert_array_equal(fit1.samples, fit2.samples)
    np.testing.assert_array_equal(fit1.latent_draws, fit2.latent_draws)
    np.testing.assert_array_equal(fit1.complete_ll_trace, fit2.complete_ll_trace)


def test_different_seed_changes_samples(quick_fit_pair):
    fit1, _, data, spec = quick_fit_pair
    fit3 = run_mc3(
        data,
        spec,
        cfg=Mc3Config(mcmc_cycles=120, n_chains=2, sweeps_per_cycle=2, seed=6),
    )
    assert not np.array_equal(fit1.samples, fit3.samples)


def test_fit_result_contract(quick_fit_pair):
    fit, _, data, spec = quick_fit_pair
    m = 120
    assert fit.samples.shape == (m, 2 + spec.d + data.k)
    assert fit.columns == (
        "g_mcmc",
        "lambda_mcmc",
        "a1_mcmc",
        "a2_mcmc",
        "b0_mcmc",
        "b1_mcmc",
        "b2_mcmc",
    )
    assert fit.latent_draws.shape == (m, data.n_censored)
    assert fit.censored_index.shape == (data.n_censored,)
    np.testing.assert_array_equal(fit.censored_index, np.flatnonzero(data.delta == 0))
    assert fit.npar == spec.d + data.k + 2
    assert fit.default_burn_in() == m // 3
    assert fit.temperatures[0] == 1.0
    assert fit.n_obs == data.n
    # the MAP index maximizes the recorded log posterior trace
    trace = fit.observed_loglik + fit.log_prior_trace
    assert fit.map_index == int(np.argmax(trace))
    np.testing.assert_array_equal(fit.log_posterior_trace, trace)
    # BIC/AIC recompute from the MAP observed log likelihood
    ll_map = fit.observed_loglik[fit.map_index]
    assert fit.bic == pytest.approx(-2 * ll_map + fit.npar * math.log(data.n), rel=1e-12)
    assert fit.aic == pytest.approx(-2 * ll_map + 2 * fit.npar, rel=1e-12)


def test_theta_from_row_roundtrip(quick_fit_pair):
    fit, _, data, spec = quick_fit_pair
    theta = fit.theta_from_row(fit.samples[7])
    row = fit.samples[7]
    assert theta.gamma == row[0]
    assert theta.lam == row[1]
    np.testing.assert_array_equal(theta.alpha, row[2 : 2 + spec.d])
    np.testing.assert_array_equal(theta.beta, row[2 + spec.d :])
    # observed log likelihood recomputed from the row matches the trace
    ll = observed_log_likelihood(theta, data, spec)
    assert ll == pytest.approx(fit.observed_loglik[7], rel=1e-10)
    lp = log_prior(theta, fit.prior_cfg, spec)
    assert lp == pytest.approx(fit.log_prior_trace[7], rel=1e-10)


def test_mixture_rows_rebuild_the_simplex():
    data, _, _ = make_dataset(40, seed=31)
    spec = promotion_spec("gamma_mixture", n_components=2)
    fit = run_mc3(
        data,
        spec,
        cfg=Mc3Config(mcmc_cycles=60, n_chains=2, sweeps_per_cycle=1, seed=3),
    )
    assert fit.columns[:2] == ("g_mcmc", "lambda_mcmc")
    assert len(fit.columns) == 2 + spec.d + data.k
    theta = fit.theta_from_row(fit.samples[-1])
    w = theta.alpha[:2]
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(w > 0)


def test_record_latent_off(quick_fit_pair):
    _, _, data, spec = quick_fit_pair
    fit = run_mc3(
        data,
        spec,
        cfg=Mc3Config(mcmc_cycles=40, n_chains=1, sweeps_per_cycle=1, record_latent=False, seed=2),
    )
    assert fit.latent_draws is None


def test_validated_caches_run():
    # dual-route consistency checks enabled for every cycle of a short run
    data, _, spec = make_dataset(30, seed=41)
    run_mc3(
        data,
        spec,
        cfg=Mc3Config(
            mcmc_cycles=25,
            n_chains=2,
            sweeps_per_cycle=2,
            validate_caches=True,
            seed=4,
        ),
    )


def test_swap_rate_bookkeeping(quick_fit_pair):
    fit, _, _, _ = quick_fit_pair
    assert fit.swap_attempts.sum() == 120
    assert np.all(fit.swap_accepts <= fit.swap_attempts)
    rates = fit.swap_accept_rates
    assert rates.shape == (1,)
    assert 0.0 <= rates[0] <= 1.0


def test_equal_temperature_pair_matches_single_chain_law():
    """C=2 at equal heats must leave the cold marginal law unchanged.

    Compared via a KS test on pooled gamma draws from two short runs.
    """
    data, _, spec = make_dataset(50, seed=51)
    fit1 = run_mc3(
        data,
        spec,
        cfg=Mc3Config(mcmc_cycles=3000, n_chains=1, sweeps_per_cycle=2, seed=13),
    )
    fit2 = run_mc3(
        data,
        spec,
        cfg=Mc3Config(
            mcmc_cycles=3000,
            n_chains=2,
            sweeps_per_cycle=2,
            temperatures=(1.0, 1.0),
            seed=14,
        ),
    )
    g1 = fit1.samples[1000::20, 0]
    g2 = fit2.samples[1000::20, 0]
    # thinned to tame autocorrelation before the two-sample comparison
    res = stats.ks_2samp(g1, g2)
    assert res.pvalue > 0.01
