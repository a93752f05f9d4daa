"""Jitted likelihood kernels for the sampler hot loop.

These duplicate the formulas of :mod:`curemc3.model` in scalar loops so a
single likelihood evaluation costs microseconds instead of dozens of numpy
dispatches; the test suite pins both routes together.  All kernels use a
``-inf`` return (or an ``ok`` flag) as the invalid-state sentinel, never an
exception, and must stay bit-deterministic: no fastmath, no parallel
reductions.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# keep in sync with curemc3.model
LOG_CURE_BASE = math.exp(-1.0)
GAMMA_LIMIT_TOL = 1e-10

_NEG_INF = float("-inf")


@njit(cache=True, inline="always")
def _obs_terms(gamma, lam, loglam, eta_i, th_i, logf_i, logF_i):
    """Per-observation (log_Sp, log_fp, log_p0, ok) for one subject."""
    if lam == 1.0:
        pw = 0.0
    else:
        pw = (lam - 1.0) * logF_i
    if abs(gamma) <= GAMMA_LIMIT_TOL:
        fl = math.exp(eta_i + lam * logF_i) if logF_i > _NEG_INF else 0.0
        log_sp = -fl
        log_p0 = -th_i
        log_fp = eta_i + loglam + pw + logf_i - fl
        return log_sp, log_fp, log_p0, True
    la = eta_i + (gamma * LOG_CURE_BASE) * th_i
    u0 = gamma * math.exp(la)
    base0 = 1.0 + u0
    # base0 == 0 is the valid no-cure boundary (p0 = 0), only < 0 is invalid
    if base0 < 0.0:
        return 0.0, 0.0, 0.0, False
    if logF_i > _NEG_INF:
        u = gamma * math.exp(la + lam * logF_i)
    else:
        u = 0.0
    if 1.0 + u > 0.0:
        l1pu = math.log1p(u)
    else:
        l1pu = _NEG_INF  # F = 1 under no cure: the population survival hits 0
    log_sp = l1pu / (-gamma)
    if base0 > 0.0:
        log_p0 = math.log1p(u0) / (-gamma)
    else:
        log_p0 = _NEG_INF
    log_fp = la + loglam + pw + logf_i - (1.0 / gamma + 1.0) * l1pu
    return log_sp, log_fp, log_p0, True


@njit(cache=True, inline="always")
def _log_surv_diff_scalar(log_sp, log_p0):
    d = log_p0 - log_sp
    if d != d or d >= 0.0:  # nan (S_P = 0) or no susceptible mass
        return _NEG_INF
    return log_sp + math.log(-math.expm1(d))


@njit(cache=True, nogil=True)
def observed_ll(gamma, lam, eta, th, logf, logF, delta):
    """Marginal log likelihood; -inf sentinel on invalid base or nan."""
    loglam = math.log(lam)
    total = 0.0
    for i in range(eta.shape[0]):
        log_sp, log_fp, _, ok = _obs_terms(
            gamma, lam, loglam, eta[i], th[i], logf[i], logF[i]
        )
        if not ok:
            return _NEG_INF
        total += log_fp if delta[i] == 1 else log_sp
    if math.isfinite(total):
        return total
    return _NEG_INF  # nan or +inf are numeric-failure states, not acceptances


@njit(cache=True, inline="always")
def _cll_term(gamma, lam, loglam, eta_i, th_i, logf_i, logF_i, delta_i, latent_i):
    """One subject's augmented-data contribution, with a validity flag."""
    log_sp, log_fp, log_p0, ok = _obs_terms(gamma, lam, loglam, eta_i, th_i, logf_i, logF_i)
    if not ok:
        return 0.0, False
    if delta_i == 1:
        return log_fp, True
    if latent_i == 1:
        return _log_surv_diff_scalar(log_sp, log_p0), True
    return log_p0, True


@njit(cache=True, nogil=True)
def complete_ll(gamma, lam, eta, th, logf, logF, delta, latent):
    """Augmented-data log likelihood; latent is full length, events pinned 1."""
    loglam = math.log(lam)
    total = 0.0
    for i in range(eta.shape[0]):
        term, ok = _cll_term(
            gamma, lam, loglam, eta[i], th[i], logf[i], logF[i], delta[i], latent[i]
        )
        if not ok:
            return _NEG_INF
        total += term
    if math.isfinite(total):
        return total
    return _NEG_INF  # nan or +inf are numeric-failure states, not acceptances


@njit(cache=True, nogil=True)
def complete_ll_beta_shift(gamma, lam, eta, xcol, db, logf, logF, delta, latent):
    """complete_ll after shifting one regression coordinate by db.

    Evaluates at linear predictor eta + db * xcol without materializing the
    shifted arrays; the sampler uses it for every beta proposal and for the
    beta entries of the MALA gradient.
    """
    loglam = math.log(lam)
    total = 0.0
    for i in range(eta.shape[0]):
        eta_i = eta[i] + db * xcol[i]
        th_i = math.exp(eta_i)
        term, ok = _cll_term(
            gamma, lam, loglam, eta_i, th_i, logf[i], logF[i], delta[i], latent[i]
        )
        if not ok:
            return _NEG_INF
        total += term
    if math.isfinite(total):
        return total
    return _NEG_INF


@njit(cache=True, nogil=True)
def gibbs_and_cll(gamma, lam, eta, th, logf, logF, delta, heat, u, latent):
    """Fused latent refresh: redraw the cure indicators and return the new
    complete-data log likelihood in one pass.

    ``u`` holds one uniform draw per censored subject in subject order;
    ``latent`` is updated in place.  Returns nan when the survival base is
    invalid somewhere, which valid chain states never produce.
    """
    loglam = math.log(lam)
    total = 0.0
    j = 0
    for i in range(eta.shape[0]):
        log_sp, log_fp, log_p0, ok = _obs_terms(
            gamma, lam, loglam, eta[i], th[i], logf[i], logF[i]
        )
        if not ok:
            return math.nan
        if delta[i] == 1:
            total += log_fp
            continue
        log_sd = _log_surv_diff_scalar(log_sp, log_p0)
        if heat == 0.0:
            p = 0.5
        elif log_sd == _NEG_INF and log_p0 == _NEG_INF:
            p = 1.0  # no mass either way; keep susceptible
        else:
            t = heat * (log_sd - log_p0)
            if t != t:
                p = 1.0
            elif t >= 0.0:
                p = 1.0 / (1.0 + math.exp(-t))
            else:
                e = math.exp(t)
                p = e / (1.0 + e)
        ind = 1 if u[j] < p else 0
        latent[i] = ind
        j += 1
        total += log_sd if ind == 1 else log_p0
    if math.isfinite(total):
        return total
    return _NEG_INF


@njit(cache=True, nogil=True)
def latent_probs(gamma, lam, eta, th, logf, logF, delta, heat, out):
    """Tempered P(I=1 | rest) written into out (full length, events get 1).

    Returns False when the survival base is invalid at some subject.
    """
    loglam = math.log(lam)
    for i in range(eta.shape[0]):
        if delta[i] == 1:
            out[i] = 1.0
            continue
        if heat == 0.0:
            out[i] = 0.5
            continue
        log_sp, _, log_p0, ok = _obs_terms(
            gamma, lam, loglam, eta[i], th[i], logf[i], logF[i]
        )
        if not ok:
            return False
        log_sd = _log_surv_diff_scalar(log_sp, log_p0)
        if log_sd == _NEG_INF and log_p0 == _NEG_INF:
            out[i] = 1.0  # no mass either way; keep susceptible
            continue
        t = heat * (log_sd - log_p0)
        if t != t:
            out[i] = 1.0
        elif t >= 0.0:
            out[i] = 1.0 / (1.0 + math.exp(-t))
        else:
            e = math.exp(t)
            out[i] = e / (1.0 + e)
    return True
