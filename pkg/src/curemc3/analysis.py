"""Posterior post-processing: summaries, HPD intervals, FDR-controlled
discovery of cured subjects, residual diagnostics, and predictions.

Everything here is pure over an immutable FitResult.  Burn-in defaults to
one third of the recorded cycles; point predictions use the MAP draw (a
posterior-mean variant is available behind a flag, since posterior means
can be misleading under multimodality).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateSurvival,
    DomainError,
    InsufficientSamples,
    InvalidBase,
    SchemaMismatch,
)
from .families import evaluate_over_draws
from .model import GAMMA_LIMIT_TOL, LOG_CURE_BASE, SurvivalDataset, Theta
from .model import pop_cumulative_hazard
from .sampler import FitResult

__all__ = [
    "hpd_interval",
    "fdr_discoveries",
    "cox_snell_residuals",
    "kaplan_meier",
    "residual_km_pairs",
    "predict",
    "PredictionTable",
    "summarize",
    "SummaryReport",
    "evaluate_discoveries",
    "DiscoveryRates",
]

_MIN_SAMPLES = 10


def hpd_interval(samples, alpha: float = 0.05) -> tuple:
    """Shortest contiguous interval covering ceil((1-alpha)*m) sorted draws.

    Ties between equally short windows resolve to the earliest one.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    s = np.sort(np.asarray(samples, dtype=float))
    m = s.shape[0]
    if m < _MIN_SAMPLES:
        raise InsufficientSamples(f"need at least {_MIN_SAMPLES} draws, got {m}")
    if not np.all(np.isfinite(s)):
        raise DomainError("draws must be finite")
    w = int(math.ceil((1.0 - alpha) * m))
    w = max(1, min(w, m))
    widths = s[w - 1 :] - s[: m - w + 1]
    i = int(np.argmin(widths))  # first minimum
    return float(s[i]), float(s[i + w - 1])


def fdr_discoveries(cured_probs, q: float) -> np.ndarray:
    """Indices declared cured by the Bayesian FDR prefix rule.

    Sort the posterior cured probabilities decreasingly (stable, so ties
    keep their original order) and declare the largest prefix whose mean
    posterior probability of a false call, mean(1 - p), stays at or below q.
    """
    p = np.asarray(cured_probs, dtype=float)
    if p.ndim != 1:
        raise DomainError("cured_probs must be a vector")
    if p.size and (np.any(p < 0.0) or np.any(p > 1.0) or not np.all(np.isfinite(p))):
        raise DomainError("cured probabilities must lie in [0, 1]")
    if not 0.0 < q < 1.0:
        raise DomainError(f"FDR level must lie in (0, 1), got {q!r}")
    if p.size == 0:
        return np.empty(0, dtype=np.intp)
    order = np.argsort(-p, kind="stable")
    # (1 - p) is non-decreasing along the prefix, so the running mean is too
    running = np.cumsum(1.0 - p[order]) / np.arange(1.0, p.size + 1.0)
    keep = np.nonzero(running <= q)[0]
    k = int(keep[-1]) + 1 if keep.size else 0
    return order[:k]


def cox_snell_residuals(data: SurvivalDataset, theta_map: Theta, spec) -> tuple:
    """Cox-Snell residuals r_i = -log S_P(y_i) with the censoring flags.

    Under a correct fit the event residuals behave like a unit-exponential
    censored sample; each residual is bounded by -log p0(x_i).
    """
    r = pop_cumulative_hazard(data.y, theta_map, data.X, spec)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(np.isinf(r)):
        raise DegenerateSurvival("population survival reached zero at an observed time")
    return r, data.delta.copy()


def kaplan_meier(times, status) -> tuple:
    """Product-limit estimator on the unique observed times.

    Ties: events at t reduce the survival step at t; censored subjects at t
    stay in the risk set for t itself and leave afterwards.
    """
    t = np.asarray(times, dtype=float)
    d = np.asarray(status)
    if t.ndim != 1 or t.shape != d.shape:
        raise DomainError("times and status must be equal-length vectors")
    if t.size == 0:
        return np.empty(0), np.empty(0)
    if not np.all(np.isfinite(t)) or np.any(t <= 0.0):
        raise DomainError("times must be positive and finite")
    support, inverse = np.unique(t, return_inverse=True)
    events = np.bincount(inverse, weights=d.astype(float), minlength=support.size)
    leaving = np.bincount(inverse, minlength=support.size)
    at_risk = t.size - np.concatenate([[0], np.cumsum(leaving)[:-1]])
    surv = np.cumprod(1.0 - events / at_risk)
    return support, surv


def residual_km_pairs(residuals, status) -> tuple:
    """Plot-ready (residual, KM cumulative hazard) pairs.

    Applies the product-limit estimator to the residuals (with the original
    censoring flags) and returns -log KM at each support point, dropping the
    terminal point when KM reaches zero.  A correctly specified model puts
    these pairs near the 45-degree line.
    """
    support, surv = kaplan_meier(residuals, status)
    with np.errstate(divide="ignore"):
        cumhaz = -np.log(surv)
    finite = np.isfinite(cumhaz)
    return support[finite], cumhaz[finite]


# ---------------------------------------------------------------------------
# draw-wise model evaluation for predictions
# ---------------------------------------------------------------------------


def _split_draws(fit: FitResult, retained: np.ndarray):
    """Unpack a retained sample block into vectorized natural parameters."""
    spec = fit.spec
    gamma = retained[:, 0]
    lam = retained[:, 1]
    a_free = retained[:, 2 : 2 + spec.d]
    beta = retained[:, 2 + spec.d :]
    if spec.is_mixture:
        K = spec.n_components
        w_free = a_free[:, : K - 1]
        w_last = 1.0 - w_free.sum(axis=1, keepdims=True)
        alpha = np.hstack([w_free, w_last, a_free[:, K - 1 :]])
    else:
        alpha = a_free
    return gamma, lam, alpha, beta


def _parts_draws(gamma, lam, eta, log_f, log_F):
    """(log_Sp, log_fp, log_p0) vectorized across posterior draws.

    gamma, lam, log_f, log_F have shape (D, 1); eta has (D, R).  Mirrors the
    scalar-theta evaluation in model core; invalid survival bases raise.
    """
    th = np.exp(eta)
    loglam = np.log(lam)
    with np.errstate(all="ignore"):
        pw = np.where(lam == 1.0, 0.0, (lam - 1.0) * log_F)
        limit = np.abs(gamma) <= GAMMA_LIMIT_TOL

        # gamma -> 0 limit
        fl = np.where(log_F > -np.inf, np.exp(eta + lam * log_F), 0.0)
        sp_lim = -fl
        p0_lim = -th
        fp_lim = eta + loglam + pw + log_f - fl

        # general branch; 1 + u0 == 0 is the valid no-cure boundary (p0 = 0)
        la = eta + (gamma * LOG_CURE_BASE) * th
        u0 = gamma * np.exp(la)
        bad = ~limit & (1.0 + u0 < 0.0)
        u = np.where(log_F > -np.inf, gamma * np.exp(la + lam * log_F), 0.0)
        safe_g = np.where(limit, 1.0, gamma)
        l1pu = np.log1p(np.where(bad, 0.0, u))
        sp_gen = l1pu / (-safe_g)
        p0_gen = np.log1p(np.where(bad, 0.0, u0)) / (-safe_g)
        fp_gen = la + loglam + pw + log_f - (1.0 / safe_g + 1.0) * l1pu

        log_sp = np.where(limit, sp_lim, sp_gen)
        log_p0 = np.where(limit, p0_lim, p0_gen)
        log_fp = np.where(limit, fp_lim, fp_gen)
    if np.any(bad):
        raise InvalidBase("a posterior draw left the valid survival-base region")
    return log_sp, log_fp, log_p0


@dataclass
class PredictionTable:
    """Point estimates and HPD bands per covariate row and time point.

    Each entry of the three dicts maps a quantity name ("survival",
    "cumulative_hazard", "hazard", "cured_given_alive") to an array of shape
    (n_rows, n_times).
    """

    times: np.ndarray
    n_rows: int
    point: dict
    lower: dict
    upper: dict
    point_kind: str
    alpha: float

    QUANTITIES = ("survival", "cumulative_hazard", "hazard", "cured_given_alive")

    def to_records(self):
        """Long-format rows: (row, time, quantity, point, lower, upper)."""
        out = []
        for name in self.QUANTITIES:
            pt, lo, hi = self.point[name], self.lower[name], self.upper[name]
            for r in range(self.n_rows):
                for j, t in enumerate(self.times):
                    out.append(
                        (r, float(t), name, float(pt[r, j]), float(lo[r, j]), float(hi[r, j]))
                    )
        return out


def predict(
    fit: FitResult,
    X_new,
    tau_values,
    alpha: float = 0.05,
    burn: int | None = None,
    point: str = "map",
) -> PredictionTable:
    """Survival, cumulative hazard, hazard, and conditional cured probability
    P(I=0 | T >= t) over a time grid, with HPD bands across retained draws.

    ``X_new`` holds design-matrix rows matching the fitted design exactly.
    ``point`` selects the point estimate: the MAP draw (default) or the
    posterior mean of each quantity ("mean").
    """
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim == 1:
        X_new = X_new[None, :]
    k = len(fit.samples[0]) - 2 - fit.spec.d
    if X_new.ndim != 2 or X_new.shape[1] != k:
        raise SchemaMismatch(
            f"covariate rows must have {k} design columns, got shape {X_new.shape}"
        )
    if not np.all(np.isfinite(X_new)):
        raise SchemaMismatch("covariate rows must be finite")
    if point not in ("map", "mean"):
        raise DomainError(f"point must be 'map' or 'mean', got {point!r}")
    tau = np.asarray(tau_values, dtype=float)
    if tau.ndim != 1 or tau.size == 0:
        raise DomainError("tau_values must be a non-empty vector")
    if not np.all(np.isfinite(tau)) or np.any(tau <= 0.0):
        raise DomainError("tau_values must be positive and finite")

    burn = fit.default_burn_in() if burn is None else int(burn)
    if not 0 <= burn < fit.samples.shape[0]:
        raise DomainError(f"burn-in {burn} out of range for {fit.samples.shape[0]} cycles")
    retained = fit.samples[burn:]
    if retained.shape[0] < _MIN_SAMPLES:
        raise InsufficientSamples("too few retained draws for prediction bands")
    gamma, lam, alpha_nat, beta = _split_draws(fit, retained)
    # map draw relative to the retained block; the MAP cycle may precede the
    # burn-in cut, so evaluate it separately when needed
    map_theta = fit.map_estimate
    g_col = gamma[:, None]
    l_col = lam[:, None]
    eta = beta @ X_new.T  # (D, R)
    eta_map = X_new @ map_theta.beta  # (R,)

    R, T = X_new.shape[0], tau.size
    names = PredictionTable.QUANTITIES
    pt = {n: np.empty((R, T)) for n in names}
    lo = {n: np.empty((R, T)) for n in names}
    hi = {n: np.empty((R, T)) for n in names}

    for j, t in enumerate(tau):
        lf, lF = evaluate_over_draws(fit.spec, float(t), alpha_nat)
        log_sp, log_fp, log_p0 = _parts_draws(
            g_col, l_col, eta, lf[:, None], lF[:, None]
        )
        with np.errstate(all="ignore"):
            quantities = {
                "survival": np.exp(log_sp),
                "cumulative_hazard": -log_sp,
                "hazard": np.exp(log_fp - log_sp),
                "cured_given_alive": np.minimum(np.exp(log_p0 - log_sp), 1.0),
            }
        for name, vals in quantities.items():
            for r in range(R):
                lo[name][r, j], hi[name][r, j] = hpd_interval(vals[:, r], alpha)
            if point == "mean":
                pt[name][:, j] = vals.mean(axis=0)
        if point == "map":
            mlf, mlF = evaluate_over_draws(
                fit.spec, float(t), map_theta.alpha[None, :]
            )
            msp, mfp, mp0 = _parts_draws(
                np.array([[map_theta.gamma]]),
                np.array([[map_theta.lam]]),
                eta_map[None, :],
                mlf[:, None],
                mlF[:, None],
            )
            with np.errstate(all="ignore"):
                pt["survival"][:, j] = np.exp(msp[0])
                pt["cumulative_hazard"][:, j] = -msp[0]
                pt["hazard"][:, j] = np.exp(mfp[0] - msp[0])
                pt["cured_given_alive"][:, j] = np.minimum(np.exp(mp0[0] - msp[0]), 1.0)

    return PredictionTable(
        times=tau, n_rows=R, point=pt, lower=lo, upper=hi, point_kind=point, alpha=alpha
    )


# ---------------------------------------------------------------------------
# summaries and discovery evaluation
# ---------------------------------------------------------------------------


@dataclass
class SummaryReport:
    """Posterior summary of one fit at a given burn-in."""

    columns: tuple
    burn_in: int
    map_estimate: dict
    means: dict
    hpd_intervals: dict
    hpd_alpha: float
    quantile_levels: tuple
    quantiles: dict
    cured_posterior_prob: np.ndarray | None
    censored_index: np.ndarray
    fdr_level: float
    discoveries: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))

    @property
    def discovery_rows(self) -> np.ndarray:
        """Original dataset row indices of the declared-cured subjects."""
        return self.censored_index[self.discoveries]


def summarize(
    fit: FitResult,
    burn: int | None = None,
    hpd_alpha: float = 0.05,
    fdr_q: float = 0.1,
    quantile_levels: tuple = (0.025, 0.5, 0.975),
) -> SummaryReport:
    """Posterior summary: MAP table, HPD intervals, sample quantiles, and
    FDR-controlled cured discoveries among the censored subjects.

    Quantiles use linear interpolation of order statistics (the type-7
    convention), for comparability with common statistical tools.
    """
    burn = fit.default_burn_in() if burn is None else int(burn)
    m = fit.samples.shape[0]
    if not 0 <= burn < m:
        raise DomainError(f"burn-in {burn} out of range for {m} recorded cycles")
    retained = fit.samples[burn:]
    cols = fit.columns

    map_row = fit.map_row
    map_estimate = {c: float(map_row[i]) for i, c in enumerate(cols)}
    means = {c: float(retained[:, i].mean()) for i, c in enumerate(cols)}
    hpds = {c: hpd_interval(retained[:, i], hpd_alpha) for i, c in enumerate(cols)}
    qs = {
        c: tuple(
            float(v)
            for v in np.quantile(retained[:, i], quantile_levels, method="linear")
        )
        for i, c in enumerate(cols)
    }

    cured_probs = None
    discoveries = np.empty(0, dtype=np.intp)
    if fit.latent_draws is not None and fit.latent_draws.shape[1]:
        kept = fit.latent_draws[burn:]
        cured_probs = 1.0 - kept.mean(axis=0)
        discoveries = fdr_discoveries(cured_probs, fdr_q)

    return SummaryReport(
        columns=cols,
        burn_in=burn,
        map_estimate=map_estimate,
        means=means,
        hpd_intervals=hpds,
        hpd_alpha=hpd_alpha,
        quantile_levels=tuple(quantile_levels),
        quantiles=qs,
        cured_posterior_prob=cured_probs,
        censored_index=fit.censored_index,
        fdr_level=fdr_q,
        discoveries=discoveries,
    )


class DiscoveryRates(NamedTuple):
    q: float
    fdr: float
    tpr: float


def evaluate_discoveries(true_cured, cured_probs, levels) -> list:
    """Achieved FDR and TPR of the discovery rule at each requested level.

    ``true_cured`` flags the subjects that are really cured; the achieved
    FDR counts false declarations against max(1, number declared) and the
    TPR counts recovered cured subjects against the number truly cured.
    """
    truth = np.asarray(true_cured).astype(bool)
    p = np.asarray(cured_probs, dtype=float)
    if truth.shape != p.shape:
        raise DomainError("true_cured and cured_probs must be aligned")
    positives = int(truth.sum())
    out = []
    for q in np.atleast_1d(np.asarray(levels, dtype=float)):
        declared = fdr_discoveries(p, float(q))
        n_decl = declared.size
        fp = int((~truth[declared]).sum())
        tp = n_decl - fp
        fdr = fp / max(1, n_decl)
        tpr = tp / positives if positives else math.nan
        out.append(DiscoveryRates(q=float(q), fdr=float(fdr), tpr=float(tpr)))
    return out
