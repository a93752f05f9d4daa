"""Core quantities of the generalized cure-rate survival family.

The population survival combines a promotion-time CDF ``F(t; alpha)`` with a
covariate-driven link ``theta(x) = exp(x . beta)`` through

    S_P(t) = (1 + g * theta * c^(g*theta) * F(t)^lam)^(-1/g),     c = e^(e^-1)

where ``g`` (any real) and ``lam > 0`` index the family.  ``g -> 0`` is taken
analytically as ``exp(-theta * F(t)^lam)`` once ``|g|`` drops below
``GAMMA_LIMIT_TOL``.  The cure fraction is the ``t -> inf`` limit
``p0 = S_P`` at ``F = 1``; susceptible quantities condition on not being
cured.  Everything here is a pure function of its inputs; likelihood
evaluators return ``-inf`` for invalid or zero-density configurations
instead of raising, so samplers can treat them as rejections.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import (
    DegenerateSurvival,
    DegenerateSusceptibles,
    DomainError,
    InvalidBase,
)
from .families import PromotionSpec, evaluate_batch

__all__ = [
    "CURE_BASE",
    "LOG_CURE_BASE",
    "GAMMA_LIMIT_TOL",
    "Theta",
    "SurvivalDataset",
    "full_latent",
    "pop_survival",
    "pop_density",
    "cure_rate",
    "susceptible_survival",
    "susceptible_density",
    "observed_log_likelihood",
    "complete_log_likelihood",
    "latent_susceptible_probs",
    "pop_hazard",
    "pop_cumulative_hazard",
    "conditional_cured_prob",
]

# c = e^(e^-1); its log e^-1 is what the formulas actually consume.
LOG_CURE_BASE = float(np.exp(-1.0))
CURE_BASE = float(np.exp(LOG_CURE_BASE))

# below this |g| the analytic g -> 0 limit replaces the general expression
GAMMA_LIMIT_TOL = 1e-10

_TINY_SUSCEPTIBLE = 1e-12
_LOG_TINY_SURVIVAL = float(np.log(1e-300))


@dataclass(frozen=True)
class Theta:
    """Full parameter state: regression, family indices, promotion parameters.

    ``alpha`` holds the natural promotion-time vector (for mixtures: all K
    proportions followed by the per-component parameters).
    """

    beta: np.ndarray
    gamma: float
    lam: float
    alpha: np.ndarray

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "lam", float(self.lam))
        if not np.all(np.isfinite(beta)):
            raise DomainError("beta must be finite")
        if not np.isfinite(self.gamma):
            raise DomainError("gamma must be finite")
        if not np.isfinite(self.lam) or self.lam <= 0:
            raise DomainError(f"lam must be positive, got {self.lam!r}")
        if alpha.size and (not np.all(np.isfinite(alpha)) or np.any(alpha <= 0)):
            raise DomainError("alpha entries must be positive and finite")


def validate_theta(theta: Theta, spec: PromotionSpec, k: int | None = None) -> None:
    """Check theta against a promotion spec (and optionally the design width)."""
    if theta.alpha.shape != (spec.natural_dim,):
        raise DomainError(
            f"alpha must have length {spec.natural_dim} for family {spec.family!r}, "
            f"got {theta.alpha.shape}"
        )
    if spec.is_mixture:
        w = theta.alpha[: spec.n_components]
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise DomainError("mixture proportions must sum to one within 1e-12")
    if k is not None and theta.beta.shape != (k,):
        raise DomainError(f"beta must have length {k}, got {theta.beta.shape}")


@dataclass(frozen=True)
class SurvivalDataset:
    """Right-censored observations with a fixed design matrix.

    ``delta`` is 1 for observed event times and 0 for censored ones.  An
    empty dataset (n = 0) is allowed so samplers can target the prior alone;
    file loaders enforce non-emptiness separately.
    """

    y: np.ndarray
    delta: np.ndarray
    X: np.ndarray
    column_names: tuple = ()
    ids: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        delta = np.atleast_1d(np.asarray(self.delta))
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise DomainError(f"X must be 2-D, got shape {X.shape}")
        n = y.shape[0]
        if delta.shape[0] != n or X.shape[0] != n:
            raise DomainError("y, delta and X must agree on the number of rows")
        if n and (not np.all(np.isfinite(y)) or np.any(y <= 0)):
            raise DomainError("observation times must be positive and finite")
        if not np.all(np.isin(delta, (0, 1))):
            raise DomainError("censoring indicators must be 0 or 1")
        if n and not np.all(np.isfinite(X)):
            raise DomainError("covariates must be finite")
        names = tuple(self.column_names) if self.column_names else tuple(
            f"x{j}" for j in range(X.shape[1])
        )
        if len(names) != X.shape[1]:
            raise DomainError("column_names length must match the design width")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "delta", delta.astype(np.uint8))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def n_censored(self) -> int:
        return int(self.n - self.delta.sum())


def full_latent(data: SurvivalDataset, censored_values) -> np.ndarray:
    """Expand per-censored-subject indicators to a full-length vector.

    Events carry an implicit 1 (they are susceptible by observation).
    """
    lat = np.ones(data.n, dtype=np.uint8)
    cen = data.delta == 0
    vals = np.asarray(censored_values)
    if vals.shape[0] != int(cen.sum()):
        raise DomainError("latent vector length must equal the number of censored subjects")
    lat[cen] = vals.astype(np.uint8)
    return lat


# ---------------------------------------------------------------------------
# core pieces
# ---------------------------------------------------------------------------


def _linear_predictor(theta: Theta, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != theta.beta.shape[0]:
        raise DomainError(
            f"design width {X.shape[1]} does not match beta length {theta.beta.shape[0]}"
        )
    return X @ theta.beta


def _parts(gamma, lam, eta, log_f, log_F):
    """Vectorized (log_Sp, log_fp, log_p0, ok) for the generalized family.

    ``ok`` is False when a negative g makes the survival base non-positive
    anywhere; callers decide between raising and a -inf sentinel.
    """
    eta = np.asarray(eta, dtype=float)
    log_f = np.asarray(log_f, dtype=float)
    log_F = np.asarray(log_F, dtype=float)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        th = np.exp(eta)
        # lam == 1 exactly must not turn (lam-1)*log_F into nan at F = 0
        pw = 0.0 if lam == 1.0 else (lam - 1.0) * log_F
        if abs(gamma) <= GAMMA_LIMIT_TOL:
            fl = np.exp(eta + lam * log_F)  # theta * F^lam
            log_sp = -fl
            log_p0 = -th
            log_fp = eta + np.log(lam) + pw + log_f - fl
            ok = True
        else:
            la = eta + (gamma * LOG_CURE_BASE) * th
            u0 = gamma * np.exp(la)
            u = gamma * np.exp(la + lam * log_F)
            # 1 + u0 == 0 is the valid no-cure boundary (p0 = 0, log p0 = -inf)
            ok = bool(gamma > 0 or not np.any(1.0 + u0 < 0.0))
            l1pu = np.log1p(u)
            log_sp = l1pu / (-gamma)
            log_p0 = np.log1p(u0) / (-gamma)
            log_fp = la + np.log(lam) + pw + log_f - (1.0 / gamma + 1.0) * l1pu
    return log_sp, log_fp, log_p0, ok


def _log_surv_diff(log_sp, log_p0):
    """log(S_P - p0) from the two log quantities, -inf safe."""
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.asarray(log_p0 - log_sp, dtype=float)
        out = log_sp + np.log(-np.expm1(np.minimum(d, 0.0)))
    # S_P == 0 makes both arguments -inf; the difference is then zero mass
    out = np.where(np.isnan(out), -np.inf, out)
    return out


def _eval_family(spec: PromotionSpec, t, alpha):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return evaluate_batch(spec, t, alpha)


def _broadcast(t, eta):
    """Align a time grid with linear predictors (either may be length 1)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.shape[0] == eta.shape[0]:
        return t, eta
    if t.shape[0] == 1:
        return np.full(eta.shape[0], t[0]), eta
    if eta.shape[0] == 1:
        return t, np.full(t.shape[0], eta[0])
    raise DomainError(
        f"cannot align {t.shape[0]} times with {eta.shape[0]} covariate rows"
    )


def _maybe_scalar(arr, scalar_in):
    return float(arr[0]) if scalar_in else arr


# ---------------------------------------------------------------------------
# public quantities
# ---------------------------------------------------------------------------


def pop_survival(t, theta: Theta, X, spec: PromotionSpec):
    """Population survival S_P(t) per covariate row."""
    scalar = np.isscalar(t) and np.asarray(X).ndim == 1
    eta = _linear_predictor(theta, X)
    t, eta = _broadcast(t, eta)
    log_f, log_F = _eval_family(spec, t, theta.alpha)
    log_sp, _, _, ok = _parts(theta.gamma, theta.lam, eta, log_f, log_F)
    if not ok:
        raise InvalidBase(f"survival base is non-positive at gamma={theta.gamma!r}")
    if theta.gamma == -1.0:
        # the outer exponent -1/gamma is exactly 1, so S_P is affine in
        # F^lam; the linear scale avoids the exp/log round trip entirely
        th = np.exp(eta)
        u = theta.gamma * th * CURE_BASE ** (theta.gamma * th) * np.exp(theta.lam * log_F)
        return _maybe_scalar(1.0 + u, scalar)
    return _maybe_scalar(np.exp(log_sp), scalar)


def pop_density(t, theta: Theta, X, spec: PromotionSpec):
    """Population density f_P(t) = -dS_P/dt per covariate row."""
    scalar = np.isscalar(t) and np.asarray(X).ndim == 1
    eta = _linear_predictor(theta, X)
    t, eta = _broadcast(t, eta)
    log_f, log_F = _eval_family(spec, t, theta.alpha)
    _, log_fp, _, ok = _parts(theta.gamma, theta.lam, eta, log_f, log_F)
    if not ok:
        raise InvalidBase(f"survival base is non-positive at gamma={theta.gamma!r}")
    return _maybe_scalar(np.exp(log_fp), scalar)


def cure_rate(theta: Theta, X):
    """Cure fraction p0(x; theta): the t -> inf limit of S_P.

    Promotion-time parameters do not enter; only the link and (g, lam) do.
    """
    scalar = np.asarray(X).ndim == 1
    eta = _linear_predictor(theta, X)
    zero = np.zeros_like(eta)
    log_sp, _, _, ok = _parts(theta.gamma, theta.lam, eta, zero, zero)
    if not ok:
        raise InvalidBase(f"survival base is non-positive at gamma={theta.gamma!r}")
    return _maybe_scalar(np.exp(log_sp), scalar)


def susceptible_survival(t, theta: Theta, X, spec: PromotionSpec):
    """Survival conditional on being susceptible: (S_P - p0) / (1 - p0)."""
    scalar = np.isscalar(t) and np.asarray(X).ndim == 1
    eta = _linear_predictor(theta, X)
    t, eta = _broadcast(t, eta)
    log_f, log_F = _eval_family(spec, t, theta.alpha)
    log_sp, _, log_p0, ok = _parts(theta.gamma, theta.lam, eta, log_f, log_F)
    if not ok:
        raise InvalidBase(f"survival base is non-positive at gamma={theta.gamma!r}")
    p0 = np.exp(log_p0)
    if np.any(1.0 - p0 < _TINY_SUSCEPTIBLE):
        raise DegenerateSusceptibles("susceptible fraction 1 - p0 is numerically zero")
    out = np.exp(_log_surv_diff(log_sp, log_p0)) / (1.0 - p0)
    return _maybe_scalar(out, scalar)


def susceptible_density(t, theta: Theta, X, spec: PromotionSpec):
    """Event-time density conditional on being susceptible: f_P / (1 - p0)."""
    scalar = np.isscalar(t) and np.asarray(X).ndim == 1
    eta = _linear_predictor(theta, X)
    t, eta = _broadcast(t, eta)
    log_f, log_F = _eval_family(spec, t, theta.alpha)
    _, log_fp, log_p0, ok = _parts(theta.gamma, theta.lam, eta, log_f, log_F)
    if not ok:
        raise InvalidBase(f"survival base is non-positive at gamma={theta.gamma!r}")
    p0 = np.exp(log_p0)
    if np.any(1.0 - p0 < _TINY_SUSCEPTIBLE):
        raise DegenerateSusceptibles("susceptible fraction 1 - p0 is numerically zero")
    return _maybe_scalar(np.exp(log_fp) / (1.0 - p0), scalar)


def pop_hazard(t, theta: Theta, X, spec: PromotionSpec):
    """Population hazard f_P / S_P."""
    scalar = np.isscalar(t) and np.asarray(X).ndim == 1
    eta = _linear_predictor(theta, X)
    t, eta = _broadcast(t, eta)
    log_f, log_F = _eval_family(spec, t, theta.alpha)
    log_sp, log_fp, _, ok = _parts(theta.gamma, theta.lam, eta, log_f, log_F)
    if not ok:
        raise InvalidBase(f"survival base is non-positive at gamma={theta.gamma!r}")
    if np.any(log_sp < _LOG_TINY_SURVIVAL):
        raise DegenerateSurvival("population survival underflowed where a hazard is needed")
    return _maybe_scalar(np.exp(log_fp - log_sp), scalar)


def pop_cumulative_hazard(t, theta: Theta, X, spec: PromotionSpec):
    """Cumulative population hazard -log S_P(t)."""
    scalar = np.isscalar(t) and np.asarray(X).ndim == 1
    eta = _linear_predictor(theta, X)
    t, eta = _broadcast(t, eta)
    log_f, log_F = _eval_family(spec, t, theta.alpha)
    log_sp, _, _, ok = _parts(theta.gamma, theta.lam, eta, log_f, log_F)
    if not ok:
        raise InvalidBase(f"survival base is non-positive at gamma={theta.gamma!r}")
    return _maybe_scalar(-log_sp, scalar)


def conditional_cured_prob(t, theta: Theta, X, spec: PromotionSpec):
    """P(cured | survived past t) = p0 / S_P(t), in [p0, 1]."""
    scalar = np.isscalar(t) and np.asarray(X).ndim == 1
    eta = _linear_predictor(theta, X)
    t, eta = _broadcast(t, eta)
    log_f, log_F = _eval_family(spec, t, theta.alpha)
    log_sp, _, log_p0, ok = _parts(theta.gamma, theta.lam, eta, log_f, log_F)
    if not ok:
        raise InvalidBase(f"survival base is non-positive at gamma={theta.gamma!r}")
    if np.any(log_sp < _LOG_TINY_SURVIVAL):
        raise DegenerateSurvival("population survival underflowed where a ratio is needed")
    out = np.minimum(np.exp(log_p0 - log_sp), 1.0)
    return _maybe_scalar(out, scalar)


# ---------------------------------------------------------------------------
# likelihoods
# ---------------------------------------------------------------------------


def _data_parts(theta: Theta, data: SurvivalDataset, spec: PromotionSpec):
    eta = data.X @ theta.beta
    log_f, log_F = _eval_family(spec, data.y, theta.alpha) if data.n else (
        np.empty(0),
        np.empty(0),
    )
    return _parts(theta.gamma, theta.lam, eta, log_f, log_F)


def observed_log_likelihood(theta: Theta, data: SurvivalDataset, spec: PromotionSpec) -> float:
    """Marginal log likelihood: events via f_P, censored subjects via S_P.

    Returns -inf (never raises) when the survival base is invalid or any
    event lands on zero density, so samplers treat such states as rejected.
    """
    if data.n == 0:
        return 0.0
    log_sp, log_fp, _, ok = _data_parts(theta, data, spec)
    if not ok:
        return -np.inf
    ev = data.delta == 1
    total = float(log_fp[ev].sum() + log_sp[~ev].sum())
    return total if np.isfinite(total) else -np.inf


def complete_log_likelihood(
    theta: Theta, data: SurvivalDataset, latent, spec: PromotionSpec
) -> float:
    """Augmented-data log likelihood given latent susceptibility indicators.

    ``latent`` is full length with events pinned to 1; censored subjects
    contribute log p0 when cured (I=0) and log(S_P - p0) when susceptible.
    Marginalizing the censored terms recovers the observed likelihood
    because p0 + (S_P - p0) = S_P exactly.
    """
    if data.n == 0:
        return 0.0
    latent = np.asarray(latent).astype(np.uint8)
    if latent.shape[0] != data.n:
        raise DomainError("latent must be full length; see full_latent()")
    ev = data.delta == 1
    if not np.all(latent[ev] == 1):
        raise DomainError("event subjects must have latent indicator 1")
    log_sp, log_fp, log_p0, ok = _data_parts(theta, data, spec)
    if not ok:
        return -np.inf
    log_sd = _log_surv_diff(log_sp, log_p0)
    cen = ~ev
    cen_terms = np.where(latent[cen] == 1, log_sd[cen], log_p0[cen])
    total = float(log_fp[ev].sum() + cen_terms.sum())
    return total if np.isfinite(total) else -np.inf


def latent_susceptible_probs(
    theta: Theta, data: SurvivalDataset, spec: PromotionSpec, heat: float = 1.0
) -> np.ndarray:
    """Tempered P(I = 1 | rest) per censored subject, in dataset order.

    Under heat h the full conditional weighs the susceptible branch as
    [(1-p0) S_U]^h against [p0]^h.  h = 0 collapses to 1/2 everywhere.
    """
    cen = data.delta == 0
    n_cen = int(cen.sum())
    if n_cen == 0:
        return np.empty(0)
    if heat == 0.0:
        return np.full(n_cen, 0.5)
    log_sp, _, log_p0, ok = _data_parts(theta, data, spec)
    if not ok:
        raise InvalidBase("cannot draw latent indicators from an invalid state")
    log_sd = _log_surv_diff(log_sp, log_p0)[cen]
    lp0 = log_p0[cen]
    with np.errstate(invalid="ignore"):
        p = special.expit(heat * (log_sd - lp0))
    # both branches may carry zero mass (S_P = 0); keep such subjects susceptible
    p = np.where(np.isnan(p), 1.0, p)
    return np.clip(p, 0.0, 1.0)
