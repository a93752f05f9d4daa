"""Prior density and sampling for the cure-rate parameter blocks.

The blocks are independent a priori:

* beta    ~ multivariate normal (default mean 0, covariance 100 I)
* gamma   ~ symmetric gamma on the real line: b^a / (2 Gamma(a)) |g|^(a-1) e^(-b|g|),
            defaults a = b = 1 (a Laplace density)
* lam     ~ inverse gamma (shape 2.1, scale 1.1)
* alpha   ~ independent inverse gammas per positive promotion parameter,
            with a Dirichlet on mixture proportions
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special, stats

from .errors import DomainError
from .families import PromotionSpec
from .model import Theta

__all__ = ["PriorConfig", "log_prior", "sample_prior"]


@dataclass
class PriorConfig:
    """Hyper-parameters for the prior blocks.

    ``alpha_priors`` and ``dirichlet_alpha0`` default to None, deferring to
    the promotion spec's own table (which carries 2.1/1.1 and concentration 1
    unless configured otherwise); set them here to override the spec.
    """

    mu: np.ndarray | None = None
    Sigma: np.ndarray | None = None
    a_gamma: float = 1.0
    b_gamma: float = 1.0
    a_lambda: float = 2.1
    b_lambda: float = 1.1
    alpha_priors: np.ndarray | None = None
    dirichlet_alpha0: float | None = None
    _chol: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for name in ("a_gamma", "b_gamma", "a_lambda", "b_lambda"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")
        if self.alpha_priors is not None:
            self.alpha_priors = np.asarray(self.alpha_priors, dtype=float)
            if self.alpha_priors.ndim != 2 or self.alpha_priors.shape[1] != 2:
                raise DomainError("alpha_priors must be an (n, 2) array")
            if np.any(self.alpha_priors <= 0):
                raise DomainError("alpha_priors entries must be positive")
        if self.dirichlet_alpha0 is not None and self.dirichlet_alpha0 <= 0:
            raise DomainError("dirichlet_alpha0 must be positive")

    def resolved_mu(self, k: int) -> np.ndarray:
        if self.mu is None:
            return np.zeros(k)
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != (k,):
            raise DomainError(f"prior mean must have length {k}, got {mu.shape}")
        return mu

    def resolved_sigma(self, k: int) -> np.ndarray:
        if self.Sigma is None:
            return 100.0 * np.eye(k)
        S = np.asarray(self.Sigma, dtype=float)
        if S.ndim == 0:
            return float(S) * np.eye(k)
        if S.shape != (k, k):
            raise DomainError(f"prior covariance must be {k}x{k}, got {S.shape}")
        return S

    def beta_chol(self, k: int):
        """Cached Cholesky factor of the beta prior covariance."""
        if self._chol is None or self._chol[0] != k:
            S = self.resolved_sigma(k)
            try:
                L = linalg.cholesky(S, lower=True)
            except linalg.LinAlgError as exc:
                raise DomainError("prior covariance must be positive definite") from exc
            self._chol = (k, L, 2.0 * np.log(np.diag(L)).sum())
        return self._chol[1], self._chol[2]


def _alpha_table(cfg: PriorConfig, spec: PromotionSpec) -> np.ndarray:
    table = cfg.alpha_priors if cfg.alpha_priors is not None else spec.prior_parameters
    n_pos = spec.n_components * spec.d_component if spec.is_mixture else spec.d
    if table.shape != (n_pos, 2):
        raise DomainError(
            f"alpha prior table must have shape ({n_pos}, 2), got {table.shape}"
        )
    return table


def _dirichlet_alpha0(cfg: PriorConfig, spec: PromotionSpec) -> float:
    if cfg.dirichlet_alpha0 is not None:
        return float(cfg.dirichlet_alpha0)
    return float(spec.dirichlet_concentration)


def log_normal_beta(beta: np.ndarray, cfg: PriorConfig) -> float:
    k = beta.shape[0]
    mu = cfg.resolved_mu(k)
    L, logdet = cfg.beta_chol(k)
    z = linalg.solve_triangular(L, beta - mu, lower=True)
    return float(-0.5 * (k * np.log(2.0 * np.pi) + logdet + z @ z))


def log_symmetric_gamma(g: float, a: float, b: float) -> float:
    """Density of the sign-symmetrized gamma law at g (support: all reals)."""
    if not np.isfinite(g):
        return -np.inf
    absg = abs(g)
    if absg == 0.0:
        if a == 1.0:
            return float(np.log(b / 2.0))
        return np.inf if a < 1.0 else -np.inf
    return float(
        a * np.log(b) - np.log(2.0) - special.gammaln(a) + (a - 1.0) * np.log(absg) - b * absg
    )


def log_inverse_gamma(x: float, shape: float, scale: float) -> float:
    if not np.isfinite(x) or x <= 0.0:
        return -np.inf
    return float(
        shape * np.log(scale) - special.gammaln(shape) - (shape + 1.0) * np.log(x) - scale / x
    )


def log_dirichlet(w: np.ndarray, alpha0: float) -> float:
    K = w.shape[0]
    if np.any(w <= 0.0):
        return -np.inf
    return float(
        special.gammaln(K * alpha0)
        - K * special.gammaln(alpha0)
        + (alpha0 - 1.0) * np.log(w).sum()
    )


def log_alpha_prior(alpha: np.ndarray, cfg: PriorConfig, spec: PromotionSpec) -> float:
    """Inverse-gamma product over positive entries plus the Dirichlet block."""
    table = _alpha_table(cfg, spec)
    if spec.is_mixture:
        K = spec.n_components
        w = alpha[:K]
        if abs(float(w.sum()) - 1.0) > 1e-12:
            return -np.inf
        total = log_dirichlet(w, _dirichlet_alpha0(cfg, spec))
        comp = alpha[K:]
    else:
        total = 0.0
        comp = alpha
    for j in range(comp.shape[0]):
        total += log_inverse_gamma(float(comp[j]), table[j, 0], table[j, 1])
    return float(total)


def log_prior(theta: Theta, cfg: PriorConfig, spec: PromotionSpec) -> float:
    """Joint log prior; -inf outside the support."""
    if theta.lam <= 0.0:
        return -np.inf
    total = log_normal_beta(theta.beta, cfg)
    total += log_symmetric_gamma(theta.gamma, cfg.a_gamma, cfg.b_gamma)
    total += log_inverse_gamma(theta.lam, cfg.a_lambda, cfg.b_lambda)
    total += log_alpha_prior(theta.alpha, cfg, spec)
    return float(total) if not np.isnan(total) else -np.inf


def _sample_inverse_gamma(rng: np.random.Generator, shape: float, scale: float, size=None):
    return scale / rng.gamma(shape, 1.0, size=size)


def sample_prior(
    cfg: PriorConfig, spec: PromotionSpec, k: int, rng: np.random.Generator
) -> Theta:
    """Draw one parameter state from the prior."""
    mu = cfg.resolved_mu(k)
    L, _ = cfg.beta_chol(k)
    beta = mu + L @ rng.standard_normal(k)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    gamma = sign * rng.gamma(cfg.a_gamma, 1.0 / cfg.b_gamma)
    lam = _sample_inverse_gamma(rng, cfg.a_lambda, cfg.b_lambda)
    table = _alpha_table(cfg, spec)
    comp = np.array(
        [_sample_inverse_gamma(rng, table[j, 0], table[j, 1]) for j in range(table.shape[0])]
    )
    if spec.is_mixture:
        a0 = _dirichlet_alpha0(cfg, spec)
        w = rng.dirichlet(np.full(spec.n_components, a0))
        alpha = np.concatenate([w, comp])
    else:
        alpha = comp
    return Theta(beta=beta, gamma=float(gamma), lam=float(lam), alpha=alpha)


# quantile helpers used by calibration tests ------------------------------


def symmetric_gamma_ppf(p, a: float, b: float):
    """Quantile function of the symmetric gamma law."""
    p = np.asarray(p, dtype=float)
    upper = stats.gamma.ppf(np.abs(2.0 * p - 1.0), a, scale=1.0 / b)
    return np.where(p >= 0.5, upper, -upper)


def inverse_gamma_ppf(p, shape: float, scale: float):
    return stats.invgamma.ppf(p, shape, scale=scale)
