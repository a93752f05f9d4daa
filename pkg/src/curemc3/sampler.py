"""Metropolis-coupled MCMC engine for the cure-rate model.

A ladder of C chains targets the augmented posterior raised to heats
``1 = h_1 > h_2 > ... > h_C`` (both likelihood and prior are tempered).
Each cycle runs ``sweeps_per_cycle`` sweeps per chain, where a sweep is one
Gibbs refresh of the latent cure indicators followed by a parameter pass:
a Metropolis-within-Gibbs scan with probability ``1 - mala_probability``,
otherwise a MALA jump driven by central-difference gradients.  After the
sweeps one adjacent swap between randomly chosen neighbours is attempted,
and the cold chain's state is recorded.

Positive coordinates (lam, promotion parameters, free mixture weights) are
sampled through log transforms: multiplicative log-normal proposals in the
MWG scan and additive steps on the log scale inside MALA, with the matching
Jacobian terms kept un-tempered.  Mixture proportions are parameterized by
K - 1 free positive weights against a last weight pinned to one.

Reproducibility: every chain owns an RNG stream spawned from the seed, and
the swap coordinator owns one more, so results are bit-identical for any
worker count.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats
from scipy.special import gammaln

from . import _kernels
from .errors import ConfigError, DomainError, GradientUnavailable
from .families import _BUILTIN_EVAL, PromotionSpec, evaluate_batch
from .model import Theta, SurvivalDataset
from .priors import PriorConfig, _alpha_table, _dirichlet_alpha0, log_prior

__all__ = [
    "Mc3Config",
    "ChainState",
    "FitResult",
    "default_temperatures",
    "make_context",
    "gibbs_update_latent",
    "mwg_sweep",
    "mala_sweep",
    "mala_step",
    "numeric_gradient",
    "swap_move",
    "run_mc3",
]


def default_temperatures(n_chains: int, epsilon0: float = 0.001) -> tuple:
    """Heat ladder h_c = (1 + epsilon0)^(-(c^d0 - 1)), c = 1..C.

    The exponent power d0 is 5 for C <= 4, 3.5 for 5 <= C <= 8 and 3 for
    C >= 9, so deeper ladders cool more gently.
    """
    if n_chains < 1:
        raise ConfigError("n_chains must be at least 1")
    if epsilon0 <= 0:
        raise ConfigError("epsilon0 must be positive")
    if n_chains <= 4:
        d0 = 5.0
    elif n_chains <= 8:
        d0 = 3.5
    else:
        d0 = 3.0
    return tuple(
        float((1.0 + epsilon0) ** -(float(c) ** d0 - 1.0)) for c in range(1, n_chains + 1)
    )


@dataclass
class Mc3Config:
    """Sampler settings; defaults follow the reference configuration."""

    mcmc_cycles: int = 1000
    n_chains: int = 4
    sweeps_per_cycle: int = 10
    epsilon0: float = 0.001
    temperatures: tuple | None = None
    prop_scale_theta: object = None  # scalar or (k + 2,) for (gamma, lam, beta...)
    mala_probability: float = 0.2
    mala_tau: float = 1.5e-5
    fd_step: float = 1e-6
    seed: int = 1
    threads: int = 1
    record_latent: bool = True
    validate_caches: bool = False

    def __post_init__(self):
        if self.mcmc_cycles < 1:
            raise ConfigError("mcmc_cycles must be at least 1")
        if self.n_chains < 1:
            raise ConfigError("n_chains must be at least 1")
        if self.sweeps_per_cycle < 1:
            raise ConfigError("sweeps_per_cycle must be at least 1")
        if not 0.0 <= self.mala_probability <= 1.0:
            raise ConfigError("mala_probability must lie in [0, 1]")
        if self.mala_tau <= 0:
            raise ConfigError("mala_tau must be positive")
        if self.fd_step <= 0:
            raise ConfigError("fd_step must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.temperatures is not None:
            temps = tuple(float(t) for t in self.temperatures)
            if len(temps) != self.n_chains:
                raise ConfigError("temperatures must list one heat per chain")
            if abs(temps[0] - 1.0) > 0.0:
                raise ConfigError("the first chain must run at heat 1")
            if any(t <= 0.0 or t > 1.0 for t in temps):
                raise ConfigError("heats must lie in (0, 1]")
            self.temperatures = temps


class FitContext:
    """Immutable per-fit workspace shared by all chains."""

    def __init__(self, data: SurvivalDataset, spec: PromotionSpec, prior_cfg: PriorConfig):
        self.data = data
        self.spec = spec
        self.prior_cfg = prior_cfg
        self.n = data.n
        self.k = data.k
        self.y = data.y
        self.X = np.ascontiguousarray(data.X)
        self.XT = np.ascontiguousarray(self.X.T)  # contiguous columns for kernels
        self.delta = np.ascontiguousarray(data.delta, dtype=np.uint8)
        self.cen_idx = np.flatnonzero(self.delta == 0)
        self.n_cen = self.cen_idx.shape[0]

        # trusted fast path for plain built-in families; everything else goes
        # through the validating batch evaluator
        if not spec.is_mixture and spec.family in _BUILTIN_EVAL:
            self._raw_eval = _BUILTIN_EVAL[spec.family][1]
        else:
            self._raw_eval = None

        K = spec.n_components
        self.K = K
        self.is_mixture = spec.is_mixture
        self.n_comp_params = K * spec.d_component if spec.is_mixture else spec.d
        self.n_weights = K - 1 if spec.is_mixture else 0
        # coordinate layout: gamma, lam, free weights, component params, beta
        self.n_coord = 2 + spec.d + self.k
        kinds = ["gamma", "lambda"]
        kinds += ["weight"] * self.n_weights
        kinds += ["comp"] * self.n_comp_params
        kinds += ["beta"] * self.k
        self.coord_kinds = tuple(kinds)

        # beta prior pieces (dense precision keeps per-update cost trivial)
        self.mu = prior_cfg.resolved_mu(self.k)
        Sigma = prior_cfg.resolved_sigma(self.k)
        L, logdet = prior_cfg.beta_chol(self.k)
        self.beta_prec = linalg.cho_solve((L, True), np.eye(self.k))
        self.mvn_const = -0.5 * (self.k * math.log(2.0 * math.pi) + logdet)

        # per-parameter inverse-gamma constants
        table = _alpha_table(prior_cfg, spec)
        self.ig_shape = table[:, 0].copy()
        self.ig_scale = table[:, 1].copy()
        self.ig_const = self.ig_shape * np.log(self.ig_scale) - gammaln(self.ig_shape)
        self.a_gamma = prior_cfg.a_gamma
        self.b_gamma = prior_cfg.b_gamma
        self.gamma_const = (
            self.a_gamma * math.log(self.b_gamma)
            - math.log(2.0)
            - math.lgamma(self.a_gamma)
        )
        self.a_lambda = prior_cfg.a_lambda
        self.b_lambda = prior_cfg.b_lambda
        self.lambda_const = self.a_lambda * math.log(self.b_lambda) - math.lgamma(
            self.a_lambda
        )
        if spec.is_mixture:
            a0 = _dirichlet_alpha0(prior_cfg, spec)
            self.dir_alpha0 = a0
            self.dir_const = math.lgamma(K * a0) - K * math.lgamma(a0)

    # ---- family evaluation ------------------------------------------------

    def family_eval(self, alpha_natural: np.ndarray):
        if self.n == 0:
            return np.empty(0), np.empty(0)
        if self._raw_eval is not None:
            return self._raw_eval(self.y, alpha_natural)
        return evaluate_batch(self.spec, self.y, alpha_natural)

    # ---- prior blocks (scalar fast path) ----------------------------------

    def beta_lp(self, beta: np.ndarray) -> float:
        d = beta - self.mu
        return float(self.mvn_const - 0.5 * (d @ self.beta_prec @ d))

    def beta_lp_shift(self, beta: np.ndarray, j: int, db: float) -> float:
        """log p(beta + db e_j) - log p(beta), via the quadratic-form update."""
        d = beta - self.mu
        return float(-0.5 * db * (2.0 * (self.beta_prec[j] @ d) + db * self.beta_prec[j, j]))

    def gamma_lp(self, g: float) -> float:
        absg = abs(g)
        if absg == 0.0:
            if self.a_gamma == 1.0:
                return math.log(self.b_gamma / 2.0)
            return -math.inf if self.a_gamma > 1.0 else math.inf
        return (
            self.gamma_const + (self.a_gamma - 1.0) * math.log(absg) - self.b_gamma * absg
        )

    def lambda_lp(self, lam: float) -> float:
        if lam <= 0.0 or not math.isfinite(lam):
            return -math.inf
        return (
            self.lambda_const
            - (self.a_lambda + 1.0) * math.log(lam)
            - self.b_lambda / lam
        )

    def comp_lp(self, j: int, x: float) -> float:
        if x <= 0.0 or not math.isfinite(x):
            return -math.inf
        return float(
            self.ig_const[j]
            - (self.ig_shape[j] + 1.0) * math.log(x)
            - self.ig_scale[j] / x
        )

    def dirichlet_lp(self, w: np.ndarray) -> float:
        if np.any(w <= 0.0):
            return -math.inf
        return float(self.dir_const + (self.dir_alpha0 - 1.0) * np.log(w).sum())

    def total_prior(self, beta, gamma, lam, w, comp) -> float:
        total = self.beta_lp(beta) + self.gamma_lp(gamma) + self.lambda_lp(lam)
        for j in range(comp.shape[0]):
            total += self.comp_lp(j, float(comp[j]))
        if self.is_mixture:
            total += self.dirichlet_lp(w)
        return total


def make_context(
    data: SurvivalDataset, spec: PromotionSpec, prior_cfg: PriorConfig | None = None
) -> FitContext:
    """Build the shared read-only workspace the sampling operations take."""
    return FitContext(data, spec, prior_cfg if prior_cfg is not None else PriorConfig())


class ChainState:
    """Mutable per-chain state plus likelihood caches.

    ``latent`` is full length with events pinned to 1.  ``cll`` and ``lp``
    cache the complete-data log likelihood and the (un-tempered) log prior;
    ``eta``, ``th``, ``logf``, ``logF`` cache the per-observation pieces
    they were computed from.
    """

    __slots__ = (
        "beta",
        "gamma",
        "lam",
        "w",
        "comp",
        "latent",
        "heat",
        "eta",
        "th",
        "logf",
        "logF",
        "cll",
        "lp",
        "mwg_try",
        "mwg_acc",
        "mala_try",
        "mala_acc",
        "mala_fallback",
    )

    def __init__(self, ctx: FitContext, heat: float, rng: np.random.Generator):
        k = ctx.k
        self.beta = np.zeros(k)
        self.gamma = 0.1 if rng.random() < 0.5 else -0.1  # random sign
        self.lam = 1.0
        if ctx.is_mixture:
            self.w = np.full(ctx.K, 1.0 / ctx.K)
        else:
            self.w = None
        # promotion parameters start at their prior medians
        self.comp = stats.invgamma.ppf(0.5, ctx.ig_shape, scale=ctx.ig_scale)
        self.latent = np.ones(ctx.n, dtype=np.uint8)
        self.heat = float(heat)
        self.refresh(ctx)
        self.mwg_try = 0
        self.mwg_acc = np.zeros(ctx.n_coord, dtype=np.int64)
        self.mala_try = 0
        self.mala_acc = 0
        self.mala_fallback = 0

    # natural promotion vector consumed by the family evaluators
    def alpha_natural(self) -> np.ndarray:
        if self.w is None:
            return self.comp.copy()
        return np.concatenate([self.w, self.comp])

    def theta(self) -> Theta:
        return Theta(
            beta=self.beta.copy(),
            gamma=self.gamma,
            lam=self.lam,
            alpha=self.alpha_natural(),
        )

    def refresh(self, ctx: FitContext) -> None:
        """Recompute every cache from the current parameters."""
        self.eta = ctx.X @ self.beta if ctx.n else np.empty(0)
        self.th = np.exp(self.eta)
        self.logf, self.logF = ctx.family_eval(self.alpha_natural())
        self.cll = _kernels.complete_ll(
            self.gamma, self.lam, self.eta, self.th, self.logf, self.logF,
            ctx.delta, self.latent,
        )
        self.lp = ctx.total_prior(self.beta, self.gamma, self.lam, self.w, self.comp)

    def swap_payload_with(self, other: "ChainState") -> None:
        """Exchange everything except the heat (used by swap moves)."""
        for name in (
            "beta", "gamma", "lam", "w", "comp", "latent",
            "eta", "th", "logf", "logF", "cll", "lp",
        ):
            a, b = getattr(self, name), getattr(other, name)
            setattr(self, name, b)
            setattr(other, name, a)

    def free_vector(self) -> np.ndarray:
        """Recorded coordinates: gamma, lam, free alpha (mixtures store the
        first K - 1 normalized proportions), then beta."""
        parts = [np.array([self.gamma, self.lam])]
        if self.w is not None:
            parts.append(self.w[:-1])
        parts.append(self.comp)
        parts.append(self.beta)
        return np.concatenate(parts)


# ---------------------------------------------------------------------------
# sweep operations
# ---------------------------------------------------------------------------


def _resolve_scales(ctx: FitContext, cfg: Mc3Config) -> np.ndarray:
    pst = cfg.prop_scale_theta
    if pst is None:
        other = np.full(ctx.k + 2, 0.1)
    else:
        other = np.asarray(pst, dtype=float)
        if other.ndim == 0:
            other = np.full(ctx.k + 2, float(other))
        if other.shape != (ctx.k + 2,):
            raise ConfigError(
                f"prop_scale_theta must be scalar or length {ctx.k + 2} "
                "(gamma, lam, then one per design column)"
            )
        if np.any(other <= 0):
            raise ConfigError("prop_scale_theta entries must be positive")
    return np.concatenate([other[:2], ctx.spec.prop_scale, other[2:]])


def gibbs_update_latent(state: ChainState, ctx: FitContext, rng: np.random.Generator):
    """Draw the latent cure indicators from their tempered full conditional."""
    if ctx.n_cen == 0:
        return state
    probs = np.empty(ctx.n, dtype=float)
    ok = _kernels.latent_probs(
        state.gamma, state.lam, state.eta, state.th, state.logf, state.logF,
        ctx.delta, state.heat, probs,
    )
    u = rng.random(ctx.n_cen)
    if not ok:
        return state  # invalid state: keep the current indicators
    new_vals = (u < probs[ctx.cen_idx]).astype(np.uint8)
    if not np.array_equal(new_vals, state.latent[ctx.cen_idx]):
        state.latent[ctx.cen_idx] = new_vals
        state.cll = _kernels.complete_ll(
            state.gamma, state.lam, state.eta, state.th, state.logf, state.logF,
            ctx.delta, state.latent,
        )
    return state


def mwg_sweep(state: ChainState, ctx: FitContext, cfg: Mc3Config, rng: np.random.Generator):
    """One Metropolis-within-Gibbs pass over all free coordinates.

    Unconstrained coordinates (gamma, beta) take additive Gaussian steps;
    positive ones take multiplicative log-normal steps whose asymmetry is
    absorbed by a Hastings factor proposed/current.  Mixture proportions
    move through their free weights with the simplex Jacobian included.
    """
    scales = _resolve_scales(ctx, cfg)
    eps = rng.standard_normal(ctx.n_coord)
    us = rng.random(ctx.n_coord)
    _mwg_pass(state, ctx, scales, eps, us)
    return state


def _mwg_pass(state: ChainState, ctx: FitContext, scales, eps, us) -> None:
    h = state.heat
    delta, latent = ctx.delta, state.latent
    state.mwg_try += 1

    # gamma ---------------------------------------------------------------
    g2 = state.gamma + scales[0] * eps[0]
    d_prior = ctx.gamma_lp(g2) - ctx.gamma_lp(state.gamma)
    if math.isfinite(d_prior):
        cll2 = _kernels.complete_ll(
            g2, state.lam, state.eta, state.th, state.logf, state.logF, delta, latent
        )
        logr = h * (cll2 - state.cll + d_prior)
        if logr >= 0.0 or math.log(us[0]) < logr:
            state.gamma = g2
            state.cll = cll2
            state.lp += d_prior
            state.mwg_acc[0] += 1

    # lam -------------------------------------------------------------------
    l2 = state.lam * math.exp(scales[1] * eps[1])
    d_prior = ctx.lambda_lp(l2) - ctx.lambda_lp(state.lam)
    if math.isfinite(d_prior):
        cll2 = _kernels.complete_ll(
            state.gamma, l2, state.eta, state.th, state.logf, state.logF, delta, latent
        )
        logr = h * (cll2 - state.cll + d_prior) + math.log(l2 / state.lam)
        if logr >= 0.0 or math.log(us[1]) < logr:
            state.lam = l2
            state.cll = cll2
            state.lp += d_prior
            state.mwg_acc[1] += 1
    pos = 2

    # free mixture weights ----------------------------------------------------
    for jw in range(ctx.n_weights):
        i = pos + jw
        wK = state.w[-1]
        u = state.w[:-1] / wK  # free weights against the pinned last one
        u2 = u.copy()
        u2[jw] = u[jw] * math.exp(scales[i] * eps[i])
        T2 = 1.0 + u2.sum()
        if not math.isfinite(T2):
            continue
        w2 = np.concatenate([u2, [1.0]]) / T2
        d_prior = ctx.dirichlet_lp(w2) - ctx.dirichlet_lp(state.w)
        # current T = 1 + sum u = 1 / w_K, so log T_old = -log w_K
        jac = -ctx.K * (math.log(T2) + math.log(wK))
        hast = math.log(u2[jw] / u[jw])
        alpha2 = np.concatenate([w2, state.comp])
        logf2, logF2 = ctx.family_eval(alpha2)
        cll2 = _kernels.complete_ll(
            state.gamma, state.lam, state.eta, state.th, logf2, logF2, delta, latent
        )
        logr = h * (cll2 - state.cll + d_prior) + jac + hast
        if logr >= 0.0 or math.log(us[i]) < logr:
            state.w = w2
            state.logf, state.logF = logf2, logF2
            state.cll = cll2
            state.lp += d_prior
            state.mwg_acc[i] += 1
    pos += ctx.n_weights

    # component / promotion parameters ---------------------------------------
    for jc in range(ctx.n_comp_params):
        i = pos + jc
        a2 = state.comp[jc] * math.exp(scales[i] * eps[i])
        d_prior = ctx.comp_lp(jc, a2) - ctx.comp_lp(jc, float(state.comp[jc]))
        if not math.isfinite(d_prior):
            continue
        comp2 = state.comp.copy()
        comp2[jc] = a2
        alpha2 = np.concatenate([state.w, comp2]) if ctx.is_mixture else comp2
        logf2, logF2 = ctx.family_eval(alpha2)
        cll2 = _kernels.complete_ll(
            state.gamma, state.lam, state.eta, state.th, logf2, logF2, delta, latent
        )
        logr = h * (cll2 - state.cll + d_prior) + math.log(a2 / state.comp[jc])
        if logr >= 0.0 or math.log(us[i]) < logr:
            state.comp = comp2
            state.logf, state.logF = logf2, logF2
            state.cll = cll2
            state.lp += d_prior
            state.mwg_acc[i] += 1
    pos += ctx.n_comp_params

    # beta --------------------------------------------------------------------
    for jb in range(ctx.k):
        i = pos + jb
        db = scales[i] * eps[i]
        beta2 = state.beta.copy()
        beta2[jb] += db
        d_prior = ctx.beta_lp_shift(state.beta, jb, db)
        cll2 = _kernels.complete_ll_beta_shift(
            state.gamma, state.lam, state.eta, ctx.XT[jb], db,
            state.logf, state.logF, delta, latent,
        )
        logr = h * (cll2 - state.cll + d_prior)
        if logr >= 0.0 or math.log(us[i]) < logr:
            state.beta = beta2
            state.eta = state.eta + ctx.XT[jb] * db
            state.th = np.exp(state.eta)
            state.cll = cll2
            state.lp += d_prior
            state.mwg_acc[i] += 1


# ---------------------------------------------------------------------------
# MALA
# ---------------------------------------------------------------------------


def numeric_gradient(fn, z: np.ndarray, fd_step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient with per-coordinate step fd_step * max(1, |z_j|).

    Raises GradientUnavailable when any stencil evaluation is non-finite.
    """
    z = np.asarray(z, dtype=float)
    grad = np.empty(z.shape[0])
    for j in range(z.shape[0]):
        step = fd_step * max(1.0, abs(z[j]))
        zp = z.copy()
        zp[j] += step
        fp = fn(zp)
        zp[j] -= 2.0 * step
        fm = fn(zp)
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise GradientUnavailable(
                f"target is not finite near coordinate {j} (f+={fp!r}, f-={fm!r})"
            )
        grad[j] = (fp - fm) / (2.0 * step)
    return grad


def mala_step(z, lp_z, logpi, grad_fn, tau, rng):
    """One MALA update for an arbitrary log target.

    Returns (z, lp, accepted).  ``grad_fn`` may raise GradientUnavailable;
    at the proposal that simply rejects the move.
    """
    g = grad_fn(z)
    eps = rng.standard_normal(z.shape[0])
    z2 = z + tau * g + math.sqrt(2.0 * tau) * eps
    u = rng.random()
    lp2 = logpi(z2)
    if not math.isfinite(lp2):
        return z, lp_z, False
    try:
        g2 = grad_fn(z2)
    except GradientUnavailable:
        return z, lp_z, False
    lq_fwd = -0.5 * float(eps @ eps)
    rev = z - z2 - tau * g2
    lq_rev = -float(rev @ rev) / (4.0 * tau)
    logr = lp2 - lp_z + lq_rev - lq_fwd
    if logr >= 0.0 or math.log(u) < logr:
        return z2, lp2, True
    return z, lp_z, False


def _pack_z(state: ChainState, ctx: FitContext) -> np.ndarray:
    parts = [np.array([state.gamma, math.log(state.lam)])]
    if ctx.is_mixture:
        parts.append(np.log(state.w[:-1] / state.w[-1]))
    parts.append(np.log(state.comp))
    parts.append(state.beta)
    return np.concatenate(parts)


def _unpack_z(z: np.ndarray, ctx: FitContext):
    gamma = float(z[0])
    lam = math.exp(float(z[1]))
    pos = 2
    if ctx.is_mixture:
        u = np.exp(z[pos : pos + ctx.n_weights])
        T = 1.0 + u.sum()
        w = np.concatenate([u, [1.0]]) / T
        pos += ctx.n_weights
    else:
        w = None
    comp = np.exp(z[pos : pos + ctx.n_comp_params])
    pos += ctx.n_comp_params
    beta = z[pos:].copy()
    return gamma, lam, w, comp, beta


def _log_jacobian(z: np.ndarray, ctx: FitContext) -> float:
    """log |d(natural)/dz| for the transform used by MALA.

    Positive coordinates contribute z_j; the weight block additionally
    carries the simplex factor -K log(1 + sum u).
    """
    total = float(z[1])  # lam
    pos = 2
    if ctx.is_mixture:
        zw = z[pos : pos + ctx.n_weights]
        total += float(zw.sum()) - ctx.K * math.log1p(float(np.exp(zw).sum()))
        pos += ctx.n_weights
    total += float(z[pos : pos + ctx.n_comp_params].sum())
    return total


class _ZEval:
    """Full evaluation of the tempered z-space target, keeping the caches."""

    __slots__ = ("target", "gamma", "lam", "w", "comp", "beta", "eta", "th",
                 "logf", "logF", "cll", "lp")

    def __init__(self, ctx: FitContext, latent: np.ndarray, heat: float, z: np.ndarray):
        gamma, lam, w, comp, beta = _unpack_z(z, ctx)
        self.gamma, self.lam, self.w, self.comp, self.beta = gamma, lam, w, comp, beta
        self.target = -math.inf
        if not (math.isfinite(lam) and np.all(np.isfinite(comp)) and np.all(comp > 0)):
            return
        if w is not None and not np.all(w > 0.0):
            return
        self.eta = ctx.X @ beta if ctx.n else np.empty(0)
        self.th = np.exp(self.eta)
        alpha = np.concatenate([w, comp]) if w is not None else comp
        try:
            self.logf, self.logF = ctx.family_eval(alpha)
        except DomainError:
            return
        self.cll = _kernels.complete_ll(
            gamma, lam, self.eta, self.th, self.logf, self.logF, ctx.delta, latent
        )
        self.lp = ctx.total_prior(beta, gamma, lam, w, comp)
        raw = heat * (self.cll + self.lp) + _log_jacobian(z, ctx)
        self.target = raw if math.isfinite(raw) else -math.inf


def _grad_z(ctx: FitContext, state_like, latent, heat, z, fd_step) -> np.ndarray:
    """Incremental central-difference gradient of the tempered z target.

    ``state_like`` supplies the caches (eta, th, logf, logF) consistent with
    z; only the pieces a coordinate touches are recomputed per stencil
    point.  The Jacobian derivative is added analytically.
    """
    grad = np.empty(ctx.n_coord)
    eta, th = state_like.eta, state_like.th
    logf, logF = state_like.logf, state_like.logF
    delta = ctx.delta

    def diff(j, f_plus, f_minus):
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise GradientUnavailable(f"non-finite stencil at coordinate {j}")
        return f_plus - f_minus

    # gamma
    step = fd_step * max(1.0, abs(z[0]))
    gp, gm = z[0] + step, z[0] - step
    fp = heat * (
        _kernels.complete_ll(gp, state_like.lam, eta, th, logf, logF, delta, latent)
        + ctx.gamma_lp(gp)
    )
    fm = heat * (
        _kernels.complete_ll(gm, state_like.lam, eta, th, logf, logF, delta, latent)
        + ctx.gamma_lp(gm)
    )
    grad[0] = diff(0, fp, fm) / (2.0 * step)

    # log lam: d(logJ)/dz = 1
    step = fd_step * max(1.0, abs(z[1]))
    lp_, lm_ = math.exp(z[1] + step), math.exp(z[1] - step)
    fp = heat * (
        _kernels.complete_ll(state_like.gamma, lp_, eta, th, logf, logF, delta, latent)
        + ctx.lambda_lp(lp_)
    )
    fm = heat * (
        _kernels.complete_ll(state_like.gamma, lm_, eta, th, logf, logF, delta, latent)
        + ctx.lambda_lp(lm_)
    )
    grad[1] = diff(1, fp, fm) / (2.0 * step) + 1.0

    pos = 2
    if ctx.is_mixture:
        zw = z[pos : pos + ctx.n_weights]
        u0 = np.exp(zw)
        T0 = 1.0 + u0.sum()
        for jw in range(ctx.n_weights):
            i = pos + jw
            step = fd_step * max(1.0, abs(z[i]))
            vals = []
            for sgn in (1.0, -1.0):
                u2 = u0.copy()
                u2[jw] = math.exp(z[i] + sgn * step)
                T2 = 1.0 + u2.sum()
                w2 = np.concatenate([u2, [1.0]]) / T2
                alpha2 = np.concatenate([w2, state_like.comp])
                logf2, logF2 = ctx.family_eval(alpha2)
                cll2 = _kernels.complete_ll(
                    state_like.gamma, state_like.lam, eta, th, logf2, logF2,
                    delta, latent,
                )
                vals.append(heat * (cll2 + ctx.dirichlet_lp(w2)))
            # d/dz of (sum z_w - K log T) = 1 - K u_j / T
            grad[i] = diff(i, vals[0], vals[1]) / (2.0 * step) + 1.0 - ctx.K * u0[jw] / T0
        pos += ctx.n_weights

    for jc in range(ctx.n_comp_params):
        i = pos + jc
        step = fd_step * max(1.0, abs(z[i]))
        vals = []
        for sgn in (1.0, -1.0):
            comp2 = state_like.comp.copy()
            comp2[jc] = math.exp(z[i] + sgn * step)
            alpha2 = (
                np.concatenate([state_like.w, comp2]) if ctx.is_mixture else comp2
            )
            logf2, logF2 = ctx.family_eval(alpha2)
            cll2 = _kernels.complete_ll(
                state_like.gamma, state_like.lam, eta, th, logf2, logF2, delta, latent
            )
            vals.append(heat * (cll2 + ctx.comp_lp(jc, float(comp2[jc]))))
        grad[i] = diff(i, vals[0], vals[1]) / (2.0 * step) + 1.0
    pos += ctx.n_comp_params

    for jb in range(ctx.k):
        i = pos + jb
        step = fd_step * max(1.0, abs(z[i]))
        vals = []
        for sgn in (1.0, -1.0):
            cll2 = _kernels.complete_ll_beta_shift(
                state_like.gamma, state_like.lam, eta, ctx.XT[jb], sgn * step,
                logf, logF, delta, latent,
            )
            # constant beta_lp(beta) cancels in the central difference
            vals.append(heat * (cll2 + ctx.beta_lp_shift(state_like.beta, jb, sgn * step)))
        grad[i] = diff(i, vals[0], vals[1]) / (2.0 * step)
    return grad


def mala_sweep(state: ChainState, ctx: FitContext, cfg: Mc3Config, rng: np.random.Generator):
    """One MALA update of all free coordinates in transformed space.

    On GradientUnavailable at the current state the sweep is a no-op and the
    fallback counter is incremented (run_mc3 then runs an MWG pass instead).
    """
    _mala_pass(state, ctx, cfg.mala_tau, cfg.fd_step, rng)
    return state


def _mala_pass(state: ChainState, ctx: FitContext, tau, fd_step, rng) -> bool:
    z = _pack_z(state, ctx)
    try:
        g = _grad_z(ctx, state, state.latent, state.heat, z, fd_step)
    except GradientUnavailable:
        state.mala_fallback += 1
        return False
    state.mala_try += 1
    eps = rng.standard_normal(ctx.n_coord)
    z2 = z + tau * g + math.sqrt(2.0 * tau) * eps
    u = rng.random()
    ev = _ZEval(ctx, state.latent, state.heat, z2)
    if not math.isfinite(ev.target):
        return True
    try:
        g2 = _grad_z(ctx, ev, state.latent, state.heat, z2, fd_step)
    except GradientUnavailable:
        return True
    base = state.heat * (state.cll + state.lp) + _log_jacobian(z, ctx)
    lq_fwd = -0.5 * float(eps @ eps)
    rev = z - z2 - tau * g2
    lq_rev = -float(rev @ rev) / (4.0 * tau)
    logr = ev.target - base + lq_rev - lq_fwd
    if logr >= 0.0 or math.log(u) < logr:
        state.gamma, state.lam = ev.gamma, ev.lam
        state.w, state.comp, state.beta = ev.w, ev.comp, ev.beta
        state.eta, state.th = ev.eta, ev.th
        state.logf, state.logF = ev.logf, ev.logF
        state.cll, state.lp = ev.cll, ev.lp
        state.mala_acc += 1
    return True


# ---------------------------------------------------------------------------
# swaps and the main loop
# ---------------------------------------------------------------------------


def swap_move(states: list, rng: np.random.Generator, attempts=None, accepts=None) -> int:
    """Attempt one swap between a uniformly chosen adjacent pair.

    Acceptance probability: min(1, exp[(h_c - h_{c+1}) (psi_{c+1} - psi_c)])
    with psi the un-tempered complete-data log posterior.  Returns the lower
    index of the attempted pair, or -1 for a single chain.
    """
    C = len(states)
    if C < 2:
        return -1
    j = int(rng.integers(C - 1))
    u = float(rng.random())
    si, sj = states[j], states[j + 1]
    psi_i = si.cll + si.lp
    psi_j = sj.cll + sj.lp
    logr = (si.heat - sj.heat) * (psi_j - psi_i)
    if attempts is not None:
        attempts[j] += 1
    if logr >= 0.0 or math.log(u) < logr:
        si.swap_payload_with(sj)
        if accepts is not None:
            accepts[j] += 1
    return j


@dataclass
class FitResult:
    """Recorded cold-chain output plus model-choice summaries."""

    samples: np.ndarray
    columns: tuple
    latent_draws: np.ndarray | None
    censored_index: np.ndarray
    observed_loglik: np.ndarray
    log_prior_trace: np.ndarray
    complete_ll_trace: np.ndarray
    swap_attempts: np.ndarray
    swap_accepts: np.ndarray
    temperatures: tuple
    map_index: int
    npar: int
    bic: float
    aic: float
    n_obs: int
    design_columns: tuple
    spec: PromotionSpec
    prior_cfg: PriorConfig
    cfg: Mc3Config
    runtime_seconds: float
    accept_stats: dict = field(default_factory=dict)

    @property
    def log_posterior_trace(self) -> np.ndarray:
        """Un-normalized observed-data log posterior per recorded cycle."""
        return self.observed_loglik + self.log_prior_trace

    @property
    def swap_accept_rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.where(
                self.swap_attempts > 0, self.swap_accepts / self.swap_attempts, np.nan
            )

    @property
    def map_row(self) -> np.ndarray:
        return self.samples[self.map_index]

    def theta_from_row(self, row: np.ndarray) -> Theta:
        """Rebuild a full parameter state from one recorded sample row."""
        spec = self.spec
        gamma, lam = float(row[0]), float(row[1])
        a = row[2 : 2 + spec.d]
        if spec.is_mixture:
            w_free = a[: spec.n_components - 1]
            w = np.concatenate([w_free, [1.0 - float(w_free.sum())]])
            alpha = np.concatenate([w, a[spec.n_components - 1 :]])
        else:
            alpha = a.copy()
        beta = row[2 + spec.d :].copy()
        return Theta(beta=beta, gamma=gamma, lam=lam, alpha=alpha)

    @property
    def map_estimate(self) -> Theta:
        return self.theta_from_row(self.map_row)

    def default_burn_in(self) -> int:
        return self.samples.shape[0] // 3


def _sample_columns(spec: PromotionSpec, k: int) -> tuple:
    cols = ["g_mcmc", "lambda_mcmc"]
    cols += [f"a{i + 1}_mcmc" for i in range(spec.d)]
    cols += [f"b{j}_mcmc" for j in range(k)]
    return tuple(cols)


def _chain_cycle(ctx, state, rng, sweeps, mala_p, scales, tau, fd_step) -> None:
    n_cen = ctx.n_cen
    eps = rng.standard_normal((sweeps, ctx.n_coord))
    us = rng.random((sweeps, ctx.n_coord))
    ug = rng.random((sweeps, n_cen))
    gate = rng.random(sweeps) if mala_p > 0.0 else None
    for s in range(sweeps):
        if n_cen:
            cll = _kernels.gibbs_and_cll(
                state.gamma, state.lam, state.eta, state.th, state.logf,
                state.logF, ctx.delta, state.heat, ug[s], state.latent,
            )
            if math.isnan(cll):
                raise RuntimeError("invalid survival base in a retained state")
            state.cll = cll
        if gate is not None and gate[s] < mala_p:
            if not _mala_pass(state, ctx, tau, fd_step, rng):
                _mwg_pass(state, ctx, scales, eps[s], us[s])
        else:
            _mwg_pass(state, ctx, scales, eps[s], us[s])


def _validate_state(ctx: FitContext, state: ChainState) -> None:
    fresh = ChainState.__new__(ChainState)
    for name in ("beta", "gamma", "lam", "w", "comp", "latent", "heat"):
        setattr(fresh, name, getattr(state, name))
    fresh.refresh(ctx)
    if not np.allclose(fresh.cll, state.cll, rtol=0.0, atol=1e-9):
        raise RuntimeError(
            f"complete-log-likelihood cache drifted: {state.cll!r} vs {fresh.cll!r}"
        )
    ref_prior = log_prior(state.theta(), ctx.prior_cfg, ctx.spec)
    if not np.allclose(ref_prior, state.lp, rtol=0.0, atol=1e-9):
        raise RuntimeError(f"log-prior cache drifted: {state.lp!r} vs {ref_prior!r}")


def run_mc3(
    data: SurvivalDataset,
    spec: PromotionSpec,
    prior_cfg: PriorConfig | None = None,
    cfg: Mc3Config | None = None,
) -> FitResult:
    """Run the full Metropolis-coupled sampler and record the cold chain.

    Returns a FitResult whose sample matrix has one row per cycle and
    columns named g_mcmc, lambda_mcmc, a1_mcmc..ad_mcmc, b0_mcmc..b{k-1}_mcmc.
    The MAP estimate is the recorded draw with the highest observed-data log
    posterior; BIC/AIC use the observed log likelihood of that draw with
    npar = d + k + 2.
    """
    t_start = time.perf_counter()
    prior_cfg = prior_cfg if prior_cfg is not None else PriorConfig()
    cfg = cfg if cfg is not None else Mc3Config()
    ctx = make_context(data, spec, prior_cfg)
    C = cfg.n_chains
    temps = (
        cfg.temperatures
        if cfg.temperatures is not None
        else default_temperatures(C, cfg.epsilon0)
    )
    scales = _resolve_scales(ctx, cfg)

    ss = np.random.SeedSequence(cfg.seed)
    children = ss.spawn(C + 1)
    chain_rngs = [np.random.default_rng(s) for s in children[:C]]
    coord_rng = np.random.default_rng(children[C])

    states = [ChainState(ctx, temps[c], chain_rngs[c]) for c in range(C)]

    m = cfg.mcmc_cycles
    ncol = 2 + spec.d + ctx.k
    samples = np.empty((m, ncol))
    obs_trace = np.empty(m)
    prior_trace = np.empty(m)
    cll_trace = np.empty((C, m))
    latent_store = (
        np.empty((m, ctx.n_cen), dtype=np.uint8) if cfg.record_latent else None
    )
    swap_attempts = np.zeros(max(C - 1, 0), dtype=np.int64)
    swap_accepts = np.zeros(max(C - 1, 0), dtype=np.int64)

    pool = (
        ThreadPoolExecutor(max_workers=min(cfg.threads, C))
        if cfg.threads > 1 and C > 1
        else None
    )

    def one_chain(c):
        _chain_cycle(
            ctx, states[c], chain_rngs[c], cfg.sweeps_per_cycle,
            cfg.mala_probability, scales, cfg.mala_tau, cfg.fd_step,
        )

    try:
        for cycle in range(m):
            if pool is not None:
                list(pool.map(one_chain, range(C)))
            else:
                for c in range(C):
                    one_chain(c)
            if C > 1:
                swap_move(states, coord_rng, swap_attempts, swap_accepts)
            cold = states[0]
            samples[cycle] = cold.free_vector()
            obs_trace[cycle] = _kernels.observed_ll(
                cold.gamma, cold.lam, cold.eta, cold.th, cold.logf, cold.logF,
                ctx.delta,
            )
            prior_trace[cycle] = cold.lp
            for c in range(C):
                cll_trace[c, cycle] = states[c].cll
            if latent_store is not None and ctx.n_cen:
                latent_store[cycle] = cold.latent[ctx.cen_idx]
            if cfg.validate_caches:
                for c in range(C):
                    _validate_state(ctx, states[c])
    finally:
        if pool is not None:
            pool.shutdown()

    lp_post = obs_trace + prior_trace
    map_index = int(np.argmax(lp_post))
    npar = spec.d + ctx.k + 2
    llhat = float(obs_trace[map_index])
    n_obs = ctx.n
    bic = -2.0 * llhat + npar * math.log(n_obs) if n_obs else math.nan
    aic = -2.0 * llhat + 2.0 * npar

    accept_stats = {
        "mwg_accept_rate": [
            (st.mwg_acc / max(st.mwg_try, 1)).tolist() for st in states
        ],
        "mala_attempts": [st.mala_try for st in states],
        "mala_accepts": [st.mala_acc for st in states],
        "mala_fallbacks": [st.mala_fallback for st in states],
    }

    return FitResult(
        samples=samples,
        columns=_sample_columns(spec, ctx.k),
        latent_draws=latent_store,
        censored_index=ctx.cen_idx.copy(),
        observed_loglik=obs_trace,
        log_prior_trace=prior_trace,
        complete_ll_trace=cll_trace,
        swap_attempts=swap_attempts,
        swap_accepts=swap_accepts,
        temperatures=tuple(temps),
        map_index=map_index,
        npar=npar,
        bic=bic,
        aic=aic,
        n_obs=n_obs,
        design_columns=data.column_names,
        spec=spec,
        prior_cfg=prior_cfg,
        cfg=cfg,
        runtime_seconds=time.perf_counter() - t_start,
        accept_stats=accept_stats,
    )
