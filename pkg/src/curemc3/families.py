"""Promotion-time distribution families.

Every family maps an observation time ``y > 0`` and a positive parameter
vector to the pair ``(log_f, log_F)``: the log density and log CDF of the
latent event-time distribution that drives the cure-rate model.  All
evaluation happens in log space so far tails stay usable inside likelihoods.

Built-in families and their parameter vectors:

============  =========================================  ==========
name          parameters                                 length
============  =========================================  ==========
exponential   (rate,)                                    1
weibull       (rate, shape)                              2
gamma         (shape, rate)                              2
logLogistic   (shape, scale)                             2
gompertz      (shape, rate)                              2
lomax         (shape, scale)                             2
dagum         (scale, shape1, shape2)                    3
============  =========================================  ==========

Mixtures (``gamma_mixture``, ``user_mixture``) take a parameter vector laid
out as ``(w_1, ..., w_K, comp_1 params, ..., comp_K params)`` where the
mixing proportions ``w`` are positive and sum to one.  The free-parameter
count of a mixture is ``K * d_component + (K - 1)`` because one proportion
is redundant.

User families are registered with :func:`register_user_family` and supply a
scalar callable ``eval_fn(y, alpha) -> (log_f, log_F)``; batched entry
points loop over observations for them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .errors import DomainError, RegistrationError

__all__ = [
    "BUILTIN_FAMILIES",
    "MIXTURE_FAMILIES",
    "PromotionSpec",
    "promotion_spec",
    "register_user_family",
    "registered_families",
    "evaluate",
    "evaluate_mixture",
    "evaluate_batch",
    "evaluate_over_draws",
]

_LOG2 = float(np.log(2.0))


def _log1mexp(z):
    """log(1 - exp(-z)) for z >= 0, stable on both ends (z=0 gives -inf)."""
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        small = np.log(-np.expm1(-np.minimum(z, _LOG2)))
        large = np.log1p(-np.exp(-np.maximum(z, _LOG2)))
    return np.where(z < _LOG2, small, large)


# ---------------------------------------------------------------------------
# built-in evaluators: broadcast over y and over leading axes of alpha
# ---------------------------------------------------------------------------


def _eval_exponential(y, a):
    rate = a[..., 0]
    z = rate * y
    log_f = np.log(rate) - z
    return log_f, _log1mexp(z)


def _eval_weibull(y, a):
    rate, shape = a[..., 0], a[..., 1]
    with np.errstate(over="ignore"):
        z = np.exp(shape * (np.log(rate) + np.log(y)))
    log_f = np.log(shape) + shape * np.log(rate) + (shape - 1.0) * np.log(y) - z
    return log_f, _log1mexp(z)


def _eval_gamma(y, a):
    shape, rate = a[..., 0], a[..., 1]
    log_f = (
        shape * np.log(rate)
        - special.gammaln(shape)
        + (shape - 1.0) * np.log(y)
        - rate * y
    )
    with np.errstate(divide="ignore"):
        log_F = np.log(special.gammainc(shape, rate * y))
    return log_f, log_F


def _eval_loglogistic(y, a):
    shape, scale = a[..., 0], a[..., 1]
    t = shape * (np.log(y) - np.log(scale))
    log_f = (
        np.log(shape)
        + (shape - 1.0) * np.log(y)
        - shape * np.log(scale)
        - 2.0 * np.logaddexp(0.0, t)
    )
    log_F = -np.logaddexp(0.0, -t)
    return log_f, log_F


def _eval_gompertz(y, a):
    shape, rate = a[..., 0], a[..., 1]
    with np.errstate(over="ignore"):
        u = (rate / shape) * np.expm1(shape * y)
    log_f = np.log(rate) + shape * y - u
    return log_f, _log1mexp(u)


def _eval_lomax(y, a):
    shape, scale = a[..., 0], a[..., 1]
    w = np.log1p(y / scale)
    log_f = np.log(shape) - np.log(scale) - (1.0 + shape) * w
    return log_f, _log1mexp(shape * w)


def _eval_dagum(y, a):
    scale, sh1, sh2 = a[..., 0], a[..., 1], a[..., 2]
    t = sh1 * (np.log(y) - np.log(scale))
    log_f = (
        np.log(sh1)
        + np.log(sh2)
        - np.log(scale)
        + (sh1 * sh2 - 1.0) * (np.log(y) - np.log(scale))
        - (sh2 + 1.0) * np.logaddexp(0.0, t)
    )
    log_F = -sh2 * np.logaddexp(0.0, -t)
    return log_f, log_F


_BUILTIN_EVAL = {
    "exponential": (1, _eval_exponential),
    "weibull": (2, _eval_weibull),
    "gamma": (2, _eval_gamma),
    "logLogistic": (2, _eval_loglogistic),
    "gompertz": (2, _eval_gompertz),
    "lomax": (2, _eval_lomax),
    "dagum": (3, _eval_dagum),
}

BUILTIN_FAMILIES = tuple(_BUILTIN_EVAL) + ("gamma_mixture",)
MIXTURE_FAMILIES = ("gamma_mixture", "user_mixture")

# name -> (d, scalar eval_fn); populated by register_user_family
_USER_REGISTRY: dict[str, tuple[int, Callable]] = {}


@dataclass(frozen=True, eq=False)
class PromotionSpec:
    """Resolved promotion-time configuration.

    ``d`` counts the free (sampled) parameters; for mixtures the natural
    parameter vector passed to the evaluators has one extra entry because
    all K proportions are stored explicitly.
    """

    family: str
    d: int
    n_components: int = 1
    d_component: int = 0
    prior_parameters: np.ndarray = field(default=None, repr=False)
    prop_scale: np.ndarray = field(default=None, repr=False)
    dirichlet_concentration: float = 1.0
    eval_fn: Callable | None = field(default=None, repr=False)

    @property
    def is_mixture(self) -> bool:
        return self.n_components > 1

    @property
    def natural_dim(self) -> int:
        """Length of the natural parameter vector the evaluators consume."""
        if self.is_mixture:
            return self.n_components + self.n_components * self.d_component
        return self.d

    def natural_names(self):
        """Labels for the natural parameter entries, mirroring the layout."""
        if not self.is_mixture:
            return [f"alpha{i + 1}" for i in range(self.d)]
        names = [f"w{k + 1}" for k in range(self.n_components)]
        for k in range(self.n_components):
            names += [
                f"alpha{j + 1}[{k + 1}]" for j in range(self.d_component)
            ]
        return names


def registered_families():
    """Names currently accepted by :func:`promotion_spec`."""
    return BUILTIN_FAMILIES + ("user", "user_mixture") + tuple(_USER_REGISTRY)


def register_user_family(name: str, d: int, eval_fn: Callable) -> PromotionSpec:
    """Register a scalar evaluator as a reusable promotion-time family.

    ``eval_fn(y, alpha)`` must accept a positive float and a length-``d``
    positive parameter vector and return the pair ``(log_f, log_F)``.  The
    returned spec is immediately usable wherever a built-in spec is, and
    the name becomes available to :func:`promotion_spec`.
    """
    if not isinstance(d, int) or d < 1:
        raise RegistrationError(f"user family {name!r} must declare d >= 1, got {d!r}")
    if not callable(eval_fn):
        raise RegistrationError(f"user family {name!r} needs a callable evaluator")
    if name in BUILTIN_FAMILIES or name in ("user", "user_mixture"):
        raise RegistrationError(f"family name {name!r} is reserved")
    _USER_REGISTRY[name] = (d, eval_fn)
    return promotion_spec(name)


def _resolve_base(family, eval_fn, d_component):
    """Return (d_component, vector_eval_or_None, scalar_eval_or_None)."""
    if family in _BUILTIN_EVAL:
        d, fn = _BUILTIN_EVAL[family]
        return d, fn, None
    if family == "gamma_mixture":
        d, fn = _BUILTIN_EVAL["gamma"]
        return d, fn, None
    if family in _USER_REGISTRY:
        d, fn = _USER_REGISTRY[family]
        return d, None, fn
    if family in ("user", "user_mixture"):
        if eval_fn is None:
            raise RegistrationError(
                f"family {family!r} requires eval_fn (or register one by name first)"
            )
        if d_component is None or d_component < 1:
            raise RegistrationError(
                f"family {family!r} requires d_component >= 1 declaring its parameter count"
            )
        return int(d_component), None, eval_fn
    raise DomainError(f"unknown promotion-time family {family!r}")


def promotion_spec(
    family: str,
    *,
    n_components: int = 1,
    prior_parameters=None,
    prop_scale=None,
    dirichlet_concentration: float = 1.0,
    eval_fn: Callable | None = None,
    d_component: int | None = None,
) -> PromotionSpec:
    """Build a :class:`PromotionSpec` with defaulted hyper-parameters.

    ``prior_parameters`` rows are inverse-gamma (shape, scale) pairs for the
    positive parameters, defaulting to (2.1, 1.1).  For mixtures a
    ``(d_component, 2, K)`` array is also accepted and flattened per
    component.  ``prop_scale`` defaults to 0.1 for every free coordinate.
    """
    mixture = family in MIXTURE_FAMILIES
    if mixture:
        if n_components < 2:
            raise DomainError(
                f"mixture family {family!r} needs n_components >= 2, got {n_components}"
            )
        K = int(n_components)
    else:
        if n_components != 1:
            raise DomainError(f"family {family!r} is not a mixture; leave n_components at 1")
        K = 1

    base_name = family if family != "user_mixture" else "user"
    d_comp, _, scalar_fn = _resolve_base(
        family if not mixture or family == "gamma_mixture" else base_name,
        eval_fn,
        d_component,
    )
    if family in _USER_REGISTRY or family in ("user", "user_mixture"):
        eval_fn = scalar_fn
    else:
        eval_fn = None

    if mixture:
        d = K * d_comp + (K - 1)
        n_pos = K * d_comp
    else:
        d = d_comp
        n_pos = d

    if prior_parameters is None:
        prior = np.tile((2.1, 1.1), (n_pos, 1)).astype(float)
    else:
        prior = np.asarray(prior_parameters, dtype=float)
        if mixture and prior.ndim == 3:
            # accept (d_component, 2, K): flatten grouped by component
            if prior.shape != (d_comp, 2, K):
                raise DomainError(
                    f"mixture prior_parameters must have shape ({d_comp}, 2, {K}), got {prior.shape}"
                )
            prior = np.concatenate([prior[:, :, k] for k in range(K)], axis=0)
        if prior.shape != (n_pos, 2):
            raise DomainError(
                f"prior_parameters must have shape ({n_pos}, 2), got {prior.shape}"
            )
        if np.any(prior <= 0):
            raise DomainError("inverse-gamma prior parameters must be positive")

    if prop_scale is None:
        scales = np.full(d, 0.1)
    else:
        scales = np.asarray(prop_scale, dtype=float)
        if scales.ndim == 0:
            scales = np.full(d, float(scales))
        if scales.shape != (d,):
            raise DomainError(f"prop_scale must have length {d}, got shape {scales.shape}")
        if np.any(scales <= 0):
            raise DomainError("prop_scale entries must be positive")

    if dirichlet_concentration <= 0:
        raise DomainError("dirichlet_concentration must be positive")

    return PromotionSpec(
        family=family,
        d=d,
        n_components=K,
        d_component=d_comp,
        prior_parameters=prior,
        prop_scale=scales,
        dirichlet_concentration=float(dirichlet_concentration),
        eval_fn=eval_fn,
    )


# ---------------------------------------------------------------------------
# evaluation entry points
# ---------------------------------------------------------------------------


def _check_alpha(spec: PromotionSpec, alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape[-1] != spec.natural_dim:
        raise DomainError(
            f"family {spec.family!r} expects {spec.natural_dim} natural parameters, "
            f"got {alpha.shape[-1]}"
        )
    if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
        raise DomainError("promotion-time parameters must be positive and finite")
    return alpha


def _mixture_split(spec: PromotionSpec, alpha: np.ndarray):
    K, dc = spec.n_components, spec.d_component
    w = alpha[..., :K]
    comps = [alpha[..., K + k * dc : K + (k + 1) * dc] for k in range(K)]
    return w, comps


def _vector_eval(spec: PromotionSpec, y, alpha):
    """Dispatch on family; y and alpha must already be validated."""
    if spec.is_mixture:
        w, comps = _mixture_split(spec, alpha)
        if spec.family == "gamma_mixture":
            parts = [_eval_gamma(y, ak) for ak in comps]
        else:
            parts = [_scalar_map(spec.eval_fn, y, ak) for ak in comps]
        lf = np.stack([p[0] for p in parts])
        lF = np.stack([p[1] for p in parts])
        lw = np.log(np.moveaxis(np.asarray(w), -1, 0))
        while lw.ndim < lf.ndim:
            lw = lw[..., None]
        log_f = special.logsumexp(lf + lw, axis=0)
        log_F = special.logsumexp(lF + lw, axis=0)
        return log_f, log_F
    if spec.eval_fn is not None:
        return _scalar_map(spec.eval_fn, y, alpha)
    _, fn = _BUILTIN_EVAL[spec.family]
    return fn(y, alpha)


def _scalar_map(fn, y, alpha):
    """Apply a scalar user evaluator over whichever of y/alpha is batched."""
    y = np.asarray(y, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim == 1 and y.ndim == 0:
        lf, lF = fn(float(y), alpha)
        return np.float64(lf), np.float64(lF)
    if alpha.ndim == 1:
        out = [fn(float(t), alpha) for t in y.ravel()]
    else:
        # one parameter row per evaluation, fixed y
        out = [fn(float(y), row) for row in alpha.reshape(-1, alpha.shape[-1])]
    lf = np.array([o[0] for o in out], dtype=float)
    lF = np.array([o[1] for o in out], dtype=float)
    shape = y.shape if alpha.ndim == 1 else alpha.shape[:-1]
    return lf.reshape(shape), lF.reshape(shape)


def evaluate(spec: PromotionSpec, y: float, alpha) -> tuple[float, float]:
    """Evaluate (log_f, log_F) at a single positive time.

    Raises DomainError for y <= 0 or invalid parameters.  Mixture specs are
    delegated to :func:`evaluate_mixture`.
    """
    if spec.is_mixture:
        return evaluate_mixture(spec, y, alpha)
    y = float(y)
    if not np.isfinite(y) or y <= 0.0:
        raise DomainError(f"observation time must be positive, got {y!r}")
    alpha = _check_alpha(spec, alpha)
    if alpha.ndim != 1:
        raise DomainError("evaluate takes a single parameter vector; use the batch entry points")
    lf, lF = _vector_eval(spec, y, alpha)
    return float(lf), float(lF)


def evaluate_mixture(spec: PromotionSpec, y: float, alpha) -> tuple[float, float]:
    """Evaluate a mixture family at a single time; proportions must sum to one."""
    if not spec.is_mixture:
        raise DomainError(f"family {spec.family!r} is not a mixture")
    y = float(y)
    if not np.isfinite(y) or y <= 0.0:
        raise DomainError(f"observation time must be positive, got {y!r}")
    alpha = _check_alpha(spec, alpha)
    if alpha.ndim != 1:
        raise DomainError("evaluate_mixture takes a single parameter vector")
    w = alpha[: spec.n_components]
    if abs(float(w.sum()) - 1.0) > 1e-12:
        raise DomainError(f"mixture proportions must sum to one, got {w.sum()!r}")
    lf, lF = _vector_eval(spec, y, alpha)
    return float(lf), float(lF)


def evaluate_batch(spec: PromotionSpec, y, alpha):
    """Vectorized (log_f, log_F) over an array of times at one parameter vector."""
    y = np.asarray(y, dtype=float)
    if y.size and (not np.all(np.isfinite(y)) or np.any(y <= 0.0)):
        raise DomainError("observation times must be positive and finite")
    alpha = _check_alpha(spec, alpha)
    lf, lF = _vector_eval(spec, y, alpha)
    return np.asarray(lf, dtype=float), np.asarray(lF, dtype=float)


def evaluate_over_draws(spec: PromotionSpec, y: float, alpha_rows):
    """Vectorized (log_f, log_F) at one time across rows of parameter draws."""
    y = float(y)
    if not np.isfinite(y) or y <= 0.0:
        raise DomainError(f"observation time must be positive, got {y!r}")
    alpha_rows = _check_alpha(spec, alpha_rows)
    lf, lF = _vector_eval(spec, y, alpha_rows)
    return np.asarray(lf, dtype=float), np.asarray(lF, dtype=float)
