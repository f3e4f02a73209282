"""Catalog of dispersion families and link functions.

Each family is assembled from closed-form kernels: t(y, mu) and three
mu-derivatives, the expectations d2, d3, d2' and the a(phi, y) pieces that
phi inference needs. GLM members take their d-quantities from the variance
function (d2 = -1/V, d3 = 2 V'/V^2, d2' = V'/V^2); constant coefficient of
variation members from (k2, k3) as d2 = -k2/mu^2, d3 = k3/mu^3, d2' = 2 k2/mu^3.
"""

from dataclasses import replace
import logging
import re
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import special

from models.errors import ConfigError, DomainError, UnsupportedCapabilityError
from models.family import (
    FamilySpec,
    Interval,
    LinkSpec,
    LocalQuantities,
    NONNEGATIVE,
    POSITIVE,
    REAL_LINE,
    UNIT_CLOSED,
    UNIT_OPEN,
)
from stat_utils.specfun import bessel_ratio, log_bessel_i0, polygamma, std_normal_pdf

logger = logging.getLogger("dmskew")


def _arr(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# a1(phi) structures shared by several families
# ---------------------------------------------------------------------------

def _a1_half_log() -> dict:
    """a1(phi) = log sqrt(phi): normal, inverse Gaussian, reciprocal inverse Gaussian"""
    return dict(
        a1=lambda phi: 0.5 * np.log(phi),
        a1p=lambda phi: 0.5 / phi,
        a1pp=lambda phi: -0.5 / phi ** 2,
        a1ppp=lambda phi: 1.0 / phi ** 3,
    )


def _a1_gamma() -> dict:
    """a1(phi) = phi log(phi) - log Gamma(phi): gamma, reciprocal gamma, log-gamma"""
    return dict(
        a1=lambda phi: phi * np.log(phi) - special.gammaln(phi),
        a1p=lambda phi: np.log(phi) + 1.0 - polygamma(0, phi),
        a1pp=lambda phi: 1.0 / phi - polygamma(1, phi),
        a1ppp=lambda phi: -1.0 / phi ** 2 - polygamma(2, phi),
    )


def _a1_von_mises() -> dict:
    """a(phi, y) = -log(2 pi I0(phi)), so a1'' = -r' and a1''' = -r''"""
    return dict(
        a1=lambda phi: -log_bessel_i0(phi),
        a1p=lambda phi: -bessel_ratio(phi).r,
        a1pp=lambda phi: -bessel_ratio(phi).r1,
        a1ppp=lambda phi: -bessel_ratio(phi).r2,
    )


def _glm_d_quantities(V, V1) -> dict:
    return dict(
        d2=lambda mu, phi=1.0: -1.0 / V(_arr(mu)),
        d3=lambda mu, phi=1.0: 2.0 * V1(_arr(mu)) / V(_arr(mu)) ** 2,
        d2prime=lambda mu, phi=1.0: V1(_arr(mu)) / V(_arr(mu)) ** 2,
        variance=(V, V1),
    )


def _const_cv_d_quantities(k2: float, k3: float) -> dict:
    return dict(
        d2=lambda mu, phi=1.0: -k2 / _arr(mu) ** 2,
        d3=lambda mu, phi=1.0: k3 / _arr(mu) ** 3,
        d2prime=lambda mu, phi=1.0: 2.0 * k2 / _arr(mu) ** 3,
    )


# ---------------------------------------------------------------------------
# exponential family members with a named variance function
# ---------------------------------------------------------------------------

def _normal(hyper: dict) -> FamilySpec:
    # EDM form: t = y mu - mu^2/2, c(y) = -y^2/2
    def sampler(rng, mu, phi):
        return rng.normal(mu, 1.0 / np.sqrt(phi))

    return FamilySpec(
        id="normal",
        t=lambda y, mu: _arr(y) * mu - 0.5 * _arr(mu) ** 2,
        t1=lambda y, mu: _arr(y) - mu,
        t2=lambda y, mu: -np.ones(np.broadcast(_arr(y), _arr(mu)).shape),
        t3=lambda y, mu: np.zeros(np.broadcast(_arr(y), _arr(mu)).shape),
        tmax=lambda y: 0.5 * _arr(y) ** 2,
        c=lambda y: -0.5 * _arr(y) ** 2,
        a2=lambda y: np.full_like(_arr(y), -0.5 * np.log(2 * np.pi)),
        y_domain=REAL_LINE,
        mu_domain=REAL_LINE,
        sampler=sampler,
        **_glm_d_quantities(lambda mu: np.ones_like(mu), lambda mu: np.zeros_like(mu)),
        **_a1_half_log(),
    )


def _poisson(hyper: dict) -> FamilySpec:
    def sampler(rng, mu, phi):
        return rng.poisson(mu).astype(float)

    return FamilySpec(
        id="poisson",
        t=lambda y, mu: special.xlogy(y, mu) - mu,
        t1=lambda y, mu: _arr(y) / mu - 1.0,
        t2=lambda y, mu: -_arr(y) / _arr(mu) ** 2,
        t3=lambda y, mu: 2.0 * _arr(y) / _arr(mu) ** 3,
        tmax=lambda y: special.xlogy(y, y) - _arr(y),
        a2=lambda y: -special.gammaln(_arr(y) + 1.0),
        y_domain=NONNEGATIVE,
        mu_domain=POSITIVE,
        phi_fixed=1.0,
        sampler=sampler,
        discrete=True,
        **_glm_d_quantities(lambda mu: mu, lambda mu: np.ones_like(mu)),
    )


def _binomial(hyper: dict) -> FamilySpec:
    # responses are proportions out of `trials`; t carries the trials as a prior weight
    m = float(hyper.get("trials", 1.0))
    if m < 1 or m != int(m):
        raise ConfigError(f"binomial trials must be a positive integer, got {m}")

    def t(y, mu):
        y = _arr(y)
        return m * (special.xlogy(y, mu) + special.xlogy(1.0 - y, 1.0 - _arr(mu)))

    def sampler(rng, mu, phi):
        return rng.binomial(int(m), mu) / m

    V = lambda mu: mu * (1.0 - mu) / m  # noqa: E731
    V1 = lambda mu: (1.0 - 2.0 * mu) / m  # noqa: E731
    return FamilySpec(
        id="binomial" if m == 1 else f"binomial({int(m)})",
        t=t,
        t1=lambda y, mu: m * (_arr(y) / mu - (1.0 - _arr(y)) / (1.0 - _arr(mu))),
        t2=lambda y, mu: -m * (_arr(y) / _arr(mu) ** 2 + (1.0 - _arr(y)) / (1.0 - _arr(mu)) ** 2),
        t3=lambda y, mu: 2.0 * m * (_arr(y) / _arr(mu) ** 3 - (1.0 - _arr(y)) / (1.0 - _arr(mu)) ** 3),
        # 0 log 0 = 0 at the boundary responses
        tmax=lambda y: t(y, y),
        a2=lambda y: special.gammaln(m + 1) - special.gammaln(m * _arr(y) + 1) - special.gammaln(m * (1 - _arr(y)) + 1),
        y_domain=UNIT_CLOSED,
        mu_domain=UNIT_OPEN,
        phi_fixed=1.0,
        sampler=sampler,
        discrete=True,
        hyper={"trials": m},
        **_glm_d_quantities(V, V1),
    )


def _gamma(hyper: dict) -> FamilySpec:
    def sampler(rng, mu, phi):
        return rng.gamma(phi, np.asarray(mu) / phi)

    return FamilySpec(
        id="gamma",
        t=lambda y, mu: -_arr(y) / mu - np.log(mu),
        t1=lambda y, mu: _arr(y) / _arr(mu) ** 2 - 1.0 / _arr(mu),
        t2=lambda y, mu: -2.0 * _arr(y) / _arr(mu) ** 3 + 1.0 / _arr(mu) ** 2,
        t3=lambda y, mu: 6.0 * _arr(y) / _arr(mu) ** 4 - 2.0 / _arr(mu) ** 3,
        tmax=lambda y: -1.0 - np.log(y),
        c=lambda y: np.log(y),
        a2=lambda y: -np.log(y),
        y_domain=POSITIVE,
        mu_domain=POSITIVE,
        sampler=sampler,
        **_glm_d_quantities(lambda mu: mu ** 2, lambda mu: 2.0 * mu),
        **_a1_gamma(),
    )


def _inverse_gaussian(hyper: dict) -> FamilySpec:
    def sampler(rng, mu, phi):
        return rng.wald(mu, phi)

    return FamilySpec(
        id="inverse_gaussian",
        t=lambda y, mu: -_arr(y) / (2.0 * _arr(mu) ** 2) + 1.0 / _arr(mu),
        t1=lambda y, mu: _arr(y) / _arr(mu) ** 3 - 1.0 / _arr(mu) ** 2,
        t2=lambda y, mu: -3.0 * _arr(y) / _arr(mu) ** 4 + 2.0 / _arr(mu) ** 3,
        t3=lambda y, mu: 12.0 * _arr(y) / _arr(mu) ** 5 - 6.0 / _arr(mu) ** 4,
        tmax=lambda y: 0.5 / _arr(y),
        c=lambda y: -0.5 / _arr(y),
        a2=lambda y: -0.5 * np.log(2.0 * np.pi * _arr(y) ** 3),
        y_domain=POSITIVE,
        mu_domain=POSITIVE,
        sampler=sampler,
        **_glm_d_quantities(lambda mu: mu ** 3, lambda mu: 3.0 * mu ** 2),
        **_a1_half_log(),
    )


# ---------------------------------------------------------------------------
# other exponential dispersion models
# ---------------------------------------------------------------------------

def _ghs(hyper: dict) -> FamilySpec:
    # score and deviance from b(theta) = -log cos(theta), mu = tan(theta);
    # d-quantities as tabulated for the generalized hyperbolic secant
    # d2 = -2/(1+mu^2)^2 is kept as tabulated although E[t2] = -1/(1+mu^2) for this t;
    # the weights, K_beta and cov_beta follow d2, the score and deviance follow t
    def t3(y, mu):
        y, mu = _arr(y), _arr(mu)
        s = 1.0 + mu ** 2
        return (4.0 * mu - 2.0 * (y - mu)) / s ** 2 + 8.0 * mu ** 2 * (y - mu) / s ** 3

    return FamilySpec(
        id="ghs",
        t=lambda y, mu: _arr(y) * np.arctan(mu) - 0.5 * np.log1p(_arr(mu) ** 2),
        t1=lambda y, mu: (_arr(y) - mu) / (1.0 + _arr(mu) ** 2),
        t2=lambda y, mu: -1.0 / (1.0 + _arr(mu) ** 2) - 2.0 * _arr(mu) * (_arr(y) - mu) / (1.0 + _arr(mu) ** 2) ** 2,
        t3=t3,
        d2=lambda mu, phi=1.0: -2.0 / (_arr(mu) ** 2 + 1.0) ** 2,
        d2prime=lambda mu, phi=1.0: 8.0 * _arr(mu) / (_arr(mu) ** 2 + 1.0) ** 3,
        d3=lambda mu, phi=1.0: (2.0 * _arr(mu) ** 3 + 10.0 * _arr(mu)) / (_arr(mu) ** 2 + 1.0) ** 3,
        tmax=lambda y: _arr(y) * np.arctan(y) - 0.5 * np.log1p(_arr(y) ** 2),
        y_domain=REAL_LINE,
        mu_domain=REAL_LINE,
    )


def _negative_binomial(hyper: dict) -> FamilySpec:
    k = float(hyper.get("k", 1.0))
    if k <= 0:
        raise ConfigError(f"negative_binomial k must be positive, got {k}")

    def t(y, mu):
        y, mu = _arr(y), _arr(mu)
        return special.xlogy(y, mu / (mu + k)) - k * np.log((mu + k) / k)

    def sampler(rng, mu, phi):
        return rng.negative_binomial(k, k / (k + np.asarray(mu))).astype(float)

    return FamilySpec(
        id="negative_binomial" if k == 1.0 else f"negative_binomial({k:g})",
        t=t,
        t1=lambda y, mu: k * (_arr(y) - mu) / (_arr(mu) * (_arr(mu) + k)),
        t2=lambda y, mu: -_arr(y) / _arr(mu) ** 2 + (_arr(y) + k) / (_arr(mu) + k) ** 2,
        t3=lambda y, mu: 2.0 * _arr(y) / _arr(mu) ** 3 - 2.0 * (_arr(y) + k) / (_arr(mu) + k) ** 3,
        # V = mu + mu^2/k; with k = 1 these are -1/mu + 1/(1+mu), 2/mu^2 - 2/(1+mu)^2
        d2=lambda mu, phi=1.0: -1.0 / _arr(mu) + 1.0 / (_arr(mu) + k),
        d2prime=lambda mu, phi=1.0: 1.0 / _arr(mu) ** 2 - 1.0 / (_arr(mu) + k) ** 2,
        d3=lambda mu, phi=1.0: 2.0 / _arr(mu) ** 2 - 2.0 / (_arr(mu) + k) ** 2,
        tmax=lambda y: t(y, y),
        a2=lambda y: special.gammaln(_arr(y) + k) - special.gammaln(k) - special.gammaln(_arr(y) + 1.0),
        y_domain=NONNEGATIVE,
        mu_domain=POSITIVE,
        phi_fixed=1.0,
        sampler=sampler,
        variance=(lambda mu: mu + mu ** 2 / k, lambda mu: 1.0 + 2.0 * mu / k),
        discrete=True,
        hyper={"k": k},
    )


def _tweedie(hyper: dict) -> FamilySpec:
    if "p" not in hyper:
        raise ConfigError("tweedie requires the power hyperparameter p")
    p = float(hyper["p"])
    if 0.0 < p < 1.0:
        raise ConfigError(f"tweedie power p must not lie in (0, 1), got {p}")

    # closed-form members keep their full capabilities
    delegates = {0.0: _normal, 2.0: _gamma, 3.0: _inverse_gaussian}
    if p in delegates:
        base = delegates[p]({})
        return replace(base, id=f"tweedie({p:g})", hyper={"p": p})

    if p == 1.0:
        t = lambda y, mu: special.xlogy(y, mu) - mu  # noqa: E731
        tmax = lambda y: special.xlogy(y, y) - _arr(y)  # noqa: E731
    else:
        def t(y, mu):
            y, mu = _arr(y), _arr(mu)
            return y * mu ** (1.0 - p) / (1.0 - p) - mu ** (2.0 - p) / (2.0 - p)

        def tmax(y):
            # for y <= 0 the supremum over mu > 0 is the limit 0 at mu -> 0
            y = _arr(y)
            return np.where(y > 0.0, np.maximum(y, 0.0) ** (2.0 - p) / ((1.0 - p) * (2.0 - p)), 0.0)

    if p <= 0.0:
        y_domain = REAL_LINE
    elif p < 2.0:
        y_domain = NONNEGATIVE
    else:
        y_domain = POSITIVE

    return FamilySpec(
        id=f"tweedie({p:g})",
        t=t,
        t1=lambda y, mu: (_arr(y) - mu) * _arr(mu) ** (-p),
        t2=lambda y, mu: -p * _arr(y) * _arr(mu) ** (-p - 1.0) - (1.0 - p) * _arr(mu) ** (-p),
        t3=lambda y, mu: p * (p + 1.0) * _arr(y) * _arr(mu) ** (-p - 2.0) + p * (1.0 - p) * _arr(mu) ** (-p - 1.0),
        d2=lambda mu, phi=1.0: -_arr(mu) ** (-p),
        d2prime=lambda mu, phi=1.0: p * _arr(mu) ** (-(p + 1.0)),
        d3=lambda mu, phi=1.0: 2.0 * p * _arr(mu) ** (-(p + 1.0)),
        tmax=tmax,
        y_domain=y_domain,
        mu_domain=POSITIVE,
        variance=(lambda mu: mu ** p, lambda mu: p * mu ** (p - 1.0)),
        hyper={"p": p},
    )


def _exp_variance(hyper: dict) -> FamilySpec:
    if "b" not in hyper:
        raise ConfigError("exp_variance requires the hyperparameter b")
    b = float(hyper["b"])
    if b == 0.0:
        raise ConfigError("exp_variance hyperparameter b must be nonzero")

    def t(y, mu):
        y, mu = _arr(y), _arr(mu)
        return np.exp(-b * mu) * (mu - y + 1.0 / b) / b

    return FamilySpec(
        id=f"exp_variance({b:g})",
        t=t,
        t1=lambda y, mu: (_arr(y) - mu) * np.exp(-b * _arr(mu)),
        t2=lambda y, mu: -np.exp(-b * _arr(mu)) * (b * (_arr(y) - mu) + 1.0),
        t3=lambda y, mu: np.exp(-b * _arr(mu)) * (b ** 2 * (_arr(y) - mu) + 2.0 * b),
        d2=lambda mu, phi=1.0: -np.exp(-b * _arr(mu)),
        d2prime=lambda mu, phi=1.0: b * np.exp(-b * _arr(mu)),
        d3=lambda mu, phi=1.0: 2.0 * b * np.exp(-b * _arr(mu)),
        tmax=lambda y: np.exp(-b * _arr(y)) / b ** 2,
        y_domain=REAL_LINE,
        mu_domain=REAL_LINE,
        variance=(lambda mu: np.exp(b * mu), lambda mu: b * np.exp(b * mu)),
        hyper={"b": b},
    )


# ---------------------------------------------------------------------------
# proper dispersion models
# ---------------------------------------------------------------------------

def _reciprocal_gamma(hyper: dict) -> FamilySpec:
    # Y = 1/Z with Z ~ Gamma(shape phi, rate phi*mu)
    def sampler(rng, mu, phi):
        return 1.0 / rng.gamma(phi, 1.0 / (phi * np.asarray(mu)))

    return FamilySpec(
        id="reciprocal_gamma",
        t=lambda y, mu: np.log(_arr(mu) / y) - _arr(mu) / y,
        t1=lambda y, mu: 1.0 / _arr(mu) - 1.0 / _arr(y),
        t2=lambda y, mu: -np.ones(np.broadcast(_arr(y), _arr(mu)).shape) / _arr(mu) ** 2,
        t3=lambda y, mu: 2.0 * np.ones(np.broadcast(_arr(y), _arr(mu)).shape) / _arr(mu) ** 3,
        d2=lambda mu, phi=1.0: -1.0 / _arr(mu) ** 2,
        d2prime=lambda mu, phi=1.0: 2.0 / _arr(mu) ** 3,
        d3=lambda mu, phi=1.0: 2.0 / _arr(mu) ** 3,
        tmax=lambda y: np.full_like(_arr(y), -1.0),
        a2=lambda y: -np.log(y),
        y_domain=POSITIVE,
        mu_domain=POSITIVE,
        sampler=sampler,
        **_a1_gamma(),
    )


def _log_gamma(hyper: dict) -> FamilySpec:
    # exp(Y - mu) ~ Gamma(shape phi, rate phi)
    def sampler(rng, mu, phi):
        return np.asarray(mu) + np.log(rng.gamma(phi, 1.0 / phi, size=np.shape(mu)))

    return FamilySpec(
        id="log_gamma",
        t=lambda y, mu: _arr(y) - mu - np.exp(_arr(y) - mu),
        t1=lambda y, mu: np.exp(_arr(y) - mu) - 1.0,
        t2=lambda y, mu: -np.exp(_arr(y) - mu),
        t3=lambda y, mu: np.exp(_arr(y) - mu),
        d2=lambda mu, phi=1.0: -np.ones_like(_arr(mu)),
        d2prime=lambda mu, phi=1.0: np.zeros_like(_arr(mu)),
        d3=lambda mu, phi=1.0: np.ones_like(_arr(mu)),
        tmax=lambda y: np.full_like(_arr(y), -1.0),
        a2=lambda y: np.zeros_like(_arr(y)),
        y_domain=REAL_LINE,
        mu_domain=REAL_LINE,
        sampler=sampler,
        **_a1_gamma(),
    )


def _reciprocal_inverse_gaussian(hyper: dict) -> FamilySpec:
    # 1/Y ~ inverse Gaussian with mean 1/mu and shape phi
    def sampler(rng, mu, phi):
        return 1.0 / rng.wald(1.0 / np.asarray(mu), phi)

    return FamilySpec(
        id="reciprocal_inverse_gaussian",
        t=lambda y, mu: -(_arr(y) - mu) ** 2 / (2.0 * _arr(y)),
        t1=lambda y, mu: (_arr(y) - mu) / _arr(y),
        t2=lambda y, mu: -np.ones(np.broadcast(_arr(y), _arr(mu)).shape) / _arr(y),
        t3=lambda y, mu: np.zeros(np.broadcast(_arr(y), _arr(mu)).shape),
        d2=lambda mu, phi=1.0: -1.0 / _arr(mu),
        d2prime=lambda mu, phi=1.0: 1.0 / _arr(mu) ** 2,
        d3=lambda mu, phi=1.0: np.zeros_like(_arr(mu)),
        tmax=lambda y: np.zeros_like(_arr(y)),
        a2=lambda y: -0.5 * np.log(2.0 * np.pi * _arr(y)),
        y_domain=POSITIVE,
        mu_domain=POSITIVE,
        sampler=sampler,
        **_a1_half_log(),
    )


def _von_mises(hyper: dict) -> FamilySpec:
    def sampler(rng, mu, phi):
        return rng.vonmises(mu, phi)

    return FamilySpec(
        id="von_mises",
        t=lambda y, mu: np.cos(_arr(y) - mu),
        t1=lambda y, mu: np.sin(_arr(y) - mu),
        t2=lambda y, mu: -np.cos(_arr(y) - mu),
        t3=lambda y, mu: -np.sin(_arr(y) - mu),
        d2=lambda mu, phi=1.0: np.full_like(_arr(mu), -bessel_ratio(phi).r),
        d2prime=lambda mu, phi=1.0: np.zeros_like(_arr(mu)),
        d3=lambda mu, phi=1.0: np.zeros_like(_arr(mu)),
        tmax=lambda y: np.ones_like(_arr(y)),
        a2=lambda y: np.full_like(_arr(y), -np.log(2.0 * np.pi)),
        y_domain=Interval(lo=-np.pi, hi=np.pi, lo_open=False, hi_open=False),
        mu_domain=REAL_LINE,
        sampler=sampler,
        phi_in_weights=True,
        **_a1_von_mises(),
    )


# ---------------------------------------------------------------------------
# constant coefficient of variation submodels (phi fixed at 1)
# ---------------------------------------------------------------------------

def _cv_parameter(hyper: dict, family: str) -> float:
    if "c" not in hyper:
        raise ConfigError(f"{family} requires the hyperparameter c")
    c = float(hyper["c"])
    if c <= 0:
        raise ConfigError(f"{family} hyperparameter c must be positive, got {c}")
    return c


def _const_cv_normal(hyper: dict) -> FamilySpec:
    c = _cv_parameter(hyper, "const_cv_normal")
    c2 = c * c
    k = _const_cv_d_quantities(k2=(1.0 + 2.0 * c2) / c2, k3=(6.0 + 10.0 * c2) / c2)
    u_pos = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * c2))
    u_neg = 0.5 * (1.0 - np.sqrt(1.0 + 4.0 * c2))

    def t(y, mu):
        y, mu = _arr(y), _arr(mu)
        return -np.log(mu) - (y - mu) ** 2 / (2.0 * c2 * mu ** 2)

    def t1(y, mu):
        y, mu = _arr(y), _arr(mu)
        return -1.0 / mu + (y / mu - 1.0) * y / (c2 * mu ** 2)

    def t2(y, mu):
        y, mu = _arr(y), _arr(mu)
        return 1.0 / mu ** 2 - (y ** 2 / mu ** 4 + 2.0 * y * (y / mu - 1.0) / mu ** 3) / c2

    def t3(y, mu):
        y, mu = _arr(y), _arr(mu)
        return -2.0 / mu ** 3 - (-6.0 * y ** 2 / mu ** 5 - 6.0 * y * (y / mu - 1.0) / mu ** 4) / c2

    def tmax(y):
        # maximizer mu = y/u with u^2 - u - c^2 = 0, root sign following y
        y = _arr(y)
        if np.any(y == 0.0):
            raise DomainError("const_cv_normal deviance is unbounded at y = 0")
        u = np.where(y > 0, u_pos, u_neg)
        return -np.log(np.abs(y)) + np.log(np.abs(u)) - (u - 1.0) ** 2 / (2.0 * c2)

    def sampler(rng, mu, phi):
        return rng.normal(mu, c * np.asarray(mu))

    return FamilySpec(
        id=f"const_cv_normal({c:g})",
        t=t, t1=t1, t2=t2, t3=t3, tmax=tmax,
        a2=lambda y: np.full_like(_arr(y), -np.log(c) - 0.5 * np.log(2.0 * np.pi)),
        y_domain=REAL_LINE,
        mu_domain=POSITIVE,
        phi_fixed=1.0,
        sampler=sampler,
        hyper={"c": c, "k2": (1.0 + 2.0 * c2) / c2, "k3": (6.0 + 10.0 * c2) / c2},
        **k,
    )


def _const_cv_ig(hyper: dict) -> FamilySpec:
    c = _cv_parameter(hyper, "const_cv_ig")
    c2 = c * c
    # k2 from E[t''] of the IG(mu, shape mu/c^2) density
    k2, k3 = (2.0 + c2) / (2.0 * c2), (3.0 + c2) / c2
    k = _const_cv_d_quantities(k2=k2, k3=k3)
    ratio = 0.5 * (c2 + np.sqrt(c2 * c2 + 4.0))

    def t(y, mu):
        y, mu = _arr(y), _arr(mu)
        return 0.5 * np.log(mu) - (y / mu + mu / y) / (2.0 * c2)

    def sampler(rng, mu, phi):
        return rng.wald(mu, np.asarray(mu) / c2)

    return FamilySpec(
        id=f"const_cv_ig({c:g})",
        t=t,
        t1=lambda y, mu: 0.5 / _arr(mu) + (_arr(y) / _arr(mu) ** 2 - 1.0 / _arr(y)) / (2.0 * c2),
        t2=lambda y, mu: -0.5 / _arr(mu) ** 2 - _arr(y) / (c2 * _arr(mu) ** 3),
        t3=lambda y, mu: 1.0 / _arr(mu) ** 3 + 3.0 * _arr(y) / (c2 * _arr(mu) ** 4),
        tmax=lambda y: t(y, ratio * _arr(y)),
        a2=lambda y: -np.log(c) - 0.5 * np.log(2.0 * np.pi * _arr(y) ** 3) + 1.0 / c2,
        y_domain=POSITIVE,
        mu_domain=POSITIVE,
        phi_fixed=1.0,
        sampler=sampler,
        hyper={"c": c, "k2": k2, "k3": k3},
        **k,
    )


def _const_cv_lognormal(hyper: dict) -> FamilySpec:
    c = _cv_parameter(hyper, "const_cv_lognormal")
    s2 = np.log1p(c * c)
    k = _const_cv_d_quantities(k2=1.0 / s2, k3=3.0 / s2)

    def u(y, mu):
        return np.log(y) - np.log(mu) + 0.5 * s2

    def sampler(rng, mu, phi):
        return rng.lognormal(np.log(mu) - 0.5 * s2, np.sqrt(s2))

    return FamilySpec(
        id=f"const_cv_lognormal({c:g})",
        t=lambda y, mu: -u(y, mu) ** 2 / (2.0 * s2),
        t1=lambda y, mu: u(y, mu) / (s2 * _arr(mu)),
        t2=lambda y, mu: -(1.0 + u(y, mu)) / (s2 * _arr(mu) ** 2),
        t3=lambda y, mu: (3.0 + 2.0 * u(y, mu)) / (s2 * _arr(mu) ** 3),
        tmax=lambda y: np.zeros_like(_arr(y)),
        a2=lambda y: -np.log(y) - 0.5 * np.log(2.0 * np.pi * s2),
        y_domain=POSITIVE,
        mu_domain=POSITIVE,
        phi_fixed=1.0,
        sampler=sampler,
        hyper={"c": c, "k2": 1.0 / s2, "k3": 3.0 / s2},
        **k,
    )


def _const_cv_weibull(hyper: dict) -> FamilySpec:
    c = _cv_parameter(hyper, "const_cv_weibull")
    # scale = mu / Gamma(1 + 1/c) gives mean mu
    g = float(np.exp(special.gammaln(1.0 + 1.0 / c)))
    k = _const_cv_d_quantities(k2=c * c, k3=c * c * (c + 3.0))

    def v(y, mu):
        return (g * _arr(y) / mu) ** c

    def sampler(rng, mu, phi):
        return np.asarray(mu) / g * rng.weibull(c, size=np.shape(mu))

    return FamilySpec(
        id=f"const_cv_weibull({c:g})",
        t=lambda y, mu: -c * np.log(mu) - v(y, mu),
        t1=lambda y, mu: c * (v(y, mu) - 1.0) / _arr(mu),
        t2=lambda y, mu: (c - c * (1.0 + c) * v(y, mu)) / _arr(mu) ** 2,
        t3=lambda y, mu: (-2.0 * c + c * (1.0 + c) * (2.0 + c) * v(y, mu)) / _arr(mu) ** 3,
        tmax=lambda y: -c * np.log(g * _arr(y)) - 1.0,
        a2=lambda y: np.log(c) + c * np.log(g) + (c - 1.0) * np.log(y),
        y_domain=POSITIVE,
        mu_domain=POSITIVE,
        phi_fixed=1.0,
        sampler=sampler,
        hyper={"c": c, "k2": c * c, "k3": c * c * (c + 3.0)},
        **k,
    )


_FAMILIES = {
    "normal": _normal,
    "poisson": _poisson,
    "binomial": _binomial,
    "gamma": _gamma,
    "inverse_gaussian": _inverse_gaussian,
    "ghs": _ghs,
    "negative_binomial": _negative_binomial,
    "tweedie": _tweedie,
    "exp_variance": _exp_variance,
    "reciprocal_gamma": _reciprocal_gamma,
    "log_gamma": _log_gamma,
    "reciprocal_inverse_gaussian": _reciprocal_inverse_gaussian,
    "von_mises": _von_mises,
    "const_cv_normal": _const_cv_normal,
    "const_cv_ig": _const_cv_ig,
    "const_cv_lognormal": _const_cv_lognormal,
    "const_cv_weibull": _const_cv_weibull,
}

# positional hyperparameter accepted by the "name(value)" id syntax
_POSITIONAL_HYPER = {
    "tweedie": "p",
    "exp_variance": "b",
    "binomial": "trials",
    "negative_binomial": "k",
    "const_cv_normal": "c",
    "const_cv_ig": "c",
    "const_cv_lognormal": "c",
    "const_cv_weibull": "c",
}

_ID_PATTERN = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*([^()]*?)\s*\))?\s*$")

FAMILY_IDS: Tuple[str, ...] = tuple(_FAMILIES)


def parse_family_id(text: str) -> Tuple[str, Dict[str, float]]:
    """Split "tweedie(1.5)" into ("tweedie", {"p": 1.5})"""
    match = _ID_PATTERN.match(text)
    if not match:
        raise ConfigError(f"Malformed family id {text!r}")
    name, value = match.group(1), match.group(2)
    if value is None or value == "":
        return name, {}
    if name not in _POSITIONAL_HYPER:
        raise ConfigError(f"Family {name} takes no hyperparameter")
    try:
        return name, {_POSITIONAL_HYPER[name]: float(value)}
    except ValueError:
        raise ConfigError(f"Invalid hyperparameter {value!r} for family {name}") from None


def make_family(id: str, hyper: Optional[dict] = None) -> FamilySpec:
    """Build a catalog family

    Args:
        id: Family id, optionally with a positional hyperparameter ("tweedie(1.5)")
        hyper: Extra hyperparameters (p, b, c, k, trials); merged over the id's

    Returns:
        A fully populated FamilySpec

    Raises:
        ConfigError: Unknown id or invalid hyperparameter
    """
    name, parsed = parse_family_id(id)
    builder = _FAMILIES.get(name)
    if builder is None:
        raise ConfigError(f"Unknown family {id!r}; valid ids: {', '.join(FAMILY_IDS)}")
    merged = {**parsed, **(hyper or {})}
    family = builder(merged)
    logger.debug(f"Built family {family.id} with hyperparameters {family.hyper}")
    return family


def family_capabilities(family: FamilySpec) -> Dict[str, bool]:
    """Which operations a family supports"""
    return {
        "d_quantities": True,
        "phi_inference": family.a_available,
        "phi_fixed": family.phi_fixed is not None,
        "sampler": family.sampler is not None,
    }


# ---------------------------------------------------------------------------
# links
# ---------------------------------------------------------------------------

def _logit() -> LinkSpec:
    return LinkSpec(
        id="logit",
        h=special.logit,
        hinv=special.expit,
        dmu_deta=lambda mu: _arr(mu) * (1.0 - _arr(mu)),
        d2mu_deta2=lambda mu: _arr(mu) * (1.0 - _arr(mu)) * (1.0 - 2.0 * _arr(mu)),
        mu_domain=UNIT_OPEN,
    )


def _probit() -> LinkSpec:
    def d2(mu):
        z = special.ndtri(mu)
        return -z * std_normal_pdf(z)

    return LinkSpec(
        id="probit",
        h=special.ndtri,
        hinv=special.ndtr,
        dmu_deta=lambda mu: std_normal_pdf(special.ndtri(mu)),
        d2mu_deta2=d2,
        mu_domain=UNIT_OPEN,
    )


def _log() -> LinkSpec:
    return LinkSpec(
        id="log",
        h=np.log,
        hinv=np.exp,
        dmu_deta=lambda mu: _arr(mu),
        d2mu_deta2=lambda mu: _arr(mu),
        mu_domain=POSITIVE,
    )


def _identity() -> LinkSpec:
    return LinkSpec(
        id="identity",
        h=lambda mu: _arr(mu),
        hinv=lambda eta: _arr(eta),
        dmu_deta=lambda mu: np.ones_like(_arr(mu)),
        d2mu_deta2=lambda mu: np.zeros_like(_arr(mu)),
    )


def _reciprocal() -> LinkSpec:
    return LinkSpec(
        id="reciprocal",
        h=lambda mu: 1.0 / _arr(mu),
        hinv=lambda eta: 1.0 / _arr(eta),
        dmu_deta=lambda mu: -_arr(mu) ** 2,
        d2mu_deta2=lambda mu: 2.0 * _arr(mu) ** 3,
        eta_domain=Interval(lo=0.0),
        mu_domain=POSITIVE,
    )


def _square_reciprocal() -> LinkSpec:
    return LinkSpec(
        id="square_reciprocal",
        h=lambda mu: _arr(mu) ** -2.0,
        hinv=lambda eta: _arr(eta) ** -0.5,
        dmu_deta=lambda mu: -_arr(mu) ** 3 / 2.0,
        d2mu_deta2=lambda mu: 3.0 * _arr(mu) ** 5 / 4.0,
        eta_domain=Interval(lo=0.0),
        mu_domain=POSITIVE,
    )


def _sqrt() -> LinkSpec:
    return LinkSpec(
        id="sqrt",
        h=np.sqrt,
        hinv=lambda eta: _arr(eta) ** 2,
        dmu_deta=lambda mu: 2.0 * np.sqrt(mu),
        d2mu_deta2=lambda mu: np.full_like(_arr(mu), 2.0),
        eta_domain=Interval(lo=0.0),
        mu_domain=POSITIVE,
    )


def _cloglog() -> LinkSpec:
    return LinkSpec(
        id="cloglog",
        h=lambda mu: np.log(-np.log1p(-_arr(mu))),
        hinv=lambda eta: -np.expm1(-np.exp(eta)),
        dmu_deta=lambda mu: -np.log1p(-_arr(mu)) * (1.0 - _arr(mu)),
        d2mu_deta2=lambda mu: -(1.0 - _arr(mu)) * np.log1p(-_arr(mu)) * (1.0 + np.log1p(-_arr(mu))),
        mu_domain=UNIT_OPEN,
    )


def _tangent() -> LinkSpec:
    # mu = arctan(eta): d2mu/deta2 = -2 eta/(1+eta^2)^2 = -2 sin(mu) cos(mu)^3
    return LinkSpec(
        id="tangent",
        h=np.tan,
        hinv=np.arctan,
        dmu_deta=lambda mu: np.cos(mu) ** 2,
        d2mu_deta2=lambda mu: -2.0 * np.cos(mu) ** 3 * np.sin(mu),
        mu_domain=Interval(lo=-np.pi / 2, hi=np.pi / 2),
    )


_LINKS = {
    "logit": _logit,
    "probit": _probit,
    "log": _log,
    "identity": _identity,
    "reciprocal": _reciprocal,
    "square_reciprocal": _square_reciprocal,
    "sqrt": _sqrt,
    "cloglog": _cloglog,
    "tangent": _tangent,
}

LINK_IDS: Tuple[str, ...] = tuple(_LINKS)


def make_link(id: str) -> LinkSpec:
    """Build a catalog link function

    Raises:
        ConfigError: Unknown id
    """
    builder = _LINKS.get(id.strip())
    if builder is None:
        raise ConfigError(f"Unknown link {id!r}; valid ids: {', '.join(LINK_IDS)}")
    return builder()


# ---------------------------------------------------------------------------
# quantities derived from a family and a link
# ---------------------------------------------------------------------------

def local_quantities(family: FamilySpec, link: LinkSpec, mu, phi: float) -> LocalQuantities:
    """w, f, g, e for each observation

    w = -(mu')^2 d2, g = -mu' mu'' d2, f = g - (mu')^3 d3, e = -(mu')^3 d2'
    with mu' = dmu/deta and mu'' = d2mu/deta2 evaluated at mu.

    Raises:
        DomainError: If mu lies outside the family or link domain
    """
    mu = np.atleast_1d(_arr(mu))
    family.check_mu(mu)
    link.mu_domain.check(mu, f"{link.id} link mean")
    m1 = link.dmu_deta(mu)
    m2 = link.d2mu_deta2(mu)
    d2 = family.d2(mu, phi)
    d3 = family.d3(mu, phi)
    d2p = family.d2prime(mu, phi)
    g = -m1 * m2 * d2
    return LocalQuantities(
        w=-(m1 ** 2) * d2,
        f=g - m1 ** 3 * d3,
        g=g,
        e=-(m1 ** 3) * d2p,
    )


def deviance_contributions(family: FamilySpec, y, mu) -> np.ndarray:
    """Per-observation 2[tmax(y_i) - t(y_i, mu_i)], clipped at zero against rounding"""
    y, mu = np.atleast_1d(_arr(y)), np.atleast_1d(_arr(mu))
    family.check_y(y)
    family.check_mu(mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        contrib = 2.0 * (family.tmax(y) - family.t(y, mu))
    if not np.all(np.isfinite(contrib)):
        bad = int(np.flatnonzero(~np.isfinite(contrib))[0])
        raise DomainError(f"{family.id} deviance undefined at row {bad + 1} (y={y[bad]!r}, mu={mu[bad]!r})")
    return np.maximum(contrib, 0.0)


def unit_deviance(family: FamilySpec, y, mu) -> float:
    """D(y, mu) = 2 sum[sup_mu t(y_i, mu) - t(y_i, mu_i)]"""
    return float(np.sum(deviance_contributions(family, y, mu)))


def alpha_quantities(family: FamilySpec, phi: float, n: int) -> Tuple[float, float, float, float]:
    """Cumulants of the phi-score for families with an a1(phi) structure

    Returns:
        (alpha2, alpha3, alpha30, alpha21) = (-n a1'', -n a1''', n a1''', 0)

    Raises:
        UnsupportedCapabilityError: Family without a1 structure or with phi fixed
    """
    if family.phi_fixed is not None or not family.a_available:
        raise UnsupportedCapabilityError(
            f"Family {family.id} has no a1(phi) structure; phi inference is not supported"
        )
    if phi <= 0:
        raise DomainError(f"phi must be positive, got {phi}")
    a1pp = float(family.a1pp(phi))
    a1ppp = float(family.a1ppp(phi))
    return -n * a1pp, -n * a1ppp, n * a1ppp, 0.0
