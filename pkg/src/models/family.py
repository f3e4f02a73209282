from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from models.errors import DomainError, UnsupportedCapabilityError

Kernel = Callable[..., np.ndarray]


@dataclass(frozen=True)
class Interval:
    """Real interval with optional open ends, used for y, mu and eta domains"""
    lo: float = -np.inf
    hi: float = np.inf
    lo_open: bool = True
    hi_open: bool = True

    def contains(self, x) -> np.ndarray:
        """Elementwise membership test"""
        x = np.asarray(x, dtype=float)
        above = x > self.lo if self.lo_open else x >= self.lo
        below = x < self.hi if self.hi_open else x <= self.hi
        return above & below & ~np.isnan(x)

    def check(self, x, what: str):
        """Raise DomainError naming the first offending entry"""
        inside = self.contains(x)
        if not np.all(inside):
            bad = int(np.flatnonzero(~np.atleast_1d(inside))[0])
            value = np.atleast_1d(np.asarray(x, dtype=float))[bad]
            raise DomainError(f"{what} out of domain {self} at row {bad + 1}: {value!r}")

    def __str__(self) -> str:
        left = "(" if self.lo_open else "["
        right = ")" if self.hi_open else "]"
        return f"{left}{self.lo:g}, {self.hi:g}{right}"


REAL_LINE = Interval()
POSITIVE = Interval(lo=0.0)
NONNEGATIVE = Interval(lo=0.0, lo_open=False)
UNIT_OPEN = Interval(lo=0.0, hi=1.0)
UNIT_CLOSED = Interval(lo=0.0, hi=1.0, lo_open=False, hi_open=False)


@dataclass(frozen=True)
class FamilySpec:
    """A dispersion family exp{phi*t(y,mu) + a(phi,y)}

    The normalizing term is decomposed as a(phi,y) = phi*c(y) + a1(phi) + a2(y);
    c is zero for proper dispersion models. Families whose a(phi,y) has no such
    closed form (GHS, general Tweedie) leave the a1 derivatives unset.

    Attributes:
        id: Catalog id, including hyperparameters, e.g. "tweedie(1.5)"
        t, t1, t2, t3: t(y, mu) and its first three mu-derivatives
        d2, d3, d2prime: Expectations E[t2], E[t3] and d(d2)/dmu, as functions of (mu, phi)
        tmax: sup over mu of t(y, mu)
        c: The phi-linear part of a(phi, y)
        a1p, a1pp, a1ppp: First three derivatives of a1(phi)
        a1: a1(phi) itself, for density evaluation
        a2: a2(y), for density evaluation
        y_domain, mu_domain: Admissible responses and location values
        phi_fixed: Known precision (1 for Poisson/binomial/constant-CV families)
        sampler: Callable (rng, mu, phi) -> responses
        variance: Variance function V(mu) and its derivative, for GLM members
        discrete: True for counting-measure families
        phi_in_weights: True when d2 depends on phi (von Mises)
        hyper: Hyperparameters the family was built with
    """
    id: str
    t: Kernel
    t1: Kernel
    t2: Kernel
    t3: Kernel
    d2: Kernel
    d3: Kernel
    d2prime: Kernel
    tmax: Kernel
    y_domain: Interval
    mu_domain: Interval
    c: Optional[Kernel] = None
    a1: Optional[Callable[[float], float]] = None
    a1p: Optional[Callable[[float], float]] = None
    a1pp: Optional[Callable[[float], float]] = None
    a1ppp: Optional[Callable[[float], float]] = None
    a2: Optional[Kernel] = None
    phi_fixed: Optional[float] = None
    sampler: Optional[Callable] = None
    variance: Optional[Tuple[Kernel, Kernel]] = None
    discrete: bool = False
    phi_in_weights: bool = False
    hyper: Dict[str, float] = field(default_factory=dict)

    @property
    def a_available(self) -> bool:
        """True when a(phi, y) has the a1 structure needed for phi inference"""
        return self.a1p is not None

    def c_of(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.c(y) if self.c is not None else np.zeros_like(y)

    def aphi(self, phi: float, y) -> np.ndarray:
        """Partial derivative of a(phi, y) in phi"""
        self._require_a()
        return self.c_of(y) + self.a1p(phi)

    def a2nd(self, phi: float) -> float:
        """a^(2) = -E[d2 a / dphi2] = -a1''(phi)"""
        self._require_a()
        return -self.a1pp(phi)

    def log_density(self, y, mu, phi: float) -> np.ndarray:
        """log pi(y; mu, phi), available when a(phi, y) is known in closed form"""
        if self.a2 is None or (self.a1 is None and self.phi_fixed is None):
            raise UnsupportedCapabilityError(f"Family {self.id} has no closed-form density")
        if self.phi_fixed is not None:
            phi = self.phi_fixed
        y = np.asarray(y, dtype=float)
        a1 = self.a1(phi) if self.a1 is not None else 0.0
        return phi * (self.t(y, mu) + self.c_of(y)) + a1 + self.a2(y)

    def _require_a(self):
        if self.a1p is None:
            raise UnsupportedCapabilityError(
                f"Family {self.id} has no closed-form a(phi, y); phi inference is not supported"
            )

    def check_y(self, y):
        self.y_domain.check(y, f"{self.id} response")

    def check_mu(self, mu):
        self.mu_domain.check(mu, f"{self.id} mean")


@dataclass(frozen=True)
class LinkSpec:
    """Link function h(mu) = eta with mu-derivatives from the inverse link

    Attributes:
        id: Catalog id
        h: Link function
        hinv: Inverse link
        dmu_deta: dmu/deta as a function of mu
        d2mu_deta2: d2mu/deta2 as a function of mu
        mu_domain: Range of the inverse link
        eta_domain: Predictor values for which hinv is the true inverse of h
    """
    id: str
    h: Kernel
    hinv: Kernel
    dmu_deta: Kernel
    d2mu_deta2: Kernel
    mu_domain: Interval = REAL_LINE
    eta_domain: Interval = REAL_LINE


@dataclass(frozen=True)
class LocalQuantities:
    """Per-observation w, f, g, e vectors entering the third cumulant of beta-hat"""
    w: np.ndarray
    f: np.ndarray
    g: np.ndarray
    e: np.ndarray

    def to_dict(self) -> dict:
        return {
            "w": self.w.tolist(),
            "f": self.f.tolist(),
            "g": self.g.tolist(),
            "e": self.e.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LocalQuantities":
        return cls(**{k: np.asarray(data[k], dtype=float) for k in ("w", "f", "g", "e")})
