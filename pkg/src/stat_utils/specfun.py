"""Special functions used by the family catalog and the skewness formulas.

Thin, validated wrappers over :mod:`scipy.special`. The Bessel ratio works on
the exponentially scaled functions ``i0e``/``i1e`` so that large precision
values never overflow.
"""

from dataclasses import dataclass
import logging

import numpy as np
from scipy import special

from models.errors import DomainError

logger = logging.getLogger("dmskew")

_SQRT_2PI = np.sqrt(2.0 * np.pi)

# below this the ratio is taken from its Maclaurin series, where i1e/i0e
# loses relative accuracy to cancellation in the derivative identity
_SMALL_PHI = 1e-2


@dataclass(frozen=True)
class BesselRatio:
    """r(phi) = I1(phi)/I0(phi) with its first two derivatives in phi

    Attributes:
        r: The ratio, in [0, 1)
        r1: dr/dphi, equal to 1 - r/phi - r**2
        r2: d2r/dphi2, equal to -r1/phi + r/phi**2 - 2*r*r1
    """
    r: float
    r1: float
    r2: float


def _require_positive(x, name: str):
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} must be positive and finite, got {x!r}")
    return arr


def log_gamma(x):
    """Natural logarithm of the gamma function for positive arguments

    Args:
        x: Positive scalar or array

    Returns:
        log Gamma(x), same shape as x

    Raises:
        DomainError: If any x <= 0
    """
    arr = _require_positive(x, "log_gamma argument")
    out = special.gammaln(arr)
    return float(out) if np.ndim(out) == 0 else out


def polygamma(k: int, x):
    """Digamma (k=0), trigamma (k=1) or tetragamma (k=2)

    Args:
        k: Derivative order, one of 0, 1, 2
        x: Positive scalar or array

    Returns:
        psi^(k)(x), same shape as x

    Raises:
        DomainError: If any x <= 0 or k is not 0, 1 or 2
    """
    if k not in (0, 1, 2):
        raise DomainError(f"Unsupported polygamma order {k}; supported orders are 0, 1, 2")
    arr = _require_positive(x, "polygamma argument")
    out = special.psi(arr) if k == 0 else special.polygamma(k, arr)
    return float(out) if np.ndim(out) == 0 else out


def bessel_ratio(phi: float) -> BesselRatio:
    """Modified Bessel ratio I1/I0 and its derivatives

    Uses I0' = I1 and I1' = I0 - I1/phi, so r' = 1 - r/phi - r^2 and, by
    differentiating that identity, r'' = -r'/phi + r/phi^2 - 2 r r'.

    Args:
        phi: Positive precision value

    Returns:
        BesselRatio with r, r1, r2

    Raises:
        DomainError: If phi <= 0
    """
    phi = float(_require_positive(phi, "phi"))
    if phi < _SMALL_PHI:
        # r = phi/2 - phi^3/16 + phi^5/96 - 11 phi^7/6144 + ...
        r = phi / 2 - phi ** 3 / 16 + phi ** 5 / 96 - 11 * phi ** 7 / 6144
        r1 = 0.5 - 3 * phi ** 2 / 16 + 5 * phi ** 4 / 96 - 77 * phi ** 6 / 6144
        r2 = -3 * phi / 8 + 5 * phi ** 3 / 24 - 462 * phi ** 5 / 6144
        return BesselRatio(r=r, r1=r1, r2=r2)

    # scaled functions share the exp(-phi) factor, so the ratio is exact
    r = float(special.i1e(phi) / special.i0e(phi))
    r1 = 1.0 - r / phi - r * r
    r2 = -r1 / phi + r / phi ** 2 - 2.0 * r * r1
    return BesselRatio(r=r, r1=r1, r2=r2)


def log_bessel_i0(phi: float) -> float:
    """log I0(phi) without overflow, via the scaled function"""
    phi = float(_require_positive(phi, "phi"))
    return float(np.log(special.i0e(phi)) + phi)


def std_normal_pdf(x):
    """Standard normal density, underflowing smoothly to 0 in the tails"""
    arr = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * arr * arr) / _SQRT_2PI
    return float(out) if np.ndim(out) == 0 else out
