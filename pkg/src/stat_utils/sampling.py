import logging

import numpy as np
from scipy import stats

from models.errors import DomainError, UnsupportedCapabilityError
from models.family import FamilySpec

logger = logging.getLogger("dmskew")


def covariate_rng(seed: int) -> np.random.Generator:
    """Generator for the covariates drawn once per study"""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))


def replication_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for one replication, fixed by (seed, index) alone"""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, index)))


def sample_response(family: FamilySpec, mu, phi: float, rng: np.random.Generator) -> np.ndarray:
    """Draw responses from the family density at (mu, phi)

    Args:
        family: Family with a sampler
        mu: Location values, scalar or n-vector
        phi: Precision; ignored for families with fixed precision
        rng: Random generator

    Returns:
        Array of draws with the shape of mu

    Raises:
        UnsupportedCapabilityError: Family without an exact sampler
        DomainError: mu or phi outside the admissible range
    """
    if family.sampler is None:
        raise UnsupportedCapabilityError(f"Family {family.id} has no sampler")
    mu = np.asarray(mu, dtype=float)
    family.check_mu(mu)
    if family.phi_fixed is not None:
        phi = family.phi_fixed
    if not np.isfinite(phi) or phi <= 0:
        raise DomainError(f"phi must be positive, got {phi}")
    return np.asarray(family.sampler(rng, mu, phi), dtype=float)


def sample_skewness(values) -> float:
    """g3 = m3 / m2^(3/2) with mean-based central moments

    Raises:
        DomainError: Fewer than three values or constant input
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size < 3:
        raise DomainError(f"Sample skewness needs at least 3 values, got {values.size}")
    if np.ptp(values) == 0.0:
        raise DomainError("Sample skewness is undefined for constant input")
    return float(stats.skew(values, bias=True))
