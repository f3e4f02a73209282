"""Third cumulants and skewness of the maximum likelihood estimators.

For beta-hat the n^-2 third cumulant vector is

    kappa3 = phi^-2 [M^(3) (f - 4g - 3e) - 3 (M * N) w]

with M = K^-1 X', K = X' diag(w) X, n_ai = (K^-1 X_i K^-1)_aa and M^(3) the
elementwise cube. For phi-hat and sigma2-hat the cumulants follow from the
a1(phi) structure of the family. The closed-form reductions for GLMs,
exponential family nonlinear models, constant coefficient of variation models
and the von Mises model are exposed as independent cross-checks.
"""

import logging
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial import hermite_e
from scipy import linalg

from models.errors import DomainError, UnsupportedCapabilityError
from models.family import FamilySpec, LinkSpec, LocalQuantities
from models.fit import FitResult
from models.predictor import PredictorModel
from models.report import SkewnessReport
from stat_utils.catalog import alpha_quantities, local_quantities
from stat_utils.specfun import std_normal_pdf

logger = logging.getLogger("dmskew")

_HE3 = (0.0, 0.0, 0.0, 1.0)
_HE6 = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)


def information_matrix(jacobian: np.ndarray, w: np.ndarray) -> np.ndarray:
    """K_beta = X' diag(w) X, symmetrized"""
    k = jacobian.T @ (w[:, None] * jacobian)
    return 0.5 * (k + k.T)


def m_and_n_matrices(k_beta: np.ndarray, jacobian: np.ndarray, hessians: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """M = K^-1 X' and N with n_ai = (K^-1 X_i K^-1)_aa

    Args:
        k_beta: p x p information (without the phi factor)
        jacobian: n x p matrix X
        hessians: n x p x p array of X_i

    Returns:
        (M, N), both p x n

    Raises:
        DomainError: K_beta is not positive definite
    """
    try:
        factor = linalg.cho_factor(k_beta)
    except linalg.LinAlgError:
        raise DomainError("K_beta is not positive definite") from None
    p = k_beta.shape[0]
    m_matrix = linalg.cho_solve(factor, jacobian.T)
    k_inv = linalg.cho_solve(factor, np.eye(p))
    k_inv = 0.5 * (k_inv + k_inv.T)
    n_matrix = np.einsum("ar,irs,as->ai", k_inv, hessians, k_inv)
    return m_matrix, n_matrix


def kappa3_from_matrices(m_matrix: np.ndarray, n_matrix: np.ndarray, lq: LocalQuantities, phi: float) -> np.ndarray:
    """phi^-2 [M^(3)(f - 4g - 3e) - 3 (M * N) w]"""
    return ((m_matrix ** 3) @ (lq.f - 4.0 * lq.g - 3.0 * lq.e) - 3.0 * (m_matrix * n_matrix) @ lq.w) / phi ** 2


def beta_third_cumulants(
    family: FamilySpec,
    link: LinkSpec,
    predictor: PredictorModel,
    X,
    beta,
    phi: float,
) -> np.ndarray:
    """Third cumulants of the beta-hat coordinates at (beta, phi)

    Args:
        family: Response family
        link: Link function
        predictor: Parsed predictor
        X: n x m covariate matrix
        beta: Evaluation point (the estimate or the true value)
        phi: Precision at the evaluation point

    Returns:
        p-vector kappa3(beta-hat)
    """
    return _evaluate_beta(family, link, predictor, X, beta, phi)[0]


def _evaluate_beta(family, link, predictor, X, beta, phi):
    beta = np.asarray(beta, dtype=float)
    eta = predictor.eval_eta(X, beta)
    link.eta_domain.check(eta, f"{link.id} predictor")
    mu = np.asarray(link.hinv(eta), dtype=float)
    lq = local_quantities(family, link, mu, phi)
    jac = predictor.jacobian(X, beta)
    hess = predictor.hessians(X, beta)
    k_beta = information_matrix(jac, lq.w)
    m_matrix, n_matrix = m_and_n_matrices(k_beta, jac, hess)
    kappa3 = kappa3_from_matrices(m_matrix, n_matrix, lq, phi)
    return kappa3, k_beta, m_matrix, n_matrix, lq


def beta_skewness(variances, kappa3) -> np.ndarray:
    """gamma1 = kappa3 / Var^(3/2) coordinatewise

    Args:
        variances: Diagonal of Cov(beta-hat), or the full covariance matrix
        kappa3: Third cumulants

    Raises:
        DomainError: A variance is not positive
    """
    variances = np.asarray(variances, dtype=float)
    if variances.ndim == 2:
        variances = np.diag(variances)
    if np.any(~np.isfinite(variances)) or np.any(variances <= 0):
        raise DomainError(f"Variances must be positive, got {variances.tolist()}")
    return np.asarray(kappa3, dtype=float) / variances ** 1.5


def _require_phi_inference(family: FamilySpec):
    if family.phi_fixed is not None or not family.a_available:
        raise UnsupportedCapabilityError(f"Family {family.id} has no a1(phi) structure for phi inference")


def phi_third_cumulant(family: FamilySpec, n: int, phi: float) -> Tuple[float, float]:
    """kappa3(phi-hat) = -2 a1'''/(n^2 a1''^3) and gamma1 = 2 a1'''/(sqrt(n) (-a1'')^(3/2))"""
    _require_phi_inference(family)
    if phi <= 0:
        raise DomainError(f"phi must be positive, got {phi}")
    a1pp = float(family.a1pp(phi))
    a1ppp = float(family.a1ppp(phi))
    kappa3 = -2.0 * a1ppp / (n ** 2 * a1pp ** 3)
    gamma1 = 2.0 * a1ppp / (np.sqrt(n) * (-a1pp) ** 1.5)
    return kappa3, gamma1


def phi_third_cumulant_alpha(family: FamilySpec, n: int, phi: float) -> Tuple[float, float]:
    """Generic form (alpha3 + 3 alpha30 + 6 alpha21) / alpha2^3 through the score cumulants"""
    alpha2, alpha3, alpha30, alpha21 = alpha_quantities(family, phi, n)
    kappa3 = (alpha3 + 3.0 * alpha30 + 6.0 * alpha21) / alpha2 ** 3
    return kappa3, kappa3 * alpha2 ** 1.5


def phi_variance(family: FamilySpec, n: int, phi: float) -> float:
    """First-order Var(phi-hat) = 1/(n a2nd(phi))"""
    _require_phi_inference(family)
    return 1.0 / (n * family.a2nd(phi))


def sigma2_third_cumulant(family: FamilySpec, n: int, sigma2: float) -> Tuple[float, float]:
    """Third cumulant and skewness of sigma2-hat through xi(v) = a1(1/v)

    kappa3 = -2 v^2 (v xi''' + 3 xi'') / (n^2 (2 xi' + v xi'')^3), with the xi
    derivatives taken from a1 by the chain rule and Var(sigma2-hat) = v^4/(n(-a1''))
    """
    _require_phi_inference(family)
    if sigma2 <= 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    v = float(sigma2)
    phi = 1.0 / v
    a1p, a1pp, a1ppp = float(family.a1p(phi)), float(family.a1pp(phi)), float(family.a1ppp(phi))
    xi1 = -a1p / v ** 2
    xi2 = a1pp / v ** 4 + 2.0 * a1p / v ** 3
    xi3 = -a1ppp / v ** 6 - 6.0 * a1pp / v ** 5 - 6.0 * a1p / v ** 4
    kappa3 = -2.0 * v ** 2 * (v * xi3 + 3.0 * xi2) / (n ** 2 * (2.0 * xi1 + v * xi2) ** 3)
    variance = sigma2_variance(family, n, v)
    return kappa3, kappa3 / variance ** 1.5


def sigma2_third_cumulant_delta(family: FamilySpec, n: int, sigma2: float) -> Tuple[float, float]:
    """Same cumulant from phi-hat by the second-order delta method on 1/phi

    kappa3(1/phi-hat) = -kappa3(phi-hat)/phi^6 + 6 Var(phi-hat)^2/phi^7
    """
    phi = 1.0 / float(sigma2)
    kappa3_phi, _ = phi_third_cumulant(family, n, phi)
    var_phi = phi_variance(family, n, phi)
    kappa3 = -kappa3_phi / phi ** 6 + 6.0 * var_phi ** 2 / phi ** 7
    return kappa3, kappa3 / sigma2_variance(family, n, sigma2) ** 1.5


def sigma2_variance(family: FamilySpec, n: int, sigma2: float) -> float:
    """Var(sigma2-hat) = Var(phi-hat)/phi^4"""
    phi = 1.0 / float(sigma2)
    return phi_variance(family, n, phi) / phi ** 4


def edgeworth_pdf(gamma1: float, x):
    """Edgeworth density of a standardized estimate

    phi(x) {1 + (gamma1/6) He3(x) + (gamma1^2/72) He6(x)}; may dip below zero
    in the far tails for large |gamma1|.
    """
    x = np.asarray(x, dtype=float)
    he3 = hermite_e.hermeval(x, _HE3)
    he6 = hermite_e.hermeval(x, _HE6)
    out = std_normal_pdf(x) * (1.0 + gamma1 / 6.0 * he3 + gamma1 ** 2 / 72.0 * he6)
    return float(out) if np.ndim(out) == 0 else out


def edgeworth_pdf_scaled(x, mean: float, variance: float, gamma1: float):
    """Edgeworth density of the estimate in its own units"""
    if variance <= 0:
        raise DomainError(f"variance must be positive, got {variance}")
    scale = np.sqrt(variance)
    return edgeworth_pdf(gamma1, (np.asarray(x, dtype=float) - mean) / scale) / scale


# ---------------------------------------------------------------------------
# closed-form reductions
# ---------------------------------------------------------------------------

def glm_kappa3_beta(m_matrix, dmu, d2mu, V, V1, phi: float) -> np.ndarray:
    """Linear exponential family: phi^-2 sum_i m_ai^3 {-3 mu' mu'' / V + mu'^3 V' / V^2}"""
    bracket = -3.0 * dmu * d2mu / V + dmu ** 3 * V1 / V ** 2
    return (m_matrix ** 3) @ bracket / phi ** 2


def efnlm_kappa3_beta(m_matrix, n_matrix, dmu, d2mu, V, V1, phi: float) -> np.ndarray:
    """Exponential family nonlinear model: the GLM sum plus -3 phi^-2 sum_i m_ai n_ai mu'^2 / V"""
    return glm_kappa3_beta(m_matrix, dmu, d2mu, V, V1, phi) - 3.0 * (m_matrix * n_matrix) @ (dmu ** 2 / V) / phi ** 2


def const_cv_kappa3_beta(m_matrix, n_matrix, mu, dmu, d2mu, k2: float, k3: float) -> np.ndarray:
    """Constant coefficient of variation model (phi = 1)

    sum_i m_ai^3 {(6 k2 - k3) mu'^3/mu^3 - 3 k2 mu' mu''/mu^2} - 3 sum_i m_ai n_ai k2 mu'^2/mu^2
    """
    cubic = (6.0 * k2 - k3) * dmu ** 3 / mu ** 3 - 3.0 * k2 * dmu * d2mu / mu ** 2
    return (m_matrix ** 3) @ cubic - 3.0 * (m_matrix * n_matrix) @ (k2 * dmu ** 2 / mu ** 2)


def von_mises_kappa3_beta(m_matrix, n_matrix, r: float, phi: float) -> np.ndarray:
    """von Mises model with identity link: -3 r(phi)/phi^2 sum_i m_ai n_ai"""
    return -3.0 * r / phi ** 2 * np.sum(m_matrix * n_matrix, axis=1)


def skewness_report(
    family: FamilySpec,
    link: LinkSpec,
    predictor: PredictorModel,
    X,
    beta,
    phi: float,
    evaluated_at: str = "estimate",
    phi_inference: Optional[bool] = None,
) -> SkewnessReport:
    """Full report of cumulants and skewness at (beta, phi)

    Args:
        family, link, predictor: The model
        X: n x m covariate matrix
        beta: Evaluation point
        phi: Precision at the evaluation point
        evaluated_at: Label, "estimate" or "truth"
        phi_inference: Include the phi and sigma2 rows; defaults to whether
            the family supports phi inference

    Returns:
        SkewnessReport
    """
    kappa3, k_beta, m_matrix, n_matrix, lq = _evaluate_beta(family, link, predictor, X, beta, phi)
    p = k_beta.shape[0]
    cov_beta = linalg.cho_solve(linalg.cho_factor(k_beta), np.eye(p)) / phi
    var_beta = np.diag(cov_beta).copy()
    report = SkewnessReport(
        kappa3_beta=kappa3,
        gamma1_beta=beta_skewness(var_beta, kappa3),
        var_beta=var_beta,
        m_matrix=m_matrix,
        n_matrix=n_matrix,
        locals=lq,
        beta=np.asarray(beta, dtype=float),
        phi=float(phi),
        evaluated_at=evaluated_at,
        parameter_names=predictor.parameter_names,
    )
    if phi_inference is None:
        phi_inference = family.phi_fixed is None and family.a_available
    if phi_inference:
        n = m_matrix.shape[1]
        report.kappa3_phi, report.gamma1_phi = phi_third_cumulant(family, n, phi)
        report.var_phi = phi_variance(family, n, phi)
        report.kappa3_sigma2, report.gamma1_sigma2 = sigma2_third_cumulant(family, n, 1.0 / phi)
        report.var_sigma2 = sigma2_variance(family, n, 1.0 / phi)
    return report


def report_for_fit(
    fit: FitResult,
    family: FamilySpec,
    link: LinkSpec,
    predictor: PredictorModel,
    X,
) -> SkewnessReport:
    """Report at the estimates of a fit; phi rows only when phi was estimated"""
    return skewness_report(
        family, link, predictor, X, fit.beta_hat, fit.phi_hat,
        evaluated_at="estimate", phi_inference=fit.phi_estimated,
    )
