import numpy as np
import pytest
from scipy import integrate, special

from managers.fit_manager import FitManager
from models.errors import DomainError, UnsupportedCapabilityError
from models.predictor import parse
from models.report import SkewnessReport
from stat_utils.catalog import make_family, make_link
from stat_utils.skewness import (
    beta_skewness,
    beta_third_cumulants,
    const_cv_kappa3_beta,
    edgeworth_pdf,
    edgeworth_pdf_scaled,
    efnlm_kappa3_beta,
    glm_kappa3_beta,
    phi_third_cumulant,
    phi_third_cumulant_alpha,
    phi_variance,
    report_for_fit,
    sigma2_third_cumulant,
    sigma2_third_cumulant_delta,
    sigma2_variance,
    skewness_report,
    von_mises_kappa3_beta,
)
from stat_utils.specfun import bessel_ratio, std_normal_pdf

from conftest import BETA_TRUE, PHI_TRUE, uniform_design

LINEAR3 = parse("b0 + b1*x1 + b2*x2", ["x1", "x2"], ["b0", "b1", "b2"])
NONLINEAR = parse("b0 + b1*exp(b2*x1)", ["x1"], ["b0", "b1", "b2"])
A1_FAMILIES = ["normal", "gamma", "inverse_gaussian", "reciprocal_gamma", "log_gamma",
               "reciprocal_inverse_gaussian", "von_mises"]


# ---------------------------------------------------------------------------
# phi-hat and sigma2-hat
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("family_id", ["normal", "inverse_gaussian"])
@pytest.mark.parametrize("value", [0.5, 1.0, 4.0])
@pytest.mark.parametrize("n", [10, 32, 100])
def test_half_log_families_closed_forms(family_id, value, n):
    family = make_family(family_id)
    kappa3, gamma1 = phi_third_cumulant(family, n, value)
    assert kappa3 == pytest.approx(16 * value ** 3 / n ** 2, rel=1e-12)
    assert gamma1 == pytest.approx(2 ** 2.5 / np.sqrt(n), rel=1e-12)
    kappa3, gamma1 = sigma2_third_cumulant(family, n, value)
    assert kappa3 == pytest.approx(8 * value ** 3 / n ** 2, rel=1e-12)
    assert gamma1 == pytest.approx(2 ** 1.5 / np.sqrt(n), rel=1e-12)


def test_normal_examples():
    normal = make_family("normal")
    assert phi_third_cumulant(normal, 10, 1.0)[0] == pytest.approx(0.16)
    assert phi_third_cumulant(normal, 32, 3.0)[1] == pytest.approx(1.0)
    assert sigma2_third_cumulant(normal, 10, 1.0)[0] == pytest.approx(0.08)


@pytest.mark.parametrize("family_id", ["gamma", "reciprocal_gamma", "log_gamma"])
@pytest.mark.parametrize("phi", [0.5, 2.0, 4.0])
def test_gamma_type_formulas(family_id, phi):
    family = make_family(family_id)
    n = 50
    psi1, psi2 = special.polygamma(1, phi), special.polygamma(2, phi)
    kappa3_phi = 2 * (1 / phi ** 2 + psi2) / (n ** 2 * (1 / phi - psi1) ** 3)
    var_phi = 1 / (n * (psi1 - 1 / phi))
    assert phi_third_cumulant(family, n, phi)[0] == pytest.approx(kappa3_phi, rel=1e-10)
    assert phi_variance(family, n, phi) == pytest.approx(var_phi, rel=1e-10)

    kappa3_sigma2 = -kappa3_phi / phi ** 6 + 6 * var_phi ** 2 / phi ** 7
    var_sigma2 = var_phi / phi ** 4
    kappa3, gamma1 = sigma2_third_cumulant(family, n, 1 / phi)
    assert kappa3 == pytest.approx(kappa3_sigma2, rel=1e-10)
    assert gamma1 == pytest.approx(kappa3_sigma2 / var_sigma2 ** 1.5, rel=1e-10)
    assert sigma2_variance(family, n, 1 / phi) == pytest.approx(var_sigma2, rel=1e-12)


@pytest.mark.parametrize("family_id", A1_FAMILIES)
@pytest.mark.parametrize("phi", [0.5, 2.0, 7.0])
def test_alpha_form_agrees_with_a1_form(family_id, phi):
    family = make_family(family_id)
    direct = phi_third_cumulant(family, 25, phi)
    alpha = phi_third_cumulant_alpha(family, 25, phi)
    np.testing.assert_allclose(alpha, direct, rtol=1e-12)


@pytest.mark.parametrize("family_id", A1_FAMILIES)
def test_sigma2_chain_rule_agrees_with_delta_method(family_id):
    family = make_family(family_id)
    np.testing.assert_allclose(
        sigma2_third_cumulant(family, 30, 0.4), sigma2_third_cumulant_delta(family, 30, 0.4), rtol=1e-10
    )


def test_phi_skewness_needs_phi_structure():
    with pytest.raises(UnsupportedCapabilityError):
        phi_third_cumulant(make_family("poisson"), 10, 1.0)
    with pytest.raises(UnsupportedCapabilityError):
        sigma2_third_cumulant(make_family("tweedie(1.5)"), 10, 1.0)


# ---------------------------------------------------------------------------
# beta-hat reductions
# ---------------------------------------------------------------------------

def _link_values(link, report, X, predictor):
    mu = link.hinv(predictor.eval_eta(X, report.beta))
    return mu, link.dmu_deta(mu), link.d2mu_deta2(mu)


def _assert_close(actual, expected):
    # entries are sums of mixed-sign terms; compare on the scale of the vector
    scale = np.max(np.abs(expected))
    np.testing.assert_allclose(actual, expected, rtol=1e-9, atol=1e-11 * scale)


GLM_CASES = [
    ("normal", "identity", (0.4, 0.3, 0.2)),
    ("normal", "log", (0.4, 0.3, 0.2)),
    ("normal", "reciprocal", (0.4, 0.3, 0.2)),
    ("poisson", "identity", (0.4, 0.3, 0.2)),
    ("poisson", "log", (0.4, 0.3, 0.2)),
    ("poisson", "sqrt", (0.4, 0.3, 0.2)),
    ("gamma", "identity", (0.4, 0.3, 0.2)),
    ("gamma", "log", (0.4, 0.3, 0.2)),
    ("gamma", "reciprocal", (0.4, 0.3, 0.2)),
    ("inverse_gaussian", "identity", (0.4, 0.3, 0.2)),
    ("inverse_gaussian", "log", (0.4, 0.3, 0.2)),
    ("inverse_gaussian", "square_reciprocal", (0.4, 0.3, 0.2)),
    ("binomial", "logit", (-0.5, 0.6, -0.3)),
    ("binomial", "probit", (-0.5, 0.6, -0.3)),
    ("binomial", "cloglog", (-0.5, 0.6, -0.3)),
]


@pytest.mark.parametrize("family_id, link_id, beta", GLM_CASES)
def test_linear_predictor_reduces_to_glm_sum(family_id, link_id, beta):
    family, link = make_family(family_id), make_link(link_id)
    phi = 1.0 if family.phi_fixed is not None else 2.0
    rng = np.random.default_rng(7)
    V, V1 = family.variance
    for _ in range(20):
        X = rng.uniform(0.5, 1.5, size=(15, 2))
        report = skewness_report(family, link, LINEAR3, X, beta, phi)
        assert not np.any(report.n_matrix)
        mu, dmu, d2mu = _link_values(link, report, X, LINEAR3)
        expected = glm_kappa3_beta(report.m_matrix, dmu, d2mu, V(mu), V1(mu), phi)
        _assert_close(report.kappa3_beta, expected)


@pytest.mark.parametrize("family_id, link_id", [
    ("gamma", "log"), ("poisson", "log"), ("inverse_gaussian", "log"), ("normal", "identity"),
])
def test_nonlinear_predictor_reduces_to_efnlm_display(family_id, link_id):
    family, link = make_family(family_id), make_link(link_id)
    phi = 1.0 if family.phi_fixed is not None else 3.0
    rng = np.random.default_rng(11)
    V, V1 = family.variance
    beta = np.array([0.3, 0.5, 0.7])
    for _ in range(10):
        X = rng.uniform(0.0, 2.0, size=(20, 1))
        report = skewness_report(family, link, NONLINEAR, X, beta, phi)
        assert np.any(report.n_matrix)
        mu, dmu, d2mu = _link_values(link, report, X, NONLINEAR)
        expected = efnlm_kappa3_beta(report.m_matrix, report.n_matrix, dmu, d2mu, V(mu), V1(mu), phi)
        _assert_close(report.kappa3_beta, expected)


@pytest.mark.parametrize("family_id", [
    "const_cv_normal(0.4)", "const_cv_ig(0.4)", "const_cv_lognormal(0.4)", "const_cv_weibull(1.5)",
])
def test_constant_cv_reduction(family_id):
    family, link = make_family(family_id), make_link("log")
    k2, k3 = family.hyper["k2"], family.hyper["k3"]
    rng = np.random.default_rng(13)
    beta = np.array([0.3, 0.5, 0.7])
    for _ in range(10):
        X = rng.uniform(0.0, 2.0, size=(20, 1))
        report = skewness_report(family, link, NONLINEAR, X, beta, 1.0)
        mu, dmu, d2mu = _link_values(link, report, X, NONLINEAR)
        expected = const_cv_kappa3_beta(report.m_matrix, report.n_matrix, mu, dmu, d2mu, k2, k3)
        _assert_close(report.kappa3_beta, expected)


def test_von_mises_nonlinear_reduction():
    family, link = make_family("von_mises"), make_link("identity")
    rng = np.random.default_rng(17)
    phi = 2.5
    for _ in range(10):
        X = rng.uniform(-1.0, 1.0, size=(25, 1))
        report = skewness_report(family, link, NONLINEAR, X, [0.1, 0.4, 0.9], phi)
        expected = von_mises_kappa3_beta(report.m_matrix, report.n_matrix, bessel_ratio(phi).r, phi)
        _assert_close(report.kappa3_beta, expected)


@pytest.mark.parametrize("family_id", ["von_mises", "normal"])
def test_identity_link_linear_predictor_has_zero_third_cumulant(family_id):
    X = np.random.default_rng(19).uniform(-1.0, 1.0, size=(12, 2))
    kappa3 = beta_third_cumulants(make_family(family_id), make_link("identity"), LINEAR3, X, [0.1, 0.2, 0.3], 2.0)
    assert not np.any(kappa3)


def test_gamma_skewness_scales_with_inverse_root_phi():
    family, link = make_family("gamma"), make_link("log")
    X = np.random.default_rng(23).uniform(0.5, 1.5, size=(12, 2))
    beta = [0.4, 0.3, 0.2]
    one = skewness_report(family, link, LINEAR3, X, beta, 1.5)
    two = skewness_report(family, link, LINEAR3, X, beta, 3.0)
    np.testing.assert_allclose(two.gamma1_beta, one.gamma1_beta / np.sqrt(2.0), rtol=1e-12)


def test_replicated_design_shrinks_skewness_by_root_n(reciprocal_gamma_model):
    family, link, predictor = reciprocal_gamma_model
    X = uniform_design(np.random.default_rng(29), 20)
    small = skewness_report(family, link, predictor, X, BETA_TRUE, PHI_TRUE)
    large = skewness_report(family, link, predictor, np.tile(X, (3, 1)), BETA_TRUE, PHI_TRUE)
    np.testing.assert_allclose(large.gamma1_beta, small.gamma1_beta / np.sqrt(3.0), rtol=1e-10)
    assert large.gamma1_phi == pytest.approx(small.gamma1_phi / np.sqrt(3.0), rel=1e-12)
    assert large.gamma1_sigma2 == pytest.approx(small.gamma1_sigma2 / np.sqrt(3.0), rel=1e-12)


def test_relabeling_parameters_permutes_cumulants(reciprocal_gamma_model):
    family, link, predictor = reciprocal_gamma_model
    X = uniform_design(np.random.default_rng(31), 20)
    swapped = parse("b0 + b1*x1 + x2^b2", ["x1", "x2"], ["b2", "b0", "b1"])
    base = beta_third_cumulants(family, link, predictor, X, BETA_TRUE, PHI_TRUE)
    permuted = beta_third_cumulants(family, link, swapped, X, BETA_TRUE[[2, 0, 1]], PHI_TRUE)
    np.testing.assert_allclose(permuted, base[[2, 0, 1]], rtol=1e-10)


def test_gamma1_is_kappa3_over_variance_power(reciprocal_gamma_model):
    family, link, predictor = reciprocal_gamma_model
    X = uniform_design(np.random.default_rng(37), 20)
    report = skewness_report(family, link, predictor, X, BETA_TRUE, PHI_TRUE, evaluated_at="truth")
    np.testing.assert_allclose(report.gamma1_beta, report.kappa3_beta / report.var_beta ** 1.5, rtol=1e-14)
    assert report.evaluated_at == "truth"
    assert [name for name, _ in report.estimand_rows()] == ["b0", "b1", "b2", "phi", "sigma2"]


def test_beta_skewness_rejects_nonpositive_variance():
    assert np.all(beta_skewness([1.0, 4.0], [0.0, 0.0]) == 0.0)
    np.testing.assert_allclose(beta_skewness(np.diag([1.0, 4.0]), [1.0, 8.0]), [1.0, 1.0])
    with pytest.raises(DomainError):
        beta_skewness([1.0, 0.0], [0.1, 0.1])


def test_report_for_fit_and_serialization(rng):
    x = rng.uniform(0, 1, 30)
    y = rng.gamma(3.0, np.exp(0.2 + x) / 3.0)
    predictor = parse("b0 + b1*x1", ["x1"], ["b0", "b1"])
    family, link = make_family("gamma"), make_link("log")
    X = x.reshape(-1, 1)
    fit = FitManager(family, link, predictor).fit(X, y)
    report = report_for_fit(fit, family, link, predictor, X)
    assert report.phi == fit.phi_hat
    assert report.var_phi == pytest.approx(fit.var_phi, rel=1e-12)
    np.testing.assert_allclose(report.var_beta, np.diag(fit.cov_beta), rtol=1e-10)

    data = report.to_dict()
    for key in ("kappa3_beta", "gamma1_beta", "kappa3_phi", "gamma1_phi", "kappa3_sigma2", "gamma1_sigma2"):
        assert key in data
    again = SkewnessReport.from_dict(data)
    np.testing.assert_array_equal(again.gamma1_beta, report.gamma1_beta)
    np.testing.assert_array_equal(again.locals.w, report.locals.w)
    assert "m_matrix" not in report.to_dict(include_matrices=False)


def test_known_phi_report_has_no_phi_rows(rng):
    x = rng.uniform(0, 1, 30)
    y = rng.gamma(3.0, np.exp(0.2 + x) / 3.0)
    predictor = parse("b0 + b1*x1", ["x1"], ["b0", "b1"])
    family, link = make_family("gamma"), make_link("log")
    X = x.reshape(-1, 1)
    fit = FitManager(family, link, predictor).fit(X, y)
    fit.phi_estimated = False
    report = report_for_fit(fit, family, link, predictor, X)
    assert report.gamma1_phi is None and report.gamma1_sigma2 is None


# ---------------------------------------------------------------------------
# Edgeworth density
# ---------------------------------------------------------------------------

def test_edgeworth_reduces_to_normal():
    x = np.linspace(-5, 5, 41)
    np.testing.assert_array_equal(edgeworth_pdf(0.0, x), std_normal_pdf(x))


@pytest.mark.parametrize("gamma1", [0.3, -0.7, 1.0])
def test_edgeworth_at_zero(gamma1):
    assert edgeworth_pdf(gamma1, 0.0) == pytest.approx(std_normal_pdf(0.0) * (1 - 15 * gamma1 ** 2 / 72))


@pytest.mark.parametrize("gamma1", [0.0, 0.3, 1.0])
def test_edgeworth_integrates_to_one(gamma1):
    total, _ = integrate.quad(lambda x: edgeworth_pdf(gamma1, x), -10, 10, epsabs=1e-13, epsrel=1e-13, limit=200)
    assert total == pytest.approx(1.0, abs=1e-8)


def test_scaled_edgeworth_integrates_to_one():
    total, _ = integrate.quad(
        lambda x: edgeworth_pdf_scaled(x, 2.0, 0.25, 0.4), -3, 7, epsabs=1e-13, epsrel=1e-13, limit=200
    )
    assert total == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(DomainError):
        edgeworth_pdf_scaled(0.0, 0.0, 0.0, 0.1)
