from dataclasses import dataclass
import logging
from typing import Optional, Tuple

import numpy as np
from scipy import linalg, optimize

from models.errors import (
    ConvergenceError,
    DomainError,
    SingularInformationError,
    UnsupportedCapabilityError,
)
from models.family import FamilySpec, LinkSpec
from models.fit import FitOptions, FitResult
from models.predictor import PredictorModel
from stat_utils.catalog import unit_deviance

logger = logging.getLogger(__name__)

# condition number above which K_beta is treated as rank deficient
_MAX_CONDITION = 1e14


@dataclass
class ScoringState:
    """Everything Fisher scoring needs at one value of beta"""
    beta: np.ndarray
    eta: np.ndarray
    mu: np.ndarray
    jacobian: np.ndarray
    weights: np.ndarray
    score: np.ndarray
    k_beta: np.ndarray
    deviance: float

    @property
    def max_score(self) -> float:
        """max |U_r| / sqrt(K_rr), the score in standard-error units"""
        scale = np.sqrt(np.maximum(np.diag(self.k_beta), np.finfo(float).tiny))
        return float(np.max(np.abs(self.score) / scale)) if self.score.size else 0.0


def cholesky_solve(k_beta: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve K x = rhs for symmetric positive definite K

    Falls back to K + 1e-10 trace(K)/p I when the factorization fails.

    Raises:
        SingularInformationError: K is rank deficient or not positive definite
    """
    p = k_beta.shape[0]
    with np.errstate(all="ignore"):
        condition = float(np.linalg.cond(k_beta)) if p else 1.0
    if not np.isfinite(condition) or condition > _MAX_CONDITION:
        raise SingularInformationError("Fisher information for beta is singular", condition)
    try:
        factor = linalg.cho_factor(k_beta)
    except linalg.LinAlgError:
        jitter = 1e-10 * np.trace(k_beta) / p
        logger.debug(f"Cholesky failed, retrying with jitter {jitter:.3e}")
        try:
            factor = linalg.cho_factor(k_beta + jitter * np.eye(p))
        except linalg.LinAlgError:
            raise SingularInformationError(
                "Fisher information for beta is not positive definite", condition
            ) from None
    return linalg.cho_solve(factor, rhs)


class FitManager:
    def __init__(
        self,
        family: FamilySpec,
        link: LinkSpec,
        predictor: PredictorModel,
        options: Optional[FitOptions] = None,
    ):
        """Initialize the FitManager

        Args:
            family: Response family
            link: Link function
            predictor: Parsed predictor f(x; beta)
            options: Fitting options (default: FitOptions())
        """
        self.family = family
        self.link = link
        self.predictor = predictor
        self.options = options or FitOptions()

    def fit(self, X, y) -> FitResult:
        """Fit beta and phi, then attach the asymptotic covariances

        Args:
            X: n x m covariate matrix
            y: n responses

        Returns:
            FitResult; converged is False when scoring stopped early

        Raises:
            DomainError: Responses or fitted means outside the family domain
            SingularInformationError: Rank-deficient information for beta
            UnsupportedCapabilityError: phi cannot be estimated for the family
            ConvergenceError: The phi equation has no root in the bracket
        """
        X, y = self._validate(X, y)
        logger.debug(
            f"Fitting {self.family.id} / {self.link.id} model '{self.predictor.source}' "
            f"with n={y.shape[0]}, p={self.predictor.p}"
        )
        result = self.fit_beta(X, y)
        phi_hat, estimated, at_boundary = self.fit_phi(y, result.mu_hat)
        result.phi_hat = phi_hat
        result.phi_estimated = estimated
        result.phi_at_boundary = at_boundary
        if self.family.phi_in_weights:
            state = self._state(X, y, result.beta_hat, phi_hat)
            result.k_beta = state.k_beta
        result.cov_beta, result.var_phi, _ = self.asymptotic_covariance(result)
        logger.debug(
            f"Fit finished after {result.iterations} iterations: converged={result.converged}, "
            f"deviance={result.deviance:.6g}, phi={phi_hat:.6g}"
        )
        return result

    def fit_beta(self, X, y) -> FitResult:
        """Fisher scoring for beta with step halving

        The step is (X'WX)^-1 X' diag(dmu/deta) t1(y, mu); phi cancels between
        the score and the information except where d2 depends on phi, in which
        case W uses the known phi or the profile estimate at the current means.

        Returns:
            Partial FitResult: beta block, with phi_hat set to the working value

        Raises:
            DomainError: No admissible start or a step that halving cannot repair
            SingularInformationError: Rank-deficient X'WX
        """
        X, y = self._validate(X, y)
        opts = self.options
        state = self._initial_state(X, y)
        trace = [state.deviance]
        converged = False
        iterations = 0

        for iterations in range(1, opts.max_iter + 1):
            direction = cholesky_solve(state.k_beta, state.score)
            new_state = None
            any_admissible = False
            step = direction
            for halving in range(opts.step_halving_max + 1):
                try:
                    trial = self._state(X, y, state.beta + step)
                except DomainError:
                    step = step / 2.0
                    continue
                any_admissible = True
                if trial.deviance <= state.deviance + 1e-12 * max(1.0, abs(state.deviance)):
                    new_state = trial
                    break
                step = step / 2.0

            if new_state is None:
                converged = state.max_score <= opts.tol_score
                if not converged and not any_admissible:
                    raise DomainError(
                        f"Scoring step leaves the {self.family.id}/{self.link.id} domain "
                        f"after {opts.step_halving_max} halvings at iteration {iterations}"
                    )
                logger.debug(f"Iteration {iterations}: no deviance decrease, stopping")
                break

            rel_step = float(np.max(np.abs(step) / np.maximum(np.abs(new_state.beta), 1.0)))
            state = new_state
            trace.append(state.deviance)
            logger.debug(
                f"Iteration {iterations}: deviance={state.deviance:.12g}, "
                f"max|score|={state.max_score:.3e}, halvings={halving}"
            )
            if state.max_score <= opts.tol_score and rel_step <= opts.tol_step:
                converged = True
                break

        if not converged:
            logger.warning(
                f"Fisher scoring did not converge after {iterations} iterations "
                f"(max|score|={state.max_score:.3e})"
            )

        phi_work = self._working_phi(y, state.mu)
        return FitResult(
            beta_hat=state.beta,
            phi_hat=phi_work,
            mu_hat=state.mu,
            eta_hat=state.eta,
            deviance=state.deviance,
            k_beta=state.k_beta,
            cov_beta=cholesky_solve(state.k_beta, np.eye(state.k_beta.shape[0])) / phi_work,
            iterations=iterations,
            converged=converged,
            max_score=state.max_score,
            deviance_trace=trace,
            family=self.family.id,
            link=self.link.id,
            parameter_names=self.predictor.parameter_names,
        )

    def fit_phi(self, y, mu_hat) -> Tuple[float, bool, bool]:
        """Solve the phi likelihood equation n a1'(phi) = D/2 - sum[tmax(y_i) + c(y_i)]

        Args:
            y: Responses
            mu_hat: Fitted means from fit_beta

        Returns:
            (phi_hat, estimated, at_boundary). Known or fixed precision is
            passed through with estimated=False.

        Raises:
            UnsupportedCapabilityError: Family without a1(phi) structure
            ConvergenceError: Residual has no sign change inside the bracket
        """
        if self.options.phi_known is not None:
            return float(self.options.phi_known), False, False
        if self.family.phi_fixed is not None:
            return float(self.family.phi_fixed), False, False
        if not self.family.a_available:
            raise UnsupportedCapabilityError(
                f"Family {self.family.id} does not support phi estimation; supply a known phi"
            )

        residual = self.phi_residual(y, mu_hat)
        lo, hi = self.options.phi_bracket
        r_lo, r_hi = residual(lo), residual(hi)
        if not (np.isfinite(r_lo) and np.isfinite(r_hi)):
            raise DomainError(f"phi equation is not finite on the bracket: r({lo})={r_lo}, r({hi})={r_hi}")
        if r_hi >= 0.0:
            logger.warning(f"phi equation has no root below {hi:g}; reporting the boundary solution")
            return float(hi), True, True
        if r_lo <= 0.0:
            raise ConvergenceError(
                f"phi equation has no sign change on [{lo:g}, {hi:g}]: r(lo)={r_lo:.6g}, r(hi)={r_hi:.6g}",
                diagnostics={"phi_lo": lo, "phi_hi": hi, "residual_lo": r_lo, "residual_hi": r_hi},
            )
        phi_hat = optimize.brentq(residual, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
        return float(phi_hat), True, False

    def phi_residual(self, y, mu_hat):
        """phi -> n a1'(phi) + sum[t(y_i, mu_i) + c(y_i)], strictly decreasing in phi"""
        y = np.asarray(y, dtype=float)
        mu_hat = np.asarray(mu_hat, dtype=float)
        n = y.shape[0]
        total = float(np.sum(self.family.t(y, mu_hat) + self.family.c_of(y)))

        def residual(phi: float) -> float:
            return float(n * self.family.a1p(phi) + total)

        return residual

    def asymptotic_covariance(self, fit: FitResult) -> Tuple[np.ndarray, Optional[float], Optional[float]]:
        """First-order covariances from the block-diagonal Fisher information

        Returns:
            (cov_beta, var_phi, var_sigma2): phi^-1 K_beta^-1, [n a2nd(phi)]^-1
            and var_phi / phi^4; the phi entries are None unless phi was estimated

        Raises:
            SingularInformationError: K_beta is singular
        """
        p = fit.k_beta.shape[0]
        cov_beta = cholesky_solve(fit.k_beta, np.eye(p)) / fit.phi_hat
        cov_beta = 0.5 * (cov_beta + cov_beta.T)
        if not fit.phi_estimated:
            return cov_beta, None, None
        var_phi = 1.0 / (fit.n * self.family.a2nd(fit.phi_hat))
        return cov_beta, float(var_phi), float(var_phi / fit.phi_hat ** 4)

    def _validate(self, X, y) -> Tuple[np.ndarray, np.ndarray]:
        y = np.asarray(y, dtype=float).ravel()
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.shape[0] != y.shape[0]:
            raise DomainError(f"Covariates have {X.shape[0]} rows but there are {y.shape[0]} responses")
        if y.shape[0] <= self.predictor.p:
            raise DomainError(f"Need more observations than parameters (n={y.shape[0]}, p={self.predictor.p})")
        self.family.check_y(y)
        return X, y

    def _working_phi(self, y, mu) -> float:
        """phi used inside W; only matters when d2 depends on phi"""
        if self.options.phi_known is not None:
            return float(self.options.phi_known)
        if self.family.phi_fixed is not None:
            return float(self.family.phi_fixed)
        if not self.family.phi_in_weights or not self.family.a_available:
            return 1.0
        try:
            phi, _, _ = self.fit_phi(y, mu)
        except ConvergenceError:
            phi = self.options.phi_bracket[0]
        return phi

    def _state(self, X, y, beta, phi: Optional[float] = None) -> ScoringState:
        beta = np.asarray(beta, dtype=float)
        eta = self.predictor.eval_eta(X, beta)
        self.link.eta_domain.check(eta, f"{self.link.id} predictor")
        mu = np.asarray(self.link.hinv(eta), dtype=float)
        self.family.check_mu(mu)
        self.link.mu_domain.check(mu, f"{self.link.id} link mean")
        jac = self.predictor.jacobian(X, beta)
        if phi is None:
            phi = self._working_phi(y, mu)
        dmu = self.link.dmu_deta(mu)
        weights = -(dmu ** 2) * self.family.d2(mu, phi)
        score = jac.T @ (dmu * self.family.t1(y, mu))
        k_beta = jac.T @ (weights[:, None] * jac)
        k_beta = 0.5 * (k_beta + k_beta.T)
        deviance = unit_deviance(self.family, y, mu)
        if not (np.all(np.isfinite(score)) and np.all(np.isfinite(k_beta))):
            raise DomainError(f"Score or information is not finite at beta={beta.tolist()}")
        return ScoringState(beta, eta, mu, jac, weights, score, k_beta, deviance)

    def _starting_means(self, y: np.ndarray) -> np.ndarray:
        """Responses pulled inside the open mean domain of family and link"""
        fam, lnk = self.family.mu_domain, self.link.mu_domain
        lo, hi = max(fam.lo, lnk.lo), min(fam.hi, lnk.hi)
        if np.isfinite(lo) and np.isfinite(hi):
            margin = 0.025 * (hi - lo)
            return np.clip(y, lo + margin, hi - margin)
        if np.isfinite(lo):
            return np.where(y > lo, y, lo + 0.1)
        if np.isfinite(hi):
            return np.where(y < hi, y, hi - 0.1)
        return y

    def _initial_state(self, X, y) -> ScoringState:
        """Admissible starting point for scoring

        A user start is used as is. Otherwise the link-transformed responses
        are regressed on the Jacobian linearized at the seed (default all ones),
        falling back to the seed itself.
        """
        opts = self.options
        if opts.beta_init is not None:
            try:
                return self._state(X, y, opts.beta_init)
            except DomainError as e:
                raise DomainError(f"Initial beta is not admissible: {e}") from e

        seed = opts.beta_seed if opts.beta_seed is not None else np.ones(self.predictor.p)
        candidates = []
        try:
            with np.errstate(all="ignore"):
                z = np.asarray(self.link.h(self._starting_means(y)), dtype=float)
            eta0 = self.predictor.eval_eta(X, seed)
            jac0 = self.predictor.jacobian(X, seed)
            if np.all(np.isfinite(z)):
                delta, *_ = np.linalg.lstsq(jac0, z - eta0, rcond=None)
                candidates.append(seed + delta)
        except DomainError:
            pass
        candidates.append(seed)

        for beta in candidates:
            try:
                return self._state(X, y, beta)
            except DomainError as e:
                logger.debug(f"Rejected starting value {np.asarray(beta).tolist()}: {e}")
        raise DomainError("No admissible starting value for beta; supply beta_init")
