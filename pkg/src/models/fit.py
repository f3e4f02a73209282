from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from models.errors import ConfigError


@dataclass
class FitOptions:
    """Settings for Fisher scoring and the phi root search

    Attributes:
        max_iter: Maximum number of scoring iterations
        tol_score: Bound on max |score| scaled by the information diagonal
        tol_step: Bound on the maximum relative step in beta
        beta_init: Starting values; None means the link-transformed regression start
        beta_seed: Point at which the Jacobian is evaluated for the regression start
        phi_bracket: Search interval for the phi root
        step_halving_max: Maximum number of halvings per scoring step
        phi_known: Known precision; skips phi estimation when set
    """
    max_iter: int = 100
    tol_score: float = 1e-8
    tol_step: float = 1e-10
    beta_init: Optional[np.ndarray] = None
    beta_seed: Optional[np.ndarray] = None
    phi_bracket: Tuple[float, float] = (1e-6, 1e6)
    step_halving_max: int = 30
    phi_known: Optional[float] = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.tol_score <= 0 or self.tol_step <= 0:
            raise ConfigError("Convergence tolerances must be positive")
        lo, hi = self.phi_bracket
        if not 0 < lo < hi:
            raise ConfigError(f"phi_bracket must satisfy 0 < lo < hi, got {self.phi_bracket}")
        if self.step_halving_max < 0:
            raise ConfigError("step_halving_max must be nonnegative")
        if self.phi_known is not None and self.phi_known <= 0:
            raise ConfigError(f"Known phi must be positive, got {self.phi_known}")
        if self.beta_init is not None:
            self.beta_init = np.asarray(self.beta_init, dtype=float)
        if self.beta_seed is not None:
            self.beta_seed = np.asarray(self.beta_seed, dtype=float)


@dataclass
class FitResult:
    """Maximum likelihood fit of a dispersion regression

    Attributes:
        beta_hat: Coefficient estimates, ordered as the predictor parameters
        phi_hat: Precision estimate (or the known/fixed value)
        mu_hat: Fitted means
        eta_hat: Fitted predictor values
        deviance: D(y, mu_hat)
        k_beta: X'WX at the estimate with W = -(dmu/deta)^2 d2
        cov_beta: phi_hat^-1 K_beta^-1
        var_phi: [n a2nd(phi_hat)]^-1, None when phi is not estimated
        iterations: Scoring iterations used
        converged: Whether both score and step criteria were met
        max_score: Final max |score|
        deviance_trace: Deviance after each accepted step, starting value first
        phi_estimated: True when phi_hat comes from the phi equation
        phi_at_boundary: True when the phi root was pinned at the bracket end
        family: Family id the fit was made with
        link: Link id the fit was made with
        parameter_names: Names of the beta entries
    """
    beta_hat: np.ndarray
    phi_hat: float
    mu_hat: np.ndarray
    eta_hat: np.ndarray
    deviance: float
    k_beta: np.ndarray
    cov_beta: np.ndarray
    var_phi: Optional[float] = None
    iterations: int = 0
    converged: bool = False
    max_score: float = float("nan")
    deviance_trace: List[float] = field(default_factory=list)
    phi_estimated: bool = False
    phi_at_boundary: bool = False
    family: str = ""
    link: str = ""
    parameter_names: Tuple[str, ...] = ()

    @property
    def sigma2_hat(self) -> float:
        return 1.0 / self.phi_hat

    @property
    def n(self) -> int:
        return int(self.mu_hat.shape[0])

    @property
    def var_sigma2(self) -> Optional[float]:
        """Delta method on sigma^2 = 1/phi"""
        if self.var_phi is None:
            return None
        return self.var_phi / self.phi_hat ** 4

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov_beta))

    def to_dict(self) -> dict:
        """Convert fit to a JSON-ready dictionary"""
        return {
            "family": self.family,
            "link": self.link,
            "parameter_names": list(self.parameter_names),
            "beta_hat": self.beta_hat.tolist(),
            "std_errors": self.std_errors.tolist(),
            "phi_hat": self.phi_hat,
            "sigma2_hat": self.sigma2_hat,
            "phi_estimated": self.phi_estimated,
            "phi_at_boundary": self.phi_at_boundary,
            "mu_hat": self.mu_hat.tolist(),
            "eta_hat": self.eta_hat.tolist(),
            "deviance": self.deviance,
            "k_beta": self.k_beta.tolist(),
            "cov_beta": self.cov_beta.tolist(),
            "var_phi": self.var_phi,
            "var_sigma2": self.var_sigma2,
            "iterations": self.iterations,
            "converged": self.converged,
            "max_score": self.max_score,
            "deviance_trace": list(self.deviance_trace),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FitResult":
        """Create fit from dictionary data; derived entries are recomputed"""
        return cls(
            beta_hat=np.asarray(data["beta_hat"], dtype=float),
            phi_hat=float(data["phi_hat"]),
            mu_hat=np.asarray(data["mu_hat"], dtype=float),
            eta_hat=np.asarray(data["eta_hat"], dtype=float),
            deviance=float(data["deviance"]),
            k_beta=np.asarray(data["k_beta"], dtype=float),
            cov_beta=np.asarray(data["cov_beta"], dtype=float),
            var_phi=data.get("var_phi"),
            iterations=int(data.get("iterations", 0)),
            converged=bool(data.get("converged", False)),
            max_score=float(data.get("max_score", float("nan"))),
            deviance_trace=list(data.get("deviance_trace", [])),
            phi_estimated=bool(data.get("phi_estimated", False)),
            phi_at_boundary=bool(data.get("phi_at_boundary", False)),
            family=data.get("family", ""),
            link=data.get("link", ""),
            parameter_names=tuple(data.get("parameter_names", ())),
        )
