from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from models.family import LocalQuantities


def _optional_float(value) -> Optional[float]:
    return None if value is None else float(value)


@dataclass
class SkewnessReport:
    """Second-order third cumulants and skewness of the MLEs

    Attributes:
        kappa3_beta: Third cumulant of each beta-hat coordinate
        gamma1_beta: kappa3_beta / Var(beta-hat)^(3/2)
        var_beta: First-order variances of the beta-hat coordinates
        kappa3_phi, gamma1_phi, var_phi: Same for phi-hat; None without phi inference
        kappa3_sigma2, gamma1_sigma2, var_sigma2: Same for sigma2-hat = 1/phi-hat
        m_matrix: M = K_beta^-1 X', p x n
        n_matrix: n_ai = (K_beta^-1 X_i K_beta^-1)_aa, p x n
        locals: w, f, g, e at the evaluation point
        beta: Point at which the report was evaluated
        phi: Precision at which the report was evaluated
        evaluated_at: "estimate" or "truth"
        parameter_names: Names of the beta entries
    """
    kappa3_beta: np.ndarray
    gamma1_beta: np.ndarray
    var_beta: np.ndarray
    m_matrix: np.ndarray
    n_matrix: np.ndarray
    locals: LocalQuantities
    beta: np.ndarray
    phi: float
    kappa3_phi: Optional[float] = None
    gamma1_phi: Optional[float] = None
    var_phi: Optional[float] = None
    kappa3_sigma2: Optional[float] = None
    gamma1_sigma2: Optional[float] = None
    var_sigma2: Optional[float] = None
    evaluated_at: str = "estimate"
    parameter_names: Tuple[str, ...] = ()

    def estimand_rows(self) -> list:
        """(name, gamma1) pairs for every beta coordinate, then phi and sigma2"""
        names = self.parameter_names or tuple(f"beta{a}" for a in range(len(self.gamma1_beta)))
        rows = list(zip(names, self.gamma1_beta.tolist()))
        rows.append(("phi", self.gamma1_phi))
        rows.append(("sigma2", self.gamma1_sigma2))
        return rows

    def to_dict(self, include_matrices: bool = True) -> dict:
        """Convert report to a JSON-ready dictionary

        Args:
            include_matrices: Also emit M, N and the local quantities
        """
        data = {
            "evaluated_at": self.evaluated_at,
            "parameter_names": list(self.parameter_names),
            "beta": self.beta.tolist(),
            "phi": self.phi,
            "kappa3_beta": self.kappa3_beta.tolist(),
            "gamma1_beta": self.gamma1_beta.tolist(),
            "var_beta": self.var_beta.tolist(),
            "kappa3_phi": self.kappa3_phi,
            "gamma1_phi": self.gamma1_phi,
            "var_phi": self.var_phi,
            "kappa3_sigma2": self.kappa3_sigma2,
            "gamma1_sigma2": self.gamma1_sigma2,
            "var_sigma2": self.var_sigma2,
        }
        if include_matrices:
            data["m_matrix"] = self.m_matrix.tolist()
            data["n_matrix"] = self.n_matrix.tolist()
            data["locals"] = self.locals.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "SkewnessReport":
        p = len(data["kappa3_beta"])
        empty = np.zeros((p, 0))
        return cls(
            kappa3_beta=np.asarray(data["kappa3_beta"], dtype=float),
            gamma1_beta=np.asarray(data["gamma1_beta"], dtype=float),
            var_beta=np.asarray(data["var_beta"], dtype=float),
            m_matrix=np.asarray(data["m_matrix"], dtype=float) if "m_matrix" in data else empty,
            n_matrix=np.asarray(data["n_matrix"], dtype=float) if "n_matrix" in data else empty,
            locals=LocalQuantities.from_dict(data["locals"]) if "locals" in data else LocalQuantities(
                *(np.zeros(0) for _ in range(4))
            ),
            beta=np.asarray(data["beta"], dtype=float),
            phi=float(data["phi"]),
            kappa3_phi=_optional_float(data.get("kappa3_phi")),
            gamma1_phi=_optional_float(data.get("gamma1_phi")),
            var_phi=_optional_float(data.get("var_phi")),
            kappa3_sigma2=_optional_float(data.get("kappa3_sigma2")),
            gamma1_sigma2=_optional_float(data.get("gamma1_sigma2")),
            var_sigma2=_optional_float(data.get("var_sigma2")),
            evaluated_at=data.get("evaluated_at", "estimate"),
            parameter_names=tuple(data.get("parameter_names", ())),
        )
