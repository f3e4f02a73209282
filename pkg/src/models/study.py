from dataclasses import dataclass, field
import csv
import io
import re
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from models.errors import ConfigError

_UNIFORM_RE = re.compile(r"^\s*uniform\s*\(\s*([^,()]+)\s*,\s*([^,()]+)\s*\)\s*$")

CSV_COLUMNS = ("estimand", "mean_estimated_gamma1", "true_gamma1", "sample_g3")


def _floats(text: str, key: str) -> Tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"Invalid numeric list for {key}: {text!r}") from None


def _names(text: str) -> Tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def parse_covariate_spec(text: str) -> Tuple[Tuple[float, float], ...]:
    """Parse "uniform(0,1); uniform(1,2)" into ((0, 1), (1, 2))"""
    bounds = []
    for entry in text.split(";"):
        if not entry.strip():
            continue
        match = _UNIFORM_RE.match(entry)
        if not match:
            raise ConfigError(f"Unsupported covariate distribution {entry.strip()!r}; use uniform(a,b)")
        try:
            a, b = float(match.group(1)), float(match.group(2))
        except ValueError:
            raise ConfigError(f"Invalid bounds in {entry.strip()!r}") from None
        if not a < b:
            raise ConfigError(f"uniform(a,b) needs a < b, got {entry.strip()!r}")
        bounds.append((a, b))
    return tuple(bounds)


def parse_hyper(text: str) -> Dict[str, float]:
    """Parse "p:1.5, c:0.3" into {"p": 1.5, "c": 0.3}"""
    hyper = {}
    for pair in text.split(","):
        if not pair.strip():
            continue
        key, sep, value = pair.partition(":")
        if not sep:
            raise ConfigError(f"family_hyper entries must be key:value, got {pair!r}")
        hyper[key.strip()] = _floats(value, f"family_hyper {key.strip()}")[0]
    return hyper


@dataclass
class StudyConfig:
    """Monte Carlo study design; defaults reproduce the reciprocal gamma study

    Attributes:
        family: Family id, e.g. "reciprocal_gamma" or "tweedie(1.5)"
        link: Link id
        predictor: Predictor expression text
        covariates: Covariate names
        parameters: Parameter names
        beta_true: True coefficients
        phi_true: True precision
        n: Sample size
        replications: Number of simulated samples
        seed: Seed for covariates and all replication streams
        covariate_spec: uniform(a, b) bounds per covariate
        covariate_matrix: Explicit fixed n x m covariates, overriding covariate_spec
        family_hyper: Extra family hyperparameters
        threads: Worker processes (1 runs in process)
        warm_start: Start each fit at beta_true
        max_failure_rate: Abort when more replications than this fail
    """
    family: str = "reciprocal_gamma"
    link: str = "sqrt"
    predictor: str = "b0 + b1*x1 + x2^b2"
    covariates: Tuple[str, ...] = ("x1", "x2")
    parameters: Tuple[str, ...] = ("b0", "b1", "b2")
    beta_true: Tuple[float, ...] = (0.5, 1.0, 2.0)
    phi_true: float = 4.0
    n: int = 20
    replications: int = 10000
    seed: int = 0
    covariate_spec: Tuple[Tuple[float, float], ...] = ((0.0, 1.0), (1.0, 2.0))
    covariate_matrix: Optional[np.ndarray] = None
    family_hyper: Dict[str, float] = field(default_factory=dict)
    threads: int = 1
    warm_start: bool = True
    max_failure_rate: float = 0.05

    def __post_init__(self):
        self.covariates = tuple(self.covariates)
        self.parameters = tuple(self.parameters)
        self.beta_true = tuple(float(b) for b in self.beta_true)
        self.covariate_spec = tuple(tuple(float(v) for v in pair) for pair in self.covariate_spec)
        if self.replications < 1:
            raise ConfigError(f"replications must be at least 1, got {self.replications}")
        if self.n <= len(self.parameters):
            raise ConfigError(f"n must exceed the number of parameters, got n={self.n}")
        if len(self.beta_true) != len(self.parameters):
            raise ConfigError(
                f"beta_true has {len(self.beta_true)} entries for {len(self.parameters)} parameters"
            )
        if self.phi_true <= 0:
            raise ConfigError(f"phi_true must be positive, got {self.phi_true}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.threads < 1:
            raise ConfigError(f"threads must be at least 1, got {self.threads}")
        if self.covariate_matrix is not None:
            self.covariate_matrix = np.asarray(self.covariate_matrix, dtype=float)
            if self.covariate_matrix.shape != (self.n, len(self.covariates)):
                raise ConfigError(
                    f"covariate_matrix must be {self.n} x {len(self.covariates)}, "
                    f"got {self.covariate_matrix.shape}"
                )
        elif len(self.covariate_spec) != len(self.covariates):
            raise ConfigError(
                f"covariate_spec has {len(self.covariate_spec)} entries for {len(self.covariates)} covariates"
            )

    @classmethod
    def from_mapping(cls, values: Mapping[str, Optional[str]]) -> "StudyConfig":
        """Build a config from flat string values, as read from a key=value file

        Vector values are comma-separated; covariate_spec entries are
        separated by ";" and family_hyper is "key:value" pairs.

        Raises:
            ConfigError: Unknown key or malformed value
        """
        known = {
            "family", "link", "predictor", "covariates", "parameters", "beta_true", "phi_true",
            "n", "replications", "seed", "covariate_spec", "family_hyper", "threads",
            "warm_start", "max_failure_rate",
        }
        values = {k.strip().lower(): v for k, v in values.items() if v is not None and v.strip() != ""}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"Unknown study config keys: {', '.join(unknown)}")

        kwargs = {}
        for key in ("family", "link", "predictor"):
            if key in values:
                kwargs[key] = values[key].strip()
        for key in ("covariates", "parameters"):
            if key in values:
                kwargs[key] = _names(values[key])
        if "beta_true" in values:
            kwargs["beta_true"] = _floats(values["beta_true"], "beta_true")
        for key in ("phi_true", "max_failure_rate"):
            if key in values:
                kwargs[key] = _floats(values[key], key)[0]
        for key in ("n", "replications", "seed", "threads"):
            if key in values:
                try:
                    kwargs[key] = int(values[key])
                except ValueError:
                    raise ConfigError(f"{key} must be an integer, got {values[key]!r}") from None
        if "covariate_spec" in values:
            kwargs["covariate_spec"] = parse_covariate_spec(values["covariate_spec"])
        if "warm_start" in values:
            kwargs["warm_start"] = values["warm_start"].strip().lower() in ("1", "true", "yes", "on")
        if "family_hyper" in values:
            kwargs["family_hyper"] = parse_hyper(values["family_hyper"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "link": self.link,
            "predictor": self.predictor,
            "covariates": list(self.covariates),
            "parameters": list(self.parameters),
            "beta_true": list(self.beta_true),
            "phi_true": self.phi_true,
            "n": self.n,
            "replications": self.replications,
            "seed": self.seed,
            "covariate_spec": [list(pair) for pair in self.covariate_spec],
            "covariate_matrix": None if self.covariate_matrix is None else self.covariate_matrix.tolist(),
            "family_hyper": dict(self.family_hyper),
            "warm_start": self.warm_start,
            "max_failure_rate": self.max_failure_rate,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StudyConfig":
        data = dict(data)
        data["covariate_spec"] = tuple(tuple(pair) for pair in data.get("covariate_spec", ()))
        return cls(**data)


@dataclass
class EstimandRow:
    """One line of the study table

    Attributes:
        estimand: Parameter name, "phi" or "sigma2"
        mean_estimated_gamma1: Skewness evaluated at the estimates, averaged over replications
        true_gamma1: Skewness evaluated at the true parameters
        sample_g3: Sample skewness of the estimates across replications
        mean_estimate: Mean of the estimates
        sd_estimate: Standard deviation of the estimates
        true_value: True parameter value
    """
    estimand: str
    mean_estimated_gamma1: Optional[float]
    true_gamma1: Optional[float]
    sample_g3: Optional[float]
    mean_estimate: Optional[float] = None
    sd_estimate: Optional[float] = None
    true_value: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "estimand": self.estimand,
            "mean_estimated_gamma1": self.mean_estimated_gamma1,
            "true_gamma1": self.true_gamma1,
            "sample_g3": self.sample_g3,
            "mean_estimate": self.mean_estimate,
            "sd_estimate": self.sd_estimate,
            "true_value": self.true_value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EstimandRow":
        return cls(**data)


def _csv_number(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.10g}"


@dataclass
class StudyReport:
    """Outcome of a Monte Carlo study

    Attributes:
        rows: One row per beta coordinate, then phi and sigma2
        replications: Replications requested
        converged: Replications that converged and entered the averages
        not_converged: Replications excluded because scoring did not converge
        failed: Replications excluded because of a sampling or fitting error
        config: The study configuration
    """
    rows: List[EstimandRow]
    replications: int
    converged: int
    not_converged: int
    failed: int
    config: StudyConfig

    @property
    def seed(self) -> int:
        return self.config.seed

    def row(self, estimand: str) -> EstimandRow:
        for row in self.rows:
            if row.estimand == estimand:
                return row
        raise KeyError(estimand)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "replications": self.replications,
            "converged": self.converged,
            "not_converged": self.not_converged,
            "failed": self.failed,
            "rows": [row.to_dict() for row in self.rows],
            "config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StudyReport":
        return cls(
            rows=[EstimandRow.from_dict(row) for row in data["rows"]],
            replications=data["replications"],
            converged=data["converged"],
            not_converged=data["not_converged"],
            failed=data["failed"],
            config=StudyConfig.from_dict(data["config"]),
        )

    def to_csv(self) -> str:
        """Table with columns estimand, mean_estimated_gamma1, true_gamma1, sample_g3"""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow([
                row.estimand,
                _csv_number(row.mean_estimated_gamma1),
                _csv_number(row.true_gamma1),
                _csv_number(row.sample_g3),
            ])
        return buffer.getvalue()
