from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import json
import logging
from pathlib import Path
from typing import List, Optional

import numpy as np

from models.errors import ConvergenceError, DispersionError
from models.fit import FitOptions
from models.predictor import parse
from models.study import EstimandRow, StudyConfig, StudyReport
from managers.fit_manager import FitManager
from stat_utils.catalog import make_family, make_link
from stat_utils.sampling import covariate_rng, replication_rng, sample_response, sample_skewness
from stat_utils.skewness import skewness_report

logger = logging.getLogger(__name__)


@dataclass
class ReplicationOutcome:
    """Estimates and estimated skewness from one simulated sample"""
    index: int
    converged: bool
    beta_hat: Optional[np.ndarray] = None
    phi_hat: Optional[float] = None
    gamma1_beta: Optional[np.ndarray] = None
    gamma1_phi: Optional[float] = None
    gamma1_sigma2: Optional[float] = None
    error: Optional[str] = None


class _ReplicationContext:
    """Model objects shared by all replications of a study in one process"""

    def __init__(self, config: StudyConfig, X: np.ndarray):
        self.config = config
        self.X = X
        self.family = make_family(config.family, config.family_hyper)
        self.link = make_link(config.link)
        self.predictor = parse(config.predictor, config.covariates, config.parameters)
        self.beta_true = np.asarray(config.beta_true, dtype=float)
        self.mu_true = np.asarray(self.link.hinv(self.predictor.eval_eta(X, self.beta_true)), dtype=float)
        self.phi_inference = self.family.phi_fixed is None and self.family.a_available
        self.options = FitOptions(beta_init=self.beta_true if config.warm_start else None)

    def run(self, index: int) -> ReplicationOutcome:
        rng = replication_rng(self.config.seed, index)
        try:
            y = sample_response(self.family, self.mu_true, self.config.phi_true, rng)
            fit = FitManager(self.family, self.link, self.predictor, self.options).fit(self.X, y)
            if not fit.converged:
                return ReplicationOutcome(index=index, converged=False)
            report = skewness_report(
                self.family, self.link, self.predictor, self.X, fit.beta_hat, fit.phi_hat,
                phi_inference=self.phi_inference,
            )
        except DispersionError as e:
            return ReplicationOutcome(index=index, converged=False, error=str(e))
        return ReplicationOutcome(
            index=index,
            converged=True,
            beta_hat=fit.beta_hat,
            phi_hat=fit.phi_hat,
            gamma1_beta=report.gamma1_beta,
            gamma1_phi=report.gamma1_phi,
            gamma1_sigma2=report.gamma1_sigma2,
        )


_worker_context: Optional[_ReplicationContext] = None


def _init_worker(config: StudyConfig, X: np.ndarray):
    global _worker_context
    _worker_context = _ReplicationContext(config, X)


def _run_in_worker(index: int) -> ReplicationOutcome:
    return _worker_context.run(index)


def _mean(values: List[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


def _g3(values: List[float]) -> Optional[float]:
    try:
        return sample_skewness(values)
    except DispersionError:
        return None


class StudyManager:
    def __init__(self, config: StudyConfig):
        """Initialize the StudyManager

        Args:
            config: Study design; validated on construction
        """
        self.config = config
        self.X = self.draw_covariates()
        self.context = _ReplicationContext(config, self.X)

    def draw_covariates(self) -> np.ndarray:
        """Fixed covariates shared by every replication"""
        if self.config.covariate_matrix is not None:
            return np.array(self.config.covariate_matrix, dtype=float)
        rng = covariate_rng(self.config.seed)
        columns = [rng.uniform(a, b, size=self.config.n) for a, b in self.config.covariate_spec]
        return np.column_stack(columns) if columns else np.zeros((self.config.n, 0))

    def run_replications(self) -> List[ReplicationOutcome]:
        """All replications in index order, independent of the worker count"""
        indices = range(self.config.replications)
        workers = min(self.config.threads, self.config.replications)
        if workers <= 1:
            return [self.context.run(i) for i in indices]
        chunk = max(1, self.config.replications // (workers * 8))
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(self.config, self.X)
        ) as executor:
            return list(executor.map(_run_in_worker, indices, chunksize=chunk))

    def run_study(self) -> StudyReport:
        """Simulate, refit and compare estimated, true and sample skewness

        Returns:
            StudyReport with one row per beta coordinate, then phi and sigma2

        Raises:
            ConvergenceError: More than max_failure_rate of the replications failed
        """
        config = self.config
        logger.info(
            f"Starting study: {config.family}/{config.link} '{config.predictor}', "
            f"n={config.n}, replications={config.replications}, seed={config.seed}, threads={config.threads}"
        )
        outcomes = self.run_replications()
        accepted = [o for o in outcomes if o.converged]
        not_converged = [o for o in outcomes if not o.converged and o.error is None]
        failed = [o for o in outcomes if o.error is not None]
        for outcome in failed:
            logger.warning(f"Replication {outcome.index} excluded: {outcome.error}")
        if not_converged:
            logger.warning(f"{len(not_converged)} replications did not converge and were excluded")

        excluded = len(not_converged) + len(failed)
        if excluded > config.max_failure_rate * config.replications:
            raise ConvergenceError(
                f"{excluded} of {config.replications} replications failed; study aborted",
                diagnostics={"not_converged": len(not_converged), "failed": len(failed)},
            )

        true_report = skewness_report(
            self.context.family, self.context.link, self.context.predictor, self.X,
            self.context.beta_true, config.phi_true, evaluated_at="truth",
            phi_inference=self.context.phi_inference,
        )

        rows = []
        for a, name in enumerate(config.parameters):
            estimates = [float(o.beta_hat[a]) for o in accepted]
            rows.append(EstimandRow(
                estimand=name,
                mean_estimated_gamma1=_mean([float(o.gamma1_beta[a]) for o in accepted]),
                true_gamma1=float(true_report.gamma1_beta[a]),
                sample_g3=_g3(estimates),
                mean_estimate=_mean(estimates),
                sd_estimate=float(np.std(estimates, ddof=1)) if len(estimates) > 1 else None,
                true_value=config.beta_true[a],
            ))
        for name, attr, true_gamma1, true_value in (
            ("phi", "gamma1_phi", true_report.gamma1_phi, config.phi_true),
            ("sigma2", "gamma1_sigma2", true_report.gamma1_sigma2, 1.0 / config.phi_true),
        ):
            if not self.context.phi_inference:
                rows.append(EstimandRow(estimand=name, mean_estimated_gamma1=None, true_gamma1=None, sample_g3=None))
                continue
            estimates = [o.phi_hat if name == "phi" else 1.0 / o.phi_hat for o in accepted]
            rows.append(EstimandRow(
                estimand=name,
                mean_estimated_gamma1=_mean([getattr(o, attr) for o in accepted]),
                true_gamma1=true_gamma1,
                sample_g3=_g3(estimates),
                mean_estimate=_mean(estimates),
                sd_estimate=float(np.std(estimates, ddof=1)) if len(estimates) > 1 else None,
                true_value=true_value,
            ))

        report = StudyReport(
            rows=rows,
            replications=config.replications,
            converged=len(accepted),
            not_converged=len(not_converged),
            failed=len(failed),
            config=config,
        )
        logger.info(f"Study finished: {len(accepted)} of {config.replications} replications used")
        return report

    @staticmethod
    def save_report(report: StudyReport, csv_path: Optional[str] = None, json_path: Optional[str] = None):
        """Write the study table as CSV and the full report as JSON"""
        if csv_path:
            path = Path(csv_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="", encoding="utf-8") as f:
                f.write(report.to_csv())
            logger.info(f"Saved study table to {path}")
        if json_path:
            path = Path(json_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8") as f:
                json.dump(report.to_dict(), f, indent=2)
                f.write("\n")
            logger.info(f"Saved study report to {path}")


def run_study(config: StudyConfig) -> StudyReport:
    """Run a study with a fresh StudyManager"""
    return StudyManager(config).run_study()
