import numpy as np
import pytest

from models.predictor import parse
from stat_utils.catalog import make_family, make_link
from stat_utils.sampling import sample_response

BETA_TRUE = np.array([0.5, 1.0, 2.0])
PHI_TRUE = 4.0


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def reciprocal_gamma_model():
    """Reciprocal gamma model with square root link and a power term in x2"""
    family = make_family("reciprocal_gamma")
    link = make_link("sqrt")
    predictor = parse("b0 + b1*x1 + x2^b2", ["x1", "x2"], ["b0", "b1", "b2"])
    return family, link, predictor


def uniform_design(rng, n):
    return np.column_stack([rng.uniform(0.0, 1.0, n), rng.uniform(1.0, 2.0, n)])


def simulate_reciprocal_gamma(rng, n, model):
    family, link, predictor = model
    X = uniform_design(rng, n)
    mu = link.hinv(predictor.eval_eta(X, BETA_TRUE))
    y = sample_response(family, mu, PHI_TRUE, rng)
    return X, y
