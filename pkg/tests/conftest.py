"""Shared fixtures: small problems that are cheap to evaluate."""

import numpy as np
import pytest

from slowmo_sim import NoiseModel, QuadraticProblem, build_logistic, build_quadratic


@pytest.fixture
def identity_quadratic():
    """m=2, d=4, A=I, centers at +/- e1: every constant is known in closed form."""
    e1 = np.array([1.0, 0.0, 0.0, 0.0])
    noise = NoiseModel("additive-gaussian", sigma2=1.0)
    return QuadraticProblem(np.eye(4), [e1, -e1], noise)


@pytest.fixture
def noiseless_quadratic():
    """Same geometry but sigma^2 = 0, for bitwise-deterministic trajectories."""
    e1 = np.array([1.0, 0.0, 0.0, 0.0])
    noise = NoiseModel("additive-gaussian", sigma2=0.0)
    return QuadraticProblem(np.eye(4), [e1, -e1], noise)


@pytest.fixture
def random_quadratic():
    return build_quadratic(
        m=3, dimension=5, noise=NoiseModel("additive-gaussian", sigma2=0.5),
        seed=7, l_min=0.5, l_max=2.0, heterogeneity=1.0,
    )


@pytest.fixture
def small_logistic():
    return build_logistic(
        m=2, dimension=3, samples_per_worker=12,
        noise=NoiseModel("minibatch", batch_size=4), seed=3, heterogeneity=0.4,
    )
