"""Shared fixtures and helpers for the fedsim test suite."""

import numpy as np
import pytest

from fedsim.engine import RunConfig, run_experiment
from fedsim.problems import ProblemSpec, generate_quadratic_problem


@pytest.fixture(scope="session")
def quad_small():
    """A small, well-conditioned quadratic federated problem."""
    return generate_quadratic_problem(d=10, mu=1.0, L=2.0, clients=5,
                                      samples_per_client=20, split="noniid",
                                      seed=3)


@pytest.fixture(scope="session")
def quad_spec_small():
    return ProblemSpec(family="quad", d=10, clients=5, samples=20,
                       split="noniid", seed=3, mu=1.0, L=2.0)


def run(problem_spec, **overrides):
    """Run a small experiment and assert it finished."""
    defaults = dict(algorithm="gd", rounds=20, global_lr=1.0, local_lr=0.5,
                    compressor="identity", oracle="full", problem=problem_spec,
                    seed=0, threads=1, eval_every=1)
    defaults.update(overrides)
    result = run_experiment(RunConfig(**defaults))
    assert result.status == "finished", result.error
    return result


def finite_difference_gradient(f, x, h=1e-6):
    """Central finite differences of a scalar function."""
    g = np.zeros_like(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g
