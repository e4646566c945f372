from __future__ import annotations

import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from robust_consensus.model import Gaussian, ModelParams, Uniform, UncertaintySpec

settings.register_profile("default", max_examples=50, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def test1_unc() -> UncertaintySpec:
    return UncertaintySpec([Gaussian(0.0, 5.0), Uniform(-5.0, 5.0)])


@pytest.fixture
def test1_params() -> ModelParams:
    return ModelParams(n_agents=100, dim=1, p_bar=1.0, nu=0.01, r=0.0, z=2)


@pytest.fixture
def test1_v0() -> np.ndarray:
    return np.random.default_rng(0).uniform(10.0, 20.0, size=(100, 1))


def pytest_terminal_summary(terminalreporter):
    """Print the one-line verdict of every acceptance criterion that ran."""
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    report = getattr(module, "REPORT", None)
    if not report:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(report):
        terminalreporter.write_line(report[key])
