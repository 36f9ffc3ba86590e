import numpy as np
import pytest

from robust_mca.families import Affine, Clamp, Constant, PowerClamp, Table
from robust_mca.model import CoefficientBand

_CRITERIA = []


def make_catalogue():
    """Bands used across the suite, keyed by a short name."""
    return {
        "g_expectation": CoefficientBand(a_lower=Constant(1.0), a_upper=Constant(4.0), bound_C=4.0),
        "drift_band": CoefficientBand(
            a_lower=Constant(0.5), a_upper=Constant(2.0),
            b_lower=Constant(-0.5), b_upper=Constant(0.5), bound_C=2.0),
        "affine_drift": CoefficientBand(
            a_lower=Clamp(1.0, 2.0), a_upper=Table((0.0, 2.0, 5.0), (1.5, 2.0, 3.0)),
            b_lower=Affine(-0.5, 0.1), b_upper=Affine(0.2, 0.1), bound_C=3.0),
        "cev_cutoff": CoefficientBand(a_lower=Clamp(1.0, 30.0), a_upper=PowerClamp(1.0, 30.0, 2.0), bound_C=900.0),
        "degenerate": CoefficientBand(a_lower=Constant(1.0), a_upper=Constant(1.0), bound_C=1.0),
    }


@pytest.fixture
def catalogue():
    return make_catalogue()


@pytest.fixture
def record_criterion():
    def record(label, ok, detail=""):
        _CRITERIA.append((label, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
