import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_mca.errors import BandError, ConfigError, ContractViolation
from robust_mca.families import Affine, Clamp, Constant, CutoffCall, FromCallable, PowerClamp, Table, from_dict
from robust_mca.model import (
    CoefficientBand,
    ControlGrid,
    LimitCoefficients,
    control_points,
    drift,
    lipschitz_estimate,
    sigma,
    variance,
)

lams = st.floats(0.0, 1.0)
xs = st.floats(-50.0, 50.0)


def test_sigma_endpoints(catalogue):
    for band in catalogue.values():
        x = np.linspace(-3, 7, 11)
        np.testing.assert_array_equal(sigma(band, 0.0, x), np.sqrt(band.a_lower(x)))
        np.testing.assert_array_equal(sigma(band, 1.0, x), np.sqrt(band.a_upper(x)))


def test_sigma_hand_value(catalogue):
    # a_lower(2) = 2, a_upper(2) = 4, halfway gives 3
    assert sigma(catalogue["cev_cutoff"], 0.5, 2.0) == pytest.approx(math.sqrt(3.0), abs=1e-7)
    assert sigma(catalogue["cev_cutoff"], 0.5, 2.0) == pytest.approx(1.7320508, abs=1e-7)


def test_drift_endpoints_and_hand_value():
    band = CoefficientBand(a_lower=Constant(1), a_upper=Constant(1), b_lower=Constant(-1), b_upper=Constant(3),
                           bound_C=3)
    assert drift(band, 0.0, 1.2) == -1
    assert drift(band, 1.0, 1.2) == 3
    assert drift(band, 0.25, 17.0) == 0.0


@settings(max_examples=200, deadline=None)
@given(l1=lams, l2=lams, x=xs)
def test_sigma_and_drift_monotone_in_lambda(l1, l2, x):
    band = CoefficientBand(a_lower=Clamp(1, 30), a_upper=PowerClamp(1, 30, 2), b_lower=Affine(-1, 0.01),
                           b_upper=Affine(1, 0.01), bound_C=900)
    lo, hi = min(l1, l2), max(l1, l2)
    assert sigma(band, lo, x) <= sigma(band, hi, x)
    assert drift(band, lo, x) <= drift(band, hi, x)


@settings(max_examples=200, deadline=None)
@given(lam=lams, x=xs)
def test_sigma_squared_in_band(lam, x):
    band = CoefficientBand(a_lower=Clamp(1, 30), a_upper=PowerClamp(1, 30, 2), bound_C=900)
    s2 = sigma(band, lam, x) ** 2
    assert band.a_lower(x) * (1 - 1e-14) <= s2 <= band.a_upper(x) * (1 + 1e-14)


@settings(max_examples=100, deadline=None)
@given(x=xs, widen_lo=st.floats(0, 0.4), widen_hi=st.floats(0, 3))
def test_widening_band_enlarges_reachable_set(x, widen_lo, widen_hi):
    narrow = CoefficientBand(a_lower=Constant(1.0), a_upper=Clamp(1.5, 4), bound_C=10)
    wide = CoefficientBand(a_lower=Constant(1.0 - widen_lo),
                           a_upper=FromCallable(lambda y: narrow.a_upper(y) + widen_hi), bound_C=10)
    lam = np.linspace(0, 1, 101)
    n = variance(narrow, lam, x)
    w_lo, w_hi = variance(wide, 0.0, x), variance(wide, 1.0, x)
    assert np.all((n >= w_lo - 1e-12) & (n <= w_hi + 1e-12))


def test_band_check_rejects_violations():
    bad = CoefficientBand(a_lower=Constant(0.1), a_upper=Constant(2), bound_C=2)
    with pytest.raises(BandError, match="a_lower >= 1/C"):
        bad.check([0.0, 1.0])
    crossed = CoefficientBand(a_lower=Constant(2), a_upper=Constant(1), bound_C=3)
    with pytest.raises(BandError, match="a_lower <= a_upper"):
        crossed.check(0.0)
    CoefficientBand(a_lower=Clamp(1, 30), a_upper=PowerClamp(1, 30, 2), bound_C=900).check(np.linspace(-5, 100, 50))


def test_table_breakpoints_must_increase():
    with pytest.raises(ValueError):
        Table((0.0, 0.0, 1.0), (1.0, 2.0, 3.0))
    with pytest.raises(ConfigError):
        from_dict({"family": "table", "x": [1, 0], "y": [1, 2]}, "band.a_lower")


def test_family_round_trip():
    for fam in (Constant(2.0), Affine(1.0, -0.5), Clamp(1, 30), PowerClamp(1, 30, 2), Table((0, 1), (2, 3)),
                CutoffCall(0.5, 20)):
        assert from_dict(fam.to_dict()) == fam


def test_control_grid_contains_corners():
    for dim in (1, 2, 4):
        pts = ControlGrid(3, dim).points()
        assert pts.shape == (3 ** dim, dim)
        assert np.any(np.all(pts == 0, axis=1)) and np.any(np.all(pts == 1, axis=1))
        assert set(np.unique(pts)) == {0.0, 0.5, 1.0}
    with pytest.raises(ContractViolation):
        ControlGrid(1, 1)
    with pytest.raises(ContractViolation):
        ControlGrid(3, 3)
    with pytest.raises(ContractViolation):
        control_points([[1.2]], 1)


def test_limit_coefficients_shape():
    lim = LimitCoefficients(b=0.3, sigma=2.0)
    a = lim.diffusion_matrix
    np.testing.assert_array_equal(lim.drift_vector, [0.0, 0.3])
    assert a[0, 0] == 1.0 and np.allclose(a, a.T)
    assert np.min(np.linalg.eigvalsh(a)) >= -1e-12


def test_lipschitz_constant_bands_is_zero(catalogue):
    assert lipschitz_estimate(catalogue["g_expectation"], (-5, 5), 51) == 0.0
    assert lipschitz_estimate(catalogue["drift_band"], (-5, 5), 51) == 0.0


def test_lipschitz_sqrt_clamp():
    band = CoefficientBand(a_lower=Clamp(1, 30), a_upper=Clamp(1, 30), bound_C=30)
    est = lipschitz_estimate(band, (1.0, 30.0), 2001)
    # d/dx sqrt(x) at x = 1 is 0.5; secants from the right stay below
    assert est <= 0.5
    assert est == pytest.approx(0.5, rel=0.01)


def test_lipschitz_steep_table_is_reported():
    band = CoefficientBand(a_lower=Constant(1), a_upper=Constant(1),
                           b_lower=Table((0.0, 1.0, 1.001, 2.0), (0.0, 0.0, 1.0, 1.0)),
                           b_upper=Table((0.0, 1.0, 1.001, 2.0), (0.0, 0.0, 1.0, 1.0)), bound_C=2)
    est = lipschitz_estimate(band, (0.0, 2.0), 4001)
    assert math.isfinite(est) and est > 100


def test_lipschitz_non_finite_names_probe():
    band = CoefficientBand(a_lower=Constant(1), a_upper=FromCallable(lambda x: np.where(x > 0.5, np.nan, 1.0)),
                           bound_C=2)
    with pytest.raises(BandError, match="x="):
        lipschitz_estimate(band, (0.0, 1.0), 11)
