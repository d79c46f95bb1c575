
import numpy as np
import pytest

from twowayrelay.channel import CapacitySet, RelayTopology
from twowayrelay.regions import boundary_on_ray, region_for
from twowayrelay.sumrate import (
    DEFAULT_MU_GRID,
    GainCurve,
    averaged_gain_curve,
    default_mu_grid,
    fading_gain_samples,
    gain_curve,
    max_sum_rate,
    max_sum_rate_mu,
    nc_gain,
)

from conftest import random_caps

EXAMPLE = CapacitySet(4, 2, 3, 6)
SYM = CapacitySet(1, 1, 1, 1)


def test_default_grid_is_log_symmetric_about_one():
    assert len(DEFAULT_MU_GRID) == 61
    assert DEFAULT_MU_GRID[0] == pytest.approx(0.05) and DEFAULT_MU_GRID[-1] == pytest.approx(20)
    assert DEFAULT_MU_GRID[30] == pytest.approx(1.0)


def test_max_sum_rate_examples():
    assert max_sum_rate(SYM, "tdmh") == pytest.approx(0.5)
    assert max_sum_rate(SYM, "mlnc") == pytest.approx(2 / 3)
    assert max_sum_rate(SYM, "plnc") == pytest.approx(2 / 3)
    assert max_sum_rate(EXAMPLE, "tdmh") == pytest.approx(2)
    assert max_sum_rate(EXAMPLE, "mlnc") == pytest.approx(24 / 13)
    assert max_sum_rate(EXAMPLE, "plnc") == pytest.approx(16 / 7)


def test_max_sum_rate_equals_best_vertex():
    for caps in random_caps(np.random.default_rng(4), 200):
        for proto in ("tdmh", "mlnc", "plnc", "hull"):
            assert max_sum_rate(caps, proto) == pytest.approx(region_for(caps, proto).max_sum(), rel=1e-12)


def test_max_sum_rate_mu_examples():
    assert max_sum_rate_mu(EXAMPLE, "tdmh", 1.0) == pytest.approx(8 / 5)
    assert max_sum_rate_mu(EXAMPLE, "mlnc", 1.0) == pytest.approx(24 / 13)
    assert max_sum_rate_mu(EXAMPLE, "plnc", 1.0) == pytest.approx(24 / 13)
    assert max_sum_rate_mu(EXAMPLE, "plnc", 3.0) == pytest.approx(16 / 7)
    with pytest.raises(ValueError):
        max_sum_rate_mu(EXAMPLE, "tdmh", 0.0)


def test_max_sum_rate_mu_matches_ray_intersection():
    rng = np.random.default_rng(8)
    for caps in random_caps(rng, 200):
        for mu in np.exp(rng.uniform(-3, 3, 3)):
            for proto in ("tdmh", "mlnc", "plnc"):
                ray = boundary_on_ray(region_for(caps, proto), mu)
                assert max_sum_rate_mu(caps, proto, mu) == pytest.approx((1 + mu) * ray.r_ab, rel=1e-9)


def test_nc_gain_examples():
    assert nc_gain(3.0, 3.0) == 0.0
    assert nc_gain(2, 1) == pytest.approx(3.0103, abs=1e-4)
    rho = nc_gain(max_sum_rate_mu(SYM, "mlnc", 1), max_sum_rate_mu(SYM, "tdmh", 1))
    assert rho == pytest.approx(1.2494, abs=1e-4)
    with pytest.raises(ValueError):
        nc_gain(0.0, 1.0)


def test_gain_curve_symmetric_caps():
    curve = gain_curve(SYM)
    assert np.allclose(curve.rho_mt, curve.rho_pt)
    assert curve.argmax_mu() == pytest.approx(1.0)


def test_gain_curve_mlnc_loses_for_large_mu():
    curve = gain_curve(EXAMPLE)
    assert curve.rho_mt[-1] <= 0
    assert curve.argmax_mu("rho_pt") == pytest.approx(3.0, rel=0.1)


def test_gain_curve_invariants_on_random_caps():
    for caps in random_caps(np.random.default_rng(9), 100):
        curve = gain_curve(caps)
        assert np.all(curve.rho_pt > 0)
        assert np.all(curve.rho_pt >= curve.rho_mt - 1e-12)
        assert np.all(curve.rho_omt >= np.maximum(0, curve.rho_mt) - 1e-12)
        # unimodal with its peak at the grid point nearest one
        peak = int(np.argmax(curve.rho_mt))
        assert curve.mu_grid[peak] == pytest.approx(1.0)
        assert np.all(np.diff(curve.rho_mt[: peak + 1]) >= -1e-12)
        assert np.all(np.diff(curve.rho_mt[peak:]) <= 1e-12)
        # the PLNC peak brackets the broadcast ratio (the curve is not log-symmetric)
        ratio = caps.c_da / caps.c_db
        top = int(np.argmax(curve.rho_pt))
        lo, hi = curve.mu_grid[max(top - 1, 0)], curve.mu_grid[min(top + 1, 60)]
        if 0.05 <= ratio <= 20:
            assert lo <= ratio <= hi


def test_gain_curve_validates_grid():
    with pytest.raises(ValueError):
        gain_curve(SYM, [1.0, 0.5])
    with pytest.raises(ValueError):
        GainCurve(np.ones(3), np.ones(2), np.ones(3), np.ones(3))
    assert len(default_mu_grid(5, 0.1, 10)) == 5


def test_fading_average_peaks_near_one():
    topo = RelayTopology.standard_layout(1, midpoint_snr_db=10.0)
    curve = averaged_gain_curve(topo, 200, seed=1)
    assert curve.argmax_mu() == pytest.approx(1.0)
    samples = fading_gain_samples(topo, 50, seed=1)
    assert samples.rho_mt.shape == (50, 61) and len(samples.caps) == 50
    again = fading_gain_samples(topo, 50, seed=1)
    assert np.array_equal(samples.rho_pt, again.rho_pt)
