import math

import numpy as np
import pytest
from scipy import stats

from twowayrelay.channel import (
    CapacitySet,
    FadingDraw,
    RelayTopology,
    capacities_for_relay,
    capacity,
    draw_fading,
    draw_fading_batch,
    gain_variance,
    parse_topology_file,
)


def unit_topology(num_relays=1):
    # relays one metre from both sources
    relays = [(0.0, 0.0)] * num_relays
    return RelayTopology((-1.0, 0.0), (1.0, 0.0), relays, path_loss_exponent=3.5)


def test_gain_variance_examples():
    assert gain_variance(1.0, 3.5) == 1.0
    assert gain_variance(2.0, 3.5) == pytest.approx(0.08839, abs=1e-5)
    assert gain_variance(25.0, 3.5) == 25.0**-3.5


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_gain_variance_rejects_nonpositive_distance(d):
    with pytest.raises(ValueError):
        gain_variance(d, 3.5)


def test_topology_invariants():
    with pytest.raises(ValueError):
        RelayTopology((0, 0), (1, 0), [])
    with pytest.raises(ValueError):
        RelayTopology((0, 0), (0, 0), [(1, 1)])
    with pytest.raises(ValueError):
        RelayTopology((0, 0), (1, 0), [(1, 1)], path_loss_exponent=0)


def test_standard_layout_geometry():
    topo = RelayTopology.standard_layout(1, midpoint_snr_db=10.0)
    assert topo.relay_positions == ((0.0, 0.0),)
    d_a, d_b = topo.distances()
    assert d_a[0] == pytest.approx(25.0) and d_b[0] == pytest.approx(25.0)
    # mean SNR of the midpoint link equals the requested value
    var_a, _ = topo.link_variances()
    assert 10 * math.log10(topo.snr_linear * var_a[0]) == pytest.approx(10.0)
    spread = RelayTopology.standard_layout(5, seed=3)
    ys = [p[1] for p in spread.relay_positions]
    assert all(-5.0 <= y <= 5.0 for y in ys)
    assert all(p[0] == 0.0 for p in spread.relay_positions)


def test_draw_fading_is_deterministic():
    topo = unit_topology(3)
    a, b = draw_fading(topo, 42), draw_fading(topo, 42)
    assert np.array_equal(a.h_da, b.h_da) and np.array_equal(a.h_db, b.h_db)
    assert a.h_da.shape == (3,)


def test_fading_power_is_exponential_with_path_loss_mean():
    topo = unit_topology()
    batch = draw_fading_batch(topo, 100_000, np.random.default_rng(1))
    g = batch.g_da[:, 0]
    assert g.mean() == pytest.approx(1.0, abs=0.02)
    assert np.mean(g < 0.1) == pytest.approx(1 - math.exp(-0.1), abs=0.005)
    assert stats.kstest(g, "expon").pvalue > 0.01
    far = RelayTopology((-2.0, 0.0), (2.0, 0.0), [(0.0, 0.0)])
    g_far = draw_fading_batch(far, 100_000, np.random.default_rng(2)).g_db[:, 0]
    assert stats.kstest(g_far, "expon", args=(0, 2.0**-3.5)).pvalue > 0.01


def test_capacity_examples_and_monotonicity():
    assert capacity(1.0, 1.0) == 1.0
    assert capacity(0.0, 123.0) == 0.0
    assert capacity(3.0, 1.0) == pytest.approx(2.0)
    snr = np.linspace(0, 10, 11)
    assert np.all(np.diff(capacity(snr, 2.0)) > 0)
    assert np.all(np.diff(capacity(2.0, snr)) > 0)


def test_capacities_for_relay_examples():
    ones = FadingDraw.from_gains([1.0], [1.0])
    assert capacities_for_relay(ones, 0, 1.0) == CapacitySet(1, 1, 1, 1)
    caps = capacities_for_relay(FadingDraw.from_gains([1.0], [3.0]), 0, 1.0)
    assert caps.as_tuple() == pytest.approx((1, 2, 2, 1))
    with pytest.raises(IndexError):
        capacities_for_relay(ones, 1, 1.0)


def test_reciprocity_and_power_asymmetry():
    draw = draw_fading(unit_topology(2), 5)
    for i in range(2):
        caps = capacities_for_relay(draw, i, 100.0)
        assert caps.c_ad == caps.c_da and caps.c_bd == caps.c_db
    asym = capacities_for_relay(draw, 0, 100.0, snr_relay=10.0)
    assert asym.c_da < asym.c_ad


def test_capacity_set_validation():
    with pytest.raises(ValueError):
        CapacitySet(-1, 1, 1, 1)
    with pytest.raises(ValueError):
        CapacitySet(1, math.inf, 1, 1)
    assert CapacitySet(1, 2, 3, 4).c_min == 2


def test_parse_topology_file(tmp_path):
    path = tmp_path / "topo.cfg"
    path.write_text(
        "# two relays\npos_a = -25, 0\npos_b = 25,0\nrelays = 0,-5; 0,5\n"
        "path_loss_exponent = 3.5\ntx_power_dbm = 18\nmidpoint_snr_db = 10\n"
    )
    topo = parse_topology_file(path)
    assert topo.num_relays == 2
    assert topo.pos_b == (25.0, 0.0)
    ref = RelayTopology.standard_layout(1, midpoint_snr_db=10.0)
    assert topo.noise_power_dbm == pytest.approx(ref.noise_power_dbm)
    bad = tmp_path / "bad.cfg"
    bad.write_text("pos_a = 0,0\n")
    with pytest.raises(ValueError, match="missing"):
        parse_topology_file(bad)
