import math

import numpy as np
import pytest
from scipy import signal

from resetfra.element import LoopConfig, make_element
from resetfra.errors import BadParams, NoSignChange, UnsupportedPlantOrder
from resetfra.lti import TransferFunction as TF
from resetfra.regions import (delta_prime, first_reset_instant, peak_time,
                              piecewise_reconstruct, region_indicator,
                              reset_limits, reset_response_tf, scan_delta_prime,
                              scan_region, transient_crossing_count)
from resetfra.sim import simulate, steady_state_window


def hz(f):
    return 2 * math.pi * f


def test_first_reset_instant_range(case2):
    for f in (0.3, 3.0, 30.0):
        t1 = first_reset_instant(case2, hz(f))
        assert 0 <= t1 < 1 / f


def test_first_reset_instant_zero_phase():
    # a static loop has angle S_bl = 0, so t1 = pi / w
    loop = LoopConfig(make_element('pci', {'omega_i': 1e-9}, 1.0), TF([1], [1e-6, 1]))
    w = 1.0
    assert first_reset_instant(loop, w) == pytest.approx(math.pi / w, rel=1e-3)


def test_first_reset_instant_matches_simulation(case1):
    f = 0.1
    tr = simulate(case1, f, periods=40)
    win = steady_state_window(tr, position='last')
    t0 = tr.t[win.start]
    t1 = first_reset_instant(case1, hz(f))
    inst = tr.reset_instants[tr.reset_instants >= t0] - t0
    assert np.min(np.abs(inst - t1)) <= 0.02 / f


def test_linear_crossings_evenly_spaced(case2):
    lin = case2.replace(gamma=1.0)
    f = 3.0
    tr = simulate(lin, f, periods=30)
    gaps = np.diff(tr.reset_instants[-10:])
    assert np.allclose(gaps, 0.5 / f, rtol=1e-6)
    t0 = tr.t[-1] - 5 / f
    phase = (tr.reset_instants[tr.reset_instants > t0][0] - first_reset_instant(lin, hz(f))) * f
    assert abs(phase - round(phase * 2) / 2) < 1e-6


def test_reset_limits_dispatch(case1, case2):
    assert reset_limits(case1) == (pytest.approx(1.0), None, 'first')
    lim = reset_limits(case2)
    assert lim.dispatch == 'second' and lim.k1 == 0.0
    assert lim.k2 == pytest.approx(22500, rel=1e-12)
    with pytest.raises(UnsupportedPlantOrder):
        reset_limits(LoopConfig(make_element('clegg'), TF([1], [1, 6, 12, 8])))


def test_linear_loop_has_no_limits(case2):
    # the dispatch does not depend on gamma; only the indicator jump scales with 1-gamma
    assert reset_limits(case2.replace(gamma=1.0)).dispatch == 'second'


def test_peak_time_matches_dense_argmax(case2):
    tp = peak_time(case2)
    X = reset_response_tf(case2).reduce()
    t = np.linspace(0, 0.2, 1_000_001)
    _, h = signal.impulse((X.num.coefficients, X.den.coefficients), T=t)
    assert tp == pytest.approx(t[np.argmax(h)], abs=2e-6)
    boundary = scan_region(case2, 0.1, 100, 400).boundary_hz
    assert 0 < tp < 0.5 / boundary


def test_peak_time_requires_second_order(case1):
    with pytest.raises(BadParams):
        peak_time(case1)


def test_indicator_examples(case1):
    assert region_indicator(case1, hz(0.05)) > 0
    assert region_indicator(case1, hz(1.0)) < 0
    w = np.logspace(-2, 3, 50)
    assert np.all(region_indicator(case1.replace(gamma=1.0), w) < 0)


def test_scan_boundaries(case1, case2, case3):
    b1 = scan_region(case1, 0.01, 10, 1000).boundary_hz
    assert b1 == pytest.approx(0.16, rel=0.10)
    b2 = scan_region(case2, 0.01, 100, 1000).boundary_hz
    b3 = scan_region(case3, 0.01, 100, 1000).boundary_hz
    assert b3 > b2


def test_scan_linear_has_no_boundary(case1):
    res = scan_region(case1.replace(gamma=1.0))
    assert res.boundary_hz is None
    with pytest.raises(NoSignChange):
        res.require_boundary()


def test_boundary_inside_grid_and_signs(case2):
    res = scan_region(case2, 0.01, 100, 500)
    b = res.boundary_hz
    assert res.freqs_hz[0] < b < res.freqs_hz[-1]
    assert np.all(res.indicator[res.freqs_hz < b] > 0)
    assert np.all(res.indicator[res.freqs_hz > b * 1.05] < 0)
    assert res.multiple_when == 'positive'


@pytest.mark.parametrize('node', ['disturbance', 'noise'])
def test_other_nodes_share_boundary(case2, node):
    ref = scan_region(case2, 0.01, 100, 500).boundary_hz
    res = scan_region(case2, 0.01, 100, 500, node=node)
    assert res.multiple_when == 'negative'
    assert res.boundary_hz == pytest.approx(ref, rel=1e-3)
    assert np.all(res.multiple[res.freqs_hz < ref * 0.95])


def test_unity_plant_exception():
    loop = LoopConfig(make_element('clegg', {}, 0.0), TF([1]), TF([10], [1, 10]))
    res = scan_region(loop, 0.01, 1000, 400)
    w = hz(res.freqs_hz)
    ang = np.angle(1 / (1 + loop.l_bl_at(w)))
    near = np.abs(ang - np.pi * np.round(ang / np.pi)) < 1e-3
    assert near.any() and np.array_equal(near, res.exceptions)
    assert not np.any(res.multiple[res.exceptions])


def test_scan_validation(case1):
    with pytest.raises(BadParams):
        scan_region(case1, 10, 1)
    with pytest.raises(BadParams):
        scan_region(case1, 0.1, 1, points=4)


def test_delta_prime_close_to_delta(case1):
    b = scan_region(case1, 0.01, 10, 1000).boundary_hz
    bp = scan_delta_prime(case1, 0.05, 1.0, points=30)
    assert abs(bp - b) <= 0.10 * b
    assert delta_prime(case1, hz(0.05)) > 0


def test_piecewise_linear_reduces_to_base(case2):
    lin = case2.replace(gamma=1.0)
    w = hz(10)
    pw = piecewise_reconstruct(lin, w, n_segments=4, samples_per_segment=64)
    gof = 1 / (1 + complex(lin.l_bl_at(w)))
    for seg in pw.segments:
        e_bl = abs(gof) * np.sin(w * seg.t + np.angle(gof))
        assert np.allclose(seg.e, e_bl, atol=1e-10)
    assert np.allclose(np.diff(pw.reset_instants), math.pi / w, rtol=1e-9)


def test_piecewise_first_segment_and_zeros(case2):
    w = hz(10)
    pw = piecewise_reconstruct(case2, w, n_segments=6, samples_per_segment=64)
    s = 1 / (1 + complex(case2.l_bl_at(w)))
    first = pw.segments[0]
    assert np.allclose(first.e, abs(s) * np.sin(w * first.t + np.angle(s)), atol=1e-10)
    for ti in pw.reset_instants:
        assert abs(pw.error_at(ti)[0]) < 1e-9
    assert pw.h_s.shape == pw.h_t.shape == pw.h_ps.shape


def test_piecewise_matches_simulation_instants(case2):
    w = hz(10)
    pw = piecewise_reconstruct(case2.replace(gamma=-0.2), w, n_segments=10)
    tr = simulate(case2.replace(gamma=-0.2), 10.0, duration=pw.reset_instants[-1] + 0.01)
    # the simulation starts at rest, so compare once the transient has decayed
    sim = tr.reset_instants[:10]
    assert np.allclose(sim[4:], pw.reset_instants[4:], atol=1e-3 / 10)


def test_transient_crossing_counts(pci_bad, case2):
    assert transient_crossing_count(pci_bad, hz(20)) == 4
    assert transient_crossing_count(case2, hz(50)) <= 2
