import math

import numpy as np
import pytest

from resetfra.element import LoopConfig, make_element
from resetfra.errors import Aliased, BadParams, Divergence, NoSteadyState, NotSettled
from resetfra.lti import TransferFunction as TF
from resetfra.report import read_csv
from resetfra.sim import (closed_loop_flow, harmonic_extract, linear_steady_state,
                          reset_statistics, simulate, steady_state_window,
                          step_metrics, write_trace_csv)


def test_linear_loop_matches_analytic(case2):
    lin = case2.replace(gamma=1.0)
    f = 10.0
    tr = simulate(lin, f, periods=20)
    w = 2 * math.pi * f
    s = 1 / (1 + complex(lin.l_bl_at(w)))
    tail = tr.t > 10 / f
    e_ref = abs(s) * np.sin(w * tr.t[tail] + np.angle(s))
    assert np.sqrt(np.mean((tr.e[tail] - e_ref) ** 2)) <= 1e-4


def test_linear_state_matches_steady_state(case2):
    lin = case2.replace(gamma=1.0)
    f = 10.0
    w = 2 * math.pi * f
    z0 = linear_steady_state(lin, w)
    tr = simulate(lin, f, periods=3, x0=z0)
    assert np.allclose(tr.x[-1], linear_steady_state(lin, w, tr.t[-1]), atol=1e-8)


def test_event_times_match_analytic_zero_crossings(case2):
    lin = case2.replace(gamma=1.0)
    f = 10.0
    w = 2 * math.pi * f
    tr = simulate(lin, f, periods=4, x0=linear_steady_state(lin, w))
    phase = np.angle(1 / (1 + complex(lin.l_bl_at(w))))
    k = np.round((w * tr.reset_instants + phase) / math.pi)
    exact = (k * math.pi - phase) / w
    assert np.max(np.abs(tr.reset_instants - exact)) <= 1e-9 / f


def test_two_resets_per_period_case2(case2):
    tr = simulate(case2, 10.0, periods=40)
    stats = reset_statistics(tr, steady_state_window(tr, position='last'))
    assert stats.resets_per_period == 2
    assert stats.regularity <= 0.01


def test_multiple_resets_case1(case1):
    tr = simulate(case1, 0.05, periods=25)
    stats = reset_statistics(tr, steady_state_window(tr, position='last'))
    assert stats.resets_per_period > 2


def test_linear_loop_has_no_higher_harmonics(case2):
    tr = simulate(case2.replace(gamma=1.0), 10.0, periods=20)
    win = steady_state_window(tr, position='last')
    e1 = abs(harmonic_extract(tr, win, 1))
    for n in (2, 3, 5):
        assert abs(harmonic_extract(tr, win, n)) <= 1e-3 * e1


def test_harmonic_extract_pure_sine(case2):
    tr = simulate(case2.replace(gamma=1.0), 10.0, periods=12)
    w = tr.omega
    tr.e[:] = 0.7 * np.sin(3 * w * tr.t + 0.4)
    win = steady_state_window(tr, position='last')
    h3 = harmonic_extract(tr, win, 3)
    assert abs(h3) == pytest.approx(0.7, abs=1e-9)
    assert np.angle(h3) == pytest.approx(0.4, abs=1e-9)
    assert abs(harmonic_extract(tr, win, 1)) < 1e-9
    with pytest.raises(Aliased):
        harmonic_extract(tr, win, tr.samples_per_period // 2)


def test_window_errors(case2):
    tr = simulate(case2, 10.0, periods=4)
    with pytest.raises(NoSteadyState):
        steady_state_window(tr)
    with pytest.raises(BadParams):
        steady_state_window(simulate(case2, 10.0, periods=10), position='middle')


def test_simulation_is_deterministic(case3):
    a = simulate(case3, 7.0, periods=10)
    b = simulate(case3, 7.0, periods=10)
    assert np.array_equal(a.e, b.e)
    assert np.array_equal(a.reset_instants, b.reset_instants)


def test_trace_csv_round_trip(case2, tmp_path):
    tr = simulate(case2, 10.0, periods=3)
    path = tmp_path / 'trace.csv'
    write_trace_csv(tr, path, header_comment='case2 10 Hz')
    assert path.read_text().startswith('# case2 10 Hz\n')
    header, rows = read_csv(path)
    assert header == ['t', 'r', 'e', 'u', 'y', 'reset_flag']
    data = np.array([[float(v) for v in row] for row in rows])
    assert np.array_equal(data[:, 2], tr.e)
    assert np.array_equal(data[:, 4], tr.y)
    assert int(data[:, 5].sum()) == len(tr.reset_instants)


def test_dt_too_large(case2):
    with pytest.raises(BadParams):
        simulate(case2, 10.0, dt=1 / 10 / 100)
    with pytest.raises(BadParams):
        simulate(case2, 0.0)


def test_dt_snapped_to_period(case2):
    tr = simulate(case2, 7.0, dt=1e-4, periods=2)
    assert tr.samples_per_period * tr.dt == pytest.approx(1 / 7.0, rel=1e-12)
    assert tr.dt <= 1e-4


def test_halving_dt_changes_little(case2):
    a = simulate(case2, 10.0, dt=1e-4, periods=30)
    b = simulate(case2, 10.0, dt=5e-5, periods=30)
    ra = abs(harmonic_extract(a, steady_state_window(a, position='last'), 1))
    rb = abs(harmonic_extract(b, steady_state_window(b, position='last'), 1))
    assert abs(ra - rb) <= 0.002 * rb


def test_plant_state_continuous_across_resets(case2):
    tr = simulate(case2, 10.0, periods=6)
    flow = closed_loop_flow(case2)
    plant = flow.slices['plant']
    dz = np.abs(np.diff(tr.x[:, plant], axis=0))
    idx = np.searchsorted(tr.t, tr.reset_instants) - 1
    idx = idx[(idx >= 0) & (idx < len(dz))]
    assert np.max(dz[idx]) <= 3 * np.percentile(dz, 99)
    jump = np.abs(np.diff(tr.x[:, 0]))
    assert np.max(jump[idx]) > 10 * np.median(jump)


def test_zeno_guard_coalesces(case1):
    period = 1 / 0.05
    tr = simulate(case1, 0.05, periods=6, zeno_guard=0.3 * period)
    assert tr.coalesced.size > 0
    assert np.min(np.diff(tr.reset_instants)) >= 0.3 * period


def test_unstable_loop_diverges():
    loop = LoopConfig(make_element('clegg', {}, 0.0), TF([1], [1, -5]))
    with pytest.raises(Divergence):
        simulate(loop, 1.0, periods=60)


def test_step_first_order_no_overshoot():
    loop = LoopConfig(make_element('pci', {'omega_i': 1e-9}, 1.0), TF([10], [1, 0]))
    tr = simulate(loop, input_kind='step', dt=1e-3, duration=2.0)
    m = step_metrics(tr)
    assert m.overshoot == pytest.approx(0.0, abs=1e-6)
    assert m.settling_time == pytest.approx(math.log(50) / 10, abs=2e-3)
    with pytest.raises(NotSettled):
        step_metrics(simulate(loop, input_kind='step', dt=1e-3, duration=0.1))


def test_step_needs_dt_and_duration(case2):
    with pytest.raises(BadParams):
        simulate(case2, input_kind='step', duration=1.0)
    with pytest.raises(BadParams):
        simulate(case2, input_kind='ramp', dt=1e-3, duration=1.0)
