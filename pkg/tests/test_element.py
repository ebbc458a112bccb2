import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resetfra.element import (LoopConfig, base_linear, check_open_loop_stability,
                              cglp_lead, gang_of_four, make_element)
from resetfra.errors import BadParams, ConfigError
from resetfra.lti import TransferFunction as TF


def test_catalogue_base_linear_forms():
    assert base_linear(make_element('clegg')) == TF([1], [1, 0])
    assert base_linear(make_element('fore', {'omega_r': 2})) == TF([2], [1, 2])
    assert base_linear(make_element('pci', {'omega_i': 5})) == TF([1, 5], [1, 0])
    assert base_linear(make_element('fore', {'omega_r': 2, 'k': 24})) == TF([48], [1, 2])


def test_catalogue_matrices():
    c = make_element('clegg', {}, 0.0).base
    assert (c.A, c.B, c.C, c.D) == ([[0.0]], [[1.0]], [[1.0]], [[0.0]])
    f = make_element('fore', {'omega_r': 2}).base
    assert f.A[0, 0] == -2 and f.B[0, 0] == 2 and f.C[0, 0] == 1 and f.D[0, 0] == 0


def test_reset_matrix():
    rc = make_element('clegg', {}, 0.0)
    assert np.array_equal(rc.reset_matrix, [[0.0]])
    assert np.array_equal(make_element('clegg', {}, 1.0).reset_matrix, [[1.0]])
    custom = make_element('custom', {'A': [[0, 0], [1, -1]], 'B': [[1], [0]],
                                     'C': [[0, 1]], 'D': [[0]]}, -0.3)
    assert np.array_equal(custom.reset_matrix, np.diag([-0.3, 1.0]))
    assert custom.n_l == 1 and custom.n_r == 1


@pytest.mark.parametrize('kind, params', [
    ('fore', {'omega_r': 0}), ('fore', {}), ('pci', {'omega_i': -1}),
    ('cglp', {'omega_r': 1}), ('bogus', {}),
])
def test_bad_params(kind, params):
    with pytest.raises(BadParams):
        make_element(kind, params)


def test_cglp_lead_cancels_fore_pole():
    wr, wc = 100.0, 900.0
    rc = make_element('cglp', {'omega_r': wr, 'omega_c': wc}, 1.0)
    total = (base_linear(rc) * cglp_lead(wr, wc)).reduce()
    assert total.den.degree == 1
    assert complex(total.freqresp(wc)) == pytest.approx(1 / (1 + 1j / 10), rel=1e-12)


@pytest.mark.parametrize('gamma, stable, radius', [(0.0, True, 0.0), (-0.5, True, 0.5),
                                                   (1.5, False, 1.5)])
def test_open_loop_stability_clegg(gamma, stable, radius):
    rep = check_open_loop_stability(make_element('clegg', {}, gamma))
    assert rep.stable is stable
    assert rep.max_radius == pytest.approx(radius)


def test_stability_grid_validation():
    with pytest.raises(BadParams):
        check_open_loop_stability(make_element('clegg'), [])


def test_loop_validation():
    rc = make_element('clegg')
    with pytest.raises(BadParams):
        LoopConfig(rc, TF([1], [1, 2]), k_rc=1.5)
    with pytest.raises(BadParams):
        LoopConfig(rc, TF([1], [1, 2]), input_node='output')
    with pytest.raises(BadParams):
        LoopConfig(make_element('pci', {'omega_i': 1}), TF([1]))
    with pytest.raises(ConfigError):
        LoopConfig(rc, TF([1], [1, 2]), amplitude=0.0)


def test_gang_of_four_examples(clegg_loop):
    g = gang_of_four(clegg_loop, 1e4)
    assert g.s_bl == pytest.approx(1.0, abs=1e-7)
    g1 = gang_of_four(clegg_loop, 1.0)
    assert g1.s_bl == pytest.approx((-1 + 2j) / (2j), rel=1e-12)


CLEGG_LOOP = LoopConfig(make_element('clegg', {}, 0.0), TF([1], [1, 2]))


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_gang_of_four_identities(w):
    g = gang_of_four(CLEGG_LOOP, w)
    L = complex(CLEGG_LOOP.l_bl_at(w))
    assert abs(g.s_bl + g.t_bl - 1) <= 1e-12
    assert abs(g.s_bl * (1 + L) - 1) <= 1e-12


def test_reset_state_gain_vectorised(case2):
    w = np.array([1.0, 10.0])
    got = case2.reset_state_gain_at(w)
    assert got.shape == (2,)
    assert got[1] == pytest.approx(48 / (10j + 2))
    assert case2.reset_state_gain_at(10.0) == pytest.approx(got[1])
