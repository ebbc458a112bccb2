"""Closed-loop higher-order sensitivities, time-domain predictions and
prediction-accuracy metrics for parallel-partial reset loops."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .element import LoopConfig, ResetController
from .errors import (AnalysisError, BadParams, DegenerateEta, DivergentGamma,
                     PlantZeroHit, SingularJumpMap, UnsupportedModel)
from .hosidf import (DEFAULT_NH, HarmonicSet, nonlinear_part, odd_orders,
                     theta_d)
from .lti import mat_exp

__all__ = ['GammaBreakdown', 'ClosedLoopHarmonics', 'PredictedSignal',
           'NonlinearStateResponse', 'SignalNorms', 'PredictionReport',
           'gamma_factor', 'closed_loop_harmonics', 'sensitivity_n',
           'predict_error', 'predict_control_input', 'nonlinear_state_segment',
           'signal_norms', 'prediction_metrics', 'METHODS']

METHODS = ('hosidf', 'df')
_ETA_FLOOR = 1e-12


@dataclass(frozen=True)
class GammaBreakdown:
    """Loop correction factor and the per-harmonic terms that build it.

    ``eta`` holds ``eta_n`` (``eta[1]`` is the normalising term) in the
    ``'eta'`` formulation, or ``Delta_c^n`` in the ``'psi'`` one; ``zeta``
    the magnitude ratios ``|L_nl(n w)| / |1 + L_bl(n w)|``.
    """

    omega: float
    gamma: float
    formulation: str
    ratio_sum: float
    zeta: dict = field(default_factory=dict)
    eta: dict = field(default_factory=dict)


def _tails(loop: LoopConfig, w: float) -> tuple[complex, complex]:
    return complex(loop.c2.freqresp(w)), complex(loop.plant.freqresp(w))


def _unit(z: complex) -> complex:
    a = abs(z)
    return z / a if a > 0 else 0j


def _reset_state_gain(rc: ResetController, w: float) -> complex:
    n = rc.n_c
    return complex(np.linalg.solve(1j * w * np.eye(n) - rc.base.A,
                                   rc.base.B[:, 0].astype(complex))[0])


def gamma_factor(loop: LoopConfig, omega: float, n_h: int = DEFAULT_NH,
                 formulation: str = 'psi', kernel=None) -> GammaBreakdown:
    """Correction factor ``Gamma(w)`` that accounts for higher harmonics of
    ``e`` re-entering the reset trigger.

    ``formulation='psi'`` (default) weighs every harmonic by the base-linear
    response of the reset state, which is what sets the size of each jump.
    ``'eta'`` weighs it by the full base-linear controller ``C_bl``.  The
    two coincide when the controller output is the reset state itself
    (Clegg, FORE); they differ when ``C_bl`` has feed-through or extra
    states, e.g. a PCI.  ``k_rc`` cancels from the ratio, so ``k_rc = 0``
    and ``gamma = 1`` both give ``Gamma = 1`` exactly.
    """
    if formulation not in ('eta', 'psi'):
        raise BadParams(f"unknown formulation {formulation!r}")
    orders = odd_orders(n_h)
    rc = loop.controller
    k = loop.k_rc
    if k == 0.0 or n_h == 1:
        return GammaBreakdown(omega, 1.0, formulation, 0.0)
    if kernel is None:
        kernel = theta_d(rc, omega)
    if formulation == 'eta':
        weight = lambda w: complex(loop.cbl.freqresp(w))
        sign = 1.0
    else:
        weight = lambda w: _reset_state_gain(rc, w)
        sign = -1.0
    ref = weight(omega).imag
    zeta, eta = {}, {}
    total = 0.0
    nonzero = False
    for n in orders[1:]:
        w = n * omega
        c2, p = _tails(loop, w)
        l_nl = k * nonlinear_part(rc, omega, n, kernel) * c2 * p
        one_plus = 1.0 + complex(loop.cbl.freqresp(w)) * c2 * p
        z = abs(l_nl) / abs(one_plus)
        term = sign * (weight(w) * _unit(l_nl) * _unit(one_plus).conjugate()).imag
        zeta[n] = z
        eta[n] = k * term if formulation == 'eta' else term
        if z > 0:
            nonzero = True
            total += z * term
    if not nonzero:
        return GammaBreakdown(omega, 1.0, formulation, 0.0, zeta, eta)
    if abs(ref) < _ETA_FLOOR:
        raise DegenerateEta(f"normalising term vanishes at omega={omega:.6g}")
    eta[1] = -k * ref if formulation == 'eta' else ref
    # eta-form: eta_n/eta_1 = term/(-ref); psi-form: Delta_c^n/Delta_c = term/ref
    ratio = total / (-ref) if formulation == 'eta' else total / ref
    if ratio >= 1.0:
        raise DivergentGamma(f"harmonic feedback sum {ratio:.4g} >= 1 at omega={omega:.6g}")
    return GammaBreakdown(omega, 1.0 / (1.0 - ratio), formulation, ratio, zeta, eta)


@dataclass(frozen=True)
class ClosedLoopHarmonics:
    """Harmonic sensitivities ``S_n`` with the breakdown that produced them."""

    sensitivity: HarmonicSet
    gamma: GammaBreakdown
    l_bl: dict
    l_nl: dict

    def __getitem__(self, n: int) -> complex:
        return self.sensitivity[n]


def closed_loop_harmonics(loop: LoopConfig, omega: float, n_h: int = DEFAULT_NH,
                          formulation: str = 'psi') -> ClosedLoopHarmonics:
    """``S_n(w)`` for odd ``n <= n_h`` (reference to error)."""
    if not omega > 0:
        raise BadParams("omega must be positive")
    orders = odd_orders(n_h)
    rc = loop.controller
    kernel = theta_d(rc, omega)
    gb = gamma_factor(loop, omega, n_h, formulation, kernel)
    G = gb.gamma
    l_bl, l_nl = {}, {}
    for n in orders:
        w = n * omega
        try:
            c2, p = _tails(loop, w)
            l_bl[n] = complex(loop.cbl.freqresp(w)) * c2 * p
            l_nl[n] = loop.k_rc * nonlinear_part(rc, omega, n, kernel) * c2 * p
        except AnalysisError as exc:
            raise type(exc)(f"harmonic n={n}, omega={omega:.6g}: {exc}") from exc
    s1 = 1.0 / (1.0 + l_bl[1] + G * l_nl[1])
    values = {1: s1}
    for n in orders[1:]:
        values[n] = (-G * l_nl[n] * abs(s1) * np.exp(1j * n * np.angle(s1))
                     / (1.0 + l_bl[n]))
    return ClosedLoopHarmonics(HarmonicSet(omega, values, n_h), gb, l_bl, l_nl)


def sensitivity_n(loop: LoopConfig, omega: float, n: int,
                  n_h: int = DEFAULT_NH, formulation: str = 'psi') -> complex:
    """Single harmonic sensitivity ``S_n(w)``; zero for even ``n``."""
    if n < 1:
        raise BadParams("harmonic order must be positive")
    if n % 2 == 0:
        return 0j
    if n > n_h:
        raise BadParams(f"order {n} exceeds truncation {n_h}")
    return closed_loop_harmonics(loop, omega, n_h, formulation)[n]


def _df_sensitivity(loop: LoopConfig, omega: float) -> complex:
    """Describing-function sensitivity ``1/(1 + H_p^1 C2 P)``."""
    return closed_loop_harmonics(loop, omega, 1)[1]


@dataclass(frozen=True)
class PredictedSignal:
    """Sampled prediction over one period, ``t`` in ``[0, T]`` inclusive,
    referenced to an input ``A sin(w t)``."""

    t: np.ndarray
    values: np.ndarray
    harmonics: dict
    method: str


def _check_method(method: str) -> None:
    if method not in METHODS:
        raise BadParams(f"method must be one of {METHODS}")


def _node_sign(loop: LoopConfig) -> float:
    if loop.input_node == 'reference':
        return 1.0
    if loop.input_node == 'noise':
        return -1.0
    raise UnsupportedModel("harmonic error prediction covers reference and noise inputs")


def _error_harmonics(loop, omega, method, n_h, formulation) -> dict:
    sign = _node_sign(loop)
    A = loop.amplitude
    if method == 'df':
        return {1: sign * A * _df_sensitivity(loop, omega)}
    cl = closed_loop_harmonics(loop, omega, n_h, formulation)
    return {n: sign * A * s for n, s in cl.sensitivity.values.items()}


def _synthesise(harm: dict, omega: float, samples: int) -> tuple[np.ndarray, np.ndarray]:
    if samples < 8:
        raise BadParams("need at least 8 samples per period")
    t = np.linspace(0.0, 2 * np.pi / omega, samples + 1)
    x = np.zeros_like(t)
    for n, c in harm.items():
        x += abs(c) * np.sin(n * omega * t + np.angle(c))
    return t, x


def predict_error(loop: LoopConfig, omega: float, method: str = 'hosidf',
                  n_h: int = DEFAULT_NH, samples_per_period: int = 2000,
                  formulation: str = 'psi') -> PredictedSignal:
    """Steady-state error waveform ``sum_n |R||S_n| sin(n w t + angle S_n)``.

    ``method='df'`` keeps only the describing-function first harmonic.
    """
    _check_method(method)
    harm = _error_harmonics(loop, omega, method, n_h, formulation)
    t, x = _synthesise(harm, omega, samples_per_period)
    return PredictedSignal(t, x, harm, method)


def predict_control_input(loop: LoopConfig, omega: float, method: str = 'hosidf',
                          n_h: int = DEFAULT_NH, samples_per_period: int = 2000,
                          formulation: str = 'psi') -> PredictedSignal:
    """Plant-input waveform implied by the predicted error.

    ``U_1 = (R - E_1)/P(jw)`` and ``U_n = -E_n/P(jnw)`` for odd ``n > 1``.
    """
    _check_method(method)
    if loop.input_node != 'reference':
        raise UnsupportedModel("control-input prediction covers reference inputs")
    harm_e = _error_harmonics(loop, omega, method, n_h, formulation)
    harm_u = {}
    for n, en in harm_e.items():
        p = complex(loop.plant.freqresp(n * omega))
        if abs(p) < 1e-12:
            raise PlantZeroHit(f"plant vanishes at {n} x omega={omega:.6g}")
        harm_u[n] = ((loop.amplitude - en) if n == 1 else -en) / p
    t, x = _synthesise(harm_u, omega, samples_per_period)
    return PredictedSignal(t, x, harm_u, method)


@dataclass(frozen=True)
class NonlinearStateResponse:
    """Reset-induced part of the controller state under a harmonic input.

    Between consecutive resets ``t_i <= t < t_{i+1}`` the state equals the
    linear response plus ``(-1)^i |E_n| expm(A (t - t_i)) delta_v``.
    """

    rc: ResetController
    omega: float
    n: int
    amplitude: float
    trigger_phase: float
    delta_l: np.ndarray
    delta_c: np.ndarray
    delta_v: np.ndarray

    def reset_instant(self, i: int) -> float:
        return (i * np.pi - self.trigger_phase) / self.omega

    def __call__(self, t) -> np.ndarray:
        """Nonlinear state at times ``t`` (any shape); rows are states."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        i = np.floor((self.omega * t + self.trigger_phase) / np.pi).astype(int)
        out = np.empty((self.rc.n_c, t.size))
        A = self.rc.base.A
        for j, (tj, ij) in enumerate(zip(t, i)):
            tau = tj - self.reset_instant(ij)
            sign = 1.0 if ij % 2 == 0 else -1.0
            out[:, j] = sign * self.amplitude * (mat_exp(A, tau) @ self.delta_v)
        return out


def nonlinear_state_segment(rc: ResetController, omega: float, e_n: complex,
                            e_s: complex, n: int = 1) -> NonlinearStateResponse:
    """Piecewise nonlinear state of a reset element whose input carries the
    harmonic ``|E_n| sin(n w t + angle E_n)`` while resets are triggered by
    ``|E_s| sin(w t + angle E_s)``."""
    if n < 1:
        raise BadParams("harmonic order must be positive")
    nc = rc.n_c
    A, B = rc.base.A, rc.base.B[:, 0]
    dl = np.linalg.solve(1j * n * omega * np.eye(nc) - A, B.astype(complex))
    shift = np.angle(e_n) - n * np.angle(e_s)
    dc = np.abs(dl) * np.sin(np.angle(dl) + shift)
    Arho = rc.reset_matrix
    # fixed point of the jump map for a half-period antiperiodic response:
    # v = A_rho (-E v) - (I - A_rho) dc, i.e. v = -(I + A_rho E)^-1 (I - A_rho) dc
    J = np.eye(nc) + Arho @ mat_exp(A, np.pi / omega)
    if np.linalg.cond(J) > 1e14:
        raise SingularJumpMap(f"reset jump map singular at omega={omega:.6g}")
    dv = -np.linalg.solve(J, (np.eye(nc) - Arho) @ dc)
    return NonlinearStateResponse(rc, omega, n, abs(e_n), float(np.angle(e_s)),
                                  dl, dc, dv)


@dataclass(frozen=True)
class SignalNorms:
    rms: float
    linf: float


def signal_norms(t: np.ndarray, x: np.ndarray) -> SignalNorms:
    """RMS (trapezoidal, over the span of ``t``) and peak magnitude."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if t.size < 2 or t.shape != x.shape:
        raise BadParams("need matching sample arrays of length >= 2")
    span = t[-1] - t[0]
    if not span > 0:
        raise BadParams("time span must be positive")
    rms = math.sqrt(float(np.trapezoid(x * x, t)) / span)
    return SignalNorms(rms, float(np.max(np.abs(x))))


@dataclass(frozen=True)
class PredictionReport:
    """Prediction errors of the HOSIDF and DF models against simulation.

    ``pe`` maps ``(signal, method, norm)`` to the absolute norm difference,
    ``pa`` maps ``(signal, norm)`` to the accuracy gain of HOSIDF over DF
    relative to the simulated norm.
    """

    freq_hz: float
    sim_norms: dict
    model_norms: dict
    pe: dict
    pa: dict
    resets_per_period: float
    reliable: bool


def prediction_metrics(loop: LoopConfig, trace, window, n_h: int = DEFAULT_NH,
                       formulation: str = 'psi') -> PredictionReport:
    """Compare HOSIDF and DF predictions with one steady-state period of a
    simulated trace."""
    from .sim import reset_statistics

    omega = trace.settings['omega']
    ns = window.samples_per_period
    # last whole period of the window, endpoint included
    a = window.stop - ns
    sl = slice(a, window.stop + 1)
    if window.stop >= len(trace.t):
        sl = slice(a - 1, window.stop)
    t_sim = trace.t[sl]
    sim = {'e': signal_norms(t_sim, trace.e[sl]), 'u': signal_norms(t_sim, trace.u[sl])}
    model, pe = {}, {}
    for method in METHODS:
        pred_e = predict_error(loop, omega, method, n_h, ns, formulation)
        model[('e', method)] = signal_norms(pred_e.t, pred_e.values)
        if loop.input_node == 'reference':
            pred_u = predict_control_input(loop, omega, method, n_h, ns, formulation)
            model[('u', method)] = signal_norms(pred_u.t, pred_u.values)
    for (sig, method), norms in model.items():
        for norm in ('rms', 'linf'):
            pe[(sig, method, norm)] = abs(getattr(sim[sig], norm) - getattr(norms, norm))
    pa = {}
    for sig in {s for s, _ in model}:
        for norm in ('rms', 'linf'):
            ref = getattr(sim[sig], norm)
            pa[(sig, norm)] = (abs(pe[(sig, 'df', norm)] - pe[(sig, 'hosidf', norm)])
                               / ref if ref > 0 else 0.0)
    stats = reset_statistics(trace, window)
    rate = float(stats.resets_per_period)
    return PredictionReport(trace.settings['freq_hz'], sim, model, pe, pa, rate,
                            rate == 2.0)
