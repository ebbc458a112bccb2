"""Multiple-reset frequency regions of reset control loops.

A sinusoidally driven reset loop resets exactly twice per steady-state
period only when the reset-induced response does not drive the error back
across zero right after a reset.  The indicators here compare the slope of
the base-linear error at the first reset instant with the slope the reset
jump injects, giving a frequency-domain test for the multiple-reset regime.

The jump injected at a reset is ``(gamma - 1) x_r(t_i)`` on the reset
state; its effect on the error is the step response of

    X(s) = k_rc * s * C_R (sI - A_R)^-1 e_0 * C2(s) P(s) S_bl(s)

so every quantity below is invariant to the controller realization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .element import LoopConfig
from .errors import (BadParams, DegenerateLoop, NoPeak, NoSignChange,
                     NoZeroFound, UnsupportedPlantOrder)
from .lti import (StateSpace, TransferFunction, asymptotic_limit, mat_exp,
                  ss_to_tf, tf_to_ss)

__all__ = ['ResetLimits', 'RegionAnalysis', 'PiecewiseSignals', 'Segment',
           'first_reset_instant', 'reset_response_tf', 'reset_limits',
           'peak_time', 'region_indicator', 'scan_region',
           'piecewise_reconstruct', 'transient_crossing_count',
           'first_transient_reset', 'delta_prime', 'scan_delta_prime',
           'K1_ZERO']

K1_ZERO = 1e-9
_UNITY_PHASE_TOL = 1e-3


def first_reset_instant(loop: LoopConfig, omega: float) -> float:
    """First steady-state reset instant ``(pi - angle S_bl(jw)) / w``.

    The angle is taken in ``(-pi, pi]`` so the result lies in
    ``[0, 2 pi / w)``.
    """
    if not omega > 0:
        raise BadParams("omega must be positive")
    s = _sensitivity(loop, np.array([omega]))[0]
    phase = float(np.angle(s))
    if phase == -math.pi:
        phase = math.pi
    return (math.pi - phase) / omega


def _sensitivity(loop: LoopConfig, omegas: np.ndarray) -> np.ndarray:
    one_plus = 1.0 + np.asarray(loop.l_bl_at(omegas), dtype=complex)
    if np.any(np.abs(one_plus) < 1e-12):
        raise DegenerateLoop("|1 + L_bl| vanishes on the grid")
    return 1.0 / one_plus


def _reset_direction_tf(loop: LoopConfig) -> TransferFunction:
    """``s C_R (sI - A_R)^-1 e_0``: controller output per unit jump."""
    base = loop.controller.base
    e0 = np.zeros((base.nstates, 1))
    e0[0, 0] = 1.0
    tf = ss_to_tf(StateSpace(base.A, e0, base.C, [[0.0]]))
    return tf * TransferFunction([1.0, 0.0])


def _s_bl_tf(loop: LoopConfig) -> TransferFunction:
    L = loop.loop_bl()
    return TransferFunction(L.den, L.den + L.num)


def reset_response_tf(loop: LoopConfig, to: str = 'error') -> TransferFunction:
    """Step-response generator of a unit reset jump.

    ``to='error'`` gives ``X = R P S_bl`` (the error-side response, up to
    sign convention); ``to='control'`` gives ``R C2 S_bl`` (plant input).
    """
    R = _reset_direction_tf(loop) * loop.k_rc
    S = _s_bl_tf(loop)
    if to == 'error':
        return R * loop.c2 * loop.plant * S
    if to == 'control':
        return R * loop.c2 * S
    raise BadParams(f"unknown response target {to!r}")


class ResetLimits(NamedTuple):
    k1: float
    k2: float | None
    dispatch: str  # 'first', 'second' or 'none'


def reset_limits(loop: LoopConfig) -> ResetLimits:
    """High-frequency limits ``k1 = lim s X(s)`` and ``k2 = lim s^2 X(s)``.

    Dispatch is decided by the computed ``k1`` (zero test ``|k1| < 1e-9``),
    not by the declared plant order.
    """
    X = reset_response_tf(loop)
    if X.num.is_zero:
        return ResetLimits(0.0, None, 'none')
    k1 = asymptotic_limit(X, 1)
    if abs(k1) >= K1_ZERO:
        return ResetLimits(k1, None, 'first')
    k2 = asymptotic_limit(X, 2)
    if abs(k2) < K1_ZERO:
        raise UnsupportedPlantOrder(
            f"reset response has relative degree {X.relative_degree}; "
            "indicators exist for relative degree 1 and 2 only")
    return ResetLimits(0.0, k2, 'second')


def _impulse(ss: StateSpace, t: np.ndarray) -> np.ndarray:
    dt = t[1] - t[0]
    Phi = mat_exp(ss.A, dt)
    x = ss.B[:, 0].astype(float)
    c = ss.C[0]
    out = np.empty(t.size)
    for k in range(t.size):
        out[k] = c @ x
        x = Phi @ x
    return out


def peak_time(loop: LoopConfig, points: int = 10_000) -> float:
    """Time of the first local maximum of the impulse response of ``X``."""
    lim = reset_limits(loop)
    if lim.dispatch != 'second':
        raise BadParams("peak time is defined for the second-order dispatch only")
    X = reset_response_tf(loop).reduce()
    ss = tf_to_ss(X)
    poles = np.linalg.eigvals(ss.A)
    slow = np.min(np.abs(poles.real)) if poles.size else 0.0
    if not slow > 0:
        raise NoPeak("reset response has a non-decaying mode")
    t = np.linspace(0.0, 20.0 / slow, points)
    h = _impulse(ss, t)
    rising = (h[1:-1] > h[:-2]) & (h[1:-1] >= h[2:])
    idx = np.flatnonzero(rising)
    if idx.size == 0:
        raise NoPeak("impulse response is monotone on the search window")
    k = idx[0] + 1
    c, B = ss.C[0], ss.B[:, 0]

    def neg(tau):
        return -float(c @ mat_exp(ss.A, tau) @ B)

    res = minimize_scalar(neg, bracket=(t[k - 1], t[k], t[k + 1]),
                          method='golden', tol=1e-6)
    return float(res.x)


@dataclass(frozen=True)
class _Ingredients:
    limits: ResetLimits
    t_p: float | None
    one_minus_gamma: float


def _ingredients(loop: LoopConfig) -> _Ingredients:
    lim = reset_limits(loop)
    tp = peak_time(loop) if lim.dispatch == 'second' else None
    return _Ingredients(lim, tp, 1.0 - loop.gamma)


def _indicator(loop: LoopConfig, omegas: np.ndarray, node: str,
               ing: _Ingredients) -> np.ndarray:
    S = _sensitivity(loop, omegas)
    xr = np.asarray(loop.reset_state_gain_at(omegas), dtype=complex)
    lim, tp, g = ing.limits, ing.t_p, ing.one_minus_gamma
    if node == 'disturbance':
        PS = np.asarray(loop.plant.freqresp(omegas)) * S
        slope = omegas * np.abs(PS)
        jump = np.abs(PS) * xr.imag
    else:
        slope = -omegas * np.abs(S)
        jump = -np.abs(S) * xr.imag
    if lim.dispatch == 'second':
        value = slope * np.cos(omegas * tp / 3) + lim.k2 * tp * g * jump / 3
    else:
        value = slope + lim.k1 * g * jump
    return -value if node == 'noise' else value


def region_indicator(loop: LoopConfig, omega, node: str | None = None):
    """Multiple-reset indicator at ``omega`` (scalar or array).

    Reference input: multiple resets where the value is positive.
    Disturbance input: multiple resets where it is negative.  Noise input:
    the reference indicator with its sign mirrored (multiple resets where
    negative), since noise acts as a negated reference.
    """
    node = node or loop.input_node
    om = np.atleast_1d(np.asarray(omega, dtype=float))
    if np.any(om <= 0):
        raise BadParams("omega must be positive")
    out = _indicator(loop, om, node, _ingredients(loop))
    return out if np.ndim(omega) else float(out[0])


def _multiple_sign(node: str) -> float:
    return 1.0 if node == 'reference' else -1.0


@dataclass(frozen=True)
class RegionAnalysis:
    """Indicator over a frequency grid and the first region boundary."""

    input_node: str
    freqs_hz: np.ndarray
    indicator: np.ndarray
    k1: float
    k2: float | None
    t_p: float | None
    dispatch: str
    boundary_hz: float | None
    multiple: np.ndarray
    exceptions: np.ndarray
    warnings: list = field(default_factory=list)

    @property
    def multiple_when(self) -> str:
        return 'positive' if _multiple_sign(self.input_node) > 0 else 'negative'

    def require_boundary(self) -> float:
        if self.boundary_hz is None:
            raise NoSignChange("indicator keeps one sign over the whole grid")
        return self.boundary_hz


def _is_unity(tf: TransferFunction) -> bool:
    return (tf.den.degree == 0 and tf.num.degree == 0
            and abs(tf.num.leading / tf.den.leading - 1.0) < 1e-12)


def scan_region(loop: LoopConfig, f_min: float = 0.01, f_max: float = 1000.0,
                points: int = 1000, node: str | None = None,
                rel_tol: float = 1e-4) -> RegionAnalysis:
    """Evaluate the indicator on a log grid and bisect its first sign change.

    With a unity plant, grid points where ``angle S_bl`` is within 1e-3 rad
    of a multiple of pi are forced to the two-reset side: the base-linear
    error then crosses zero together with the reference.
    """
    if not 0 < f_min < f_max:
        raise BadParams("need 0 < f_min < f_max")
    if points < 16:
        raise BadParams("need at least 16 grid points")
    node = node or loop.input_node
    ing = _ingredients(loop)
    f = np.logspace(math.log10(f_min), math.log10(f_max), points)
    om = 2 * np.pi * f
    values = _indicator(loop, om, node, ing)
    sign = _multiple_sign(node)
    multiple = sign * values > 0
    exceptions = np.zeros(points, dtype=bool)
    if _is_unity(loop.plant):
        ph = np.angle(_sensitivity(loop, om))
        dist = np.abs(ph - np.pi * np.round(ph / np.pi))
        exceptions = dist < _UNITY_PHASE_TOL
        multiple &= ~exceptions
    flips = np.flatnonzero(np.sign(values[1:]) != np.sign(values[:-1]))
    warnings = []
    boundary = None
    if flips.size:
        k = flips[0]
        if values[k] == 0.0:
            boundary = float(f[k])
        else:
            def fn(fh):
                return _indicator(loop, np.array([2 * np.pi * fh]), node, ing)[0]
            boundary = float(brentq(fn, f[k], f[k + 1], rtol=rel_tol * 1e-2,
                                    xtol=f[k] * rel_tol * 1e-2))
        if flips.size > 1:
            warnings.append(
                f"indicator changes sign {flips.size} times; further crossings near "
                + ", ".join(f"{f[j]:.4g} Hz" for j in flips[1:6]))
    return RegionAnalysis(node, f, values, ing.limits.k1, ing.limits.k2,
                          ing.t_p, ing.limits.dispatch, boundary, multiple,
                          exceptions, warnings)


class Segment(NamedTuple):
    t: np.ndarray
    u: np.ndarray
    y: np.ndarray
    e: np.ndarray


@dataclass(frozen=True)
class PiecewiseSignals:
    """Closed-loop signals rebuilt reset interval by reset interval."""

    omega: float
    reset_instants: np.ndarray
    segments: list
    h_s: np.ndarray
    h_ps: np.ndarray
    h_t: np.ndarray
    _eval: object = field(repr=False, default=None)

    def error_at(self, t) -> np.ndarray:
        """Reconstructed error at arbitrary times inside the covered span."""
        return self._eval(np.atleast_1d(np.asarray(t, dtype=float)))


def _step_response(tf: TransferFunction, t: np.ndarray) -> np.ndarray:
    """Exact-discretisation step response on a uniform grid."""
    ss = tf_to_ss(tf)
    n = ss.nstates
    if n == 0:
        return np.full(t.size, float(ss.D[0, 0]))
    dt = t[1] - t[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = ss.A
    M[:n, n] = ss.B[:, 0]
    E = mat_exp(M, dt)
    Phi, Gam = E[:n, :n], E[:n, n]
    x = np.zeros(n)
    out = np.empty(t.size)
    c, d = ss.C[0], ss.D[0, 0]
    for k in range(t.size):
        out[k] = c @ x + d
        x = Phi @ x + Gam
    return out


def _refine_root(fn, a, b, h, args, sign, zero_tol, period):
    """Zero of ``fn`` near the bracket ``[a, b]`` found by the grid scan.

    Grid values come from stepped propagation; the exact evaluation may
    disagree in sign when the zero sits on a grid point.
    """
    fa, fb = fn(a, *args), fn(b, *args)
    if abs(fb) <= zero_tol:
        return b
    if math.copysign(1.0, fa) != sign:
        return a
    if math.copysign(1.0, fb) == sign:
        b2 = b + h
        if math.copysign(1.0, fn(b2, *args)) == sign:
            return b
        a, b = b, b2
    return brentq(fn, a, b, args=args, xtol=1e-15 * period,
                  rtol=4 * np.finfo(float).eps)


def piecewise_reconstruct(loop: LoopConfig, omega: float, n_segments: int = 10,
                          samples_per_segment: int = 256) -> PiecewiseSignals:
    """Rebuild the reset loop response to ``A sin(w t)`` from base-linear
    pieces, starting on the base-linear periodic solution at ``t = 0``.

    Each reset adds the response to a jump ``(gamma - 1) x_r(t_i)`` of the
    reset state; the accumulated correction is propagated exactly with the
    matrix exponential of the closed-loop flow, and the next reset is the
    next zero of the corrected error (grid scan then Brent refinement).
    """
    from .sim import closed_loop_flow

    if not omega > 0:
        raise BadParams("omega must be positive")
    if n_segments < 1 or samples_per_segment < 8:
        raise BadParams("need n_segments >= 1 and samples_per_segment >= 8")
    loop = loop.replace(input_node='reference')
    flow = closed_loop_flow(loop)
    M = flow.M
    n = flow.nstates
    A = loop.amplitude
    b = flow.Bw[:, 0]
    Zc = A * np.linalg.solve(1j * omega * np.eye(n) - M, b.astype(complex))
    outs = {k: flow.outputs[k] for k in ('e', 'u', 'y')}
    period = 2 * np.pi / omega
    g = loop.gamma

    def base(t):
        return np.imag(np.outer(np.exp(1j * omega * t), Zc))

    def signal(name, t, states):
        C, D = outs[name]
        return (base(t) + states) @ C + D[0] * A * np.sin(omega * t)

    def err(t, t0, c0):
        corr = mat_exp(M, t - t0) @ c0
        return float(signal('e', np.array([t]), corr[None, :])[0])

    grid = samples_per_segment
    h = period / grid
    Phi_h = mat_exp(M, h)
    t0, c = 0.0, np.zeros(n)
    e0 = err(period * 1e-9, t0, c)
    prev_sign = math.copysign(1.0, e0)
    resets, segments, starts = [], [], []
    for _ in range(n_segments):
        # scan one period ahead for the next sign change
        cc, tk, root = c.copy(), t0, None
        lo_t = t0 + period * 1e-9
        lo_val = err(lo_t, t0, c)
        if math.copysign(1.0, lo_val) != prev_sign and lo_val != 0.0:
            root = lo_t
        for k in range(1, int(1.5 * grid) + 2):
            if root is not None:
                break
            cc = Phi_h @ cc
            tk = t0 + k * h
            v = float(signal('e', np.array([tk]), cc[None, :])[0])
            if v == 0.0:
                root = tk
            elif math.copysign(1.0, v) != prev_sign:
                root = _refine_root(err, max(tk - h, lo_t), tk, h, (t0, c),
                                    prev_sign, 1e-13 * A, period)
        if root is None:
            raise NoZeroFound(f"no error zero within 1.5 periods after t={t0:.6g}")
        ts = np.linspace(t0, root, samples_per_segment + 1)
        step = mat_exp(M, (root - t0) / samples_per_segment)
        states = np.empty((ts.size, n))
        s = c.copy()
        for j in range(ts.size):
            states[j] = s
            s = step @ s
        segments.append(Segment(ts, signal('u', ts, states), signal('y', ts, states),
                                signal('e', ts, states)))
        starts.append((t0, c.copy()))
        c_end = mat_exp(M, root - t0) @ c
        xr = base(np.array([root]))[0, 0] + c_end[0]
        c_end[0] -= (1.0 - g) * xr
        resets.append(root)
        t0, c = root, c_end
        prev_sign = -prev_sign
    starts.append((t0, c.copy()))
    bounds = np.array([s[0] for s in starts])

    def evaluate(t):
        out = np.empty(t.size)
        for j, tj in enumerate(t):
            if not 0.0 <= tj <= bounds[-1]:
                raise BadParams(f"t={tj:.6g} outside reconstructed span")
            i = min(int(np.searchsorted(bounds, tj, side='right') - 1), len(starts) - 2)
            ts, cs = starts[i]
            out[j] = err(tj, ts, cs)
        return out

    th = np.linspace(0.0, period, 2049)
    h_s = _step_response(reset_response_tf(loop, 'control'), th)
    h_ps = _step_response(reset_response_tf(loop, 'error'), th)
    return PiecewiseSignals(omega, np.array(resets), segments, h_s, h_ps, th,
                            evaluate)


def _first_period_crossings(loop: LoopConfig, omega: float) -> np.ndarray:
    from .sim import simulate

    lin = loop.replace(gamma=1.0, input_node='reference')
    tr = simulate(lin, omega / (2 * np.pi), periods=1)
    return tr.reset_instants


def transient_crossing_count(loop: LoopConfig, omega: float) -> int:
    """Zero crossings of the base-linear error during the first input
    period, starting from rest at ``t = 0``."""
    if not omega > 0:
        raise BadParams("omega must be positive")
    return int(_first_period_crossings(loop, omega).size)


def first_transient_reset(loop: LoopConfig, omega: float) -> float:
    """True first reset instant from rest (first zero crossing of ``e``)."""
    inst = _first_period_crossings(loop, omega)
    if inst.size == 0:
        raise NoZeroFound("error does not cross zero during the first period")
    return float(inst[0])


def delta_prime(loop: LoopConfig, omega: float, t_first: float | None = None,
                node: str = 'reference') -> float:
    """Reference-input indicator evaluated at the true first reset instant
    (from rest) instead of the steady-state one."""
    if node != 'reference':
        raise BadParams("delta_prime is defined for reference inputs")
    ing = _ingredients(loop)
    if t_first is None:
        t_first = first_transient_reset(loop, omega)
    s = _sensitivity(loop, np.array([omega]))[0]
    xr = complex(loop.reset_state_gain_at(omega))
    jump = (xr * s * np.exp(1j * omega * t_first)).imag
    lim, tp, g = ing.limits, ing.t_p, ing.one_minus_gamma
    phase = omega * t_first + np.angle(s)
    if lim.dispatch == 'second':
        return float(omega * abs(s) * np.cos(phase + omega * tp / 3)
                     + lim.k2 * tp * g * jump / 3)
    return float(omega * abs(s) * np.cos(phase) + lim.k1 * g * jump)


def scan_delta_prime(loop: LoopConfig, f_min: float, f_max: float,
                     points: int = 60, rel_tol: float = 1e-3) -> float | None:
    """First sign change of :func:`delta_prime` on a log grid, refined by
    bisection; ``None`` when the grid is one-signed."""
    f = np.logspace(math.log10(f_min), math.log10(f_max), points)

    def fn(fh):
        return delta_prime(loop, 2 * np.pi * fh)

    vals = np.array([fn(x) for x in f])
    flips = np.flatnonzero(np.sign(vals[1:]) != np.sign(vals[:-1]))
    if not flips.size:
        return None
    k = flips[0]
    return float(brentq(fn, f[k], f[k + 1], rtol=rel_tol, xtol=f[k] * rel_tol))
