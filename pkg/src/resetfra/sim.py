"""Hybrid time-domain simulation of reset control loops.

Fixed-step classical RK4 on the linear flow, zero-crossing detection of the
trigger at every step, event time localised by bisection, then the jump
``x_r[0] <- gamma * x_r[0]`` is applied and integration resumes on the same
time grid.  Runs are deterministic to the bit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple

import numpy as np

from .element import INPUT_NODES, LoopConfig, ResetController
from .errors import (Aliased, AlgebraicLoop, BadParams, Divergence,
                     NoSteadyState, NotSettled)
from .lti import StateSpace, tf_to_ss

__all__ = ['ClosedLoopFlow', 'SimulationTrace', 'SteadyStateWindow',
           'ResetStats', 'StepMetrics', 'closed_loop_flow', 'simulate',
           'simulate_element', 'steady_state_window', 'harmonic_extract',
           'reset_statistics', 'step_metrics', 'linear_steady_state',
           'write_trace_csv', 'DIVERGENCE_LIMIT']

DIVERGENCE_LIMIT = 1e12
_NODE_COLUMN = {node: i for i, node in enumerate(INPUT_NODES)}


@dataclass(frozen=True)
class ClosedLoopFlow:
    """Linear flow ``z' = M z + Bw w`` with output maps ``sig = C z + D w``.

    ``w = [r, d, n]``.  State layout: reset copy of the controller, its
    never-reset base-linear twin, C2, plant.
    """

    M: np.ndarray
    Bw: np.ndarray
    outputs: dict
    slices: dict
    gamma: float

    @property
    def nstates(self) -> int:
        return self.M.shape[0]

    def output(self, name: str, Z: np.ndarray, W: np.ndarray) -> np.ndarray:
        C, D = self.outputs[name]
        return Z @ C + W @ D


def _ss(tf) -> StateSpace:
    return tf_to_ss(tf)


def closed_loop_flow(loop: LoopConfig) -> ClosedLoopFlow:
    """Assemble the closed-loop flow matrices of ``loop``."""
    ctl = loop.controller.base
    c2 = _ss(loop.c2)
    pl = _ss(loop.plant)
    nc, n2, npl = ctl.nstates, c2.nstates, pl.nstates
    N = 2 * nc + n2 + npl
    sl = {'reset': slice(0, nc), 'twin': slice(nc, 2 * nc),
          'c2': slice(2 * nc, 2 * nc + n2), 'plant': slice(2 * nc + n2, N)}
    k = loop.k_rc
    AR, BR, CR, DR = ctl.A, ctl.B[:, 0], ctl.C[0], ctl.D[0, 0]
    D2, Dp = c2.D[0, 0], pl.D[0, 0]

    def row(**parts):
        r = np.zeros(N)
        for name, vec in parts.items():
            r[sl[name]] = vec
        return r

    cv_z = row(reset=k * CR, twin=(1 - k) * CR)
    cu0 = row(c2=c2.C[0]) + D2 * cv_z
    du_e = D2 * DR
    g = 1.0 + Dp * du_e
    if abs(g) < 1e-12:
        raise AlgebraicLoop("direct feed-through loop has unity gain product")
    Ce = -(row(plant=pl.C[0]) + Dp * cu0) / g
    De = np.array([1.0, -Dp, -1.0]) / g
    Cv, Dv = cv_z + DR * Ce, DR * De
    Cu, Du = cu0 + du_e * Ce, du_e * De
    Cy, Dy = -Ce, np.array([1.0, 0.0, -1.0]) - De

    M = np.zeros((N, N))
    M[sl['reset'], sl['reset']] = AR
    M[sl['twin'], sl['twin']] = AR
    M[sl['c2'], sl['c2']] = c2.A
    M[sl['plant'], sl['plant']] = pl.A
    b_e = np.zeros(N)
    b_e[sl['reset']] = BR
    b_e[sl['twin']] = BR
    b_v = np.zeros(N)
    b_v[sl['c2']] = c2.B[:, 0]
    b_u = np.zeros(N)
    b_u[sl['plant']] = pl.B[:, 0]
    M += np.outer(b_e, Ce) + np.outer(b_v, Cv) + np.outer(b_u, Cu)
    Bw = (np.outer(b_e, De) + np.outer(b_v, Dv)
          + np.outer(b_u, Du + np.array([0.0, 1.0, 0.0])))
    outputs = {'e': (Ce, De), 'v': (Cv, Dv), 'u': (Cu, Du), 'y': (Cy, Dy)}
    return ClosedLoopFlow(M, Bw, outputs, sl, loop.gamma)


def _rk4_affine(M: np.ndarray, B: np.ndarray, h: float):
    """One RK4 step of ``z' = M z + B w(t)`` written as
    ``z+ = Phi z + G0 w(t) + Gm w(t+h/2) + G1 w(t+h)``."""
    n = M.shape[0]
    I = np.eye(n)
    hM = h * M
    hM2 = hM @ hM
    hM3 = hM2 @ hM
    Phi = I + hM + hM2 / 2 + hM3 / 6 + hM3 @ hM / 24
    hB = h * B
    G0 = (I + hM + hM2 / 2 + hM3 / 4) @ hB / 6
    Gm = (4 * I + 2 * hM + hM2 / 2) @ hB / 6
    G1 = hB / 6
    return Phi, G0, Gm, G1


class _Engine:
    """Event-driven fixed-step integrator shared by all simulations."""

    def __init__(self, M, Bw, wfun, trig_C, trig_D, jump_index, gamma,
                 zeno_guard):
        self.M, self.Bw, self.wfun = M, Bw, wfun
        self.trig_C, self.trig_D = trig_C, trig_D
        self.jump_index, self.gamma = jump_index, gamma
        self.zeno_guard = zeno_guard

    def _step(self, z, t, h):
        Phi, G0, Gm, G1 = _rk4_affine(self.M, self.Bw, h)
        w = self.wfun(np.array([t, t + h / 2, t + h]))
        return Phi @ z + G0 @ w[0] + Gm @ w[1] + G1 @ w[2]

    def _trigger(self, z, t):
        return float(self.trig_C @ z + self.trig_D @ self.wfun(np.array([t]))[0])

    def run(self, z0, dt, steps, t0=0.0):
        n = z0.size
        t_grid = t0 + dt * np.arange(steps + 1)
        t_mid = t_grid[:-1] + dt / 2
        W = self.wfun(t_grid)
        Wm = self.wfun(t_mid)
        Phi, G0, Gm, G1 = _rk4_affine(self.M, self.Bw, dt)
        forcing = W[:-1] @ G0.T + Wm @ Gm.T + W[1:] @ G1.T
        trig_w = W @ self.trig_D
        tc = self.trig_C
        Z = np.empty((steps + 1, n))
        Z[0] = z = np.asarray(z0, dtype=float).copy()
        e0 = tc @ z + trig_w[0]
        last_sign = math.copysign(1.0, e0) if e0 != 0 else 0.0
        resets, coalesced = [], []
        last_reset = -math.inf
        for k in range(steps):
            z_new = Phi @ z + forcing[k]
            e_new = tc @ z_new + trig_w[k + 1]
            if last_sign == 0.0:
                if e_new != 0.0:
                    last_sign = math.copysign(1.0, e_new)
            elif e_new * last_sign < 0.0:
                z_new, last_sign, last_reset = self._resolve(
                    z, t_grid[k], t_grid[k + 1], last_sign, last_reset,
                    resets, coalesced)
            Z[k + 1] = z = z_new
            if not abs(e_new) < DIVERGENCE_LIMIT:
                self._diverged(t_grid[k + 1])
            if k % 256 == 0 and np.max(np.abs(z)) > DIVERGENCE_LIMIT:
                self._diverged(t_grid[k + 1])
        if np.max(np.abs(Z[-1])) > DIVERGENCE_LIMIT or not np.all(np.isfinite(Z[-1])):
            self._diverged(t_grid[-1])
        return t_grid, W, Z, resets, coalesced

    @staticmethod
    def _diverged(t):
        raise Divergence(f"state magnitude exceeded {DIVERGENCE_LIMIT:g} at t={t:.6g}")

    def _resolve(self, z, t_a, t_b, last_sign, last_reset, resets, coalesced):
        """Handle every crossing inside ``[t_a, t_b]``; returns the state at
        ``t_b`` and the updated trigger sign."""
        while True:
            h = t_b - t_a
            lo, hi = 0.0, 1.0
            tol = max(h, 1e-300) * 1e-12
            while (hi - lo) * h > tol:
                mid = 0.5 * (lo + hi)
                e_mid = self._trigger(self._step(z, t_a, mid * h), t_a + mid * h)
                if e_mid == 0.0 or e_mid * last_sign < 0.0:
                    hi = mid
                else:
                    lo = mid
                if hi - lo < 1e-15:
                    break
            t_ev = t_a + hi * h
            z = self._step(z, t_a, hi * h)
            if t_ev - last_reset >= self.zeno_guard:
                z = z.copy()
                z[self.jump_index] *= self.gamma
                resets.append(t_ev)
                last_reset = t_ev
            else:
                coalesced.append(t_ev)
            last_sign = -last_sign
            e_after = self._trigger(z, t_ev)
            if e_after * last_sign < 0.0:
                # the jump itself moved the trigger back across zero
                last_sign = -last_sign
            t_a = t_ev
            rem = t_b - t_a
            if rem <= 0.0:
                return z, last_sign, last_reset
            z_end = self._step(z, t_a, rem)
            e_end = self._trigger(z_end, t_b)
            if not e_end * last_sign < 0.0:
                return z_end, last_sign, last_reset


@dataclass(frozen=True)
class SimulationTrace:
    """Sampled closed-loop signals and the ordered reset instants."""

    dt: float
    t: np.ndarray
    r: np.ndarray
    e: np.ndarray
    u: np.ndarray
    y: np.ndarray
    x: np.ndarray
    reset_instants: np.ndarray
    settings: dict
    coalesced: np.ndarray = field(default_factory=lambda: np.zeros(0))
    w: np.ndarray | None = None

    @property
    def omega(self) -> float | None:
        return self.settings.get('omega')

    @property
    def samples_per_period(self) -> int | None:
        return self.settings.get('samples_per_period')


def _sine(amplitude, omega):
    def wfun(t):
        return amplitude * np.sin(omega * t)
    return wfun


def _step_input(amplitude):
    def wfun(t):
        return np.where(t > 0, amplitude, 0.0) if np.ndim(t) else (
            amplitude if t > 0 else 0.0)
    return wfun


_RK4_LIMIT = 2.5


def _spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M)))) if M.size else 0.0


def _stable_step(M: np.ndarray) -> float:
    """Default step bound: half a time constant of the fastest mode."""
    rho = _spectral_radius(M)
    return 0.5 / rho if rho > 0 else math.inf


def _snap_dt(period: float, dt: float) -> tuple[float, int]:
    if dt > period / 200 * (1 + 1e-12):
        raise BadParams(f"dt={dt:g} exceeds period/200={period / 200:g}")
    ns = int(math.ceil(period / dt - 1e-9))
    return period / ns, ns


def simulate(loop: LoopConfig, freq_hz: float | None = None, *,
             dt: float | None = None, duration: float | None = None,
             periods: int | None = None, input_kind: str = 'sine',
             samples_per_period: int = 2000, zeno_guard: float | None = None,
             x0=None) -> SimulationTrace:
    """Simulate the closed loop driven at ``loop.input_node``.

    For sinusoids ``dt`` is snapped down so a period holds an integer number
    of samples (default 2000 per period).  ``input_kind='step'`` applies a
    step of height ``loop.amplitude`` and needs explicit ``dt`` and
    ``duration``.
    """
    flow = closed_loop_flow(loop)
    col = _NODE_COLUMN[loop.input_node]
    A = loop.amplitude
    settings = {'node': loop.input_node, 'amplitude': A, 'input': input_kind,
                'gamma': loop.gamma, 'k_rc': loop.k_rc}
    if input_kind == 'sine':
        if not freq_hz or freq_hz <= 0:
            raise BadParams("sinusoidal simulation needs a positive frequency")
        omega = 2 * math.pi * freq_hz
        period = 1.0 / freq_hz
        dt, ns = _snap_dt(period, dt if dt else min(period / samples_per_period,
                                                    _stable_step(flow.M)))
        if duration is None:
            duration = (periods or 60) * period
        steps = int(round(duration / dt))
        scalar = _sine(A, omega)
        guard = zeno_guard if zeno_guard is not None else 1e-4 * period
        settings.update(omega=omega, freq_hz=freq_hz, period=period,
                        samples_per_period=ns)
    elif input_kind == 'step':
        if not dt or not duration:
            raise BadParams("step simulation needs dt and duration")
        if dt > _stable_step(flow.M):
            dt = _stable_step(flow.M)
        steps = int(math.ceil(duration / dt))
        scalar = _step_input(A)
        guard = zeno_guard if zeno_guard is not None else 1e-6 * duration
    else:
        raise BadParams(f"unknown input kind {input_kind!r}")
    if dt > _RK4_LIMIT / max(_spectral_radius(flow.M), 1e-300):
        raise BadParams(f"dt={dt:g} outside the RK4 stability region of this loop")
    settings.update(dt=dt, steps=steps, zeno_guard=guard)

    def wfun(t):
        return np.asarray(scalar(np.asarray(t)), dtype=float)[..., None]

    Bw = flow.Bw[:, [col]]
    Ce, De = flow.outputs['e']
    engine = _Engine(flow.M, Bw, wfun, Ce, De[[col]],
                     jump_index=0, gamma=loop.gamma, zeno_guard=guard)
    z0 = np.zeros(flow.nstates) if x0 is None else np.asarray(x0, dtype=float)
    t, W, Z, resets, coalesced = engine.run(z0, dt, steps)
    W3 = np.zeros((W.shape[0], 3))
    W3[:, col] = W[:, 0]
    sig = {name: flow.output(name, Z, W3) for name in ('e', 'u', 'y')}
    return SimulationTrace(dt=dt, t=t, r=W3[:, 0].copy(), e=sig['e'],
                           u=sig['u'], y=sig['y'], x=Z,
                           reset_instants=np.array(resets), settings=settings,
                           coalesced=np.array(coalesced), w=W[:, 0].copy())


def simulate_element(rc: ResetController, omega: float, inputs: dict,
                     trigger: complex | None = None, *, k_rc: float = 1.0,
                     periods: int = 40, samples_per_period: int = 2000,
                     zeno_guard: float | None = None) -> SimulationTrace:
    """Open-loop reset element driven by ``sum_n |E_n| sin(n w t + angle E_n)``.

    ``inputs`` maps harmonic order to complex amplitude (sine convention).
    The reset trigger is ``|E_s| sin(w t + angle E_s)``; it defaults to the
    first harmonic of the input.  The output ``u`` of the trace is the
    parallel-partial output ``k_rc C + (1-k_rc) C_bl``; ``e`` holds the
    input, ``r`` the trigger.
    """
    ss = rc.base
    n = ss.nstates
    if trigger is None:
        trigger = inputs.get(1, 1.0)
    orders = np.array(sorted(inputs), dtype=float)
    amps = np.array([abs(inputs[k]) for k in sorted(inputs)])
    phases = np.array([np.angle(inputs[k]) for k in sorted(inputs)])
    ts_amp, ts_ph = abs(trigger), float(np.angle(trigger))

    def wfun(t):
        t = np.asarray(t, dtype=float)
        e = np.sin(np.multiply.outer(t, orders) * omega + phases) @ amps
        s = ts_amp * np.sin(omega * t + ts_ph)
        return np.stack([e, s], axis=-1)

    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = ss.A
    M[n:, n:] = ss.A
    Bw = np.zeros((2 * n, 2))
    Bw[:n, 0] = ss.B[:, 0]
    Bw[n:, 0] = ss.B[:, 0]
    period = 2 * math.pi / omega
    dt, ns = _snap_dt(period, period / samples_per_period)
    steps = periods * ns
    guard = zeno_guard if zeno_guard is not None else 1e-4 * period
    engine = _Engine(M, Bw, wfun, np.zeros(2 * n), np.array([0.0, 1.0]),
                     jump_index=0, gamma=rc.gamma, zeno_guard=guard)
    t, W, Z, resets, coalesced = engine.run(np.zeros(2 * n), dt, steps)
    C, D = ss.C[0], ss.D[0, 0]
    out = k_rc * (Z[:, :n] @ C) + (1 - k_rc) * (Z[:, n:] @ C) + D * W[:, 0]
    settings = {'omega': omega, 'freq_hz': omega / (2 * math.pi),
                'period': period, 'samples_per_period': ns, 'dt': dt,
                'gamma': rc.gamma, 'k_rc': k_rc, 'zeno_guard': guard,
                'input': 'element'}
    return SimulationTrace(dt=dt, t=t, r=W[:, 1].copy(), e=W[:, 0].copy(),
                           u=out, y=out.copy(), x=Z,
                           reset_instants=np.array(resets), settings=settings,
                           coalesced=np.array(coalesced))


def linear_steady_state(loop: LoopConfig, omega: float, t: float = 0.0) -> np.ndarray:
    """Closed-loop state of the base-linear periodic solution at time ``t``."""
    flow = closed_loop_flow(loop)
    b = flow.Bw[:, _NODE_COLUMN[loop.input_node]]
    n = flow.nstates
    Z = np.linalg.solve(1j * omega * np.eye(n) - flow.M, b.astype(complex))
    return np.imag(loop.amplitude * Z * np.exp(1j * omega * t))


class SteadyStateWindow(NamedTuple):
    start: int
    periods: int
    freq_hz: float
    metric: float
    samples_per_period: int

    @property
    def stop(self) -> int:
        return self.start + self.periods * self.samples_per_period


def steady_state_window(trace: SimulationTrace, min_periods: int = 5,
                        tol: float = 1e-4, signal: str = 'e',
                        position: str = 'earliest') -> SteadyStateWindow:
    """Run of ``min_periods`` whole periods whose consecutive periods
    differ by at most ``tol`` (RMS of the difference relative to the period
    RMS).

    ``position='earliest'`` returns the first qualifying run;
    ``'last'`` requires the final ``min_periods`` periods of the trace to
    qualify, which leaves the least residual transient.
    """
    ns = trace.samples_per_period
    if not ns:
        raise BadParams("steady-state windows need a sinusoidal trace")
    x = getattr(trace, signal)
    total = (len(x) - 1) // ns
    if total < min_periods + 2:
        raise NoSteadyState(f"trace spans {total} periods; need {min_periods + 2}")
    P = x[:total * ns].reshape(total, ns)
    rms = np.sqrt(np.mean(P**2, axis=1))
    diff = np.sqrt(np.mean(np.diff(P, axis=0)**2, axis=1))
    scale = np.maximum(rms[:-1], 1e-300)
    metric = np.where(rms[:-1] > 0, diff / scale, 0.0)
    ok = metric <= tol
    if position == 'last':
        first = total - min_periods
        worst = float(np.max(metric[first - 1:]))
        if not np.all(ok[first - 1:]):
            raise NoSteadyState(f"final {min_periods} periods change by {worst:.3g} > {tol:g}")
        return SteadyStateWindow(first * ns, min_periods,
                                 trace.settings['freq_hz'], worst, ns)
    if position != 'earliest':
        raise BadParams(f"unknown window position {position!r}")
    run = 0
    for k, good in enumerate(ok):
        run = run + 1 if good else 0
        if run >= min_periods - 1:
            first = k - (min_periods - 2)
            # skip the first qualifying period so the window starts on a
            # period that is itself already converged
            start_period = first + 1 if first + 1 + min_periods <= total else first
            worst = float(np.max(metric[start_period:start_period + min_periods - 1])
                          if min_periods > 1 else metric[first])
            return SteadyStateWindow(start_period * ns, min_periods,
                                     trace.settings['freq_hz'], worst, ns)
    raise NoSteadyState(f"no {min_periods}-period window with change <= {tol:g}; "
                        f"final change {metric[-1]:.3g}")


def _window_samples(trace, window, signal='e'):
    x = getattr(trace, signal)
    return trace.t[window.start:window.stop], x[window.start:window.stop]


def harmonic_extract(trace: SimulationTrace, window: SteadyStateWindow, n: int,
                     signal: str = 'e') -> complex:
    """Complex amplitude ``a e^{j phi}`` of ``a sin(n w t + phi)`` over the
    window (single-bin DFT on whole periods)."""
    omega = trace.settings['omega']
    if n * trace.settings['freq_hz'] >= 1.0 / (2 * trace.dt):
        raise Aliased(f"harmonic {n} at or above Nyquist")
    t, x = _window_samples(trace, window, signal)
    N = len(x)
    b = 2.0 / N * np.dot(x, np.sin(n * omega * t))
    c = 2.0 / N * np.dot(x, np.cos(n * omega * t))
    return complex(b, c)


class ResetStats(NamedTuple):
    resets_per_period: Fraction
    regularity: float
    identity_jump: bool
    count: int


def reset_statistics(trace: SimulationTrace, window: SteadyStateWindow) -> ResetStats:
    """Resets per steady-state period and the worst deviation of the
    inter-reset gap from half a period (as a fraction of the period)."""
    t0 = trace.t[window.start]
    t1 = trace.t[window.stop]
    period = trace.settings['period']
    inst = trace.reset_instants
    inside = inst[(inst >= t0) & (inst < t1)]
    rate = Fraction(len(inside), window.periods)
    # include one reset on each side so every gap touching the window counts
    lo = np.searchsorted(inst, t0)
    hi = np.searchsorted(inst, t1)
    span = inst[max(lo - 1, 0):min(hi + 1, len(inst))]
    gaps = np.diff(span)
    regularity = float(np.max(np.abs(gaps - period / 2)) / period) if gaps.size else math.inf
    return ResetStats(rate, regularity, trace.settings.get('gamma') == 1.0,
                      len(inside))


class StepMetrics(NamedTuple):
    overshoot: float
    settling_time: float
    final_value: float


def step_metrics(trace: SimulationTrace, band: float = 0.02) -> StepMetrics:
    """Percent overshoot and settling time into a +-2% band."""
    y = trace.y
    target = trace.settings['amplitude']
    tail = y[-max(len(y) // 50, 2):]
    final = float(np.mean(tail))
    if abs(final - target) > band * abs(target) or np.ptp(tail) > band * abs(target):
        raise NotSettled(f"output tail {final:.4g} not within {band:.0%} of {target:g}")
    overshoot = max(0.0, (float(np.max(y)) - final) / abs(final) * 100.0)
    outside = np.flatnonzero(np.abs(y - final) > band * abs(final))
    settling = float(trace.t[outside[-1] + 1]) if outside.size else 0.0
    return StepMetrics(overshoot, settling, final)


def write_trace_csv(trace: SimulationTrace, path, header_comment: str | None = None) -> None:
    """CSV with columns t, r, e, u, y, reset_flag (17 significant digits).

    ``reset_flag`` marks the first sample at or after each reset instant.
    """
    flags = np.zeros(len(trace.t), dtype=int)
    if trace.reset_instants.size:
        idx = np.searchsorted(trace.t, trace.reset_instants, side='left')
        flags[idx[idx < len(flags)]] = 1
    with open(path, 'w', newline='') as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(['t', 'r', 'e', 'u', 'y', 'reset_flag'])
        for row in zip(trace.t, trace.r, trace.e, trace.u, trace.y, flags):
            writer.writerow([f"{v:.17g}" for v in row[:5]] + [row[5]])
