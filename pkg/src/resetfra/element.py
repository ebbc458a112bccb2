"""Reset controller model, element catalogue and closed-loop description.

The single reset state is always index 0 of the controller realization.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import BadParams, ConfigError, DegenerateLoop
from .lti import (StateSpace, TransferFunction, mat_exp, ss_to_tf,
                  check_dynamic_range)

__all__ = ['ResetController', 'LoopConfig', 'GangOfFour', 'StabilityReport',
           'make_element', 'base_linear', 'check_open_loop_stability',
           'gang_of_four', 'cglp_lead', 'INPUT_NODES']

INPUT_NODES = ('reference', 'disturbance', 'noise')


@dataclass(frozen=True)
class ResetController:
    """LTI controller whose state 0 is scaled by ``gamma`` at every reset."""

    base: StateSpace
    gamma: float = 0.0
    kind: str = 'custom'

    def __post_init__(self):
        if self.base.shape != (1, 1):
            raise ConfigError("reset controller must be SISO")
        if self.base.nstates < 1:
            raise ConfigError("reset controller needs at least one state")
        if not np.isfinite(self.gamma):
            raise BadParams("gamma must be finite")

    @property
    def n_c(self) -> int:
        return self.base.nstates

    @property
    def n_r(self) -> int:
        return 1

    @property
    def n_l(self) -> int:
        return self.n_c - 1

    @property
    def reset_matrix(self) -> np.ndarray:
        """``diag(gamma, 1, ..., 1)``."""
        Ar = np.eye(self.n_c)
        Ar[0, 0] = self.gamma
        return Ar

    @property
    def is_linear(self) -> bool:
        return self.gamma == 1.0

    def with_gamma(self, gamma: float) -> ResetController:
        return replace(self, gamma=float(gamma))


def _positive(params: dict, name: str) -> float:
    try:
        value = float(params[name])
    except KeyError:
        raise BadParams(f"missing parameter {name!r}") from None
    if not value > 0:
        raise BadParams(f"{name} must be positive, got {value}")
    return value


def make_element(kind: str, params: dict | None = None,
                 gamma: float = 0.0) -> ResetController:
    """Build a catalogue reset element.

    ``clegg``: 1/s.  ``fore``: omega_r/(s+omega_r).  ``pci``: (s+omega_i)/s
    with reset on the integrator.  ``cglp``: the FORE reset stage of a CgLp;
    its lead partner comes from :func:`cglp_lead` and belongs in the loop's
    ``c2``.  ``custom``: explicit ``A, B, C, D`` with the reset state first.

    An optional gain ``k`` scales B and D so the reset state always equals
    the integrating/filtering part of the output.
    """
    params = dict(params or {})
    k = float(params.get('k', 1.0))
    if kind == 'clegg':
        ss = StateSpace([[0.0]], [[k]], [[1.0]], [[0.0]])
    elif kind in ('fore', 'cglp'):
        wr = _positive(params, 'omega_r')
        if kind == 'cglp':
            _positive(params, 'omega_c')
        ss = StateSpace([[-wr]], [[k * wr]], [[1.0]], [[0.0]])
    elif kind == 'pci':
        wi = _positive(params, 'omega_i')
        ss = StateSpace([[0.0]], [[k * wi]], [[1.0]], [[k]])
    elif kind == 'custom':
        try:
            ss = StateSpace(params['A'], params['B'], params['C'], params['D'])
        except KeyError as exc:
            raise BadParams(f"custom element missing matrix {exc}") from None
    else:
        raise BadParams(f"unknown element kind {kind!r}")
    return ResetController(ss, float(gamma), kind)


def cglp_lead(omega_r: float, omega_c: float) -> TransferFunction:
    """Linear lead paired with a CgLp reset stage.

    Cancels the FORE base-linear pole at ``omega_r`` and rolls off a decade
    above the crossover ``omega_c``.
    """
    if not (omega_r > 0 and omega_c > 0):
        raise BadParams("cglp corner frequencies must be positive")
    wf = 10.0 * omega_c
    return TransferFunction([1.0 / omega_r, 1.0], [1.0 / wf, 1.0])


def base_linear(rc: ResetController) -> TransferFunction:
    """Rational form of the base-linear controller ``C_R (sI-A_R)^-1 B_R + D_R``."""
    return ss_to_tf(rc.base)


class StabilityReport(NamedTuple):
    stable: bool
    max_radius: float
    worst_delta: float


def check_open_loop_stability(rc: ResetController,
                              delta_grid=None) -> StabilityReport:
    """Spectral-radius test of ``A_rho exp(A_R delta)`` over a grid of
    reset intervals, plus the ``delta -> 0`` limit ``rho(A_rho)``.

    Default grid: 200 log-spaced intervals in [1e-4, 1e2] s.
    """
    if delta_grid is None:
        delta_grid = np.logspace(-4, 2, 200)
    delta_grid = np.asarray(delta_grid, dtype=float)
    if delta_grid.size == 0 or np.any(delta_grid <= 0):
        raise BadParams("delta grid must be nonempty and positive")
    Arho = rc.reset_matrix
    worst = float(np.max(np.abs(np.linalg.eigvals(Arho))))
    worst_delta = 0.0
    for delta in delta_grid:
        rho = float(np.max(np.abs(np.linalg.eigvals(
            Arho @ mat_exp(rc.base.A, delta)))))
        if rho > worst:
            worst, worst_delta = rho, float(delta)
    return StabilityReport(worst < 1.0, worst, worst_delta)


@dataclass(frozen=True)
class LoopConfig:
    """Parallel-partial reset loop: e -> [k_rc C + (1-k_rc) C_bl] -> C2 -> P.

    ``input_node`` picks where the sinusoid (or step) enters: the reference,
    a disturbance added at the plant input, or noise added to the measured
    output.
    """

    controller: ResetController
    plant: TransferFunction
    c2: TransferFunction = field(default_factory=lambda: TransferFunction.gain(1.0))
    k_rc: float = 1.0
    input_node: str = 'reference'
    amplitude: float = 1.0
    name: str = ''

    def __post_init__(self):
        if not 0.0 <= self.k_rc <= 1.0:
            raise BadParams(f"k_rc must lie in [0, 1], got {self.k_rc}")
        if self.input_node not in INPUT_NODES:
            raise BadParams(f"input_node must be one of {INPUT_NODES}")
        if not self.amplitude > 0:
            raise BadParams("amplitude must be positive")
        for label, tf in (('plant', self.plant), ('c2', self.c2)):
            if not tf.is_proper:
                raise BadParams(f"{label} must be proper")
            check_dynamic_range(tf, label)
        cbl = base_linear(self.controller)
        if not (cbl * self.c2 * self.plant).is_strictly_proper:
            raise BadParams("base-linear loop C_bl*C2*P must be strictly proper")

    @property
    def gamma(self) -> float:
        return self.controller.gamma

    @property
    def cbl(self) -> TransferFunction:
        return base_linear(self.controller)

    def replace(self, **changes) -> LoopConfig:
        if 'gamma' in changes:
            changes['controller'] = self.controller.with_gamma(changes.pop('gamma'))
        return replace(self, **changes)

    def loop_bl(self) -> TransferFunction:
        return self.cbl * self.c2 * self.plant

    def cbl_at(self, omega):
        return self.cbl.freqresp(omega)

    def l_bl_at(self, omega):
        return (self.cbl.freqresp(omega) * self.c2.freqresp(omega)
                * self.plant.freqresp(omega))

    def reset_state_gain_at(self, omega):
        """Base-linear response of the reset state to e: first entry of
        ``(j omega I - A_R)^-1 B_R``."""
        ss = self.controller.base
        n = ss.nstates
        om = np.atleast_1d(np.asarray(omega, dtype=float))
        out = np.empty(om.shape, dtype=complex)
        for i, w in enumerate(om):
            out[i] = np.linalg.solve(1j * w * np.eye(n) - ss.A,
                                     ss.B[:, 0].astype(complex))[0]
        return out if np.ndim(omega) else out[0]


class GangOfFour(NamedTuple):
    s_bl: complex
    t_bl: complex
    cs_bl: complex
    ps_bl: complex


def gang_of_four(loop: LoopConfig, omega: float) -> GangOfFour:
    """Base-linear closed-loop functions at ``j omega``.

    ``S = 1/(1+L)``, ``T = L/(1+L)``, ``CS = C_bl C2/(1+L)``,
    ``PS = P/(1+L)`` with ``L = C_bl C2 P``.
    """
    if not omega > 0:
        raise BadParams("omega must be positive")
    c = complex(loop.cbl.freqresp(omega)) * complex(loop.c2.freqresp(omega))
    p = complex(loop.plant.freqresp(omega))
    one_plus = 1.0 + c * p
    if abs(one_plus) < 1e-12:
        raise DegenerateLoop(f"|1 + L_bl| vanishes at omega={omega}")
    s = 1.0 / one_plus
    return GangOfFour(s, 1.0 - s, c * s, p * s)
