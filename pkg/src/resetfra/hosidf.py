"""Higher-order sinusoidal-input describing functions of reset elements."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .element import LoopConfig, ResetController
from .errors import AnalysisError, BadParams, SingularKernel
from .lti import mat_exp

__all__ = ['HosidfKernel', 'HarmonicSet', 'theta_d', 'hosidf_rc',
           'hosidf_pp', 'nonlinear_part', 'open_loop_harmonics',
           'DEFAULT_NH', 'odd_orders']

DEFAULT_NH = 31
_COND_LIMIT = 1e14


def odd_orders(n_h: int) -> list[int]:
    """Odd harmonic orders 1, 3, ..., n_h."""
    if n_h < 1 or n_h % 2 == 0:
        raise BadParams(f"harmonic truncation must be a positive odd integer, got {n_h}")
    return list(range(1, n_h + 1, 2))


@dataclass(frozen=True)
class HosidfKernel:
    omega: float
    lambda_m: np.ndarray
    delta_m: np.ndarray
    delta_r: np.ndarray
    gamma_r: np.ndarray
    theta_d: np.ndarray


@dataclass(frozen=True)
class HarmonicSet:
    """Complex value per odd harmonic order at one fundamental frequency."""

    omega: float
    values: dict[int, complex] = field(default_factory=dict)
    truncation: int = DEFAULT_NH

    def __getitem__(self, n: int) -> complex:
        if n % 2 == 0:
            return 0j
        return self.values.get(n, 0j)

    def orders(self) -> list[int]:
        return sorted(self.values)


def _checked_inv(M: np.ndarray, what: str, omega: float) -> np.ndarray:
    if np.linalg.cond(M) > _COND_LIMIT:
        raise SingularKernel(f"{what} singular at omega={omega:.6g} rad/s")
    return np.linalg.inv(M)


def theta_d(rc: ResetController, omega: float) -> HosidfKernel:
    """Describing-function kernel of a reset controller at ``omega``."""
    if not omega > 0:
        raise BadParams("omega must be positive")
    A = rc.base.A
    n = rc.n_c
    eye = np.eye(n)
    Arho = rc.reset_matrix
    E = mat_exp(A, np.pi / omega)
    lam = omega**2 * eye + A @ A
    delta = eye + E
    delta_r = eye + Arho @ E
    lam_inv = _checked_inv(lam, "Lambda", omega)
    gamma_r = _checked_inv(delta_r, "Delta_r", omega) @ Arho @ delta @ lam_inv
    theta = (-2.0 * omega**2 / np.pi) * delta @ (gamma_r - lam_inv)
    return HosidfKernel(omega, lam, delta, delta_r, gamma_r, theta)


def _resolvent(rc: ResetController, s: complex, rhs: np.ndarray) -> np.ndarray:
    n = rc.n_c
    M = s * np.eye(n) - rc.base.A
    if np.linalg.cond(M) > _COND_LIMIT:
        raise SingularKernel(f"resolvent singular at s={s}")
    return np.linalg.solve(M, rhs)


def nonlinear_part(rc: ResetController, omega: float, n: int,
                   kernel: HosidfKernel | None = None) -> complex:
    """``C_R (j n omega I - A_R)^-1 j Theta_D(omega) B_R`` for odd ``n``.

    For ``n = 1`` this is ``H_1 - C_bl``; for odd ``n > 1`` it is ``H_n``.
    Even orders are exactly zero.
    """
    if n % 2 == 0:
        return 0j
    if kernel is None:
        kernel = theta_d(rc, omega)
    b = 1j * kernel.theta_d @ rc.base.B[:, 0]
    x = _resolvent(rc, 1j * n * omega, b.astype(complex))
    return complex(rc.base.C[0] @ x)


def hosidf_rc(rc: ResetController, omega: float, n: int,
              kernel: HosidfKernel | None = None) -> complex:
    """n-th HOSIDF ``H_n(omega)`` of a reset controller."""
    if n < 1:
        raise BadParams("harmonic order must be positive")
    if n % 2 == 0:
        return 0j
    if kernel is None:
        kernel = theta_d(rc, omega)
    if n == 1:
        b = ((np.eye(rc.n_c) + 1j * kernel.theta_d) @ rc.base.B[:, 0])
        x = _resolvent(rc, 1j * omega, b.astype(complex))
        return complex(rc.base.C[0] @ x + rc.base.D[0, 0])
    return nonlinear_part(rc, omega, n, kernel)


def _base_linear_at(rc: ResetController, omega: float) -> complex:
    x = _resolvent(rc, 1j * omega, rc.base.B[:, 0].astype(complex))
    return complex(rc.base.C[0] @ x + rc.base.D[0, 0])


def hosidf_pp(rc: ResetController, k_rc: float, omega: float, n: int,
              kernel: HosidfKernel | None = None) -> complex:
    """n-th HOSIDF of the parallel-partial element
    ``k_rc * C + (1 - k_rc) * C_bl``."""
    if not 0.0 <= k_rc <= 1.0:
        raise BadParams("k_rc must lie in [0, 1]")
    if n < 1:
        raise BadParams("harmonic order must be positive")
    if n % 2 == 0:
        return 0j
    if k_rc == 0.0:
        return _base_linear_at(rc, omega) if n == 1 else 0j
    cnl = nonlinear_part(rc, omega, n, kernel)
    if n == 1:
        return _base_linear_at(rc, omega) + k_rc * cnl
    return k_rc * cnl


def open_loop_harmonics(loop: LoopConfig, omega: float,
                        n_h: int = DEFAULT_NH) -> HarmonicSet:
    """Open-loop harmonic responses ``L_n(omega)`` for odd ``n <= n_h``.

    ``L_1 = H_p^1 C2 P`` and ``L_n = k_rc C_nl(n omega) C2(j n omega)
    P(j n omega)`` for odd ``n > 1``.
    """
    rc = loop.controller
    orders = odd_orders(n_h)
    kernel = theta_d(rc, omega)
    values = {}
    for n in orders:
        w = n * omega
        try:
            tail = complex(loop.c2.freqresp(w)) * complex(loop.plant.freqresp(w))
            values[n] = hosidf_pp(rc, loop.k_rc, omega, n, kernel) * tail
        except AnalysisError as exc:
            raise type(exc)(f"harmonic n={n}, omega={omega:.6g}: {exc}") from exc
    return HarmonicSet(omega, values, n_h)
