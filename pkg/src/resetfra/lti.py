"""Polynomials, rational transfer functions and state-space models.

All objects are immutable; every function here is pure.  Polynomials are
stored as numpy arrays of real coefficients in descending powers of ``s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import (ConfigError, DegenerateLoop, DivergentLimit,
                     ImproperSystem, PoleHit, ResonantPole)

__all__ = ['Polynomial', 'TransferFunction', 'StateSpace', 'tf_eval',
           'tf_to_ss', 'ss_to_tf', 'mat_exp', 'ss_freq_response',
           'asymptotic_limit', 'compose', 'series', 'parallel', 'feedback',
           'check_dynamic_range']

POLE_FLOOR = 1e-300
COND_LIMIT = 1e14
DYNAMIC_RANGE_LIMIT = 1e12


def _trim(coeffs) -> np.ndarray:
    c = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if c.ndim != 1:
        raise ConfigError("polynomial coefficients must be a flat sequence")
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return np.zeros(1)
    return c[nz[0]:].copy()


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Real polynomial, coefficients in descending powers of s."""

    coefficients: np.ndarray

    def __init__(self, coefficients: Iterable[float]):
        c = _trim(list(coefficients) if not isinstance(coefficients, np.ndarray)
                  else coefficients)
        c.setflags(write=False)
        object.__setattr__(self, 'coefficients', c)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coefficients)

    @property
    def leading(self) -> float:
        return float(self.coefficients[0])

    def __call__(self, s):
        # Horner evaluation
        return np.polyval(self.coefficients, s)

    def __add__(self, other: Polynomial) -> Polynomial:
        return Polynomial(np.polyadd(self.coefficients, other.coefficients))

    def __sub__(self, other: Polynomial) -> Polynomial:
        return Polynomial(np.polysub(self.coefficients, other.coefficients))

    def __mul__(self, other) -> Polynomial:
        if isinstance(other, Polynomial):
            return Polynomial(np.convolve(self.coefficients, other.coefficients))
        return Polynomial(self.coefficients * float(other))

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return (self.coefficients.shape == other.coefficients.shape
                and bool(np.all(self.coefficients == other.coefficients)))

    def __hash__(self):
        return hash(self.coefficients.tobytes())

    def __repr__(self) -> str:
        return f"Polynomial({self.coefficients.tolist()})"


class TransferFunction:
    """SISO rational function num(s)/den(s) in monic normal form.

    No pole/zero cancellation happens on construction; use :meth:`reduce`
    explicitly.
    """

    __slots__ = ('num', 'den')

    def __init__(self, num, den=(1.0,)):
        num = num if isinstance(num, Polynomial) else Polynomial(num)
        den = den if isinstance(den, Polynomial) else Polynomial(den)
        if den.is_zero:
            raise ConfigError("transfer function denominator is identically zero")
        lead = den.leading
        object.__setattr__(self, 'num', Polynomial(num.coefficients / lead))
        object.__setattr__(self, 'den', Polynomial(den.coefficients / lead))

    def __setattr__(self, key, value):
        raise AttributeError("TransferFunction is immutable")

    @classmethod
    def gain(cls, k: float) -> TransferFunction:
        return cls([k], [1.0])

    @property
    def relative_degree(self) -> int:
        if self.num.is_zero:
            return np.iinfo(np.int32).max
        return self.den.degree - self.num.degree

    @property
    def is_proper(self) -> bool:
        return self.num.is_zero or self.den.degree >= self.num.degree

    @property
    def is_strictly_proper(self) -> bool:
        return self.num.is_zero or self.den.degree > self.num.degree

    def __call__(self, s):
        return self.num(s) / self.den(s)

    def freqresp(self, omega):
        """Complex response at ``s = j*omega`` (vectorised).

        Raises :class:`PoleHit` when any point lands exactly on a pole.
        """
        s = 1j * np.asarray(omega, dtype=float)
        d = self.den(s)
        if np.any(np.abs(d) < POLE_FLOOR):
            raise PoleHit(f"evaluation at a pole on the imaginary axis: omega={omega}")
        return self.num(s) / d

    def __mul__(self, other) -> TransferFunction:
        other = _as_tf(other)
        return TransferFunction(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def __add__(self, other) -> TransferFunction:
        other = _as_tf(other)
        return TransferFunction(self.num * other.den + other.num * self.den,
                                self.den * other.den)

    __radd__ = __add__

    def __neg__(self) -> TransferFunction:
        return TransferFunction(self.num * -1.0, self.den)

    def __sub__(self, other) -> TransferFunction:
        return self + (-_as_tf(other))

    def __eq__(self, other) -> bool:
        if not isinstance(other, TransferFunction):
            return NotImplemented
        return self.num == other.num and self.den == other.den

    def __hash__(self):
        return hash((self.num, self.den))

    def __repr__(self) -> str:
        return (f"TransferFunction({self.num.coefficients.tolist()}, "
                f"{self.den.coefficients.tolist()})")

    def reduce(self, tol: float = 1e-9) -> TransferFunction:
        """Cancel common roots of numerator and denominator.

        Roots are matched when their distance is below ``tol`` relative to
        ``max(1, |root|)``.
        """
        if self.num.is_zero:
            return TransferFunction([0.0], [1.0])
        zeros = list(np.roots(self.num.coefficients))
        poles = list(np.roots(self.den.coefficients))
        kept_zeros = []
        for z in zeros:
            match = None
            for i, p in enumerate(poles):
                if abs(z - p) <= tol * max(1.0, abs(p)):
                    match = i
                    break
            if match is None:
                kept_zeros.append(z)
            else:
                poles.pop(match)
        gain = self.num.leading
        num = np.real_if_close(np.poly(kept_zeros)) if kept_zeros else np.ones(1)
        den = np.real_if_close(np.poly(poles)) if poles else np.ones(1)
        return TransferFunction(np.real(num) * gain, np.real(den))


def _as_tf(x) -> TransferFunction:
    if isinstance(x, TransferFunction):
        return x
    return TransferFunction.gain(float(x))


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Real state-space realization (A, B, C, D)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    nstates: int = field(init=False)

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        p, m = D.shape
        A = np.asarray(self.A, dtype=float)
        n = int(round(np.sqrt(A.size)))
        if n * n != A.size:
            raise ConfigError(f"A must be square, got {A.size} entries")
        A = A.reshape(n, n)
        B = np.asarray(self.B, dtype=float).reshape(n, m)
        C = np.asarray(self.C, dtype=float).reshape(p, n)
        for name, mat in zip('ABCD', (A, B, C, D)):
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)
        object.__setattr__(self, 'nstates', n)

    @property
    def shape(self) -> tuple[int, int]:
        return self.D.shape


def tf_eval(tf: TransferFunction, s: complex) -> complex:
    """Evaluate ``tf`` at a single complex point."""
    d = tf.den(s)
    if abs(d) < POLE_FLOOR:
        raise PoleHit(f"evaluation at a pole: s={s}")
    return complex(tf.num(s) / d)


def tf_to_ss(tf: TransferFunction) -> StateSpace:
    """Controllable canonical realization of a proper transfer function."""
    if not tf.is_proper:
        raise ImproperSystem(f"numerator degree {tf.num.degree} exceeds "
                             f"denominator degree {tf.den.degree}")
    a = tf.den.coefficients
    n = len(a) - 1
    b = np.zeros(n + 1)
    nc = tf.num.coefficients
    b[n + 1 - len(nc):] = nc
    d = b[0]
    if n == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)),
                          np.zeros((1, 0)), [[d]])
    A = np.zeros((n, n))
    A[0, :] = -a[1:]
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = (b[1:] - d * a[1:]).reshape(1, n)
    return StateSpace(A, B, C, [[d]])


def _frac_matrix(M) -> list[list[Fraction]]:
    return [[Fraction(float(v)) for v in row] for row in np.atleast_2d(M)]


def ss_to_tf(ss: StateSpace) -> TransferFunction:
    """Exact SISO conversion via the Faddeev-LeVerrier recursion.

    Arithmetic is carried out on exact rationals of the float entries, so
    simple realizations map to their rational forms coefficient for
    coefficient.
    """
    if ss.shape != (1, 1):
        raise ConfigError("ss_to_tf supports SISO models only")
    n = ss.nstates
    d = Fraction(float(ss.D[0, 0]))
    if n == 0:
        return TransferFunction([float(d)], [1.0])
    A = _frac_matrix(ss.A)
    Bv = [Fraction(float(v)) for v in ss.B[:, 0]]
    Cv = [Fraction(float(v)) for v in ss.C[0, :]]

    def matmul(X, Y):
        return [[sum(X[i][k] * Y[k][j] for k in range(n)) for j in range(n)]
                for i in range(n)]

    eye = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    M = eye
    char = [Fraction(1)]
    adj = []
    for k in range(1, n + 1):
        adj.append(M)
        AM = matmul(A, M)
        c = -sum(AM[i][i] for i in range(n)) / k
        char.append(c)
        M = [[AM[i][j] + c * eye[i][j] for j in range(n)] for i in range(n)]
    num = []
    for Mk in adj:
        MB = [sum(Mk[i][j] * Bv[j] for j in range(n)) for i in range(n)]
        num.append(sum(Cv[i] * MB[i] for i in range(n)))
    # C adj(sI-A) B has degree n-1; add D * det(sI-A)
    full = [d * char[0]] + [num[i] + d * char[i + 1] for i in range(n)]
    return TransferFunction([float(v) for v in full], [float(v) for v in char])


def mat_exp(A, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``exp(A t)`` (scaling and squaring, Pade 13)."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.zeros_like(A)
    return scipy.linalg.expm(A * t)


def ss_freq_response(ss: StateSpace, omega: float) -> np.ndarray:
    """``C (j omega I - A)^-1 B + D`` as a p-by-m complex matrix."""
    n = ss.nstates
    if n == 0:
        return ss.D.astype(complex)
    M = 1j * omega * np.eye(n) - ss.A
    if np.linalg.cond(M) > COND_LIMIT:
        raise ResonantPole(f"j*omega is (numerically) an eigenvalue of A at "
                           f"omega={omega}")
    return ss.C @ np.linalg.solve(M, ss.B.astype(complex)) + ss.D


def asymptotic_limit(tf: TransferFunction, k: int) -> float:
    """``lim_{s->inf} s**k * tf(s)``."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if tf.num.is_zero:
        return 0.0
    rel = tf.relative_degree
    if rel > k:
        return 0.0
    if rel == k:
        return tf.num.leading / tf.den.leading
    raise DivergentLimit(f"relative degree {rel} < {k}: limit diverges")


def series(*tfs) -> TransferFunction:
    out = TransferFunction.gain(1.0)
    for tf in tfs:
        out = out * tf
    return out


def parallel(*tfs) -> TransferFunction:
    out = TransferFunction.gain(0.0)
    for tf in tfs:
        out = out + tf
    return out


def feedback(G: TransferFunction) -> TransferFunction:
    """Unity negative feedback ``G / (1 + G)``."""
    G = _as_tf(G)
    den = G.den + G.num
    if den.is_zero:
        raise DegenerateLoop("1 + G is identically zero")
    return TransferFunction(G.num, den)


def compose(tfs: Sequence, mode: str) -> TransferFunction:
    """Combine transfer functions in ``series``, ``parallel`` or
    ``negative-feedback`` (the latter takes a single element)."""
    if mode == 'series':
        return series(*tfs)
    if mode == 'parallel':
        return parallel(*tfs)
    if mode in ('negative-feedback', 'feedback'):
        if len(tfs) != 1:
            raise ValueError("negative-feedback takes exactly one element")
        return feedback(tfs[0])
    raise ValueError(f"unknown composition mode {mode!r}")


def check_dynamic_range(tf: TransferFunction, name: str = 'model') -> None:
    """Reject coefficient sets whose magnitude spread exceeds 1e12."""
    for poly in (tf.num, tf.den):
        mags = np.abs(poly.coefficients[poly.coefficients != 0])
        if mags.size and mags.max() / mags.min() > DYNAMIC_RANGE_LIMIT:
            raise ConfigError(f"{name}: coefficient dynamic range "
                              f"{mags.max() / mags.min():.3g} exceeds 1e12")
