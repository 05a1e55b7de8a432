"""SISO LTI primitives: polynomials, transfer functions, state-space
realization, fixed-step RK4 and frequency/stability analysis.

Polynomial coefficients are stored in ascending power order throughout,
``coeffs[k]`` multiplies ``s**k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# a sum coefficient this small relative to its operands counts as cancelled
_TRIM_RTOL = 1e-14


class Polynomial:
    """Real polynomial with ascending-order coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Sequence[float] | float):
        c = np.atleast_1d(np.asarray(coeffs, dtype=float)).copy()
        if c.ndim != 1 or c.size == 0:
            raise ValueError("polynomial needs a nonempty 1-D coefficient sequence")
        if not np.all(np.isfinite(c)):
            raise ValueError("polynomial coefficients must be finite")
        nz = np.nonzero(c)[0]
        self.coeffs = c[: nz[-1] + 1] if nz.size else c[:1]

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    @property
    def leading(self) -> float:
        return float(self.coeffs[-1])

    def is_zero(self) -> bool:
        return self.coeffs.size == 1 and self.coeffs[0] == 0.0

    def __call__(self, s):
        # Horner on the descending view
        return np.polyval(self.coeffs[::-1], s)

    def __mul__(self, other: Polynomial | float) -> Polynomial:
        if isinstance(other, Polynomial):
            return Polynomial(np.convolve(self.coeffs, other.coeffs))
        return Polynomial(self.coeffs * float(other))

    __rmul__ = __mul__

    def __add__(self, other: Polynomial | float) -> Polynomial:
        other = other if isinstance(other, Polynomial) else Polynomial([float(other)])
        n = max(self.coeffs.size, other.coeffs.size)
        out = np.zeros(n)
        out[: self.coeffs.size] += self.coeffs
        out[: other.coeffs.size] += other.coeffs
        # coefficients that cancelled to rounding noise become exact zeros
        size = np.zeros(n)
        size[: self.coeffs.size] += np.abs(self.coeffs)
        size[: other.coeffs.size] += np.abs(other.coeffs)
        out[np.abs(out) <= _TRIM_RTOL * size] = 0.0
        return Polynomial(out)

    __radd__ = __add__

    def __neg__(self) -> Polynomial:
        return Polynomial(-self.coeffs)

    def __sub__(self, other: Polynomial | float) -> Polynomial:
        return self + (-other if isinstance(other, Polynomial) else -float(other))

    def __truediv__(self, k: float) -> Polynomial:
        return Polynomial(self.coeffs / float(k))

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and np.array_equal(self.coeffs, other.coeffs)

    def __repr__(self) -> str:
        return f"Polynomial({self.coeffs.tolist()})"

    def roots(self) -> np.ndarray:
        if self.degree < 1:
            return np.empty(0, dtype=complex)
        # np.roots builds the companion matrix and takes its eigenvalues
        return np.roots(self.coeffs[::-1]).astype(complex)

    def monic(self) -> Polynomial:
        return Polynomial(self.coeffs / self.leading)

    @classmethod
    def from_roots(cls, roots: Sequence[complex], gain: float = 1.0) -> Polynomial:
        c = np.poly(np.asarray(roots))[::-1]
        return cls(np.real_if_close(c, tol=1e6).real * gain)


def _poly(p) -> Polynomial:
    return p if isinstance(p, Polynomial) else Polynomial(p)


class TransferFunction:
    """Rational SISO transfer function ``num(s) / den(s)``.

    The denominator is normalized to a unit leading coefficient on
    construction; :meth:`time_constant_form` gives the ``den(0) = 1`` view
    used when printing plant models.
    """

    __slots__ = ("num", "den")

    def __init__(self, num, den=1.0):
        num, den = _poly(num), _poly(den)
        if den.is_zero():
            raise ZeroDivisionError("transfer function denominator is identically zero")
        lead = den.leading
        self.num = num / lead
        self.den = den / lead

    @classmethod
    def gain(cls, k: float) -> TransferFunction:
        return cls([k], [1.0])

    @classmethod
    def first_order(cls, k: float, tau: float) -> TransferFunction:
        """``k / (1 + s*tau)``."""
        return cls([k], [1.0, tau])

    @property
    def relative_degree(self) -> int:
        if self.num.is_zero():
            return self.den.degree
        return self.den.degree - self.num.degree

    @property
    def order(self) -> int:
        return self.den.degree

    def is_proper(self) -> bool:
        return self.relative_degree >= 0

    def is_biproper(self) -> bool:
        return not self.num.is_zero() and self.relative_degree == 0

    def __call__(self, s):
        return self.num(s) / self.den(s)

    def dc_gain(self) -> float:
        return float(self(0.0))

    def time_constant_form(self) -> tuple[np.ndarray, np.ndarray]:
        """Coefficients scaled so the denominator's constant term is 1."""
        d0 = self.den.coeffs[0]
        if d0 == 0:
            raise ValueError("denominator has a root at s = 0")
        return self.num.coeffs / d0, self.den.coeffs / d0

    def inverse(self) -> TransferFunction:
        if self.num.is_zero():
            raise ZeroDivisionError("cannot invert a zero transfer function")
        return TransferFunction(self.den, self.num)

    def __mul__(self, other) -> TransferFunction:
        if isinstance(other, TransferFunction):
            return compose_series(self, other)
        return TransferFunction(self.num * float(other), self.den)

    __rmul__ = __mul__

    def __add__(self, other) -> TransferFunction:
        other = other if isinstance(other, TransferFunction) else TransferFunction.gain(float(other))
        return TransferFunction(self.num * other.den + other.num * self.den, self.den * other.den)

    def __neg__(self) -> TransferFunction:
        return TransferFunction(-self.num, self.den)

    def __repr__(self) -> str:
        return f"TransferFunction(num={self.num.coeffs.tolist()}, den={self.den.coeffs.tolist()})"

    def poles(self) -> np.ndarray:
        return poles(self)

    def zeros(self) -> np.ndarray:
        return self.num.roots()


@dataclass
class StateSpaceModel:
    """SISO realization ``x' = Ax + Bu, y = Cx + Du`` carrying its own state."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    state: np.ndarray = field(default=None)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = 0 if self.A.size == 0 else self.A.shape[0]
        self.A = self.A.reshape(n, n)
        self.B = np.asarray(self.B, dtype=float).reshape(n, 1)
        self.C = np.asarray(self.C, dtype=float).reshape(1, n)
        self.D = np.asarray(self.D, dtype=float).reshape(1, 1)
        if self.state is None:
            self.state = np.zeros(n)
        else:
            self.state = np.asarray(self.state, dtype=float).reshape(n)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    def output(self, u: float) -> float:
        return float(self.C[0] @ self.state + self.D[0, 0] * u)

    def reset(self) -> None:
        self.state = np.zeros(self.n_states)

    def copy(self) -> StateSpaceModel:
        return StateSpaceModel(self.A.copy(), self.B.copy(), self.C.copy(), self.D.copy(), self.state.copy())

    def evaluate(self, s: complex) -> complex:
        """Transfer function of the realization, ``C (sI - A)^-1 B + D``."""
        if self.n_states == 0:
            return complex(self.D[0, 0])
        x = np.linalg.solve(s * np.eye(self.n_states) - self.A, self.B[:, 0].astype(complex))
        return complex(self.C[0] @ x + self.D[0, 0])


@dataclass(frozen=True)
class FrequencyPoint:
    omega: float
    gain_db: float
    phase_deg: float


def compose_series(a: TransferFunction, b: TransferFunction) -> TransferFunction:
    """Cascade ``a`` then ``b``; polynomial products with no cancellation."""
    return TransferFunction(a.num * b.num, a.den * b.den)


def series(*tfs: TransferFunction) -> TransferFunction:
    out = TransferFunction.gain(1.0)
    for tf in tfs:
        out = compose_series(out, tf)
    return out


def compose_feedback(forward: TransferFunction, feedback: TransferFunction) -> TransferFunction:
    """Negative feedback closure ``forward / (1 + forward * feedback)``."""
    num = forward.num * feedback.den
    den = forward.den * feedback.den + forward.num * feedback.num
    if den.is_zero():
        raise ZeroDivisionError("feedback closure cancels to a zero denominator")
    return TransferFunction(num, den)


def to_state_space(tf: TransferFunction) -> StateSpaceModel:
    """Controllable canonical realization of a proper transfer function."""
    if not tf.is_proper():
        raise ValueError(
            f"cannot realize an improper transfer function (relative degree {tf.relative_degree})"
        )
    a = tf.den.coeffs  # monic, ascending
    n = a.size - 1
    b = np.zeros(n + 1)
    b[: tf.num.coeffs.size] = tf.num.coeffs
    d = b[n]
    A = np.zeros((n, n))
    if n:
        A[:-1, 1:] = np.eye(n - 1)
        A[-1, :] = -a[:n]
    B = np.zeros(n)
    if n:
        B[-1] = 1.0
    C = b[:n] - d * a[:n]
    return StateSpaceModel(A, B, C, [d])


def rk4(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of the autonomous ``x' = f(x)``."""
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class SimulationDiverged(FloatingPointError):
    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


def step_rk4(model: StateSpaceModel, u: float, dt: float) -> float:
    """Advance ``model`` by ``dt`` with ``u`` held over the step.

    Returns the output at the end of the step.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if model.n_states:
        A, b = model.A, model.B[:, 0] * u
        x = rk4(lambda z: A @ z + b, model.state, dt)
        if not np.all(np.isfinite(x)):
            raise SimulationDiverged("state became non-finite")
        model.state = x
    return model.output(u)


def _phase_near(h: complex, estimate_deg: float) -> float:
    principal = math.degrees(math.atan2(h.imag, h.real))
    k = round((estimate_deg - principal) / 360.0)
    return principal + 360.0 * k


def _factor_phase(poly: Polynomial, s: complex) -> float:
    """Phase of ``poly(s)`` as a sum of per-root angles (continuous in omega)."""
    ang = 0.0 if poly.leading > 0 else 180.0
    for r in poly.roots():
        ang += math.degrees(np.angle(s - r))
    return ang


def frequency_response(tf: TransferFunction, omega: float) -> FrequencyPoint:
    """Gain (dB) and unwrapped phase (deg) of ``tf(j*omega)``.

    The magnitude and principal angle come from direct Horner evaluation;
    the root-factor phase only selects the 360-degree branch, so repeated
    poles do not cost accuracy.
    """
    if not omega > 0:
        raise ValueError("omega must be positive")
    s = 1j * omega
    den = tf.den(s)
    if den == 0:
        raise ZeroDivisionError(f"pole on the imaginary axis at omega={omega}")
    h = complex(tf.num(s) / den)
    if h == 0:
        return FrequencyPoint(omega, -math.inf, 0.0)
    estimate = _factor_phase(tf.num, s) - _factor_phase(tf.den, s)
    return FrequencyPoint(omega, 20.0 * math.log10(abs(h)), _phase_near(h, estimate))


def bode(tf: TransferFunction, omegas: Sequence[float]) -> list[FrequencyPoint]:
    return [frequency_response(tf, float(w)) for w in omegas]


def cutoff_frequency(tf: TransferFunction, lo: float = 1e-6, hi: float = 1e8) -> float:
    """Frequency where ``|tf|`` first falls to ``|tf(0)| / sqrt(2)`` (low-pass)."""
    from scipy.optimize import brentq

    target = abs(tf.dc_gain()) / math.sqrt(2.0)

    def g(logw):
        return abs(tf(1j * 10.0**logw)) - target

    a, b = math.log10(lo), math.log10(hi)
    if g(a) <= 0 or g(b) >= 0:
        raise ValueError("no -3 dB crossing inside the search interval")
    return 10.0 ** brentq(g, a, b, xtol=1e-14, rtol=1e-15)


def routh_array(den: Polynomial | Sequence[float], eps: float = 1e-9) -> np.ndarray:
    """Routh table of ``den`` (rows s^n .. s^0).

    A zero pivot with a nonzero remainder row is replaced by ``eps`` times
    the row scale; an all-zero row is replaced by the derivative of the
    auxiliary polynomial formed from the row above.
    """
    p = _poly(den)
    if p.is_zero():
        raise ValueError("zero polynomial has no Routh array")
    c = p.coeffs[::-1]  # descending
    n = p.degree
    width = n // 2 + 1
    table = np.zeros((n + 1, width))
    table[0, : len(c[0::2])] = c[0::2]
    table[1, : len(c[1::2])] = c[1::2]
    for i in range(2, n + 1):
        prev, prev2 = table[i - 1], table[i - 2]
        scale = max(np.max(np.abs(prev)), np.max(np.abs(prev2)), 1e-300)
        if np.all(np.abs(prev) <= 1e-12 * scale):
            # auxiliary polynomial of row i-2, order n-(i-2)
            order = n - (i - 2)
            powers = order - 2 * np.arange(width)
            prev = np.where(powers > 0, prev2 * powers, 0.0)
            table[i - 1] = prev
        if abs(prev[0]) <= 1e-12 * max(np.max(np.abs(prev)), 1e-300):
            prev = prev.copy()
            prev[0] = eps * max(np.max(np.abs(prev)), 1.0)
            table[i - 1] = prev
        for j in range(width - 1):
            table[i, j] = (prev[0] * prev2[j + 1] - prev2[0] * prev[j + 1]) / prev[0]
    return table


def routh_hurwitz_stable(den: Polynomial | Sequence[float]) -> bool:
    """True iff every root of ``den`` lies strictly in the open left half-plane.

    Conservative: any zero pivot or vanished row (roots on or right of the
    imaginary axis) reports unstable.
    """
    p = _poly(den)
    if p.is_zero():
        raise ValueError("zero polynomial")
    if p.degree < 1:
        raise ValueError("stability needs a polynomial of degree >= 1")
    c = p.coeffs[::-1]
    if c[-1] == 0:
        return False
    c = c / c[0]
    if np.any(c <= 0):
        return False
    n = p.degree
    width = n // 2 + 1
    prev2 = np.zeros(width)
    prev = np.zeros(width)
    prev2[: len(c[0::2])] = c[0::2]
    prev[: len(c[1::2])] = c[1::2]
    for _ in range(2, n + 1):
        scale = max(np.max(np.abs(prev)), np.max(np.abs(prev2)))
        if prev[0] <= 1e-13 * scale:
            return False
        row = np.zeros(width)
        row[:-1] = (prev[0] * prev2[1:] - prev2[0] * prev[1:]) / prev[0]
        prev2, prev = prev, row
    return bool(prev[0] > 0)


def routh_rhp_count(den: Polynomial | Sequence[float], eps: float = 1e-9) -> int:
    """Sign changes in the first Routh column (roots in the closed RHP, epsilon rule)."""
    col = routh_array(den, eps)[:, 0]
    signs = np.sign(col[col != 0])
    return int(np.sum(signs[1:] != signs[:-1]))


def poles(tf: TransferFunction | Polynomial) -> np.ndarray:
    """Denominator roots sorted by real part, descending."""
    den = tf.den if isinstance(tf, TransferFunction) else tf
    r = den.roots()
    return r[np.lexsort((-r.imag, -r.real))]
