"""
Rational transfer-function algebra for SISO loops

Polynomials are dense coefficient arrays in descending powers of s. Every
object here is immutable, and every function is pure.
"""

import logging
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, signal

from .errors import (
    AlgebraicLoop,
    DegenerateDenominator,
    ImproperSystem,
    InvalidTransferFunction,
    PoleOnGrid,
    UnstableSystem,
)

logger = logging.getLogger(__name__)

STABILITY_MARGIN = 1e-9
CANCELLATION_TOL = 1e-8
HINF_RTOL = 1e-4
POLE_ON_GRID_TOL = 1e-14

Number = Union[int, float]


def _trim(coeffs) -> np.ndarray:
    """Drop leading zeros; an all-zero polynomial becomes [0.0]"""
    arr = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if arr.size == 0:
        raise InvalidTransferFunction("empty coefficient list")
    nonzero = np.flatnonzero(arr)
    if nonzero.size == 0:
        return np.zeros(1)
    return arr[nonzero[0]:]


def _from_roots(roots: Sequence[complex], gain: float = 1.0) -> np.ndarray:
    if len(roots) == 0:
        return np.array([gain])
    return gain * np.real(np.poly(np.asarray(roots)))


@dataclass(frozen=True)
class RationalTF:
    """Real-coefficient rational transfer function num(s)/den(s)"""
    num: Tuple[float, ...]
    den: Tuple[float, ...]

    def __post_init__(self):
        num = _trim(self.num)
        den = _trim(self.den)
        if not (np.all(np.isfinite(num)) and np.all(np.isfinite(den))):
            raise InvalidTransferFunction("coefficients must be finite")
        if den[0] == 0.0:
            raise InvalidTransferFunction("denominator is identically zero")
        object.__setattr__(self, "num", tuple(float(c) for c in num))
        object.__setattr__(self, "den", tuple(float(c) for c in den))

    @classmethod
    def static(cls, gain: float) -> "RationalTF":
        return cls((gain,), (1.0,))

    @property
    def numerator(self) -> np.ndarray:
        return np.array(self.num)

    @property
    def denominator(self) -> np.ndarray:
        return np.array(self.den)

    @property
    def num_degree(self) -> int:
        return len(self.num) - 1

    @property
    def den_degree(self) -> int:
        return len(self.den) - 1

    @property
    def is_zero(self) -> bool:
        return self.num == (0.0,)

    @property
    def is_proper(self) -> bool:
        return self.is_zero or self.num_degree <= self.den_degree

    @property
    def is_biproper(self) -> bool:
        return not self.is_zero and self.num_degree == self.den_degree

    def evaluate(self, s):
        """Value at complex frequency s (scalar or array)"""
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    def dc_gain(self) -> float:
        den0 = self.den[-1]
        if den0 == 0.0:
            return float("inf") if self.num[-1] != 0.0 else float("nan")
        return self.num[-1] / den0

    def high_frequency_gain(self) -> float:
        """Limit of |G(jw)| as w -> infinity for proper transfer functions"""
        if not self.is_proper:
            return float("inf")
        if self.is_biproper:
            return abs(self.num[0] / self.den[0])
        return 0.0

    def normalized(self) -> "RationalTF":
        """Same transfer function with a monic denominator"""
        lead = self.den[0]
        return RationalTF(self.numerator / lead, self.denominator / lead)

    def scaled(self, gain: float) -> "RationalTF":
        return RationalTF(self.numerator * gain, self.den)

    def __neg__(self) -> "RationalTF":
        return self.scaled(-1.0)

    def __add__(self, other) -> "RationalTF":
        other = _coerce(other)
        if self.den == other.den:
            return minreal(RationalTF(np.polyadd(self.num, other.num), self.den))
        num = np.polyadd(np.polymul(self.num, other.den), np.polymul(other.num, self.den))
        return minreal(RationalTF(num, np.polymul(self.den, other.den)))

    __radd__ = __add__

    def __sub__(self, other) -> "RationalTF":
        return self + (-_coerce(other))

    def __rsub__(self, other) -> "RationalTF":
        return _coerce(other) + (-self)

    def __mul__(self, other) -> "RationalTF":
        if isinstance(other, (int, float)):
            return self.scaled(float(other))
        return series(self, other)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"RationalTF(num={list(self.num)}, den={list(self.den)})"


def _coerce(value) -> RationalTF:
    if isinstance(value, RationalTF):
        return value
    return RationalTF.static(float(value))


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Strictly increasing positive angular frequencies (rad/s)"""
    omegas: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.omegas, dtype=float)).copy()
        if w.ndim != 1 or w.size == 0:
            raise ValueError("frequency grid must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
            raise ValueError("grid frequencies must be finite and positive")
        if np.any(np.diff(w) <= 0.0):
            raise ValueError("grid frequencies must be strictly increasing")
        w.setflags(write=False)
        object.__setattr__(self, "omegas", w)

    @classmethod
    def logspace(cls, omega_min: float = 1e-3, omega_max: float = 1e3,
                 points: int = 400) -> "FrequencyGrid":
        return cls(np.logspace(np.log10(omega_min), np.log10(omega_max), points))

    def __len__(self) -> int:
        return self.omegas.size


def default_grid() -> FrequencyGrid:
    """400 log-spaced points over [1e-3, 1e3] rad/s"""
    return FrequencyGrid.logspace()


@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.omegas.shape:
            raise ValueError("response length does not match grid")
        if not np.all(np.isfinite(values)):
            raise ValueError("response values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def phase_deg(self) -> np.ndarray:
        return np.degrees(np.angle(self.values))


def freq_response(tf: RationalTF, grid: FrequencyGrid) -> FrequencyResponse:
    """Evaluate tf(jw) on the grid by Horner recurrence"""
    s = 1j * grid.omegas
    den_values = np.polyval(tf.den, s)
    scale = np.polyval(np.abs(tf.denominator), grid.omegas)
    on_pole = np.abs(den_values) < POLE_ON_GRID_TOL * scale
    if np.any(on_pole):
        omega = grid.omegas[np.argmax(on_pole)]
        raise PoleOnGrid(f"imaginary-axis pole at grid frequency {omega:.6g} rad/s")
    return FrequencyResponse(grid, np.polyval(tf.num, s) / den_values)


def evaluate(tf: RationalTF, omega) -> np.ndarray:
    """tf(jw) for scalar or array w without grid validation"""
    return tf.evaluate(1j * np.asarray(omega, dtype=float))


def poles(tf: RationalTF) -> np.ndarray:
    """Denominator roots (companion-matrix eigenvalues)"""
    if tf.den_degree < 1:
        raise DegenerateDenominator("constant denominator has no poles")
    return np.roots(tf.den)


def zeros(tf: RationalTF) -> np.ndarray:
    if tf.is_zero or tf.num_degree < 1:
        return np.zeros(0, dtype=complex)
    return np.roots(tf.num)


def is_stable(tf: RationalTF) -> bool:
    # A static gain has no poles to violate the margin.
    if tf.den_degree < 1:
        return True
    return bool(np.all(poles(tf).real < -STABILITY_MARGIN))


def minreal(tf: RationalTF, tol: float = CANCELLATION_TOL) -> RationalTF:
    """Cancel zero/pole pairs closer than tol (relative above |s| = 1)"""
    if tf.is_zero:
        return RationalTF((0.0,), (1.0,))
    if tf.num_degree < 1 or tf.den_degree < 1:
        return tf
    remaining_poles = list(np.roots(tf.den))
    kept_zeros = []
    cancelled = 0
    for z in np.roots(tf.num):
        if remaining_poles:
            dist = np.abs(np.asarray(remaining_poles) - z)
            j = int(np.argmin(dist))
            if dist[j] <= tol * max(1.0, abs(z)):
                remaining_poles.pop(j)
                cancelled += 1
                continue
        kept_zeros.append(z)
    if cancelled == 0:
        return tf
    gain = tf.num[0] / tf.den[0]
    return RationalTF(_from_roots(kept_zeros, gain), _from_roots(remaining_poles))


def series(a: RationalTF, b: RationalTF) -> RationalTF:
    return minreal(RationalTF(np.polymul(a.num, b.num), np.polymul(a.den, b.den)))


def parallel(a: RationalTF, b: RationalTF) -> RationalTF:
    return a + b


def feedback_unity(loop: RationalTF) -> RationalTF:
    """loop / (1 + loop)"""
    return feedback(loop, RationalTF.static(1.0))


def feedback(forward: RationalTF, backward: RationalTF) -> RationalTF:
    """Negative feedback: forward / (1 + forward * backward)"""
    num = np.polymul(forward.num, backward.den)
    open_num = np.polymul(forward.num, backward.num)
    open_den = np.polymul(forward.den, backward.den)
    den = np.polyadd(open_den, open_num)
    scale = max(np.max(np.abs(open_den)), np.max(np.abs(open_num)))
    if np.max(np.abs(den)) <= 1e-14 * scale:
        raise AlgebraicLoop("1 + L is identically zero")
    return minreal(RationalTF(num, den))


class Peak(NamedTuple):
    value: float
    omega: float


def peak(func: Callable[[np.ndarray], np.ndarray], grid: FrequencyGrid) -> Peak:
    """
    Maximum of a nonnegative frequency function: grid arg-max refined by
    bounded golden-section/parabolic search over the neighbouring interval
    """
    values = np.asarray(func(grid.omegas), dtype=float)
    k = int(np.argmax(values))
    best = Peak(float(values[k]), float(grid.omegas[k]))
    if len(grid) < 2:
        return best
    lo = np.log(grid.omegas[max(k - 1, 0)])
    hi = np.log(grid.omegas[min(k + 1, len(grid) - 1)])

    def negated(log_omega):
        return -float(np.asarray(func(np.array([np.exp(log_omega)])))[0])

    res = optimize.minimize_scalar(negated, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-10})
    if -res.fun > best.value:
        best = Peak(float(-res.fun), float(np.exp(res.x)))
    return best


def _hamiltonian_crossings(a, b, c, d, gamma, tf) -> np.ndarray:
    """Frequencies where |tf(jw)| == gamma, from imaginary Hamiltonian eigenvalues"""
    r = d * d - gamma * gamma
    h = np.block([
        [a - (d / r) * (b @ c), -(gamma / r) * (b @ b.T)],
        [(gamma / r) * (c.T @ c), -a.T + (d / r) * (c.T @ b.T)],
    ])
    eig = np.linalg.eigvals(h)
    on_axis = np.abs(eig.real) <= 1e-6 * np.maximum(np.abs(eig), 1e-9)
    candidates = np.unique(np.abs(eig.imag[on_axis]))
    if candidates.size == 0:
        return candidates
    mags = np.abs(evaluate(tf, candidates))
    return candidates[np.abs(mags - gamma) <= 1e-3 * gamma]


def hinf_norm(tf: RationalTF, grid: Optional[FrequencyGrid] = None) -> float:
    """
    sup_w |tf(jw)| by Hamiltonian bisection

    A 400-point grid sweep seeds the lower bound; a level gamma is above the
    norm iff the Hamiltonian has no imaginary-axis eigenvalue. Returns the
    upper bracket, within HINF_RTOL of the norm.
    """
    if not tf.is_proper:
        raise ImproperSystem("H-infinity norm needs a proper transfer function")
    if not is_stable(tf):
        raise UnstableSystem("H-infinity norm is undefined for unstable systems")
    if tf.is_zero:
        return 0.0
    if tf.den_degree == 0:
        return abs(tf.num[0] / tf.den[0])

    grid = grid or default_grid()
    lower = max(float(np.max(freq_response(tf, grid).magnitude)),
                tf.high_frequency_gain(), abs(tf.dc_gain()))
    if lower == 0.0:
        return 0.0

    a, b, c, d = signal.tf2ss(tf.numerator, tf.denominator)
    d = float(np.atleast_2d(d)[0, 0])

    upper = 2.0 * lower
    for _ in range(60):
        hits = _hamiltonian_crossings(a, b, c, d, upper, tf)
        if hits.size == 0:
            break
        lower = max(lower, float(np.max(np.abs(evaluate(tf, hits)))))
        upper = 2.0 * max(upper, lower)

    iterations = 0
    while upper - lower > HINF_RTOL * lower:
        level = 0.5 * (lower + upper)
        hits = _hamiltonian_crossings(a, b, c, d, level, tf)
        if hits.size:
            measured = float(np.max(np.abs(evaluate(tf, hits))))
            lower = min(max(level, measured), upper)
        else:
            upper = level
        iterations += 1
    logger.debug("hinf_norm converged in %d bisection steps: [%.6g, %.6g]",
                 iterations, lower, upper)
    return upper
