"""
Uncertainty Module
Worst-case relative model error over the perturbed plant family at a design
point, and the first-order multiplicative weight that covers it.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from ftcbench.core.errors import FitFailure, NominalZero
from ftcbench.core.linsys import FrequencyGrid, RationalTF, evaluate, freq_response
from ftcbench.core.models import (
    AeroCoefficientTable,
    AircraftParameters,
    Axis,
    DesignPoint,
    plant_tf,
)

logger = logging.getLogger(__name__)

NOMINAL_ZERO_TOL = 1e-14
MAX_INFLATION = 10.0   # 20 dB
COVER_MARGIN = 1e-9


@dataclass(frozen=True)
class PerturbationGrid:
    """(V, gamma) sample pairs spanning one design point's perturbation box"""
    airspeeds: Tuple[float, ...]
    gammas: Tuple[float, ...]

    @classmethod
    def for_point(cls, point: DesignPoint, v_samples: int = 9, gamma_samples: int = 7) -> "PerturbationGrid":
        """Evenly spaced samples with V_bar snapped in and both ends kept"""
        speeds = list(np.linspace(point.V_min, point.V_max, v_samples))
        nearest = int(np.argmin(np.abs(np.asarray(speeds) - point.V_bar)))
        if speeds[nearest] != point.V_bar:
            if 0 < nearest < len(speeds) - 1:
                speeds[nearest] = point.V_bar
            else:
                speeds = sorted(speeds + [point.V_bar])
        lo, hi = point.gamma_range
        gammas = np.linspace(lo, hi, gamma_samples)
        return cls(tuple(float(v) for v in speeds), tuple(float(g) for g in gammas))

    def pairs(self) -> List[Tuple[float, float]]:
        return [(v, g) for v in self.airspeeds for g in self.gammas]

    def __len__(self) -> int:
        return len(self.airspeeds) * len(self.gammas)


@dataclass(frozen=True, eq=False)
class RelativeErrorEnvelope:
    grid: FrequencyGrid
    l: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.l, dtype=float)
        if values.shape != self.grid.omegas.shape:
            raise ValueError("envelope length does not match grid")
        if np.any(values < 0.0) or not np.all(np.isfinite(values)):
            raise ValueError("envelope must be finite and nonnegative")
        object.__setattr__(self, "l", values)


@dataclass(frozen=True)
class UncertaintyWeight:
    """W_t(s) = k (s/z + 1) / (s/p + 1)"""
    k: float
    z: float
    p: float
    inflation: float = 1.0

    @property
    def W_t(self) -> RationalTF:
        if self.k == 0.0:
            return RationalTF.static(0.0)
        return RationalTF((self.k / self.z, self.k), (1.0 / self.p, 1.0))

    def magnitude(self, omegas) -> np.ndarray:
        return np.abs(evaluate(self.W_t, omegas))


def perturbed_samples(axis: Axis, point: DesignPoint, p: AircraftParameters, a: AeroCoefficientTable,
                      perturbation: Optional[PerturbationGrid] = None) -> List[RationalTF]:
    """Plants at every (V, gamma) pair of the perturbation grid"""
    perturbation = perturbation or PerturbationGrid.for_point(point)
    return [plant_tf(axis, p, a, V, gamma) for V, gamma in perturbation.pairs()]


def relative_error_envelope(axis: Axis, point: DesignPoint, p: AircraftParameters,
                            a: AeroCoefficientTable, grid: FrequencyGrid,
                            perturbation: Optional[PerturbationGrid] = None) -> RelativeErrorEnvelope:
    """Pointwise max of |G_p / G_bar - 1| over the perturbed family"""
    nominal = freq_response(plant_tf(axis, p, a, point.V_bar, 0.0), grid).values
    if np.any(np.abs(nominal) < NOMINAL_ZERO_TOL):
        k = int(np.argmax(np.abs(nominal) < NOMINAL_ZERO_TOL))
        raise NominalZero(f"{axis.value} nominal vanishes at {grid.omegas[k]:.6g} rad/s")

    envelope = np.zeros(len(grid))
    for sample in perturbed_samples(axis, point, p, a, perturbation):
        values = freq_response(sample, grid).values
        np.maximum(envelope, np.abs(values / nominal - 1.0), out=envelope)
    return RelativeErrorEnvelope(grid, envelope)


def _initial_guess(omegas: np.ndarray, l: np.ndarray) -> np.ndarray:
    low, high = l[0], l[-1]
    middle = np.sqrt(low * high)
    corner = omegas[int(np.argmin(np.abs(np.log(l) - np.log(middle))))]
    ratio = high / low
    return np.log([low, corner, corner * ratio])


def fit_weight(env: RelativeErrorEnvelope) -> UncertaintyWeight:
    """
    Least-squares fit of log|W_t| to log l, followed by uniform inflation of
    k so that |W_t(jw)| >= l(w) at every grid frequency
    """
    omegas = env.grid.omegas
    l = env.l
    if np.max(l) == 0.0:
        return UncertaintyWeight(0.0, 1.0, 1.0)
    floor = 1e-12 * np.max(l)
    target = np.log(np.maximum(l, floor))
    s = 1j * omegas

    def residual(x):
        k, z, p = np.exp(x)
        return np.log(k * np.abs((s / z + 1.0) / (s / p + 1.0))) - target

    x0 = _initial_guess(omegas, np.maximum(l, floor))
    bounds = ([-np.inf, np.log(1e-6), np.log(1e-6)], [np.inf, np.log(1e6), np.log(1e6)])
    x0 = np.clip(x0, bounds[0], bounds[1])
    fit = optimize.least_squares(residual, x0, bounds=bounds, method="trf", x_scale="jac")
    k, z, p = (float(v) for v in np.exp(fit.x))

    shape = np.abs((s / z + 1.0) / (s / p + 1.0))
    inflation = float(np.max(l / (k * shape)))
    if inflation > MAX_INFLATION:
        raise FitFailure(f"weight needs {20 * np.log10(inflation):.1f} dB inflation to cover the envelope")
    k *= inflation * (1.0 + COVER_MARGIN)
    logger.debug("fit_weight: k=%.4g z=%.4g p=%.4g inflation=%.4f (%d evals)",
                 k, z, p, inflation, fit.nfev)
    return UncertaintyWeight(k, z, p, inflation)


def uncertainty_weight(axis: Axis, point: DesignPoint, p: AircraftParameters, a: AeroCoefficientTable,
                       grid: FrequencyGrid) -> Tuple[RelativeErrorEnvelope, UncertaintyWeight]:
    """Envelope and covering weight for one (axis, design point)"""
    env = relative_error_envelope(axis, point, p, a, grid)
    weight = fit_weight(env)
    logger.info("W_t %s point %d: k=%.4g z=%.4g p=%.4g", axis.value, point.index,
                weight.k, weight.z, weight.p)
    return env, weight


def envelope_rows(env: RelativeErrorEnvelope, weight: UncertaintyWeight) -> List[Sequence[float]]:
    """Rows of (omega, l, |W_t|) for CSV export"""
    mags = weight.magnitude(env.grid.omegas)
    return [(float(w), float(l), float(m)) for w, l, m in zip(env.grid.omegas, env.l, mags)]

