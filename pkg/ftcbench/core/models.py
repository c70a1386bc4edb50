"""
Airspeed-dependent, fault-scaled attitude plants and the physical fixture types
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Tuple

import numpy as np

from .errors import ConfigError, InvalidFaultState, OutOfEnvelope
from .linsys import RationalTF

GAMMA_MAX = 0.6
ENVELOPE = (0.0, 13.0)
ROTOR_NAMES = ("1a", "1b", "2a", "2b", "3a", "3b", "4a", "4b")


class Axis(Enum):
    """Attitude axes, each with its own plant and controller"""
    ROLL = "roll"
    PITCH = "pitch"
    YAW = "yaw"


@dataclass(frozen=True)
class AircraftParameters:
    """Mass, inertia, wing and rotor geometry (SI units)"""
    mass: float
    J_x: float
    J_y: float
    J_z: float
    S: float
    b: float
    c_bar: float
    rho: float
    l1: float
    l2: float
    l3: float
    l4: float
    l_r: float
    l_f: float
    rotor_thrust_coeff: float   # N per unit throttle
    rotor_torque_coeff: float   # N*m per unit throttle
    rotor_spin: Tuple[int, ...] = (1, -1, -1, 1, 1, -1, -1, 1)
    hrotor_thrust_coeff: float = 25.0
    hrotor_offset: float = 0.3
    surface_limit: float = 0.35
    stall_speed: float = 13.0

    def __post_init__(self):
        positive = ("mass", "J_x", "J_y", "J_z", "S", "b", "c_bar", "rho",
                    "l1", "l2", "l3", "l4", "l_r", "l_f",
                    "rotor_thrust_coeff", "rotor_torque_coeff",
                    "hrotor_thrust_coeff", "hrotor_offset", "surface_limit", "stall_speed")
        for name in positive:
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"aircraft parameter {name} must be strictly positive")
        if len(self.rotor_spin) != len(ROTOR_NAMES) or any(s not in (-1, 1) for s in self.rotor_spin):
            raise ConfigError("rotor_spin needs one +/-1 entry per vertical rotor")

    def inertia(self, axis: Axis) -> float:
        return {Axis.ROLL: self.J_x, Axis.PITCH: self.J_y, Axis.YAW: self.J_z}[axis]

    def rotor_positions(self) -> np.ndarray:
        """(x forward, y right) of rotors 1a..4b in metres"""
        return np.array([
            (self.l_f, self.l1), (self.l_f, self.l2),
            (-self.l_r, self.l3), (-self.l_r, self.l4),
            (-self.l_r, -self.l3), (-self.l_r, -self.l4),
            (self.l_f, -self.l1), (self.l_f, -self.l2),
        ])


@dataclass(frozen=True, eq=False)
class AeroCoefficientTable:
    """Airspeed-indexed derivative tables plus lift/drag tables for simulation"""
    breakpoints: np.ndarray
    C_lp: np.ndarray
    C_mq: np.ndarray
    C_Malpha: np.ndarray
    C_nr: np.ndarray
    C_Nbeta: np.ndarray
    alpha_breakpoints: np.ndarray   # rad
    C_L: np.ndarray                 # shape (len(breakpoints), len(alpha_breakpoints))
    C_D: np.ndarray
    C_l_da: float = 0.15
    C_m_de: float = 0.6
    C_n_dr: float = 0.08
    C_Y_beta: float = -0.3
    alpha_zero_moment: float = 0.0

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        if bp.ndim != 1 or bp.size < 2 or np.any(np.diff(bp) <= 0.0):
            raise ConfigError("aero breakpoints must be strictly increasing")
        if bp[0] > ENVELOPE[0] or bp[-1] < ENVELOPE[1]:
            raise ConfigError("aero breakpoints must span [0, 13] m/s")
        for name in ("C_lp", "C_mq", "C_Malpha", "C_nr", "C_Nbeta"):
            values = np.asarray(getattr(self, name), dtype=float)
            if values.shape != bp.shape:
                raise ConfigError(f"{name} needs one value per breakpoint")
            object.__setattr__(self, name, values)
        for name in ("C_lp", "C_mq", "C_nr", "C_Malpha"):
            if np.any(getattr(self, name) > 0.0):
                raise ConfigError(f"{name} must be non-positive at every breakpoint")
        alpha = np.asarray(self.alpha_breakpoints, dtype=float)
        if np.any(np.diff(alpha) <= 0.0):
            raise ConfigError("alpha breakpoints must be strictly increasing")
        for name in ("C_L", "C_D"):
            table = np.asarray(getattr(self, name), dtype=float)
            if table.shape != (bp.size, alpha.size):
                raise ConfigError(f"{name} table must be breakpoints x alpha_breakpoints")
            object.__setattr__(self, name, table)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "alpha_breakpoints", alpha)

    def coefficient(self, name: str, V: float) -> float:
        """Linear interpolation of a derivative table inside the envelope"""
        if V < self.breakpoints[0] or V > self.breakpoints[-1]:
            raise OutOfEnvelope(f"airspeed {V} m/s outside [{self.breakpoints[0]}, {self.breakpoints[-1]}]")
        return float(np.interp(V, self.breakpoints, getattr(self, name)))

    def clamped(self, name: str, V: float) -> float:
        """Table value with airspeed clamped to the envelope (simulator use)"""
        return float(np.interp(V, self.breakpoints, getattr(self, name)))

    def _bilinear(self, table: np.ndarray, alpha: float, V: float) -> float:
        bp = self.breakpoints
        v = min(max(V, bp[0]), bp[-1])
        j = min(int(np.searchsorted(bp, v, side="right")) - 1, bp.size - 2)
        t = (v - bp[j]) / (bp[j + 1] - bp[j])
        lo = np.interp(alpha, self.alpha_breakpoints, table[j])
        hi = np.interp(alpha, self.alpha_breakpoints, table[j + 1])
        return float(lo + t * (hi - lo))

    def lift(self, alpha: float, V: float) -> float:
        return self._bilinear(self.C_L, alpha, V)

    def drag(self, alpha: float, V: float) -> float:
        return self._bilinear(self.C_D, alpha, V)


@dataclass(frozen=True)
class FaultState:
    """Loss-of-effectiveness fractions of thrust and the three moments"""
    gamma_T: float = 0.0
    gamma_L: float = 0.0
    gamma_M: float = 0.0
    gamma_N: float = 0.0

    def __post_init__(self):
        for name in ("gamma_T", "gamma_L", "gamma_M", "gamma_N"):
            check_gamma(getattr(self, name), name)

    def for_axis(self, axis: Axis) -> float:
        return {Axis.ROLL: self.gamma_L, Axis.PITCH: self.gamma_M, Axis.YAW: self.gamma_N}[axis]


@dataclass(frozen=True)
class DesignPoint:
    """Nominal airspeed with its perturbation interval"""
    index: int
    V_bar: float
    V_min: float
    V_max: float
    gamma_range: Tuple[float, float] = field(default=(0.0, GAMMA_MAX))

    def __post_init__(self):
        if not self.V_min <= self.V_bar <= self.V_max:
            raise ValueError(f"design point {self.index}: V_bar outside [V_min, V_max]")


def check_gamma(gamma: float, name: str = "gamma") -> float:
    if not 0.0 <= gamma <= GAMMA_MAX:
        raise InvalidFaultState(f"{name}={gamma} outside [0, {GAMMA_MAX}]")
    return gamma


def design_points() -> List[DesignPoint]:
    """The six nominal design points covering 0..13 m/s"""
    return [
        DesignPoint(1, 0.0, 0.0, 0.8),
        DesignPoint(2, 1.0, 0.8, 2.5),
        DesignPoint(3, 4.0, 2.5, 5.5),
        DesignPoint(4, 7.0, 5.5, 8.5),
        DesignPoint(5, 10.0, 8.5, 11.5),
        DesignPoint(6, 13.0, 11.5, 13.0),
    ]


def dynamic_pressure(rho: float, V: float) -> float:
    return 0.5 * rho * V * V


# Rate-damping derivatives carry q_bar * (length / 2V); written in the
# cancelled form rho*V*S*length^2*C/4 so V = 0 gives exactly zero.

def roll_damping(p: AircraftParameters, a: AeroCoefficientTable, V: float) -> float:
    """M_x^p(V)"""
    return p.rho * V * p.S * p.b ** 2 * a.coefficient("C_lp", V) / 4.0


def pitch_damping(p: AircraftParameters, a: AeroCoefficientTable, V: float) -> float:
    """M_y^q(V)"""
    return p.rho * V * p.S * p.c_bar ** 2 * a.coefficient("C_mq", V) / 4.0


def pitch_stiffness(p: AircraftParameters, a: AeroCoefficientTable, V: float) -> float:
    """M_y^alpha(V)"""
    return dynamic_pressure(p.rho, V) * p.S * p.c_bar * a.coefficient("C_Malpha", V)


def yaw_damping(p: AircraftParameters, a: AeroCoefficientTable, V: float) -> float:
    """M_z^r(V)"""
    return p.rho * V * p.S * p.b ** 2 * a.coefficient("C_nr", V) / 4.0


def yaw_stiffness(p: AircraftParameters, a: AeroCoefficientTable, V: float) -> float:
    """M_z^beta(V)"""
    return -dynamic_pressure(p.rho, V) * p.S * p.b * a.coefficient("C_Nbeta", V)


def _second_order_rate_tf(gain: float, inertia: float, damping: float, stiffness: float) -> RationalTF:
    # gain*s / (J s^2 - M_rate s - M_static); drop the common s when M_static == 0
    if stiffness == 0.0:
        return RationalTF((gain,), (inertia, -damping))
    return RationalTF((gain, 0.0), (inertia, -damping, -stiffness))


def roll_tf(p: AircraftParameters, a: AeroCoefficientTable, V: float, gamma_L: float) -> RationalTF:
    """Roll rate per rolling moment: (1 - gamma_L) / (J_x s - M_x^p(V))"""
    check_gamma(gamma_L, "gamma_L")
    return RationalTF((1.0 - gamma_L,), (p.J_x, -roll_damping(p, a, V)))


def pitch_tf(p: AircraftParameters, a: AeroCoefficientTable, V: float, gamma_M: float) -> RationalTF:
    """Pitch rate per pitching moment: (1 - gamma_M) s / (J_y s^2 - M_y^q s - M_y^alpha)"""
    check_gamma(gamma_M, "gamma_M")
    return _second_order_rate_tf(1.0 - gamma_M, p.J_y,
                                 pitch_damping(p, a, V), pitch_stiffness(p, a, V))


def yaw_tf(p: AircraftParameters, a: AeroCoefficientTable, V: float, gamma_N: float) -> RationalTF:
    """Yaw rate per yawing moment: (1 - gamma_N) s / (J_z s^2 - M_z^r s - M_z^beta)"""
    check_gamma(gamma_N, "gamma_N")
    return _second_order_rate_tf(1.0 - gamma_N, p.J_z,
                                 yaw_damping(p, a, V), yaw_stiffness(p, a, V))


def plant_tf(axis: Axis, p: AircraftParameters, a: AeroCoefficientTable,
             V: float, gamma: float = 0.0) -> RationalTF:
    builders = {Axis.ROLL: roll_tf, Axis.PITCH: pitch_tf, Axis.YAW: yaw_tf}
    return builders[axis](p, a, V, gamma)
