"""
Allocator Module
Maps commanded vertical thrust and body moments onto the eight lift rotors
and the three aerodynamic surfaces, with saturation and one redistribution
pass. The mapping always uses nominal effectiveness.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from ftcbench.core.models import ROTOR_NAMES, AeroCoefficientTable, AircraftParameters, Axis, dynamic_pressure

logger = logging.getLogger(__name__)

SURFACE_NAMES = ("ail", "elev", "rud")
HROTOR_NAMES = ("hrot1", "hrot2")
CHANNELS = tuple(f"rotor{n}" for n in ROTOR_NAMES) + SURFACE_NAMES + HROTOR_NAMES
WRENCH_NAMES = ("T", "Mx", "My", "Mz")
INFEASIBLE_RATIO = 0.1
GRAVITY = 9.80665


@dataclass(frozen=True, eq=False)
class ActuatorCommand:
    """Rotor throttles in [0, 1], surface deflections in rad, horizontal-rotor throttles"""
    rotors: np.ndarray
    surfaces: np.ndarray
    hrotors: np.ndarray

    def __post_init__(self):
        for name, size in (("rotors", 8), ("surfaces", 3), ("hrotors", 2)):
            values = np.array(getattr(self, name), dtype=float)
            if values.shape != (size,):
                raise ValueError(f"{name} needs {size} entries")
            values.setflags(write=False)
            object.__setattr__(self, name, values)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.rotors, self.surfaces, self.hrotors])

    @classmethod
    def from_vector(cls, values) -> "ActuatorCommand":
        values = np.asarray(values, dtype=float)
        return cls(values[:8], values[8:11], values[11:13])

    def with_hrotors(self, throttle: float) -> "ActuatorCommand":
        return replace(self, hrotors=np.full(2, throttle))

    def within_limits(self, surface_limit: float) -> bool:
        return bool(np.all((self.rotors >= 0.0) & (self.rotors <= 1.0))
                    and np.all(np.abs(self.surfaces) <= surface_limit)
                    and np.all((self.hrotors >= 0.0) & (self.hrotors <= 1.0)))


class AllocationResult(NamedTuple):
    command: ActuatorCommand
    residual: np.ndarray
    feasible: bool


def rotor_effectiveness(p: AircraftParameters) -> np.ndarray:
    """4x8 map from rotor throttles to [T, Mx, My, Mz]"""
    positions = p.rotor_positions()
    k_t, k_q = p.rotor_thrust_coeff, p.rotor_torque_coeff
    return np.vstack([
        np.full(8, k_t),
        -positions[:, 1] * k_t,
        positions[:, 0] * k_t,
        np.asarray(p.rotor_spin, dtype=float) * k_q,
    ])


def surface_effectiveness(p: AircraftParameters, a: AeroCoefficientTable, V: float) -> np.ndarray:
    """Diagonal map from (aileron, elevator, rudder) to [Mx, My, Mz] at airspeed V"""
    q_bar = dynamic_pressure(p.rho, V)
    return np.diag([q_bar * p.S * p.b * a.C_l_da,
                    q_bar * p.S * p.c_bar * a.C_m_de,
                    q_bar * p.S * p.b * a.C_n_dr])


def _weighted_pinv(B: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """W B' (B W B')^-1"""
    W = np.diag(weights)
    return W @ B.T @ np.linalg.inv(B @ W @ B.T)


class ControlAllocator:
    """Weighted pseudo-inverse allocation about a trim command"""

    def __init__(self, p: AircraftParameters, a: AeroCoefficientTable):
        self.p = p
        self.a = a
        self.B = rotor_effectiveness(p)
        self.weights = 1.0 / np.full(8, p.rotor_thrust_coeff)
        self.B_pinv = _weighted_pinv(self.B, self.weights)
        self.q_bar_stall = dynamic_pressure(p.rho, p.stall_speed)
        self._feasible = True

    def surface_share(self, V: float) -> float:
        return float(np.clip(dynamic_pressure(self.p.rho, V) / self.q_bar_stall, 0.0, 1.0))

    def hover_command(self, hrotor_throttle: float = 0.0) -> ActuatorCommand:
        """Equal throttles carrying the weight, surfaces neutral"""
        u = self.p.mass * GRAVITY / (8.0 * self.p.rotor_thrust_coeff)
        return ActuatorCommand(np.full(8, u), np.zeros(3), np.full(2, hrotor_throttle))

    def moment_authority(self, axis: Axis, trim: Optional[ActuatorCommand] = None) -> float:
        """Largest symmetric moment the rotors can add about trim on one axis"""
        trim = trim or self.hover_command()
        headroom = float(np.min(np.minimum(trim.rotors, 1.0 - trim.rotors)))
        row = {Axis.ROLL: 1, Axis.PITCH: 2, Axis.YAW: 3}[axis]
        return headroom * float(np.sum(np.abs(self.B[row])))

    def achieved_wrench(self, command: ActuatorCommand, V: float) -> np.ndarray:
        """Multiply-back: [T, Mx, My, Mz] produced by a command at nominal effectiveness"""
        wrench = self.B @ command.rotors
        wrench[1:] += surface_effectiveness(self.p, self.a, V) @ command.surfaces
        return wrench

    def _solve_rotors(self, demand: np.ndarray, trim: np.ndarray) -> np.ndarray:
        u = trim + self.B_pinv @ demand
        clipped = np.clip(u, 0.0, 1.0)
        if np.array_equal(u, clipped):
            return u
        residual = demand - self.B @ (clipped - trim)
        free = (clipped > 0.0) & (clipped < 1.0)
        if np.count_nonzero(free) >= 4:
            B_free = self.B[:, free]
            pinv = _weighted_pinv(B_free, self.weights[free]) if np.linalg.matrix_rank(B_free) == 4 \
                else np.linalg.pinv(B_free)
            clipped[free] += pinv @ residual
            logger.debug("redistributed residual %s over %d rotors", residual, np.count_nonzero(free))
        return np.clip(clipped, 0.0, 1.0)

    def allocate_with_residual(self, wrench: Sequence[float], V: float, trim: ActuatorCommand) -> AllocationResult:
        """Deviation of the wrench from the trim wrench, split between surfaces and rotors"""
        wrench = np.asarray(wrench, dtype=float)
        limit = self.p.surface_limit
        delta = wrench - self.achieved_wrench(trim, V)
        moments = delta[1:]

        share = self.surface_share(V)
        surfaces = np.array(trim.surfaces)
        unmet = np.zeros(3)
        if share > 0.0:
            gains = np.diag(surface_effectiveness(self.p, self.a, V))
            surfaces = np.clip(trim.surfaces + share * moments / gains, -limit, limit)
            unmet = share * moments - gains * (surfaces - trim.surfaces)

        rotor_demand = np.concatenate([[delta[0]], (1.0 - share) * moments + unmet])
        rotors = self._solve_rotors(rotor_demand, trim.rotors)

        command = ActuatorCommand(rotors, surfaces, trim.hrotors)
        residual = wrench - self.achieved_wrench(command, V)
        feasible = bool(np.linalg.norm(residual) <= INFEASIBLE_RATIO * np.linalg.norm(wrench))
        return AllocationResult(command, residual, feasible)

    def allocate(self, wrench: Sequence[float], V: float, trim: ActuatorCommand) -> ActuatorCommand:
        """Actuator command realizing [T, Mx, My, Mz] at airspeed V; warns once per infeasible stretch"""
        result = self.allocate_with_residual(wrench, V, trim)
        if self._feasible and not result.feasible:
            logger.warning("infeasible wrench %s: residual %s", np.asarray(wrench), result.residual)
        elif result.feasible and not self._feasible:
            logger.info("allocation feasible again at V=%.2f", V)
        self._feasible = result.feasible
        return result.command

    def matrix_rows(self, V: float) -> List[tuple]:
        """Effectiveness rows (wrench component x channel) for CSV dumps"""
        surfaces = surface_effectiveness(self.p, self.a, V)
        rows = []
        for k, name in enumerate(WRENCH_NAMES):
            surface_row = surfaces[k - 1] if k > 0 else np.zeros(3)
            rows.append((name,) + tuple(float(v) for v in np.concatenate([self.B[k], surface_row])))
        return rows
