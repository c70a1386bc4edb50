"""
Simulator Module
Nonlinear six-degree-of-freedom model of the dual-system airframe with
first-order actuators, loss-of-effectiveness fault injection, the hover and
transition schedule, and the three attitude controller variants.
"""

import logging
from abc import ABC, abstractmethod
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize

from ftcbench.config.settings import worker_count
from ftcbench.core.errors import ConfigError, ControlLoss, NonFiniteState, TransitionTimeout
from ftcbench.core.models import AeroCoefficientTable, AircraftParameters, Axis, dynamic_pressure
from ftcbench.core.parser import lookup, read_json, require
from ftcbench.modules.allocator import (
    CHANNELS,
    ActuatorCommand,
    ControlAllocator,
    GRAVITY,
    surface_effectiveness,
)
from ftcbench.modules.scheduler import GainSchedule

logger = logging.getLogger(__name__)

STATE_SIZE = 13
MAX_DT = 5e-3
CHANNEL_COUNT = len(CHANNELS)
LOWER_LIMITS = np.array([0.0] * 8 + [-1.0] * 3 + [0.0] * 2)
UPPER_LIMITS = np.array([1.0] * 8 + [1.0] * 3 + [1.0] * 2)
RATE_LIMITS = np.array([4.0] * 8 + [2.0] * 3 + [1.0] * 2)
MAX_ALTITUDE_ERROR = 10.0
MAX_TILT = np.radians(60.0)

POSITION = slice(0, 3)
VELOCITY = slice(3, 6)
QUATERNION = slice(6, 10)
RATES = slice(10, 13)


class Variant(Enum):
    LQR = "lqr"
    SHIF = "shif"
    GS_SHIF = "gs_shif"


class Mode(Enum):
    HOVER = "hover"
    TRANSITION = "transition"
    FIXED_WING_ENTRY = "fixed_wing_entry"


# Rigid body

@dataclass(frozen=True, eq=False)
class RigidBodyState:
    """NED position, body velocity, unit quaternion (scalar first), body rates"""
    vector: np.ndarray

    def __post_init__(self):
        x = np.array(self.vector, dtype=float)
        if x.shape != (STATE_SIZE,):
            raise ValueError(f"state needs {STATE_SIZE} components")
        x.setflags(write=False)
        object.__setattr__(self, "vector", x)

    @classmethod
    def create(cls, position=(0.0, 0.0, 0.0), velocity=(0.0, 0.0, 0.0),
               quaternion=(1.0, 0.0, 0.0, 0.0), rates=(0.0, 0.0, 0.0)) -> "RigidBodyState":
        return cls(np.concatenate([position, velocity, quaternion, rates]))

    @property
    def position(self) -> np.ndarray:
        return self.vector[POSITION]

    @property
    def velocity(self) -> np.ndarray:
        return self.vector[VELOCITY]

    @property
    def quaternion(self) -> np.ndarray:
        return self.vector[QUATERNION]

    @property
    def rates(self) -> np.ndarray:
        return self.vector[RATES]

    @property
    def altitude(self) -> float:
        return -float(self.vector[2])

    @property
    def airspeed(self) -> float:
        return float(np.linalg.norm(self.velocity))

    def euler(self) -> np.ndarray:
        return quaternion_to_euler(self.quaternion)


def rotation_matrix(q: np.ndarray) -> np.ndarray:
    """Body-to-NED direction cosine matrix"""
    q0, q1, q2, q3 = q
    return np.array([
        [1 - 2 * (q2 * q2 + q3 * q3), 2 * (q1 * q2 - q0 * q3), 2 * (q1 * q3 + q0 * q2)],
        [2 * (q1 * q2 + q0 * q3), 1 - 2 * (q1 * q1 + q3 * q3), 2 * (q2 * q3 - q0 * q1)],
        [2 * (q1 * q3 - q0 * q2), 2 * (q2 * q3 + q0 * q1), 1 - 2 * (q1 * q1 + q2 * q2)],
    ])


def quaternion_to_euler(q: np.ndarray) -> np.ndarray:
    """Roll, pitch, yaw (ZYX) in rad"""
    q0, q1, q2, q3 = q
    phi = np.arctan2(2 * (q0 * q1 + q2 * q3), 1 - 2 * (q1 * q1 + q2 * q2))
    theta = np.arcsin(np.clip(2 * (q0 * q2 - q3 * q1), -1.0, 1.0))
    psi = np.arctan2(2 * (q0 * q3 + q1 * q2), 1 - 2 * (q2 * q2 + q3 * q3))
    return np.array([phi, theta, psi])


def euler_to_quaternion(phi: float, theta: float, psi: float) -> np.ndarray:
    cr, sr = np.cos(phi / 2), np.sin(phi / 2)
    cp, sp = np.cos(theta / 2), np.sin(theta / 2)
    cy, sy = np.cos(psi / 2), np.sin(psi / 2)
    return np.array([cr * cp * cy + sr * sp * sy,
                     sr * cp * cy - cr * sp * sy,
                     cr * sp * cy + sr * cp * sy,
                     cr * cp * sy - sr * sp * cy])


@dataclass(frozen=True, eq=False)
class SimulationModel:
    """Physical parameters the integrator needs"""
    p: AircraftParameters
    a: AeroCoefficientTable
    aero_enabled: bool = True
    actuator_bandwidth: float = 5.0

    def __post_init__(self):
        positions = self.p.rotor_positions()
        object.__setattr__(self, "_rotor_x", positions[:, 0])
        object.__setattr__(self, "_rotor_y", positions[:, 1])
        object.__setattr__(self, "_spin", np.asarray(self.p.rotor_spin, dtype=float))
        object.__setattr__(self, "_inertia", np.array([self.p.J_x, self.p.J_y, self.p.J_z]))
        scale = np.ones(CHANNEL_COUNT)
        scale[8:11] = self.p.surface_limit
        object.__setattr__(self, "lower", LOWER_LIMITS * scale)
        object.__setattr__(self, "upper", UPPER_LIMITS * scale)


def _aero_angles(vel: np.ndarray, V: float) -> Tuple[float, float]:
    alpha = float(np.arctan2(vel[2], vel[0]))
    beta = float(np.arcsin(np.clip(vel[1] / V, -1.0, 1.0)))
    return alpha, beta


def forces_and_moments(x: np.ndarray, effective: np.ndarray, model: SimulationModel) -> Tuple[np.ndarray, np.ndarray]:
    """Body-frame force (N) and moment (N*m), gravity included"""
    p, a = model.p, model.a
    vel, q, omega = x[VELOCITY], x[QUATERNION], x[RATES]
    rotors, surfaces, hrotors = effective[:8], effective[8:11], effective[11:13]

    thrusts = p.rotor_thrust_coeff * rotors
    forward = p.hrotor_thrust_coeff * hrotors
    force = rotation_matrix(q).T @ np.array([0.0, 0.0, p.mass * GRAVITY])
    force[0] += forward.sum()
    force[2] -= thrusts.sum()
    moment = np.array([
        -np.dot(model._rotor_y, thrusts),
        np.dot(model._rotor_x, thrusts),
        p.rotor_torque_coeff * np.dot(model._spin, rotors) + p.hrotor_offset * (forward[1] - forward[0]),
    ])

    V = float(np.linalg.norm(vel))
    if model.aero_enabled and V > 1e-9:
        alpha, beta = _aero_angles(vel, V)
        q_bar = dynamic_pressure(p.rho, V)
        lift = q_bar * p.S * a.lift(alpha, V)
        drag = q_bar * p.S * a.drag(alpha, V)
        force += -drag * vel / V
        force += lift * np.array([np.sin(alpha), 0.0, -np.cos(alpha)])
        force[1] += q_bar * p.S * a.C_Y_beta * beta

        damping = p.rho * V * p.S / 4.0
        moment[0] += (q_bar * p.S * p.b * a.C_l_da * surfaces[0]
                      + damping * p.b ** 2 * a.clamped("C_lp", V) * omega[0])
        moment[1] += (q_bar * p.S * p.c_bar * (a.clamped("C_Malpha", V) * (alpha - a.alpha_zero_moment)
                                                + a.C_m_de * surfaces[1])
                      + damping * p.c_bar ** 2 * a.clamped("C_mq", V) * omega[1])
        moment[2] += (q_bar * p.S * p.b * (a.clamped("C_Nbeta", V) * beta + a.C_n_dr * surfaces[2])
                      + damping * p.b ** 2 * a.clamped("C_nr", V) * omega[2])
    return force, moment


def derivatives(x: np.ndarray, effective: np.ndarray, model: SimulationModel) -> np.ndarray:
    vel, q, omega = x[VELOCITY], x[QUATERNION], x[RATES]
    force, moment = forces_and_moments(x, effective, model)
    inertia = model._inertia
    p_, q_, r_ = omega
    q_dot = 0.5 * np.array([
        -q[1] * p_ - q[2] * q_ - q[3] * r_,
        q[0] * p_ + q[2] * r_ - q[3] * q_,
        q[0] * q_ + q[3] * p_ - q[1] * r_,
        q[0] * r_ + q[1] * q_ - q[2] * p_,
    ])
    return np.concatenate([
        rotation_matrix(q) @ vel,
        force / model.p.mass - np.cross(omega, vel),
        q_dot,
        (moment - np.cross(omega, inertia * omega)) / inertia,
    ])


# Actuators and faults

@dataclass(frozen=True, eq=False)
class ActuatorState:
    """Lagged actuator outputs in CHANNELS order"""
    outputs: np.ndarray

    def __post_init__(self):
        y = np.array(self.outputs, dtype=float)
        if y.shape != (CHANNEL_COUNT,):
            raise ValueError(f"actuator state needs {CHANNEL_COUNT} channels")
        y.setflags(write=False)
        object.__setattr__(self, "outputs", y)

    @classmethod
    def at(cls, command: ActuatorCommand) -> "ActuatorState":
        return cls(command.to_vector())


def advance_actuators(actuators: ActuatorState, commands: np.ndarray, model: SimulationModel,
                      dt: float) -> ActuatorState:
    """Exact first-order lag toward the clipped command, then rate limiting"""
    target = np.clip(commands, model.lower, model.upper)
    y = actuators.outputs
    lagged = target + (y - target) * np.exp(-model.actuator_bandwidth * dt)
    step = np.clip(lagged - y, -RATE_LIMITS * dt, RATE_LIMITS * dt)
    return ActuatorState(np.clip(y + step, model.lower, model.upper))


@dataclass(frozen=True)
class FaultScenario:
    """Loss fractions per actuator channel, active from the onset time on"""
    onset: float = 0.0
    losses: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name, loss in self.losses.items():
            if name not in CHANNELS:
                raise ConfigError(f"unknown actuator {name!r}; expected one of {CHANNELS}")
            if not 0.0 <= loss <= 1.0:
                raise ConfigError(f"loss for {name} must lie in [0, 1], got {loss}")
        if self.onset < 0.0:
            raise ConfigError("fault onset must be nonnegative")

    def loss_vector(self) -> np.ndarray:
        return np.array([self.losses.get(name, 0.0) for name in CHANNELS])

    def losses_at(self, t: float) -> np.ndarray:
        return self.loss_vector() if t >= self.onset else np.zeros(CHANNEL_COUNT)


def apply_fault(scenario: FaultScenario, t: float, commands: Union[np.ndarray, ActuatorCommand]):
    """Identity before onset, (1 - loss) scaling per channel afterwards"""
    if isinstance(commands, ActuatorCommand):
        return ActuatorCommand.from_vector(apply_fault(scenario, t, commands.to_vector()))
    return (1.0 - scenario.losses_at(t)) * np.asarray(commands, dtype=float)


NO_FAULT = FaultScenario()


def step(state: RigidBodyState, actuators: ActuatorState, commands: np.ndarray, model: SimulationModel,
         dt: float, fault: FaultScenario = NO_FAULT, t: float = 0.0) -> Tuple[RigidBodyState, ActuatorState]:
    """
    One fixed RK4 step from time t: actuators advance first and their
    faulted outputs are held over the step; the quaternion is renormalized
    afterwards
    """
    if not 0.0 < dt <= MAX_DT:
        raise ValueError(f"dt must lie in (0, {MAX_DT}] s")
    actuators = advance_actuators(actuators, np.asarray(commands, dtype=float), model, dt)
    effective = apply_fault(fault, t, actuators.outputs)

    x = state.vector
    k1 = derivatives(x, effective, model)
    k2 = derivatives(x + 0.5 * dt * k1, effective, model)
    k3 = derivatives(x + 0.5 * dt * k2, effective, model)
    k4 = derivatives(x + dt * k3, effective, model)
    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    x_next[QUATERNION] /= np.linalg.norm(x_next[QUATERNION])
    if not np.all(np.isfinite(x_next)):
        raise NonFiniteState(f"non-finite state after step: {x_next}")
    return RigidBodyState(x_next), actuators


def hover_trim(model: SimulationModel, altitude: float = 30.0) -> Tuple[RigidBodyState, ActuatorCommand]:
    """Level hover state and the equal rotor throttle that balances weight"""
    state = RigidBodyState.create(position=(0.0, 0.0, -altitude))
    zeros = np.zeros(CHANNEL_COUNT)

    def vertical_acceleration(u: float) -> float:
        effective = zeros.copy()
        effective[:8] = u
        return float(derivatives(state.vector, effective, model)[5])

    throttle = optimize.brentq(vertical_acceleration, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return state, ActuatorCommand(np.full(8, throttle), np.zeros(3), np.zeros(2))


# Controllers

def wrap_angle(angle: float) -> float:
    return float(np.arctan2(np.sin(angle), np.cos(angle)))


class MomentLimits:
    """Per-axis moment authority: rotor differential plus surfaces at current airspeed"""

    def __init__(self, allocator: ControlAllocator, trim: ActuatorCommand):
        self.allocator = allocator
        self.rotor = np.array([allocator.moment_authority(axis, trim) for axis in Axis])

    def at(self, V: float) -> np.ndarray:
        surfaces = np.abs(np.diag(surface_effectiveness(self.allocator.p, self.allocator.a, V)))
        return self.rotor + surfaces * self.allocator.p.surface_limit


class AttitudeController(ABC):
    """Maps angles, body rates and references to body moment demands"""

    @abstractmethod
    def moments(self, angles: np.ndarray, rates: np.ndarray, references: np.ndarray, V: float,
                limits: np.ndarray, dt: float) -> np.ndarray:
        """Moment demand [Mx, My, Mz] (N*m)"""

    @abstractmethod
    def gain_vector(self, V: float) -> np.ndarray:
        """Flattened gains in use at airspeed V"""


class CascadedAttitudeController(AttitudeController):
    """P angle loop around a PID rate loop, gains looked up by airspeed"""

    def __init__(self, schedule: GainSchedule):
        self.schedule = schedule
        self.integral = np.zeros(3)
        self.filtered = np.zeros(3)

    def gain_vector(self, V: float) -> np.ndarray:
        return np.concatenate([self.schedule.gains_at(axis, V).as_vector() for axis in Axis])

    def moments(self, angles, rates, references, V, limits, dt):
        out = np.zeros(3)
        for k, axis in enumerate(Axis):
            g = self.schedule.gains_at(axis, V)
            rate_ref = g.kp_outer * wrap_angle(references[k] - angles[k])
            error = rate_ref - rates[k]
            derivative = g.kd * (error - self.filtered[k]) / g.tau_f
            raw = g.kp * error + self.integral[k] + derivative
            out[k] = np.clip(raw, -limits[k], limits[k])
            # conditional integration
            if out[k] == raw or np.sign(error) != np.sign(raw):
                self.integral[k] += g.ki * error * dt
            self.filtered[k] += (1.0 - np.exp(-dt / g.tau_f)) * (error - self.filtered[k])
        return out


class LQRAttitudeController(AttitudeController):
    """Constant integral-augmented state feedback, state [int e, e, rate]"""

    def __init__(self, gains: Dict[Axis, np.ndarray]):
        self.gains = {axis: np.asarray(gains[axis], dtype=float).ravel() for axis in Axis}
        self.integral = np.zeros(3)

    def gain_vector(self, V: float) -> np.ndarray:
        return np.concatenate([self.gains[axis] for axis in Axis])

    def moments(self, angles, rates, references, V, limits, dt):
        out = np.zeros(3)
        for k, axis in enumerate(Axis):
            error = wrap_angle(angles[k] - references[k])
            K = self.gains[axis]
            raw = -(K[0] * self.integral[k] + K[1] * error + K[2] * rates[k])
            out[k] = np.clip(raw, -limits[k], limits[k])
            if out[k] == raw or np.sign(-error) != np.sign(raw):
                self.integral[k] += error * dt
        return out


def altitude_gains(mass: float, bandwidth: float) -> Tuple[float, float, float]:
    """(kp, ki, kd) placing all three closed-loop poles of the m s^2 model at -bandwidth"""
    w = bandwidth
    return 3.0 * mass * w * w, mass * w ** 3, 3.0 * mass * w


class AltitudeController:
    """Constant-gain PID on altitude error commanding total vertical thrust"""

    def __init__(self, model: SimulationModel, bandwidth: float = 1.0):
        self.model = model
        self.kp, self.ki, self.kd = altitude_gains(model.p.mass, bandwidth)
        self.integral = 0.0
        self.max_thrust = 8.0 * model.p.rotor_thrust_coeff

    def lift_estimate(self, state: RigidBodyState) -> float:
        V = state.airspeed
        if V < 1e-6:
            return 0.0
        alpha, _ = _aero_angles(state.velocity, V)
        return dynamic_pressure(self.model.p.rho, V) * self.model.p.S * self.model.a.lift(alpha, V)

    def thrust(self, state: RigidBodyState, angles: np.ndarray, reference: float, dt: float) -> float:
        p = self.model.p
        climb_rate = -float((rotation_matrix(state.quaternion) @ state.velocity)[2])
        error = reference - state.altitude
        lift = self.lift_estimate(state) if self.model.aero_enabled else 0.0
        tilt = max(np.cos(angles[0]) * np.cos(angles[1]), 0.5)
        raw = (p.mass * GRAVITY - lift + self.kp * error + self.integral - self.kd * climb_rate) / tilt
        thrust = float(np.clip(raw, 0.0, self.max_thrust))
        if thrust == raw or np.sign(error) != np.sign(raw - thrust):
            self.integral += self.ki * error * dt
        return thrust


@dataclass(frozen=True)
class TransitionSchedule:
    """Open-loop forward-thrust ramp, then an airspeed hold after reaching stall speed"""
    start: float = 20.0
    ramp: float = 6.0
    cruise_throttle: float = 0.8
    target_airspeed: float = 13.0
    settle: float = 10.0
    hold_gain: float = 0.2

    def ramp_throttle(self, t: float) -> float:
        if t < self.start:
            return 0.0
        return self.cruise_throttle * min((t - self.start) / self.ramp, 1.0)

    def hold_throttle(self, V: float, drag_throttle: float) -> float:
        return float(np.clip(drag_throttle + self.hold_gain * (self.target_airspeed - V), 0.0, 1.0))


@dataclass(frozen=True)
class SimulationSettings:
    dt: float = 1e-3
    duration: float = 60.0
    log_rate: float = 100.0
    aero: bool = True
    altitude_reference: float = 30.0
    actuator_bandwidth: float = 5.0

    def __post_init__(self):
        if not 0.0 < self.dt <= MAX_DT:
            raise ConfigError(f"sim.dt must lie in (0, {MAX_DT}] s")
        stride = 1.0 / (self.log_rate * self.dt)
        if abs(stride - round(stride)) > 1e-9 or round(stride) < 1:
            raise ConfigError("sim.log_rate must divide the integration rate")

    @property
    def log_stride(self) -> int:
        return int(round(1.0 / (self.log_rate * self.dt)))


@dataclass(frozen=True)
class Scenario:
    name: str
    fault: FaultScenario
    settings: SimulationSettings = field(default_factory=SimulationSettings)
    variant: Optional[Variant] = None
    transition: TransitionSchedule = field(default_factory=TransitionSchedule)


def load_scenario(file_path: Union[str, Path]) -> Scenario:
    """
    Parse a scenario file
    Keys: fault.time, fault.losses.<actuator>, controller.variant, sim.dt,
    sim.duration, optional sim.log_rate and sim.aero
    """
    path = Path(file_path)
    document = read_json(path)
    variant = lookup(document, "controller.variant")
    try:
        return Scenario(
            name=str(document.get("name", path.stem)),
            fault=FaultScenario(float(require(document, "fault.time")),
                                {k: float(v) for k, v in lookup(document, "fault.losses", {}).items()}),
            settings=SimulationSettings(
                dt=float(require(document, "sim.dt")),
                duration=float(require(document, "sim.duration")),
                log_rate=float(lookup(document, "sim.log_rate", 100.0)),
                aero=bool(lookup(document, "sim.aero", True)),
            ),
            variant=Variant(variant) if variant else None,
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{path}: {e}") from e


# Logging

LOG_COLUMNS = (
    ["t", "x", "y", "z", "u", "v", "w", "q0", "q1", "q2", "q3", "p", "q", "r", "V",
     "phi", "theta", "psi", "href", "phiref", "thetaref", "psiref"]
    + list(CHANNELS)
    + [f"eff_{name}" for name in CHANNELS]
    + ["mode"]
)


@dataclass(eq=False)
class SimLog:
    """Uniformly sampled run record; angles in rad, altitude reference in m"""
    t: np.ndarray
    states: np.ndarray
    euler: np.ndarray
    references: np.ndarray
    commanded: np.ndarray
    effective: np.ndarray
    airspeed: np.ndarray
    mode: List[str]
    gains: Optional[np.ndarray] = None
    name: str = ""
    variant: str = ""

    def __len__(self) -> int:
        return self.t.size

    @property
    def sample_interval(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    @property
    def altitude(self) -> np.ndarray:
        return -self.states[:, 2]

    def channel(self, name: str) -> Tuple[np.ndarray, np.ndarray]:
        """(reference, actual) series for h, phi, theta or psi"""
        if name == "h":
            return self.references[:, 0], self.altitude
        index = {"phi": 0, "theta": 1, "psi": 2}[name]
        return self.references[:, index + 1], self.euler[:, index]

    def rows(self) -> List[list]:
        rows = []
        for k in range(len(self)):
            values = np.concatenate([[self.t[k]], self.states[k], [self.airspeed[k]], self.euler[k],
                                     self.references[k], self.commanded[k], self.effective[k]])
            rows.append([repr(float(v)) for v in values] + [self.mode[k]])
        return rows

    @classmethod
    def from_rows(cls, header: Sequence[str], rows: Iterable[Sequence[str]], name: str = "",
                  variant: str = "") -> "SimLog":
        if list(header) != LOG_COLUMNS:
            raise ConfigError("log columns do not match the SimLog schema")
        rows = list(rows)
        if not rows:
            raise ConfigError("log has no samples")
        numeric = np.array([[float(v) for v in row[:-1]] for row in rows])
        n_ch = CHANNEL_COUNT
        return cls(
            t=numeric[:, 0],
            states=numeric[:, 1:14],
            airspeed=numeric[:, 14],
            euler=numeric[:, 15:18],
            references=numeric[:, 18:22],
            commanded=numeric[:, 22:22 + n_ch],
            effective=numeric[:, 22 + n_ch:22 + 2 * n_ch],
            mode=[row[-1] for row in rows],
            name=name,
            variant=variant,
        )


class _Recorder:
    def __init__(self):
        self.records: Dict[str, list] = {k: [] for k in
                                          ("t", "states", "euler", "references", "commanded",
                                           "effective", "airspeed", "mode", "gains")}

    def add(self, **values):
        for key, value in values.items():
            self.records[key].append(value)

    def build(self, name: str, variant: str) -> SimLog:
        r = self.records
        return SimLog(
            t=np.array(r["t"]), states=np.array(r["states"]), euler=np.array(r["euler"]),
            references=np.array(r["references"]), commanded=np.array(r["commanded"]),
            effective=np.array(r["effective"]), airspeed=np.array(r["airspeed"]),
            mode=list(r["mode"]), gains=np.array(r["gains"]), name=name, variant=variant,
        )


# Scenario runs

@dataclass(frozen=True, eq=False)
class ControllerSet:
    """Everything the three variants need, fixed before the run starts"""
    scheduled: GainSchedule
    constant: GainSchedule
    lqr: Dict[Axis, np.ndarray]
    altitude_bandwidth: float = 1.0

    def attitude(self, variant: Variant) -> AttitudeController:
        if variant == Variant.GS_SHIF:
            return CascadedAttitudeController(self.scheduled)
        if variant == Variant.SHIF:
            return CascadedAttitudeController(self.constant)
        return LQRAttitudeController(self.lqr)


def pitch_reference(allocator: ControlAllocator, V: float) -> float:
    """Trim pitch blended in with dynamic pressure: level at hover, zero-moment angle at stall speed"""
    return allocator.a.alpha_zero_moment * allocator.surface_share(V)


def _drag_throttle(model: SimulationModel, V: float) -> float:
    p, a = model.p, model.a
    drag = dynamic_pressure(p.rho, V) * p.S * a.drag(a.alpha_zero_moment, V)
    return drag / (2.0 * p.hrotor_thrust_coeff)


def _loss_of_control(state: RigidBodyState, angles: np.ndarray, altitude_reference: float) -> Optional[str]:
    """Reason the run can no longer hold trim, or None"""
    if abs(state.altitude - altitude_reference) > MAX_ALTITUDE_ERROR:
        return f"altitude {state.altitude:.1f} m outside {altitude_reference:g} +/- {MAX_ALTITUDE_ERROR:g} m"
    if np.max(np.abs(angles[:2])) > MAX_TILT:
        return f"tilt {np.degrees(np.max(np.abs(angles[:2]))):.0f} deg beyond {np.degrees(MAX_TILT):.0f} deg"
    return None


def run_scenario(scenario: Scenario, variant: Union[Variant, str], p: AircraftParameters,
                 a: AeroCoefficientTable, controllers: ControllerSet) -> SimLog:
    """
    Hover at the altitude reference until the transition start, ramp the
    horizontal rotors until stall speed, then hold airspeed for the settling
    window. Faults follow the scenario; controllers never see them. Losing
    altitude or attitude raises ControlLoss with the log recorded so far.
    """
    variant = Variant(variant)
    settings = scenario.settings
    schedule = scenario.transition
    model = SimulationModel(p, a, aero_enabled=settings.aero, actuator_bandwidth=settings.actuator_bandwidth)
    allocator = ControlAllocator(p, a)
    state, trim = hover_trim(model, settings.altitude_reference)
    actuators = ActuatorState.at(trim)
    limits = MomentLimits(allocator, trim)
    attitude = controllers.attitude(variant)
    altitude = AltitudeController(model, controllers.altitude_bandwidth)
    recorder = _Recorder()
    dt = settings.dt
    stride = settings.log_stride
    total_steps = int(round(settings.duration / dt))
    cruise_drag = _drag_throttle(model, schedule.target_airspeed)

    mode = Mode.HOVER
    reached_at: Optional[float] = None
    logger.info("running %s with %s (fault at %.1f s)", scenario.name, variant.value, scenario.fault.onset)

    n = 0
    while True:
        t = n * dt
        V = state.airspeed
        angles = state.euler()
        lost = _loss_of_control(state, angles, settings.altitude_reference)
        if mode == Mode.HOVER and t >= schedule.start:
            mode = Mode.TRANSITION
        if mode == Mode.TRANSITION and V >= schedule.target_airspeed:
            mode = Mode.FIXED_WING_ENTRY
            reached_at = t
            logger.info("%s/%s: stall speed reached at %.2f s", scenario.name, variant.value, t)

        references = np.array([settings.altitude_reference, 0.0, pitch_reference(allocator, V), 0.0])
        moments = attitude.moments(angles, state.rates, references[1:], V, limits.at(V), dt)
        thrust = altitude.thrust(state, angles, references[0], dt)
        if mode == Mode.FIXED_WING_ENTRY:
            throttle = schedule.hold_throttle(V, cruise_drag)
        else:
            throttle = schedule.ramp_throttle(t)

        command = allocator.allocate(np.concatenate([[thrust], moments]), V, trim.with_hrotors(throttle))
        commands = command.to_vector()

        done = reached_at is not None and t >= reached_at + schedule.settle - 1e-12
        if n % stride == 0 or done or lost:
            recorder.add(t=t, states=state.vector.copy(), euler=angles, references=references,
                         commanded=commands, effective=apply_fault(scenario.fault, t, actuators.outputs),
                         airspeed=V, mode=mode.value, gains=attitude.gain_vector(V))
        if lost:
            log = recorder.build(scenario.name, variant.value)
            raise ControlLoss(f"{scenario.name}/{variant.value}: {lost} at {t:.2f} s", log)
        if done:
            break
        if n >= total_steps:
            log = recorder.build(scenario.name, variant.value)
            raise TransitionTimeout(f"{scenario.name}/{variant.value}: airspeed {V:.2f} m/s below "
                                    f"{schedule.target_airspeed} m/s at {t:.1f} s", log)
        state, actuators = step(state, actuators, commands, model, dt, scenario.fault, t)
        n += 1

    return recorder.build(scenario.name, variant.value)


def _run_job(job) -> Tuple[str, str, SimLog]:
    case, scenario, variant, p, a, controllers = job
    return case, variant.value, run_scenario(scenario, variant, p, a, controllers)


def run_comparison(scenarios: Dict[str, Scenario], p: AircraftParameters, a: AeroCoefficientTable,
                   controllers: ControllerSet, variants: Sequence[Variant] = tuple(Variant),
                   workers: Optional[int] = None) -> Dict[Tuple[str, str], SimLog]:
    """Every variant on every case; runs are independent and may execute in parallel"""
    jobs = [(case, scenario, variant, p, a, controllers)
            for case, scenario in scenarios.items() for variant in variants]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) == 1:
        outcomes = [_run_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as executor:
            outcomes = list(executor.map(_run_job, jobs))
    return {(case, variant): log for case, variant, log in outcomes}
