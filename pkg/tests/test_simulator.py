import json
from dataclasses import replace

import numpy as np
import pytest

from ftcbench.core.errors import ConfigError, ControlLoss, TransitionTimeout
from ftcbench.core.models import Axis
from ftcbench.core.parser import DATA_DIR
from ftcbench.modules.allocator import CHANNELS, GRAVITY, ActuatorCommand
from ftcbench.modules.scheduler import GainSchedule
from ftcbench.modules.simulator import (
    CHANNEL_COUNT,
    LOG_COLUMNS,
    ActuatorState,
    AltitudeController,
    CascadedAttitudeController,
    ControllerSet,
    FaultScenario,
    LQRAttitudeController,
    MAX_TILT,
    Mode,
    RigidBodyState,
    Scenario,
    SimLog,
    SimulationModel,
    SimulationSettings,
    TransitionSchedule,
    Variant,
    advance_actuators,
    altitude_gains,
    apply_fault,
    euler_to_quaternion,
    hover_trim,
    load_scenario,
    quaternion_to_euler,
    run_scenario,
    step,
    wrap_angle,
)
from ftcbench.modules.synthesis import CascadedGains, lqr_baseline

ROTOR_2B = CHANNELS.index("rotor2b")
ELEVATOR = CHANNELS.index("elev")
ZERO_COMMANDS = np.zeros(CHANNEL_COUNT)


@pytest.fixture(scope="module")
def vacuum(aircraft, aero):
    return SimulationModel(aircraft, aero, aero_enabled=False)


@pytest.fixture(scope="module")
def model(aircraft, aero):
    return SimulationModel(aircraft, aero)


@pytest.fixture(scope="module")
def controllers(aircraft, weights):
    gains = {axis: CascadedGains(1.0, 2.0, 1.0, 0.05) for axis in Axis}
    schedule = GainSchedule.constant(gains)
    return ControllerSet(schedule, schedule, lqr_baseline(aircraft, weights), weights.altitude_bandwidth)


def idle():
    return ActuatorState(np.zeros(CHANNEL_COUNT))


def energy(state, p):
    omega = state.rates
    inertia = np.array([p.J_x, p.J_y, p.J_z])
    return (0.5 * p.mass * np.dot(state.velocity, state.velocity)
            + p.mass * GRAVITY * state.position[2]
            + 0.5 * np.dot(inertia * omega, omega))


class TestRigidBody:
    def test_free_fall(self, vacuum):
        dt = 1e-3
        state, _ = step(RigidBodyState.create(position=(0.0, 0.0, -30.0)), idle(), ZERO_COMMANDS, vacuum, dt)
        assert state.velocity[2] == pytest.approx(GRAVITY * dt, abs=1e-12)
        assert state.position[2] == pytest.approx(-30.0 + 0.5 * GRAVITY * dt * dt, abs=1e-12)
        np.testing.assert_array_equal(state.rates, 0.0)

    def test_energy_is_conserved_without_inputs(self, vacuum, aircraft):
        state = RigidBodyState.create(position=(0.0, 0.0, -30.0), velocity=(1.0, 0.0, 0.0),
                                      rates=(0.3, -0.2, 0.5))
        actuators = idle()
        start = energy(state, aircraft)
        for _ in range(500):
            state, actuators = step(state, actuators, ZERO_COMMANDS, vacuum, 2e-3)
        assert energy(state, aircraft) == pytest.approx(start, rel=1e-9)

    def test_hover_trim_is_a_fixed_point(self, model):
        state, trim = hover_trim(model, 30.0)
        actuators = ActuatorState.at(trim)
        commands = trim.to_vector()
        for _ in range(1000):
            state, actuators = step(state, actuators, commands, model, 1e-3)
        assert state.altitude == pytest.approx(30.0, abs=1e-9)
        np.testing.assert_allclose(state.velocity, 0.0, atol=1e-9)
        np.testing.assert_allclose(state.rates, 0.0, atol=1e-12)
        np.testing.assert_array_equal(actuators.outputs, commands)

    def test_step_size_is_capped(self, model):
        with pytest.raises(ValueError):
            step(RigidBodyState.create(), idle(), ZERO_COMMANDS, model, 0.01)

    def test_euler_round_trip(self):
        angles = np.array([0.2, -0.4, 1.3])
        q = euler_to_quaternion(*angles)
        assert np.linalg.norm(q) == pytest.approx(1.0)
        np.testing.assert_allclose(quaternion_to_euler(q), angles, atol=1e-12)

    def test_state_shape(self):
        with pytest.raises(ValueError):
            RigidBodyState(np.zeros(12))


@pytest.mark.slow
def test_quaternion_norm_does_not_drift(vacuum):
    state = RigidBodyState.create(position=(0.0, 0.0, -1e4), rates=(1.0, -0.7, 0.4))
    actuators = idle()
    for _ in range(100_000):
        state, actuators = step(state, actuators, ZERO_COMMANDS, vacuum, 1e-3)
    assert np.linalg.norm(state.quaternion) == pytest.approx(1.0, abs=1e-12)


class TestActuators:
    def test_lag_toward_command(self, model):
        commands = np.zeros(CHANNEL_COUNT)
        commands[0] = 0.01
        outputs = advance_actuators(idle(), commands, model, 1e-3).outputs
        assert outputs[0] == pytest.approx(0.01 * (1.0 - np.exp(-model.actuator_bandwidth * 1e-3)))

    def test_rate_limited(self, model):
        commands = np.ones(CHANNEL_COUNT)
        outputs = advance_actuators(idle(), commands, model, 1e-3).outputs
        assert outputs[0] <= 4.0 * 1e-3 + 1e-15

    def test_commands_clipped_to_limits(self, model, aircraft):
        state = idle()
        commands = np.full(CHANNEL_COUNT, 5.0)
        for _ in range(5000):
            state = advance_actuators(state, commands, model, 5e-3)
        assert np.all(state.outputs <= model.upper)
        assert state.outputs[ELEVATOR] == pytest.approx(aircraft.surface_limit)


class TestFaults:
    def test_identity_before_onset(self):
        scenario = FaultScenario(22.0, {"rotor2b": 0.5})
        commands = np.linspace(0.1, 0.9, CHANNEL_COUNT)
        np.testing.assert_array_equal(apply_fault(scenario, 21.9, commands), commands)

    def test_rotor_loss(self):
        scenario = FaultScenario(22.0, {"rotor2b": 0.5})
        commands = np.zeros(CHANNEL_COUNT)
        commands[ROTOR_2B] = 0.6
        assert apply_fault(scenario, 22.0, commands)[ROTOR_2B] == pytest.approx(0.3)

    def test_surface_loss_on_command_object(self):
        scenario = FaultScenario(22.0, {"elev": 0.2})
        command = ActuatorCommand(np.zeros(8), [0.0, 0.1, 0.0], np.zeros(2))
        faulted = apply_fault(scenario, 30.0, command)
        assert faulted.surfaces[1] == pytest.approx(0.08)

    def test_zero_losses_match_nominal_run(self, model):
        zero = FaultScenario(0.0, {name: 0.0 for name in ("rotor1a", "rotor2b", "ail")})
        state, trim = hover_trim(model)
        commands = trim.to_vector()
        commands[0] += 0.02
        a = b = (state, ActuatorState.at(trim))
        for n in range(50):
            a = step(*a, commands, model, 1e-3, zero, n * 1e-3)
            b = step(*b, commands, model, 1e-3)
        np.testing.assert_array_equal(a[0].vector, b[0].vector)

    @pytest.mark.parametrize("losses", [{"rotor9": 0.1}, {"rotor1a": 1.5}, {"ail": -0.1}])
    def test_invalid_losses(self, losses):
        with pytest.raises(ConfigError):
            FaultScenario(22.0, losses)


class TestControllers:
    def test_wrap_angle(self):
        assert wrap_angle(np.pi + 0.1) == pytest.approx(-np.pi + 0.1)
        assert wrap_angle(-0.3) == pytest.approx(-0.3)

    def test_altitude_poles(self):
        kp, ki, kd = altitude_gains(12.0, 1.5)
        np.testing.assert_allclose(np.roots([12.0, kd, kp, ki]), -1.5, atol=1e-4)

    def test_cascaded_zero_error(self):
        schedule = GainSchedule.constant({axis: CascadedGains(1.0, 2.0, 1.0, 0.05) for axis in Axis})
        controller = CascadedAttitudeController(schedule)
        out = controller.moments(np.zeros(3), np.zeros(3), np.zeros(3), 5.0, np.full(3, 10.0), 1e-3)
        np.testing.assert_array_equal(out, 0.0)

    def test_cascaded_saturates_and_freezes_integral(self):
        schedule = GainSchedule.constant({axis: CascadedGains(5.0, 50.0, 10.0, 0.0) for axis in Axis})
        controller = CascadedAttitudeController(schedule)
        references = np.array([1.0, 0.0, 0.0])
        for _ in range(100):
            out = controller.moments(np.zeros(3), np.zeros(3), references, 0.0, np.full(3, 2.0), 1e-3)
        assert out[0] == 2.0
        assert controller.integral[0] == 0.0

    def test_lqr_opposes_error(self, aircraft, weights):
        controller = LQRAttitudeController(lqr_baseline(aircraft, weights))
        out = controller.moments(np.array([0.1, -0.1, 0.0]), np.zeros(3), np.zeros(3), 0.0,
                                 np.full(3, 100.0), 1e-3)
        assert out[0] < 0.0 < out[1]
        assert out[2] == 0.0
        assert controller.gain_vector(7.0).shape == (9,)

    def test_altitude_hold_at_trim(self, model, aircraft):
        state, _ = hover_trim(model)
        controller = AltitudeController(model, bandwidth=1.0)
        thrust = controller.thrust(state, np.zeros(3), 30.0, 1e-3)
        assert thrust == pytest.approx(aircraft.mass * GRAVITY)

    def test_variant_selection(self, controllers):
        assert isinstance(controllers.attitude(Variant.LQR), LQRAttitudeController)
        assert isinstance(controllers.attitude(Variant.GS_SHIF), CascadedAttitudeController)


class TestConfiguration:
    def test_transition_ramp(self):
        schedule = TransitionSchedule()
        assert schedule.ramp_throttle(19.9) == 0.0
        assert schedule.ramp_throttle(23.0) == pytest.approx(0.4)
        assert schedule.ramp_throttle(40.0) == pytest.approx(0.8)
        assert schedule.hold_throttle(13.0, 0.1) == pytest.approx(0.1)
        assert schedule.settle == 10.0

    def test_settings_validation(self):
        assert SimulationSettings(dt=1e-3, log_rate=100.0).log_stride == 10
        with pytest.raises(ConfigError):
            SimulationSettings(dt=0.01)
        with pytest.raises(ConfigError):
            SimulationSettings(dt=1e-3, log_rate=300.0)

    def test_bundled_scenarios(self):
        case1 = load_scenario(DATA_DIR / "scenarios" / "case1.json")
        assert case1.fault.onset == 22.0
        assert case1.fault.losses["rotor2b"] == 0.5
        assert case1.settings.dt == 1e-3
        case2 = load_scenario(DATA_DIR / "scenarios" / "case2.json")
        assert set(case2.fault.losses) >= {"rotor1a", "rotor2b", "rotor4a"}
        assert not load_scenario(DATA_DIR / "scenarios" / "none.json").fault.losses

    @pytest.mark.parametrize("document", [
        {"sim": {"dt": 0.001, "duration": 60.0}},
        {"fault": {"time": 22.0, "losses": {"rotor1a": 2.0}}, "sim": {"dt": 0.001, "duration": 60.0}},
        {"fault": {"time": 22.0}, "sim": {"dt": 0.02, "duration": 60.0}},
        {"fault": {"time": 22.0}, "controller": {"variant": "pid"}, "sim": {"dt": 0.001, "duration": 60.0}},
    ])
    def test_malformed_scenarios(self, tmp_path, document):
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(document), encoding="utf-8")
        with pytest.raises(ConfigError):
            load_scenario(path)


def short_hover(fault=None, duration=1.0):
    return Scenario("hover", fault or FaultScenario(), SimulationSettings(duration=duration),
                    transition=TransitionSchedule(start=1000.0))


class TestRuns:
    def test_timeout_keeps_partial_log(self, aircraft, aero, controllers):
        with pytest.raises(TransitionTimeout) as info:
            run_scenario(short_hover(), Variant.LQR, aircraft, aero, controllers)
        log = info.value.log
        assert len(log) == 101
        assert log.sample_interval == pytest.approx(0.01)
        assert set(log.mode) == {Mode.HOVER.value}
        np.testing.assert_allclose(log.altitude, 30.0, atol=1e-6)

    def test_rotor_fault_disturbs_attitude(self, aircraft, aero, controllers):
        fault = FaultScenario(0.5, {"rotor2b": 0.5})
        with pytest.raises(TransitionTimeout) as info:
            run_scenario(short_hover(fault, 1.5), Variant.LQR, aircraft, aero, controllers)
        log = info.value.log
        after = log.t > 0.6
        assert np.max(np.abs(log.euler[after, :2])) > 1e-4
        np.testing.assert_allclose(log.euler[log.t < 0.5, :2], 0.0, atol=1e-9)

    def test_log_rows_follow_schema(self, aircraft, aero, controllers):
        with pytest.raises(TransitionTimeout) as info:
            run_scenario(short_hover(duration=0.05), Variant.SHIF, aircraft, aero, controllers)
        log = info.value.log
        rows = log.rows()
        assert all(len(row) == len(LOG_COLUMNS) for row in rows)
        restored = SimLog.from_rows(LOG_COLUMNS, rows, "hover", "shif")
        np.testing.assert_array_equal(restored.states, log.states)
        assert restored.mode == log.mode
        with pytest.raises(ConfigError):
            SimLog.from_rows(LOG_COLUMNS[:-1], rows)

    def test_divergence_raises_control_loss(self, aircraft, aero, controllers):
        unstable = replace(controllers, lqr={axis: -K for axis, K in controllers.lqr.items()})
        fault = FaultScenario(0.1, {"rotor2b": 0.5})
        with pytest.raises(ControlLoss) as info:
            run_scenario(short_hover(fault, 5.0), Variant.LQR, aircraft, aero, unstable)
        log = info.value.log
        assert log.t[-1] < 5.0
        assert np.max(np.abs(log.euler[-1, :2])) > MAX_TILT or abs(log.altitude[-1] - 30.0) > 10.0



@pytest.mark.slow
@pytest.mark.parametrize("case", ["case1", "case2"])
@pytest.mark.parametrize("variant", list(Variant))
def test_faulted_runs_end_holding_trim(case, variant, aircraft, aero, tuned_controllers):
    scenario = load_scenario(DATA_DIR / "scenarios" / f"{case}.json")
    log = run_scenario(scenario, variant, aircraft, aero, tuned_controllers)
    assert log.mode[-1] == Mode.FIXED_WING_ENTRY.value
    assert log.t[-1] > TransitionSchedule().start + TransitionSchedule().settle
    assert abs(log.altitude[-1] - log.references[-1, 0]) <= 1.0
    np.testing.assert_allclose(log.euler[-1], log.references[-1, 1:], atol=np.radians(2.0))
    assert np.all(np.isfinite(log.states))

    settled = log.t > log.t[-1] - 1.0
    ratio = log.effective[settled, ROTOR_2B] / log.commanded[settled, ROTOR_2B]
    np.testing.assert_allclose(ratio, 0.5, rtol=0.05)
