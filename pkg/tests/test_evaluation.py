import numpy as np
import pytest

from ftcbench.core.errors import EmptyWindow, WindowMismatch
from ftcbench.modules.evaluation import (
    CHANNELS,
    ConvergenceCheck,
    acceptance_gates,
    bar_chart_rows,
    common_window,
    compare,
    convergence_check,
    report_table,
    rmse,
)
from ftcbench.modules.simulator import CHANNEL_COUNT, SimLog


def make_log(altitude_offset=0.0, roll=None, end=30.0, dt=0.01, variant="", airspeed=13.0):
    t = np.round(np.arange(0.0, end + dt / 2, dt), 10)
    n = t.size
    states = np.zeros((n, 13))
    states[:, 2] = -(30.0 + altitude_offset)
    states[:, 6] = 1.0
    euler = np.zeros((n, 3))
    if roll is not None:
        euler[:, 0] = roll(t)
    references = np.zeros((n, 4))
    references[:, 0] = 30.0
    return SimLog(t=t, states=states, euler=euler, references=references,
                  commanded=np.zeros((n, CHANNEL_COUNT)), effective=np.zeros((n, CHANNEL_COUNT)),
                  airspeed=np.full(n, airspeed), mode=["hover"] * n, name="case", variant=variant)


class TestRmse:
    def test_perfect_tracking(self):
        log = make_log()
        for channel in CHANNELS:
            assert rmse(log, channel, (20.0, 30.0)) == 0.0

    def test_constant_altitude_offset(self):
        assert rmse(make_log(altitude_offset=-0.5), "h", (20.0, 30.0)) == pytest.approx(0.5)

    def test_sinusoid_in_degrees(self):
        amplitude = np.radians(2.0)
        log = make_log(roll=lambda t: amplitude * np.sin(2.0 * np.pi * t), end=40.0, dt=0.001)
        assert rmse(log, "phi", (20.0, 40.0)) == pytest.approx(2.0 / np.sqrt(2.0), rel=1e-3)

    def test_wrapped_angle_error(self):
        log = make_log(roll=lambda t: np.full_like(t, 2.0 * np.pi + 0.01))
        assert rmse(log, "phi", (20.0, 30.0)) == pytest.approx(np.degrees(0.01))

    def test_empty_window(self):
        with pytest.raises(EmptyWindow):
            rmse(make_log(end=10.0), "h", (20.0, 30.0))


class TestWindow:
    def test_earliest_end(self):
        assert common_window([make_log(end=30.0), make_log(end=25.0)]) == (20.0, 25.0)

    def test_sample_interval_mismatch(self):
        with pytest.raises(WindowMismatch):
            common_window([make_log(dt=0.01), make_log(dt=0.02)])

    def test_log_ending_before_start(self):
        with pytest.raises(WindowMismatch):
            common_window([make_log(end=30.0), make_log(end=15.0)])


class TestCompare:
    def test_identical_logs_pass(self):
        report = compare("1", {v: make_log(variant=v) for v in ("gs_shif", "shif", "lqr")})
        assert report.passed
        assert "phi: gs_shif <= shif" in report.verdicts
        assert report.verdicts["h: spread"]

    def test_ordering_failure(self):
        wobble = np.radians(3.0)
        logs = {
            "gs_shif": make_log(roll=lambda t: wobble * np.sin(t), variant="gs_shif"),
            "shif": make_log(variant="shif"),
            "lqr": make_log(variant="lqr"),
        }
        report = compare("2", logs)
        assert not report.verdicts["phi: gs_shif <= shif"]
        assert report.verdicts["phi: shif <= lqr"]
        assert not report.passed

    def test_altitude_spread(self):
        logs = {"gs_shif": make_log(altitude_offset=0.5), "lqr": make_log(altitude_offset=1.0)}
        assert not compare("1", logs).verdicts["h: spread"]

    def test_tables(self):
        reports = [compare("1", {v: make_log(variant=v) for v in ("lqr", "gs_shif")})]
        assert [row[1] for row in reports[0].rows()] == ["gs_shif", "lqr"]
        text = report_table(reports)
        assert "e_phi (deg)" in text and "all pass" in text
        (row,) = bar_chart_rows(reports, "theta")
        assert row[0] == "1" and row[1] == 0.0 and np.isnan(row[2])


class TestGates:
    def test_convergence(self):
        check = convergence_check(make_log(altitude_offset=0.3, variant="gs_shif"))
        assert check.name == "case/gs_shif"
        assert check.altitude_error == pytest.approx(0.3)
        assert check.passed()
        assert not convergence_check(make_log(airspeed=9.0)).passed()

    def test_named_gates(self):
        report = compare("1", {v: make_log(variant=v) for v in ("gs_shif", "shif")})
        failing = ConvergenceCheck("case1/lqr", 3.0, 0.1, True)
        gates = acceptance_gates([report], [failing], rp_gate=True)
        assert gates["robust performance, points 3-6"]
        assert not gates["convergence case1/lqr"]
        assert gates["tracking order case 1"]
