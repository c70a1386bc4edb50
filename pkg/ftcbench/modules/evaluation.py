"""
Evaluation Module
Reference-tracking RMSE of simulation logs and the cross-variant comparison
(GS_SHIF against SHIF against LQR) per fault case.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ftcbench.core.errors import EmptyWindow, WindowMismatch
from ftcbench.modules.simulator import SimLog, Variant

logger = logging.getLogger(__name__)

CHANNELS = ("h", "phi", "theta", "psi")
ATTITUDE_CHANNELS = ("phi", "theta", "psi")
UNITS = {"h": "m", "phi": "deg", "theta": "deg", "psi": "deg"}
WINDOW_START = 20.0
ORDERING_SLACK = 1.05
ALTITUDE_SPREAD = 1.10
VARIANT_ORDER = (Variant.GS_SHIF.value, Variant.SHIF.value, Variant.LQR.value)
TIME_TOL = 1e-9


def rmse(log: SimLog, channel: str, window: Tuple[float, float]) -> float:
    """
    Root mean square of reference minus actual over the closed window
    Altitude in m, attitude channels in deg
    """
    start, end = window
    mask = (log.t >= start - TIME_TOL) & (log.t <= end + TIME_TOL)
    if not np.any(mask):
        raise EmptyWindow(f"{log.name or 'log'}: no samples of {channel} in [{start}, {end}] s")
    reference, actual = log.channel(channel)
    error = reference[mask] - actual[mask]
    if channel in ATTITUDE_CHANNELS:
        error = np.degrees(np.arctan2(np.sin(error), np.cos(error)))
    return float(np.sqrt(np.mean(error * error)))


def common_window(logs: Iterable[SimLog], start: float = WINDOW_START) -> Tuple[float, float]:
    """[start, earliest end] shared by every log; logs must share one sample interval"""
    logs = list(logs)
    intervals = {round(log.sample_interval, 12) for log in logs}
    if len(intervals) > 1:
        raise WindowMismatch(f"logs have different sample intervals: {sorted(intervals)}")
    end = min(float(log.t[-1]) for log in logs)
    for log in logs:
        if log.t[0] > start + TIME_TOL:
            raise WindowMismatch(f"{log.name or 'log'} starts after the window start {start} s")
    if end < start:
        raise WindowMismatch(f"logs end at {end:.2f} s, before the window start {start} s")
    return start, end


@dataclass
class TrackingReport:
    """RMSE table of one case and its ordering verdicts"""
    case: str
    window: Tuple[float, float]
    errors: Dict[str, Dict[str, float]]
    verdicts: Dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def rows(self) -> List[tuple]:
        return [(self.case, variant) + tuple(self.errors[variant][ch] for ch in CHANNELS)
                for variant in _ordered(self.errors)]


def _ordered(variants: Iterable[str]) -> List[str]:
    present = list(variants)
    return [v for v in VARIANT_ORDER if v in present] + sorted(v for v in present if v not in VARIANT_ORDER)


def _verdicts(errors: Dict[str, Dict[str, float]]) -> Dict[str, bool]:
    verdicts = {}
    gs, shif, lqr = VARIANT_ORDER
    for channel in ATTITUDE_CHANNELS:
        for better, worse in ((gs, shif), (shif, lqr)):
            if better in errors and worse in errors:
                verdicts[f"{channel}: {better} <= {worse}"] = \
                    errors[better][channel] <= ORDERING_SLACK * errors[worse][channel]
    altitude = [errors[v]["h"] for v in errors]
    if len(altitude) > 1:
        low, high = min(altitude), max(altitude)
        verdicts["h: spread"] = high == 0.0 or (low > 0.0 and high / low <= ALTITUDE_SPREAD)
    return verdicts


def compare(case: str, logs: Dict[str, SimLog], start: float = WINDOW_START) -> TrackingReport:
    """RMSE per variant over the shared window, with the ordering and altitude verdicts"""
    window = common_window(logs.values(), start)
    errors = {variant: {ch: rmse(log, ch, window) for ch in CHANNELS} for variant, log in logs.items()}
    report = TrackingReport(str(case), window, errors, _verdicts(errors))
    for name, ok in report.verdicts.items():
        if not ok:
            logger.warning("case %s: verdict failed: %s", case, name)
    return report


def report_table(reports: Sequence[TrackingReport]) -> str:
    """Plain-text RMSE table: one block per case, one row per variant"""
    header = f"{'Case':<6} {'Method':<9} " + " ".join(f"{f'e_{ch} ({UNITS[ch]})':>14}" for ch in CHANNELS)
    lines = [header, "-" * len(header)]
    for report in reports:
        for row in report.rows():
            lines.append(f"{row[0]:<6} {row[1]:<9} " + " ".join(f"{v:14.4f}" for v in row[2:]))
        failed = [name for name, ok in report.verdicts.items() if not ok]
        lines.append(f"{'':<6} verdicts: " + ("all pass" if not failed else "FAILED " + "; ".join(failed)))
    return "\n".join(lines)


def bar_chart_rows(reports: Sequence[TrackingReport], channel: str) -> List[tuple]:
    """(case, gs_shif, shif, lqr) rows of one channel for external plotting"""
    rows = []
    for report in reports:
        rows.append((report.case,) + tuple(report.errors.get(v, {}).get(channel, float("nan"))
                                          for v in VARIANT_ORDER))
    return rows


@dataclass(frozen=True)
class ConvergenceCheck:
    """End-of-run tracking of one log"""
    name: str
    altitude_error: float
    attitude_error_deg: float
    reached_stall_speed: bool

    def passed(self, altitude_tol: float = 1.0, attitude_tol_deg: float = 2.0) -> bool:
        return (self.reached_stall_speed and self.altitude_error <= altitude_tol
                and self.attitude_error_deg <= attitude_tol_deg)


def convergence_check(log: SimLog, target_airspeed: float = 13.0) -> ConvergenceCheck:
    altitude_ref, altitude = log.channel("h")
    attitude = []
    for channel in ATTITUDE_CHANNELS:
        reference, actual = log.channel(channel)
        attitude.append(abs(np.degrees(np.arctan2(np.sin(reference[-1] - actual[-1]),
                                                  np.cos(reference[-1] - actual[-1])))))
    return ConvergenceCheck(
        name=f"{log.name}/{log.variant}" if log.variant else log.name,
        altitude_error=float(abs(altitude_ref[-1] - altitude[-1])),
        attitude_error_deg=float(max(attitude)),
        reached_stall_speed=bool(np.max(log.airspeed) >= target_airspeed),
    )


def acceptance_gates(reports: Sequence[TrackingReport], checks: Sequence[ConvergenceCheck] = (),
                     rp_gate: Optional[bool] = None) -> Dict[str, bool]:
    """Named pass flags for the end-to-end run"""
    gates = {}
    if rp_gate is not None:
        gates["robust performance, points 3-6"] = rp_gate
    for check in checks:
        gates[f"convergence {check.name}"] = check.passed()
    for report in reports:
        gates[f"tracking order case {report.case}"] = report.passed
    return gates
