"""
Robustness Module
Nominal closed-loop pole report and SISO mu-analysis for robust stability
and robust performance of the tuned attitude loops.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from ftcbench.core.errors import UnstableNominal
from ftcbench.core.linsys import (
    STABILITY_MARGIN,
    FrequencyGrid,
    Peak,
    RationalTF,
    default_grid,
    evaluate,
    is_stable,
    peak,
    poles,
)
from ftcbench.core.models import AeroCoefficientTable, AircraftParameters, Axis, design_points
from ftcbench.modules.synthesis import (
    DEFAULT_OMEGA_A,
    SynthesisResult,
    WeightTable,
    closed_loop,
    design_plant,
    design_weights,
)

logger = logging.getLogger(__name__)

RP_GATE_POINTS = (3, 4, 5, 6)
CSV_HEADER = ("axis", "point", "mu_rs", "mu_rp", "w_rs", "w_rp", "pass")


@dataclass(frozen=True)
class PoleReport:
    axis: Axis
    point: int
    poles: Tuple[complex, ...]
    stable: bool


@dataclass(frozen=True)
class MuEntry:
    axis: Axis
    point: int
    mu_rs: float
    mu_rp: float
    w_rs: float
    w_rp: float

    @property
    def rs_pass(self) -> bool:
        return self.mu_rs < 1.0

    @property
    def rp_pass(self) -> bool:
        return self.mu_rp < 1.0

    def row(self):
        return (self.axis.value, self.point, self.mu_rs, self.mu_rp, self.w_rs, self.w_rp,
                int(self.rs_pass and self.rp_pass))


def _require_stable(*loops: RationalTF):
    for tf in loops:
        if not is_stable(tf):
            raise UnstableNominal("mu test presupposes a stable nominal loop")


def mu_rs(W_t: RationalTF, T: RationalTF, grid: Optional[FrequencyGrid] = None) -> Peak:
    """Robust stability: peak of |W_t T| (exact mu for one complex scalar block)"""
    _require_stable(T)
    grid = grid or default_grid()
    return peak(lambda w: np.abs(evaluate(W_t, w) * evaluate(T, w)), grid)


def mu_rp(W_s: RationalTF, S: RationalTF, W_t: RationalTF, T: RationalTF,
          grid: Optional[FrequencyGrid] = None) -> Peak:
    """Robust performance: peak of |W_s S| + |W_t T|"""
    _require_stable(S, T)
    grid = grid or default_grid()
    return peak(lambda w: np.abs(evaluate(W_s, w) * evaluate(S, w))
                + np.abs(evaluate(W_t, w) * evaluate(T, w)), grid)


def nominal_pole_report(results: Dict[Tuple[Axis, int], SynthesisResult], p: AircraftParameters,
                        a: AeroCoefficientTable, omega_a: float = DEFAULT_OMEGA_A) -> List[PoleReport]:
    """Closed-loop poles of every tuned loop with its nominal plant and actuator lag"""
    speeds = {pt.index: pt.V_bar for pt in design_points()}
    report = []
    for (axis, index), result in sorted(results.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
        loop = closed_loop(design_plant(axis, p, a, speeds[index], omega_a), result.gains)
        roots = poles(loop.S) if loop.S.den_degree >= 1 else np.zeros(0)
        stable = bool(np.all(roots.real < -STABILITY_MARGIN))
        report.append(PoleReport(axis, index, tuple(complex(r) for r in roots), stable))
        if not stable:
            logger.warning("%s point %d: nominal closed loop unstable", axis.value, index)
    return report


@dataclass(frozen=True)
class MuReport:
    entries: Tuple[MuEntry, ...]

    def entry(self, axis: Axis, point: int) -> MuEntry:
        for e in self.entries:
            if e.axis == axis and e.point == point:
                return e
        raise KeyError((axis, point))

    def rows(self) -> List[tuple]:
        return [e.row() for e in self.entries]

    def rp_gate(self, points: Iterable[int] = RP_GATE_POINTS) -> bool:
        """True iff every listed design point passes robust performance on every axis"""
        wanted = set(points)
        return all(e.rp_pass for e in self.entries if e.point in wanted)

    def summary_table(self) -> str:
        """Plain-text table: one row per design point, RS/RP columns per axis"""
        indices = sorted({e.point for e in self.entries})
        header = "Point | " + " | ".join(f"{axis.value:^17}" for axis in Axis)
        sub = "      | " + " | ".join(f"{'mu_RS':>8} {'mu_RP':>8}" for _ in Axis)
        lines = [header, sub, "-" * len(header)]
        for index in indices:
            cells = []
            for axis in Axis:
                try:
                    e = self.entry(axis, index)
                    cells.append(f"{e.mu_rs:8.3f} {e.mu_rp:8.3f}")
                except KeyError:
                    cells.append(f"{'-':>8} {'-':>8}")
            lines.append(f"{index:^5} | " + " | ".join(cells))
        return "\n".join(lines)


def build_mu_report(results: Dict[Tuple[Axis, int], SynthesisResult], p: AircraftParameters,
                    a: AeroCoefficientTable, table: WeightTable,
                    grid: Optional[FrequencyGrid] = None) -> MuReport:
    grid = grid or default_grid()
    points = {pt.index: pt for pt in design_points()}
    entries = []
    for (axis, index), result in sorted(results.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
        point = points[index]
        weights = design_weights(axis, point, table, p, a, grid)
        loop = closed_loop(design_plant(axis, p, a, point.V_bar, table.omega_a), result.gains)
        rs = mu_rs(weights.W_t, loop.T, grid)
        rp = mu_rp(weights.W_s, loop.S, weights.W_t, loop.T, grid)
        # the two refinements search different intervals
        at_rs = float(np.abs(evaluate(weights.W_s, rs.omega) * evaluate(loop.S, rs.omega))) + rs.value
        if at_rs > rp.value:
            rp = Peak(at_rs, rs.omega)
        entries.append(MuEntry(axis, index, rs.value, rp.value, rs.omega, rp.omega))
        level = logging.INFO if rp.value < 1.0 or index not in RP_GATE_POINTS else logging.WARNING
        logger.log(level, "%s point %d: mu_RS=%.3f mu_RP=%.3f", axis.value, index, rs.value, rp.value)
    return MuReport(tuple(entries))
