"""
Scheduler Module
Piecewise-linear airspeed scheduling of the cascaded attitude gains.
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from ftcbench.core.errors import IncompleteSchedule
from ftcbench.core.models import Axis, design_points
from ftcbench.modules.synthesis import CascadedGains, SynthesisResult, import_document


@dataclass(frozen=True, eq=False)
class GainSchedule:
    """Gain vectors per axis at the design-point airspeeds"""
    breakpoints: Tuple[float, ...]
    table: Dict[Axis, Tuple[Optional[CascadedGains], ...]]

    def __post_init__(self):
        if np.any(np.diff(self.breakpoints) <= 0.0):
            raise ValueError("schedule breakpoints must be strictly increasing")
        for axis, row in self.table.items():
            if len(row) != len(self.breakpoints):
                raise ValueError(f"{axis.value}: one gain entry per breakpoint expected")

    @classmethod
    def from_results(cls, results: Dict[Tuple[Axis, int], SynthesisResult]) -> "GainSchedule":
        points = design_points()
        table = {
            axis: tuple(results[(axis, pt.index)].gains if (axis, pt.index) in results else None
                        for pt in points)
            for axis in Axis
        }
        return cls(tuple(pt.V_bar for pt in points), table)

    @classmethod
    def from_export(cls, document: Dict[str, Any]) -> "GainSchedule":
        results, _ = import_document(document)
        return cls.from_results(results)

    @classmethod
    def constant(cls, gains: Dict[Axis, CascadedGains]) -> "GainSchedule":
        """One gain set at every airspeed (the non-scheduled baseline)"""
        points = design_points()
        return cls(tuple(pt.V_bar for pt in points),
                   {axis: tuple(gains[axis] for _ in points) for axis in Axis})

    def _matrix(self, axis: Axis) -> np.ndarray:
        row = self.table.get(axis)
        if row is None or any(g is None for g in row):
            missing = [] if row is None else [self.breakpoints[k] for k, g in enumerate(row) if g is None]
            raise IncompleteSchedule(f"{axis.value}: no gains at V = {missing or 'all breakpoints'}")
        return np.array([g.as_vector() for g in row])

    def is_complete(self) -> bool:
        return all(self.table.get(axis) is not None and None not in self.table[axis] for axis in Axis)

    def gains_at(self, axis: Axis, V: float) -> CascadedGains:
        """Componentwise linear interpolation; clamped outside the breakpoint span"""
        matrix = self._matrix(axis)
        return CascadedGains.from_vector(
            np.interp(V, self.breakpoints, matrix[:, k]) for k in range(matrix.shape[1]))


def gains_at(schedule: GainSchedule, axis: Axis, V: float) -> CascadedGains:
    return schedule.gains_at(axis, V)


def shif_gains(results: Dict[Tuple[Axis, int], SynthesisResult], point: int,
               axes: Sequence[Axis] = tuple(Axis)) -> GainSchedule:
    """Constant schedule holding one design point's gains"""
    try:
        return GainSchedule.constant({axis: results[(axis, point)].gains for axis in axes})
    except KeyError as e:
        raise IncompleteSchedule(f"no synthesis result for {e.args[0]}") from e
