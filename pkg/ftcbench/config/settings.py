"""
Workbench configuration: file paths, frequency grid, optimizer settings
"""

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Union

from ftcbench.core.errors import ConfigError
from ftcbench.core.linsys import FrequencyGrid
from ftcbench.core.parser import DATA_DIR, lookup, read_json

DEFAULT_CONFIG = DATA_DIR / "workbench.json"
THREADS_ENV = "FTC_WORKBENCH_THREADS"
CASES = ("none", "1", "2")


@dataclass(frozen=True)
class WorkbenchConfig:
    """Resolved workbench settings; relative paths are anchored at the config file"""
    source: Path
    fixture: Path
    weights: Path
    scenarios: Dict[str, Path]
    output_dir: Path
    omega_min: float = 1e-3
    omega_max: float = 1e3
    points: int = 400
    seed: int = 0
    budget: int = 2000
    starts: int = 8
    shif_point: int = 4
    design_points: Optional[tuple] = field(default=None)

    def __post_init__(self):
        if not 0.0 < self.omega_min < self.omega_max:
            raise ConfigError("grid needs 0 < omega_min < omega_max")
        if self.points < 2:
            raise ConfigError("grid needs at least two points")
        if self.budget < 1 or self.starts < 1:
            raise ConfigError("synthesis budget and starts must be positive")
        missing = set(CASES) - set(self.scenarios)
        if missing:
            raise ConfigError(f"scenario files missing for cases: {sorted(missing)}")

    def grid(self) -> FrequencyGrid:
        return FrequencyGrid.logspace(self.omega_min, self.omega_max, self.points)

    def scenario_path(self, case: str) -> Path:
        try:
            return self.scenarios[str(case)]
        except KeyError as e:
            raise ConfigError(f"unknown case {case!r}, expected one of {CASES}") from e

    def with_overrides(self, output_dir: Optional[Union[str, Path]] = None, seed: Optional[int] = None,
                       design_points: Optional[tuple] = None) -> "WorkbenchConfig":
        changes: Dict[str, Any] = {}
        if output_dir is not None:
            changes["output_dir"] = Path(output_dir)
        if seed is not None:
            changes["seed"] = int(seed)
        if design_points is not None:
            changes["design_points"] = tuple(int(p) for p in design_points)
        return replace(self, **changes)

    def canonical(self) -> Dict[str, Any]:
        """Result-relevant settings; the output directory is excluded"""
        return {
            "fixture": self.fixture.name,
            "weights": self.weights.name,
            "scenarios": {case: path.name for case, path in sorted(self.scenarios.items())},
            "grid": {"omega_min": self.omega_min, "omega_max": self.omega_max, "points": self.points},
            "seed": self.seed,
            "synthesis": {"budget": self.budget, "starts": self.starts},
            "shif_point": self.shif_point,
            "design_points": list(self.design_points) if self.design_points else None,
        }

    def referenced_files(self):
        return [self.fixture, self.weights] + [self.scenarios[case] for case in sorted(self.scenarios)]


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else (base / path).resolve()


def load_config(file_path: Optional[Union[str, Path]] = None) -> WorkbenchConfig:
    """Load workbench.json (packaged default when no path is given)"""
    source = Path(file_path) if file_path else DEFAULT_CONFIG
    document = read_json(source)
    base = source.resolve().parent
    scenarios = lookup(document, "scenarios", {})
    try:
        config = WorkbenchConfig(
            source=source,
            fixture=_resolve(base, document["fixture"]),
            weights=_resolve(base, document["weights"]),
            scenarios={str(case): _resolve(base, path) for case, path in scenarios.items()},
            output_dir=_resolve(Path.cwd(), lookup(document, "output_dir", "ftcbench-out")),
            omega_min=float(lookup(document, "grid.omega_min", 1e-3)),
            omega_max=float(lookup(document, "grid.omega_max", 1e3)),
            points=int(lookup(document, "grid.points", 400)),
            seed=int(lookup(document, "seed", 0)),
            budget=int(lookup(document, "synthesis.budget", 2000)),
            starts=int(lookup(document, "synthesis.starts", 8)),
            shif_point=int(lookup(document, "shif_point", 4)),
        )
    except KeyError as e:
        raise ConfigError(f"{source}: missing key {e}") from e
    for path in config.referenced_files():
        if not path.is_file():
            raise ConfigError(f"{source}: referenced file not found: {path}")
    return config


def config_hash(config: WorkbenchConfig) -> str:
    """SHA-256 over the canonical settings JSON and every referenced file"""
    digest = hashlib.sha256()
    digest.update(json.dumps(config.canonical(), sort_keys=True, separators=(",", ":")).encode("utf-8"))
    for path in config.referenced_files():
        digest.update(path.read_bytes())
    return digest.hexdigest()


def worker_count() -> int:
    """Process cap from FTC_WORKBENCH_THREADS, defaulting to the CPU count"""
    value = os.environ.get(THREADS_ENV)
    if value is None:
        return os.cpu_count() or 1
    try:
        return max(1, int(value))
    except ValueError as e:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {value!r}") from e
