"""
Parsing utilities for the JSON fixture, weight and scenario files
"""

import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from .errors import ConfigError
from .models import AeroCoefficientTable, AircraftParameters, ROTOR_NAMES

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
DEFAULT_FIXTURE = DATA_DIR / "aircraft.json"

PathLike = Union[str, Path]


def read_json(file_path: PathLike) -> Dict[str, Any]:
    """Load a JSON document, turning I/O and syntax problems into ConfigError"""
    path = Path(file_path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e


def require(document: Dict[str, Any], dotted_key: str) -> Any:
    """Fetch a nested value by dotted key, e.g. 'fault.time'"""
    node: Any = document
    for part in dotted_key.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"missing key '{dotted_key}'")
        node = node[part]
    return node


def lookup(document: Dict[str, Any], dotted_key: str, default: Any = None) -> Any:
    try:
        return require(document, dotted_key)
    except ConfigError:
        return default


def parse_aircraft(section: Dict[str, Any]) -> AircraftParameters:
    spin = section.get("rotor_spin", {})
    try:
        return AircraftParameters(
            mass=float(section["mass"]),
            J_x=float(section["J_x"]),
            J_y=float(section["J_y"]),
            J_z=float(section["J_z"]),
            S=float(section["S"]),
            b=float(section["b"]),
            c_bar=float(section["c_bar"]),
            rho=float(section.get("rho", 1.225)),
            l1=float(section["l1"]),
            l2=float(section["l2"]),
            l3=float(section["l3"]),
            l4=float(section["l4"]),
            l_r=float(section["l_r"]),
            l_f=float(section["l_f"]),
            rotor_thrust_coeff=float(section["rotor_thrust_coeff"]),
            rotor_torque_coeff=float(section["rotor_torque_coeff"]),
            rotor_spin=tuple(int(spin[name]) for name in ROTOR_NAMES),
            hrotor_thrust_coeff=float(section["hrotor_thrust_coeff"]),
            hrotor_offset=float(section["hrotor_offset"]),
            surface_limit=float(section["surface_limit"]),
            stall_speed=float(section["stall_speed"]),
        )
    except KeyError as e:
        raise ConfigError(f"aircraft section is missing {e}") from e


def parse_aero(section: Dict[str, Any]) -> AeroCoefficientTable:
    try:
        return AeroCoefficientTable(
            breakpoints=np.asarray(section["breakpoints"], dtype=float),
            C_lp=np.asarray(section["C_lp"], dtype=float),
            C_mq=np.asarray(section["C_mq"], dtype=float),
            C_Malpha=np.asarray(section["C_Malpha"], dtype=float),
            C_nr=np.asarray(section["C_nr"], dtype=float),
            C_Nbeta=np.asarray(section["C_Nbeta"], dtype=float),
            alpha_breakpoints=np.radians(np.asarray(section["alpha_breakpoints_deg"], dtype=float)),
            C_L=np.asarray(section["C_L"], dtype=float),
            C_D=np.asarray(section["C_D"], dtype=float),
            C_l_da=float(section["C_l_da"]),
            C_m_de=float(section["C_m_de"]),
            C_n_dr=float(section["C_n_dr"]),
            C_Y_beta=float(section["C_Y_beta"]),
            alpha_zero_moment=float(section["alpha_zero_moment"]),
        )
    except KeyError as e:
        raise ConfigError(f"aero section is missing {e}") from e


def load_fixture(file_path: Optional[PathLike] = None) -> Tuple[AircraftParameters, AeroCoefficientTable]:
    """
    Parse the aircraft fixture
    Expected keys: aircraft.* (inertia, geometry, rotor coefficients) and
    aero.* (breakpoints, derivative tables, lift/drag tables)
    """
    document = read_json(file_path or DEFAULT_FIXTURE)
    aircraft = parse_aircraft(require(document, "aircraft"))
    aero = parse_aero(require(document, "aero"))
    return aircraft, aero
