"""Configuration schema, defaults, validation and model building.

Configs are plain JSON with one section per subsystem plus a ``task``
section (what to do) kept apart from the ``operator`` section (how to do
it).  Unknown keys are rejected with their dotted path; missing keys fall
back to the reference defaults and are reported.  Keys starting with an
underscore are ignored everywhere, so files can carry provenance notes.

Every numeric default below is a calibration choice for a generic mid-size
loader, not a measured machine.
"""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path
from typing import Any

from . import environment as env
from . import machine as mach
from . import operator as op
from .errors import ConfigError
from .kernel import SmoothStepSpec, Table1D, Table2D
from .sim import SimConfig

DEFAULTS: dict[str, Any] = {
    "engine": {
        "idle_speed": 80.0,
        "rated_speed": 220.0,
        "rated_torque": 1100.0,
        "inertia": 4.0,
        "governor_gain": 25.0,
        "max_torque_curve": {
            "knots": [84.0, 110.0, 140.0, 180.0, 220.0, 253.0],
            "values": [950.0, 1250.0, 1350.0, 1300.0, 1100.0, 0.0],
        },
        "fuel_map": {
            "speed_knots": [84.0, 140.0, 220.0, 253.0],
            "torque_knots": [0.0, 340.0, 680.0, 1020.0, 1360.0],
            "bsfc": [
                [520.0, 262.0, 236.0, 229.0, 227.0],
                [560.0, 255.0, 224.0, 213.0, 211.0],
                [680.0, 310.0, 264.0, 250.0, 247.0],
                [780.0, 360.0, 300.0, 282.0, 277.0],
            ],
        },
    },
    "converter": {
        "speed_ratio_knots": [0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 1.0],
        "capacity": [0.032, 0.031, 0.029, 0.026, 0.021, 0.017, 0.0035],
        "torque_ratio": [2.4, 2.1, 1.8, 1.5, 1.2, 1.0, 1.0],
        "coupling_ratio": 0.9,
        "capacity_scale": 1.0,
    },
    "driveline": {
        "gear_ratios": {"F1": 55.0, "F2": 40.0, "R1": -55.0, "R2": -40.0},
        "efficiency": {"F1": 0.92, "F2": 0.92, "R1": 0.92, "R2": 0.92},
        "wheel_radius": 0.75,
        "wheel_inertia": 2500.0,
        "vehicle_mass": 23000.0,
        "rolling_resistance_coeff": 0.065,
        "traction_curve": {
            "knots": [0.0, 0.22, 1.5],
            "values": [0.0, 0.78, 0.78],
        },
        "static_axle_split": 0.58,
        "load_transfer_gain": 0.28,
        "brake_force_max": 90000.0,
        "steer_curvature_gain": 0.35,
    },
    "linkage": {
        "boom_pivot_x": 1.0,
        "boom_pivot_z": 0.8915,
        "boom_length": 2.6,
        "edge_offset": 1.1,
        "lift_angle_range": [-0.55, 0.95],
        "bucket_angle_range": [-1.45, 0.95],
        "ref_lift_angle": -0.35,
        "ref_bucket_angle": 0.35,
        "bucket_capacity": 3.0,
        "tip_mass_equiv": 2600.0,
        "spill_edge_angle": -0.35,
        "spill_rate": 8.0,
    },
    "hydraulics": {
        "pump_displacement": 2.6e-5,
        "relief_pressure": 3.0e7,
        "lift_cyl_area": 0.030,
        "tilt_cyl_area": 0.022,
        "lift_lever_arm": 0.50,
        "tilt_lever_arm": 0.40,
        "lift_valve": {"deadband": 0.05, "full": 0.95},
        "tilt_valve": {"deadband": 0.05, "full": 0.95},
        "parasitic_power": 5000.0,
        "min_pressure": 1.2e6,
    },
    "pile": {
        "toe_x": 0.0,
        "slope_angle": 0.611,
        "crest_height": 4.0,
        "specific_resistance": 600000.0,
        "fill_gain": 1.0,
        "material_density": 1700.0,
        "fill_drag": 12000.0,
        "clearance_penalty_gain": 1.0,
    },
    "operator": {
        "slip_cap_low": 0.15,
        "slip_cap_high": 0.30,
        "throttle_cap_floor": 0.5,
        "slip_integral_low": 0.35,
        "slip_integral_high": 0.9,
        "lift_boost_max": 0.45,
        "bearing_dev_threshold": 0.15,
        "bvv_ramp_rate": 0.4,
        "bvv_max": 0.28,
        "target_clearance": 0.06,
        "target_attack": 0.05,
        "clearance_gain": 0.15,
        "attack_gain": 1.3,
        "exit_bucket_angle": 0.30,
        "exit_lift_angle": 0.55,
        "tilt_back_angle": 0.88,
        "base_throttle": 0.95,
        "base_lift": 0.38,
        "approach_speed": 1.3,
        "approach_shift_distance": 3.0,
        "travel_speed": 3.0,
        "reverse_speed": 2.2,
        "speed_gain": 0.55,
        "brake_gain": 0.8,
        "steer_gain": 1.6,
        "dump_empty_angle": -1.38,
        "dump_throttle": 0.35,
        "carry_bucket_angle": 0.85,
        "ramp_throttle": 5.0,
        "ramp_brake": 5.0,
        "ramp_steer": 5.0,
        "ramp_lift": 5.0,
        "ramp_tilt": 5.0,
    },
    "sim": {
        "dt": 0.001,
        "log_decimation": 10,
        "max_sim_time": 120.0,
        "marker_interval": 0.5,
        "random_seed": 0,
        "shift_interlock": 0.3,
        "dig_force_lag": 0.08,
        "phase_timeouts": {
            "ApproachPile": 30.0,
            "Fill": 30.0,
            "LeavePileReverse": 25.0,
            "HaulToReceiver": 45.0,
            "Dump": 25.0,
            "ReverseFromReceiver": 25.0,
            "ReturnOrStop": 15.0,
        },
    },
    "task": {
        "start_x": -13.0,
        "start_y": 0.0,
        "start_heading": 0.0,
        "reverse_point_x": -12.0,
        "receiver_x": -3.0,
        "receiver_y": 14.0,
        "receiver_stop_distance": 1.8,
        "dump_height": 3.0,
        "reverse_clear_distance": 6.5,
    },
}


def reference_config() -> dict:
    """A deep copy of the calibrated reference configuration."""
    return copy.deepcopy(DEFAULTS)


def _merge(defaults: Any, given: Any, path: str, notes: list[str]) -> Any:
    """Overlay ``given`` on ``defaults``, rejecting unknown keys."""
    if isinstance(defaults, dict):
        if not isinstance(given, dict):
            raise ConfigError(path or "<root>", f"expected an object, got {type(given).__name__}")
        out = {}
        for key, sub_default in defaults.items():
            sub_path = f"{path}.{key}" if path else key
            if key in given:
                out[key] = _merge(sub_default, given[key], sub_path, notes)
            else:
                out[key] = copy.deepcopy(sub_default)
                notes.append(f"{sub_path}: missing, default substituted")
        for key in given:
            if key.startswith("_"):
                continue
            if key not in defaults:
                raise ConfigError(f"{path}.{key}" if path else key, "unknown key")
        return out
    # Leaves: numbers, strings, and numeric arrays.
    if isinstance(defaults, bool) or isinstance(given, bool):
        raise ConfigError(path, "booleans are not used in this schema")
    if isinstance(defaults, (int, float)):
        if not isinstance(given, (int, float)):
            raise ConfigError(path, f"expected a number, got {type(given).__name__}")
        if not math.isfinite(float(given)):
            raise ConfigError(path, "value must be finite")
        return float(given) if isinstance(defaults, float) else int(given)
    if isinstance(defaults, str):
        if not isinstance(given, str):
            raise ConfigError(path, f"expected a string, got {type(given).__name__}")
        return given
    if isinstance(defaults, list):
        if not isinstance(given, list):
            raise ConfigError(path, f"expected an array, got {type(given).__name__}")
        out = []
        for i, item in enumerate(given):
            if isinstance(item, list):
                out.append(_merge([0.0], item, f"{path}[{i}]", notes))
            else:
                if isinstance(item, bool) or not isinstance(item, (int, float)):
                    raise ConfigError(f"{path}[{i}]", "expected a number")
                if not math.isfinite(float(item)):
                    raise ConfigError(f"{path}[{i}]", "value must be finite")
                out.append(float(item))
        return out
    raise ConfigError(path, f"unsupported schema node {type(defaults).__name__}")


def _merge_list_of_numbers(given: list, path: str) -> list[float]:
    out = []
    for i, item in enumerate(given):
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise ConfigError(f"{path}[{i}]", "expected a number")
        out.append(float(item))
    return out


def resolve(raw: dict) -> tuple[dict, list[str]]:
    """Overlay a raw config dict onto the defaults.

    Returns the fully resolved config and the list of defaulting notes.
    Unknown keys raise ConfigError with their dotted path.
    """
    notes: list[str] = []
    resolved = _merge(DEFAULTS, raw, "", notes)
    return resolved, notes


def load_config_file(path: str | Path) -> tuple[dict, list[str]]:
    """Read, resolve and default a JSON config file."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(str(path), f"invalid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(str(path), "top level must be an object")
    return resolve(raw)


# ---------------------------------------------------------------------------
# Model building
# ---------------------------------------------------------------------------


def _table(d: dict, path: str) -> Table1D:
    try:
        return Table1D(d["knots"], d["values"])
    except ValueError as e:
        raise ConfigError(path, str(e)) from e


def _valve(d: dict, path: str) -> SmoothStepSpec:
    try:
        return SmoothStepSpec(d["deadband"], 0.0, d["full"], 1.0)
    except ValueError as e:
        raise ConfigError(path, str(e)) from e


def build_sim_config(resolved: dict) -> SimConfig:
    """Turn a resolved config dict into validated model objects."""
    e = resolved["engine"]
    try:
        fuel_map = Table2D(e["fuel_map"]["speed_knots"], e["fuel_map"]["torque_knots"],
                           e["fuel_map"]["bsfc"])
    except ValueError as err:
        raise ConfigError("engine.fuel_map", str(err)) from err
    engine = mach.EngineModel(
        max_torque_curve=_table(e["max_torque_curve"], "engine.max_torque_curve"),
        idle_speed=e["idle_speed"], rated_speed=e["rated_speed"],
        rated_torque=e["rated_torque"], inertia=e["inertia"],
        fuel_map=fuel_map, governor_gain=e["governor_gain"])

    c = resolved["converter"]
    try:
        capacity = Table1D(c["speed_ratio_knots"], c["capacity"])
        torque_ratio = Table1D(c["speed_ratio_knots"], c["torque_ratio"])
    except ValueError as err:
        raise ConfigError("converter", str(err)) from err
    converter = mach.ConverterMap(capacity=capacity, torque_ratio=torque_ratio,
                                  coupling_ratio=c["coupling_ratio"])
    converter.validate("converter")
    if c["capacity_scale"] <= 0.0:
        raise ConfigError("converter.capacity_scale", "must be positive")
    if c["capacity_scale"] != 1.0:
        converter = mach.scale_converter(converter, c["capacity_scale"])

    d = resolved["driveline"]
    driveline = mach.DrivelineModel(
        gear_ratios={k: float(v) for k, v in d["gear_ratios"].items()},
        efficiency={k: float(v) for k, v in d["efficiency"].items()},
        wheel_radius=d["wheel_radius"], wheel_inertia=d["wheel_inertia"],
        vehicle_mass=d["vehicle_mass"],
        rolling_resistance_coeff=d["rolling_resistance_coeff"],
        traction_curve=_table(d["traction_curve"], "driveline.traction_curve"),
        static_axle_split=d["static_axle_split"],
        load_transfer_gain=d["load_transfer_gain"],
        brake_force_max=d["brake_force_max"],
        steer_curvature_gain=d["steer_curvature_gain"])

    l = resolved["linkage"]
    linkage = mach.LinkageModel(
        boom_pivot_x=l["boom_pivot_x"], boom_pivot_z=l["boom_pivot_z"],
        boom_length=l["boom_length"],
        lift_angle_range=tuple(l["lift_angle_range"]),
        bucket_angle_range=tuple(l["bucket_angle_range"]),
        edge_offset=l["edge_offset"], bucket_capacity=l["bucket_capacity"],
        ref_lift_angle=l["ref_lift_angle"], ref_bucket_angle=l["ref_bucket_angle"],
        tip_mass_equiv=l["tip_mass_equiv"],
        spill_edge_angle=l["spill_edge_angle"], spill_rate=l["spill_rate"])

    h = resolved["hydraulics"]
    hydraulics = mach.HydraulicsModel(
        pump_displacement=h["pump_displacement"], relief_pressure=h["relief_pressure"],
        lift_cyl_area=h["lift_cyl_area"], tilt_cyl_area=h["tilt_cyl_area"],
        lift_lever_arm=h["lift_lever_arm"], tilt_lever_arm=h["tilt_lever_arm"],
        lift_valve=_valve(h["lift_valve"], "hydraulics.lift_valve"),
        tilt_valve=_valve(h["tilt_valve"], "hydraulics.tilt_valve"),
        parasitic_power=h["parasitic_power"], min_pressure=h["min_pressure"])

    p = resolved["pile"]
    pile = env.PileModel(
        toe_x=p["toe_x"], slope_angle=p["slope_angle"], crest_height=p["crest_height"],
        specific_resistance=p["specific_resistance"], fill_gain=p["fill_gain"],
        material_density=p["material_density"], fill_drag=p["fill_drag"],
        clearance_penalty_gain=p["clearance_penalty_gain"])

    o = resolved["operator"]
    try:
        params = op.OperatorParams(**o)
        params.tc1_spec()
        params.tc2_spec()
    except (TypeError, ValueError) as err:
        raise ConfigError("operator", str(err)) from err

    t = resolved["task"]
    task = op.TaskDescription(
        start_x=t["start_x"], start_y=t["start_y"], start_heading=t["start_heading"],
        reverse_point_x=t["reverse_point_x"], receiver_x=t["receiver_x"],
        receiver_y=t["receiver_y"], receiver_stop_distance=t["receiver_stop_distance"],
        dump_height=t["dump_height"], reverse_clear_distance=t["reverse_clear_distance"])

    s = resolved["sim"]
    if s["dt"] <= 0.0:
        raise ConfigError("sim.dt", "must be positive")
    if int(s["log_decimation"]) < 1:
        raise ConfigError("sim.log_decimation", "must be >= 1")
    log_step = s["dt"] * int(s["log_decimation"])
    ratio = s["marker_interval"] / log_step
    if abs(ratio - round(ratio)) > 1e-9 or ratio < 1.0 - 1e-9:
        raise ConfigError("sim.marker_interval",
                          f"must be a multiple of dt*log_decimation = {log_step:g}")
    unknown_phases = set(s["phase_timeouts"]) - {ph.value for ph in op.Phase}
    if unknown_phases:
        raise ConfigError("sim.phase_timeouts", f"unknown phase(s): {sorted(unknown_phases)}")

    return SimConfig(
        dt=s["dt"], log_decimation=int(s["log_decimation"]),
        max_sim_time=s["max_sim_time"], marker_interval=s["marker_interval"],
        random_seed=int(s["random_seed"]), shift_interlock=s["shift_interlock"],
        dig_force_lag=s["dig_force_lag"],
        engine=engine, converter=converter, driveline=driveline, linkage=linkage,
        hydraulics=hydraulics, pile=pile, operator_params=params, task=task,
        phase_timeouts={k: float(v) for k, v in s["phase_timeouts"].items()})


def load_sim_config(path: str | Path) -> tuple[SimConfig, dict, list[str]]:
    """File path -> (built SimConfig, resolved dict, defaulting notes)."""
    resolved, notes = load_config_file(path)
    return build_sim_config(resolved), resolved, notes
