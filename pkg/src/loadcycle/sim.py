"""Fixed-step simulation loop coupling operator, machine and environment.

Substep order within one tick is fixed: the operator acts on the sensed
state from the end of the previous tick, then hydraulics, converter,
driveline and engine advance, then the environment (edge pose, dig contact,
dig force, bucket fill) is re-derived for the next tick.  This one-step-lag
explicit coupling removes every algebraic loop; at the default 1 ms step the
lag is far below any dynamics of interest and the step-halving regression
guards it.

A run is bit-deterministic: no wall clock, no ambient randomness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import environment as env
from . import machine as mach
from . import operator as op
from .errors import SimulationFault
from .kernel import clamp


@dataclass(frozen=True)
class SimConfig:
    """Fully built simulation setup (models already validated)."""

    dt: float
    log_decimation: int
    max_sim_time: float
    marker_interval: float
    random_seed: int            # reserved; the core is deterministic and seed-free
    shift_interlock: float      # torque-free window after a gear change, s
    dig_force_lag: float        # first-order lag on the applied dig force, s
    engine: mach.EngineModel
    converter: mach.ConverterMap
    driveline: mach.DrivelineModel
    linkage: mach.LinkageModel
    hydraulics: mach.HydraulicsModel
    pile: env.PileModel
    operator_params: op.OperatorParams
    task: op.TaskDescription
    phase_timeouts: dict[str, float]


LOG_COLUMNS = (
    "t", "phase", "gear",
    "throttle", "brake", "steer", "lift", "tilt",
    "x", "y", "heading", "v",
    "omega_engine", "engine_torque", "omega_wheel", "wheel_slip",
    "theta_lift", "theta_bucket", "bucket_fill", "fuel_used", "fuel_rate",
    "edge_x", "edge_z", "edge_angle",
    "bearing", "slope_angle", "attack_angle", "clearance_angle",
    "penetration", "dig_fx", "dig_fz",
    "p_engine", "p_driveline", "p_hydraulics", "p_loss",
)

_STRING_COLUMNS = ("phase", "gear")


class CycleLog:
    """Telemetry rows with a fixed column schema."""

    columns = LOG_COLUMNS

    def __init__(self):
        self.rows: list[tuple] = []

    def append(self, row: tuple) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str):
        i = LOG_COLUMNS.index(name)
        vals = [r[i] for r in self.rows]
        if name in _STRING_COLUMNS:
            return vals
        return np.asarray(vals, dtype=float)


@dataclass(frozen=True)
class Metrics:
    """Per-cycle summary.

    ``bucket_fill_final`` is the fill reached when leaving the pile (the
    bucket is emptied again at the receiver before the cycle ends).
    Energies are trapezoidal integrals of the logged power columns.
    """

    cycle_time: float
    fuel_total: float               # g
    bucket_fill_final: float
    mean_engine_speed: float        # rad/s
    max_engine_speed: float
    duty_points: list[tuple[float, float]]
    phase_durations: dict[str, float]
    energy_driveline: float         # J
    energy_hydraulics: float

    def to_dict(self) -> dict:
        return {
            "cycle_time": self.cycle_time,
            "fuel_total": self.fuel_total,
            "bucket_fill_final": self.bucket_fill_final,
            "mean_engine_speed": self.mean_engine_speed,
            "max_engine_speed": self.max_engine_speed,
            "duty_points": [list(pt) for pt in self.duty_points],
            "phase_durations": self.phase_durations,
            "energy_driveline": self.energy_driveline,
            "energy_hydraulics": self.energy_hydraulics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Metrics":
        return cls(
            cycle_time=d["cycle_time"], fuel_total=d["fuel_total"],
            bucket_fill_final=d["bucket_fill_final"],
            mean_engine_speed=d["mean_engine_speed"],
            max_engine_speed=d["max_engine_speed"],
            duty_points=[tuple(pt) for pt in d["duty_points"]],
            phase_durations=dict(d["phase_durations"]),
            energy_driveline=d["energy_driveline"],
            energy_hydraulics=d["energy_hydraulics"],
        )


@dataclass(slots=True)
class _Derived:
    """Plant quantities re-derived at the end of every tick."""

    edge: mach.EdgePose
    edge_vel: tuple[float, float]
    contact: env.DigContact
    dig_fx: float = 0.0
    dig_fz: float = 0.0


def _derive(state: mach.MachineState, lift_rate: float, tilt_rate: float,
            cfg: SimConfig) -> _Derived:
    edge = mach.linkage_fk(state.theta_lift, state.theta_bucket,
                           (state.x, state.y, state.heading), cfg.linkage)
    vel = mach.edge_velocity(state.theta_lift, state.theta_bucket,
                             lift_rate, tilt_rate, state.v, cfg.linkage)
    contact = env.dig_contact(edge.x, edge.z, cfg.pile)
    d = _Derived(edge=edge, edge_vel=vel, contact=contact)
    if contact.in_contact:
        d.dig_fx, d.dig_fz = env.dig_force(contact, vel, edge.angle,
                                           state.bucket_fill, cfg.pile)
    return d


def run_cycle(cfg: SimConfig) -> tuple[CycleLog, Metrics]:
    """Run one complete loading cycle; returns the telemetry log and metrics.

    Terminates when the operator reaches ReturnOrStop and the machine is at
    rest, or at max_sim_time.  Faults (stuck phase, non-finite state, broken
    power accounting) raise SimulationFault with step context.
    """
    if cfg.max_sim_time <= 0.0:
        raise SimulationFault("no progress: max_sim_time must be positive")

    dt = cfg.dt
    state = mach.MachineState(
        x=cfg.task.start_x, y=cfg.task.start_y, heading=cfg.task.start_heading,
        v=0.0, omega_engine=cfg.engine.idle_speed, gear="N",
        theta_lift=cfg.linkage.ref_lift_angle, theta_bucket=cfg.linkage.ref_bucket_angle,
        omega_wheel=0.0, bucket_fill=0.0, fuel_used=0.0)
    op_state = op.OperatorState()
    derived = _derive(state, 0.0, 0.0, cfg)
    sensed_prev: op.SensedState | None = None

    log = CycleLog()
    zero_power = mach.PowerSplit(0.0, 0.0, 0.0, 0.0)
    zero_cmd = op.OperatorCommand()
    first_sensed = op.sense(state, derived.edge, derived.edge_vel, derived.contact,
                            cfg.pile, cfg.task,
                            mach.wheel_slip(state.omega_wheel, cfg.driveline.wheel_radius, state.v),
                            None)
    log.append(_row(0.0, op_state.phase, zero_cmd, state, first_sensed, derived,
                    zero_power, 0.0, 0.0))

    n_steps = int(round(cfg.max_sim_time / dt))
    lift_rate = tilt_rate = 0.0
    interlock = 0.0
    phase_clock = 0.0
    current_phase = op_state.phase
    lo_band, hi_band = cfg.engine.speed_band()
    # The applied dig force is low-passed: the instantaneous force depends on
    # the edge velocity, which depends on the hydraulic load, which is this
    # force -- the lag resolves that loop smoothly instead of chattering.
    dig_alpha = 1.0 if cfg.dig_force_lag <= 0.0 else min(1.0, dt / cfg.dig_force_lag)

    step = 0
    while step < n_steps:
        step += 1
        t = step * dt

        slip_sensed = mach.wheel_slip(state.omega_wheel, cfg.driveline.wheel_radius, state.v)
        sensed = op.sense(state, derived.edge, derived.edge_vel, derived.contact,
                          cfg.pile, cfg.task, slip_sensed, sensed_prev)
        sensed_prev = sensed
        cmd, op_state = op.phase_step(sensed, op_state, cfg.operator_params, cfg.task, dt)

        if op_state.phase is not current_phase:
            current_phase = op_state.phase
            phase_clock = 0.0
        else:
            phase_clock += dt
        timeout = cfg.phase_timeouts.get(current_phase.value)
        if timeout is not None and phase_clock > timeout:
            raise SimulationFault("phase timeout: no transition after "
                                  f"{timeout:g} s", phase=current_phase.value, step=step)

        if cmd.gear != state.gear:
            state.gear = cmd.gear
            interlock = cfg.shift_interlock
        torque_enabled = interlock <= 0.0
        if interlock > 0.0:
            interlock -= dt

        # Hydraulics draw flow at the current engine speed.
        payload = state.bucket_fill * cfg.linkage.bucket_capacity * cfg.pile.material_density
        tau_lift, tau_tilt = mach.linkage_load_torques(
            state.theta_lift, state.theta_bucket, payload, derived.dig_fz, cfg.linkage)
        hyd = mach.hydraulics_step(cmd.lift, cmd.tilt, state.omega_engine,
                                   tau_lift, tau_tilt, cfg.hydraulics, dt)

        # Converter: in neutral or during a shift the turbine is unloaded and
        # overruns into the zero-torque point, so the pump carries no load.
        if state.gear == "N" or not torque_enabled:
            t_pump = t_turb = 0.0
        else:
            omega_turbine = state.omega_wheel * cfg.driveline.ratio(state.gear)
            t_pump, t_turb = mach.converter_torques(state.omega_engine, omega_turbine,
                                                    cfg.converter)

        brake_force = -cfg.driveline.brake_force_max * cmd.brake * clamp(state.v / 0.05, -1.0, 1.0)
        drv = mach.driveline_step(t_turb, state.gear, state, derived.dig_fx + brake_force,
                                  cfg.driveline, dt, t_pump=t_pump, lift_cmd=cmd.lift,
                                  torque_enabled=torque_enabled)

        engine_load = drv.load_torque_back + hyd.torque_on_engine
        omega_new, fuel_rate, indicated = mach.engine_step(
            cmd.throttle, engine_load, state.omega_engine, cfg.engine, dt)

        power = mach.power_split(indicated, t_pump, hyd.torque_on_engine,
                                 state.omega_engine)

        # Commit plant state.
        state.v = drv.v
        state.omega_wheel = drv.omega_wheel
        state.omega_engine = omega_new
        lo_l, hi_l = cfg.linkage.lift_angle_range
        lo_b, hi_b = cfg.linkage.bucket_angle_range
        new_lift = clamp(state.theta_lift + hyd.d_lift, lo_l, hi_l)
        new_bucket = clamp(state.theta_bucket + hyd.d_tilt, lo_b, hi_b)
        lift_rate = (new_lift - state.theta_lift) / dt
        tilt_rate = (new_bucket - state.theta_bucket) / dt
        state.theta_lift = new_lift
        state.theta_bucket = new_bucket
        state.heading += cmd.steer * cfg.driveline.steer_curvature_gain * state.v * dt
        state.x += state.v * math.cos(state.heading) * dt
        state.y += state.v * math.sin(state.heading) * dt
        state.fuel_used += fuel_rate * dt

        # Environment response to the committed state.
        prev_fx, prev_fz = derived.dig_fx, derived.dig_fz
        derived = _derive(state, lift_rate, tilt_rate, cfg)
        derived.dig_fx = prev_fx + dig_alpha * (derived.dig_fx - prev_fx)
        derived.dig_fz = prev_fz + dig_alpha * (derived.dig_fz - prev_fz)
        swept_rate = derived.contact.penetration_depth * derived.edge_vel[0]
        state.bucket_fill = env.fill_update(state.bucket_fill, swept_rate,
                                            derived.contact, cfg.pile, dt)
        state.bucket_fill = env.spill_update(state.bucket_fill, derived.edge.angle,
                                             cfg.linkage.spill_edge_angle,
                                             cfg.linkage.spill_rate, dt)

        if not (math.isfinite(state.v) and math.isfinite(state.omega_wheel)
                and math.isfinite(state.omega_engine) and math.isfinite(state.bucket_fill)):
            raise SimulationFault("non-finite plant state",
                                  phase=current_phase.value, step=step)
        if not lo_band <= state.omega_engine <= hi_band:
            raise SimulationFault(f"engine speed {state.omega_engine:.2f} outside band",
                                  phase=current_phase.value, step=step)

        done = (op_state.phase is op.Phase.RETURN_OR_STOP and abs(state.v) < 0.05)
        if step % cfg.log_decimation == 0 or done:
            log.append(_row(t, op_state.phase, cmd, state, sensed, derived,
                            power, indicated, fuel_rate))
        if done:
            break

    metrics = compute_metrics(log, cfg)
    return log, metrics


def _row(t: float, phase: op.Phase, cmd: op.OperatorCommand, state: mach.MachineState,
         sensed: op.SensedState, derived: _Derived, power: mach.PowerSplit,
         engine_torque: float, fuel_rate: float) -> tuple:
    return (
        t, phase.value, state.gear,
        cmd.throttle, cmd.brake, cmd.steer, cmd.lift, cmd.tilt,
        state.x, state.y, state.heading, state.v,
        state.omega_engine, engine_torque, state.omega_wheel, sensed.wheel_slip,
        state.theta_lift, state.theta_bucket, state.bucket_fill, state.fuel_used, fuel_rate,
        derived.edge.x, derived.edge.z, derived.edge.angle,
        sensed.bearing, sensed.slope_angle, sensed.attack_angle, sensed.clearance_angle,
        derived.contact.penetration_depth, derived.dig_fx, derived.dig_fz,
        power.p_engine, power.p_driveline, power.p_hydraulics, power.p_loss,
    )


def compute_metrics(log: CycleLog, cfg: SimConfig) -> Metrics:
    """Summarize a telemetry log (trapezoidal integration at log rate)."""
    if len(log) == 0:
        raise ValueError("cannot compute metrics of an empty log")
    t = log.column("t")
    fuel_rate = log.column("fuel_rate")
    omega = log.column("omega_engine")
    torque = log.column("engine_torque")
    phases = log.column("phase")

    duration = float(t[-1]) if len(t) > 1 else 0.0
    fuel_total = float(np.trapezoid(fuel_rate, t)) if len(t) > 1 else 0.0
    mean_speed = float(np.trapezoid(omega, t) / duration) if duration > 0 else float(omega[0])

    w_rated = cfg.engine.rated_speed
    t_rated = cfg.engine.rated_torque
    duty = [(float(w) / w_rated, float(q) / t_rated) for w, q in zip(omega, torque)]

    durations: dict[str, float] = {}
    for i in range(len(t) - 1):
        durations[phases[i]] = durations.get(phases[i], 0.0) + float(t[i + 1] - t[i])

    return Metrics(
        cycle_time=duration,
        fuel_total=fuel_total,
        bucket_fill_final=float(np.max(log.column("bucket_fill"))),
        mean_engine_speed=mean_speed,
        max_engine_speed=float(np.max(omega)),
        duty_points=duty,
        phase_durations=durations,
        energy_driveline=float(np.trapezoid(log.column("p_driveline"), t)),
        energy_hydraulics=float(np.trapezoid(log.column("p_hydraulics"), t)),
    )


@dataclass(frozen=True)
class ComparisonReport:
    """Deltas and ratios between two runs (b relative to a)."""

    cycle_time_delta: float
    cycle_time_ratio: float
    fuel_delta: float
    fuel_ratio: float
    mean_engine_speed_delta: float
    mean_engine_speed_ratio: float
    mean_normalized_speed_shift: float   # mean duty speed of b minus a

    def to_dict(self) -> dict:
        return {
            "cycle_time_delta": self.cycle_time_delta,
            "cycle_time_ratio": self.cycle_time_ratio,
            "fuel_delta": self.fuel_delta,
            "fuel_ratio": self.fuel_ratio,
            "mean_engine_speed_delta": self.mean_engine_speed_delta,
            "mean_engine_speed_ratio": self.mean_engine_speed_ratio,
            "mean_normalized_speed_shift": self.mean_normalized_speed_shift,
        }


def compare_runs(a: Metrics, b: Metrics) -> ComparisonReport:
    """Compare two cycle summaries, b against baseline a."""
    mean_duty_speed = lambda m: (sum(p[0] for p in m.duty_points) / len(m.duty_points)
                                 if m.duty_points else 0.0)
    return ComparisonReport(
        cycle_time_delta=b.cycle_time - a.cycle_time,
        cycle_time_ratio=b.cycle_time / a.cycle_time if a.cycle_time else math.inf,
        fuel_delta=b.fuel_total - a.fuel_total,
        fuel_ratio=b.fuel_total / a.fuel_total if a.fuel_total else math.inf,
        mean_engine_speed_delta=b.mean_engine_speed - a.mean_engine_speed,
        mean_engine_speed_ratio=b.mean_engine_speed / a.mean_engine_speed
        if a.mean_engine_speed else math.inf,
        mean_normalized_speed_shift=mean_duty_speed(b) - mean_duty_speed(a),
    )
