"""Planar wheel-loader plant.

Engine with an all-speed governor, hydrodynamic torque converter, fixed-ratio
gearbox, slip-based tire traction, longitudinal chassis dynamics, a two-link
lift/tilt linkage and a flow-limited hydraulic supply.  The drivetrain and the
hydraulics are parallel consumers of engine torque; ``power_split`` books
every watt of engine output into exactly one of the two paths or into loss.

All state transitions are pure functions; a simulation owns its state
exclusively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import ConfigError, SimulationFault
from .kernel import SmoothStepSpec, Table1D, Table2D, clamp, step3

GRAVITY = 9.80665

# Denominator floor for the relative wheel slip ratio (m/s).
WHEEL_SLIP_V_EPS = 0.1

# Fraction of the relief setting where the relief valve starts to crack.
RELIEF_CRACK_FRACTION = 0.94

GEARS = ("F1", "F2", "R1", "R2", "N")


# ---------------------------------------------------------------------------
# Model parameter blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EngineModel:
    """Diesel engine with a speed-reference governor and a BSFC map.

    ``governor_gain`` is the closed-loop speed pole (1/s): the governor
    demands ``inertia * governor_gain * (speed_ref - speed)`` of torque,
    saturated by the full-load torque curve.
    """

    max_torque_curve: Table1D      # engine speed rad/s -> N*m
    idle_speed: float              # rad/s
    rated_speed: float             # rad/s
    rated_torque: float            # N*m
    inertia: float                 # kg*m^2
    fuel_map: Table2D              # (speed rad/s, torque N*m) -> g/kWh
    governor_gain: float           # 1/s

    def __post_init__(self):
        if not 0.0 < self.idle_speed < self.rated_speed:
            raise ConfigError("engine", "idle speed must be positive and below rated speed")
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            w = self.idle_speed + frac * (self.rated_speed - self.idle_speed)
            if self.max_torque_curve(w) <= 0.0:
                raise ConfigError("engine.max_torque_curve",
                                  f"torque must be positive on [idle, rated], got {self.max_torque_curve(w)} at {w}")

    def speed_band(self) -> tuple[float, float]:
        """Admissible engine speed range (hard clamps in the integrator)."""
        return 0.9 * self.idle_speed, 1.15 * self.rated_speed


@dataclass(frozen=True)
class ConverterMap:
    """Hydrodynamic torque converter in similarity form.

    Pump torque = capacity(nu) * pump_speed^2 with nu = turbine/pump speed
    ratio; turbine torque = torque_ratio(nu) * pump torque.  Above
    ``coupling_ratio`` the torque ratio is 1.
    """

    capacity: Table1D       # nu in [0,1] -> N*m*s^2/rad^2
    torque_ratio: Table1D   # nu in [0,1] -> dimensionless, >= 1
    coupling_ratio: float

    def validate(self, path: str = "converter") -> None:
        """Admissibility checks, raised as ConfigError at load time."""
        if not 0.0 < self.coupling_ratio <= 1.0:
            raise ConfigError(f"{path}.coupling_ratio", "must be in (0, 1]")
        prev_c = None
        for nu, c in zip(self.capacity.knots, self.capacity.values):
            if c <= 0.0:
                raise ConfigError(f"{path}.capacity", f"capacity must be positive, got {c} at ratio {nu}")
            if prev_c is not None and c > prev_c + 1e-12:
                raise ConfigError(f"{path}.capacity", "capacity must be non-increasing in speed ratio")
            prev_c = c
        prev_m = None
        for nu, mu in zip(self.torque_ratio.knots, self.torque_ratio.values):
            if mu * nu > 1.0 + 1e-12:
                raise ConfigError(f"{path}.torque_ratio",
                                  f"torque_ratio*speed_ratio = {mu * nu:.6g} > 1 at ratio {nu} (power creation)")
            if mu < 1.0 - 1e-12:
                raise ConfigError(f"{path}.torque_ratio", f"torque ratio must be >= 1, got {mu}")
            if prev_m is not None and mu > prev_m + 1e-12:
                raise ConfigError(f"{path}.torque_ratio", "torque ratio must be non-increasing")
            if nu >= self.coupling_ratio - 1e-12 and abs(mu - 1.0) > 1e-9:
                raise ConfigError(f"{path}.torque_ratio",
                                  f"torque ratio must be 1 at and beyond the coupling ratio, got {mu} at {nu}")
            prev_m = mu


@dataclass(frozen=True)
class DrivelineModel:
    """Gearbox, tires and chassis longitudinal parameters.

    ``gear_ratios`` map gear id to the signed overall converter-turbine to
    wheel ratio (reverse gears negative).  Traction follows a slip curve on
    the driven-axle normal load; lifting shifts load onto the driven axle
    through ``load_transfer_gain``.
    """

    gear_ratios: dict[str, float]
    efficiency: dict[str, float]
    wheel_radius: float
    wheel_inertia: float            # lumped, includes reflected driveline
    vehicle_mass: float
    rolling_resistance_coeff: float
    traction_curve: Table1D         # |slip| -> friction coefficient, mu(0) = 0
    static_axle_split: float        # fraction of weight on the driven axle
    load_transfer_gain: float       # added fraction per unit lift command
    brake_force_max: float          # N at full brake
    steer_curvature_gain: float     # path curvature (1/m) at full steer

    def __post_init__(self):
        for g in ("F1", "F2", "R2"):
            if g not in self.gear_ratios:
                raise ConfigError("driveline.gear_ratios", f"gear set must include {g}")
        if not abs(self.gear_ratios["F1"]) > abs(self.gear_ratios["F2"]):
            raise ConfigError("driveline.gear_ratios", "|ratio(F1)| must exceed |ratio(F2)|")
        for g, r in self.gear_ratios.items():
            if g.startswith("R") and r >= 0.0:
                raise ConfigError("driveline.gear_ratios", f"reverse ratio {g} must be negative")
            if g.startswith("F") and r <= 0.0:
                raise ConfigError("driveline.gear_ratios", f"forward ratio {g} must be positive")
        for g, e in self.efficiency.items():
            if not 0.0 < e <= 1.0:
                raise ConfigError("driveline.efficiency", f"efficiency for {g} must be in (0, 1]")
        if abs(self.traction_curve(0.0)) > 1e-12:
            raise ConfigError("driveline.traction_curve", "friction must vanish at zero slip")

    def ratio(self, gear: str) -> float:
        if gear == "N":
            return 0.0
        return self.gear_ratios[gear]


@dataclass(frozen=True)
class LinkageModel:
    """Two-link planar lift/tilt linkage in the vertical travel plane.

    The boom rotates about ``boom_pivot`` by the lift angle; the bucket
    rotates about the boom tip by the tilt angle.  Calibration constants are
    chosen so the reference pose puts the cutting edge flat on the ground at
    ground level.
    """

    boom_pivot_x: float
    boom_pivot_z: float
    boom_length: float
    lift_angle_range: tuple[float, float]
    bucket_angle_range: tuple[float, float]
    edge_offset: float
    bucket_capacity: float          # m^3
    ref_lift_angle: float
    ref_bucket_angle: float
    tip_mass_equiv: float           # empty linkage+bucket mass lumped at the tip, kg
    spill_edge_angle: float         # edge angle below which material pours out
    spill_rate: float               # fill fraction per second per rad below spill angle

    def __post_init__(self):
        if self.lift_angle_range[0] >= self.lift_angle_range[1]:
            raise ConfigError("linkage.lift_angle_range", "must be an increasing pair")
        if self.bucket_angle_range[0] >= self.bucket_angle_range[1]:
            raise ConfigError("linkage.bucket_angle_range", "must be an increasing pair")
        if self.boom_length <= 0.0 or self.edge_offset <= 0.0:
            raise ConfigError("linkage", "boom_length and edge_offset must be positive")

    @property
    def angle_cal(self) -> float:
        """Offset making the global edge angle zero at the reference pose."""
        return -(self.ref_lift_angle + self.ref_bucket_angle)

    @property
    def height_cal(self) -> float:
        """Offset making the edge sit at ground level at the reference pose."""
        return -(self.boom_pivot_z + self.boom_length * math.sin(self.ref_lift_angle))


@dataclass(frozen=True)
class HydraulicsModel:
    """Lumped valve/pump/cylinder hydraulics for the lift and tilt functions.

    Each function is reduced to an angle-rate gain on its share of pump flow;
    the gain is the reciprocal of (cylinder area x lever arm), so function
    pressure equals load torque times the same gain.
    """

    pump_displacement: float        # m^3/rad
    relief_pressure: float          # Pa
    lift_cyl_area: float            # m^2
    tilt_cyl_area: float            # m^2
    lift_lever_arm: float           # m, effective torque arm of the lift cylinder
    tilt_lever_arm: float           # m
    lift_valve: SmoothStepSpec      # |lever| -> valve opening fraction
    tilt_valve: SmoothStepSpec
    parasitic_power: float          # W (fan, pilot, charge circuits)
    min_pressure: float             # Pa, standby/back pressure floor

    def __post_init__(self):
        if self.pump_displacement <= 0.0:
            raise ConfigError("hydraulics.pump_displacement", "must be positive")
        if not 0.0 < self.min_pressure < self.relief_pressure:
            raise ConfigError("hydraulics", "need 0 < min_pressure < relief_pressure")

    @property
    def lift_rate_per_flow(self) -> float:
        """rad of lift angle per m^3 of oil."""
        return 1.0 / (self.lift_cyl_area * self.lift_lever_arm)

    @property
    def tilt_rate_per_flow(self) -> float:
        return 1.0 / (self.tilt_cyl_area * self.tilt_lever_arm)


@dataclass(slots=True)
class MachineState:
    """Mutable plant state advanced by the simulation loop."""

    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    v: float = 0.0                  # m/s signed along heading
    omega_engine: float = 0.0
    gear: str = "N"
    theta_lift: float = 0.0
    theta_bucket: float = 0.0
    omega_wheel: float = 0.0
    bucket_fill: float = 0.0
    fuel_used: float = 0.0          # g

    def copy(self) -> "MachineState":
        return replace(self)


@dataclass(frozen=True, slots=True)
class PowerSplit:
    """Instantaneous engine power accounting (W)."""

    p_engine: float
    p_driveline: float
    p_hydraulics: float
    p_loss: float


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


def engine_step(throttle: float, load_torque: float, omega: float,
                model: EngineModel, dt: float) -> tuple[float, float, float]:
    """Advance the engine one step.

    Returns (new speed, fuel rate g/s, indicated torque).  The throttle sets
    the governor speed reference between idle and rated; indicated torque is
    the governor demand saturated by the full-load curve.  Speed is clamped
    to the operating band.
    """
    if not (math.isfinite(throttle) and math.isfinite(load_torque) and math.isfinite(omega)):
        raise SimulationFault(
            f"non-finite engine input: throttle={throttle}, load={load_torque}, speed={omega}")
    speed_ref = model.idle_speed + throttle * (model.rated_speed - model.idle_speed)
    demand = model.inertia * model.governor_gain * (speed_ref - omega)
    indicated = clamp(demand, 0.0, model.max_torque_curve(omega))
    power = indicated * omega
    fuel_rate = model.fuel_map(omega, indicated) * power / 3.6e6  # g/kWh * W -> g/s
    lo, hi = model.speed_band()
    omega_new = clamp(omega + dt * (indicated - load_torque) / model.inertia, lo, hi)
    return omega_new, fuel_rate, indicated


# ---------------------------------------------------------------------------
# Torque converter
# ---------------------------------------------------------------------------


def converter_torques(omega_pump: float, omega_turbine: float,
                      cmap: ConverterMap) -> tuple[float, float]:
    """Pump and turbine torques from the similarity law."""
    if omega_pump <= 0.0:
        return 0.0, 0.0
    nu = clamp(omega_turbine / omega_pump, 0.0, 1.0)
    t_pump = cmap.capacity(nu) * omega_pump * omega_pump
    return t_pump, cmap.torque_ratio(nu) * t_pump


def scale_converter(cmap: ConverterMap, capacity_scale: float) -> ConverterMap:
    """Return a converter with capacity scaled everywhere; < 1 means weaker."""
    if capacity_scale <= 0.0:
        raise ValueError(f"capacity scale must be positive, got {capacity_scale}")
    scaled = Table1D(cmap.capacity.knots, [capacity_scale * c for c in cmap.capacity.values])
    return ConverterMap(capacity=scaled, torque_ratio=cmap.torque_ratio,
                        coupling_ratio=cmap.coupling_ratio)


# ---------------------------------------------------------------------------
# Tires and chassis
# ---------------------------------------------------------------------------


def wheel_slip(omega_wheel: float, radius: float, v: float) -> float:
    """Relative wheel slip, finite for all inputs."""
    circ = omega_wheel * radius
    return (circ - v) / max(abs(circ), WHEEL_SLIP_V_EPS)


def traction_force(slip: float, normal_load: float, curve: Table1D) -> float:
    """Ground force from the slip curve; antisymmetric in slip."""
    if slip == 0.0:
        return 0.0
    return math.copysign(curve(abs(slip)) * normal_load, slip)


def driven_axle_load(model: DrivelineModel, lift_cmd: float) -> float:
    """Normal load on the driven wheels; lifting transfers weight onto them."""
    weight = model.vehicle_mass * GRAVITY
    frac = clamp(model.static_axle_split + model.load_transfer_gain * max(0.0, lift_cmd), 0.1, 1.0)
    return weight * frac


@dataclass(frozen=True, slots=True)
class DrivelineResult:
    v: float
    omega_wheel: float
    omega_turbine: float
    load_torque_back: float     # reaction on the converter pump / engine side
    traction: float             # ground force actually applied, N
    slip: float
    wheel_torque: float


def driveline_step(t_turbine: float, gear: str, state: MachineState,
                   external_long_force: float, model: DrivelineModel, dt: float,
                   *, t_pump: float = 0.0, lift_cmd: float = 0.0,
                   torque_enabled: bool = True) -> DrivelineResult:
    """Advance wheel and chassis speeds one step.

    ``external_long_force`` carries dig and brake forces; rolling resistance
    comes from the model.  The traction update is implicit in the local slope
    of the slip curve, which keeps the stiff low-speed slip dynamics stable
    at millisecond steps.  Neutral gear (or an open shift interlock) breaks
    the torque path but the pump reaction still loads the engine.
    """
    ratio = model.ratio(gear)
    eff = model.efficiency.get(gear, 1.0)
    if gear == "N" or not torque_enabled:
        wheel_torque = 0.0
    else:
        wheel_torque = t_turbine * ratio * eff

    r = model.wheel_radius
    normal = driven_axle_load(model, lift_cmd)
    slip = wheel_slip(state.omega_wheel, r, state.v)
    f0 = traction_force(slip, normal, model.traction_curve)
    # Implicit correction: df/d(omega) through the active curve segment.
    denom = max(abs(state.omega_wheel * r), WHEEL_SLIP_V_EPS)
    dfdw = normal * model.traction_curve.slope(abs(slip)) * r / denom
    inertia = model.wheel_inertia
    d_omega = dt * (wheel_torque - r * f0) / (inertia + dt * r * dfdw)
    f_used = f0 + dfdw * d_omega
    f_cap = normal * model.traction_curve.values[-1]
    if abs(f_used) > f_cap:
        f_used = math.copysign(f_cap, f_used)
        d_omega = dt * (wheel_torque - r * f_used) / inertia
    omega_wheel_new = state.omega_wheel + d_omega

    rolling = -model.rolling_resistance_coeff * model.vehicle_mass * GRAVITY \
        * clamp(state.v / 0.05, -1.0, 1.0)
    accel = (f_used + rolling + external_long_force) / model.vehicle_mass
    v_new = state.v + dt * accel

    omega_turbine = omega_wheel_new * ratio
    return DrivelineResult(v=v_new, omega_wheel=omega_wheel_new,
                           omega_turbine=omega_turbine, load_torque_back=t_pump,
                           traction=f_used, slip=slip, wheel_torque=wheel_torque)


# ---------------------------------------------------------------------------
# Linkage kinematics
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class EdgePose:
    x: float                # world, m
    y: float
    z: float                # height above ground, m
    angle: float            # global edge angle, rad, 0 = flat
    forward_offset: float   # edge distance ahead of the chassis origin, m
    clamped: bool           # an input angle was outside its range


def linkage_fk(theta_lift: float, theta_bucket: float,
               pose: tuple[float, float, float], model: LinkageModel) -> EdgePose:
    """Cutting-edge pose from joint angles and the chassis ground pose."""
    lo, hi = model.lift_angle_range
    blo, bhi = model.bucket_angle_range
    tl = clamp(theta_lift, lo, hi)
    tb = clamp(theta_bucket, blo, bhi)
    clamped = (tl != theta_lift) or (tb != theta_bucket)
    a = tl + tb + model.angle_cal
    u = model.boom_pivot_x + model.boom_length * math.cos(tl) + model.edge_offset * math.cos(a)
    z = model.boom_pivot_z + model.boom_length * math.sin(tl) \
        + model.edge_offset * math.sin(a) + model.height_cal
    cx, cy, heading = pose
    return EdgePose(x=cx + u * math.cos(heading), y=cy + u * math.sin(heading),
                    z=z, angle=a, forward_offset=u, clamped=clamped)


def edge_velocity(theta_lift: float, theta_bucket: float, rate_lift: float,
                  rate_bucket: float, v_chassis: float,
                  model: LinkageModel) -> tuple[float, float]:
    """Edge velocity (horizontal along travel, vertical) from the Jacobian."""
    a = theta_lift + theta_bucket + model.angle_cal
    sin_l, cos_l = math.sin(theta_lift), math.cos(theta_lift)
    sin_a, cos_a = math.sin(a), math.cos(a)
    lb, le = model.boom_length, model.edge_offset
    du = (-lb * sin_l - le * sin_a) * rate_lift + (-le * sin_a) * rate_bucket
    dz = (lb * cos_l + le * cos_a) * rate_lift + (le * cos_a) * rate_bucket
    return v_chassis + du, dz


def linkage_load_torques(theta_lift: float, theta_bucket: float, payload_mass: float,
                         dig_fz: float, model: LinkageModel) -> tuple[float, float]:
    """Gravity + dig reaction torques resisting lift and tilt-back motion.

    Lumped: linkage and payload weights act at the boom tip for lift, payload
    at the edge offset for tilt; a downward dig force loads both.
    """
    down = max(0.0, -dig_fz)
    arm_lift = model.boom_length * max(0.2, math.cos(theta_lift))
    tau_lift = (model.tip_mass_equiv + payload_mass) * GRAVITY * arm_lift + down * arm_lift
    a = theta_lift + theta_bucket + model.angle_cal
    arm_tilt = model.edge_offset * max(0.2, math.cos(a))
    tau_tilt = payload_mass * GRAVITY * arm_tilt + down * arm_tilt
    return tau_lift, tau_tilt


# ---------------------------------------------------------------------------
# Hydraulics
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class HydraulicsResult:
    d_lift: float               # rad moved this step
    d_tilt: float
    torque_on_engine: float     # N*m
    power: float                # W, includes parasitics
    lift_pressure: float        # Pa
    tilt_pressure: float
    lift_rate: float            # rad/s actually delivered
    tilt_rate: float
    flow: float                 # m^3/s drawn from the pump


def hydraulics_step(lift_cmd: float, tilt_cmd: float, omega_engine: float,
                    load_torque_lift: float, load_torque_tilt: float,
                    model: HydraulicsModel, dt: float) -> HydraulicsResult:
    """Advance the lift/tilt functions one step.

    Valve openings demand shares of the available pump flow; simultaneous
    demand beyond the pump is rationed proportionally.  A function whose load
    pressure reaches relief stops moving but keeps drawing its flow across
    the relief valve.
    """
    q_avail = model.pump_displacement * omega_engine
    open_lift = step3(abs(lift_cmd), model.lift_valve)
    open_tilt = step3(abs(tilt_cmd), model.tilt_valve)
    total = open_lift + open_tilt
    scale = 1.0 / total if total > 1.0 else 1.0
    q_lift = open_lift * scale * q_avail
    q_tilt = open_tilt * scale * q_avail

    def one_function(cmd, q, load_torque, rate_per_flow):
        if q <= 0.0:
            return 0.0, 0.0, 0.0
        direction = 1.0 if cmd > 0.0 else -1.0
        if direction > 0.0:
            pressure = clamp(load_torque * rate_per_flow, model.min_pressure, model.relief_pressure)
            # Relief cracks open just below the set pressure; motion fades to
            # zero at the setting instead of chattering against it.
            crack = RELIEF_CRACK_FRACTION * model.relief_pressure
            motion = clamp((model.relief_pressure - pressure)
                           / (model.relief_pressure - crack), 0.0, 1.0)
        else:
            # Gravity-assisted lowering runs against back pressure only.
            pressure = model.min_pressure
            motion = 1.0
        rate = direction * rate_per_flow * q * motion
        return rate, pressure, pressure * q

    lift_rate, p_lift, w_lift = one_function(lift_cmd, q_lift, load_torque_lift,
                                             model.lift_rate_per_flow)
    tilt_rate, p_tilt, w_tilt = one_function(tilt_cmd, q_tilt, load_torque_tilt,
                                             model.tilt_rate_per_flow)
    power = w_lift + w_tilt + model.parasitic_power
    torque = power / omega_engine if omega_engine > 0.0 else 0.0
    return HydraulicsResult(d_lift=lift_rate * dt, d_tilt=tilt_rate * dt,
                            torque_on_engine=torque, power=power,
                            lift_pressure=p_lift, tilt_pressure=p_tilt,
                            lift_rate=lift_rate, tilt_rate=tilt_rate,
                            flow=q_lift + q_tilt)


# ---------------------------------------------------------------------------
# Power accounting
# ---------------------------------------------------------------------------


def power_split(indicated_torque: float, pump_torque: float, hydraulic_torque: float,
                omega_engine: float) -> PowerSplit:
    """Book engine power into driveline, hydraulics and loss.

    Engine inertia power lands in the loss term, so the three components sum
    to engine power identically at every step; the residual is asserted.
    """
    p_engine = indicated_torque * omega_engine
    p_drive = pump_torque * omega_engine
    p_hyd = hydraulic_torque * omega_engine
    p_loss = p_engine - p_drive - p_hyd
    residual = abs(p_engine - (p_drive + p_hyd + p_loss))
    if residual > 1e-9 * max(1.0, abs(p_engine)):
        raise SimulationFault(f"power accounting residual {residual:.3e} W")
    return PowerSplit(p_engine=p_engine, p_driveline=p_drive,
                      p_hydraulics=p_hyd, p_loss=p_loss)
