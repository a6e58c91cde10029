"""Rule-based operator: perception filter, cycle phase machine, filling rules.

The operator touches the machine through throttle, brake, steering, lift and
tilt levers plus gear selection, and perceives only what a human in the cab
could: speeds, the bucket pose and its motion, wheel spin, distances to the
pile and the receiver.  Converter slip, pump displacement and hydraulic
pressures are structurally absent from ``SensedState`` -- the whole module is
written against that type and nothing else.

During bucket filling, six concurrent rules modulate the levers around a
nominal operating point: two traction rules (throttle cap on wheel slip, lift
boost on integrated slip), a velocity-bearing rule that feeds throttle when
the bucket climbs too shallowly, an attitude rule that tilts to hold the
clearance and attack angles, and two latched exit triggers that command full
tilt-back.  Rule outputs on a shared lever are combined multiplicatively or
additively, then rate-limited to human actuation speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from enum import Enum

from .kernel import Latch, SmoothStepSpec, clamp, clamped_integrate, latch_update, rate_limit, step3

# Edge speeds below this hold the previous velocity bearing (m/s).
V_GEOM_EPS = 0.01


class Phase(Enum):
    APPROACH_PILE = "ApproachPile"
    FILL = "Fill"
    LEAVE_PILE_REVERSE = "LeavePileReverse"
    HAUL_TO_RECEIVER = "HaulToReceiver"
    DUMP = "Dump"
    REVERSE_FROM_RECEIVER = "ReverseFromReceiver"
    RETURN_OR_STOP = "ReturnOrStop"


# Allowed forward edges of the cycle state machine.
PHASE_ORDER = (
    Phase.APPROACH_PILE, Phase.FILL, Phase.LEAVE_PILE_REVERSE,
    Phase.HAUL_TO_RECEIVER, Phase.DUMP, Phase.REVERSE_FROM_RECEIVER,
    Phase.RETURN_OR_STOP,
)


@dataclass(frozen=True, slots=True)
class OperatorCommand:
    """The only actuation channel into the machine."""

    throttle: float = 0.0   # [0, 1]
    brake: float = 0.0      # [0, 1]
    steer: float = 0.0      # [-1, 1]
    lift: float = 0.0       # [-1, 1]
    tilt: float = 0.0       # [-1, 1]
    gear: str = "N"


@dataclass(frozen=True, slots=True)
class SensedState:
    """What the operator can perceive from the cab.

    Deliberately excludes converter slip, pump displacement and hydraulic
    pressures; tests assert this structurally.
    """

    v: float                    # ground speed, signed, m/s
    engine_speed: float         # rad/s (audible)
    x: float                    # own position in the yard, m
    y: float
    heading: float              # rad
    edge_x: float               # cutting edge pose, world
    edge_z: float
    edge_angle: float           # global, 0 = flat
    lift_angle: float
    bucket_angle: float
    bearing: float              # direction of edge velocity above horizontal
    slope_angle: float          # pile face inclination
    attack_angle: float         # edge angle relative to edge velocity
    clearance_angle: float      # bucket bottom relative to the pile face
    wheel_slip: float
    in_contact: bool            # edge penetrating the pile
    dist_to_toe: float          # m, along the approach axis
    dist_to_receiver: float     # m, straight line


@dataclass(frozen=True, slots=True)
class FillGeometry:
    """Bucket-filling geometry angles, logged every step."""

    bearing: float
    slope_angle: float
    attack_angle: float
    clearance_angle: float


@dataclass(frozen=True)
class TaskDescription:
    """What to do: goal locations of the short loading cycle.

    This is working-task data, kept out of the operator rules so machine or
    task changes never require touching the controller.
    """

    start_x: float
    start_y: float
    start_heading: float
    reverse_point_x: float        # back out at least to here before turning
    receiver_x: float
    receiver_y: float
    receiver_stop_distance: float
    dump_height: float            # required edge height over the receiver
    reverse_clear_distance: float  # back away this far after dumping


@dataclass(frozen=True)
class OperatorParams:
    """Every 'certain value' of the filling rules, by name, plus the plain
    controllers used outside the fill phase."""

    # Traction control 1: throttle cap vs wheel slip
    slip_cap_low: float
    slip_cap_high: float
    throttle_cap_floor: float
    # Traction control 2: lift boost vs integrated wheel slip
    slip_integral_low: float
    slip_integral_high: float
    lift_boost_max: float
    # Bucket velocity vector control
    bearing_dev_threshold: float
    bvv_ramp_rate: float          # 1/s
    bvv_max: float
    # Bucket attitude control
    target_clearance: float
    target_attack: float
    clearance_gain: float
    attack_gain: float
    # Exit triggers
    exit_bucket_angle: float      # bucket angle relative to the slope
    exit_lift_angle: float
    tilt_back_angle: float        # bucket angle considered fully tilted back
    # Nominal fill operating point
    base_throttle: float
    base_lift: float
    # Non-fill phase controllers
    approach_speed: float
    approach_shift_distance: float
    travel_speed: float
    reverse_speed: float
    speed_gain: float             # throttle per m/s of speed error
    brake_gain: float
    steer_gain: float             # steer command per rad of heading error
    dump_empty_angle: float       # bucket angle at which the bucket is empty
    dump_throttle: float          # engine raised while tilting out
    carry_bucket_angle: float     # racked-back angle held while hauling
    # Human actuation bandwidth, full scale per second
    ramp_throttle: float
    ramp_brake: float
    ramp_steer: float
    ramp_lift: float
    ramp_tilt: float

    def tc1_spec(self) -> SmoothStepSpec:
        return SmoothStepSpec(self.slip_cap_low, 1.0, self.slip_cap_high, self.throttle_cap_floor)

    def tc2_spec(self) -> SmoothStepSpec:
        return SmoothStepSpec(self.slip_integral_low, 0.0, self.slip_integral_high, self.lift_boost_max)


@dataclass(slots=True)
class OperatorState:
    """Controller memory owned by one simulation instance."""

    phase: Phase = Phase.APPROACH_PILE
    slip_integral: float = 0.0
    exit_latch: Latch = field(default_factory=Latch)
    bvv_term: float = 0.0
    prev_cmd: OperatorCommand = field(default_factory=OperatorCommand)


BANNED_SENSE_WORDS = ("converter", "pump", "pressure", "displacement")


def sensed_state_is_clean() -> bool:
    """Structural guard: no machine-internal signal leaks into perception."""
    names = [f.name for f in fields(SensedState)]
    return not any(w in n for n in names for w in BANNED_SENSE_WORDS)


# ---------------------------------------------------------------------------
# Perception
# ---------------------------------------------------------------------------


def sense(machine, edge, edge_vel: tuple[float, float], contact, pile, task: TaskDescription,
          slip: float, prev: SensedState | None) -> SensedState:
    """Build the operator's perceptual window from plant and environment.

    ``machine`` is the MachineState, ``edge`` the EdgePose, ``contact`` the
    DigContact and ``pile`` the PileModel; only human-observable fields are
    read.  ``slip`` is the relative wheel slip the operator feels as wheel
    spin.  The velocity bearing holds its previous value while the edge is
    too slow to judge.
    """
    vh, vz = edge_vel
    speed = math.hypot(vh, vz)
    if speed > V_GEOM_EPS:
        bearing = math.atan2(vz, vh)
    else:
        bearing = prev.bearing if prev is not None else 0.0
    slope = pile.slope_angle
    return SensedState(
        v=machine.v,
        engine_speed=machine.omega_engine,
        x=machine.x,
        y=machine.y,
        heading=machine.heading,
        edge_x=edge.x,
        edge_z=edge.z,
        edge_angle=edge.angle,
        lift_angle=machine.theta_lift,
        bucket_angle=machine.theta_bucket,
        bearing=bearing,
        slope_angle=slope,
        attack_angle=edge.angle - bearing,
        clearance_angle=edge.angle - slope,
        wheel_slip=slip,
        in_contact=contact.in_contact,
        dist_to_toe=pile.toe_x - edge.x,
        dist_to_receiver=math.hypot(task.receiver_x - machine.x, task.receiver_y - machine.y),
    )


# ---------------------------------------------------------------------------
# Bucket-filling rules
# ---------------------------------------------------------------------------


def tc1_throttle_cap(slip: float, p: OperatorParams) -> float:
    """Traction control 1: multiplicative throttle cap, ramps down with slip."""
    return step3(slip, p.tc1_spec())


def tc2_lift_boost(slip_integral: float, p: OperatorParams) -> float:
    """Traction control 2: additive lift, ramps up with integrated slip."""
    return step3(slip_integral, p.tc2_spec())


def bvv_throttle(bearing: float, slope: float, p: OperatorParams,
                 prev_term: float, dt: float) -> float:
    """Bucket velocity vector control: additive throttle term.

    Climbing too shallowly (slope minus bearing beyond the threshold) ramps
    the term up; otherwise it ramps back toward zero.
    """
    if slope - bearing > p.bearing_dev_threshold:
        return min(prev_term + p.bvv_ramp_rate * dt, p.bvv_max)
    return max(prev_term - p.bvv_ramp_rate * dt, 0.0)


def attitude_tilt(clearance: float, attack: float, p: OperatorParams) -> float:
    """Bucket attitude control: tilt back to hold clearance and attack angles."""
    demand = p.clearance_gain * (p.target_clearance - clearance) \
        + p.attack_gain * (p.target_attack - attack)
    return clamp(demand, 0.0, 1.0)


def exit_triggers(bucket_angle_rel_slope: float, lift_angle: float,
                  latch: Latch, p: OperatorParams) -> Latch:
    """Latch full tilt-back once the bucket or the lift arm rises far enough."""
    fire = bucket_angle_rel_slope > p.exit_bucket_angle or lift_angle > p.exit_lift_angle
    return latch_update(latch, set_=fire, reset=False)


def fill_step(sensed: SensedState, op_state: OperatorState, p: OperatorParams,
              dt: float) -> tuple[OperatorCommand, OperatorState]:
    """One step of the bucket-filling rules, combined per channel.

    Throttle: base demand times the traction cap, plus the bearing term.
    Lift: base plus the integrated-slip boost.  Tilt: attitude demand, or
    full command once an exit trigger has latched.
    """
    slip = max(0.0, sensed.wheel_slip)
    op_state.slip_integral = clamped_integrate(
        op_state.slip_integral, slip, dt, 0.0, 2.0 * p.slip_integral_high)
    op_state.bvv_term = bvv_throttle(sensed.bearing, sensed.slope_angle, p,
                                     op_state.bvv_term, dt)
    op_state.exit_latch = exit_triggers(sensed.clearance_angle, sensed.lift_angle,
                                        op_state.exit_latch, p)

    throttle = clamp(p.base_throttle * tc1_throttle_cap(slip, p) + op_state.bvv_term, 0.0, 1.0)
    lift = clamp(p.base_lift + tc2_lift_boost(op_state.slip_integral, p), 0.0, 1.0)
    # The exit triggers force full tilt only until the bucket is completely
    # tilted back; the lever is released once the bucket is racked.
    exit_demand = 1.0 if (op_state.exit_latch.state
                          and sensed.bucket_angle < p.tilt_back_angle) else 0.0
    tilt = max(attitude_tilt(sensed.clearance_angle, sensed.attack_angle, p), exit_demand)
    raw = OperatorCommand(throttle=throttle, brake=0.0, steer=0.0,
                          lift=lift, tilt=tilt, gear="F1")
    return _ramped(raw, op_state, p, dt), op_state


# ---------------------------------------------------------------------------
# Cycle phase machine
# ---------------------------------------------------------------------------


def phase_step(sensed: SensedState, op_state: OperatorState, p: OperatorParams,
               task: TaskDescription, dt: float) -> tuple[OperatorCommand, OperatorState]:
    """Advance the loading-cycle state machine one step and emit a command."""
    phase = op_state.phase

    if phase is Phase.APPROACH_PILE:
        if sensed.in_contact:
            op_state.phase = Phase.FILL
            return fill_step(sensed, op_state, p, dt)
        gear = "F1" if sensed.dist_to_toe < p.approach_shift_distance else "F2"
        raw = OperatorCommand(
            throttle=clamp(p.speed_gain * (p.approach_speed - sensed.v), 0.0, 1.0),
            brake=clamp(p.brake_gain * (sensed.v - p.approach_speed - 0.3), 0.0, 1.0),
            steer=_steer_to_heading(task.start_heading, sensed, p),
            lift=0.0, tilt=0.0, gear=gear)
        return _ramped(raw, op_state, p, dt), op_state

    if phase is Phase.FILL:
        done = (not sensed.in_contact) and op_state.exit_latch.state \
            and sensed.bucket_angle >= p.tilt_back_angle
        if done:
            op_state.phase = Phase.LEAVE_PILE_REVERSE
            # Shift to R2 and pull full lift immediately; the lift ramp
            # limiter still applies.
            raw = OperatorCommand(throttle=0.3, brake=0.0, steer=0.0,
                                  lift=1.0, tilt=0.0, gear="R2")
            return _ramped(raw, op_state, p, dt), op_state
        return fill_step(sensed, op_state, p, dt)

    if phase is Phase.LEAVE_PILE_REVERSE:
        if sensed.x <= task.reverse_point_x:
            op_state.phase = Phase.HAUL_TO_RECEIVER
        raw = OperatorCommand(
            throttle=clamp(p.speed_gain * (sensed.v + p.reverse_speed), 0.0, 1.0),
            brake=0.0,
            steer=_steer_to_heading(task.start_heading, sensed, p),
            lift=1.0, tilt=0.0, gear="R2")
        return _ramped(raw, op_state, p, dt), op_state

    if phase is Phase.HAUL_TO_RECEIVER:
        dist = sensed.dist_to_receiver
        high_enough = sensed.edge_z >= task.dump_height
        if dist <= task.receiver_stop_distance and high_enough:
            op_state.phase = Phase.DUMP
        want_heading = math.atan2(task.receiver_y - sensed.y, task.receiver_x - sensed.x)
        v_target = min(p.travel_speed, 0.6 * dist)
        raw = OperatorCommand(
            throttle=clamp(p.speed_gain * (v_target - sensed.v), 0.0, 1.0),
            brake=clamp(p.brake_gain * (sensed.v - v_target - 0.3), 0.0, 1.0),
            steer=_steer_to_heading(want_heading, sensed, p),
            lift=0.0 if high_enough else 1.0,
            tilt=0.6 if sensed.bucket_angle < p.carry_bucket_angle else 0.0,
            gear="F2")
        return _ramped(raw, op_state, p, dt), op_state

    if phase is Phase.DUMP:
        if sensed.bucket_angle <= p.dump_empty_angle:
            op_state.phase = Phase.REVERSE_FROM_RECEIVER
        stopped = abs(sensed.v) < 0.15
        # Once held on the brakes, shift to neutral and rev the engine to
        # speed up the tilt.
        raw = OperatorCommand(
            throttle=p.dump_throttle if stopped else 0.0,
            brake=1.0 if not stopped else 0.4,
            steer=0.0,
            lift=0.0,
            tilt=-1.0 if stopped else 0.0,
            gear="N" if stopped else "F2")
        return _ramped(raw, op_state, p, dt), op_state

    if phase is Phase.REVERSE_FROM_RECEIVER:
        if sensed.dist_to_receiver >= task.reverse_clear_distance:
            op_state.phase = Phase.RETURN_OR_STOP
        raw = OperatorCommand(
            throttle=clamp(p.speed_gain * (sensed.v + p.reverse_speed), 0.0, 1.0),
            brake=0.0, steer=0.0,
            lift=-0.5 if sensed.lift_angle > 0.0 else 0.0,
            tilt=0.6 if sensed.bucket_angle < p.carry_bucket_angle else 0.0,
            gear="R2")
        return _ramped(raw, op_state, p, dt), op_state

    # ReturnOrStop: hold the brakes until the machine is at rest.
    raw = OperatorCommand(throttle=0.0, brake=1.0, steer=0.0, lift=0.0, tilt=0.0, gear="N")
    return _ramped(raw, op_state, p, dt), op_state


def _steer_to_heading(want: float, sensed: SensedState, p: OperatorParams) -> float:
    err = _wrap_angle(want - sensed.heading)
    return clamp(p.steer_gain * err, -1.0, 1.0)


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _ramped(raw: OperatorCommand, op_state: OperatorState, p: OperatorParams,
            dt: float) -> OperatorCommand:
    """Slew-limit every continuous channel to human actuation speed."""
    prev = op_state.prev_cmd
    cmd = OperatorCommand(
        throttle=rate_limit(prev.throttle, clamp(raw.throttle, 0.0, 1.0), p.ramp_throttle, dt),
        brake=rate_limit(prev.brake, clamp(raw.brake, 0.0, 1.0), p.ramp_brake, dt),
        steer=rate_limit(prev.steer, clamp(raw.steer, -1.0, 1.0), p.ramp_steer, dt),
        lift=rate_limit(prev.lift, clamp(raw.lift, -1.0, 1.0), p.ramp_lift, dt),
        tilt=rate_limit(prev.tilt, clamp(raw.tilt, -1.0, 1.0), p.ramp_tilt, dt),
        gear=raw.gear)
    op_state.prev_cmd = cmd
    return cmd
