"""Operator rules, perception firewall and cycle state machine."""

import ast
import inspect
import math
from dataclasses import fields, replace

import pytest

import loadcycle.operator as op
from loadcycle.kernel import Latch


@pytest.fixture(scope="module")
def params(reference_cfg):
    return reference_cfg.operator_params


@pytest.fixture(scope="module")
def task(reference_cfg):
    return reference_cfg.task


def make_sensed(**overrides):
    base = dict(
        v=0.5, engine_speed=150.0, x=0.0, y=0.0, heading=0.0,
        edge_x=1.0, edge_z=0.3, edge_angle=0.2, lift_angle=-0.3,
        bucket_angle=0.4, bearing=0.1, slope_angle=0.611,
        attack_angle=0.1, clearance_angle=-0.411, wheel_slip=0.05,
        in_contact=True, dist_to_toe=-1.0, dist_to_receiver=15.0)
    base.update(overrides)
    return op.SensedState(**base)


class TestTractionControl1:
    def test_no_slip_full_throttle(self, params):
        assert op.tc1_throttle_cap(0.0, params) == 1.0

    def test_saturated_cap_is_floor(self, params):
        assert op.tc1_throttle_cap(params.slip_cap_high, params) == params.throttle_cap_floor
        assert op.tc1_throttle_cap(2.0, params) == params.throttle_cap_floor

    def test_midpoint_halfway(self, params):
        mid = 0.5 * (params.slip_cap_low + params.slip_cap_high)
        expect = 0.5 * (1.0 + params.throttle_cap_floor)
        assert op.tc1_throttle_cap(mid, params) == pytest.approx(expect)

    def test_monotone_nonincreasing(self, params):
        xs = [i * 0.01 for i in range(60)]
        ys = [op.tc1_throttle_cap(x, params) for x in xs]
        for a, b in zip(ys, ys[1:]):
            assert b <= a + 1e-15


class TestTractionControl2:
    def test_zero_integral_no_boost(self, params):
        assert op.tc2_lift_boost(0.0, params) == 0.0

    def test_saturated_boost(self, params):
        assert op.tc2_lift_boost(params.slip_integral_high, params) == params.lift_boost_max

    def test_monotone_nondecreasing(self, params):
        xs = [i * 0.02 for i in range(80)]
        ys = [op.tc2_lift_boost(x, params) for x in xs]
        for a, b in zip(ys, ys[1:]):
            assert b >= a - 1e-15


class TestBucketVelocityVector:
    def test_matched_bearing_decays(self, params):
        term = op.bvv_throttle(0.611, 0.611, params, 0.2, 0.1)
        assert term == pytest.approx(0.2 - params.bvv_ramp_rate * 0.1)

    def test_ramp_integrates_and_caps(self, params):
        term = 0.0
        dt = 0.05
        for i in range(1, 200):
            term = op.bvv_throttle(0.0, 0.611, params, term, dt)
            assert term == pytest.approx(min(params.bvv_ramp_rate * i * dt,
                                             params.bvv_max))

    def test_one_sided_rule(self, params):
        # Bearing above the slope is not a deviation that feeds throttle.
        term = op.bvv_throttle(0.611 + 1.0, 0.611, params, 0.3, 0.1)
        assert term < 0.3

    def test_never_negative(self, params):
        assert op.bvv_throttle(0.611, 0.611, params, 0.0, 10.0) == 0.0


class TestAttitude:
    def test_setpoint_zero_demand(self, params):
        tilt = op.attitude_tilt(params.target_clearance, params.target_attack, params)
        assert tilt == 0.0

    def test_linear_in_clearance_deficit(self, params):
        d = 0.1
        tilt = op.attitude_tilt(params.target_clearance - d, params.target_attack, params)
        assert tilt == pytest.approx(params.clearance_gain * d)

    def test_clamped_at_full(self, params):
        assert op.attitude_tilt(-10.0, -10.0, params) == 1.0

    def test_monotone_nonincreasing_in_angles(self, params):
        prev = None
        for a in [0.01 * i - 0.8 for i in range(160)]:
            t = op.attitude_tilt(a, params.target_attack, params)
            if prev is not None:
                assert t <= prev + 1e-15
            prev = t


class TestExitTriggers:
    def test_below_thresholds_stays_clear(self, params):
        latch = op.exit_triggers(0.0, 0.0, Latch(False), params)
        assert latch.state is False

    def test_bucket_angle_fires_and_holds(self, params):
        latch = op.exit_triggers(params.exit_bucket_angle + 0.01, 0.0, Latch(False), params)
        assert latch.state is True
        latch = op.exit_triggers(-1.0, -1.0, latch, params)
        assert latch.state is True

    def test_lift_angle_alone_fires(self, params):
        latch = op.exit_triggers(0.0, params.exit_lift_angle + 0.01, Latch(False), params)
        assert latch.state is True


class TestFillStep:
    def test_neutral_rules_give_base_point(self, params):
        sensed = make_sensed(wheel_slip=0.0, bearing=0.611,
                             clearance_angle=params.target_clearance,
                             attack_angle=params.target_attack,
                             bucket_angle=0.4, lift_angle=-0.3)
        st = op.OperatorState(phase=op.Phase.FILL,
                              prev_cmd=op.OperatorCommand(throttle=params.base_throttle,
                                                          lift=params.base_lift))
        cmd, st = op.fill_step(sensed, st, params, 1e-3)
        assert cmd.gear == "F1"
        assert cmd.throttle == pytest.approx(params.base_throttle)
        assert cmd.lift == pytest.approx(params.base_lift)
        assert cmd.tilt == pytest.approx(0.0)
        assert cmd.brake == 0.0 and cmd.steer == 0.0

    def test_latched_exit_forces_full_tilt_until_racked(self, params):
        sensed = make_sensed(clearance_angle=params.exit_bucket_angle + 0.1,
                             bucket_angle=params.tilt_back_angle - 0.2,
                             attack_angle=10.0)
        st = op.OperatorState(phase=op.Phase.FILL,
                              prev_cmd=op.OperatorCommand(tilt=0.9))
        cmd, st = op.fill_step(sensed, st, params, 0.1)
        assert st.exit_latch.state
        assert cmd.tilt == 1.0
        racked = make_sensed(clearance_angle=-1.0, attack_angle=10.0,
                             bucket_angle=params.tilt_back_angle + 0.01)
        cmd, st = op.fill_step(racked, st, params, 0.1)
        assert st.exit_latch.state
        assert cmd.tilt < 0.9  # lever released once fully tilted back

    def test_combined_rules_throttle_formula(self, params):
        # Slip beyond the cap knee and a shallow bearing at the same time:
        # throttle = base*cap_floor + ramped bearing term.
        dt = 0.1
        st = op.OperatorState(phase=op.Phase.FILL, bvv_term=0.1,
                              prev_cmd=op.OperatorCommand(throttle=0.5))
        sensed = make_sensed(wheel_slip=0.8, bearing=0.0)
        cmd, st = op.fill_step(sensed, st, params, dt)
        bvv = min(0.1 + params.bvv_ramp_rate * dt, params.bvv_max)
        expect = params.base_throttle * params.throttle_cap_floor + bvv
        assert st.bvv_term == pytest.approx(bvv)
        assert cmd.throttle == pytest.approx(expect)

    def test_slip_integral_accumulates(self, params):
        st = op.OperatorState(phase=op.Phase.FILL)
        sensed = make_sensed(wheel_slip=0.5)
        for _ in range(10):
            _, st = op.fill_step(sensed, st, params, 0.01)
        assert st.slip_integral == pytest.approx(0.5 * 0.1)


class TestPhaseMachine:
    def advance(self, sensed, st, params, task, n=1, dt=1e-3):
        cmd = None
        for _ in range(n):
            cmd, st = op.phase_step(sensed, st, params, task, dt)
        return cmd, st

    def test_penetration_starts_fill_in_low_gear(self, params, task):
        st = op.OperatorState()
        free = make_sensed(in_contact=False, dist_to_toe=5.0)
        cmd, st = self.advance(free, st, params, task)
        assert st.phase is op.Phase.APPROACH_PILE
        assert cmd.gear == "F2"
        near = make_sensed(in_contact=False,
                           dist_to_toe=params.approach_shift_distance - 0.5)
        cmd, st = self.advance(near, st, params, task)
        assert cmd.gear == "F1"
        touch = make_sensed(in_contact=True, dist_to_toe=0.0)
        cmd, st = self.advance(touch, st, params, task)
        assert st.phase is op.Phase.FILL
        assert cmd.gear == "F1"

    def test_fill_exit_shifts_reverse_with_full_lift(self, params, task):
        st = op.OperatorState(phase=op.Phase.FILL, exit_latch=Latch(True),
                              prev_cmd=op.OperatorCommand(throttle=0.9, lift=0.4,
                                                          tilt=1.0, gear="F1"))
        done = make_sensed(in_contact=False,
                           bucket_angle=params.tilt_back_angle + 0.02)
        cmd, st = self.advance(done, st, params, task, n=1, dt=0.5)
        assert st.phase is op.Phase.LEAVE_PILE_REVERSE
        assert cmd.gear == "R2"
        assert cmd.lift == 1.0

    def test_dump_completes_on_empty_bucket_angle(self, params, task):
        st = op.OperatorState(phase=op.Phase.DUMP)
        tipping = make_sensed(v=0.0, bucket_angle=params.dump_empty_angle + 0.2,
                              in_contact=False)
        cmd, st = self.advance(tipping, st, params, task, n=400)
        assert st.phase is op.Phase.DUMP
        assert cmd.tilt == -1.0
        empty = make_sensed(v=0.0, bucket_angle=params.dump_empty_angle - 0.01,
                            in_contact=False)
        _, st = self.advance(empty, st, params, task)
        assert st.phase is op.Phase.REVERSE_FROM_RECEIVER
        cmd, st = self.advance(empty, st, params, task)
        assert cmd.gear == "R2"

    def test_command_channels_always_in_range(self, params, task):
        st = op.OperatorState()
        wild = make_sensed(v=-50.0, wheel_slip=30.0, bearing=-3.0,
                           clearance_angle=-3.0, attack_angle=-3.0,
                           dist_to_receiver=0.0)
        for _ in range(50):
            cmd, st = op.phase_step(wild, st, params, task, 0.1)
            assert 0.0 <= cmd.throttle <= 1.0
            assert 0.0 <= cmd.brake <= 1.0
            assert -1.0 <= cmd.steer <= 1.0
            assert -1.0 <= cmd.lift <= 1.0
            assert -1.0 <= cmd.tilt <= 1.0

    def test_slew_rate_bounded(self, params, task):
        st = op.OperatorState()
        dt = 0.02
        prev = st.prev_cmd
        scenarios = [make_sensed(in_contact=False, dist_to_toe=5.0),
                     make_sensed(in_contact=True, wheel_slip=1.5),
                     make_sensed(in_contact=False, bucket_angle=1.0)]
        for sensed in scenarios * 20:
            cmd, st = op.phase_step(sensed, st, params, task, dt)
            assert abs(cmd.throttle - prev.throttle) <= params.ramp_throttle * dt + 1e-12
            assert abs(cmd.lift - prev.lift) <= params.ramp_lift * dt + 1e-12
            assert abs(cmd.tilt - prev.tilt) <= params.ramp_tilt * dt + 1e-12
            prev = cmd


class TestSignalFirewall:
    def test_sensed_state_has_no_plant_internals(self):
        names = [f.name for f in fields(op.SensedState)]
        for name in names:
            for banned in ("converter", "pump", "pressure", "displacement"):
                assert banned not in name.lower()
        assert op.sensed_state_is_clean()

    def test_operator_module_imports_no_plant_modules(self):
        tree = ast.parse(inspect.getsource(op))
        imported = set()
        for node in ast.walk(tree):
            if isinstance(node, ast.ImportFrom):
                imported.add(node.module or "")
                imported.update(a.name for a in node.names)
            elif isinstance(node, ast.Import):
                imported.update(a.name for a in node.names)
        for mod in ("machine", "environment", "sim", "cli", "config"):
            assert mod not in imported
            assert f"loadcycle.{mod}" not in imported


class TestSense:
    def test_bearing_matches_slope_when_moving_along_face(self, reference_cfg):
        from loadcycle.machine import MachineState
        from loadcycle.environment import DigContact
        pile = reference_cfg.pile
        eps = pile.slope_angle
        machine = MachineState(v=1.0)

        class Edge:
            x, y, z, angle = 1.0, 0.0, 0.5, 0.3
        vel = (math.cos(eps), math.sin(eps))
        s = op.sense(machine, Edge, vel, DigContact(0.1, True), pile,
                     reference_cfg.task, 0.0, None)
        assert s.bearing == pytest.approx(eps)
        assert s.attack_angle == pytest.approx(Edge.angle - eps)
        assert s.clearance_angle == pytest.approx(Edge.angle - eps)

    def test_slow_edge_holds_previous_bearing(self, reference_cfg):
        from loadcycle.machine import MachineState
        from loadcycle.environment import DigContact
        pile = reference_cfg.pile
        machine = MachineState(v=0.0)

        class Edge:
            x, y, z, angle = 1.0, 0.0, 0.5, 0.3
        prev = op.sense(machine, Edge, (1.0, 1.0), DigContact(0.0, False), pile,
                        reference_cfg.task, 0.0, None)
        held = op.sense(machine, Edge, (1e-4, 1e-4), DigContact(0.0, False), pile,
                        reference_cfg.task, 0.0, prev)
        assert held.bearing == prev.bearing

    def test_edge_parallel_to_velocity_zero_attack(self, reference_cfg):
        from loadcycle.machine import MachineState
        from loadcycle.environment import DigContact

        class Edge:
            x, y, z, angle = 1.0, 0.0, 0.5, 0.4
        vel = (math.cos(0.4), math.sin(0.4))
        s = op.sense(MachineState(v=1.0), Edge, vel, DigContact(0.0, False),
                     reference_cfg.pile, reference_cfg.task, 0.0, None)
        assert s.attack_angle == pytest.approx(0.0, abs=1e-12)
