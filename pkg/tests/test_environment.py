"""Pile geometry, dig force and bucket fill tests."""

import math

import pytest

from loadcycle.environment import (
    PileModel, dig_contact, dig_force, fill_update, spill_update, surface_z,
)
from loadcycle.errors import ConfigError


@pytest.fixture(scope="module")
def pile():
    return PileModel(toe_x=0.0, slope_angle=math.radians(35.0), crest_height=4.0,
                     specific_resistance=600000.0, fill_gain=1.0,
                     material_density=1700.0, fill_drag=12000.0,
                     clearance_penalty_gain=1.0)


class TestSurface:
    def test_flat_before_toe(self, pile):
        assert surface_z(-3.0, pile) == 0.0
        assert surface_z(0.0, pile) == 0.0

    def test_slope_height_one_meter_in(self, pile):
        assert surface_z(1.0, pile) == pytest.approx(math.tan(math.radians(35.0)), abs=1e-4)
        assert surface_z(1.0, pile) == pytest.approx(0.7002, abs=1e-4)

    def test_capped_at_crest(self, pile):
        assert surface_z(100.0, pile) == pile.crest_height

    def test_continuous_and_nondecreasing(self, pile):
        xs = [-1.0 + 0.05 * i for i in range(300)]
        zs = [surface_z(x, pile) for x in xs]
        for a, b in zip(zs, zs[1:]):
            assert b >= a
            assert b - a < 0.05  # bounded increments = no jumps

    def test_invalid_slope_rejected(self):
        with pytest.raises(ConfigError):
            PileModel(toe_x=0.0, slope_angle=-0.1, crest_height=4.0,
                      specific_resistance=1e5, fill_gain=1.0,
                      material_density=1700.0, fill_drag=0.0,
                      clearance_penalty_gain=0.0)


class TestContact:
    def test_above_surface(self, pile):
        c = dig_contact(1.0, 2.0, pile)
        assert not c.in_contact and c.penetration_depth == 0.0

    def test_exactly_on_surface(self, pile):
        z = surface_z(1.0, pile)
        c = dig_contact(1.0, z, pile)
        assert not c.in_contact and c.penetration_depth == 0.0

    def test_below_surface_normal_depth(self, pile):
        # 0.2 m vertical deficit on the face corresponds to a normal depth of
        # 0.2*cos(slope).
        z = surface_z(1.0, pile) - 0.2
        c = dig_contact(1.0, z, pile)
        assert c.in_contact
        assert c.penetration_depth == pytest.approx(0.2 * math.cos(pile.slope_angle))


class TestDigForce:
    def contact(self, depth):
        from loadcycle.environment import DigContact
        return DigContact(depth, depth > 0.0)

    def test_no_contact_no_force(self, pile):
        assert dig_force(self.contact(0.0), (1.0, 0.0), 0.0, 0.5, pile) == (0.0, 0.0)

    def test_quadratic_in_penetration(self, pile):
        f1 = dig_force(self.contact(0.1), (1.0, 0.0), pile.slope_angle, 0.0, pile)
        f2 = dig_force(self.contact(0.2), (1.0, 0.0), pile.slope_angle, 0.0, pile)
        assert f2[0] == pytest.approx(4.0 * f1[0], rel=1e-12)

    def test_magnitude_from_declared_formula(self, pile):
        # Hand evaluation: 600000*0.2^2 + 12000*0.5 = 30000, no clearance
        # penalty at edge angle above the slope, direction -x for +x motion.
        fx, fz = dig_force(self.contact(0.2), (1.0, 0.0), 0.7, 0.5, pile)
        assert fx == pytest.approx(-30000.0, rel=1e-12)
        assert fz == pytest.approx(0.0, abs=1e-9)

    def test_clearance_penalty_multiplier(self, pile):
        flat = dig_force(self.contact(0.2), (1.0, 0.0), pile.slope_angle, 0.0, pile)
        nosed = dig_force(self.contact(0.2), (1.0, 0.0), pile.slope_angle - 0.3, 0.0, pile)
        assert nosed[0] == pytest.approx(flat[0] * 1.3, rel=1e-12)

    def test_force_opposes_motion(self, pile):
        for vx, vz in [(1.0, 0.0), (0.5, 0.5), (-0.4, 0.2), (0.0, -1.0)]:
            fx, fz = dig_force(self.contact(0.3), (vx, vz), 0.6, 0.5, pile)
            assert fx * vx + fz * vz <= 0.0

    def test_continuous_at_contact_boundary(self, pile):
        fx, fz = dig_force(self.contact(1e-9), (1.0, 0.0), 0.7, 0.0, pile)
        assert abs(fx) < 1e-3 and abs(fz) < 1e-3

    def test_static_contact_pushes_out(self, pile):
        fx, fz = dig_force(self.contact(0.2), (0.0, 0.0), pile.slope_angle, 0.0, pile)
        assert fx < 0.0 and fz > 0.0  # outward normal of the ascending face


class TestFill:
    def contact(self, depth):
        from loadcycle.environment import DigContact
        return DigContact(depth, depth > 0.0)

    def test_out_of_contact_unchanged(self, pile):
        assert fill_update(0.4, 1.0, self.contact(0.0), pile, 0.01) == 0.4

    def test_full_bucket_clamped(self, pile):
        assert fill_update(1.0, 5.0, self.contact(0.3), pile, 0.1) == 1.0

    def test_linear_growth_at_constant_rate(self, pile):
        fill = 0.0
        for _ in range(100):
            fill = fill_update(fill, 0.5, self.contact(0.3), pile, 0.01)
        assert fill == pytest.approx(pile.fill_gain * 0.5 * 1.0, rel=1e-9)

    def test_retreating_edge_adds_nothing(self, pile):
        assert fill_update(0.4, -1.0, self.contact(0.3), pile, 0.01) == 0.4

    def test_monotone_in_contact(self, pile):
        fill = 0.2
        for rate in (0.1, 0.0, 0.7, -0.5, 0.3):
            new = fill_update(fill, rate, self.contact(0.2), pile, 0.02)
            assert new >= fill
            fill = new


class TestSpill:
    def test_no_spill_above_angle(self):
        assert spill_update(0.8, 0.2, -0.35, 8.0, 0.01) == 0.8

    def test_spills_when_tipped_forward(self):
        out = spill_update(0.8, -0.6, -0.35, 8.0, 0.01)
        assert out == pytest.approx(0.8 - 8.0 * 0.25 * 0.01)

    def test_never_negative(self):
        assert spill_update(0.01, -2.0, -0.35, 8.0, 1.0) == 0.0
