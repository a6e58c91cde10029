"""Gravel pile geometry, resistive digging force and bucket fill accounting.

The pile is a rigid planar wedge: flat ground up to the toe, a straight face
at the slope angle, a flat crest.  Resistance grows with the square of the
edge's penetration normal to the local surface and always opposes the edge's
motion, so digging power is never generated by the pile.  Width is lumped
into the resistance constant (per-unit-width planar model).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError
from .kernel import clamp

# Edge speeds below this are treated as static contact (m/s).
STATIC_SPEED_EPS = 1e-4


@dataclass(frozen=True)
class PileModel:
    toe_x: float                  # m, pile face starts here
    slope_angle: float            # rad
    crest_height: float           # m
    specific_resistance: float    # N/m^2 of penetrated cross-section
    fill_gain: float              # fill fraction per m^2 of swept cross-section
    material_density: float       # kg/m^3
    fill_drag: float              # N of motion drag at fill = 1
    clearance_penalty_gain: float  # extra resistance per rad of negative clearance

    def __post_init__(self):
        if not 0.0 < self.slope_angle < math.pi / 2:
            raise ConfigError("pile.slope_angle", "must be in (0, pi/2)")
        if self.specific_resistance <= 0.0:
            raise ConfigError("pile.specific_resistance", "must be positive")
        if self.crest_height <= 0.0:
            raise ConfigError("pile.crest_height", "must be positive")


@dataclass(frozen=True, slots=True)
class DigContact:
    penetration_depth: float      # m, normal to the local surface, >= 0
    in_contact: bool


NO_CONTACT = DigContact(0.0, False)


def surface_z(x: float, pile: PileModel) -> float:
    """Pile surface height: 0 before the toe, sloped face, capped at the crest."""
    if x <= pile.toe_x:
        return 0.0
    return min((x - pile.toe_x) * math.tan(pile.slope_angle), pile.crest_height)


def local_slope(x: float, pile: PileModel) -> float:
    """Inclination of the surface segment under x."""
    if x <= pile.toe_x:
        return 0.0
    if (x - pile.toe_x) * math.tan(pile.slope_angle) >= pile.crest_height:
        return 0.0
    return pile.slope_angle


def dig_contact(edge_x: float, edge_z: float, pile: PileModel) -> DigContact:
    """Penetration of the edge below the surface, measured normal to it."""
    deficit = surface_z(edge_x, pile) - edge_z
    if deficit <= 0.0:
        return NO_CONTACT
    depth = deficit * math.cos(local_slope(edge_x, pile))
    return DigContact(penetration_depth=depth, in_contact=True)


def dig_force(contact: DigContact, edge_velocity: tuple[float, float],
              edge_angle: float, fill: float, pile: PileModel) -> tuple[float, float]:
    """Resistive force (fx, fz) on the cutting edge.

    Quadratic in penetration, plus carried-material drag, directed against
    the edge velocity.  Pressing the bucket bottom into the face (negative
    clearance angle) multiplies the resistance.
    """
    if not contact.in_contact:
        return 0.0, 0.0
    p = contact.penetration_depth
    magnitude = pile.specific_resistance * p * p + pile.fill_drag * clamp(fill, 0.0, 1.0)
    clearance = edge_angle - pile.slope_angle
    magnitude *= 1.0 + pile.clearance_penalty_gain * max(0.0, -clearance)
    vx, vz = edge_velocity
    speed = math.hypot(vx, vz)
    if speed < STATIC_SPEED_EPS:
        # Static resistance pushes the edge out along the face normal.
        eps = pile.slope_angle
        return -magnitude * math.sin(eps), magnitude * math.cos(eps)
    return -magnitude * vx / speed, -magnitude * vz / speed


def fill_update(fill: float, swept_area_rate: float, contact: DigContact,
                pile: PileModel, dt: float) -> float:
    """Accumulate bucket fill from the swept cross-section while advancing."""
    if not contact.in_contact or swept_area_rate <= 0.0:
        return fill
    return clamp(fill + pile.fill_gain * swept_area_rate * dt, 0.0, 1.0)


def spill_update(fill: float, edge_angle: float, spill_angle: float,
                 spill_rate: float, dt: float) -> float:
    """Drain fill when the bucket is pitched forward past the spill angle."""
    if edge_angle >= spill_angle or fill <= 0.0:
        return fill
    return clamp(fill - spill_rate * (spill_angle - edge_angle) * dt, 0.0, 1.0)
