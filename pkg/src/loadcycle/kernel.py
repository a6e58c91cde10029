"""Numerical primitives the controller rules and plant maps are built from.

Everything here is a pure function over small value types: cubic smooth
steps, set/reset latches, rate limiters, clamped integrators and table
lookups.  The rest of the package composes these; nothing in this module
knows about engines, buckets or gravel.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True, slots=True)
class SmoothStepSpec:
    """Cubic smooth step: h0 at/below x0, h1 at/above x1, C1 blend between.

    The blend is h0 + (h1-h0)*(3u^2 - 2u^3) with u = (x-x0)/(x1-x0), so the
    first derivative vanishes at both breakpoints.
    """

    x0: float
    h0: float
    x1: float
    h1: float

    def __post_init__(self):
        if not self.x0 < self.x1:
            raise ValueError(f"smooth step breakpoints must satisfy x0 < x1, got {self.x0} >= {self.x1}")


def step3(x: float, spec: SmoothStepSpec) -> float:
    """Evaluate a cubic smooth step at x."""
    if x <= spec.x0:
        return spec.h0
    if x >= spec.x1:
        return spec.h1
    u = (x - spec.x0) / (spec.x1 - spec.x0)
    return spec.h0 + (spec.h1 - spec.h0) * u * u * (3.0 - 2.0 * u)


@dataclass(frozen=True, slots=True)
class Latch:
    """One-bit memory updated through set/reset events only."""

    state: bool = False


def latch_update(latch: Latch, set_: bool, reset: bool) -> Latch:
    """Advance a latch one event.  Reset wins over a simultaneous set."""
    if reset:
        return Latch(False)
    if set_:
        return Latch(True)
    return latch


def rate_limit(prev: float, target: float, rate: float, dt: float) -> float:
    """Move prev toward target by at most rate*dt, landing exactly on target."""
    step = rate * dt
    if target > prev + step:
        return prev + step
    if target < prev - step:
        return prev - step
    return target


def clamped_integrate(acc: float, value: float, dt: float, lo: float, hi: float) -> float:
    """acc + value*dt, clamped to [lo, hi]."""
    out = acc + value * dt
    if out < lo:
        return lo
    if out > hi:
        return hi
    return out


def clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


@dataclass(frozen=True)
class Table1D:
    """Piecewise-linear lookup over strictly increasing knots.

    Evaluation clamps to the end values outside the knot range.
    """

    knots: tuple[float, ...]
    values: tuple[float, ...]

    def __init__(self, knots: Sequence[float], values: Sequence[float]):
        knots = tuple(float(k) for k in knots)
        values = tuple(float(v) for v in values)
        if len(knots) < 2:
            raise ValueError("table needs at least 2 knots")
        if len(knots) != len(values):
            raise ValueError(f"knot/value length mismatch: {len(knots)} vs {len(values)}")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ValueError("table knots must be strictly increasing")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)

    def __call__(self, x: float) -> float:
        return table_eval(self, x)

    def slope(self, x: float) -> float:
        """Slope of the active segment (0 outside the knot range)."""
        k, v = self.knots, self.values
        if x <= k[0] or x >= k[-1]:
            return 0.0
        i = bisect_right(k, x) - 1
        return (v[i + 1] - v[i]) / (k[i + 1] - k[i])


def table_eval(table: Table1D, x: float) -> float:
    """Linear interpolation with end-value clamping."""
    k, v = table.knots, table.values
    if x <= k[0]:
        return v[0]
    if x >= k[-1]:
        return v[-1]
    i = bisect_right(k, x) - 1
    u = (x - k[i]) / (k[i + 1] - k[i])
    return v[i] + (v[i + 1] - v[i]) * u


@dataclass(frozen=True)
class Table2D:
    """Bilinear lookup over a rectangular grid, clamped at the borders.

    ``values[i][j]`` corresponds to (x_knots[i], y_knots[j]).
    """

    x_knots: tuple[float, ...]
    y_knots: tuple[float, ...]
    values: tuple[tuple[float, ...], ...]

    def __init__(self, x_knots: Sequence[float], y_knots: Sequence[float],
                 values: Sequence[Sequence[float]]):
        xk = tuple(float(x) for x in x_knots)
        yk = tuple(float(y) for y in y_knots)
        if len(xk) < 2 or len(yk) < 2:
            raise ValueError("grid needs at least 2 knots per axis")
        if any(b <= a for a, b in zip(xk, xk[1:])) or any(b <= a for a, b in zip(yk, yk[1:])):
            raise ValueError("grid knots must be strictly increasing")
        rows = tuple(tuple(float(v) for v in row) for row in values)
        if len(rows) != len(xk) or any(len(r) != len(yk) for r in rows):
            raise ValueError("grid values shape must be (len(x_knots), len(y_knots))")
        object.__setattr__(self, "x_knots", xk)
        object.__setattr__(self, "y_knots", yk)
        object.__setattr__(self, "values", rows)

    def __call__(self, x: float, y: float) -> float:
        xk, yk, v = self.x_knots, self.y_knots, self.values
        x = clamp(x, xk[0], xk[-1])
        y = clamp(y, yk[0], yk[-1])
        i = min(bisect_right(xk, x) - 1, len(xk) - 2) if x > xk[0] else 0
        j = min(bisect_right(yk, y) - 1, len(yk) - 2) if y > yk[0] else 0
        ux = (x - xk[i]) / (xk[i + 1] - xk[i])
        uy = (y - yk[j]) / (yk[j + 1] - yk[j])
        v00, v01 = v[i][j], v[i][j + 1]
        v10, v11 = v[i + 1][j], v[i + 1][j + 1]
        return (v00 * (1 - ux) * (1 - uy) + v10 * ux * (1 - uy)
                + v01 * (1 - ux) * uy + v11 * ux * uy)
