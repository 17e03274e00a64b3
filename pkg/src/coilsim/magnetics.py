"""Analytic magnetostatics for straight segments, square loops, and square
Helmholtz pairs.

All quantities are SI: coordinates in meters, currents in amperes, flux
density in tesla.  The pair axis is z; the two loops are centered on the
z-axis at z = +/- spacing/2 with sides parallel to the x/y axes.  Arbitrary
placements are handled by transforming the query point, not the coils.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

MU0 = 4.0e-7 * math.pi  # vacuum permeability, T*m/A (exact in SI-2019 sense)

# Query points closer than this to a wire line are treated as singular.
WIRE_GUARD_M = 1e-12


class PointOnWire(ValueError):
    """Raised when a field is requested on (or within the guard distance of)
    a wire line, where the filament model is singular."""


class ZeroCenterField(ValueError):
    """Raised when uniformity is requested but the center field is ~zero."""


@dataclass(frozen=True)
class Point:
    """A location in space, meters."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"non-finite point: {self}")


@dataclass(frozen=True)
class FieldVector:
    """Magnetic flux density, tesla. Addition is componentwise."""

    bx: float
    by: float
    bz: float

    def __add__(self, other: "FieldVector") -> "FieldVector":
        return FieldVector(self.bx + other.bx, self.by + other.by, self.bz + other.bz)

    def __neg__(self) -> "FieldVector":
        return FieldVector(-self.bx, -self.by, -self.bz)

    def magnitude(self) -> float:
        return math.sqrt(self.bx * self.bx + self.by * self.by + self.bz * self.bz)


ZERO_FIELD = FieldVector(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Segment:
    """A straight filament carrying `current` from `start` to `end`.

    The sign of the field follows the right-hand rule around the start->end
    direction; reversing the endpoints negates the field.  `turns` models N
    coincident filaments.
    """

    start: Point
    end: Point
    current: float
    turns: int = 1

    def __post_init__(self):
        if (self.start.x, self.start.y, self.start.z) == (self.end.x, self.end.y, self.end.z):
            raise ValueError("segment endpoints coincide")
        if self.turns < 1:
            raise ValueError("turns must be a positive integer")


@dataclass(frozen=True)
class SquareLoop:
    """Square filament loop of side `side` in the plane z = `z_offset`,
    centered on the z-axis, sides parallel to the x/y axes.

    Positive current circulates counterclockwise seen from +z, so it produces
    a +z field at the loop center.
    """

    side: float
    z_offset: float
    current: float
    turns: int = 1

    def __post_init__(self):
        if self.side <= 0.0:
            raise ValueError("side must be > 0")
        if self.turns < 1:
            raise ValueError("turns must be a positive integer")

    def segments(self) -> tuple[Segment, Segment, Segment, Segment]:
        """The four sides, traversed consistently (right-hand rule)."""
        s = 0.5 * self.side
        z = self.z_offset
        corners = (
            Point(s, -s, z),
            Point(s, s, z),
            Point(-s, s, z),
            Point(-s, -s, z),
        )
        return tuple(
            Segment(corners[i], corners[(i + 1) % 4], self.current, self.turns)
            for i in range(4)
        )


@dataclass(frozen=True)
class HelmholtzPair:
    """Two identical square loops at z = +/- spacing/2, series-aiding."""

    side: float
    spacing: float
    turns: int
    current: float

    def __post_init__(self):
        if self.side <= 0.0:
            raise ValueError("side must be > 0")
        if self.spacing <= 0.0:
            raise ValueError("spacing must be > 0")
        if self.turns < 1:
            raise ValueError("turns must be a positive integer")

    def loops(self) -> tuple[SquareLoop, SquareLoop]:
        h = 0.5 * self.spacing
        return (
            SquareLoop(self.side, +h, self.current, self.turns),
            SquareLoop(self.side, -h, self.current, self.turns),
        )


def segment_field(seg: Segment, q: Point) -> FieldVector:
    """Field of a finite straight filament at point q.

    Closed form N*mu0*I/(4*pi*a) * (cos(theta2) + cos(theta1)) along the
    direction perpendicular to the wire-point plane, where a is the
    perpendicular distance from q to the wire line and theta1/theta2 are the
    end angles.

    Raises PointOnWire if q lies within WIRE_GUARD_M of the wire line.
    """
    # evaluate with a canonical endpoint order so that reversing start/end
    # negates the result bit-for-bit
    start, end = seg.start, seg.end
    sign = 1.0
    if (end.x, end.y, end.z) < (start.x, start.y, start.z):
        start, end = end, start
        sign = -1.0

    dx = end.x - start.x
    dy = end.y - start.y
    dz = end.z - start.z
    length = math.sqrt(dx * dx + dy * dy + dz * dz)
    lx, ly, lz = dx / length, dy / length, dz / length

    r1x = q.x - start.x
    r1y = q.y - start.y
    r1z = q.z - start.z
    # signed projection of q-start onto the wire direction
    t1 = r1x * lx + r1y * ly + r1z * lz
    ax = r1x - t1 * lx
    ay = r1y - t1 * ly
    az = r1z - t1 * lz
    a = math.sqrt(ax * ax + ay * ay + az * az)
    if a <= WIRE_GUARD_M:
        raise PointOnWire(f"point {q} is within {WIRE_GUARD_M} m of the wire line")

    d1 = math.sqrt(r1x * r1x + r1y * r1y + r1z * r1z)
    r2x = q.x - end.x
    r2y = q.y - end.y
    r2z = q.z - end.z
    d2 = math.sqrt(r2x * r2x + r2y * r2y + r2z * r2z)

    cos1 = t1 / d1
    cos2 = (length - t1) / d2
    scale = sign * seg.turns * MU0 * seg.current / (4.0 * math.pi * a) * (cos1 + cos2)

    # unit vector along l_hat x a_hat
    inv_a = 1.0 / a
    px = (ly * az - lz * ay) * inv_a
    py = (lz * ax - lx * az) * inv_a
    pz = (lx * ay - ly * ax) * inv_a
    return FieldVector(scale * px, scale * py, scale * pz)


def square_loop_field(loop: SquareLoop, q: Point) -> FieldVector:
    """Field of a square loop at q: sum of its four segment fields."""
    b = ZERO_FIELD
    for seg in loop.segments():
        b = b + segment_field(seg, q)
    return b


def pair_field(pair: HelmholtzPair, q: Point) -> FieldVector:
    """Field of the Helmholtz pair at q: superposition of the two loops."""
    h1, h2 = pair.loops()
    return square_loop_field(h1, q) + square_loop_field(h2, q)


def _onaxis_single(side: float, z_rel: float, turns: int, current: float) -> float:
    # z-component of one square loop's field on its axis, z_rel measured
    # from the loop plane
    h = 0.5 * side
    h2 = h * h
    u = z_rel * z_rel
    return (2.0 * turns * MU0 * current / math.pi) * (
        h2 / ((h2 + u) * math.sqrt(2.0 * h2 + u))
    )


def onaxis_field(pair: HelmholtzPair, z: float) -> float:
    """Closed-form bz on the pair axis at height z, tesla.

    No singularity for spacing > 0; valid for all z.
    """
    half = 0.5 * pair.spacing
    return _onaxis_single(pair.side, z - half, pair.turns, pair.current) + _onaxis_single(
        pair.side, z + half, pair.turns, pair.current
    )


def uniformity(pair: HelmholtzPair, q: Point, *, vector_norm: bool = False) -> float:
    """Relative field deviation at q from the center value, in percent.

    By default compares z-components (the axis under analysis); pass
    vector_norm=True to compare full vector magnitudes instead.

    Raises ZeroCenterField if the center reference is below 1e-15 T.
    """
    b_q = pair_field(pair, q)
    b_o = pair_field(pair, Point(0.0, 0.0, 0.0))
    if vector_norm:
        ref = b_o.magnitude()
        val = b_q.magnitude()
    else:
        ref = abs(b_o.bz)
        val = abs(b_q.bz)
    if ref < 1e-15:
        raise ZeroCenterField("center field magnitude below 1e-15 T")
    return 100.0 * (val - ref) / ref


@dataclass(frozen=True)
class GridSpec:
    """Rectilinear sample grid: (lo, hi, n) per axis, n >= 1.

    n == 1 samples the single coordinate lo.  Iteration order is row-major
    with x outermost and z innermost.
    """

    x: tuple[float, float, int]
    y: tuple[float, float, int]
    z: tuple[float, float, int]

    def __post_init__(self):
        for name, (lo, hi, n) in (("x", self.x), ("y", self.y), ("z", self.z)):
            if n < 1:
                raise ValueError(f"{name} axis count must be >= 1")
            if n == 1 and lo != hi:
                raise ValueError(f"{name} axis with n=1 requires lo == hi")

    @staticmethod
    def _axis(lo: float, hi: float, n: int) -> list[float]:
        if n == 1:
            return [lo]
        step = (hi - lo) / (n - 1)
        return [lo + i * step for i in range(n)]

    def points(self) -> Iterator[Point]:
        for x in self._axis(*self.x):
            for y in self._axis(*self.y):
                for z in self._axis(*self.z):
                    yield Point(x, y, z)


@dataclass(frozen=True)
class FieldSample:
    point: Point
    field: FieldVector
    uniformity_pct: float


def field_map(pair: HelmholtzPair, grid: GridSpec) -> list[FieldSample]:
    """Evaluate field and uniformity over a grid, in deterministic row-major
    order.  A grid point on a wire line raises PointOnWire naming the point.
    """
    b_o = pair_field(pair, Point(0.0, 0.0, 0.0))
    ref = abs(b_o.bz)
    if ref < 1e-15:
        raise ZeroCenterField("center field magnitude below 1e-15 T")
    out = []
    for p in grid.points():
        try:
            b = pair_field(pair, p)
        except PointOnWire as err:
            raise PointOnWire(f"grid point {p} lies on a wire line") from err
        h = 100.0 * (abs(b.bz) - ref) / ref
        out.append(FieldSample(p, b, h))
    return out


FIELD_MAP_HEADER = ("x_m", "y_m", "z_m", "bx_T", "by_T", "bz_T", "uniformity_pct")


def write_field_map_csv(path, samples: Sequence[FieldSample]) -> None:
    """Write field-map samples as CSV with round-trip decimal formatting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FIELD_MAP_HEADER)
        for s in samples:
            writer.writerow(
                [
                    repr(s.point.x),
                    repr(s.point.y),
                    repr(s.point.z),
                    repr(s.field.bx),
                    repr(s.field.by),
                    repr(s.field.bz),
                    repr(s.uniformity_pct),
                ]
            )
