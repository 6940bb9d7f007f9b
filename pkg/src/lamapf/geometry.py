"""Shapes, poses, grid footprints and collision checks.

Agents are rigid shapes (circles or rectangles) anchored at a reference
point that sits on a cell center.  A pose is an integer cell position plus
one of four axis-aligned orientations.  Footprints are the sets of cells a
shape overlaps with positive area; transfers (moves / in-place rotations)
produce swept footprints sampled along the motion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Union

# orientation index -> unit direction (dx, dy)
ORIENT_VECTORS = ((1, 0), (-1, 0), (0, 1), (0, -1))
# orientation index -> angle in degrees (direction of the local +x axis)
ORIENT_ANGLES = (0.0, 180.0, 90.0, 270.0)
N_ORIENTS = 4

# positive-area overlap threshold: touching boundaries do not count
_AREA_EPS = 1e-9
# margin added to the conservative fast-path radii to absorb float noise
_FAST_EPS = 1e-6
# half diagonal of a unit cell
_HALF_DIAG = math.sqrt(2.0) / 2.0

# sample fractions along a one-cell translation
TRANSLATION_SAMPLES = (0.0, 0.25, 0.5, 0.75, 1.0)
# sample pitch for rotation sweeps, degrees
ROTATION_STEP_DEG = 15.0


@dataclass(frozen=True)
class Pose:
    x: int
    y: int
    orient: int

    def direction(self) -> tuple[int, int]:
        return ORIENT_VECTORS[self.orient]


@dataclass(frozen=True)
class Circle:
    radius: float


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned corner offsets in the agent frame.

    min_offset must be strictly negative and max_offset strictly positive in
    both components so the reference point lies inside the rectangle.
    """

    min_offset: tuple[float, float]
    max_offset: tuple[float, float]


Shape = Union[Circle, Rectangle]


def validate_shape(shape: Shape) -> None:
    if isinstance(shape, Circle):
        if not shape.radius > 0:
            raise ValueError(f"circle radius must be positive, got {shape.radius}")
    elif isinstance(shape, Rectangle):
        (ax, ay), (bx, by) = shape.min_offset, shape.max_offset
        if not (ax < 0 < bx and ay < 0 < by):
            raise ValueError(
                "rectangle must contain its reference point strictly inside, "
                f"got min_offset={shape.min_offset} max_offset={shape.max_offset}"
            )
    else:
        raise TypeError(f"unsupported shape: {shape!r}")


def circumradius(shape: Shape) -> float:
    if isinstance(shape, Circle):
        return shape.radius
    (ax, ay), (bx, by) = shape.min_offset, shape.max_offset
    return max(
        math.hypot(x, y) for x in (ax, bx) for y in (ay, by)
    )


def inradius(shape: Shape) -> float:
    if isinstance(shape, Circle):
        return shape.radius
    (ax, ay), (bx, by) = shape.min_offset, shape.max_offset
    return min(-ax, bx, -ay, by)


def is_legal_rotation(o_from: int, o_to: int) -> bool:
    """In-place rotations are limited to +/-90 degrees."""
    va, vb = ORIENT_VECTORS[o_from], ORIENT_VECTORS[o_to]
    return va[0] * vb[0] + va[1] * vb[1] == 0


def classify_action(p: Pose, q: Pose) -> Optional[str]:
    """Return 'wait', 'move' or 'rotate' for a legal single-step action, else None."""
    if p == q:
        return "wait"
    if p.orient == q.orient:
        dx, dy = q.x - p.x, q.y - p.y
        if (dx, dy) == ORIENT_VECTORS[p.orient]:
            return "move"
        return None
    if (p.x, p.y) == (q.x, q.y) and is_legal_rotation(p.orient, q.orient):
        return "rotate"
    return None


# ---------------------------------------------------------------------------
# per-cell overlap probes


def _circle_covers_cell(cx: float, cy: float, r: float, qx: int, qy: int) -> bool:
    dx = max(abs(cx - qx) - 0.5, 0.0)
    dy = max(abs(cy - qy) - 0.5, 0.0)
    return dx * dx + dy * dy < r * r - _AREA_EPS


def _aabb_covers_cell(x0: float, y0: float, x1: float, y1: float, qx: int, qy: int) -> bool:
    return (
        min(x1, qx + 0.5) - max(x0, qx - 0.5) > _AREA_EPS
        and min(y1, qy + 0.5) - max(y0, qy - 0.5) > _AREA_EPS
    )


def _rect_world_aabb(shape: Rectangle, orient: int) -> tuple[float, float, float, float]:
    """World-frame corner offsets for an axis-aligned orientation."""
    (ax, ay), (bx, by) = shape.min_offset, shape.max_offset
    if orient == 0:  # +x
        return ax, ay, bx, by
    if orient == 1:  # -x, rotated 180
        return -bx, -by, -ax, -ay
    if orient == 2:  # +y, rotated 90
        return -by, ax, -ay, bx
    if orient == 3:  # -y, rotated 270
        return ay, -bx, by, -ax
    raise ValueError(f"bad orientation {orient}")


def _obb_covers_cell(
    cx: float, cy: float, shape: Rectangle, angle_deg: float, qx: int, qy: int
) -> bool:
    """Oriented rectangle vs unit cell, positive-area overlap via separating axes."""
    th = math.radians(angle_deg)
    c, s = math.cos(th), math.sin(th)
    (ax, ay), (bx, by) = shape.min_offset, shape.max_offset
    corners = (
        (cx + ax * c - ay * s, cy + ax * s + ay * c),
        (cx + bx * c - ay * s, cy + bx * s + ay * c),
        (cx + bx * c - by * s, cy + bx * s + by * c),
        (cx + ax * c - by * s, cy + ax * s + by * c),
    )
    square = (
        (qx - 0.5, qy - 0.5),
        (qx + 0.5, qy - 0.5),
        (qx + 0.5, qy + 0.5),
        (qx - 0.5, qy + 0.5),
    )
    for ux, uy in ((1.0, 0.0), (0.0, 1.0), (c, s), (-s, c)):
        pa = [px * ux + py * uy for px, py in corners]
        pb = [px * ux + py * uy for px, py in square]
        if min(pa) >= max(pb) - _AREA_EPS or min(pb) >= max(pa) - _AREA_EPS:
            return False
    return True


def _cells_for_shape_at(
    shape: Shape, cx: float, cy: float, angle_deg: float
) -> set[tuple[int, int]]:
    """Cells with positive-area overlap, shape at continuous center with angle."""
    out: set[tuple[int, int]] = set()
    if isinstance(shape, Circle):
        r = shape.radius
        for qx in range(math.floor(cx - r - 0.5) , math.ceil(cx + r + 0.5) + 1):
            for qy in range(math.floor(cy - r - 0.5), math.ceil(cy + r + 0.5) + 1):
                if _circle_covers_cell(cx, cy, r, qx, qy):
                    out.add((qx, qy))
        return out
    rc = circumradius(shape)
    axis_aligned = abs(angle_deg % 90.0) < 1e-12
    if axis_aligned:
        orient = _angle_to_orient(angle_deg)
        x0, y0, x1, y1 = _rect_world_aabb(shape, orient)
        x0, y0, x1, y1 = cx + x0, cy + y0, cx + x1, cy + y1
        for qx in range(math.floor(x0 - 0.5), math.ceil(x1 + 0.5) + 1):
            for qy in range(math.floor(y0 - 0.5), math.ceil(y1 + 0.5) + 1):
                if _aabb_covers_cell(x0, y0, x1, y1, qx, qy):
                    out.add((qx, qy))
        return out
    for qx in range(math.floor(cx - rc - 0.5), math.ceil(cx + rc + 0.5) + 1):
        for qy in range(math.floor(cy - rc - 0.5), math.ceil(cy + rc + 0.5) + 1):
            if _obb_covers_cell(cx, cy, shape, angle_deg, qx, qy):
                out.add((qx, qy))
    return out


def _angle_to_orient(angle_deg: float) -> int:
    a = angle_deg % 360.0
    for o, ref in enumerate(ORIENT_ANGLES):
        if abs(a - ref) < 1e-9 or abs(a - ref - 360.0) < 1e-9:
            return o
    raise ValueError(f"angle {angle_deg} is not axis aligned")


# ---------------------------------------------------------------------------
# stamps: footprints relative to the reference cell, cached per shape


@lru_cache(maxsize=None)
def pose_stamp(shape: Shape, orient: int) -> frozenset[tuple[int, int]]:
    return frozenset(_cells_for_shape_at(shape, 0.0, 0.0, ORIENT_ANGLES[orient]))


@lru_cache(maxsize=None)
def move_stamp(shape: Shape, orient: int) -> frozenset[tuple[int, int]]:
    """Swept cells for a one-cell forward move, relative to the source cell."""
    dx, dy = ORIENT_VECTORS[orient]
    cells: set[tuple[int, int]] = set()
    for f in TRANSLATION_SAMPLES:
        cells |= _cells_for_shape_at(shape, f * dx, f * dy, ORIENT_ANGLES[orient])
    return frozenset(cells)


@lru_cache(maxsize=None)
def rotation_stamp(
    shape: Shape, o_from: int, o_to: int, step_deg: float = ROTATION_STEP_DEG
) -> frozenset[tuple[int, int]]:
    """Swept cells for an in-place +/-90 rotation, relative to the cell."""
    if not is_legal_rotation(o_from, o_to):
        raise ValueError(f"illegal rotation {o_from} -> {o_to}")
    if isinstance(shape, Circle):
        return pose_stamp(shape, o_from)
    a0, a1 = ORIENT_ANGLES[o_from], ORIENT_ANGLES[o_to]
    delta = (a1 - a0 + 180.0) % 360.0 - 180.0  # signed short arc, +/-90
    n = max(1, round(abs(delta) / step_deg))
    cells: set[tuple[int, int]] = set()
    for k in range(n + 1):
        cells |= _cells_for_shape_at(shape, 0.0, 0.0, a0 + delta * k / n)
    return frozenset(cells)


def footprint_of(shape: Shape, pose: Pose) -> frozenset[tuple[int, int]]:
    """Cells the shape overlaps with positive area at the given pose."""
    return frozenset((pose.x + dx, pose.y + dy) for dx, dy in pose_stamp(shape, pose.orient))


def transfer_stamp(shape: Shape, action: str, o_from: int, o_to: int) -> frozenset[tuple[int, int]]:
    if action == "wait":
        return pose_stamp(shape, o_from)
    if action == "move":
        return move_stamp(shape, o_from)
    if action == "rotate":
        return rotation_stamp(shape, o_from, o_to)
    raise ValueError(f"bad action {action!r}")


def transfer_footprint(shape: Shape, p: Pose, q: Pose) -> frozenset[tuple[int, int]]:
    """Swept cells for the single-step action p -> q (superset of both endpoints)."""
    action = classify_action(p, q)
    if action is None:
        raise ValueError(f"illegal transfer {p} -> {q}")
    stamp = transfer_stamp(shape, action, p.orient, q.orient)
    return frozenset((p.x + dx, p.y + dy) for dx, dy in stamp)


# ---------------------------------------------------------------------------
# collision checks with distance-field fast paths


def _sweep_reach(p: Pose, q: Optional[Pose]) -> float:
    if q is None or (p.x, p.y) == (q.x, q.y):
        return 0.0
    return 1.0


def _stamp_for(shape: Shape, p: Pose, q: Optional[Pose]) -> Iterable[tuple[int, int]]:
    if q is None:
        return pose_stamp(shape, p.orient)
    action = classify_action(p, q)
    if action is None:
        raise ValueError(f"illegal transfer {p} -> {q}")
    return transfer_stamp(shape, action, p.orient, q.orient)


def collides_with_map(shape: Shape, p: Pose, grid, dfield, q: Optional[Pose] = None) -> bool:
    """True iff the (transfer) footprint leaves the map or overlaps an obstacle.

    dfield distances treat cells outside the map as obstacles, so a single
    lookup prunes both far-from-anything and deep-in-collision cases; the
    in-between band is rasterized.
    """
    if not (0 <= p.x < grid.width and 0 <= p.y < grid.height):
        return True
    d = dfield.values[p.y, p.x]
    rc = circumradius(shape) + _sweep_reach(p, q)
    if d > rc + _HALF_DIAG + _FAST_EPS:
        return False
    if d < inradius(shape) - _FAST_EPS:
        return True
    passable = grid.passable
    w, h = grid.width, grid.height
    for dx, dy in _stamp_for(shape, p, q):
        x, y = p.x + dx, p.y + dy
        if not (0 <= x < w and 0 <= y < h) or not passable[y, x]:
            return True
    return False


def agents_collide(
    shape_a: Shape,
    pa: Pose,
    shape_b: Shape,
    pb: Pose,
    qa: Optional[Pose] = None,
    qb: Optional[Pose] = None,
) -> bool:
    """True iff the two (transfer) footprints share at least one cell.

    Cell-level intersection: two cells of the same unit square are at most
    sqrt(2) apart, hence the sqrt(2) slack on the separation fast path.
    """
    dx, dy = pa.x - pb.x, pa.y - pb.y
    dist = math.hypot(dx, dy)
    reach_a = circumradius(shape_a) + _sweep_reach(pa, qa)
    reach_b = circumradius(shape_b) + _sweep_reach(pb, qb)
    if dist > reach_a + reach_b + math.sqrt(2.0) + _FAST_EPS:
        return False
    if dist < inradius(shape_a) + inradius(shape_b) - _FAST_EPS:
        return True
    fa = _stamp_for(shape_a, pa, qa)
    fb = _stamp_for(shape_b, pb, qb)
    cells_b = {(pb.x + mx, pb.y + my) for mx, my in fb}
    return any((pa.x + mx, pa.y + my) in cells_b for mx, my in fa)
