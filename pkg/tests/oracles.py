"""Independent reference implementations used to generate expected values.

Everything here deliberately avoids the library's fast paths: footprints are
decided by dense point sampling, distance fields by direct minimization,
reachability by boolean matrix closure, joint plans by product-graph search.
"""

from __future__ import annotations

import heapq
import math
from collections import deque

import numpy as np

from lamapf.geometry import (
    Circle,
    ORIENT_ANGLES,
    Pose,
    Rectangle,
    TRANSLATION_SAMPLES,
    classify_action,
)


# ---------------------------------------------------------------------------
# fine point-sampling rasterization


def _points_in_shape(shape, cx, cy, angle_deg, px, py):
    """Strict-interior membership for arrays of points."""
    th = math.radians(angle_deg)
    c, s = math.cos(th), math.sin(th)
    rx = px - cx
    ry = py - cy
    # rotate world offsets back into the agent frame
    lx = rx * c + ry * s
    ly = -rx * s + ry * c
    if isinstance(shape, Circle):
        return lx * lx + ly * ly < shape.radius**2
    (ax, ay), (bx, by) = shape.min_offset, shape.max_offset
    return (lx > ax) & (lx < bx) & (ly > ay) & (ly < by)


def sampled_footprint(shape, cx, cy, angle_deg, pitch=0.01):
    """Cells containing at least one interior sample point of the shape."""
    if isinstance(shape, Circle):
        rc = shape.radius
    else:
        (ax, ay), (bx, by) = shape.min_offset, shape.max_offset
        rc = max(math.hypot(x, y) for x in (ax, bx) for y in (ay, by))
    cells = set()
    n = max(2, int(round(1.0 / pitch)))
    offs = (np.arange(n) + 0.5) / n - 0.5
    for qx in range(math.floor(cx - rc - 1), math.ceil(cx + rc + 1) + 1):
        for qy in range(math.floor(cy - rc - 1), math.ceil(cy + rc + 1) + 1):
            px, py = np.meshgrid(qx + offs, qy + offs)
            if _points_in_shape(shape, cx, cy, angle_deg, px, py).any():
                cells.add((qx, qy))
    return cells


def sampled_pose_footprint(shape, pose: Pose, pitch=0.01):
    return sampled_footprint(shape, float(pose.x), float(pose.y), ORIENT_ANGLES[pose.orient], pitch)


def sampled_transfer_footprint(shape, p: Pose, q: Pose, pitch=0.01, rot_step=15.0):
    """Union of sampled footprints along the library's motion sampling schedule."""
    action = classify_action(p, q)
    assert action is not None, f"illegal transfer {p} -> {q}"
    cells = set()
    if action in ("wait",):
        return sampled_pose_footprint(shape, p, pitch)
    if action == "move":
        dx, dy = q.x - p.x, q.y - p.y
        for f in TRANSLATION_SAMPLES:
            cells |= sampled_footprint(
                shape, p.x + f * dx, p.y + f * dy, ORIENT_ANGLES[p.orient], pitch
            )
        return cells
    a0, a1 = ORIENT_ANGLES[p.orient], ORIENT_ANGLES[q.orient]
    delta = (a1 - a0 + 180.0) % 360.0 - 180.0
    n = max(1, round(abs(delta) / rot_step))
    for k in range(n + 1):
        cells |= sampled_footprint(shape, float(p.x), float(p.y), a0 + delta * k / n, pitch)
    return cells


# ---------------------------------------------------------------------------
# borderline-configuration filters for sampling exactness


def _cell_margins_ok(shape, cx, cy, angle_deg, margin):
    """False when some cell overlap is thinner than the sampling can resolve."""
    if isinstance(shape, Circle):
        r = shape.radius
        for qx in range(math.floor(cx - r - 1), math.ceil(cx + r + 1) + 1):
            for qy in range(math.floor(cy - r - 1), math.ceil(cy + r + 1) + 1):
                dx = max(abs(cx - qx) - 0.5, 0.0)
                dy = max(abs(cy - qy) - 0.5, 0.0)
                d = math.hypot(dx, dy)
                if r - margin < d < r:
                    return False
        return True
    th = math.radians(angle_deg)
    c, s = math.cos(th), math.sin(th)
    (ax, ay), (bx, by) = shape.min_offset, shape.max_offset
    corners = [
        (cx + x * c - y * s, cy + x * s + y * c) for x in (ax, bx) for y in (ay, by)
    ]
    corners = [corners[0], corners[2], corners[3], corners[1]]
    rc = max(math.hypot(x - cx, y - cy) for x, y in corners)
    axes = [(1.0, 0.0), (0.0, 1.0), (c, s), (-s, c)]
    for qx in range(math.floor(cx - rc - 1), math.ceil(cx + rc + 1) + 1):
        for qy in range(math.floor(cy - rc - 1), math.ceil(cy + rc + 1) + 1):
            square = [
                (qx - 0.5, qy - 0.5),
                (qx + 0.5, qy - 0.5),
                (qx + 0.5, qy + 0.5),
                (qx - 0.5, qy + 0.5),
            ]
            overlaps = []
            for ux, uy in axes:
                pa = [px * ux + py * uy for px, py in corners]
                pb = [px * ux + py * uy for px, py in square]
                overlaps.append(min(max(pa), max(pb)) - max(min(pa), min(pb)))
            if all(o > 0 for o in overlaps) and min(overlaps) < margin:
                return False
    return True


def pose_margins_ok(shape, pose: Pose, margin=0.05):
    return _cell_margins_ok(shape, float(pose.x), float(pose.y), ORIENT_ANGLES[pose.orient], margin)


def transfer_margins_ok(shape, p: Pose, q: Pose, margin=0.05, rot_step=15.0):
    action = classify_action(p, q)
    if action == "wait":
        return pose_margins_ok(shape, p, margin)
    if action == "move":
        dx, dy = q.x - p.x, q.y - p.y
        return all(
            _cell_margins_ok(shape, p.x + f * dx, p.y + f * dy, ORIENT_ANGLES[p.orient], margin)
            for f in TRANSLATION_SAMPLES
        )
    a0, a1 = ORIENT_ANGLES[p.orient], ORIENT_ANGLES[q.orient]
    delta = (a1 - a0 + 180.0) % 360.0 - 180.0
    n = max(1, round(abs(delta) / rot_step))
    return all(
        _cell_margins_ok(shape, float(p.x), float(p.y), a0 + delta * k / n, margin)
        for k in range(n + 1)
    )


def random_safe_shape(rng, kind=None, margin=0.05, max_radius=2.0, max_side=4.0):
    """Draw a shape redrawn until no later borderline trouble is likely.

    The caller still filters poses; this only bounds the parameter ranges.
    """
    if kind is None:
        kind = "circle" if rng.random() < 0.5 else "rect"
    if kind == "circle":
        return Circle(float(rng.uniform(0.4, max_radius)))
    w = float(rng.uniform(0.4, max_side))
    h = float(rng.uniform(0.4, max_side))
    fx = float(rng.uniform(0.15, 0.85))
    fy = float(rng.uniform(0.15, 0.85))
    return Rectangle((-fx * w, -fy * h), ((1 - fx) * w, (1 - fy) * h))


# ---------------------------------------------------------------------------
# distance field by direct minimization


def brute_distance_field(grid):
    """Min distance to any obstacle center, outside cells included, O(n^2)."""
    h, w = grid.height, grid.width
    ys, xs = np.indices((h, w))
    obst = []
    for oy in range(-1, h + 1):
        for ox in range(-1, w + 1):
            inside = 0 <= ox < w and 0 <= oy < h
            if not inside or not grid.passable[oy, ox]:
                obst.append((ox, oy))
    best = np.full((h, w), np.inf)
    for ox, oy in obst:
        best = np.minimum(best, (ys - oy) ** 2 + (xs - ox) ** 2)
    return np.sqrt(best)


# ---------------------------------------------------------------------------
# graph closures


def reachability_closure(n, edges):
    """Boolean transitive closure over int node ids 0..n-1."""
    reach = np.eye(n, dtype=bool)
    adj = np.zeros((n, n), dtype=bool)
    for u, v in edges:
        adj[u, v] = True
    frontier = adj.copy()
    while frontier.any():
        new = (reach | frontier) & ~reach
        if not new.any():
            break
        reach |= new
        frontier = new @ adj
    return reach


# ---------------------------------------------------------------------------
# path-level oracles


def time_expanded_shortest(sg, max_t=None):
    """Arrival time of the earliest start-to-target path with waits allowed."""
    if max_t is None:
        max_t = 4 * sg.node_count
    if sg.start == sg.target:
        return 0
    seen = {sg.start}
    frontier = [sg.start]
    t = 0
    while frontier and t < max_t:
        t += 1
        nxt = []
        for u in frontier:
            for v in sg.successors[u]:
                if v not in seen:
                    if v == sg.target:
                        return t
                    seen.add(v)
                    nxt.append(v)
        frontier = nxt
    return None


def joint_optimal_soc(sg_a, sg_b, conflict_fn):
    """Exact minimal sum-of-costs for two agents via product-graph Dijkstra.

    States are (node_a, node_b, done_a, done_b); a done agent rests at its
    target for free, every other action costs one per agent per step.
    conflict_fn(u_a, v_a, u_b, v_b) decides whether simultaneous actions
    u->v collide (waits pass u == v).
    """

    def moves(sg, node, done):
        if done:
            return ((node, 0, True),)
        out = [(node, 1, False)]
        out += [(v, 1, False) for v in sg.successors[node]]
        if node == sg.target:
            out.append((node, 0, True))
        return out

    start = (sg_a.start, sg_b.start, False, False)
    if conflict_fn(sg_a.start, sg_a.start, sg_b.start, sg_b.start):
        return None
    dist = {start: 0}
    heap = [(0, start)]
    while heap:
        d, state = heapq.heappop(heap)
        if d > dist.get(state, math.inf):
            continue
        na, nb, da, db = state
        if da and db:
            return d
        for va, ca, da2 in moves(sg_a, na, da):
            for vb, cb, db2 in moves(sg_b, nb, db):
                if conflict_fn(na, va, nb, vb):
                    continue
                nd = d + ca + cb
                nstate = (va, vb, da2, db2)
                if nd < dist.get(nstate, math.inf):
                    dist[nstate] = nd
                    heapq.heappush(heap, (nd, nstate))
    return None


def exhaustive_conflicts(paths, shapes, widths):
    """Every vertex and transfer conflict of a set of timed paths.

    paths: dict agent -> list of node ids; shapes: dict agent -> shape.
    Returns tuples ('vertex', i, j, t) and ('transfer', i, j, t), found by
    intersecting footprint cell sets for all pairs at all times, no pruning.
    """
    from lamapf.geometry import footprint_of, transfer_footprint
    from lamapf.subgraph import index_pose

    ids = sorted(paths)
    horizon = max(len(p) for p in paths.values()) - 1
    out = []

    def pose_at(a, t):
        p = paths[a]
        return index_pose(p[min(t, len(p) - 1)], widths[a])

    for t in range(horizon + 1):
        for i_pos, i in enumerate(ids):
            for j in ids[i_pos + 1 :]:
                fi = footprint_of(shapes[i], pose_at(i, t))
                fj = footprint_of(shapes[j], pose_at(j, t))
                if fi & fj:
                    out.append(("vertex", i, j, t))
        if t == horizon:
            break
        for i_pos, i in enumerate(ids):
            for j in ids[i_pos + 1 :]:
                si = transfer_footprint(shapes[i], pose_at(i, t), pose_at(i, t + 1))
                sj = transfer_footprint(shapes[j], pose_at(j, t), pose_at(j, t + 1))
                if si & sj:
                    out.append(("transfer", i, j, t))
    return out
