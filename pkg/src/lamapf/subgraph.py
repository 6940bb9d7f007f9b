"""Per-agent subgraphs of collision-free poses and legal transfers.

Node indices follow (y * width + x) * 4 + orient over the full pose grid;
only collision-free poses are marked valid.  Forward moves are directed
edges, rotations appear in both directions, waits are implicit self loops.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import (
    N_ORIENTS,
    ORIENT_VECTORS,
    Pose,
    Shape,
    is_legal_rotation,
    move_stamp,
    pose_stamp,
    rotation_stamp,
)
from .gridmap import DistanceField, GridMap

# rotation partners per orientation (perpendicular orientations only)
ROTATION_TARGETS = tuple(
    tuple(o2 for o2 in range(N_ORIENTS) if is_legal_rotation(o1, o2))
    for o1 in range(N_ORIENTS)
)


class PoseCollisionError(ValueError):
    """Start or target pose of an agent collides with the map."""


def pose_index(x: int, y: int, orient: int, width: int) -> int:
    return (y * width + x) * N_ORIENTS + orient


def index_pose(index: int, width: int) -> Pose:
    orient = index % N_ORIENTS
    cell = index // N_ORIENTS
    return Pose(cell % width, cell // width, orient)


@dataclass(eq=False)
class Subgraph:
    agent_id: int
    shape: Shape
    width: int
    height: int
    valid: np.ndarray  # bool, flat over all pose indices
    successors: list[Optional[tuple[int, ...]]]
    predecessors: list[Optional[tuple[int, ...]]]
    start: int
    target: int
    node_count: int
    # per-orientation clearance masks (height x width), reused by relation
    # tagging so edge stamps are placed exactly once
    _move_clear: list = None
    _rot_clear: dict = None

    def nodes(self) -> np.ndarray:
        return np.flatnonzero(self.valid)

    def pose(self, index: int) -> Pose:
        return index_pose(index, self.width)

    def index(self, pose: Pose) -> int:
        return pose_index(pose.x, pose.y, pose.orient, self.width)


def _clear_mask(offsets, blocked_padded: np.ndarray, pad: int, width: int, height: int,
                cache: dict) -> np.ndarray:
    """Cells (y, x) where a stamp of offsets hits no blocked cell."""
    key = offsets
    got = cache.get(key)
    if got is not None:
        return got
    hit = np.zeros((height, width), dtype=bool)
    for dx, dy in offsets:
        hit |= blocked_padded[pad + dy : pad + dy + height, pad + dx : pad + dx + width]
    clear = ~hit
    cache[key] = clear
    return clear


def build_subgraph(
    agent_id: int,
    shape: Shape,
    start: Pose,
    target: Pose,
    grid: GridMap,
    dfield: Optional[DistanceField] = None,
) -> Subgraph:
    """Enumerate collision-free poses and transfers for one agent."""
    w, h = grid.width, grid.height
    pose_stamps = [pose_stamp(shape, o) for o in range(N_ORIENTS)]
    move_stamps = [move_stamp(shape, o) for o in range(N_ORIENTS)]
    rot_stamps = {
        (o1, o2): rotation_stamp(shape, o1, o2)
        for o1 in range(N_ORIENTS)
        for o2 in ROTATION_TARGETS[o1]
    }
    pad = 1
    for stamp in [*pose_stamps, *move_stamps, *rot_stamps.values()]:
        for dx, dy in stamp:
            pad = max(pad, abs(dx), abs(dy))
    blocked = ~grid.passable
    blocked_padded = np.pad(blocked, pad, constant_values=True)

    cache: dict = {}
    pose_clear = [_clear_mask(pose_stamps[o], blocked_padded, pad, w, h, cache)
                  for o in range(N_ORIENTS)]
    move_clear = [_clear_mask(move_stamps[o], blocked_padded, pad, w, h, cache)
                  for o in range(N_ORIENTS)]
    rot_clear = {pair: _clear_mask(stamp, blocked_padded, pad, w, h, cache)
                 for pair, stamp in rot_stamps.items()}

    valid = np.zeros(w * h * N_ORIENTS, dtype=bool)
    for o in range(N_ORIENTS):
        valid[o::N_ORIENTS] = pose_clear[o].ravel()

    n_nodes = int(valid.sum())
    successors: list[Optional[tuple[int, ...]]] = [None] * (w * h * N_ORIENTS)
    pred_lists: list[Optional[list[int]]] = [None] * (w * h * N_ORIENTS)
    for u in np.flatnonzero(valid):
        u = int(u)
        o = u % N_ORIENTS
        cell = u // N_ORIENTS
        x, y = cell % w, cell // w
        outs = []
        for o2 in ROTATION_TARGETS[o]:
            if rot_clear[(o, o2)][y, x]:
                outs.append(u - o + o2)
        if move_clear[o][y, x]:
            dx, dy = ORIENT_VECTORS[o]
            # a swept stamp covers the destination footprint, so clearance
            # implies the destination pose is valid and in bounds
            outs.append(pose_index(x + dx, y + dy, o, w))
        outs.sort()
        successors[u] = tuple(outs)
        for v in outs:
            lst = pred_lists[v]
            if lst is None:
                pred_lists[v] = [u]
            else:
                lst.append(u)

    predecessors: list[Optional[tuple[int, ...]]] = [None] * (w * h * N_ORIENTS)
    for v in np.flatnonzero(valid):
        v = int(v)
        lst = pred_lists[v]
        predecessors[v] = tuple(sorted(lst)) if lst else ()

    start_idx = pose_index(start.x, start.y, start.orient, w)
    target_idx = pose_index(target.x, target.y, target.orient, w)
    for label, idx, pose in (("start", start_idx, start), ("target", target_idx, target)):
        if not grid.in_bounds(pose.x, pose.y) or not valid[idx]:
            raise PoseCollisionError(
                f"agent {agent_id}: {label} pose {pose} collides with the map"
            )
    rot_clear_pairs = {
        (o1, o2): rot_clear[(o1, o2)]
        for o1 in range(N_ORIENTS)
        for o2 in ROTATION_TARGETS[o1]
        if o1 < o2
    }
    return Subgraph(
        agent_id=agent_id,
        shape=shape,
        width=w,
        height=h,
        valid=valid,
        successors=successors,
        predecessors=predecessors,
        start=start_idx,
        target=target_idx,
        node_count=n_nodes,
        _move_clear=move_clear,
        _rot_clear=rot_clear_pairs,
    )


def search_path(sg: Subgraph, avoid_nodes: Sequence[int] = ()) -> list[int]:
    """Shortest start-to-target path by edge count, empty list when none exists.

    Deterministic: breadth-first with out-neighbors expanded in ascending
    node index, first discovery wins.
    """
    avoid = avoid_nodes if isinstance(avoid_nodes, (set, frozenset)) else set(avoid_nodes)
    start, target = sg.start, sg.target
    if start in avoid or target in avoid:
        return []
    if start == target:
        return [start]
    from collections import deque

    parent = {start: -1}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in sg.successors[u]:
            if v in parent or v in avoid:
                continue
            parent[v] = u
            if v == target:
                path = [v]
                while parent[path[-1]] != -1:
                    path.append(parent[path[-1]])
                path.reverse()
                return path
            queue.append(v)
    return []


def distances_to(sg: Subgraph, node: int) -> np.ndarray:
    """Directed shortest-path distance from every node to the given node.

    Breadth-first over predecessor lists; unreachable nodes get -1.
    """
    from collections import deque

    dist = np.full(len(sg.valid), -1, dtype=np.int32)
    dist[node] = 0
    queue = deque([node])
    while queue:
        v = queue.popleft()
        d = dist[v] + 1
        for u in sg.predecessors[v]:
            if dist[u] < 0:
                dist[u] = d
                queue.append(u)
    return dist


def dump_edges(sg: Subgraph) -> str:
    """Plain-text dump of nodes and directed edges, for debugging."""
    lines = [f"# agent {sg.agent_id}: {sg.node_count} nodes"]
    for u in sg.nodes():
        p = sg.pose(int(u))
        lines.append(f"node {u} {p.x} {p.y} {p.orient}")
    for u in sg.nodes():
        for v in sg.successors[int(u)]:
            lines.append(f"edge {u} {v}")
    return "\n".join(lines) + "\n"
