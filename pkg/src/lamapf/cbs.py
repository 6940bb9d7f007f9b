"""Conflict-based search for shape-aware agents.

Timed paths are lists of subgraph node indices, one per step; an agent rests
at its final node for free once it stays there.  The high level branches on
the earliest conflict; the low level is time-expanded A* that treats all
times past the last constraint as one static layer, so its failures are
proofs of infeasibility rather than artifacts of a horizon cap.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from typing import Optional

from .geometry import agents_collide
from .subgraph import Subgraph, distances_to, index_pose


class _Timeout(Exception):
    pass


# ---------------------------------------------------------------------------
# costs


def path_cost(path: list[int], target: int) -> int:
    """Arrival step after which the agent rests at its target for good."""
    cost = len(path) - 1
    while cost > 0 and path[cost] == target and path[cost - 1] == target:
        cost -= 1
    return cost


def sum_of_costs(paths: dict[int, list[int]], targets: dict[int, int]) -> int:
    return sum(path_cost(p, targets[a]) for a, p in paths.items())


def makespan(paths: dict[int, list[int]], targets: dict[int, int]) -> int:
    return max((path_cost(p, targets[a]) for a, p in paths.items()), default=0)


# ---------------------------------------------------------------------------
# footprint caches and external traffic


class FootprintTable:
    """Cell sets for one agent's nodes and actions, cached per index."""

    def __init__(self, sg: Subgraph):
        self.sg = sg
        self._nodes: dict[int, frozenset] = {}
        self._edges: dict[tuple[int, int], frozenset] = {}

    def node_cells(self, node: int) -> frozenset:
        cells = self._nodes.get(node)
        if cells is None:
            from .geometry import footprint_of

            cells = footprint_of(self.sg.shape, self.sg.pose(node))
            self._nodes[node] = cells
        return cells

    def edge_cells(self, u: int, v: int) -> frozenset:
        key = (u, v)
        cells = self._edges.get(key)
        if cells is None:
            from .geometry import transfer_footprint

            cells = transfer_footprint(self.sg.shape, self.sg.pose(u), self.sg.pose(v))
            self._edges[key] = cells
        return cells


@dataclass
class ExternalTraffic:
    """Merged moving obstacles: cells occupied per step and swept per action.

    Index t of vertex_cells is occupancy at time t; index t of sweep_cells
    covers the actions running during [t, t+1].  After the listed horizon
    everything rests, occupying rest_cells forever.
    """

    vertex_cells: list[frozenset]
    sweep_cells: list[frozenset]
    rest_cells: frozenset

    @property
    def horizon(self) -> int:
        return len(self.vertex_cells)

    def vertex_at(self, t: int) -> frozenset:
        return self.vertex_cells[t] if t < len(self.vertex_cells) else self.rest_cells

    def sweep_at(self, t: int) -> frozenset:
        return self.sweep_cells[t] if t < len(self.sweep_cells) else self.rest_cells


def merge_external(
    tables: dict[int, FootprintTable], paths: dict[int, list[int]]
) -> ExternalTraffic:
    """Flatten finished paths into one moving-obstacle timetable."""
    if not paths:
        return ExternalTraffic([], [], frozenset())
    horizon = max(len(p) for p in paths.values()) - 1
    vertex: list[set] = [set() for _ in range(horizon + 1)]
    sweep: list[set] = [set() for _ in range(horizon)]
    rest: set = set()
    for a, p in paths.items():
        table = tables[a]
        for t in range(horizon + 1):
            u = p[min(t, len(p) - 1)]
            vertex[t] |= table.node_cells(u)
            if t < horizon:
                v = p[min(t + 1, len(p) - 1)]
                sweep[t] |= table.edge_cells(u, v)
        rest |= table.node_cells(p[-1])
    return ExternalTraffic(
        [frozenset(s) for s in vertex], [frozenset(s) for s in sweep], frozenset(rest)
    )


@dataclass
class SolveContext:
    """Static and moving obstacles plus a wall-clock deadline."""

    blocked_cells: frozenset = frozenset()
    external: Optional[ExternalTraffic] = None
    deadline: Optional[float] = None  # time.monotonic() value


# ---------------------------------------------------------------------------
# conflicts


@dataclass(frozen=True)
class Conflict:
    kind: str  # "vertex" or "transfer"
    agent_a: int
    agent_b: int
    t: int


def _pose_at(sg: Subgraph, path: list[int], t: int):
    return index_pose(path[min(t, len(path) - 1)], sg.width)


def detect_first_conflict(
    subgraphs: dict[int, Subgraph], paths: dict[int, list[int]]
) -> Optional[Conflict]:
    """Earliest conflict, vertex before transfer, pairs in ascending id order."""
    ids = sorted(paths)
    if len(ids) < 2:
        return None
    horizon = max(len(paths[a]) for a in ids) - 1
    for t in range(horizon + 1):
        for i_pos, i in enumerate(ids):
            pi = _pose_at(subgraphs[i], paths[i], t)
            for j in ids[i_pos + 1 :]:
                pj = _pose_at(subgraphs[j], paths[j], t)
                if agents_collide(subgraphs[i].shape, pi, subgraphs[j].shape, pj):
                    return Conflict("vertex", i, j, t)
        if t == horizon:
            break
        for i_pos, i in enumerate(ids):
            pi = _pose_at(subgraphs[i], paths[i], t)
            qi = _pose_at(subgraphs[i], paths[i], t + 1)
            for j in ids[i_pos + 1 :]:
                pj = _pose_at(subgraphs[j], paths[j], t)
                qj = _pose_at(subgraphs[j], paths[j], t + 1)
                if agents_collide(
                    subgraphs[i].shape, pi, subgraphs[j].shape, pj, qa=qi, qb=qj
                ):
                    return Conflict("transfer", i, j, t)
    return None


def count_conflict_pairs(
    subgraphs: dict[int, Subgraph], paths: dict[int, list[int]]
) -> int:
    """Number of agent pairs with at least one conflict."""
    ids = sorted(paths)
    count = 0
    for i_pos, i in enumerate(ids):
        for j in ids[i_pos + 1 :]:
            pair = {i: paths[i], j: paths[j]}
            sub = {i: subgraphs[i], j: subgraphs[j]}
            if detect_first_conflict(sub, pair) is not None:
                count += 1
    return count


def count_conflicts(
    subgraphs: dict[int, Subgraph], paths: dict[int, list[int]]
) -> int:
    """Total number of conflicting (pair, step) events across the plan."""
    ids = sorted(paths)
    if len(ids) < 2:
        return 0
    horizon = max(len(paths[a]) for a in ids) - 1
    count = 0
    for i_pos, i in enumerate(ids):
        sgi, pi_path = subgraphs[i], paths[i]
        for j in ids[i_pos + 1 :]:
            sgj, pj_path = subgraphs[j], paths[j]
            for t in range(horizon + 1):
                pi = _pose_at(sgi, pi_path, t)
                pj = _pose_at(sgj, pj_path, t)
                if agents_collide(sgi.shape, pi, sgj.shape, pj):
                    count += 1
                if t < horizon:
                    qi = _pose_at(sgi, pi_path, t + 1)
                    qj = _pose_at(sgj, pj_path, t + 1)
                    if agents_collide(sgi.shape, pi, sgj.shape, pj, qa=qi, qb=qj):
                        count += 1
    return count


# ---------------------------------------------------------------------------
# low level


@dataclass(frozen=True)
class VertexConstraint:
    node: int
    t: int


@dataclass(frozen=True)
class TransferConstraint:
    u: int
    v: int
    t: int  # action occupies [t, t+1]


def _earliest_rest(
    table: FootprintTable, target: int, ctx: SolveContext, cons_times: list[int]
) -> Optional[int]:
    """First step from which parking at the target stays conflict-free."""
    earliest = max((t + 1 for t in cons_times), default=0)
    ext = ctx.external
    if ext is None:
        return earliest
    fp = table.node_cells(target)
    if fp & ext.rest_cells:
        return None
    safe_from = ext.horizon
    for t in range(ext.horizon - 1, -1, -1):
        if fp & ext.vertex_at(t) or fp & ext.sweep_at(t):
            break
        safe_from = t
    return max(earliest, safe_from)


def low_level_search(
    sg: Subgraph,
    heur,
    vertex_cons: set[VertexConstraint],
    transfer_cons: set[TransferConstraint],
    ctx: SolveContext,
    table: Optional[FootprintTable] = None,
) -> Optional[list[int]]:
    """Earliest-arrival path honoring constraints, externals, and blocks.

    Returns None only when no such path exists at any horizon: beyond the
    last time anything changes the search runs on a single static layer, so
    an exhausted frontier is a proof.
    """
    if table is None:
        table = FootprintTable(sg)
    target = sg.target
    blocked = ctx.blocked_cells
    ext = ctx.external

    if blocked and table.node_cells(sg.start) & blocked:
        return None
    if blocked and table.node_cells(target) & blocked:
        return None
    if ext is not None and table.node_cells(sg.start) & ext.vertex_at(0):
        return None

    target_times = [c.t for c in vertex_cons if c.node == target]
    target_times += [c.t for c in transfer_cons if c.u == target and c.v == target]
    earliest_goal = _earliest_rest(table, target, ctx, target_times)
    if earliest_goal is None:
        return None

    # the world only changes up to here; later times share one search layer,
    # so every constraint time must fall strictly below the clamp
    last_cons = max((c.t for c in vertex_cons), default=-1)
    last_cons = max(last_cons, max((c.t for c in transfer_cons), default=-1))
    ext_h = ext.horizon if ext is not None else 0
    t_static = max(last_cons + 1, ext_h, earliest_goal)

    vcons = {(c.node, c.t) for c in vertex_cons}
    tcons = {(c.u, c.v, c.t) for c in transfer_cons}
    if (sg.start, 0) in vcons:
        return None
    node_ok_cache: dict[int, bool] = {}
    edge_ok_cache: dict[tuple[int, int], bool] = {}

    def node_ok(v: int) -> bool:
        ok = node_ok_cache.get(v)
        if ok is None:
            ok = not (blocked and table.node_cells(v) & blocked)
            node_ok_cache[v] = ok
        return ok

    def edge_ok(u: int, v: int) -> bool:
        key = (u, v)
        ok = edge_ok_cache.get(key)
        if ok is None:
            ok = not (blocked and table.edge_cells(u, v) & blocked)
            edge_ok_cache[key] = ok
        return ok

    h0 = heur[sg.start]
    if h0 < 0:
        return None
    start_key = (sg.start, 0)
    g_best: dict[tuple[int, int], int] = {start_key: 0}
    parents: dict[tuple[int, int], tuple[int, int]] = {}
    heap = [(int(h0), 0, sg.start, 0)]
    checked = 0

    while heap:
        checked += 1
        if ctx.deadline is not None and checked % 256 == 0:
            if time.monotonic() > ctx.deadline:
                raise _Timeout
        f, g, node, tc = heapq.heappop(heap)
        key = (node, tc)
        if g > g_best.get(key, g):
            continue
        if node == target and tc >= earliest_goal:
            path = [node]
            cur = key
            while cur in parents:
                cur = parents[cur]
                path.append(cur[0])
            path.reverse()
            return path
        t_next = g + 1
        tc_next = min(t_next, t_static)
        for v in (node, *sg.successors[node]):
            if v != node and heur[v] < 0:
                continue
            if (v, tc_next) in vcons or (node, v, tc) in tcons:
                continue
            if not node_ok(v) or not edge_ok(node, v):
                continue
            if ext is not None:
                if table.node_cells(v) & ext.vertex_at(t_next):
                    continue
                if table.edge_cells(node, v) & ext.sweep_at(g):
                    continue
            nkey = (v, tc_next)
            if t_next < g_best.get(nkey, float("inf")):
                g_best[nkey] = t_next
                parents[nkey] = key
                heapq.heappush(heap, (t_next + int(heur[v]), t_next, v, tc_next))
    return None


# ---------------------------------------------------------------------------
# exact pair search

# product-state budget below which the pair search may run to exhaustion;
# larger spaces get a time slice and fall back to the constraint tree
_JOINT_CAP = 1_500_000
_JOINT_SLICE_S = 5.0


def _joint_pair_solve(
    sg_a: Subgraph,
    sg_b: Subgraph,
    heur_a,
    heur_b,
    table_a: FootprintTable,
    table_b: FootprintTable,
    ctx: SolveContext,
    soft_deadline: Optional[float] = None,
):
    """Optimal A* over the product of two agents' pose graphs.

    Exhausting the product space is a proof that no joint plan exists, which
    the constraint tree cannot provide for head-on deadlocks.  Returns
    (status, paths_pair) with paths as (path_a, path_b); status "capped"
    means the soft deadline passed without an answer either way.
    """
    if ctx.deadline is not None and time.monotonic() > ctx.deadline:
        raise _Timeout
    blocked = ctx.blocked_cells
    ext = ctx.external

    for sg, table, heur in ((sg_a, table_a, heur_a), (sg_b, table_b, heur_b)):
        if heur[sg.start] < 0:
            return "unsolvable", None
        if blocked and table.node_cells(sg.start) & blocked:
            return "unsolvable", None
        if blocked and table.node_cells(sg.target) & blocked:
            return "unsolvable", None
        if ext is not None and table.node_cells(sg.start) & ext.vertex_at(0):
            return "unsolvable", None

    rest_a = _earliest_rest(table_a, sg_a.target, ctx, [])
    rest_b = _earliest_rest(table_b, sg_b.target, ctx, [])
    if rest_a is None or rest_b is None:
        return "unsolvable", None
    ext_h = ext.horizon if ext is not None else 0
    t_static = max(ext_h, rest_a, rest_b)

    pose_a = sg_a.pose
    pose_b = sg_b.pose
    if agents_collide(sg_a.shape, pose_a(sg_a.start), sg_b.shape, pose_b(sg_b.start)):
        return "unsolvable", None

    def node_ok(table, v):
        return not (blocked and table.node_cells(v) & blocked)

    def edge_ok(table, u, v):
        return not (blocked and table.edge_cells(u, v) & blocked)

    def steps(sg, table, heur, node, done, target, rest_from, tc, t_next):
        # (next_node, step_cost, done_after); a done agent rests for free
        if done:
            return ((node, 0, True),)
        out = []
        if node == target and tc >= rest_from:
            out.append((node, 0, True))
        for v in (node, *sg.successors[node]):
            if v != node and heur[v] < 0:
                continue
            if not node_ok(table, v) or not edge_ok(table, node, v):
                continue
            if ext is not None:
                if table.node_cells(v) & ext.vertex_at(t_next):
                    continue
                if table.edge_cells(node, v) & ext.sweep_at(t_next - 1):
                    continue
            out.append((v, 1, False))
        return out

    start = (sg_a.start, sg_b.start, False, False, 0)
    h0 = int(heur_a[sg_a.start]) + int(heur_b[sg_b.start])
    dist = {start: 0}
    parents: dict[tuple, tuple] = {}
    heap = [(h0, 0, start)]
    checked = 0
    while heap:
        checked += 1
        if checked % 256 == 0:
            now = time.monotonic()
            if ctx.deadline is not None and now > ctx.deadline:
                raise _Timeout
            if soft_deadline is not None and now > soft_deadline:
                return "capped", None
        f, d, state = heapq.heappop(heap)
        if d > dist.get(state, d):
            continue
        na, nb, da, db, tc = state
        if da and db:
            path_a, path_b = [], []
            cur = state
            while True:
                path_a.append(cur[0])
                path_b.append(cur[1])
                nxt = parents.get(cur)
                if nxt is None:
                    break
                cur = nxt
            path_a.reverse()
            path_b.reverse()
            return "solved", (path_a, path_b)
        t_next = tc + 1
        tc_next = min(tc + 1, t_static)
        for va, ca, da2 in steps(sg_a, table_a, heur_a, na, da, sg_a.target, rest_a, tc, t_next):
            pa_u, pa_v = pose_a(na), pose_a(va)
            for vb, cb, db2 in steps(sg_b, table_b, heur_b, nb, db, sg_b.target, rest_b, tc, t_next):
                if agents_collide(
                    sg_a.shape, pa_u, sg_b.shape, pose_b(nb), qa=pa_v, qb=pose_b(vb)
                ):
                    continue
                nd = d + ca + cb
                nstate = (va, vb, da2, db2, tc_next)
                if nd < dist.get(nstate, float("inf")):
                    dist[nstate] = nd
                    parents[nstate] = state
                    ha = 0 if da2 else int(heur_a[va])
                    hb = 0 if db2 else int(heur_b[vb])
                    heapq.heappush(heap, (nd + ha + hb, nd, nstate))
    return "unsolvable", None


# ---------------------------------------------------------------------------
# high level


@dataclass
class CBSStats:
    ct_expanded: int = 0
    ct_generated: int = 1
    low_level_calls: int = 0
    wall_time_s: float = 0.0


@dataclass
class CBSResult:
    status: str  # "solved" | "timeout" | "unsolvable"
    paths: Optional[dict[int, list[int]]]
    stats: CBSStats

    @property
    def solved(self) -> bool:
        return self.status == "solved"


@dataclass
class _CTNode:
    paths: dict[int, list[int]]
    vertex_cons: dict[int, set]
    transfer_cons: dict[int, set]
    soc: int
    conflicts: int


def la_cbs_solve(
    subgraphs: dict[int, Subgraph],
    ctx: Optional[SolveContext] = None,
    agent_ids: Optional[list[int]] = None,
) -> CBSResult:
    """Optimal sum-of-costs planning for a set of agents.

    The constraint tree orders nodes by (cost, conflict count, age) and
    always branches on the earliest conflict, so results are deterministic.
    "unsolvable" is only reported with a proof in hand, when every branch
    dies of low-level infeasibility; instances that merely never resolve
    (a corridor swap, say) run until the deadline and report "timeout".
    """
    if ctx is None:
        ctx = SolveContext()
    ids = sorted(agent_ids) if agent_ids is not None else sorted(subgraphs)
    stats = CBSStats()
    t0 = time.perf_counter()
    tables = {a: FootprintTable(subgraphs[a]) for a in ids}
    heurs = {a: distances_to(subgraphs[a], subgraphs[a].target) for a in ids}
    targets = {a: subgraphs[a].target for a in ids}
    sub = {a: subgraphs[a] for a in ids}

    def finish(status, paths):
        stats.wall_time_s = time.perf_counter() - t0
        return CBSResult(status, paths, stats)

    if ctx.deadline is not None and time.monotonic() > ctx.deadline:
        return finish("timeout", None)

    try:
        if len(ids) == 2:
            a, b = ids
            ext_h = ctx.external.horizon if ctx.external is not None else 0
            est = int(sub[a].valid.sum()) * int(sub[b].valid.sum()) * 4 * (ext_h + 1)
            soft = None
            if est > _JOINT_CAP:
                # Product space too big to promise exhaustion; give the pair
                # search a slice anyway, it beats constraint ping-pong on
                # tightly coupled pairs.
                slice_s = _JOINT_SLICE_S
                now = time.monotonic()
                if ctx.deadline is not None:
                    slice_s = min(slice_s, max(ctx.deadline - now, 0.0) * 0.5)
                soft = now + slice_s
            stats.low_level_calls += 1
            status, pair = _joint_pair_solve(
                sub[a], sub[b], heurs[a], heurs[b], tables[a], tables[b], ctx, soft
            )
            if status == "solved":
                return finish("solved", {a: pair[0], b: pair[1]})
            if status != "capped":
                return finish(status, None)

        root_paths: dict[int, list[int]] = {}
        for a in ids:
            stats.low_level_calls += 1
            p = low_level_search(sub[a], heurs[a], set(), set(), ctx, tables[a])
            if p is None:
                return finish("unsolvable", None)
            root_paths[a] = p
        root = _CTNode(
            paths=root_paths,
            vertex_cons={a: set() for a in ids},
            transfer_cons={a: set() for a in ids},
            soc=sum_of_costs(root_paths, targets),
            conflicts=count_conflicts(sub, root_paths),
        )
        seq = 0
        open_heap = [(root.soc, root.conflicts, seq, root)]
        while open_heap:
            if ctx.deadline is not None and time.monotonic() > ctx.deadline:
                return finish("timeout", None)
            _, _, _, node = heapq.heappop(open_heap)
            stats.ct_expanded += 1
            conflict = detect_first_conflict(sub, node.paths)
            if conflict is None:
                return finish("solved", node.paths)
            children = []
            bypass = None
            for agent in (conflict.agent_a, conflict.agent_b):
                vc = {a: set(s) for a, s in node.vertex_cons.items()}
                tc = {a: set(s) for a, s in node.transfer_cons.items()}
                path = node.paths[agent]
                if conflict.kind == "vertex":
                    at = path[min(conflict.t, len(path) - 1)]
                    vc[agent].add(VertexConstraint(at, conflict.t))
                else:
                    u = path[min(conflict.t, len(path) - 1)]
                    v = path[min(conflict.t + 1, len(path) - 1)]
                    tc[agent].add(TransferConstraint(u, v, conflict.t))
                stats.low_level_calls += 1
                new_path = low_level_search(
                    sub[agent], heurs[agent], vc[agent], tc[agent], ctx, tables[agent]
                )
                if new_path is None:
                    continue
                paths = dict(node.paths)
                paths[agent] = new_path
                soc = sum_of_costs(paths, targets)
                conflicts = count_conflicts(sub, paths)
                if soc == node.soc and conflicts < node.conflicts:
                    # same cost, strictly fewer conflicts: adopt the child's
                    # paths without committing to the new constraint
                    bypass = (paths, conflicts)
                    break
                children.append(_CTNode(paths, vc, tc, soc, conflicts))
            if bypass is not None:
                node.paths, node.conflicts = bypass
                seq += 1
                heapq.heappush(open_heap, (node.soc, node.conflicts, seq, node))
                continue
            for child in children:
                seq += 1
                stats.ct_generated += 1
                heapq.heappush(open_heap, (child.soc, child.conflicts, seq, child))
        return finish("unsolvable", None)
    except _Timeout:
        return finish("timeout", None)
