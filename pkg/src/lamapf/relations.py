"""Start/target relations, relation-homogeneous condensation and component search.

A node of an agent's subgraph is related to another agent's start (or
target) when its footprint, or the swept footprint of an incident edge,
overlaps that start/target footprint.  Condensing strongly connected
groups of equal-relation nodes yields a small component graph on which
avoidance queries run fast and exactly.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .geometry import N_ORIENTS, ORIENT_VECTORS, footprint_of
from .gridmap import AgentSpec
from .subgraph import ROTATION_TARGETS, Subgraph, pose_index, search_path

# start/target tags packed into ints: start of agent a -> 2a, target -> 2a+1


def start_tag(agent_id: int) -> int:
    return 2 * agent_id


def target_tag(agent_id: int) -> int:
    return 2 * agent_id + 1


def tag_agent(tag: int) -> int:
    return tag // 2


def tag_is_start(tag: int) -> bool:
    return tag % 2 == 0


def tag_str(tag: int) -> str:
    return f"{'S' if tag_is_start(tag) else 'T'}[{tag_agent(tag)}]"


def tags_of(agent_ids: Iterable[int], starts: bool = True, targets: bool = True) -> set[int]:
    out: set[int] = set()
    for a in agent_ids:
        if starts:
            out.add(start_tag(a))
        if targets:
            out.add(target_tag(a))
    return out


@dataclass(eq=False)
class RelationTable:
    """Per-node relation sets, interned: node -> rel id -> frozenset of tags."""

    agent_id: int
    node_rel_ids: np.ndarray  # int32 over all pose indices, -1 for invalid nodes
    rel_sets: list[frozenset[int]]

    def node_tags(self, node: int) -> frozenset[int]:
        rid = self.node_rel_ids[node]
        return self.rel_sets[rid] if rid >= 0 else frozenset()

    def related_nodes(self, tags: Iterable[int]) -> set[int]:
        """All valid nodes whose relation set intersects the given tags."""
        tagset = set(tags)
        hit_ids = [i for i, s in enumerate(self.rel_sets) if s & tagset]
        if not hit_ids:
            return set()
        mask = np.isin(self.node_rel_ids, hit_ids)
        return set(int(u) for u in np.flatnonzero(mask))


def _tag_mask(
    offsets: frozenset[tuple[int, int]],
    target_padded: np.ndarray,
    pad: int,
    width: int,
    height: int,
) -> np.ndarray:
    """Cells (y, x) where the stamp placed there overlaps the target mask."""
    hit = np.zeros((height, width), dtype=bool)
    for dx, dy in offsets:
        hit |= target_padded[pad + dy : pad + dy + height, pad + dx : pad + dx + width]
    return hit


def compute_relations(sg: Subgraph, agents: list[AgentSpec]) -> RelationTable:
    """Tag the subgraph's nodes with every foreign start/target they touch.

    Both endpoints of an edge whose swept footprint overlaps a start/target
    footprint carry the tag; the agent's own start/target are skipped.
    """
    from .geometry import move_stamp, pose_stamp, rotation_stamp

    w, h = sg.width, sg.height
    shape = sg.shape
    pose_stamps = [pose_stamp(shape, o) for o in range(N_ORIENTS)]
    move_stamps = [move_stamp(shape, o) for o in range(N_ORIENTS)]
    rot_stamps = {
        (o1, o2): rotation_stamp(shape, o1, o2)
        for o1 in range(N_ORIENTS)
        for o2 in ROTATION_TARGETS[o1]
        if o1 < o2
    }
    pad = 1
    for stamp in [*pose_stamps, *move_stamps, *rot_stamps.values()]:
        for dx, dy in stamp:
            pad = max(pad, abs(dx), abs(dy))

    valid3 = sg.valid.reshape(h, w, N_ORIENTS)
    node_tag_lists: dict[int, list[int]] = {}

    def add_tags(mask: np.ndarray, orient: int, tag: int) -> None:
        flat = (np.flatnonzero(mask) * N_ORIENTS) + orient
        for u in flat:
            node_tag_lists.setdefault(int(u), []).append(tag)

    for spec in agents:
        if spec.id == sg.agent_id:
            continue
        for tag, pose in ((start_tag(spec.id), spec.start), (target_tag(spec.id), spec.target)):
            fp = footprint_of(spec.shape, pose)
            target_mask = np.zeros((h + 2 * pad, w + 2 * pad), dtype=bool)
            for x, y in fp:
                if -pad <= x < w + pad and -pad <= y < h + pad:
                    target_mask[y + pad, x + pad] = True
            if not target_mask.any():
                continue
            for o in range(N_ORIENTS):
                # poses whose own footprint overlaps
                m = _tag_mask(pose_stamps[o], target_mask, pad, w, h) & valid3[:, :, o]
                add_tags(m, o, tag)
                # forward-move edges: tag source and destination poses
                em = _tag_mask(move_stamps[o], target_mask, pad, w, h) & sg._move_clear[o]
                em &= valid3[:, :, o]
                if em.any():
                    add_tags(em, o, tag)
                    dx, dy = ORIENT_VECTORS[o]
                    dest = np.zeros_like(em)
                    ys, xs = np.nonzero(em)
                    dest[ys + dy, xs + dx] = True
                    add_tags(dest, o, tag)
            for (o1, o2), stamp in rot_stamps.items():
                rm = _tag_mask(stamp, target_mask, pad, w, h) & sg._rot_clear[(o1, o2)]
                rm &= valid3[:, :, o1] & valid3[:, :, o2]
                if rm.any():
                    add_tags(rm, o1, tag)
                    add_tags(rm, o2, tag)

    node_rel_ids = np.full(len(sg.valid), -1, dtype=np.int32)
    rel_sets: list[frozenset[int]] = [frozenset()]
    intern: dict[frozenset[int], int] = {frozenset(): 0}
    for u in np.flatnonzero(sg.valid):
        u = int(u)
        tags = frozenset(node_tag_lists.get(u, ()))
        rid = intern.get(tags)
        if rid is None:
            rid = len(rel_sets)
            rel_sets.append(tags)
            intern[tags] = rid
        node_rel_ids[u] = rid
    return RelationTable(agent_id=sg.agent_id, node_rel_ids=node_rel_ids, rel_sets=rel_sets)


# ---------------------------------------------------------------------------
# condensation


@dataclass(eq=False)
class ConnectivityGraph:
    agent_id: int
    n_components: int
    comp_members: list[tuple[int, ...]]
    comp_rel: list[frozenset[int]]
    comp_out: list[tuple[int, ...]]
    node_comp: np.ndarray  # int32 over all pose indices, -1 for invalid
    start_comp: int
    target_comp: int
    simplified: bool = False
    retained: Optional[np.ndarray] = None  # bool per component when simplified
    _comp_agents: Optional[list[frozenset[int]]] = field(default=None, repr=False)
    _agent_bits: Optional[list[int]] = field(default=None, repr=False)
    _rel_bits: Optional[list[int]] = field(default=None, repr=False)

    def comp_agent_sets(self) -> list[frozenset[int]]:
        if self._comp_agents is None:
            self._comp_agents = [
                frozenset(tag_agent(t) for t in rel) for rel in self.comp_rel
            ]
        return self._comp_agents

    def comp_agent_bits(self) -> list[int]:
        if self._agent_bits is None:
            self._agent_bits = [_mask_of(s) for s in self.comp_agent_sets()]
        return self._agent_bits

    def comp_rel_bits(self) -> list[int]:
        if self._rel_bits is None:
            self._rel_bits = [_mask_of(rel) for rel in self.comp_rel]
        return self._rel_bits

    def is_active(self, comp: int) -> bool:
        return self.retained is None or bool(self.retained[comp])


def _tarjan_equal_rel(sg: Subgraph, rel: RelationTable) -> tuple[np.ndarray, list[list[int]]]:
    """SCCs of the subgraph restricted to edges between equal-relation nodes."""
    n = len(sg.valid)
    rel_ids = rel.node_rel_ids
    indices = np.full(n, -1, dtype=np.int64)
    low = np.zeros(n, dtype=np.int64)
    onstack = np.zeros(n, dtype=bool)
    comp_of = np.full(n, -1, dtype=np.int32)
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in np.flatnonzero(sg.valid):
        root = int(root)
        if indices[root] != -1:
            continue
        work: list[list[int]] = [[root, 0]]
        while work:
            u, pi = work[-1]
            if pi == 0:
                indices[u] = low[u] = counter
                counter += 1
                stack.append(u)
                onstack[u] = True
            descend = False
            succ = sg.successors[u]
            rid = rel_ids[u]
            for i in range(pi, len(succ)):
                v = succ[i]
                if rel_ids[v] != rid:
                    continue
                if indices[v] == -1:
                    work[-1][1] = i + 1
                    work.append([v, 0])
                    descend = True
                    break
                if onstack[v]:
                    low[u] = min(low[u], indices[v])
            if descend:
                continue
            work.pop()
            if low[u] == indices[u]:
                comp = []
                while True:
                    v = stack.pop()
                    onstack[v] = False
                    comp_of[v] = len(comps)
                    comp.append(v)
                    if v == u:
                        break
                comps.append(comp)
            if work:
                low[work[-1][0]] = min(low[work[-1][0]], low[u])
    return comp_of, comps


def condense(sg: Subgraph, rel: RelationTable) -> ConnectivityGraph:
    """Group equal-relation strongly connected nodes into components."""
    comp_of_raw, comps_raw = _tarjan_equal_rel(sg, rel)
    order = sorted(range(len(comps_raw)), key=lambda c: min(comps_raw[c]))
    remap = np.empty(len(comps_raw), dtype=np.int32)
    for new_id, old_id in enumerate(order):
        remap[old_id] = new_id
    node_comp = np.full(len(sg.valid), -1, dtype=np.int32)
    mask = comp_of_raw >= 0
    node_comp[mask] = remap[comp_of_raw[mask]]
    comp_members = [tuple(sorted(comps_raw[old_id])) for old_id in order]
    comp_rel = [rel.node_tags(members[0]) for members in comp_members]
    out_sets: list[set[int]] = [set() for _ in comp_members]
    for u in np.flatnonzero(sg.valid):
        u = int(u)
        cu = node_comp[u]
        for v in sg.successors[u]:
            cv = node_comp[v]
            if cv != cu:
                out_sets[cu].add(int(cv))
    comp_out = [tuple(sorted(s)) for s in out_sets]
    return ConnectivityGraph(
        agent_id=sg.agent_id,
        n_components=len(comp_members),
        comp_members=comp_members,
        comp_rel=comp_rel,
        comp_out=comp_out,
        node_comp=node_comp,
        start_comp=int(node_comp[sg.start]),
        target_comp=int(node_comp[sg.target]),
    )


def simplify(cg: ConnectivityGraph) -> ConnectivityGraph:
    """Drop relation-free components (keeping start/target), preserving
    reachability through the dropped ones."""
    retained = np.zeros(cg.n_components, dtype=bool)
    for c in range(cg.n_components):
        if cg.comp_rel[c] or c in (cg.start_comp, cg.target_comp):
            retained[c] = True
    comp_out: list[tuple[int, ...]] = [()] * cg.n_components
    for a in range(cg.n_components):
        if not retained[a]:
            continue
        reached: set[int] = set()
        seen = {a}
        frontier = [a]
        while frontier:
            nxt = []
            for c in frontier:
                for d in cg.comp_out[c]:
                    if d in seen:
                        continue
                    seen.add(d)
                    if retained[d]:
                        reached.add(d)
                    else:
                        nxt.append(d)
            frontier = nxt
        comp_out[a] = tuple(sorted(reached))
    return ConnectivityGraph(
        agent_id=cg.agent_id,
        n_components=cg.n_components,
        comp_members=cg.comp_members,
        comp_rel=cg.comp_rel,
        comp_out=comp_out,
        node_comp=cg.node_comp,
        start_comp=cg.start_comp,
        target_comp=cg.target_comp,
        simplified=True,
        retained=retained,
    )


def dump_components(cg: ConnectivityGraph) -> str:
    lines = [
        f"# agent {cg.agent_id}: {cg.n_components} components"
        f"{' (simplified)' if cg.simplified else ''}"
    ]
    for c in range(cg.n_components):
        if not cg.is_active(c):
            continue
        rel = " ".join(sorted(tag_str(t) for t in cg.comp_rel[c]))
        mark = []
        if c == cg.start_comp:
            mark.append("start")
        if c == cg.target_comp:
            mark.append("target")
        suffix = f" ({','.join(mark)})" if mark else ""
        lines.append(f"component {c}: {len(cg.comp_members[c])} nodes rel=[{rel}]{suffix}")
        for d in cg.comp_out[c]:
            lines.append(f"edge {c} {d}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# component path search

_LABEL_CAP = 64


def _mask_of(values: Iterable[int]) -> int:
    mask = 0
    for v in values:
        mask |= 1 << v
    return mask


def _set_of(mask: int) -> set[int]:
    out: set[int] = set()
    while mask:
        low = mask & -mask
        out.add(low.bit_length() - 1)
        mask ^= low
    return out


def _component_feasible(
    cg: ConnectivityGraph,
    key_bits: list[int],
    avail: int,
    avoid: int,
) -> bool:
    """Reachability-only variant of _component_search, same traversal rule."""
    if avail & avoid:
        raise ValueError("avail and avoid sets must be disjoint")
    active = cg.retained.tobytes() if cg.retained is not None else None
    inv_avail = ~avail if avail else 0

    start, target = cg.start_comp, cg.target_comp
    for c in (start, target):
        key = key_bits[c]
        if key & avoid or key & inv_avail or (active is not None and not active[c]):
            return False
    if start == target:
        return True
    # seen doubles as the blocked memo: a component is tested once either way
    seen = {start, target}
    frontier = [start]
    comp_out = cg.comp_out
    while frontier:
        nxt = []
        for c in frontier:
            for d in comp_out[c]:
                if d == target:
                    return True
                if d in seen:
                    continue
                seen.add(d)
                key = key_bits[d]
                if key & avoid or key & inv_avail or (
                    active is not None and not active[d]
                ):
                    continue
                nxt.append(d)
        frontier = nxt
    return False


def _component_search(
    cg: ConnectivityGraph,
    key_bits: list[int],
    avail: int,
    avoid: int,
) -> Optional[int]:
    """Start-to-target component search returning the union of keys touched.

    Key sets are int bitmasks.  A component is traversable when its key is
    disjoint from avoid and, for non-zero avail, contained in avail.
    Feasibility is decided by plain reachability; the returned union is then
    minimized best-first with dominance pruning, falling back to the
    reachability path when labels overflow.
    """
    if avail & avoid:
        raise ValueError("avail and avoid sets must be disjoint")

    retained = cg.retained
    state = bytearray(cg.n_components)  # 0 unknown, 1 allowed, 2 blocked

    def allowed(c: int) -> bool:
        s = state[c]
        if s:
            return s == 1
        key = key_bits[c]
        ok = (
            (retained is None or bool(retained[c]))
            and not key & avoid
            and (not avail or not key & ~avail)
        )
        state[c] = 1 if ok else 2
        return ok

    start, target = cg.start_comp, cg.target_comp
    if not allowed(start) or not allowed(target):
        return None
    # reachability pass, also keeps a witness path for the fallback
    parent = {start: -1}
    frontier = [start]
    found = start == target
    while frontier and not found:
        nxt = []
        for c in frontier:
            for d in cg.comp_out[c]:
                if d in parent or not allowed(d):
                    continue
                parent[d] = c
                if d == target:
                    found = True
                    break
                nxt.append(d)
            if found:
                break
        frontier = nxt
    if not found:
        return None
    witness = key_bits[target]
    c = target
    while c != -1:
        witness |= key_bits[c]
        c = parent[c]

    # every path crosses the start and target components, so their keys are a
    # hard lower bound on the union
    ubound = witness.bit_count()
    mandatory = key_bits[start] | key_bits[target]
    lower = mandatory.bit_count()
    if ubound <= lower:
        return witness

    # Cap widening: run plain BFS over components whose keys fit inside a
    # capped key set, growing caps best-first by size.  A failing pass can
    # only be unlocked through a component it saw and blocked, so pushing
    # cap-union-leftover for each blocked frontier key is complete: explored
    # in size order, the first success is a minimum-size union.
    active = cg.retained.tobytes() if cg.retained is not None else None
    comp_out = cg.comp_out
    n = cg.n_components
    inv_avail = ~avail if avail else 0

    def pass_within(cap: int):
        """(True, path key union) on success, (False, frontier leftovers)."""
        inv = ~cap
        if key_bits[start] & inv or key_bits[target] & inv:
            return False, ()
        seen = bytearray(n)
        seen[start] = seen[target] = 1
        par = {start: -1}
        frontier = [start]
        leftovers: set[int] = set()
        while frontier:
            nxt = []
            for c in frontier:
                for d in comp_out[c]:
                    if d == target:
                        union = key_bits[target]
                        while c != -1:
                            union |= key_bits[c]
                            c = par[c]
                        return True, union
                    if seen[d]:
                        continue
                    seen[d] = 1
                    key = key_bits[d]
                    if key & avoid or key & inv_avail or (
                        active is not None and not active[d]
                    ):
                        continue
                    left = key & inv
                    if left:
                        leftovers.add(left)
                        continue
                    par[d] = c
                    nxt.append(d)
            frontier = nxt
        return False, leftovers

    caps_seen = {mandatory}
    cap_heap: list[tuple[int, int, int]] = [(lower, 0, mandatory)]
    cap_seq = 1
    rounds = 0
    while cap_heap and rounds < 64:
        size, _, cap = heapq.heappop(cap_heap)
        if size >= ubound:
            return witness
        rounds += 1
        ok, info = pass_within(cap)
        if ok:
            return info
        # witness keys first: the straight-line path usually names the right
        # extras, and ties pop in insertion order
        for left in sorted(info, key=lambda m: (m & witness != m, m)):
            cap2 = cap | left
            if cap2 in caps_seen:
                continue
            caps_seen.add(cap2)
            pc = cap2.bit_count()
            if pc >= ubound:
                continue
            heapq.heappush(cap_heap, (pc, cap_seq, cap2))
            cap_seq += 1
    if not cap_heap:
        return witness
    # overflow: caps below the heap head are exhausted, so its size is a
    # proven lower bound for the label machinery
    lower = cap_heap[0][0]

    # best-first minimization of the accumulated key set, branch-and-bound
    # against the witness: labels that cannot beat the best known union are
    # pruned, so the search collapses when the witness is already minimal
    best = witness
    start_acc = key_bits[start]
    heap: list[tuple[int, int, int, int]] = [(start_acc.bit_count(), 0, start, start_acc)]
    labels: dict[int, list[int]] = {start: [start_acc]}
    seq = 1
    budget = 200000
    while heap:
        budget -= 1
        if budget <= 0:
            return best
        size, _, c, acc = heapq.heappop(heap)
        if size >= ubound:
            break
        for d in cg.comp_out[c]:
            if not allowed(d):
                continue
            acc2 = acc | key_bits[d]
            if acc2.bit_count() >= ubound:
                continue
            if d == target:
                best = acc2
                ubound = acc2.bit_count()
                if ubound <= lower:
                    return best
                continue
            bucket = labels.setdefault(d, [])
            if any(existing & acc2 == existing for existing in bucket):
                continue
            bucket[:] = [existing for existing in bucket if acc2 & existing != acc2]
            if len(bucket) >= _LABEL_CAP:
                continue
            bucket.append(acc2)
            heapq.heappush(heap, (acc2.bit_count(), seq, d, acc2))
            seq += 1
    return best


def search_path_agent(
    cg: ConnectivityGraph,
    avail_agents: Iterable[int] = (),
    avoid_agents: Iterable[int] = (),
) -> Optional[set[int]]:
    """Agents related along some start-target component path, or None.

    Empty avail means unrestricted.  A successful search always includes the
    searching agent itself, so None is the unambiguous no-path answer.
    """
    result = _component_search(
        cg, cg.comp_agent_bits(), _mask_of(avail_agents), _mask_of(avoid_agents)
    )
    if result is None:
        return None
    out = _set_of(result)
    out.add(cg.agent_id)
    return out


def search_path_SAT(
    cg: ConnectivityGraph,
    avail_tags: Iterable[int] = (),
    avoid_tags: Iterable[int] = (),
) -> Optional[set[int]]:
    """Start/target tags related along some component path, or None.

    The searching agent's own start and target tags are always included.
    """
    avail = _mask_of(avail_tags)
    if avail:
        # the agent's own tags never appear in foreign relation sets, but
        # callers pass cluster-wide tag sets that include them
        avail |= (1 << start_tag(cg.agent_id)) | (1 << target_tag(cg.agent_id))
    result = _component_search(cg, cg.comp_rel_bits(), avail, _mask_of(avoid_tags))
    if result is None:
        return None
    out = _set_of(result)
    out.add(start_tag(cg.agent_id))
    out.add(target_tag(cg.agent_id))
    return out


def has_path_agent(
    cg: ConnectivityGraph,
    avail_agents: Iterable[int] = (),
    avoid_agents: Iterable[int] = (),
) -> bool:
    """Feasibility half of search_path_agent without the set minimization."""
    return _component_feasible(
        cg, cg.comp_agent_bits(), _mask_of(avail_agents), _mask_of(avoid_agents)
    )


def has_path_SAT(
    cg: ConnectivityGraph,
    avail_tags: Iterable[int] = (),
    avoid_tags: Iterable[int] = (),
) -> bool:
    """Feasibility half of search_path_SAT without the set minimization."""
    avail = _mask_of(avail_tags)
    if avail:
        avail |= (1 << start_tag(cg.agent_id)) | (1 << target_tag(cg.agent_id))
    return _component_feasible(cg, cg.comp_rel_bits(), avail, _mask_of(avoid_tags))


def related_node_set(rel: RelationTable, tags: Iterable[int]) -> set[int]:
    """Raw-subgraph avoid set: nodes related to any of the given tags."""
    return rel.related_nodes(tags)


def theorem_witness(
    sg: Subgraph, rel: RelationTable, avoid_tags: Iterable[int]
) -> tuple[set[int], list[int]]:
    """Avoid-node set for the given tags plus a raw shortest path avoiding it."""
    avoid_nodes = rel.related_nodes(avoid_tags)
    return avoid_nodes, search_path(sg, avoid_nodes)
