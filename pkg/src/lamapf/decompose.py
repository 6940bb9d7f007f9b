"""Instance decomposition: split agents into clusters, then order clusters
into solving levels so each level can be planned against frozen surroundings.

The guarantees maintained throughout:

  * clusters partition the agent set, and each cluster can be solved with
    every other cluster parked at its endpoints;
  * levels partition each cluster, and every agent has a path avoiding the
    targets of all earlier levels and the starts of all later levels.

Both properties are certified after the fact with raw subgraph searches, not
just trusted from the construction.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from typing import Optional

from .relations import (
    ConnectivityGraph,
    RelationTable,
    has_path_agent,
    has_path_SAT,
    search_path_agent,
    search_path_SAT,
    start_tag,
    tags_of,
    target_tag,
)


@dataclass
class Decomposition:
    """Clusters, levels, and the bookkeeping that justifies them."""

    clusters: list[list[int]]
    levels: list[list[int]]  # flattened over clusters, solving order
    level_cluster: list[int]  # cluster index per level
    step_ms: tuple[float, float, float, float]
    sizes_history: list[list[int]] = field(default_factory=list)

    @property
    def n_agents(self) -> int:
        return sum(len(c) for c in self.clusters)

    @property
    def rate(self) -> float:
        return decomposition_rate(self.n_agents, [len(lv) for lv in self.levels])

    def report(self) -> str:
        lines = [
            f"# {self.n_agents} agents, {len(self.clusters)} clusters,"
            f" {len(self.levels)} levels, rate {self.rate:.4f}"
        ]
        for ci, cluster in enumerate(self.clusters):
            lines.append(f"cluster {ci}: {' '.join(map(str, sorted(cluster)))}")
        for li, level in enumerate(self.levels):
            lines.append(
                f"level {li} (cluster {self.level_cluster[li]}):"
                f" {' '.join(map(str, sorted(level)))}"
            )
        ms = self.step_ms
        lines.append(f"steps_ms {ms[0]:.3f} {ms[1]:.3f} {ms[2]:.3f} {ms[3]:.3f}")
        return "\n".join(lines) + "\n"


def decomposition_rate(n_agents: int, level_sizes: list[int]) -> float:
    """Largest level as a fraction of the whole; lower is better."""
    if n_agents <= 0:
        return 0.0
    return max(level_sizes) / n_agents if level_sizes else 1.0


def compare_decompositions(sizes_a: list[int], sizes_b: list[int]) -> int:
    """-1 when a is strictly finer, 1 when b is, 0 for a tie.

    Finer means lexicographically smaller once both size lists are sorted
    descending: the biggest block dominates the solve cost.
    """
    ka = sorted(sizes_a, reverse=True)
    kb = sorted(sizes_b, reverse=True)
    if ka == kb:
        return 0
    return -1 if ka < kb else 1


def _sat(cg: ConnectivityGraph, avail: set[int], avoid: set[int]):
    """Tag search where avoid wins over avail on overlap."""
    return search_path_SAT(cg, frozenset(avail) - frozenset(avoid), avoid)


def _agents(cg: ConnectivityGraph, avail: set[int], avoid: set[int]):
    return search_path_agent(cg, frozenset(avail) - frozenset(avoid), avoid)


def _sat_ok(cg: ConnectivityGraph, avail: set[int], avoid: set[int]) -> bool:
    """Verdict-only _sat, skipping the minimal-set computation."""
    return has_path_SAT(cg, frozenset(avail) - frozenset(avoid), avoid)


def _agents_ok(cg: ConnectivityGraph, avail: set[int], avoid: set[int]) -> bool:
    return has_path_agent(cg, frozenset(avail) - frozenset(avoid), avoid)


# ---------------------------------------------------------------------------
# step 1: independent clusters


def _relevance_needs(cgs: dict[int, ConnectivityGraph]) -> dict[int, Optional[set[int]]]:
    """Minimal unrestricted related-agent set per agent; None when no path."""
    return {a: search_path_agent(cgs[a]) for a in sorted(cgs)}


def _clusters_from_needs(
    ids: list[int], needs: dict[int, Optional[set[int]]]
) -> list[list[int]]:
    adj: dict[int, set[int]] = {a: set() for a in ids}
    for a in ids:
        for b in needs[a] or ():
            if b != a and b in adj:
                adj[a].add(b)
                adj[b].add(a)
    return _connected_components(ids, adj)


def decompose_to_clusters(cgs: dict[int, ConnectivityGraph]) -> list[list[int]]:
    """Partition agents so that cross-cluster pairs never need each other.

    Agent j matters to i when j shows up in i's minimal related-agent set.
    Relevance is symmetrized and clusters are its connected components, so
    separate clusters can always be solved one at a time.
    """
    return _clusters_from_needs(sorted(cgs), _relevance_needs(cgs))


def _connected_components(ids, adj) -> list[list[int]]:
    seen: set[int] = set()
    comps: list[list[int]] = []
    for a in ids:
        if a in seen:
            continue
        comp = []
        frontier = [a]
        seen.add(a)
        while frontier:
            u = frontier.pop()
            comp.append(u)
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    frontier.append(v)
        comps.append(sorted(comp))
    return comps


# ---------------------------------------------------------------------------
# step 2: cluster bipartition


def bipartition_cluster(
    cgs: dict[int, ConnectivityGraph],
    cluster: list[int],
    deadline: Optional[float] = None,
    base_hint: Optional[dict[int, Optional[set[int]]]] = None,
) -> Optional[tuple[list[int], list[int]]]:
    """Split one cluster into two self-sufficient halves, or None.

    The major half seeds from the unavoidable-pair structure and grows
    monotonically: every repair moves agents from the remainder into the
    major half, so the loop terminates.  Running past the deadline abandons
    the split, which is always sound.  base_hint carries minimal related
    sets from a wider search; a hint stays valid while it fits the cluster.
    """
    members = sorted(cluster)
    if len(members) < 2:
        return None
    mset = set(members)

    # one minimal related set per member up front; None means no path even
    # with the whole cluster available
    base: dict[int, Optional[set[int]]] = {}
    missing = object()
    for a in members:
        hint = base_hint.get(a, missing) if base_hint else missing
        if hint is not missing and (hint is None or hint <= mset):
            base[a] = hint
        else:
            base[a] = search_path_agent(cgs[a], mset, set())

    # pairs that cannot be separated: i has no path once j is avoided.
    # When i's base path already misses j the pair separates for free.
    adj: dict[int, set[int]] = {a: set() for a in members}
    for i in members:
        if deadline is not None and time.monotonic() > deadline:
            return None
        bi = base[i]
        for j in members:
            if i == j or j in adj[i]:
                continue
            if bi is not None and j not in bi:
                continue
            if not _agents_ok(cgs[i], mset, {j}):
                adj[i].add(j)
                adj[j].add(i)
    comps = _connected_components(members, adj)
    if len(comps) < 2:
        return None
    comps.sort(key=lambda c: (-len(c), c[0]))
    major = set(comps[0])
    remain = mset - major

    # remainder agents that cannot be solved among themselves join major
    changed = True
    while changed and remain:
        if deadline is not None and time.monotonic() > deadline:
            return None
        changed = False
        for a in sorted(remain):
            ba = base[a]
            if ba is not None and ba <= remain:
                continue
            if not _agents_ok(cgs[a], remain, set()):
                remain.discard(a)
                major.add(a)
                changed = True

    # stabilize: both halves must be solvable in isolation.  Each repair
    # strictly shrinks the remainder, so this terminates.
    while remain:
        if deadline is not None and time.monotonic() > deadline:
            return None
        moved = False
        for a in sorted(major):
            ba = base[a]
            if ba is not None and ba <= major:
                continue
            if _agents_ok(cgs[a], major, set()):
                continue
            pulled = (ba & remain) if ba else set()
            if not pulled:
                return None
            remain -= pulled
            major |= pulled
            moved = True
            break
        if moved:
            continue
        for a in sorted(remain):
            ba = base[a]
            if ba is not None and ba <= remain:
                continue
            if not _agents_ok(cgs[a], remain, set()):
                remain.discard(a)
                major.add(a)
                moved = True
                break
        if not moved:
            break

    if not remain:
        return None
    return sorted(major), sorted(remain)


def split_clusters(
    cgs: dict[int, ConnectivityGraph],
    clusters: list[list[int]],
    deadline: Optional[float] = None,
    sizes_history: Optional[list[list[int]]] = None,
    base_hint: Optional[dict[int, Optional[set[int]]]] = None,
) -> list[list[int]]:
    """Bipartition clusters repeatedly until nothing splits or time runs out."""
    out: list[list[int]] = []
    work = [sorted(c) for c in clusters]
    while work:
        if deadline is not None and time.monotonic() > deadline:
            out.extend(work)
            break
        cluster = work.pop(0)
        split = (
            bipartition_cluster(cgs, cluster, deadline, base_hint)
            if len(cluster) > 1
            else None
        )
        if split is None:
            out.append(cluster)
        else:
            major, remain = split
            work.append(major)
            work.append(remain)
            if sizes_history is not None:
                sizes_history.append(
                    sorted((len(c) for c in (*out, *work)), reverse=True)
                )
    return sorted(out, key=lambda c: c[0])


# ---------------------------------------------------------------------------
# step 3: levels inside a cluster


def _levels_and_found(
    cgs: dict[int, ConnectivityGraph], cluster: list[int]
) -> tuple[list[list[int]], dict[int, Optional[set[int]]]]:
    """Level ordering plus the minimal tag set found per member on the way."""
    members = sorted(cluster)
    found_map: dict[int, Optional[set[int]]] = {}
    if len(members) == 1:
        return [members], found_map
    cluster_tags = tags_of(members)
    succ: dict[int, set[int]] = {a: set() for a in members}
    for a in members:
        found = search_path_SAT(cgs[a], cluster_tags, set())
        found_map[a] = found
        if found is None:
            found = cluster_tags
        for t in found:
            other = t // 2
            if other == a or other not in succ:
                continue
            if t % 2 == 0:
                # a's route crosses other's start: other departs before a
                succ[other].add(a)
            else:
                # a's route crosses other's target: a finishes before other
                succ[a].add(other)

    comp_of, order = _scc_topo(members, succ)
    levels: dict[int, list[int]] = {}
    for a in members:
        levels.setdefault(comp_of[a], []).append(a)
    return [sorted(levels[c]) for c in order], found_map


def decompose_cluster_to_levels(
    cgs: dict[int, ConnectivityGraph], cluster: list[int]
) -> list[list[int]]:
    """Order a cluster into levels via the solving-order graph.

    An edge a -> b demands a be solved no later than b.  Both directions can
    arise for one pair; strongly connected groups then share a level.
    """
    return _levels_and_found(cgs, cluster)[0]


def _scc_topo(members: list[int], succ: dict[int, set[int]]) -> tuple[dict[int, int], list[int]]:
    """Condense to SCCs, return component ids and a deterministic topo order."""
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    onstack: set[int] = set()
    stack: list[int] = []
    comp_of: dict[int, int] = {}
    comps: list[list[int]] = []
    counter = 0

    for root in members:
        if root in index:
            continue
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        onstack.add(root)
        work = [(root, iter(sorted(succ[root])))]
        while work:
            u, it = work[-1]
            advanced = False
            for v in it:
                if v not in index:
                    index[v] = low[v] = counter
                    counter += 1
                    stack.append(v)
                    onstack.add(v)
                    work.append((v, iter(sorted(succ[v]))))
                    advanced = True
                    break
                if v in onstack:
                    low[u] = min(low[u], index[v])
            if advanced:
                continue
            work.pop()
            if low[u] == index[u]:
                comp = []
                while True:
                    v = stack.pop()
                    onstack.discard(v)
                    comp_of[v] = len(comps)
                    comp.append(v)
                    if v == u:
                        break
                comps.append(comp)
            if work:
                low[work[-1][0]] = min(low[work[-1][0]], low[u])

    # Kahn's algorithm over components, smallest member agent id first
    n = len(comps)
    comp_min = [min(c) for c in comps]
    out: dict[int, set[int]] = {c: set() for c in range(n)}
    indeg = [0] * n
    for a in members:
        for b in succ[a]:
            ca, cb = comp_of[a], comp_of[b]
            if ca != cb and cb not in out[ca]:
                out[ca].add(cb)
                indeg[cb] += 1
    ready = [(comp_min[c], c) for c in range(n) if indeg[c] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        _, c = heapq.heappop(ready)
        order.append(c)
        for d in sorted(out[c]):
            indeg[d] -= 1
            if indeg[d] == 0:
                heapq.heappush(ready, (comp_min[d], d))
    return comp_of, order


# ---------------------------------------------------------------------------
# step 4: level bipartition


def bipartition_level(
    cgs: dict[int, ConnectivityGraph],
    cluster: list[int],
    level: list[int],
    emitted_targets: set[int],
    pending_starts: set[int],
    deadline: Optional[float] = None,
    base_hint: Optional[dict[int, Optional[set[int]]]] = None,
) -> Optional[tuple[list[int], list[int]]]:
    """Split one level in two while keeping the level ordering sound.

    emitted_targets are target tags of levels already placed before this one,
    pending_starts are start tags of cluster agents scheduled after it; both
    stay off-limits for every member throughout the split.  Repairs move
    agents only into the earlier half, so the loop terminates.  Running past
    the deadline abandons the split.
    """
    members = sorted(level)
    if len(members) < 2:
        return None
    avail = tags_of(cluster)
    avoid_base = set(emitted_targets) | set(pending_starts)

    # minimal tag set per member under the shared avoids; None = no path at
    # all, which makes every stricter query below infeasible too.  A hint
    # from the unrestricted ordering pass stands while it dodges the avoids.
    base: dict[int, Optional[set[int]]] = {}
    missing = object()
    for a in members:
        hint = base_hint.get(a, missing) if base_hint else missing
        if hint is not missing and (hint is None or not hint & avoid_base):
            base[a] = hint
        else:
            base[a] = _sat(cgs[a], avail, avoid_base)

    succ: dict[int, set[int]] = {a: set() for a in members}
    deg: dict[int, int] = {a: 0 for a in members}
    for i in members:
        if deadline is not None and time.monotonic() > deadline:
            return None
        bi = base[i]
        for j in members:
            if i == j:
                continue
            # i cannot finish while j's target stands: i before j
            if (bi is None or target_tag(j) in bi) and not _sat_ok(
                cgs[i], avail, avoid_base | {target_tag(j)}
            ):
                succ[i].add(j)
                deg[i] += 1
            # i cannot finish once j has left its start: j before i
            if (bi is None or start_tag(j) in bi) and not _sat_ok(
                cgs[i], avail, avoid_base | {start_tag(j)}
            ):
                succ[j].add(i)
                deg[j] += 1

    # weakly connected component around the most constrained agent
    seed = min(members, key=lambda a: (-deg[a], a))
    undirected: dict[int, set[int]] = {a: set() for a in members}
    for a in members:
        for b in succ[a]:
            undirected[a].add(b)
            undirected[b].add(a)
    major = set()
    frontier = [seed]
    major.add(seed)
    while frontier:
        u = frontier.pop()
        for v in undirected[u]:
            if v not in major:
                major.add(v)
                frontier.append(v)
    remain = set(members) - major
    if not remain:
        return None

    # the earlier half must tolerate the later half's starts, the later half
    # must tolerate the earlier half's targets; every repair moves agents
    # from remain into major
    while remain:
        if deadline is not None and time.monotonic() > deadline:
            return None
        moved = False
        for a in sorted(major):
            ba = base[a]
            extra = {start_tag(b) for b in remain}
            if ba is not None and not ba & extra:
                continue
            if _sat_ok(cgs[a], avail, avoid_base | extra):
                continue
            if ba is None:
                return None
            pulled = {t // 2 for t in ba if t % 2 == 0 and t // 2 in remain}
            if not pulled:
                return None
            remain -= pulled
            major |= pulled
            moved = True
            break
        if moved:
            continue
        for a in sorted(remain):
            ba = base[a]
            extra = {target_tag(b) for b in major}
            if ba is not None and not ba & extra:
                continue
            if not _sat_ok(cgs[a], avail, avoid_base | extra):
                remain.discard(a)
                major.add(a)
                moved = True
                break
        if not moved:
            break

    if not remain:
        return None
    return sorted(major), sorted(remain)


def split_levels(
    cgs: dict[int, ConnectivityGraph],
    cluster: list[int],
    levels: list[list[int]],
    deadline: Optional[float] = None,
    sizes_history: Optional[list[list[int]]] = None,
    other_sizes: Optional[list[int]] = None,
    base_hint: Optional[dict[int, Optional[set[int]]]] = None,
) -> list[list[int]]:
    """Bipartition each level of one cluster until stable, preserving order."""
    out: list[list[int]] = []
    queue = [sorted(lv) for lv in levels]
    while queue:
        level = queue.pop(0)
        if deadline is not None and time.monotonic() > deadline:
            out.append(level)
            out.extend(queue)
            break
        if len(level) < 2:
            out.append(level)
            continue
        emitted = {target_tag(a) for lv in out for a in lv}
        pending = {start_tag(a) for lv in queue for a in lv}
        split = bipartition_level(
            cgs, cluster, level, emitted, pending, deadline, base_hint
        )
        if split is None:
            out.append(level)
            continue
        major, remain = split
        queue.insert(0, remain)
        queue.insert(0, major)
        if sizes_history is not None:
            base = other_sizes or []
            sizes_history.append(
                sorted((*base, *(len(lv) for lv in (*out, *queue))), reverse=True)
            )
    return out


# ---------------------------------------------------------------------------
# certificates and the full pipeline


def certify_decomposition(
    sgs: dict,
    rels: dict[int, RelationTable],
    clusters: list[list[int]],
    levels: list[list[int]],
    level_cluster: list[int],
) -> dict[int, list[int]]:
    """Raw-subgraph witness paths proving the level ordering is honest.

    Every agent must reach its target while avoiding everything related to
    other clusters, targets of earlier levels in its cluster, and starts of
    later levels in its cluster.  Raises ValueError on any missing witness.
    """
    from .subgraph import search_path

    witnesses: dict[int, list[int]] = {}
    for ci, cluster in enumerate(clusters):
        cluster_set = set(cluster)
        cluster_levels = [li for li in range(len(levels)) if level_cluster[li] == ci]
        outside = [a for c in clusters for a in c if a not in cluster_set]
        for pos, li in enumerate(cluster_levels):
            before = {target_tag(a) for lj in cluster_levels[:pos] for a in levels[lj]}
            after = {start_tag(a) for lj in cluster_levels[pos + 1 :] for a in levels[lj]}
            avoid_tags = tags_of(outside) | before | after
            for a in levels[li]:
                avoid_nodes = rels[a].related_nodes(avoid_tags)
                path = search_path(sgs[a], avoid_nodes)
                if not path:
                    raise ValueError(
                        f"agent {a} in level {li} has no witness path; "
                        "decomposition is not sound"
                    )
                witnesses[a] = path
    return witnesses


def decompose_instance(
    sgs: dict,
    rels: dict[int, RelationTable],
    cgs: dict[int, ConnectivityGraph],
    budget_s: float = 5.0,
    certify: bool = True,
) -> Decomposition:
    """Full pipeline: clusters, cluster splits, levels, level splits.

    budget_s bounds the splitting work (the bipartition passes); the initial
    cluster and level passes always run to completion.  The result is
    certified with raw witness searches unless certify is False.
    """
    deadline = time.monotonic() + budget_s if budget_s > 0 else None
    sizes_history: list[list[int]] = []

    t0 = time.perf_counter()
    needs = _relevance_needs(cgs)
    clusters = _clusters_from_needs(sorted(cgs), needs)
    t1 = time.perf_counter()
    sizes_history.append(sorted((len(c) for c in clusters), reverse=True))

    clusters = split_clusters(cgs, clusters, deadline, sizes_history, base_hint=needs)
    t2 = time.perf_counter()

    ordered = [_levels_and_found(cgs, c) for c in clusters]
    per_cluster_levels = [lvs for lvs, _ in ordered]
    level_found: dict[int, Optional[set[int]]] = {}
    for _, fmap in ordered:
        level_found.update(fmap)
    t3 = time.perf_counter()
    sizes_history.append(
        sorted((len(lv) for lvs in per_cluster_levels for lv in lvs), reverse=True)
    )

    for ci, cluster in enumerate(clusters):
        other_sizes = [
            len(lv)
            for cj, lvs in enumerate(per_cluster_levels)
            if cj != ci
            for lv in lvs
        ]
        per_cluster_levels[ci] = split_levels(
            cgs,
            cluster,
            per_cluster_levels[ci],
            deadline,
            sizes_history,
            other_sizes,
            base_hint=level_found,
        )
    final_levels: list[list[int]] = []
    level_cluster: list[int] = []
    for ci, lvs in enumerate(per_cluster_levels):
        for lv in lvs:
            final_levels.append(lv)
            level_cluster.append(ci)
    t4 = time.perf_counter()

    decomp = Decomposition(
        clusters=clusters,
        levels=final_levels,
        level_cluster=level_cluster,
        step_ms=(
            (t1 - t0) * 1e3,
            (t2 - t1) * 1e3,
            (t3 - t2) * 1e3,
            (t4 - t3) * 1e3,
        ),
        sizes_history=sizes_history,
    )
    if certify:
        certify_decomposition(sgs, rels, clusters, final_levels, level_cluster)
    return decomp
