import numpy as np
import pytest

from lamapf.geometry import Circle, Pose, footprint_of, transfer_footprint
from lamapf.gridmap import AgentSpec, distance_field
from lamapf.relations import (
    compute_relations,
    condense,
    related_node_set,
    search_path_agent,
    search_path_SAT,
    simplify,
    start_tag,
    tag_agent,
    tag_is_start,
    tag_str,
    tags_of,
    target_tag,
    theorem_witness,
)
from lamapf.subgraph import build_subgraph, index_pose, pose_index, search_path

from conftest import BLOCK, SMALL_CIRCLE, random_grid
from oracles import random_safe_shape, reachability_closure


def test_tag_helpers():
    assert start_tag(3) == 6 and target_tag(3) == 7
    assert tag_agent(start_tag(5)) == 5 and tag_agent(target_tag(5)) == 5
    assert tag_is_start(start_tag(2)) and not tag_is_start(target_tag(2))
    assert tag_str(start_tag(4)) == "S[4]" and tag_str(target_tag(4)) == "T[4]"
    assert tags_of([0, 2]) == {0, 1, 4, 5}
    assert tags_of([1], targets=False) == {2}
    assert tags_of([1], starts=False) == {3}


# ---------------------------------------------------------------------------
# random instance scaffolding


def _place_agents(rng, grid, shapes):
    """Valid start/target poses for each shape, or None if placement fails."""
    specs = []
    for aid, shape in enumerate(shapes):
        poses = []
        for _ in range(2):
            for _attempt in range(200):
                p = Pose(
                    int(rng.integers(0, grid.width)),
                    int(rng.integers(0, grid.height)),
                    int(rng.integers(0, 4)),
                )
                fp = footprint_of(shape, p)
                if all(grid.in_bounds(x, y) and grid.is_passable(x, y) for x, y in fp):
                    poses.append(p)
                    break
            else:
                return None
        specs.append(AgentSpec(aid, shape, poses[0], poses[1]))
    return specs


def _random_instance(rng, width=6, height=6, n_agents=3, density=0.12):
    while True:
        grid = random_grid(rng, width, height, density=density)
        shapes = [random_safe_shape(rng, max_radius=0.9, max_side=1.8) for _ in range(n_agents)]
        specs = _place_agents(rng, grid, shapes)
        if specs is not None:
            return grid, specs


def _brute_relation(sg, specs):
    """Per-node tag sets straight from the definition: footprint overlap on
    nodes, swept overlap on edges tagging both endpoints."""
    tags_by_node: dict[int, set[int]] = {}
    foreign = [
        (tag, footprint_of(s.shape, pose))
        for s in specs
        if s.id != sg.agent_id
        for tag, pose in ((start_tag(s.id), s.start), (target_tag(s.id), s.target))
    ]
    for u in np.flatnonzero(sg.valid):
        u = int(u)
        pu = index_pose(u, sg.width)
        fp = footprint_of(sg.shape, pu)
        for tag, tfp in foreign:
            if fp & tfp:
                tags_by_node.setdefault(u, set()).add(tag)
        for v in sg.successors[u]:
            swept = transfer_footprint(sg.shape, pu, index_pose(v, sg.width))
            for tag, tfp in foreign:
                if swept & tfp:
                    tags_by_node.setdefault(u, set()).add(tag)
                    tags_by_node.setdefault(v, set()).add(tag)
    return tags_by_node


def _build_all(grid, specs):
    dfield = distance_field(grid)
    out = []
    for s in specs:
        sg = build_subgraph(s.id, s.shape, s.start, s.target, grid, dfield)
        rel = compute_relations(sg, specs)
        out.append((sg, rel))
    return out


def test_compute_relations_matches_brute_force():
    rng = np.random.default_rng(43)
    for _ in range(8):
        grid, specs = _random_instance(rng)
        for sg, rel in _build_all(grid, specs):
            want = _brute_relation(sg, specs)
            for u in np.flatnonzero(sg.valid):
                u = int(u)
                assert rel.node_tags(u) == frozenset(want.get(u, ())), (
                    grid.name,
                    sg.agent_id,
                    index_pose(u, sg.width),
                )
            for u in np.flatnonzero(~sg.valid):
                assert rel.node_tags(int(u)) == frozenset()


def test_relations_exclude_own_tags():
    rng = np.random.default_rng(47)
    grid, specs = _random_instance(rng)
    for sg, rel in _build_all(grid, specs):
        own = {start_tag(sg.agent_id), target_tag(sg.agent_id)}
        for rs in rel.rel_sets:
            assert not (rs & own)


def test_related_nodes_lookup():
    rng = np.random.default_rng(53)
    grid, specs = _random_instance(rng)
    sg, rel = _build_all(grid, specs)[0]
    for tag in tags_of([s.id for s in specs if s.id != 0]):
        got = rel.related_nodes([tag])
        want = {int(u) for u in np.flatnonzero(sg.valid) if tag in rel.node_tags(int(u))}
        assert got == want
    assert related_node_set(rel, []) == set()


# ---------------------------------------------------------------------------
# condensation


def _equal_rel_scc_oracle(sg, rel):
    """Partition via reachability closure on equal-relation edges."""
    nodes = [int(u) for u in np.flatnonzero(sg.valid)]
    pos = {u: i for i, u in enumerate(nodes)}
    edges = [
        (pos[u], pos[v])
        for u in nodes
        for v in sg.successors[u]
        if rel.node_rel_ids[u] == rel.node_rel_ids[v]
    ]
    reach = reachability_closure(len(nodes), edges)
    comp_of = {}
    comps = []
    for i, u in enumerate(nodes):
        if u in comp_of:
            continue
        members = [nodes[j] for j in range(len(nodes)) if reach[i, j] and reach[j, i]]
        for m in members:
            comp_of[m] = len(comps)
        comps.append(tuple(sorted(members)))
    return comp_of, comps


def test_condense_matches_scc_oracle():
    rng = np.random.default_rng(59)
    for _ in range(6):
        grid, specs = _random_instance(rng, width=5, height=5)
        for sg, rel in _build_all(grid, specs):
            cg = condense(sg, rel)
            comp_of, comps = _equal_rel_scc_oracle(sg, rel)
            assert sorted(cg.comp_members) == sorted(comps)
            # numbering follows the smallest member node index
            mins = [members[0] for members in cg.comp_members]
            assert mins == sorted(mins)
            for c, members in enumerate(cg.comp_members):
                rel_sets = {rel.node_tags(u) for u in members}
                assert rel_sets == {cg.comp_rel[c]}
                for u in members:
                    assert cg.node_comp[u] == c
            # crossing edges only, deduplicated, ascending
            for c, outs in enumerate(cg.comp_out):
                assert list(outs) == sorted(set(outs))
                assert c not in outs
            want_edges = set()
            for u in [int(x) for x in np.flatnonzero(sg.valid)]:
                for v in sg.successors[u]:
                    if cg.node_comp[u] != cg.node_comp[v]:
                        want_edges.add((int(cg.node_comp[u]), int(cg.node_comp[v])))
            got_edges = {(c, d) for c, outs in enumerate(cg.comp_out) for d in outs}
            assert got_edges == want_edges


def test_simplify_reachability_through_dropped():
    rng = np.random.default_rng(61)
    for _ in range(6):
        grid, specs = _random_instance(rng, width=6, height=6)
        for sg, rel in _build_all(grid, specs):
            cg = condense(sg, rel)
            scg = simplify(cg)
            n = cg.n_components
            keep = scg.retained
            for c in range(n):
                want_keep = bool(cg.comp_rel[c]) or c in (cg.start_comp, cg.target_comp)
                assert keep[c] == want_keep
            adj = np.zeros((n, n), dtype=bool)
            for c, outs in enumerate(cg.comp_out):
                for d in outs:
                    adj[c, d] = True
            # closure over dropped components: a -> (dropped chain) -> b
            dropped_adj = adj & ~keep[:, None] & ~keep[None, :]
            dropped_reach = reachability_closure(
                n, [(i, j) for i in range(n) for j in range(n) if dropped_adj[i, j]]
            )
            for a in range(n):
                if not keep[a]:
                    assert scg.comp_out[a] == ()
                    continue
                want = set()
                for b in range(n):
                    if not keep[b] or b == a:
                        continue
                    direct = adj[a, b]
                    via = any(
                        adj[a, d1] and dropped_reach[d1, d2] and adj[d2, b]
                        for d1 in range(n)
                        if not keep[d1]
                        for d2 in range(n)
                        if not keep[d2]
                    )
                    if direct or via:
                        want.add(b)
                assert set(scg.comp_out[a]) == want


# ---------------------------------------------------------------------------
# component search


def _random_tag_sets(rng, specs, self_id):
    others = [s.id for s in specs if s.id != self_id]
    all_tags = sorted(tags_of(others))
    k = int(rng.integers(0, len(all_tags) + 1))
    chosen = list(rng.choice(all_tags, size=k, replace=False)) if k else []
    return {int(t) for t in chosen}


def test_search_feasibility_matches_raw_subgraph():
    """A tag-avoiding component path exists exactly when a raw path avoiding
    all related nodes exists."""
    rng = np.random.default_rng(67)
    outcomes = {True: 0, False: 0}
    for _ in range(10):
        grid, specs = _random_instance(rng, n_agents=3)
        for sg, rel in _build_all(grid, specs):
            cg = simplify(condense(sg, rel))
            for _trial in range(6):
                avoid = _random_tag_sets(rng, specs, sg.agent_id)
                got = search_path_SAT(cg, (), avoid)
                raw = search_path(sg, related_node_set(rel, avoid))
                assert (got is not None) == (raw != []), (sg.agent_id, avoid)
                outcomes[got is not None] += 1
    assert outcomes[True] > 10 and outcomes[False] > 10


def _enumerate_min_union(cg, comp_keys, avoid):
    """Minimal |union of keys| over all simple start-target component paths."""

    def allowed(c):
        return cg.is_active(c) and not (comp_keys[c] & avoid)

    if not allowed(cg.start_comp) or not allowed(cg.target_comp):
        return None
    best = None
    stack = [(cg.start_comp, frozenset(comp_keys[cg.start_comp]), frozenset({cg.start_comp}))]
    while stack:
        c, acc, seen = stack.pop()
        if c == cg.target_comp:
            if best is None or len(acc) < best:
                best = len(acc)
            continue
        for d in cg.comp_out[c]:
            if d in seen or not allowed(d):
                continue
            stack.append((d, acc | comp_keys[d], seen | {d}))
    return best


def test_search_minimizes_accumulated_tags():
    rng = np.random.default_rng(71)
    compared = 0
    for _ in range(8):
        grid, specs = _random_instance(rng, width=5, height=5, n_agents=3)
        for sg, rel in _build_all(grid, specs):
            cg = simplify(condense(sg, rel))
            if sum(1 for c in range(cg.n_components) if cg.is_active(c)) > 14:
                continue  # keep exhaustive enumeration tractable
            avoid = _random_tag_sets(rng, specs, sg.agent_id)
            want = _enumerate_min_union(cg, cg.comp_rel, frozenset(avoid))
            got = search_path_SAT(cg, (), avoid)
            if want is None:
                assert got is None
            else:
                own = {start_tag(sg.agent_id), target_tag(sg.agent_id)}
                assert got is not None
                assert len(got - own) == want
            compared += 1
    assert compared >= 10


def test_search_avail_restricts_components():
    rng = np.random.default_rng(73)
    grid, specs = _random_instance(rng, n_agents=3)
    for sg, rel in _build_all(grid, specs):
        cg = simplify(condense(sg, rel))
        full = search_path_SAT(cg)
        assert full is not None
        # restricting to exactly the tags already used must stay feasible
        again = search_path_SAT(cg, avail_tags=full)
        assert again is not None and again <= full


def test_search_rejects_overlapping_avail_avoid():
    rng = np.random.default_rng(79)
    grid, specs = _random_instance(rng, n_agents=2)
    sg, rel = _build_all(grid, specs)[0]
    cg = simplify(condense(sg, rel))
    with pytest.raises(ValueError):
        search_path_SAT(cg, avail_tags={start_tag(1)}, avoid_tags={start_tag(1)})
    with pytest.raises(ValueError):
        search_path_agent(cg, avail_agents={1}, avoid_agents={1})


def test_search_always_contains_self():
    rng = np.random.default_rng(83)
    grid, specs = _random_instance(rng, n_agents=3)
    for sg, rel in _build_all(grid, specs):
        cg = simplify(condense(sg, rel))
        got = search_path_agent(cg)
        assert got is not None and cg.agent_id in got
        tags = search_path_SAT(cg)
        assert start_tag(cg.agent_id) in tags and target_tag(cg.agent_id) in tags


# ---------------------------------------------------------------------------
# the two-corridor crossing scenarios


def _cross_specs(independent: bool):
    a0_target = Pose(1, 0, 3) if independent else Pose(1, 1, 3)
    return [
        AgentSpec(0, SMALL_CIRCLE, Pose(1, 2, 3), a0_target),
        AgentSpec(1, SMALL_CIRCLE, Pose(0, 1, 0), Pose(2, 1, 0)),
    ]


def test_cross_agents_independent(cross3):
    specs = _cross_specs(independent=True)
    for sg, rel in _build_all(cross3, specs):
        cg = simplify(condense(sg, rel))
        assert search_path_agent(cg) == {cg.agent_id}
        own = {start_tag(cg.agent_id), target_tag(cg.agent_id)}
        assert search_path_SAT(cg) == own


def test_cross_target_in_corridor_forces_order(cross3):
    specs = _cross_specs(independent=False)
    (sg0, rel0), (sg1, rel1) = _build_all(cross3, specs)
    cg0 = simplify(condense(sg0, rel0))
    cg1 = simplify(condense(sg1, rel1))
    # agent 1 cannot cross without touching agent 0's target cell
    assert search_path_SAT(cg1) == {start_tag(1), target_tag(1), target_tag(0)}
    assert search_path_SAT(cg1, avoid_tags={target_tag(0)}) is None
    # agent 0 can reach its target keeping clear of agent 1 entirely
    assert search_path_SAT(cg0, avoid_tags={start_tag(1), target_tag(1)}) == {
        start_tag(0),
        target_tag(0),
    }


def test_theorem_witness_paths(cross3):
    specs = _cross_specs(independent=False)
    (sg0, rel0), (sg1, rel1) = _build_all(cross3, specs)
    avoid_tags = {start_tag(1), target_tag(1)}
    avoid_nodes, path = theorem_witness(sg0, rel0, avoid_tags)
    assert path != []
    assert not (set(path) & avoid_nodes)
    poses = [index_pose(n, 3) for n in path]
    assert poses[0] == Pose(1, 2, 3) and poses[-1] == Pose(1, 1, 3)
    # blocking agent 0's target bars agent 1 end to end
    nodes1, path1 = theorem_witness(sg1, rel1, {target_tag(0)})
    assert path1 == []
    assert pose_index(1, 1, 0, 3) in nodes1
