"""Solving a decomposed instance level by level and stitching the results.

Two composition modes share the level order.  The serial mode solves each
level against the accumulated timetable of everything solved so far, with
all still-waiting agents blocking their start footprints; agents overlap in
time wherever that is safe.  The parallel mode solves every level in
isolation against purely static blocks, then delays each level by the
smallest uniform prefix of start waits that makes the merged plan
conflict-free.  Isolated solves are independent of each other, so they can
be farmed out, at the price of longer plans.
"""

import time
from dataclasses import dataclass, field
from typing import Optional

from .cbs import (
    CBSStats,
    FootprintTable,
    SolveContext,
    la_cbs_solve,
    makespan,
    merge_external,
    sum_of_costs,
)
from .decompose import Decomposition
from .geometry import footprint_of, transfer_footprint
from .subgraph import Subgraph, pose_index


@dataclass
class LevelRun:
    cluster: int
    level: int
    agents: tuple[int, ...]
    status: str
    wall_time_s: float
    stats: Optional[CBSStats] = None
    delay: int = 0  # start waits prepended by the parallel merge


@dataclass
class PlanResult:
    """Outcome of one solve attempt, whatever the method.

    status "failed" means a subproblem came back unsolvable; with a
    decomposition in play that is not a proof about the original instance,
    so it is kept distinct from "unsolvable".
    """

    status: str  # "solved" | "timeout" | "unsolvable" | "failed"
    paths: Optional[dict[int, list[int]]]
    method: str
    wall_time_s: float = 0.0
    runs: list[LevelRun] = field(default_factory=list)

    @property
    def solved(self) -> bool:
        return self.status == "solved"

    def sum_of_costs(self, subgraphs: dict[int, Subgraph]) -> Optional[int]:
        if self.paths is None:
            return None
        targets = {a: subgraphs[a].target for a in self.paths}
        return sum_of_costs(self.paths, targets)

    def makespan(self, subgraphs: dict[int, Subgraph]) -> Optional[int]:
        if self.paths is None:
            return None
        targets = {a: subgraphs[a].target for a in self.paths}
        return makespan(self.paths, targets)


def _flat_levels(decomp: Decomposition):
    """Levels of every cluster in solving order, tagged with their indices."""
    out = []
    for li, agents in enumerate(decomp.levels):
        out.append((decomp.level_cluster[li], li, tuple(agents)))
    return out


def _start_cells(tables, subgraphs, agents) -> frozenset:
    cells = set()
    for a in agents:
        cells |= tables[a].node_cells(subgraphs[a].start)
    return frozenset(cells)


def _target_cells(tables, subgraphs, agents) -> frozenset:
    cells = set()
    for a in agents:
        cells |= tables[a].node_cells(subgraphs[a].target)
    return frozenset(cells)


def solve_serial(
    subgraphs: dict[int, Subgraph],
    decomp: Decomposition,
    deadline: Optional[float] = None,
) -> PlanResult:
    """Solve levels in order on one shared timeline.

    Waiting agents pin their start footprints; solved agents are moving
    obstacles.  Every level is guaranteed a path: it can sit out the traffic
    at its start and then follow its certificate witness.
    """
    t0 = time.perf_counter()
    tables = {a: FootprintTable(subgraphs[a]) for a in subgraphs}
    order = _flat_levels(decomp)
    solved: dict[int, list[int]] = {}
    runs: list[LevelRun] = []
    for pos, (ci, li, agents) in enumerate(order):
        waiting = [a for _, _, rest in order[pos + 1 :] for a in rest]
        ctx = SolveContext(
            blocked_cells=_start_cells(tables, subgraphs, waiting),
            external=merge_external(tables, solved) if solved else None,
            deadline=deadline,
        )
        t1 = time.perf_counter()
        res = la_cbs_solve(subgraphs, ctx, agent_ids=list(agents))
        runs.append(
            LevelRun(ci, li, agents, res.status, time.perf_counter() - t1, res.stats)
        )
        if res.status != "solved":
            status = "timeout" if res.status == "timeout" else "failed"
            return PlanResult(status, None, "layered-cbs", time.perf_counter() - t0, runs)
        solved.update(res.paths)
    return PlanResult("solved", solved, "layered-cbs", time.perf_counter() - t0, runs)


def _shift(path: list[int], delay: int) -> list[int]:
    return [path[0]] * delay + path


def _pair_conflict(sg_a, table_a, path_a, sg_b, table_b, path_b) -> bool:
    horizon = max(len(path_a), len(path_b)) - 1
    for t in range(horizon + 1):
        ua = path_a[min(t, len(path_a) - 1)]
        ub = path_b[min(t, len(path_b) - 1)]
        if table_a.node_cells(ua) & table_b.node_cells(ub):
            return True
        if t < horizon:
            va = path_a[min(t + 1, len(path_a) - 1)]
            vb = path_b[min(t + 1, len(path_b) - 1)]
            if table_a.edge_cells(ua, va) & table_b.edge_cells(ub, vb):
                return True
    return False


def solve_parallel(
    subgraphs: dict[int, Subgraph],
    decomp: Decomposition,
    deadline: Optional[float] = None,
    solver=None,
) -> PlanResult:
    """Solve levels in isolation, then merge with minimal prefix delays.

    Each level sees earlier levels parked at targets and later levels parked
    at starts, as static blocks only.  The merge pushes each level just far
    enough into the future; delaying past the merged horizon always works,
    so the scan terminates.  `solver` exists so callers can distribute the
    isolated solves; it defaults to solving inline.
    """
    t0 = time.perf_counter()
    tables = {a: FootprintTable(subgraphs[a]) for a in subgraphs}
    order = _flat_levels(decomp)

    jobs = []
    for pos, (ci, li, agents) in enumerate(order):
        before = [a for _, _, rest in order[:pos] for a in rest]
        after = [a for _, _, rest in order[pos + 1 :] for a in rest]
        blocked = _target_cells(tables, subgraphs, before) | _start_cells(
            tables, subgraphs, after
        )
        jobs.append((ci, li, agents, frozenset(blocked)))

    if solver is None:
        def solver(agents, blocked):
            ctx = SolveContext(blocked_cells=blocked, deadline=deadline)
            return la_cbs_solve(subgraphs, ctx, agent_ids=list(agents))

    runs: list[LevelRun] = []
    merged: dict[int, list[int]] = {}
    for ci, li, agents, blocked in jobs:
        t1 = time.perf_counter()
        res = solver(agents, blocked)
        run = LevelRun(ci, li, agents, res.status, time.perf_counter() - t1, res.stats)
        runs.append(run)
        if res.status != "solved":
            status = "timeout" if res.status == "timeout" else "failed"
            return PlanResult(
                status, None, "layered-parallel", time.perf_counter() - t0, runs
            )
        delay = 0
        while True:
            shifted = {a: _shift(res.paths[a], delay) for a in agents}
            clash = False
            for a, pa in shifted.items():
                for b, pb in merged.items():
                    if _pair_conflict(
                        subgraphs[a], tables[a], pa, subgraphs[b], tables[b], pb
                    ):
                        clash = True
                        break
                if clash:
                    break
            if not clash:
                merged.update(shifted)
                run.delay = delay
                break
            delay += 1
    return PlanResult(
        "solved", merged, "layered-parallel", time.perf_counter() - t0, runs
    )


def solve_raw(
    subgraphs: dict[int, Subgraph], deadline: Optional[float] = None
) -> PlanResult:
    t0 = time.perf_counter()
    res = la_cbs_solve(subgraphs, SolveContext(deadline=deadline))
    run = LevelRun(0, 0, tuple(sorted(subgraphs)), res.status, res.stats.wall_time_s, res.stats)
    return PlanResult(res.status, res.paths, "raw-cbs", time.perf_counter() - t0, [run])


METHODS = ("raw-cbs", "layered-cbs", "layered-parallel")


def layered_solve(
    subgraphs: dict[int, Subgraph],
    decomp: Optional[Decomposition],
    method: str = "layered-cbs",
    budget_s: float = 0.0,
) -> PlanResult:
    """Entry point shared by the command line and the benchmark."""
    deadline = time.monotonic() + budget_s if budget_s > 0 else None
    if method == "raw-cbs":
        return solve_raw(subgraphs, deadline)
    if decomp is None:
        raise ValueError(f"method {method!r} needs a decomposition")
    if method == "layered-cbs":
        return solve_serial(subgraphs, decomp, deadline)
    if method == "layered-parallel":
        return solve_parallel(subgraphs, decomp, deadline)
    raise ValueError(f"unknown method {method!r}; pick one of {METHODS}")


# ---------------------------------------------------------------------------
# independent validation and plan serialization


def validate_solution(
    subgraphs: dict[int, Subgraph], paths: dict[int, list[int]]
) -> list[str]:
    """Every way a joint plan can be wrong, as human-readable findings.

    Deliberately slow and direct: footprints are recomputed from shapes and
    compared cell by cell, without any of the solver's caching or pruning.
    """
    problems = []
    if set(paths) != set(subgraphs):
        problems.append("agent sets of plan and instance differ")
        return problems
    for a in sorted(paths):
        sg, path = subgraphs[a], paths[a]
        if not path:
            problems.append(f"agent {a}: empty path")
            continue
        if path[0] != sg.start:
            problems.append(f"agent {a}: path starts away from its start pose")
        if path[-1] != sg.target:
            problems.append(f"agent {a}: path ends away from its target pose")
        for t, (u, v) in enumerate(zip(path, path[1:])):
            if v != u and (sg.successors[u] is None or v not in sg.successors[u]):
                problems.append(f"agent {a}: illegal transition at step {t}")
    if problems:
        return problems

    def fp(a, node):
        return footprint_of(subgraphs[a].shape, subgraphs[a].pose(node))

    def sweep(a, u, v):
        return transfer_footprint(
            subgraphs[a].shape, subgraphs[a].pose(u), subgraphs[a].pose(v)
        )

    ids = sorted(paths)
    horizon = max(len(paths[a]) for a in ids) - 1
    for t in range(horizon + 1):
        for i_pos, i in enumerate(ids):
            ui = paths[i][min(t, len(paths[i]) - 1)]
            for j in ids[i_pos + 1 :]:
                uj = paths[j][min(t, len(paths[j]) - 1)]
                if fp(i, ui) & fp(j, uj):
                    problems.append(f"agents {i} and {j} overlap at step {t}")
        if t == horizon:
            break
        for i_pos, i in enumerate(ids):
            ui = paths[i][min(t, len(paths[i]) - 1)]
            vi = paths[i][min(t + 1, len(paths[i]) - 1)]
            for j in ids[i_pos + 1 :]:
                uj = paths[j][min(t, len(paths[j]) - 1)]
                vj = paths[j][min(t + 1, len(paths[j]) - 1)]
                if sweep(i, ui, vi) & sweep(j, uj, vj):
                    problems.append(
                        f"agents {i} and {j} collide moving between steps "
                        f"{t} and {t + 1}"
                    )
    return problems


def solution_to_text(subgraphs: dict[int, Subgraph], paths: dict[int, list[int]]) -> str:
    lines = []
    for a in sorted(paths):
        sg = subgraphs[a]
        parts = []
        for t, node in enumerate(paths[a]):
            p = sg.pose(node)
            parts.append(f"({p.x},{p.y},{p.orient})@{t}")
        lines.append(f"{a}: " + " ".join(parts))
    return "\n".join(lines) + "\n"


def parse_solution(text: str, subgraphs: dict[int, Subgraph]) -> dict[int, list[int]]:
    paths: dict[int, list[int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        head, _, rest = line.partition(":")
        try:
            agent = int(head)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad agent id {head!r}") from exc
        if agent not in subgraphs:
            raise ValueError(f"line {lineno}: unknown agent {agent}")
        if agent in paths:
            raise ValueError(f"line {lineno}: duplicate agent {agent}")
        width = subgraphs[agent].width
        nodes = []
        for t, token in enumerate(rest.split()):
            pose_part, _, step = token.partition("@")
            if not (pose_part.startswith("(") and pose_part.endswith(")")):
                raise ValueError(f"line {lineno}: bad pose token {token!r}")
            try:
                x, y, o = (int(v) for v in pose_part[1:-1].split(","))
                if int(step) != t:
                    raise ValueError
            except ValueError as exc:
                raise ValueError(f"line {lineno}: bad pose token {token!r}") from exc
            nodes.append(pose_index(x, y, o, width))
        if not nodes:
            raise ValueError(f"line {lineno}: empty path for agent {agent}")
        paths[agent] = nodes
    return paths
