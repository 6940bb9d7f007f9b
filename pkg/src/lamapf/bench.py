"""Random instance generation and the benchmark harness.

The generator draws shapes and poses from a seeded numpy RNG so a single
integer reproduces an instance exactly.  The harness runs a grid of
(map, agent count, repetition, method) combinations, validates every claimed
success with the independent validator, and writes one CSV row per run.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .decompose import Decomposition, decompose_instance
from .geometry import Circle, Pose, Rectangle, Shape, agents_collide, collides_with_map
from .gridmap import (
    AgentSpec,
    GridMap,
    InstanceError,
    bundled_map_path,
    distance_field,
    load_map,
)
from .layered import METHODS, PlanResult, layered_solve, validate_solution
from .pipeline import prepare
from .subgraph import build_subgraph, search_path

# Draw budget per agent before the map is declared too crowded for the
# requested population.
MAX_DRAWS_PER_AGENT = 10_000

_RADIUS_RANGE = (0.4, 2.0)
_SIDE_RANGE = (0.4, 4.0)


def resolve_map(ref: str) -> GridMap:
    """Load a map from a filesystem path or a bundled map name."""
    p = Path(ref)
    if p.exists():
        return load_map(p)
    return load_map(bundled_map_path(ref))


def _draw_shape(rng: np.random.Generator, want_circle: bool) -> Shape:
    if want_circle:
        return Circle(radius=float(rng.uniform(*_RADIUS_RANGE)))
    lx = float(rng.uniform(*_SIDE_RANGE))
    ly = float(rng.uniform(*_SIDE_RANGE))
    # Reference point lands uniformly inside the rectangle; clamp keeps the
    # offsets strictly signed as the shape validator requires.
    fx = min(max(float(rng.uniform()), 1e-6), 1.0 - 1e-6)
    fy = min(max(float(rng.uniform()), 1e-6), 1.0 - 1e-6)
    return Rectangle(
        min_offset=(-fx * lx, -fy * ly),
        max_offset=((1.0 - fx) * lx, (1.0 - fy) * ly),
    )


def _draw_pose(rng: np.random.Generator, grid: GridMap) -> Pose:
    x = int(rng.integers(0, grid.width))
    y = int(rng.integers(0, grid.height))
    o = int(rng.integers(0, 4))
    return Pose(x, y, o)


def gen_instance(
    grid: GridMap,
    n_agents: int,
    seed: int,
    max_draws: int = MAX_DRAWS_PER_AGENT,
) -> list[AgentSpec]:
    """Sample a random solvable-looking instance on the given map.

    The first ceil(n/2) agents are circles, the rest rectangles.  Start and
    target poses are drawn by rejection until the footprint fits on free
    cells, no two starts overlap, no two targets overlap, and the agent's
    own search graph connects start to target.  Raises InstanceError when an
    agent burns through its draw budget, which in practice means the map is
    too dense for the requested count.
    """
    if n_agents < 0:
        raise ValueError("n_agents must be non-negative")
    rng = np.random.default_rng(seed)
    dfield = distance_field(grid)
    n_circles = math.ceil(n_agents / 2)

    specs: list[AgentSpec] = []
    for aid in range(n_agents):
        shape = _draw_shape(rng, want_circle=aid < n_circles)
        draws = 0
        while True:
            start = None
            while start is None:
                draws += 1
                if draws > max_draws:
                    raise InstanceError(
                        f"map {grid.name!r} too dense: agent {aid} exceeded "
                        f"{max_draws} pose draws"
                    )
                cand = _draw_pose(rng, grid)
                if collides_with_map(shape, cand, grid, dfield):
                    continue
                if any(agents_collide(shape, cand, s.shape, s.start) for s in specs):
                    continue
                start = cand
            target = None
            while target is None:
                draws += 1
                if draws > max_draws:
                    raise InstanceError(
                        f"map {grid.name!r} too dense: agent {aid} exceeded "
                        f"{max_draws} pose draws"
                    )
                cand = _draw_pose(rng, grid)
                if collides_with_map(shape, cand, grid, dfield):
                    continue
                if any(agents_collide(shape, cand, s.shape, s.target) for s in specs):
                    continue
                target = cand
            sg = build_subgraph(aid, shape, start, target, grid, dfield)
            if search_path(sg):
                specs.append(AgentSpec(id=aid, shape=shape, start=start, target=target))
                break
            # Start and target sit in different pockets of this agent's
            # free space; throw both away and redraw.
    return specs


# ---------------------------------------------------------------------------
# benchmark harness


CSV_COLUMNS = (
    "map",
    "agents",
    "method",
    "success",
    "wall_time_s",
    "decomposition_rate",
    "subproblems",
    "decomp_step1_ms",
    "decomp_step2_ms",
    "decomp_step3_ms",
    "decomp_step4_ms",
    "makespan",
    "soc",
    "seed",
)


@dataclass
class BenchConfig:
    maps: list[str]
    agent_counts: list[int]
    repetitions: int = 20
    methods: tuple[str, ...] = METHODS
    budget_s: float = 60.0
    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        if self.repetitions < 0:
            raise ValueError("repetitions must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass
class RunRecord:
    """One benchmark run; maps one-to-one onto a CSV row."""

    map: str
    agents: int
    method: str
    success: bool
    wall_time_s: float
    seed: int
    decomposition_rate: Optional[float] = None
    subproblems: Optional[int] = None
    step_ms: Optional[tuple[float, float, float, float]] = None
    makespan: Optional[int] = None
    soc: Optional[int] = None
    status: str = ""
    validation_errors: list[str] = field(default_factory=list)

    def row(self) -> list[str]:
        steps = ["", "", "", ""]
        if self.step_ms is not None:
            steps = [f"{v:.3f}" for v in self.step_ms]
        return [
            self.map,
            str(self.agents),
            self.method,
            "true" if self.success else "false",
            f"{self.wall_time_s:.4f}",
            "" if self.decomposition_rate is None else f"{self.decomposition_rate:.4f}",
            "" if self.subproblems is None else str(self.subproblems),
            *steps,
            "" if self.makespan is None else str(self.makespan),
            "" if self.soc is None else str(self.soc),
            str(self.seed),
        ]


def run_seed(base: int, map_idx: int, n_agents: int, rep: int) -> int:
    """Stable per-run seed so any row can be reproduced in isolation."""
    ss = np.random.SeedSequence(base, spawn_key=(map_idx, n_agents, rep))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _bench_task(args: tuple) -> RunRecord:
    map_ref, n_agents, method, seed, budget_s = args
    grid = resolve_map(map_ref)
    agents = gen_instance(grid, n_agents, seed)
    prep = prepare(grid, agents)

    t0 = time.perf_counter()
    decomp: Optional[Decomposition] = None
    if method != "raw-cbs":
        # The validator downstream checks every claimed success, so the
        # decomposition's own certification pass would be redundant here.
        decomp = decompose_instance(
            prep.subgraphs,
            prep.relations,
            prep.connectivity,
            budget_s=budget_s,
            certify=False,
        )
    remaining = budget_s - (time.perf_counter() - t0)
    if remaining <= 0:
        result = PlanResult(status="timeout", paths=None, method=method, wall_time_s=0.0)
    else:
        result = layered_solve(prep.subgraphs, decomp, method=method, budget_s=remaining)
    wall = time.perf_counter() - t0

    rec = RunRecord(
        map=map_ref,
        agents=n_agents,
        method=method,
        success=False,
        wall_time_s=wall,
        seed=seed,
        status=result.status,
    )
    if decomp is not None:
        rec.decomposition_rate = decomp.rate
        rec.subproblems = len(decomp.levels)
        rec.step_ms = decomp.step_ms
    if result.solved:
        errors = validate_solution(prep.subgraphs, result.paths)
        if errors:
            rec.validation_errors = errors
        else:
            rec.success = True
            rec.makespan = result.makespan(prep.subgraphs)
            rec.soc = result.sum_of_costs(prep.subgraphs)
    return rec


def _tasks_for(config: BenchConfig) -> list[tuple]:
    tasks = []
    for mi, map_ref in enumerate(config.maps):
        for n in config.agent_counts:
            for rep in range(config.repetitions):
                seed = run_seed(config.seed, mi, n, rep)
                for method in config.methods:
                    tasks.append((map_ref, n, method, seed, config.budget_s))
    return tasks


def run_bench(config: BenchConfig, out_path=None) -> tuple[list[RunRecord], bool]:
    """Run the full benchmark grid.

    Returns the records in deterministic order plus a flag that is False
    when any claimed success failed independent validation.  When out_path
    is given the CSV is written there as the runs complete.
    """
    config.validate()
    tasks = _tasks_for(config)
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_bench_task, tasks))
    else:
        records = [_bench_task(t) for t in tasks]
    ok = all(not r.validation_errors for r in records)
    if out_path is not None:
        Path(out_path).write_text(records_to_csv(records))
    return records, ok


def records_to_csv(records: list[RunRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        writer.writerow(rec.row())
    return buf.getvalue()


def aggregate_csv(path) -> list[dict]:
    """Per (map, agents, method) summary: run count, success rate, mean times.

    Mean makespan and mean sum-of-costs are over successful runs only and
    are None when nothing succeeded.
    """
    groups: dict[tuple[str, int, str], list[dict]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["map"], int(row["agents"]), row["method"])
            groups.setdefault(key, []).append(row)
    out = []
    for (map_ref, n, method) in sorted(groups):
        rows = groups[(map_ref, n, method)]
        succ = [r for r in rows if r["success"] == "true"]
        summary = {
            "map": map_ref,
            "agents": n,
            "method": method,
            "runs": len(rows),
            "successes": len(succ),
            "success_rate": len(succ) / len(rows),
            "mean_wall_time_s": sum(float(r["wall_time_s"]) for r in rows) / len(rows),
            "mean_makespan": None,
            "mean_soc": None,
        }
        if succ:
            summary["mean_makespan"] = sum(int(r["makespan"]) for r in succ) / len(succ)
            summary["mean_soc"] = sum(int(r["soc"]) for r in succ) / len(succ)
        out.append(summary)
    return out
