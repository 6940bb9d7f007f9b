"""Shared preparation: build every agent's search structures for an instance."""

from __future__ import annotations

from dataclasses import dataclass

from .gridmap import AgentSpec, DistanceField, GridMap, distance_field
from .relations import (
    ConnectivityGraph,
    RelationTable,
    compute_relations,
    condense,
    simplify,
)
from .subgraph import Subgraph, build_subgraph


@dataclass
class Prepared:
    """Everything derived from (grid, agents) that solvers and the
    decomposition share."""

    grid: GridMap
    agents: list[AgentSpec]
    dfield: DistanceField
    subgraphs: dict[int, Subgraph]
    relations: dict[int, RelationTable]
    connectivity: dict[int, ConnectivityGraph]

    @property
    def agent_ids(self) -> list[int]:
        return sorted(self.subgraphs)

    def spec(self, agent_id: int) -> AgentSpec:
        return next(a for a in self.agents if a.id == agent_id)


def prepare(grid: GridMap, agents: list[AgentSpec], simplify_graphs: bool = True) -> Prepared:
    """Build subgraphs, relation tables, and connectivity graphs for all agents.

    Raises PoseCollisionError when any agent cannot even stand at its own
    start or target.
    """
    dfield = distance_field(grid)
    subgraphs: dict[int, Subgraph] = {}
    for spec in agents:
        subgraphs[spec.id] = build_subgraph(
            spec.id, spec.shape, spec.start, spec.target, grid, dfield
        )
    relations: dict[int, RelationTable] = {}
    connectivity: dict[int, ConnectivityGraph] = {}
    for spec in agents:
        rel = compute_relations(subgraphs[spec.id], agents)
        relations[spec.id] = rel
        cg = condense(subgraphs[spec.id], rel)
        connectivity[spec.id] = simplify(cg) if simplify_graphs else cg
    return Prepared(
        grid=grid,
        agents=list(agents),
        dfield=dfield,
        subgraphs=subgraphs,
        relations=relations,
        connectivity=connectivity,
    )
