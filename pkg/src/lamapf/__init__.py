"""Multi-agent path finding for large agents on grids.

Agents occupy real shapes (circles and rectangles) anchored to grid cells
with one of four orientations.  The toolkit builds per-agent search graphs
that account for each shape, analyses which agents constrain which others,
decomposes an instance into clusters and solving levels, and plans
collision-free paths with a conflict-based search that exploits the
decomposition.
"""

from .bench import BenchConfig, aggregate_csv, gen_instance, resolve_map, run_bench
from .cbs import (
    CBSResult,
    ExternalTraffic,
    SolveContext,
    la_cbs_solve,
    makespan,
    path_cost,
    sum_of_costs,
)
from .decompose import Decomposition, decompose_instance
from .geometry import (
    Circle,
    Pose,
    Rectangle,
    agents_collide,
    collides_with_map,
    footprint_of,
    transfer_footprint,
)
from .gridmap import (
    AgentSpec,
    GridMap,
    InstanceError,
    MapFormatError,
    load_instance,
    load_map,
    make_empty_grid,
    parse_map,
    save_instance,
)
from .layered import (
    METHODS,
    PlanResult,
    layered_solve,
    parse_solution,
    solution_to_text,
    validate_solution,
)
from .pipeline import Prepared, prepare
from .subgraph import Subgraph, build_subgraph, search_path

__version__ = "0.1.0"

__all__ = [
    "AgentSpec",
    "BenchConfig",
    "CBSResult",
    "Circle",
    "Decomposition",
    "ExternalTraffic",
    "GridMap",
    "InstanceError",
    "MapFormatError",
    "METHODS",
    "PlanResult",
    "Pose",
    "Prepared",
    "Rectangle",
    "SolveContext",
    "Subgraph",
    "agents_collide",
    "aggregate_csv",
    "build_subgraph",
    "collides_with_map",
    "decompose_instance",
    "footprint_of",
    "gen_instance",
    "la_cbs_solve",
    "layered_solve",
    "load_instance",
    "load_map",
    "make_empty_grid",
    "makespan",
    "parse_map",
    "parse_solution",
    "path_cost",
    "prepare",
    "resolve_map",
    "run_bench",
    "save_instance",
    "search_path",
    "solution_to_text",
    "sum_of_costs",
    "transfer_footprint",
    "validate_solution",
]
