"""Grid maps, obstacle distance fields and instance files.

Maps follow the MovingAI benchmark text format.  An instance file pairs a
map reference with one agent per line: shape parameters, start pose and
target pose.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage

from .geometry import (
    Circle,
    N_ORIENTS,
    Pose,
    Rectangle,
    Shape,
    footprint_of,
    validate_shape,
)

PASSABLE_CHARS = frozenset(".G")


class MapFormatError(ValueError):
    pass


class InstanceError(ValueError):
    pass


@dataclass(eq=False)
class GridMap:
    width: int
    height: int
    passable: np.ndarray  # bool, shape (height, width)
    name: str = "map"

    def passable_count(self) -> int:
        return int(self.passable.sum())

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def is_passable(self, x: int, y: int) -> bool:
        return self.in_bounds(x, y) and bool(self.passable[y, x])


def parse_map(text: str, name: str = "map") -> GridMap:
    """Parse MovingAI map text.  '.' and 'G' are passable, anything else blocks."""
    lines = text.splitlines()
    if len(lines) < 4:
        raise MapFormatError("map text too short for a MovingAI header")
    if not lines[0].startswith("type"):
        raise MapFormatError(f"expected 'type' header line, got {lines[0]!r}")
    try:
        height = int(lines[1].split()[1])
        width = int(lines[2].split()[1])
    except (IndexError, ValueError) as exc:
        raise MapFormatError(f"bad height/width header: {lines[1]!r} {lines[2]!r}") from exc
    if lines[1].split()[0] != "height" or lines[2].split()[0] != "width":
        raise MapFormatError("header must list height then width")
    if lines[3].strip() != "map":
        raise MapFormatError(f"expected 'map' separator line, got {lines[3]!r}")
    if height <= 0 or width <= 0:
        raise MapFormatError(f"dimensions must be positive, got {width}x{height}")
    rows = lines[4 : 4 + height]
    if len(rows) < height:
        raise MapFormatError(f"expected {height} map rows, found {len(rows)}")
    passable = np.zeros((height, width), dtype=bool)
    for y, row in enumerate(rows):
        row = row.rstrip("\r")
        if len(row) != width:
            raise MapFormatError(f"map row {y} has {len(row)} chars, expected {width}")
        for x in range(width):
            passable[y, x] = row[x] in PASSABLE_CHARS
    return GridMap(width=width, height=height, passable=passable, name=name)


def map_to_text(grid: GridMap) -> str:
    rows = [
        "".join("." if grid.passable[y, x] else "@" for x in range(grid.width))
        for y in range(grid.height)
    ]
    header = f"type octile\nheight {grid.height}\nwidth {grid.width}\nmap\n"
    return header + "\n".join(rows) + "\n"


def load_map(path: str | Path) -> GridMap:
    path = Path(path)
    return parse_map(path.read_text(), name=path.stem)


def make_empty_grid(width: int, height: int, name: Optional[str] = None) -> GridMap:
    if name is None:
        name = f"empty-{width}-{height}"
    return GridMap(width, height, np.ones((height, width), dtype=bool), name)


def bundled_maps_dir() -> Path:
    return Path(__file__).parent / "maps"


def bundled_map_path(name: str) -> Path:
    p = bundled_maps_dir() / f"{name}.map"
    if not p.exists():
        raise FileNotFoundError(f"no bundled map named {name!r}")
    return p


# ---------------------------------------------------------------------------
# distance field


@dataclass(eq=False)
class DistanceField:
    """Distance from each cell center to the nearest obstacle cell center.

    Cells outside the map count as obstacles, so the field also encodes
    distance to the boundary ring.  Obstacle cells carry distance zero.
    """

    values: np.ndarray  # float64, shape (height, width)

    def at(self, x: int, y: int) -> float:
        return float(self.values[y, x])


def distance_field(grid: GridMap) -> DistanceField:
    padded = np.pad(grid.passable, 1, constant_values=False)
    # exact Euclidean distances via the feature transform: sqrt of integer sums
    iy, ix = ndimage.distance_transform_edt(padded, return_indices=True)[1]
    yy, xx = np.indices(padded.shape)
    sq = (yy - iy) ** 2 + (xx - ix) ** 2
    values = np.sqrt(sq.astype(np.float64))[1:-1, 1:-1]
    return DistanceField(values=values)


# ---------------------------------------------------------------------------
# agents and instance files

_FORMAT_TAG = "lamapf-instance"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class AgentSpec:
    id: int
    shape: Shape
    start: Pose
    target: Pose


def _check_pose(pose: Pose, label: str, agent_id: int) -> None:
    if not 0 <= pose.orient < N_ORIENTS:
        raise InstanceError(f"agent {agent_id}: {label} orientation {pose.orient} out of range")


def _check_footprints(grid: GridMap, spec: AgentSpec) -> None:
    for label, pose in (("start", spec.start), ("target", spec.target)):
        for x, y in footprint_of(spec.shape, pose):
            if not grid.is_passable(x, y):
                raise InstanceError(
                    f"agent {spec.id}: {label} footprint covers blocked or "
                    f"off-map cell ({x}, {y})"
                )


def _format_float(v: float) -> str:
    return repr(float(v))


def _agent_line(spec: AgentSpec) -> str:
    s, t = spec.start, spec.target
    pose_part = f"{s.x} {s.y} {s.orient} {t.x} {t.y} {t.orient}"
    if isinstance(spec.shape, Circle):
        return f"{spec.id} circle {_format_float(spec.shape.radius)} {pose_part}"
    (ax, ay), (bx, by) = spec.shape.min_offset, spec.shape.max_offset
    params = " ".join(_format_float(v) for v in (ax, ay, bx, by))
    return f"{spec.id} rect {params} {pose_part}"


def save_instance(path: str | Path, map_ref: str, agents: list[AgentSpec], seed: int) -> None:
    lines = [
        f"{_FORMAT_TAG} {_FORMAT_VERSION}",
        f"map {map_ref}",
        f"seed {seed}",
        f"agents {len(agents)}",
    ]
    lines += [_agent_line(spec) for spec in agents]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_agent_line(line: str, lineno: int) -> AgentSpec:
    parts = line.split()
    try:
        agent_id = int(parts[0])
        kind = parts[1]
        if kind == "circle":
            shape: Shape = Circle(float(parts[2]))
            rest = parts[3:]
        elif kind == "rect":
            shape = Rectangle(
                (float(parts[2]), float(parts[3])), (float(parts[4]), float(parts[5]))
            )
            rest = parts[6:]
        else:
            raise InstanceError(f"line {lineno}: unknown shape kind {kind!r}")
        if len(rest) != 6:
            raise InstanceError(f"line {lineno}: expected 6 pose fields, got {len(rest)}")
        sx, sy, so, tx, ty, to = (int(v) for v in rest)
    except InstanceError:
        raise
    except (IndexError, ValueError) as exc:
        raise InstanceError(f"line {lineno}: malformed agent line {line!r}") from exc
    return AgentSpec(agent_id, shape, Pose(sx, sy, so), Pose(tx, ty, to))


def read_instance_header(path: str | Path) -> dict:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(_FORMAT_TAG):
        raise InstanceError(f"{path}: not a {_FORMAT_TAG} file")
    version = int(lines[0].split()[1])
    if version != _FORMAT_VERSION:
        raise InstanceError(f"{path}: unsupported format version {version}")
    header = {"version": version}
    for line in lines[1:4]:
        key, _, value = line.partition(" ")
        header[key] = value
    header["seed"] = int(header.get("seed", "0"))
    header["agents"] = int(header.get("agents", "0"))
    return header


def _resolve_map_ref(map_ref: str, instance_dir: Path, maps_dir: Optional[Path]) -> Path:
    candidates = []
    ref = Path(map_ref)
    if ref.is_absolute():
        candidates.append(ref)
    else:
        candidates.append(instance_dir / ref)
        if maps_dir is not None:
            candidates.append(Path(maps_dir) / ref)
        candidates.append(bundled_maps_dir() / ref)
        candidates.append(bundled_maps_dir() / f"{map_ref}.map")
    for cand in candidates:
        if cand.exists():
            return cand
    tried = ", ".join(str(c) for c in candidates)
    raise InstanceError(f"cannot resolve map reference {map_ref!r} (tried: {tried})")


def load_instance(
    path: str | Path, maps_dir: Optional[str | Path] = None
) -> tuple[GridMap, list[AgentSpec]]:
    """Load an instance file; start/target footprints are checked obstacle-free."""
    path = Path(path)
    lines = path.read_text().splitlines()
    header = read_instance_header(path)
    grid = load_map(_resolve_map_ref(header["map"], path.parent, maps_dir))
    n_agents = header["agents"]
    agent_lines = [ln for ln in lines[4:] if ln.strip()]
    if len(agent_lines) != n_agents:
        raise InstanceError(
            f"{path}: header declares {n_agents} agents, found {len(agent_lines)} lines"
        )
    agents = []
    seen_ids: set[int] = set()
    for i, line in enumerate(agent_lines):
        spec = _parse_agent_line(line, lineno=5 + i)
        if spec.id in seen_ids:
            raise InstanceError(f"{path}: duplicate agent id {spec.id}")
        seen_ids.add(spec.id)
        try:
            validate_shape(spec.shape)
        except (ValueError, TypeError) as exc:
            raise InstanceError(f"agent {spec.id}: {exc}") from exc
        _check_pose(spec.start, "start", spec.id)
        _check_pose(spec.target, "target", spec.id)
        _check_footprints(grid, spec)
        agents.append(spec)
    return grid, agents
