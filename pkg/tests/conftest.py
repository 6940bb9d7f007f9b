import numpy as np
import pytest

from lamapf.geometry import Circle, Pose, Rectangle
from lamapf.gridmap import GridMap, make_empty_grid

# shapes used across the suite; the block is the canonical two-cell rectangle
SMALL_CIRCLE = Circle(0.4)
UNIT_CIRCLE = Circle(1.0)
BLOCK = Rectangle((-0.45, -0.45), (1.45, 0.45))

CROSS_ART = """\
@.@
...
@.@
"""


def ascii_grid(art: str, name: str = "ascii") -> GridMap:
    rows = [line for line in art.splitlines() if line]
    width = len(rows[0])
    passable = np.array([[ch != "@" for ch in row] for row in rows], dtype=bool)
    return GridMap(width=width, height=len(rows), passable=passable, name=name)


@pytest.fixture
def cross3() -> GridMap:
    """Plus-shaped 3x3 map: corners blocked, center row and column open."""
    return ascii_grid(CROSS_ART, name="cross3")


@pytest.fixture
def empty5() -> GridMap:
    return make_empty_grid(5, 5)


@pytest.fixture
def empty8() -> GridMap:
    return make_empty_grid(8, 8)


def random_grid(rng, width, height, density=0.2, name="random") -> GridMap:
    passable = rng.random((height, width)) >= density
    if not passable.any():
        passable[height // 2, width // 2] = True
    return GridMap(width=width, height=height, passable=passable, name=name)


def random_pose(rng, grid) -> Pose:
    return Pose(
        int(rng.integers(0, grid.width)),
        int(rng.integers(0, grid.height)),
        int(rng.integers(0, 4)),
    )
