"""Grid coordinate arithmetic for planar and toroid maps.

Nodes live on a rectangular lattice of ``n_som_x`` columns by ``n_som_y``
rows. Flat node order is row-major. All functions here are pure and safe to
call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class MapType(Enum):
    PLANAR = "planar"
    TOROID = "toroid"


@dataclass(frozen=True)
class GridCoord:
    col: int
    row: int


# U-matrix connectivity: 8-connected (Moore) neighborhood. Swap this table
# for the 4-connected offsets to compare against von Neumann adjacency.
MOORE_OFFSETS = tuple(
    (dc, dr) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dc, dr) != (0, 0)
)


def node_index(c: GridCoord, n_som_x: int) -> int:
    """Flat row-major index of a coordinate."""
    return c.row * n_som_x + c.col


def grid_distance(a: GridCoord, b: GridCoord, map_type: MapType,
                  n_som_x: int, n_som_y: int) -> float:
    """Euclidean distance between two grid coordinates.

    Toroid maps measure along the shorter way around each axis.
    """
    dx = abs(a.col - b.col)
    dy = abs(a.row - b.row)
    if map_type is MapType.TOROID:
        dx = min(dx, n_som_x - dx)
        dy = min(dy, n_som_y - dy)
    return math.hypot(dx, dy)


def neighbors(c: GridCoord, map_type: MapType,
              n_som_x: int, n_som_y: int) -> list[GridCoord]:
    """Moore neighbors of ``c`` in row-major scan order of the 3x3 block.

    Planar maps omit out-of-range coordinates. Toroid maps wrap; on a grid
    thinner than 3 nodes wrapping can alias two offsets to one coordinate
    (or back to ``c`` itself), so duplicates and ``c`` are dropped.
    """
    out: list[GridCoord] = []
    seen: set[tuple[int, int]] = set()
    for dc, dr in MOORE_OFFSETS:
        col, row = c.col + dc, c.row + dr
        if map_type is MapType.TOROID:
            col %= n_som_x
            row %= n_som_y
        elif not (0 <= col < n_som_x and 0 <= row < n_som_y):
            continue
        if (col, row) == (c.col, c.row) or (col, row) in seen:
            continue
        seen.add((col, row))
        out.append(GridCoord(col, row))
    return out
