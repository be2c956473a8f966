"""U-matrix: per-node mean Euclidean distance to immediate grid neighbors.

High entries mark boundaries between clusters of similar nodes; the matrix
is the standard visualization artifact for an emergent map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridCoord, MapType, neighbors, node_index


@dataclass
class UMatrix:
    n_columns: int
    n_rows: int
    heights: np.ndarray  # (n_rows, n_columns) float32, all >= 0

    def __post_init__(self):
        self.heights = np.ascontiguousarray(self.heights, dtype=np.float32)


def compute_umatrix(cb, map_type: MapType) -> UMatrix:
    """Mean distance from each node's weights to its Moore neighbors.

    Planar border nodes average over their existing neighbors only (3, 5,
    or 8 of them). Math runs in double precision; the stored heights are
    single precision since this is a visualization artifact.
    """
    x, y = cb.n_columns, cb.n_rows
    w64 = cb.weights.astype(np.float64)
    heights = np.zeros((y, x), dtype=np.float64)
    for row in range(y):
        for col in range(x):
            nbrs = neighbors(GridCoord(col, row), map_type, x, y)
            if not nbrs:
                continue
            idx = [node_index(nb, x) for nb in nbrs]
            diff = w64[idx] - w64[node_index(GridCoord(col, row), x)]
            heights[row, col] = np.sqrt(
                np.einsum("nd,nd->n", diff, diff)).mean()
    return UMatrix(x, y, heights.astype(np.float32))
