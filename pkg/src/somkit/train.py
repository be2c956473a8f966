"""Batch training: configuration, cooling schedules, the neighborhood
function, per-epoch orchestration, and the multi-epoch driver.

One epoch finds every instance's best matching unit, accumulates the
neighborhood-weighted sums N_j = sum_t h_bj(t) x(t) and D_j = sum_t h_bj(t)
over the whole dataset, then replaces each touched node's weights with
(1-scale) * w_j + scale * (N_j / D_j). The influence h of a BMU over node j
is exp(-grid_distance/radius); radius and scale are held constant within an
epoch and stepped by the cooling schedules between epochs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional

import numpy as np

from . import errors, fileio
from .fileio import Dataset, SparseDataset, snapshot_paths
from .grid import GridCoord, MapType, grid_distance
from .kernels import DEFAULT_CUTOFF, Kernel, blend, search_accumulate, _to_coords
from .umatrix import UMatrix, compute_umatrix


class Cooling(Enum):
    LINEAR = "linear"
    EXPONENTIAL = "exponential"


@dataclass
class CodeBook:
    """The full set of node weight vectors, row-major node order."""

    n_columns: int   # nodes per row (x extent)
    n_rows: int      # rows (y extent)
    n_dimensions: int
    weights: np.ndarray  # (n_columns * n_rows, n_dimensions) float32

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float32)
        expected = (self.n_columns * self.n_rows, self.n_dimensions)
        if self.weights.shape != expected:
            raise errors.CodebookShapeMismatch(
                f"weights shape {self.weights.shape}, expected {expected}")

    @property
    def n_nodes(self) -> int:
        return self.n_columns * self.n_rows


@dataclass(frozen=True)
class TrainConfig:
    """Training parameters. A zero radius or scale endpoint means "use the
    default": half the smaller map side for radius0, 1 for radiusN, 1.0 for
    scale0, 0.01 for scaleN (resolved by resolve_defaults)."""

    n_epochs: int = 10
    n_columns: int = 50
    n_rows: int = 50
    map_type: MapType = MapType.PLANAR
    kernel: Kernel = Kernel.DENSE_NAIVE
    radius0: float = 0.0
    radiusN: float = 0.0
    radius_cooling: Cooling = Cooling.LINEAR
    scale0: float = 0.0
    scaleN: float = 0.0
    scale_cooling: Cooling = Cooling.LINEAR
    snapshot_level: int = 0
    seed: int = 1
    influence_cutoff: float = DEFAULT_CUTOFF


@dataclass(frozen=True)
class EpochState:
    """Schedule values in force during one epoch."""

    epoch: int
    radius: float
    scale: float


def resolve_defaults(cfg: TrainConfig) -> TrainConfig:
    """Fill sentinel (zero) endpoints and validate the configuration."""
    if cfg.n_epochs < 1:
        raise errors.InvalidConfig("epochs must be >= 1")
    if cfg.n_columns < 1 or cfg.n_rows < 1:
        raise errors.InvalidConfig("map dimensions must be >= 1")
    if cfg.snapshot_level not in (0, 1, 2):
        raise errors.InvalidConfig("snapshot level must be 0, 1, or 2")
    if cfg.influence_cutoff < 0:
        raise errors.InvalidConfig("influence cutoff must be >= 0")
    if cfg.seed < 0:
        raise errors.InvalidConfig("seed must be >= 0")
    radius0 = cfg.radius0
    radiusN = cfg.radiusN
    scale0 = cfg.scale0
    scaleN = cfg.scaleN
    if radius0 == 0:
        # Half the smaller map side, floored at 1 so tiny maps stay valid.
        radius0 = max(min(cfg.n_columns, cfg.n_rows) / 2.0, 1.0)
    if radiusN == 0:
        radiusN = 1.0
    if scale0 == 0:
        scale0 = 1.0
    if scaleN == 0:
        scaleN = 0.01
    if not (radius0 >= radiusN >= 1.0):
        raise errors.InvalidConfig(
            f"need radius0 >= radiusN >= 1, got {radius0} and {radiusN}")
    if not (scale0 >= scaleN > 0.0):
        raise errors.InvalidConfig(
            f"need scale0 >= scaleN > 0, got {scale0} and {scaleN}")
    return replace(cfg, radius0=float(radius0), radiusN=float(radiusN),
                   scale0=float(scale0), scaleN=float(scaleN),
                   kernel=Kernel(cfg.kernel))


def schedule(start: float, end: float, cooling: Cooling,
             epoch: int, n_epochs: int) -> float:
    """Cooling schedule value at an epoch.

    Endpoints are exact by construction: epoch 0 returns start, epoch
    n_epochs-1 returns end. A single-epoch run returns start.
    """
    if epoch <= 0:
        return float(start)
    if epoch >= n_epochs - 1:
        return float(end)
    frac = epoch / (n_epochs - 1)
    if cooling is Cooling.LINEAR:
        return start + (end - start) * frac
    return start * (end / start) ** frac


def neighborhood(bmu: GridCoord, node: GridCoord, radius: float,
                 map_type: MapType, n_som_x: int, n_som_y: int) -> float:
    """Gaussian influence exp(-grid_distance/radius); exactly 1 at the BMU."""
    d = grid_distance(bmu, node, map_type, n_som_x, n_som_y)
    if d == 0.0:
        return 1.0
    return math.exp(-d / radius)


def init_codebook(cfg: TrainConfig, n_dimensions: int,
                  data: Optional[Dataset] = None,
                  initial_codebook: Optional[CodeBook] = None) -> CodeBook:
    """Seeded uniform [0,1) initialization, or a verbatim supplied codebook."""
    if data is not None and data.n_dimensions != n_dimensions:
        raise errors.DimensionMismatch(
            f"data has {data.n_dimensions} dimensions, expected {n_dimensions}")
    if initial_codebook is not None:
        if (initial_codebook.n_columns != cfg.n_columns
                or initial_codebook.n_rows != cfg.n_rows
                or initial_codebook.n_dimensions != n_dimensions):
            raise errors.CodebookShapeMismatch(
                f"initial codebook is {initial_codebook.n_columns}x"
                f"{initial_codebook.n_rows}x{initial_codebook.n_dimensions}, "
                f"map needs {cfg.n_columns}x{cfg.n_rows}x{n_dimensions}")
        return CodeBook(cfg.n_columns, cfg.n_rows, n_dimensions,
                        initial_codebook.weights.copy())
    rng = np.random.default_rng(cfg.seed)
    weights = rng.random((cfg.n_columns * cfg.n_rows, n_dimensions),
                         dtype=np.float32)
    return CodeBook(cfg.n_columns, cfg.n_rows, n_dimensions, weights)


def load_codebook(path) -> CodeBook:
    """Read a codebook file written by write_codebook."""
    n_columns, n_rows, weights = fileio.load_codebook(path)
    return CodeBook(n_columns, n_rows, weights.shape[1], weights)


def check_kernel_data(kernel: Kernel, data: Dataset) -> None:
    sparse_data = isinstance(data, SparseDataset)
    if (Kernel(kernel) is Kernel.SPARSE) != sparse_data:
        raise errors.KernelDataMismatch(
            f"kernel {Kernel(kernel).name} cannot run on "
            f"{'sparse' if sparse_data else 'dense'} data")


class FileSinks:
    """Writes final and interim artifacts under an output prefix."""

    def __init__(self, prefix: str):
        if not prefix:
            raise errors.UsageError("output prefix must not be empty")
        self.prefix = prefix

    def interim(self, epoch: int, umatrix: UMatrix,
                cb: Optional[CodeBook] = None,
                bmus: Optional[np.ndarray] = None) -> None:
        paths = snapshot_paths(self.prefix, epoch)
        fileio.write_umatrix(umatrix, paths.umatrix)
        if cb is not None:
            fileio.write_codebook(cb, paths.codebook)
        if bmus is not None:
            fileio.write_bmus(bmus, paths.bmus)

    def final(self, cb: CodeBook, bmus: np.ndarray, umatrix: UMatrix) -> None:
        paths = snapshot_paths(self.prefix)
        fileio.write_codebook(cb, paths.codebook)
        fileio.write_bmus(bmus, paths.bmus)
        fileio.write_umatrix(umatrix, paths.umatrix)


def epoch_schedules(cfg: TrainConfig, epoch: int) -> EpochState:
    """Radius and scale in force during one epoch of a resolved config."""
    return EpochState(
        epoch=epoch,
        radius=schedule(cfg.radius0, cfg.radiusN, cfg.radius_cooling,
                        epoch, cfg.n_epochs),
        scale=schedule(cfg.scale0, cfg.scaleN, cfg.scale_cooling,
                       epoch, cfg.n_epochs),
    )


def train_one_epoch(data: Dataset, cb: CodeBook, cfg: TrainConfig, epoch: int,
                    compute_umatrix_flag: bool = False, workers: int = 1):
    """One epoch against a resolved config.

    Returns (updated CodeBook, bmus (n,2) int32 [row, col], UMatrix or None).
    The BMU table reflects the search against the codebook entering the
    epoch; the returned codebook is the post-update one.
    """
    check_kernel_data(cfg.kernel, data)
    state = epoch_schedules(cfg, epoch)
    bmu_flat, _, acc = search_accumulate(
        data, cb, state.radius, cfg.influence_cutoff, cfg.map_type,
        cfg.kernel, workers)
    new_cb = CodeBook(cb.n_columns, cb.n_rows, cb.n_dimensions,
                      blend(cb.weights, acc, state.scale))
    u = compute_umatrix(new_cb, cfg.map_type) if compute_umatrix_flag else None
    return new_cb, _to_coords(bmu_flat, cb.n_columns), u


def quantization_error(data: Dataset, cb: CodeBook, workers: int = 1) -> float:
    """Mean Euclidean distance from instances to their BMUs."""
    kernel = Kernel.SPARSE if isinstance(data, SparseDataset) \
        else Kernel.DENSE_BLOCKED
    _, qe_sum, _ = search_accumulate(
        data, cb, 1.0, 0.0, MapType.PLANAR, kernel, workers,
        with_accumulators=False)
    return qe_sum / max(data.n_vectors, 1)


ProgressFn = Callable[[EpochState, float], None]


def train(data: Dataset, cfg: TrainConfig,
          sinks: Optional[FileSinks] = None, *,
          workers: int = 1,
          initial_codebook: Optional[CodeBook] = None,
          progress: Optional[ProgressFn] = None):
    """Run the full training loop.

    Resolves defaults, initializes the codebook, runs every epoch, writes
    interim artifacts per the snapshot level and the final three artifacts
    when sinks are given. Returns (CodeBook, bmus, UMatrix) where the BMU
    table and quantization error are recomputed against the final codebook.
    """
    cfg = resolve_defaults(cfg)
    check_kernel_data(cfg.kernel, data)
    cb = init_codebook(cfg, data.n_dimensions,
                       initial_codebook=initial_codebook)
    n = data.n_vectors
    for epoch in range(cfg.n_epochs):
        state = epoch_schedules(cfg, epoch)
        bmu_flat, qe_sum, acc = search_accumulate(
            data, cb, state.radius, cfg.influence_cutoff, cfg.map_type,
            cfg.kernel, workers)
        cb = CodeBook(cb.n_columns, cb.n_rows, cb.n_dimensions,
                      blend(cb.weights, acc, state.scale))
        if progress is not None:
            progress(state, qe_sum / max(n, 1))
        if sinks is not None and cfg.snapshot_level >= 1:
            u = compute_umatrix(cb, cfg.map_type)
            if cfg.snapshot_level >= 2:
                sinks.interim(epoch, u, cb, _to_coords(bmu_flat, cb.n_columns))
            else:
                sinks.interim(epoch, u)
    # Final artifacts are measured against the final codebook. The naive
    # search is per-instance, so its bits cannot depend on chunking; the
    # distributed coordinator relies on that for its own final pass.
    final_kernel = Kernel.SPARSE if isinstance(data, SparseDataset) \
        else Kernel.DENSE_NAIVE
    bmu_flat, _, _ = search_accumulate(
        data, cb, 1.0, 0.0, cfg.map_type, final_kernel, workers,
        with_accumulators=False)
    bmus = _to_coords(bmu_flat, cb.n_columns)
    u = compute_umatrix(cb, cfg.map_type)
    if sinks is not None:
        sinks.final(cb, bmus, u)
    return cb, bmus, u
