"""BMU search and batch-update accumulation kernels.

Three interchangeable kernels realize the same math. The naive dense kernel
evaluates every instance-node distance directly. The blocked dense kernel
computes squared distances for a whole block of instances at once through
the norms identity d2(x, w) = |x|^2 - 2 x.w + |w|^2, turning the search into
one matrix product per block. The sparse kernel evaluates the same identity
touching only the nonzero entries of each instance, so its work grows with
nnz * nodes instead of n * d * nodes.

Determinism contract: for a fixed dataset, codebook, and configuration, the
output is bit-identical for every worker count. Three rules make this hold:

* instances are processed in fixed-size chunks that never depend on the
  worker count, and chunk results are folded in chunk-index order;
* every floating-point reduction runs in double precision with a fixed
  association (per chunk, then across chunks in order);
* BLAS thread pools are pinned to one thread inside the parallel region, so
  identically shaped matrix products are bitwise reproducible no matter how
  chunks land on workers. (The pin also applies to a single-worker run; a
  1-worker run therefore does not exploit BLAS-internal threading.)

Distances are always computed in double precision even though storage is
single precision: the three kernels use algebraically different formulas,
and double precision pushes their disagreement to ~1e-15 relative, far below
any realistic argmin tie gap, which is what makes the "identical BmuTable
across kernels" contract hold. Exact ties break toward the lowest flat node
index (numpy's argmin already picks the first minimum).
"""

from __future__ import annotations

from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from typing import Callable, Optional, TYPE_CHECKING

import numpy as np
from threadpoolctl import threadpool_limits

from . import errors
from .fileio import Dataset, DenseDataset, SparseDataset
from .grid import MapType

if TYPE_CHECKING:
    from .train import CodeBook


class Kernel(IntEnum):
    DENSE_NAIVE = 0
    DENSE_BLOCKED = 1
    SPARSE = 2


DEFAULT_BLOCK_SIZE = 256
DEFAULT_CUTOFF = 1e-3

# Scheduling granule for the data-parallel phase. Fixed, never derived from
# the worker count: chunk boundaries are part of the numeric result.
_CHUNK = 256

# Above this node count the per-epoch node-to-node influence table would
# outgrow its usefulness; chunks then compute their own neighborhood rows.
_H_TABLE_MAX_NODES = 3000


@dataclass
class Accumulators:
    """Batch-update sums: numerators N_j (per node, per dimension) and
    denominators D_j (per node), kept in double precision."""

    numerators: np.ndarray    # (n_nodes, n_dimensions) float64
    denominators: np.ndarray  # (n_nodes,) float64

    @classmethod
    def zeros(cls, n_nodes: int, n_dimensions: int) -> "Accumulators":
        return cls(np.zeros((n_nodes, n_dimensions), dtype=np.float64),
                   np.zeros(n_nodes, dtype=np.float64))

    def merge(self, other: "Accumulators") -> None:
        self.numerators += other.numerators
        self.denominators += other.denominators


# ------------------------------------------------------------ grid geometry

@lru_cache(maxsize=8)
def _node_coords(n_som_x: int, n_som_y: int) -> tuple[np.ndarray, np.ndarray]:
    """(cols, rows) int64 arrays over flat row-major node order."""
    idx = np.arange(n_som_x * n_som_y, dtype=np.int64)
    rows, cols = np.divmod(idx, n_som_x)
    rows.flags.writeable = False
    cols.flags.writeable = False
    return cols, rows


@lru_cache(maxsize=4)
def _grid_distance_table(n_som_x: int, n_som_y: int,
                         map_type: MapType) -> Optional[np.ndarray]:
    """Node-to-node grid distances, or None when the map is too large."""
    n_nodes = n_som_x * n_som_y
    if n_nodes > _H_TABLE_MAX_NODES:
        return None
    cols, rows = _node_coords(n_som_x, n_som_y)
    dx = np.abs(cols[:, None] - cols[None, :]).astype(np.float64)
    dy = np.abs(rows[:, None] - rows[None, :]).astype(np.float64)
    if map_type is MapType.TOROID:
        np.minimum(dx, n_som_x - dx, out=dx)
        np.minimum(dy, n_som_y - dy, out=dy)
    table = np.hypot(dx, dy)
    table.flags.writeable = False
    return table


def _h_rows_direct(bmu_idx: np.ndarray, radius: float, map_type: MapType,
                   n_som_x: int, n_som_y: int) -> np.ndarray:
    """Neighborhood rows exp(-dist/radius) for a batch of BMUs, computed
    from coordinates (fallback for maps without a distance table)."""
    cols, rows = _node_coords(n_som_x, n_som_y)
    dx = np.abs(cols[bmu_idx][:, None] - cols[None, :]).astype(np.float64)
    dy = np.abs(rows[bmu_idx][:, None] - rows[None, :]).astype(np.float64)
    if map_type is MapType.TOROID:
        np.minimum(dx, n_som_x - dx, out=dx)
        np.minimum(dy, n_som_y - dy, out=dy)
    d = np.hypot(dx, dy)
    d /= -radius
    return np.exp(d, out=d)


def _make_h_provider(radius: float, cutoff: float, map_type: MapType,
                     n_som_x: int, n_som_y: int) -> Callable[[np.ndarray], np.ndarray]:
    """Returns a function mapping a chunk's BMU indices to its (chunk x
    nodes) influence matrix, already thresholded at the cutoff."""
    table = _grid_distance_table(n_som_x, n_som_y, map_type)
    h_table = None
    if table is not None:
        h_table = np.exp(table / -radius)

    def provider(bmu_idx: np.ndarray) -> np.ndarray:
        if h_table is not None:
            h = h_table[bmu_idx].copy()
        else:
            h = _h_rows_direct(bmu_idx, radius, map_type, n_som_x, n_som_y)
        if cutoff > 0.0:
            h[h < cutoff] = 0.0
        return h

    return provider


# ------------------------------------------------------------- chunk driver

def _chunk_ranges(n: int, size: int) -> list[tuple[int, int]]:
    return [(s, min(s + size, n)) for s in range(0, max(n, 0), size)]


def _run_chunks(jobs: list, workers: int, consume) -> None:
    """Execute zero-arg jobs, feeding results to ``consume`` in job order.

    Submission is bounded (workers + 2 in flight) so memory stays at
    O(workers) chunk results regardless of dataset size.
    """
    with threadpool_limits(limits=1):
        if workers <= 1 or len(jobs) <= 1:
            for job in jobs:
                consume(job())
            return
        with ThreadPoolExecutor(max_workers=workers) as pool:
            inflight: deque = deque()
            for job in jobs:
                inflight.append(pool.submit(job))
                if len(inflight) > workers + 2:
                    consume(inflight.popleft().result())
            while inflight:
                consume(inflight.popleft().result())


# ------------------------------------------------------------- chunk kernels

def _search_chunk_naive(x64: np.ndarray, w64: np.ndarray):
    m = x64.shape[0]
    idx = np.empty(m, dtype=np.int64)
    d2min = np.empty(m, dtype=np.float64)
    for i in range(m):
        diff = w64 - x64[i]
        d2 = np.einsum("jd,jd->j", diff, diff)
        k = int(np.argmin(d2))
        idx[i] = k
        d2min[i] = d2[k]
    return idx, d2min


def _search_chunk_blocked(x64: np.ndarray, w64: np.ndarray, w2: np.ndarray):
    d2 = x64 @ w64.T
    d2 *= -2.0
    d2 += np.einsum("id,id->i", x64, x64)[:, None]
    d2 += w2[None, :]
    # The identity can dip below zero by rounding; order is unaffected but
    # reported distances must stay nonnegative.
    np.maximum(d2, 0.0, out=d2)
    idx = np.argmin(d2, axis=1)
    d2min = np.take_along_axis(d2, idx[:, None], axis=1)[:, 0]
    return idx.astype(np.int64), d2min


def _search_chunk_sparse(data: SparseDataset, first: int, last: int,
                         w64: np.ndarray, w2: np.ndarray, x2: np.ndarray):
    m = last - first
    n_nodes = w64.shape[0]
    dots = np.zeros((m, n_nodes), dtype=np.float64)
    for i in range(m):
        cols, vals = data.row(first + i)
        if len(cols):
            dots[i] = vals.astype(np.float64) @ w64[:, cols].T
    d2 = x2[first:last, None] - 2.0 * dots
    d2 += w2[None, :]
    np.maximum(d2, 0.0, out=d2)
    idx = np.argmin(d2, axis=1)
    d2min = np.take_along_axis(d2, idx[:, None], axis=1)[:, 0]
    return idx.astype(np.int64), d2min


def _accumulate_chunk_dense(x64: np.ndarray, h: np.ndarray):
    return h.T @ x64, h.sum(axis=0)


def _accumulate_chunk_sparse(data: SparseDataset, first: int, last: int,
                             h: np.ndarray, n_dimensions: int):
    n_nodes = h.shape[1]
    num = np.zeros((n_nodes, n_dimensions), dtype=np.float64)
    den = h.sum(axis=0)
    for i in range(last - first):
        cols, vals = data.row(first + i)
        if not len(cols):
            continue
        active = np.flatnonzero(h[i])
        if len(active):
            num[np.ix_(active, cols)] += np.outer(h[i, active],
                                                  vals.astype(np.float64))
    return num, den


# ------------------------------------------------------------- public search

def _weights64(cb) -> np.ndarray:
    return cb.weights.astype(np.float64)


def _check_dims(data: Dataset, cb) -> None:
    if data.n_dimensions != cb.n_dimensions:
        raise errors.DimensionMismatch(
            f"data has {data.n_dimensions} dimensions, codebook {cb.n_dimensions}")


def _to_coords(bmu_idx: np.ndarray, n_som_x: int) -> np.ndarray:
    """Flat node indices to a (n, 2) int32 table of [row, col]."""
    out = np.empty((len(bmu_idx), 2), dtype=np.int32)
    out[:, 0] = bmu_idx // n_som_x
    out[:, 1] = bmu_idx % n_som_x
    return out


def bmu_search_naive(data: DenseDataset, cb) -> np.ndarray:
    """Per-instance argmin of squared Euclidean distance over all nodes.

    Returns a (n_vectors, 2) int32 table of [row, col] per instance.
    """
    _check_dims(data, cb)
    if not isinstance(data, DenseDataset):
        raise errors.KernelDataMismatch("dense kernel requires dense data")
    w64 = _weights64(cb)
    idx, _ = _search_chunk_naive(data.values.astype(np.float64), w64)
    return _to_coords(idx, cb.n_columns)


def bmu_search_blocked(data: DenseDataset, cb,
                       block_size: int = DEFAULT_BLOCK_SIZE) -> np.ndarray:
    """Same result as the naive search, computed block-at-a-time via the
    norms identity. Blocking is a pure scheduling choice."""
    _check_dims(data, cb)
    if not isinstance(data, DenseDataset):
        raise errors.KernelDataMismatch("dense kernel requires dense data")
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    w64 = _weights64(cb)
    w2 = np.einsum("jd,jd->j", w64, w64)
    parts = []
    for a, b in _chunk_ranges(data.n_vectors, block_size):
        idx, _ = _search_chunk_blocked(
            data.values[a:b].astype(np.float64), w64, w2)
        parts.append(idx)
    idx = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    return _to_coords(idx, cb.n_columns)


def bmu_search_sparse(data: SparseDataset, cb) -> np.ndarray:
    """Same result as the naive search on densified data, touching only
    nonzero entries."""
    _check_dims(data, cb)
    if not isinstance(data, SparseDataset):
        raise errors.KernelDataMismatch("sparse kernel requires sparse data")
    w64 = _weights64(cb)
    w2 = np.einsum("jd,jd->j", w64, w64)
    x2 = _sparse_row_norms(data)
    parts = []
    for a, b in _chunk_ranges(data.n_vectors, _CHUNK):
        idx, _ = _search_chunk_sparse(data, a, b, w64, w2, x2)
        parts.append(idx)
    idx = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    return _to_coords(idx, cb.n_columns)


def _sparse_row_norms(data: SparseDataset) -> np.ndarray:
    v64 = data.values.astype(np.float64)
    sq = v64 * v64
    out = np.zeros(data.n_vectors, dtype=np.float64)
    np.add.at(out, np.repeat(np.arange(data.n_vectors),
                             np.diff(data.row_offsets)), sq)
    return out


# --------------------------------------------------------------- accumulate

def accumulate(data: Dataset, bmus: np.ndarray, radius: float, cutoff: float,
               map_type: MapType, n_som_x: int, n_som_y: int,
               workers: int = 1) -> Accumulators:
    """Batch-update sums over the whole dataset for precomputed BMUs.

    For every instance t and node j with influence h >= cutoff:
    D_j += h and N_j += h * x(t), h = exp(-grid_distance(bmu_t, j)/radius).
    Parallel over fixed instance chunks, folded in chunk order.
    """
    if len(bmus) != data.n_vectors:
        raise errors.DimensionMismatch(
            f"BMU table has {len(bmus)} rows, data {data.n_vectors}")
    n_nodes = n_som_x * n_som_y
    bmu_flat = (bmus[:, 0].astype(np.int64) * n_som_x
                + bmus[:, 1].astype(np.int64))
    provider = _make_h_provider(radius, cutoff, map_type, n_som_x, n_som_y)
    sparse = isinstance(data, SparseDataset)

    def job(a: int, b: int):
        h = provider(bmu_flat[a:b])
        if sparse:
            return _accumulate_chunk_sparse(data, a, b, h, data.n_dimensions)
        return _accumulate_chunk_dense(data.values[a:b].astype(np.float64), h)

    total = Accumulators.zeros(n_nodes, data.n_dimensions)

    def consume(result):
        num, den = result
        total.numerators += num
        total.denominators += den

    jobs = [(lambda a=a, b=b: job(a, b))
            for a, b in _chunk_ranges(data.n_vectors, _CHUNK)]
    _run_chunks(jobs, workers, consume)
    return total


# -------------------------------------------------------------- epoch fused

def search_accumulate(data: Dataset, cb, radius: float, cutoff: float,
                      map_type: MapType, kernel: Kernel, workers: int = 1,
                      with_accumulators: bool = True):
    """One fused pass over the data: BMU search, quantization-error sum, and
    (optionally) batch-update accumulation.

    Returns (bmu_flat int64 array, qe_sum float, Accumulators or None).
    This is the per-epoch workhorse shared by local training and the
    distributed workers; the same chunking drives both, which is what makes
    a 1-worker distributed run bit-identical to local training.
    """
    _check_dims(data, cb)
    kernel = Kernel(kernel)
    sparse_data = isinstance(data, SparseDataset)
    if (kernel is Kernel.SPARSE) != sparse_data:
        raise errors.KernelDataMismatch(
            f"kernel {kernel.name} cannot run on "
            f"{'sparse' if sparse_data else 'dense'} data")

    n = data.n_vectors
    n_nodes = cb.n_columns * cb.n_rows
    w64 = _weights64(cb)
    w2 = None
    x2 = None
    if kernel is Kernel.DENSE_BLOCKED or kernel is Kernel.SPARSE:
        w2 = np.einsum("jd,jd->j", w64, w64)
    if kernel is Kernel.SPARSE:
        x2 = _sparse_row_norms(data)
    provider = (_make_h_provider(radius, cutoff, map_type,
                                 cb.n_columns, cb.n_rows)
                if with_accumulators else None)

    def job(a: int, b: int):
        x64 = None
        if kernel is Kernel.SPARSE:
            idx, d2min = _search_chunk_sparse(data, a, b, w64, w2, x2)
        else:
            x64 = data.values[a:b].astype(np.float64)
            if kernel is Kernel.DENSE_BLOCKED:
                idx, d2min = _search_chunk_blocked(x64, w64, w2)
            else:
                idx, d2min = _search_chunk_naive(x64, w64)
        qe = float(np.sqrt(d2min).sum())
        if provider is None:
            return a, idx, qe, None, None
        h = provider(idx)
        if kernel is Kernel.SPARSE:
            num, den = _accumulate_chunk_sparse(data, a, b, h,
                                                data.n_dimensions)
        else:
            num, den = _accumulate_chunk_dense(x64, h)
        return a, idx, qe, num, den

    bmu_flat = np.empty(n, dtype=np.int64)
    qe_sum = 0.0
    total = Accumulators.zeros(n_nodes, data.n_dimensions) \
        if with_accumulators else None

    def consume(result):
        nonlocal qe_sum
        a, idx, qe, num, den = result
        bmu_flat[a:a + len(idx)] = idx
        qe_sum += qe
        if total is not None:
            total.numerators += num
            total.denominators += den

    jobs = [(lambda a=a, b=b: job(a, b))
            for a, b in _chunk_ranges(n, _CHUNK)]
    _run_chunks(jobs, workers, consume)
    return bmu_flat, qe_sum, total


def blend(weights: np.ndarray, acc: Accumulators, scale: float) -> np.ndarray:
    """Training update: w_j <- (1-scale)*w_j + scale*(N_j/D_j) where D_j > 0.

    Nodes with D_j = 0 keep their previous weights bit-identically. The blend
    runs in double precision and rounds once to single precision.
    """
    out = weights.copy()
    mask = acc.denominators > 0.0
    if mask.any():
        upd = acc.numerators[mask] / acc.denominators[mask][:, None]
        w64 = weights[mask].astype(np.float64)
        out[mask] = ((1.0 - scale) * w64 + scale * upd).astype(np.float32)
    return out


def epoch_kernel(data: Dataset, cb, radius: float, scale: float, cutoff: float,
                 map_type: MapType, kernel: Kernel, workers: int = 1):
    """Full epoch: search + accumulate + blend.

    Returns (bmus (n,2) int32 table, updated CodeBook). Output is
    bit-identical for every worker count.
    """
    from .train import CodeBook
    bmu_flat, _, acc = search_accumulate(
        data, cb, radius, cutoff, map_type, kernel, workers)
    new_weights = blend(cb.weights, acc, scale)
    new_cb = CodeBook(n_columns=cb.n_columns, n_rows=cb.n_rows,
                      n_dimensions=cb.n_dimensions, weights=new_weights)
    return _to_coords(bmu_flat, cb.n_columns), new_cb
