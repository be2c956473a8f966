"""Desk-scale benchmark harness: kernel timings, sparse-versus-dense memory
accounting, and worker-count scaling, emitted as CSV.

Memory is accounted in allocated element counts, not resident bytes: the
interesting claims are ratios, and element counts are portable and
deterministic. A configuration whose element estimate exceeds the budget is
skipped with a notice instead of crashing the sweep.
"""

from __future__ import annotations

import statistics
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import errors
from .fileio import DenseDataset, SparseDataset
from .grid import MapType
from .kernels import Kernel
from .train import TrainConfig, train

CSV_HEADER = "kernel,n,d,map,workers,median_seconds,elements_allocated"


@dataclass
class BenchSpec:
    n_vectors: list[int] = field(default_factory=lambda: [1000])
    n_dimensions: int = 100
    density: float = 0.05
    n_columns: int = 20
    n_rows: int = 20
    kernels: list[Kernel] = field(default_factory=lambda: [Kernel.DENSE_BLOCKED])
    worker_counts: list[int] = field(default_factory=lambda: [1])
    repetitions: int = 3
    seed: int = 1
    epochs: int = 3
    budget_elements: int = 200_000_000

    def __post_init__(self):
        if self.repetitions < 3:
            raise errors.InvalidConfig("repetitions must be >= 3 (median)")
        if not (0.0 < self.density <= 1.0):
            raise errors.InvalidConfig("density must be in (0, 1]")


@dataclass
class BenchRow:
    kernel: Kernel
    n: int
    d: int
    map_label: str
    workers: int
    median_seconds: float
    elements_allocated: int

    def csv(self) -> str:
        return (f"{int(self.kernel)},{self.n},{self.d},{self.map_label},"
                f"{self.workers},{self.median_seconds:.6f},"
                f"{self.elements_allocated}")


@dataclass
class BenchResult:
    rows: list[BenchRow]

    def speedups(self) -> dict[tuple[int, int], dict[int, float]]:
        """Per (kernel, n): worker count -> speedup over the 1-worker row."""
        out: dict[tuple[int, int], dict[int, float]] = {}
        for row in self.rows:
            key = (int(row.kernel), row.n)
            out.setdefault(key, {})[row.workers] = row.median_seconds
        ratios = {}
        for key, times in out.items():
            if 1 not in times:
                continue
            base = times[1]
            ratios[key] = {w: base / t for w, t in times.items()}
        return ratios


def gen_random_dense(n: int, d: int, seed: int) -> DenseDataset:
    """Uniform [0,1) dense data, deterministic per seed."""
    rng = np.random.default_rng(seed)
    return DenseDataset(rng.random((n, d), dtype=np.float32))


def gen_random_sparse(n: int, d: int, density: float, seed: int) -> SparseDataset:
    """Each row gets round(density*d) nonzeros at distinct random indices."""
    if not (0.0 < density <= 1.0):
        raise errors.InvalidConfig("density must be in (0, 1]")
    rng = np.random.default_rng(seed)
    k = max(int(round(density * d)), 0)
    offsets = np.arange(n + 1, dtype=np.int64) * k
    cols = np.empty(n * k, dtype=np.int32)
    for i in range(n):
        cols[i * k:(i + 1) * k] = np.sort(
            rng.choice(d, size=k, replace=False)).astype(np.int32)
    values = rng.random(n * k, dtype=np.float32)
    return SparseDataset(d, offsets, cols, values)


def _element_estimate(data, n_nodes: int, d: int) -> int:
    # dataset + one codebook + one set of update accumulators
    return data.element_count() + n_nodes * d + n_nodes * (d + 1)


def run_bench(spec: BenchSpec, csv_path: Optional[str] = None) -> BenchResult:
    """Time every (kernel, n, workers) configuration; median of repetitions.

    Configurations are run serially to avoid interference. Oversized ones
    raise BudgetExceeded internally and are reported and skipped.
    """
    rows: list[BenchRow] = []
    n_nodes = spec.n_columns * spec.n_rows
    map_label = f"{spec.n_columns}x{spec.n_rows}"
    for kernel in spec.kernels:
        kernel = Kernel(kernel)
        for n in spec.n_vectors:
            if kernel is Kernel.SPARSE:
                data = gen_random_sparse(n, spec.n_dimensions, spec.density,
                                         spec.seed)
            else:
                data = gen_random_dense(n, spec.n_dimensions, spec.seed)
            elements = _element_estimate(data, n_nodes, spec.n_dimensions)
            for workers in spec.worker_counts:
                if elements > spec.budget_elements:
                    print(f"somkit bench: skipping kernel={int(kernel)} "
                          f"n={n} workers={workers}: {elements} elements "
                          f"over budget {spec.budget_elements}",
                          file=sys.stderr)
                    continue
                cfg = TrainConfig(n_epochs=spec.epochs,
                                  n_columns=spec.n_columns,
                                  n_rows=spec.n_rows, kernel=kernel,
                                  map_type=MapType.PLANAR, seed=spec.seed)
                times = []
                for _ in range(spec.repetitions):
                    t0 = time.perf_counter()
                    train(data, cfg, sinks=None, workers=workers)
                    times.append(time.perf_counter() - t0)
                rows.append(BenchRow(kernel, n, spec.n_dimensions, map_label,
                                     workers, statistics.median(times),
                                     elements))
    result = BenchResult(rows)
    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(CSV_HEADER + "\n")
            for row in rows:
                fh.write(row.csv() + "\n")
    return result


def parse_bench_spec(path: str) -> BenchSpec:
    """Read a key=value spec file ('#' comments allowed)."""
    values: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, val = line.partition("=")
                if not sep:
                    raise errors.MalformedToken(
                        f"{path}:{no}: expected key=value, got {line!r}")
                values[key.strip()] = val.strip()
    except OSError as exc:
        raise errors.IoFailure(f"cannot read {path}: {exc}") from exc

    def ints(key: str, default: list[int]) -> list[int]:
        if key not in values:
            return default
        return [int(tok) for tok in values[key].split(",") if tok.strip()]

    try:
        spec = BenchSpec(
            n_vectors=ints("n_vectors", [1000]),
            n_dimensions=int(values.get("n_dimensions", "100")),
            density=float(values.get("density", "0.05")),
            n_columns=int(values.get("columns", "20")),
            n_rows=int(values.get("rows", "20")),
            kernels=[Kernel(k) for k in ints("kernels", [1])],
            worker_counts=ints("workers", [1]),
            repetitions=int(values.get("repetitions", "3")),
            seed=int(values.get("seed", "1")),
            epochs=int(values.get("epochs", "3")),
            budget_elements=int(values.get("budget", "200000000")),
        )
    except ValueError as exc:
        raise errors.MalformedToken(f"{path}: {exc}") from exc
    return spec


def run_bench_file(spec_path: str, csv_path: str) -> BenchResult:
    return run_bench(parse_bench_spec(spec_path), csv_path)
