"""Parallel batch self-organizing map training.

Dense and sparse compute kernels, deterministic multithreading (results are
bit-identical for any worker count), a coordinator/worker distributed mode
over an owned wire protocol, a command-line front-end, and plain-text
artifacts: codebook, BMU table, and U-matrix.
"""

from . import errors
from .bench import (BenchResult, BenchRow, BenchSpec, gen_random_dense,
                    gen_random_sparse, parse_bench_spec, run_bench)
from .distributed import (InprocTransport, PROTOCOL_VERSION, TcpListener,
                          coordinator_run, partition, tcp_connect, worker_run)
from .fileio import (DenseDataset, SparseDataset, detect_format, parse_dense,
                     parse_dense_headered, parse_sparse, read_dataset,
                     snapshot_paths, write_bmus, write_codebook, write_umatrix)
from .grid import GridCoord, MapType, grid_distance, neighbors, node_index
from .kernels import (Accumulators, DEFAULT_BLOCK_SIZE, DEFAULT_CUTOFF, Kernel,
                      accumulate, blend, bmu_search_blocked, bmu_search_naive,
                      bmu_search_sparse, epoch_kernel, search_accumulate)
from .train import (CodeBook, Cooling, EpochState, FileSinks, TrainConfig,
                    epoch_schedules, init_codebook, load_codebook,
                    neighborhood, quantization_error, resolve_defaults,
                    schedule, train, train_one_epoch)
from .umatrix import UMatrix, compute_umatrix

__version__ = "0.1.0"

__all__ = [
    "Accumulators", "BenchResult", "BenchRow", "BenchSpec", "CodeBook",
    "Cooling", "DEFAULT_BLOCK_SIZE", "DEFAULT_CUTOFF", "DenseDataset",
    "EpochState", "FileSinks", "GridCoord", "InprocTransport", "Kernel",
    "MapType", "PROTOCOL_VERSION", "SparseDataset", "TcpListener",
    "TrainConfig", "UMatrix", "accumulate", "blend", "bmu_search_blocked",
    "bmu_search_naive", "bmu_search_sparse", "compute_umatrix",
    "coordinator_run", "detect_format", "epoch_kernel", "epoch_schedules",
    "errors", "gen_random_dense", "gen_random_sparse", "grid_distance",
    "init_codebook", "load_codebook", "neighborhood", "neighbors",
    "node_index", "parse_bench_spec", "parse_dense", "parse_dense_headered",
    "parse_sparse", "partition", "quantization_error", "read_dataset",
    "resolve_defaults", "run_bench", "schedule", "search_accumulate",
    "snapshot_paths", "tcp_connect", "train", "train_one_epoch",
    "worker_run", "write_bmus", "write_codebook", "write_umatrix",
]
