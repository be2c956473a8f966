"""Zero-copy in-process access to the somkit trainer.

The caller owns every buffer: the input data is read from the caller's
storage without duplication, and the codebook, BMU, and boundary-matrix
results are written back into caller-allocated arrays. That keeps a
training call cheap enough to sit inside an interactive loop.

All heavy lifting happens inside numpy kernels, which drop the
interpreter lock while they run. Buffers must not be mutated while a
call is in flight, and at most one call may target a given codebook
buffer at a time.
"""

import numpy as np

from somkit import (Cooling, DenseDataset, FileSinks, Kernel, MapType,
                    TrainConfig, load_codebook, read_dataset, train)
from somkit.errors import InvalidConfig

__version__ = "0.1.0"

__all__ = ["ContiguityError", "ShapeError", "train_wrapper"]


class ShapeError(ValueError):
    """A caller buffer has the wrong length for the requested map."""


class ContiguityError(ValueError):
    """A caller buffer is not C-contiguous, so it cannot be shared."""


_COOLINGS = {"linear": Cooling.LINEAR, "exponential": Cooling.EXPONENTIAL}
_MAPS = {"planar": MapType.PLANAR, "toroid": MapType.TOROID}


def _buffer(name, arr, dtype, expected, expected_expr):
    if not isinstance(arr, np.ndarray):
        raise TypeError(f"{name} must be a numpy array, got {type(arr).__name__}")
    if arr.dtype != np.dtype(dtype):
        want = ("single-precision float32" if dtype is np.float32
                else np.dtype(dtype).name)
        raise TypeError(
            f"{name} must be {want}, got {arr.dtype}; convert with "
            f".astype(np.{np.dtype(dtype).name})")
    if not arr.flags["C_CONTIGUOUS"]:
        raise ContiguityError(f"{name} must be C-contiguous")
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got {arr.ndim}-D")
    if arr.size != expected:
        raise ShapeError(
            f"{name} has {arr.size} elements, expected {expected_expr} "
            f"= {expected}")
    return arr


def _choice(name, value, table):
    try:
        return table[str(value).lower()]
    except KeyError:
        raise InvalidConfig(
            f"{name} must be one of {sorted(table)}, got {value!r}") from None


def train_wrapper(data, n_epochs, n_som_x, n_som_y, n_dimensions, n_vectors,
                  radius0, radiusN, radius_cooling, scale0, scaleN,
                  scale_cooling, snapshot_level, kernel_type, map_type,
                  initial_codebook_path, codebook, bmus, umatrix,
                  output_prefix=None):
    """Train on caller-owned buffers and fill the outputs in place.

    data is a flattened row-major float32 array of n_vectors x
    n_dimensions values; for the sparse kernel (kernel_type 2) pass a
    file path instead and the core parses it. codebook must hold
    n_som_y*n_som_x*n_dimensions float32 values, bmus n_vectors*2 int32
    values (row, column per instance), umatrix n_som_x*n_som_y float32
    values. A zero for any radius or scale selects that parameter's
    default. Pass initial_codebook_path="" for a seeded random start.
    Snapshots (snapshot_level 1 or 2) additionally need output_prefix.
    """
    kernel = Kernel(int(kernel_type))
    cfg = TrainConfig(
        n_epochs=int(n_epochs), n_columns=int(n_som_x), n_rows=int(n_som_y),
        map_type=_choice("map_type", map_type, _MAPS), kernel=kernel,
        radius0=float(radius0), radiusN=float(radiusN),
        radius_cooling=_choice("radius_cooling", radius_cooling, _COOLINGS),
        scale0=float(scale0), scaleN=float(scaleN),
        scale_cooling=_choice("scale_cooling", scale_cooling, _COOLINGS),
        snapshot_level=int(snapshot_level))

    n_nodes = cfg.n_columns * cfg.n_rows
    if kernel is Kernel.SPARSE:
        dataset, fmt = read_dataset(str(data))
        if fmt != "sparse":
            raise InvalidConfig(
                f"sparse kernel needs a sparse input file, {data!r} is {fmt}")
        if dataset.n_vectors != int(n_vectors):
            raise ShapeError(
                f"{data!r} holds {dataset.n_vectors} instances, expected "
                f"n_vectors = {int(n_vectors)}")
    else:
        flat = _buffer("data", data, np.float32,
                       int(n_vectors) * int(n_dimensions),
                       "n_vectors*n_dimensions")
        # reshape keeps the caller's storage; nothing is copied
        dataset = DenseDataset(values=flat.reshape(int(n_vectors),
                                                   int(n_dimensions)))

    _buffer("codebook", codebook, np.float32,
            n_nodes * int(n_dimensions), "n_som_y*n_som_x*n_dimensions")
    _buffer("bmus", bmus, np.int32, int(n_vectors) * 2, "n_vectors*2")
    _buffer("umatrix", umatrix, np.float32, n_nodes, "n_som_x*n_som_y")

    initial = None
    if initial_codebook_path:
        initial = load_codebook(str(initial_codebook_path))

    sinks = None
    if cfg.snapshot_level > 0:
        if not output_prefix:
            raise InvalidConfig("snapshot_level > 0 needs output_prefix")
        sinks = FileSinks(str(output_prefix))
    elif output_prefix:
        sinks = FileSinks(str(output_prefix))

    cb, bmu_table, u = train(dataset, cfg, sinks=sinks,
                             initial_codebook=initial)
    codebook[:] = cb.weights.reshape(-1)
    bmus[:] = bmu_table.reshape(-1)
    umatrix[:] = u.heights.reshape(-1)
