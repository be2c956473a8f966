import numpy as np
import pytest

from somkit import errors
from somkit.fileio import DenseDataset, SparseDataset
from somkit.grid import MapType
from somkit.kernels import (Accumulators, Kernel, accumulate, blend,
                            bmu_search_blocked, bmu_search_naive,
                            bmu_search_sparse, epoch_kernel,
                            search_accumulate)
from somkit.train import CodeBook


def make_cb(n_x, n_y, d, seed=1):
    rng = np.random.default_rng(seed)
    return CodeBook(n_columns=n_x, n_rows=n_y, n_dimensions=d,
                    weights=rng.random((n_x * n_y, d), dtype=np.float32))


def make_dense(n, d, seed=2):
    rng = np.random.default_rng(seed)
    return DenseDataset(values=rng.random((n, d), dtype=np.float32))


def sparsify(dense):
    """CSR view of a dense dataset, zeros dropped."""
    vals = dense.values
    offsets = [0]
    cols, data = [], []
    for row in vals:
        nz = np.flatnonzero(row)
        cols.extend(int(c) for c in nz)
        data.extend(float(row[c]) for c in nz)
        offsets.append(len(cols))
    return SparseDataset(n_dimensions=vals.shape[1],
                         row_offsets=np.array(offsets, dtype=np.int64),
                         col_indices=np.array(cols, dtype=np.int32),
                         values=np.array(data, dtype=np.float32))


def test_bmu_hand_case():
    # two nodes; (0.4, 0.4) is nearer the origin node
    cb = CodeBook(n_columns=2, n_rows=1, n_dimensions=2,
                  weights=np.array([[0, 0], [1, 1]], dtype=np.float32))
    data = DenseDataset(values=np.array([[0.4, 0.4], [0.6, 0.6], [0.1, 0.0]],
                                        dtype=np.float32))
    for search in (bmu_search_naive,
                   bmu_search_blocked,
                   lambda d, c: bmu_search_sparse(sparsify(d), c)):
        got = search(data, cb)
        assert got.tolist() == [[0, 0], [0, 1], [0, 0]]


def test_bmu_tie_breaks_to_lowest_flat_index():
    # nodes 1 and 3 are identical; ties must resolve to index 1
    w = np.array([[9, 9], [0.5, 0.5], [8, 8], [0.5, 0.5]], dtype=np.float32)
    cb = CodeBook(n_columns=2, n_rows=2, n_dimensions=2, weights=w)
    data = DenseDataset(values=np.array([[0.5, 0.5]], dtype=np.float32))
    for got in (bmu_search_naive(data, cb),
                bmu_search_blocked(data, cb),
                bmu_search_sparse(sparsify(data), cb)):
        assert got.tolist() == [[0, 1]]


@pytest.mark.parametrize("n,d,n_x,n_y", [(17, 3, 4, 3), (100, 16, 9, 7),
                                         (257, 5, 6, 6), (40, 1, 3, 2)])
def test_three_searches_agree(n, d, n_x, n_y):
    data = make_dense(n, d, seed=n)
    cb = make_cb(n_x, n_y, d, seed=d)
    naive = bmu_search_naive(data, cb)
    blocked = bmu_search_blocked(data, cb)
    sparse = bmu_search_sparse(sparsify(data), cb)
    assert np.array_equal(naive, blocked)
    assert np.array_equal(naive, sparse)


def test_blocked_block_size_does_not_change_bmus():
    data = make_dense(300, 8)
    cb = make_cb(10, 10, 8)
    base = bmu_search_blocked(data, cb)
    for bs in (1, 7, 64, 1000):
        assert np.array_equal(base, bmu_search_blocked(data, cb,
                                                       block_size=bs))


def test_search_dimension_mismatch():
    data = make_dense(5, 3)
    cb = make_cb(2, 2, 4)
    with pytest.raises(errors.DimensionMismatch):
        bmu_search_naive(data, cb)
    with pytest.raises(errors.DimensionMismatch):
        bmu_search_blocked(data, cb)
    with pytest.raises(errors.DimensionMismatch):
        bmu_search_sparse(sparsify(data), cb)


def test_search_wrong_dataset_kind():
    data = make_dense(5, 3)
    cb = make_cb(2, 2, 3)
    with pytest.raises(errors.KernelDataMismatch):
        bmu_search_naive(sparsify(data), cb)
    with pytest.raises(errors.KernelDataMismatch):
        bmu_search_sparse(data, cb)


# ------------------------------------------------------------ accumulate

def test_accumulate_dense_sparse_agree():
    data = make_dense(50, 6)
    cb = make_cb(4, 4, 6)
    bmus = bmu_search_naive(data, cb)
    a = accumulate(data, bmus, 2.0, 0.0, MapType.PLANAR, 4, 4)
    b = accumulate(sparsify(data), bmus, 2.0, 0.0, MapType.PLANAR, 4, 4)
    assert np.allclose(a.numerators, b.numerators, rtol=1e-12)
    assert np.allclose(a.denominators, b.denominators, rtol=1e-12)


def test_tiny_radius_with_cutoff_keeps_only_bmu():
    # radius so small every non-BMU influence is below the cutoff
    data = make_dense(30, 3)
    cb = make_cb(5, 5, 3)
    bmus = bmu_search_naive(data, cb)
    acc = accumulate(data, bmus, 0.1, 1e-3, MapType.PLANAR, 5, 5)
    flat = bmus[:, 0] * 5 + bmus[:, 1]
    x64 = data.values.astype(np.float64)
    for j in range(25):
        members = flat == j
        assert acc.denominators[j] == pytest.approx(members.sum())
        if members.any():
            assert np.allclose(acc.numerators[j], x64[members].sum(axis=0))


def test_cutoff_zero_includes_every_node():
    data = make_dense(10, 2)
    cb = make_cb(6, 6, 2)
    bmus = bmu_search_naive(data, cb)
    acc = accumulate(data, bmus, 0.05, 0.0, MapType.PLANAR, 6, 6)
    # far nodes get astronomically small but strictly positive weight
    assert (acc.denominators > 0).all()


def test_cutoff_thresholds_small_influences():
    data = make_dense(10, 2)
    cb = make_cb(6, 6, 2)
    bmus = bmu_search_naive(data, cb)
    acc = accumulate(data, bmus, 0.05, 1e-3, MapType.PLANAR, 6, 6)
    assert (acc.denominators == 0).any()


# ----------------------------------------------------------------- blend

def test_blend_leaves_untouched_rows_bit_identical():
    rng = np.random.default_rng(3)
    w = rng.random((8, 4), dtype=np.float32)
    acc = Accumulators.zeros(8, 4)
    acc.numerators[2] = [4.0, 4.0, 4.0, 4.0]
    acc.denominators[2] = 2.0
    out = blend(w, acc, 0.7)
    untouched = [i for i in range(8) if i != 2]
    assert out[untouched].tobytes() == w[untouched].tobytes()
    want = (1 - 0.7) * w[2].astype(np.float64) + 0.7 * 2.0
    assert np.allclose(out[2], want.astype(np.float32))


def test_blend_scale_one_replaces_scale_zero_keeps():
    rng = np.random.default_rng(4)
    w = rng.random((4, 2), dtype=np.float32)
    acc = Accumulators.zeros(4, 2)
    acc.numerators[:] = 1.0
    acc.denominators[:] = 2.0
    replaced = blend(w, acc, 1.0)
    kept = blend(w, acc, 0.0)
    assert np.allclose(replaced, 0.5)
    assert kept.tobytes() == w.tobytes()


def test_accumulators_merge_adds():
    a = Accumulators.zeros(3, 2)
    b = Accumulators.zeros(3, 2)
    a.numerators[0] = [1, 2]
    b.numerators[0] = [10, 20]
    a.denominators[1] = 5
    b.denominators[1] = 7
    a.merge(b)
    assert a.numerators[0].tolist() == [11, 22]
    assert a.denominators[1] == 12


# ----------------------------------------------- worker-count invariance

@pytest.mark.parametrize("kernel", [Kernel.DENSE_NAIVE, Kernel.DENSE_BLOCKED,
                                    Kernel.SPARSE])
def test_search_accumulate_bitwise_across_worker_counts(kernel):
    if kernel is Kernel.SPARSE:
        data = sparsify(make_dense(700, 9))
    else:
        data = make_dense(700, 9)
    cb = make_cb(7, 6, 9)
    base = None
    for workers in (1, 2, 4, 8):
        bmus, qe, acc = search_accumulate(data, cb, 2.5, 1e-3,
                                          MapType.TOROID, kernel, workers)
        cur = (bmus.tobytes(), qe, acc.numerators.tobytes(),
               acc.denominators.tobytes())
        if base is None:
            base = cur
        else:
            assert cur == base, f"workers={workers} changed the bits"


def test_epoch_kernel_returns_updated_codebook():
    data = make_dense(80, 5)
    cb = make_cb(5, 4, 5)
    bmus, new_cb = epoch_kernel(data, cb, 2.0, 0.5, 1e-3,
                                MapType.PLANAR, Kernel.DENSE_BLOCKED)
    assert bmus.shape == (80, 2)
    assert new_cb.weights.shape == cb.weights.shape
    assert new_cb.weights.dtype == np.float32
    assert not np.array_equal(new_cb.weights, cb.weights)
    # input codebook object must not be mutated
    assert make_cb(5, 4, 5).weights.tobytes() == cb.weights.tobytes()


def test_epoch_kernel_identical_across_kernels():
    data = make_dense(120, 7)
    cb = make_cb(6, 5, 7)
    results = {}
    for kernel in (Kernel.DENSE_NAIVE, Kernel.DENSE_BLOCKED, Kernel.SPARSE):
        d = sparsify(data) if kernel is Kernel.SPARSE else data
        bmus, ncb = epoch_kernel(d, cb, 1.7, 0.3, 1e-3,
                                 MapType.PLANAR, kernel)
        results[kernel] = (bmus, ncb.weights)
    ref_bmus, ref_w = results[Kernel.DENSE_NAIVE]
    for kernel, (bmus, w) in results.items():
        assert np.array_equal(bmus, ref_bmus), kernel
        assert np.allclose(w, ref_w, rtol=1e-5, atol=1e-7), kernel
