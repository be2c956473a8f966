import io

import numpy as np
import pytest

from somkit import errors
from somkit.fileio import (DenseDataset, SparseDataset, detect_format,
                           load_codebook, parse_dense, parse_dense_headered,
                           parse_sparse, read_dataset, snapshot_paths,
                           write_bmus, write_codebook, write_umatrix)
from somkit.train import CodeBook
from somkit.umatrix import UMatrix

from conftest import DATA_DIR
import oracles


def S(text):
    return io.StringIO(text)


# ---------------------------------------------------------------- dense

def test_dense_golden_file():
    ds, fmt = read_dataset(str(DATA_DIR / "rgbs.txt"))
    assert fmt == "dense"
    assert isinstance(ds, DenseDataset)
    want = oracles.parse_dense_brute((DATA_DIR / "rgbs.txt").read_text())
    assert ds.values.shape == (12, 3)
    assert np.allclose(ds.values, np.array(want, dtype=np.float32))
    assert ds.values[0].tolist() == [1.0, 0.0, 0.0]


def test_dense_comment_lines_and_blanks_skipped():
    ds = parse_dense(S("# hi\n\n1 2\n  \n# mid-file note\n3 4\n"))
    assert ds.values.tolist() == [[1.0, 2.0], [3.0, 4.0]]


def test_dense_scientific_notation():
    ds = parse_dense(S("1e-3 2E+2\n-0.5 +4\n"))
    assert np.allclose(ds.values, [[0.001, 200.0], [-0.5, 4.0]])


def test_dense_ragged_row_reports_line_number():
    with pytest.raises(errors.RowWidthMismatch) as ei:
        parse_dense(S("1 2 3\n4 5\n"))
    assert "2" in str(ei.value)


def test_dense_bad_token():
    with pytest.raises(errors.NonNumericToken):
        parse_dense(S("1 2\n3 x\n"))


def test_dense_rejects_non_finite():
    for bad in ("nan", "inf", "-inf"):
        with pytest.raises(errors.NonNumericToken):
            parse_dense(S(f"1 {bad}\n"))


def test_dense_empty_input():
    with pytest.raises(errors.EmptyInput):
        parse_dense(S("# nothing here\n\n"))


def test_dense_dtype_is_float32():
    ds = parse_dense(S("0.1 0.2\n"))
    assert ds.values.dtype == np.float32


# ------------------------------------------------------------- headered

def test_headered_golden_file():
    ds, fmt = read_dataset(str(DATA_DIR / "rgbs_headered.txt"))
    assert fmt == "headered"
    dense, _ = read_dataset(str(DATA_DIR / "rgbs.txt"))
    assert np.array_equal(ds.values, dense.values)


def test_headered_header_without_space():
    ds = parse_dense_headered(S("%2\n%3\n1 2 3\n4 5 6\n"))
    assert ds.values.shape == (2, 3)


def test_headered_two_token_first_header():
    # grid-shaped count: 2 x 3 rows of width 4
    text = "% 2 3\n% 4\n" + "\n".join("1 2 3 4" for _ in range(6)) + "\n"
    ds = parse_dense_headered(S(text))
    assert ds.values.shape == (6, 4)


def test_headered_count_mismatch():
    with pytest.raises(errors.HeaderBodyMismatch):
        parse_dense_headered(S("% 3\n% 2\n1 2\n3 4\n"))


def test_headered_width_mismatch():
    with pytest.raises(errors.HeaderBodyMismatch):
        parse_dense_headered(S("% 1\n% 3\n1 2\n"))


def test_headered_data_before_headers():
    with pytest.raises(errors.MalformedHeader):
        parse_dense_headered(S("1 2\n% 1\n% 2\n"))


def test_headered_non_integer_header():
    with pytest.raises(errors.MalformedHeader):
        parse_dense_headered(S("% a\n% 2\n1 2\n"))


# --------------------------------------------------------------- sparse

def test_sparse_golden_file():
    ds, fmt = read_dataset(str(DATA_DIR / "sparse_example.txt"))
    assert fmt == "sparse"
    assert isinstance(ds, SparseDataset)
    dense = ds.densify().values
    want = np.array([[1.2, 0, 0, 3.4],
                     [0, 0.5, 0, 0],
                     [0, 0, 0, 0],
                     [2, 2, 2, 2]], dtype=np.float32)
    assert np.array_equal(dense, want)


def test_sparse_empty_line_is_zero_vector():
    ds = parse_sparse(S("0:1\n\n1:2\n"))
    assert ds.n_vectors == 3
    idx, _ = ds.row(1)
    assert idx.size == 0


def test_sparse_unsorted_indices_are_sorted_on_ingest():
    ds = parse_sparse(S("3:30 0:10 2:20\n"))
    idx, vals = ds.row(0)
    assert idx.tolist() == [0, 2, 3]
    assert vals.tolist() == [10.0, 20.0, 30.0]


def test_sparse_duplicate_index_rejected():
    with pytest.raises(errors.DuplicateIndexInRow):
        parse_sparse(S("1:2 1:3\n"))


def test_sparse_negative_index_rejected():
    with pytest.raises(errors.NegativeIndex):
        parse_sparse(S("-1:2\n"))


def test_sparse_malformed_token():
    for bad in ("1", "a:2", "1:b", "1:2:3", ":", "1:"):
        with pytest.raises((errors.MalformedToken, errors.NonNumericToken)):
            parse_sparse(S(bad + "\n"))


def test_sparse_dimension_hint():
    ds = parse_sparse(S("0:1\n"), n_dimensions_hint=10)
    assert ds.n_dimensions == 10
    with pytest.raises(errors.HintTooSmall):
        parse_sparse(S("5:1\n"), n_dimensions_hint=3)


def test_sparse_empty_text_is_single_zero_vector():
    ds = parse_sparse(S(""))
    assert ds.n_vectors == 1
    assert ds.row_offsets.tolist() == [0, 0]


def test_sparse_csr_arrays_are_consistent():
    ds = parse_sparse(S("0:1 2:3\n1:5\n\n0:7\n"))
    assert ds.row_offsets.tolist() == [0, 2, 3, 3, 4]
    assert ds.col_indices.dtype == np.int32
    assert ds.values.dtype == np.float32
    assert ds.row_offsets.dtype == np.int64


def test_sparse_element_count_is_smaller_than_dense():
    text = "\n".join(f"{i % 7}:1" for i in range(50)) + "\n"
    ds = parse_sparse(S(text))
    assert ds.element_count() < ds.densify().element_count()


# ------------------------------------------------------------ detection

def test_detect_format_on_shipped_files():
    for name, want in [("rgbs.txt", "dense"),
                       ("rgbs_headered.txt", "headered"),
                       ("sparse_example.txt", "sparse")]:
        lines = (DATA_DIR / name).read_text().splitlines()
        assert detect_format(lines) == want


def test_detect_format_ignores_leading_comments():
    assert detect_format(["# c", "", "1 2"]) == "dense"
    assert detect_format(["# c", "0:1"]) == "sparse"
    assert detect_format(["% 3", "1 2"]) == "headered"


def test_read_dataset_missing_file():
    with pytest.raises(errors.IoFailure):
        read_dataset("/nonexistent/elsewhere.txt")


# -------------------------------------------------------------- writers

def test_codebook_write_format(tmp_path):
    w = np.array([[0.5, 1.25], [2, 3], [1e-7, 123456.789]],
                 dtype=np.float32).reshape(3, 2)
    cb = CodeBook(n_columns=3, n_rows=1, n_dimensions=2, weights=w)
    p = tmp_path / "cb.wts"
    write_codebook(cb, str(p))
    raw = p.read_bytes().decode()
    assert "\r" not in raw
    lines = raw.splitlines()
    assert lines[0] == "% 1 3"
    assert lines[1] == "% 2"
    assert lines[2] == "0.5 1.25"
    assert lines[3] == "2 3"
    # %.6g formatting
    assert lines[4] == "1e-07 123457"


def test_codebook_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    w = rng.random((12, 4), dtype=np.float32)
    cb = CodeBook(n_columns=4, n_rows=3, n_dimensions=4, weights=w)
    p = tmp_path / "cb.wts"
    write_codebook(cb, str(p))
    cols, rows, got = load_codebook(str(p))
    assert (cols, rows) == (4, 3)
    # %.6g costs precision; round trip is close, not exact
    assert np.allclose(got, w, rtol=1e-5, atol=1e-8)


def test_bmus_write_format(tmp_path):
    bmus = np.array([[0, 1], [2, 3]], dtype=np.int32)
    p = tmp_path / "x.bm"
    write_bmus(bmus, str(p))
    assert p.read_text() == "% 2\n0 0 1\n1 2 3\n"


def test_umatrix_write_is_plain_matrix(tmp_path):
    u = UMatrix(n_columns=3, n_rows=2,
                heights=np.arange(6, dtype=np.float32).reshape(2, 3))
    p = tmp_path / "x.umx"
    write_umatrix(u, str(p))
    text = p.read_text()
    assert text == "0 1 2\n3 4 5\n"


def test_write_failure_raises_io_failure(tmp_path):
    u = UMatrix(n_columns=1, n_rows=1,
                heights=np.zeros((1, 1), dtype=np.float32))
    with pytest.raises(errors.IoFailure):
        write_umatrix(u, str(tmp_path / "no" / "such" / "dir" / "x.umx"))


# ---------------------------------------------------------------- paths

def test_snapshot_paths():
    final = snapshot_paths("out/run")
    assert final.codebook == "out/run.wts"
    assert final.bmus == "out/run.bm"
    assert final.umatrix == "out/run.umx"
    interim = snapshot_paths("out/run", epoch=3)
    assert interim.codebook == "out/run.3.wts"
    assert interim.bmus == "out/run.3.bm"
    assert interim.umatrix == "out/run.3.umx"
