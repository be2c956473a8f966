"""Input parsing and output artifacts.

Three input formats are accepted, all plain text, UTF-8, LF or CRLF:

* dense: one instance per line, whitespace-separated values; lines starting
  with ``#`` are comments; empty lines are skipped.
* headered dense: two ``%``-prefixed count lines (instance count, then
  dimension count) followed by a dense body.
* sparse: one instance per line of zero-based ``index:value`` tokens; an
  empty line is an all-zero instance; ``#`` comments allowed.

Three output artifacts are written, floats always with 6 significant digits,
LF line endings:

* codebook (``.wts``): ``% nSomY nSomX`` and ``% nDimensions`` headers, then
  one node per line in row-major node order.
* BMU table (``.bm``): ``% nVectors`` header, then ``index row col`` lines.
* U-matrix (``.umx``): ``nSomY`` lines of ``nSomX`` values, no header, so
  the file loads directly as a gnuplot nonuniform matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Union

import numpy as np

from . import errors


@dataclass
class DenseDataset:
    """Row-major single-precision matrix of instances."""

    values: np.ndarray  # (n_vectors, n_dimensions) float32

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError("dense values must be 2-D")

    @property
    def n_vectors(self) -> int:
        return self.values.shape[0]

    @property
    def n_dimensions(self) -> int:
        return self.values.shape[1]

    def element_count(self) -> int:
        """Allocated storage elements (for memory accounting)."""
        return int(self.values.size)


@dataclass
class SparseDataset:
    """Compressed sparse row matrix of instances.

    Within each row, column indices are strictly increasing. Storage is
    O(n_vectors + nnz), independent of n_dimensions.
    """

    n_dimensions: int
    row_offsets: np.ndarray  # (n_vectors + 1,) int64, nondecreasing, [0]=0
    col_indices: np.ndarray  # (nnz,) int32
    values: np.ndarray       # (nnz,) float32

    def __post_init__(self):
        self.row_offsets = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        self.col_indices = np.ascontiguousarray(self.col_indices, dtype=np.int32)
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)

    @property
    def n_vectors(self) -> int:
        return len(self.row_offsets) - 1

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        s, e = self.row_offsets[i], self.row_offsets[i + 1]
        return self.col_indices[s:e], self.values[s:e]

    def densify(self) -> DenseDataset:
        out = np.zeros((self.n_vectors, self.n_dimensions), dtype=np.float32)
        for i in range(self.n_vectors):
            cols, vals = self.row(i)
            out[i, cols] = vals
        return DenseDataset(out)

    def element_count(self) -> int:
        """Allocated storage elements: offsets + indices + values."""
        return int(self.row_offsets.size + self.col_indices.size + self.values.size)


Dataset = Union[DenseDataset, SparseDataset]


class SnapshotPaths(NamedTuple):
    codebook: str
    bmus: str
    umatrix: str


def snapshot_paths(prefix: str, epoch: Optional[int] = None) -> SnapshotPaths:
    """Output file names for a prefix: final, or interim for one epoch.

    The prefix must be nonempty (enforced by the command line).
    """
    stem = prefix if epoch is None else f"{prefix}.{epoch}"
    return SnapshotPaths(stem + ".wts", stem + ".bm", stem + ".umx")


# ----------------------------------------------------------------- parsing

def _read_lines(stream) -> list[str]:
    if isinstance(stream, str):
        return stream.splitlines()
    if isinstance(stream, bytes):
        return stream.decode("utf-8").splitlines()
    return stream.read().splitlines()


def _is_comment(line: str) -> bool:
    return line.lstrip().startswith("#")


def _parse_row(tokens: list[str], lineno: int) -> np.ndarray:
    try:
        row = np.array(tokens, dtype=np.float32)
    except ValueError:
        bad = next((t for t in tokens if not _is_float(t)), tokens[0])
        raise errors.NonNumericToken(
            f"line {lineno}: token {bad!r} is not a number") from None
    if not np.isfinite(row).all():
        raise errors.NonNumericToken(f"line {lineno}: non-finite value")
    return row


def _is_float(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def parse_dense(stream) -> DenseDataset:
    """Parse plain dense text in two passes (size, then fill)."""
    lines = _read_lines(stream)
    data_lines = [(no, ln.split()) for no, ln in enumerate(lines, start=1)
                  if ln.strip() and not _is_comment(ln)]
    if not data_lines:
        raise errors.EmptyInput("no data rows found")
    n_dimensions = len(data_lines[0][1])
    out = np.empty((len(data_lines), n_dimensions), dtype=np.float32)
    for i, (lineno, tokens) in enumerate(data_lines):
        if len(tokens) != n_dimensions:
            raise errors.RowWidthMismatch(
                f"line {lineno}: expected {n_dimensions} values, got {len(tokens)}")
        out[i] = _parse_row(tokens, lineno)
    return DenseDataset(out)


def _header_ints(line: str, lineno: int) -> list[int]:
    # Tolerate "%2" (no space) as well as "% 2"; trailing tokens after the
    # numbers are ignored for forward compatibility.
    body = line.lstrip()[1:].strip()
    ints: list[int] = []
    for tok in body.split():
        try:
            ints.append(int(tok))
        except ValueError:
            break
    if not ints:
        raise errors.MalformedHeader(f"line {lineno}: no count in header {line!r}")
    if any(v < 0 for v in ints):
        raise errors.MalformedHeader(f"line {lineno}: negative count in header")
    return ints


def parse_dense_headered(stream) -> DenseDataset:
    """Parse dense text with '%'-prefixed count headers.

    The first header line holds the instance count (a two-number header is
    read as a grid whose product is the instance count), the second holds
    the dimension count. Body size is validated against the headers.
    """
    lines = _read_lines(stream)
    headers: list[list[int]] = []
    body: list[tuple[int, list[str]]] = []
    for no, ln in enumerate(lines, start=1):
        stripped = ln.strip()
        if not stripped or _is_comment(ln):
            continue
        if stripped.startswith("%"):
            if len(headers) >= 2:
                raise errors.MalformedHeader(f"line {no}: unexpected extra header")
            headers.append(_header_ints(ln, no))
        else:
            if len(headers) < 2:
                raise errors.MalformedHeader(
                    f"line {no}: data before both header lines")
            body.append((no, stripped.split()))
    if len(headers) < 2:
        raise errors.MalformedHeader("missing '%' header lines")
    counts = headers[0]
    n_vectors = counts[0] * counts[1] if len(counts) >= 2 else counts[0]
    n_dimensions = headers[1][0]
    if len(body) != n_vectors:
        raise errors.HeaderBodyMismatch(
            f"header declares {n_vectors} rows, body has {len(body)}")
    out = np.empty((n_vectors, n_dimensions), dtype=np.float32)
    for i, (lineno, tokens) in enumerate(body):
        if len(tokens) != n_dimensions:
            raise errors.HeaderBodyMismatch(
                f"line {lineno}: expected {n_dimensions} values, got {len(tokens)}")
        out[i] = _parse_row(tokens, lineno)
    return DenseDataset(out)


def parse_sparse(stream, n_dimensions_hint: Optional[int] = None) -> SparseDataset:
    """Parse zero-based ``index:value`` rows into CSR storage.

    Indices within a row are sorted on ingest; a duplicate index in one row
    is an error. A file with no lines at all is read as a single all-zero
    instance (same as a file holding one empty line).
    """
    lines = _read_lines(stream)
    if not lines:
        lines = [""]
    offsets = [0]
    cols: list[int] = []
    vals: list[float] = []
    max_index = -1
    for no, ln in enumerate(lines, start=1):
        if _is_comment(ln):
            continue
        entries: list[tuple[int, float]] = []
        for tok in ln.split():
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise errors.MalformedToken(
                    f"line {no}: token {tok!r} is not index:value")
            try:
                idx = int(idx_s)
            except ValueError:
                raise errors.MalformedToken(
                    f"line {no}: bad index in token {tok!r}") from None
            if idx < 0:
                raise errors.NegativeIndex(f"line {no}: index {idx} is negative")
            if not _is_float(val_s):
                raise errors.MalformedToken(
                    f"line {no}: bad value in token {tok!r}")
            value = float(val_s)
            if not np.isfinite(np.float32(value)):
                raise errors.MalformedToken(f"line {no}: non-finite value")
            entries.append((idx, value))
        entries.sort(key=lambda e: e[0])
        for k in range(1, len(entries)):
            if entries[k][0] == entries[k - 1][0]:
                raise errors.DuplicateIndexInRow(
                    f"line {no}: index {entries[k][0]} appears twice")
        if entries:
            max_index = max(max_index, entries[-1][0])
        cols.extend(e[0] for e in entries)
        vals.extend(e[1] for e in entries)
        offsets.append(len(cols))
    if n_dimensions_hint is not None:
        if n_dimensions_hint < max_index + 1:
            raise errors.HintTooSmall(
                f"dimension hint {n_dimensions_hint} < required {max_index + 1}")
        n_dimensions = n_dimensions_hint
    else:
        n_dimensions = max_index + 1
    return SparseDataset(
        n_dimensions=n_dimensions,
        row_offsets=np.array(offsets, dtype=np.int64),
        col_indices=np.array(cols, dtype=np.int32),
        values=np.array(vals, dtype=np.float32),
    )


def detect_format(first_lines: Iterable[str]) -> str:
    """Classify input text as 'dense', 'headered', or 'sparse'.

    Decision is content-based: a first non-comment line starting with '%'
    means headered; otherwise a first data token containing ':' means
    sparse; anything else is plain dense.
    """
    for ln in first_lines:
        stripped = ln.strip()
        if not stripped or _is_comment(ln):
            continue
        if stripped.startswith("%"):
            return "headered"
        if ":" in stripped.split()[0]:
            return "sparse"
        return "dense"
    return "dense"


def read_dataset(path: str) -> tuple[Dataset, str]:
    """Load a dataset file, auto-detecting its format."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise errors.IoFailure(f"cannot read {path}: {exc}") from exc
    fmt = detect_format(text.splitlines())
    if fmt == "sparse":
        return parse_sparse(text), fmt
    if fmt == "headered":
        return parse_dense_headered(text), fmt
    return parse_dense(text), fmt


# ----------------------------------------------------------------- writing

def _fmt(v) -> str:
    return f"{float(v):.6g}"


def _write_text(path: str, chunks: Iterable[str]) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for chunk in chunks:
                fh.write(chunk)
    except OSError as exc:
        raise errors.IoFailure(f"cannot write {path}: {exc}") from exc


def write_codebook(cb, path: str) -> None:
    """Write a codebook: grid header, dimension header, one node per line."""
    def gen():
        yield f"% {cb.n_rows} {cb.n_columns}\n"
        yield f"% {cb.n_dimensions}\n"
        for node in cb.weights:
            yield " ".join(_fmt(v) for v in node) + "\n"
    _write_text(path, gen())


def write_bmus(bmus: np.ndarray, path: str) -> None:
    """Write a BMU table: one ``index row col`` line per instance."""
    def gen():
        yield f"% {len(bmus)}\n"
        for i, (row, col) in enumerate(bmus):
            yield f"{i} {row} {col}\n"
    _write_text(path, gen())


def write_umatrix(u, path: str) -> None:
    """Write a U-matrix as a header-less number grid."""
    def gen():
        for row in u.heights:
            yield " ".join(_fmt(v) for v in row) + "\n"
    _write_text(path, gen())


def load_codebook(path_or_stream):
    """Read a codebook file back into (n_columns, n_rows, weights).

    Returns a tuple rather than a CodeBook to keep this module free of
    training-layer imports; callers wrap it.
    """
    if isinstance(path_or_stream, str) and "\n" not in path_or_stream:
        try:
            with open(path_or_stream, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise errors.IoFailure(f"cannot read {path_or_stream}: {exc}") from exc
    else:
        text = path_or_stream if isinstance(path_or_stream, str) \
            else path_or_stream.read()
    lines = text.splitlines()
    headers: list[list[int]] = []
    body: list[tuple[int, list[str]]] = []
    for no, ln in enumerate(lines, start=1):
        stripped = ln.strip()
        if not stripped or _is_comment(ln):
            continue
        if stripped.startswith("%") and len(headers) < 2:
            headers.append(_header_ints(ln, no))
        else:
            body.append((no, stripped.split()))
    if len(headers) < 2 or len(headers[0]) < 2:
        raise errors.MalformedHeader("codebook needs '% rows cols' and '% dims'")
    n_rows, n_columns = headers[0][0], headers[0][1]
    n_dimensions = headers[1][0]
    if len(body) != n_rows * n_columns:
        raise errors.CodebookShapeMismatch(
            f"codebook declares {n_rows * n_columns} nodes, file has {len(body)}")
    weights = np.empty((n_rows * n_columns, n_dimensions), dtype=np.float32)
    for i, (lineno, tokens) in enumerate(body):
        if len(tokens) != n_dimensions:
            raise errors.CodebookShapeMismatch(
                f"line {lineno}: expected {n_dimensions} values, got {len(tokens)}")
        weights[i] = _parse_row(tokens, lineno)
    return n_columns, n_rows, weights
