import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def run_cli(args, cwd=None, timeout=120, stdin_data=None):
    """Run the command-line tool in a subprocess; returns CompletedProcess."""
    cmd = [sys.executable, "-m", "somkit.cli", *map(str, args)]
    return subprocess.run(cmd, cwd=cwd, timeout=timeout, input=stdin_data,
                          capture_output=True, text=True)


def gnuplot_matrix_dims(text):
    """Validate gnuplot's plain matrix grammar, return (rows, cols).

    Every nonempty line must hold the same number of numeric tokens and
    nothing else; no comments, no headers.
    """
    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        toks = line.split()
        vals = []
        for t in toks:
            v = float(t)
            assert np.isfinite(v), f"non-finite matrix entry {t!r}"
            vals.append(v)
        rows.append(vals)
    assert rows, "matrix file has no rows"
    widths = {len(r) for r in rows}
    assert len(widths) == 1, f"ragged matrix rows, widths {sorted(widths)}"
    return len(rows), len(rows[0])


def rel_close(a, b, rtol, atol=1e-9):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.allclose(a, b, rtol=rtol, atol=atol)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def dense_small(rng):
    from somkit import DenseDataset
    vals = rng.random((40, 5), dtype=np.float32)
    return DenseDataset(values=vals)
