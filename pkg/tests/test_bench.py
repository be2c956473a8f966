import numpy as np
import pytest

from somkit import errors
from somkit.bench import (BenchSpec, gen_random_dense, gen_random_sparse,
                          parse_bench_spec, run_bench)
from somkit.kernels import Kernel
from somkit.train import TrainConfig, train


def test_gen_dense_deterministic():
    a = gen_random_dense(50, 7, seed=3)
    b = gen_random_dense(50, 7, seed=3)
    c = gen_random_dense(50, 7, seed=4)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert a.values.dtype == np.float32
    assert a.values.min() >= 0 and a.values.max() < 1


def test_gen_sparse_row_population():
    ds = gen_random_sparse(30, 1000, density=0.05, seed=1)
    counts = np.diff(ds.row_offsets)
    assert (counts == 50).all()
    for i in range(30):
        idx, _ = ds.row(i)
        assert len(set(idx.tolist())) == len(idx)
        assert (np.diff(idx) > 0).all()


def test_gen_sparse_full_density_densifies_completely():
    ds = gen_random_sparse(5, 8, density=1.0, seed=2)
    assert (np.diff(ds.row_offsets) == 8).all()
    assert (ds.densify().values != 0).all()


def test_gen_sparse_deterministic():
    a = gen_random_sparse(10, 40, 0.2, seed=9)
    b = gen_random_sparse(10, 40, 0.2, seed=9)
    assert np.array_equal(a.col_indices, b.col_indices)
    assert np.array_equal(a.values, b.values)


def test_bad_density_rejected():
    with pytest.raises(errors.InvalidConfig):
        gen_random_sparse(5, 5, 0.0, seed=1)
    with pytest.raises(errors.InvalidConfig):
        BenchSpec(density=1.5)


def test_too_few_repetitions_rejected():
    with pytest.raises(errors.InvalidConfig):
        BenchSpec(repetitions=2)


def test_run_bench_rows_and_csv(tmp_path):
    spec = BenchSpec(n_vectors=[30], n_dimensions=6, n_columns=4, n_rows=4,
                     kernels=[Kernel.DENSE_NAIVE, Kernel.DENSE_BLOCKED],
                     worker_counts=[1], repetitions=3, epochs=1)
    csv_path = tmp_path / "r.csv"
    result = run_bench(spec, str(csv_path))
    assert len(result.rows) == 2
    for row in result.rows:
        assert row.median_seconds > 0
        assert row.elements_allocated > 30 * 6
    lines = csv_path.read_text().splitlines()
    assert lines[0] == ("kernel,n,d,map,workers,median_seconds,"
                        "elements_allocated")
    assert len(lines) == 3
    assert "," in lines[1] and " " not in lines[1]


def test_run_bench_empty_kernels_writes_header_only(tmp_path):
    spec = BenchSpec(kernels=[], n_vectors=[10], n_dimensions=2,
                     n_columns=2, n_rows=2)
    csv_path = tmp_path / "r.csv"
    result = run_bench(spec, str(csv_path))
    assert result.rows == []
    assert csv_path.read_text().splitlines() == [
        "kernel,n,d,map,workers,median_seconds,elements_allocated"]


def test_budget_skips_with_notice(tmp_path, capsys):
    spec = BenchSpec(n_vectors=[500], n_dimensions=50, n_columns=10,
                     n_rows=10, kernels=[Kernel.DENSE_BLOCKED],
                     budget_elements=100)
    result = run_bench(spec, str(tmp_path / "r.csv"))
    assert result.rows == []
    assert "skip" in capsys.readouterr().err.lower()


def test_speedups_baseline_is_one(tmp_path):
    spec = BenchSpec(n_vectors=[40], n_dimensions=4, n_columns=3, n_rows=3,
                     kernels=[Kernel.DENSE_BLOCKED], worker_counts=[1, 2],
                     repetitions=3, epochs=1)
    result = run_bench(spec, str(tmp_path / "r.csv"))
    ratios = result.speedups()
    key = (int(Kernel.DENSE_BLOCKED), 40)
    assert ratios[key][1] == pytest.approx(1.0)
    assert ratios[key][2] > 0


def test_bench_does_not_disturb_training_reproducibility(tmp_path):
    cfg = TrainConfig(n_epochs=2, n_columns=4, n_rows=4,
                      kernel=Kernel.DENSE_BLOCKED)
    data = gen_random_dense(60, 5, seed=8)
    before = train(data, cfg)[0].weights.tobytes()
    run_bench(BenchSpec(n_vectors=[20], n_dimensions=3, n_columns=3,
                        n_rows=3, epochs=1), str(tmp_path / "r.csv"))
    after = train(data, cfg)[0].weights.tobytes()
    assert before == after


def test_parse_bench_spec(tmp_path):
    p = tmp_path / "spec.txt"
    p.write_text("# comment line\n"
                 "n_vectors = 100, 200\n"
                 "n_dimensions = 16\n"
                 "density = 0.1\n"
                 "columns = 6\nrows = 5\n"
                 "kernels = 0, 2\n"
                 "workers = 1, 2\n"
                 "repetitions = 4\n"
                 "seed = 7\nepochs = 2\n")
    spec = parse_bench_spec(str(p))
    assert spec.n_vectors == [100, 200]
    assert spec.n_dimensions == 16
    assert spec.density == 0.1
    assert (spec.n_columns, spec.n_rows) == (6, 5)
    assert spec.kernels == [Kernel.DENSE_NAIVE, Kernel.SPARSE]
    assert spec.worker_counts == [1, 2]
    assert spec.repetitions == 4
    assert spec.seed == 7
    assert spec.epochs == 2


def test_parse_bench_spec_bad_line(tmp_path):
    p = tmp_path / "spec.txt"
    p.write_text("this is not key value\n")
    with pytest.raises(errors.MalformedToken):
        parse_bench_spec(str(p))


def test_parse_bench_spec_missing_file():
    with pytest.raises(errors.IoFailure):
        parse_bench_spec("/nope/spec.txt")
