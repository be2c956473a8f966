"""Command-line front-end.

Local training::

    somkit [OPTIONS] INPUT_FILE OUTPUT_PREFIX

Distributed roles and the benchmark harness ride behind subcommands
(``coordinator``, ``worker``, ``bench``). Input format is detected from
content, not file name. Exit codes: 0 success, 1 usage error, 2 input or
parse error, 3 runtime or protocol error. Progress goes to stdout, one line
per epoch; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

from . import errors
from .bench import run_bench_file
from .distributed import TcpListener, coordinator_run, tcp_connect, worker_run
from .fileio import read_dataset
from .grid import MapType
from .kernels import Kernel
from .train import (Cooling, FileSinks, TrainConfig, load_codebook, train)


@dataclass
class CliInvocation:
    role: str = "local"                   # local | coordinator | worker | bench
    input_file: Optional[str] = None
    output_prefix: Optional[str] = None
    config: TrainConfig = field(default_factory=TrainConfig)
    initial_codebook: Optional[str] = None
    threads: int = 1
    endpoint: Optional[tuple[str, int]] = None
    expect_workers: int = 1
    timeout: float = 600.0
    bench_spec: Optional[str] = None
    bench_csv: Optional[str] = None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise errors.UsageError(message)


def _endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise errors.UsageError(f"endpoint {text!r} is not HOST:PORT")
    try:
        return host, int(port)
    except ValueError:
        raise errors.UsageError(f"bad port in endpoint {text!r}") from None


def _add_training_flags(p: _Parser) -> None:
    p.add_argument("-c", "--initial-codebook", metavar="FILE", default=None,
                   help="initial codebook file (default: seeded random init)")
    p.add_argument("-e", "--epochs", type=int, default=10, metavar="N",
                   help="training epochs (default 10)")
    p.add_argument("-k", "--kernel", type=int, choices=(0, 1, 2), default=0,
                   help="0 dense naive, 1 dense blocked, 2 sparse (default 0)")
    p.add_argument("-m", "--map", choices=("planar", "toroid"),
                   default="planar", help="map topology (default planar)")
    p.add_argument("-t", "--radius-cooling", choices=("linear", "exponential"),
                   default="linear", help="radius schedule (default linear)")
    p.add_argument("-r", "--radius0", type=float, default=0, metavar="R",
                   help="start radius (0 = half the smaller map side)")
    p.add_argument("-R", "--radiusN", type=float, default=0, metavar="R",
                   help="end radius (0 = 1)")
    p.add_argument("-T", "--scale-cooling", choices=("linear", "exponential"),
                   default="linear", help="learning scale schedule (default linear)")
    p.add_argument("-l", "--scale0", type=float, default=0, metavar="S",
                   help="start learning scale (0 = 1.0)")
    p.add_argument("-L", "--scaleN", type=float, default=0, metavar="S",
                   help="end learning scale (0 = 0.01)")
    p.add_argument("-s", "--snapshots", type=int, choices=(0, 1, 2), default=0,
                   help="0 none, 1 interim U-matrix, 2 also codebook and BMUs")
    p.add_argument("-x", "--columns", type=int, default=50, metavar="N",
                   help="map columns (default 50)")
    p.add_argument("-y", "--rows", type=int, default=50, metavar="N",
                   help="map rows (default 50)")
    p.add_argument("--seed", type=int, default=1, metavar="N",
                   help="codebook init seed (default 1)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   metavar="N", help="worker threads (default: core count)")
    p.add_argument("input_file", metavar="INPUT_FILE")
    p.add_argument("output_prefix", metavar="OUTPUT_PREFIX")


def _config_from(ns) -> TrainConfig:
    return TrainConfig(
        n_epochs=ns.epochs,
        n_columns=ns.columns,
        n_rows=ns.rows,
        map_type=MapType(ns.map),
        kernel=Kernel(ns.kernel),
        radius0=ns.radius0,
        radiusN=ns.radiusN,
        radius_cooling=Cooling(ns.radius_cooling),
        scale0=ns.scale0,
        scaleN=ns.scaleN,
        scale_cooling=Cooling(ns.scale_cooling),
        snapshot_level=ns.snapshots,
        seed=ns.seed,
    )


def parse_args(argv: list[str]) -> CliInvocation:
    """Map argv to an invocation; raises UsageError on any flag problem."""
    if argv and argv[0] in ("coordinator", "worker", "bench"):
        role, rest = argv[0], argv[1:]
    else:
        role, rest = "local", argv

    if role == "worker":
        p = _Parser(prog="somkit worker", allow_abbrev=False)
        p.add_argument("--connect", required=True, metavar="HOST:PORT")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        p.add_argument("--timeout", type=float, default=600.0)
        ns = p.parse_args(rest)
        return CliInvocation(role=role, endpoint=_endpoint(ns.connect),
                             threads=ns.threads, timeout=ns.timeout)

    if role == "bench":
        p = _Parser(prog="somkit bench", allow_abbrev=False)
        p.add_argument("spec_file", metavar="SPEC_FILE")
        p.add_argument("output_csv", metavar="OUTPUT_CSV")
        ns = p.parse_args(rest)
        return CliInvocation(role=role, bench_spec=ns.spec_file,
                             bench_csv=ns.output_csv)

    p = _Parser(prog="somkit" if role == "local" else "somkit coordinator",
                allow_abbrev=False)
    if role == "coordinator":
        p.add_argument("--listen", default="127.0.0.1:0", metavar="HOST:PORT")
        p.add_argument("--expect", type=int, required=True, metavar="P",
                       help="number of workers to wait for")
        p.add_argument("--timeout", type=float, default=600.0)
    _add_training_flags(p)
    ns = p.parse_args(rest)
    if ns.threads < 1:
        raise errors.UsageError("--threads must be >= 1")
    if not ns.output_prefix:
        raise errors.UsageError("output prefix must not be empty")
    inv = CliInvocation(role=role, input_file=ns.input_file,
                        output_prefix=ns.output_prefix,
                        config=_config_from(ns),
                        initial_codebook=ns.initial_codebook,
                        threads=ns.threads)
    if role == "coordinator":
        if ns.expect < 1:
            raise errors.UsageError("--expect must be >= 1")
        inv.endpoint = _endpoint(ns.listen)
        inv.expect_workers = ns.expect
        inv.timeout = ns.timeout
    return inv


def _print_progress(state, qe: float) -> None:
    print(f"epoch {state.epoch} radius {state.radius:.6g} "
          f"scale {state.scale:.6g} qe {qe:.6g}", flush=True)


def run(inv: CliInvocation) -> int:
    """Execute a parsed invocation; exceptions map to exit codes in main."""
    if inv.role == "worker":
        host, port = inv.endpoint
        channel = tcp_connect(host, port, retry_seconds=min(inv.timeout, 30.0))
        worker_run(channel, worker_threads=inv.threads, timeout=inv.timeout)
        return 0

    if inv.role == "bench":
        run_bench_file(inv.bench_spec, inv.bench_csv)
        return 0

    data, fmt = read_dataset(inv.input_file)
    print(f"somkit: read {data.n_vectors} x {data.n_dimensions} {fmt} input "
          f"from {inv.input_file}", file=sys.stderr)
    initial = load_codebook(inv.initial_codebook) \
        if inv.initial_codebook else None
    sinks = FileSinks(inv.output_prefix)

    if inv.role == "coordinator":
        host, port = inv.endpoint
        listener = TcpListener(host, port)
        print(f"somkit: coordinator listening on {host}:{listener.port}, "
              f"waiting for {inv.expect_workers} workers", file=sys.stderr,
              flush=True)
        try:
            coordinator_run(data, inv.config, inv.expect_workers, listener,
                            sinks=sinks, initial_codebook=initial,
                            progress=_print_progress, timeout=inv.timeout)
        finally:
            listener.close()
        return 0

    train(data, inv.config, sinks, workers=inv.threads,
          initial_codebook=initial, progress=_print_progress)
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    try:
        return run(parse_args(args))
    except errors.UsageError as exc:
        print(f"somkit: {exc}", file=sys.stderr)
        print("usage: somkit [OPTIONS] INPUT_FILE OUTPUT_PREFIX "
              "(see --help)", file=sys.stderr)
        return 1
    except errors.SomkitError as exc:
        print(f"somkit: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 3


if __name__ == "__main__":
    sys.exit(main())
