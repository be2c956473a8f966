"""Coordinator/worker training over an explicit message protocol.

The dataset is partitioned once: each worker receives its contiguous slice
up front and no training data ever crosses the wire again. Per epoch the
coordinator broadcasts the current codebook; each worker searches BMUs and
accumulates the batch-update sums for its slice using the kernels module;
the coordinator folds the per-worker sums in ascending rank order (a fixed
association, so the reduce is deterministic) and applies the blend. After
the last epoch one extra broadcast collects BMU tables computed against the
final codebook. The coordinator computes nothing per epoch besides the fold
and blend, for any worker count: with one worker the whole numeric pipeline
is the same as local training, which makes the P=1 run bit-identical to it.

Wire format: little-endian frames of ``magic | tag u8 | length u32 |
payload | crc32 u32``. Codebooks travel as the single-precision weights
(lossless, that is their storage type). Accumulator sums travel in double
precision: they are merged after transport, and rounding them to single
precision would break the bit-parity of the one-worker case.

Failure policy is fail-fast: a lost peer, a version mismatch, a shape
mismatch, or a deadline overrun aborts the run with a diagnostic. Epoch
checkpoints via the snapshot level are the recovery story.
"""

from __future__ import annotations

import hashlib
import queue
import socket
import struct
import time
import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import errors
from .fileio import Dataset, DenseDataset, SparseDataset
from .grid import MapType
from .kernels import Accumulators, Kernel, blend, search_accumulate, _to_coords
from .train import (CodeBook, Cooling, FileSinks, TrainConfig,
                    check_kernel_data, epoch_schedules, init_codebook,
                    resolve_defaults)
from .umatrix import compute_umatrix

PROTOCOL_VERSION = 1

_MAGIC = b"SOMK"
_HEADER = struct.Struct("<4sBI")   # magic, tag, payload length
_TRAILER = struct.Struct("<I")     # crc32 of payload

TAG_HELLO = 1
TAG_ASSIGN_META = 2
TAG_ASSIGN_CHUNK = 3
TAG_BROADCAST_CODEBOOK = 4
TAG_LOCAL_ACCUMULATORS = 5
TAG_EPOCH_ACK = 6
TAG_SHUTDOWN = 7
TAG_BMU_REPORT = 8

_MAX_PAYLOAD = 1 << 31


def encode_frame(tag: int, payload: bytes) -> bytes:
    return (_HEADER.pack(_MAGIC, tag, len(payload)) + payload
            + _TRAILER.pack(zlib.crc32(payload)))


def decode_frame(frame: bytes) -> tuple[int, bytes]:
    if len(frame) < _HEADER.size + _TRAILER.size:
        raise errors.FrameCorruption("frame shorter than header")
    magic, tag, length = _HEADER.unpack_from(frame)
    if magic != _MAGIC:
        raise errors.FrameCorruption(f"bad magic {magic!r}")
    if len(frame) != _HEADER.size + length + _TRAILER.size:
        raise errors.FrameCorruption("frame length mismatch")
    payload = frame[_HEADER.size:_HEADER.size + length]
    (crc,) = _TRAILER.unpack_from(frame, _HEADER.size + length)
    if crc != zlib.crc32(payload):
        raise errors.FrameCorruption("payload checksum failure")
    return tag, payload


# ------------------------------------------------------------------ channels

class _Accounting:
    """Per-tag byte counters, filled on both send and receive."""

    def __init__(self):
        self.sent_bytes: dict[int, int] = {}
        self.received_bytes: dict[int, int] = {}

    def _count(self, book: dict, tag: int, n: int) -> None:
        book[tag] = book.get(tag, 0) + n


class InprocChannel(_Accounting):
    """Queue-backed channel carrying fully framed bytes, so framing and
    corruption behavior match the socket transport."""

    def __init__(self, send_q: queue.Queue, recv_q: queue.Queue):
        super().__init__()
        self._send_q = send_q
        self._recv_q = recv_q
        self._closed = False

    def send(self, tag: int, payload: bytes) -> None:
        if self._closed:
            raise errors.ChannelClosed("channel is closed")
        frame = encode_frame(tag, payload)
        self._count(self.sent_bytes, tag, len(frame))
        self._send_q.put(frame)

    def recv(self, timeout: Optional[float] = None) -> tuple[int, bytes]:
        try:
            frame = self._recv_q.get(timeout=timeout)
        except queue.Empty:
            raise errors.Timeout(f"no message within {timeout} s") from None
        if frame is None:
            raise errors.ChannelClosed("peer closed the channel")
        tag, payload = decode_frame(frame)
        self._count(self.received_bytes, tag, len(frame))
        return tag, payload

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._send_q.put(None)


class InprocTransport:
    """Pre-wired coordinator/worker channel pairs inside one process."""

    def __init__(self, p: int):
        self._pairs = []
        for _ in range(p):
            up, down = queue.Queue(), queue.Queue()
            self._pairs.append((InprocChannel(down, up),
                                InprocChannel(up, down)))

    def accept(self, p: int, timeout: Optional[float] = None):
        if p != len(self._pairs):
            raise errors.ProtocolError(
                f"transport wired for {len(self._pairs)} workers, asked {p}")
        return [pair[0] for pair in self._pairs]

    def worker_channel(self, rank: int) -> InprocChannel:
        return self._pairs[rank][1]


class TcpChannel(_Accounting):
    def __init__(self, sock: socket.socket):
        super().__init__()
        self._sock = sock
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def send(self, tag: int, payload: bytes) -> None:
        frame = encode_frame(tag, payload)
        try:
            self._sock.sendall(frame)
        except OSError as exc:
            raise errors.ChannelClosed(f"send failed: {exc}") from exc
        self._count(self.sent_bytes, tag, len(frame))

    def _recv_exact(self, n: int, timeout: Optional[float]) -> bytes:
        self._sock.settimeout(timeout)
        buf = bytearray()
        while len(buf) < n:
            try:
                part = self._sock.recv(min(n - len(buf), 1 << 20))
            except socket.timeout:
                raise errors.Timeout(f"no data within {timeout} s") from None
            except OSError as exc:
                raise errors.ChannelClosed(f"recv failed: {exc}") from exc
            if not part:
                raise errors.ChannelClosed("peer closed the connection")
            buf.extend(part)
        return bytes(buf)

    def recv(self, timeout: Optional[float] = None) -> tuple[int, bytes]:
        head = self._recv_exact(_HEADER.size, timeout)
        magic, tag, length = _HEADER.unpack(head)
        if magic != _MAGIC or length > _MAX_PAYLOAD:
            raise errors.FrameCorruption("bad frame header")
        rest = self._recv_exact(length + _TRAILER.size, timeout)
        tag2, payload = decode_frame(head + rest)
        self._count(self.received_bytes, tag2, len(head) + len(rest))
        return tag2, payload

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class TcpListener:
    """Coordinator-side listening endpoint."""

    def __init__(self, host: str, port: int):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen()

    @property
    def port(self) -> int:
        return self._sock.getsockname()[1]

    def accept(self, p: int, timeout: Optional[float] = None):
        channels = []
        deadline = None if timeout is None else time.monotonic() + timeout
        for _ in range(p):
            if deadline is not None:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise errors.Timeout("workers did not all connect in time")
                self._sock.settimeout(remaining)
            try:
                conn, _addr = self._sock.accept()
            except socket.timeout:
                raise errors.Timeout(
                    "workers did not all connect in time") from None
            channels.append(TcpChannel(conn))
        return channels

    def close(self) -> None:
        self._sock.close()


def tcp_connect(host: str, port: int, retry_seconds: float = 10.0) -> TcpChannel:
    """Connect to a coordinator, retrying briefly to absorb startup races."""
    deadline = time.monotonic() + retry_seconds
    while True:
        try:
            return TcpChannel(socket.create_connection((host, port), timeout=10))
        except OSError as exc:
            if time.monotonic() >= deadline:
                raise errors.ConnectionRefused(
                    f"cannot reach coordinator at {host}:{port}: {exc}") from exc
            time.sleep(0.05)


# ------------------------------------------------------------------ messages

_HELLO = struct.Struct("<iI")          # rank, protocol version
_META_FIX = struct.Struct("<IIIIQIBBBBBBdddddQ")
_CHUNK_HEAD = struct.Struct("<QQB")    # first, count, format (0 dense/1 sparse)
_BCAST_HEAD = struct.Struct("<I")      # epoch
_ACC_HEAD = struct.Struct("<IidB")     # epoch, rank, qe sum, has bmus
_ACK = struct.Struct("<I")             # epoch
_REPORT_HEAD = struct.Struct("<idQ")   # rank, qe sum, count


@dataclass(frozen=True)
class Meta:
    n_columns: int
    n_rows: int
    n_dimensions: int
    n_epochs: int
    n_vectors: int
    p: int
    map_type: MapType
    kernel: Kernel
    radius_cooling: Cooling
    scale_cooling: Cooling
    snapshot_level: int
    sparse: bool
    radius0: float
    radiusN: float
    scale0: float
    scaleN: float
    cutoff: float
    seed: int

    def config(self) -> TrainConfig:
        return TrainConfig(
            n_epochs=self.n_epochs, n_columns=self.n_columns,
            n_rows=self.n_rows, map_type=self.map_type, kernel=self.kernel,
            radius0=self.radius0, radiusN=self.radiusN,
            radius_cooling=self.radius_cooling, scale0=self.scale0,
            scaleN=self.scaleN, scale_cooling=self.scale_cooling,
            snapshot_level=self.snapshot_level, seed=self.seed,
            influence_cutoff=self.cutoff)


_COOLING_CODE = {Cooling.LINEAR: 0, Cooling.EXPONENTIAL: 1}
_COOLING_FROM = {v: k for k, v in _COOLING_CODE.items()}
_MAP_CODE = {MapType.PLANAR: 0, MapType.TOROID: 1}
_MAP_FROM = {v: k for k, v in _MAP_CODE.items()}


def pack_meta(cfg: TrainConfig, n_dimensions: int, n_vectors: int,
              p: int, sparse: bool) -> bytes:
    fixed = _META_FIX.pack(
        cfg.n_columns, cfg.n_rows, n_dimensions, cfg.n_epochs, n_vectors, p,
        _MAP_CODE[cfg.map_type], int(cfg.kernel),
        _COOLING_CODE[cfg.radius_cooling], _COOLING_CODE[cfg.scale_cooling],
        cfg.snapshot_level, int(sparse),
        cfg.radius0, cfg.radiusN, cfg.scale0, cfg.scaleN,
        cfg.influence_cutoff, cfg.seed)
    return fixed + hashlib.sha256(fixed).digest()


def unpack_meta(payload: bytes) -> Meta:
    if len(payload) != _META_FIX.size + 32:
        raise errors.ShapeMismatch("assignment metadata has wrong size")
    fixed, digest = payload[:_META_FIX.size], payload[_META_FIX.size:]
    if hashlib.sha256(fixed).digest() != digest:
        raise errors.FrameCorruption("metadata digest mismatch")
    (n_columns, n_rows, n_dimensions, n_epochs, n_vectors, p, map_code,
     kernel, r_cool, s_cool, snapshot, sparse, radius0, radiusN, scale0,
     scaleN, cutoff, seed) = _META_FIX.unpack(fixed)
    return Meta(n_columns, n_rows, n_dimensions, n_epochs, n_vectors, p,
                _MAP_FROM[map_code], Kernel(kernel), _COOLING_FROM[r_cool],
                _COOLING_FROM[s_cool], snapshot, bool(sparse),
                radius0, radiusN, scale0, scaleN, cutoff, seed)


def pack_chunk(data: Dataset, first: int, count: int) -> bytes:
    if isinstance(data, SparseDataset):
        offsets = data.row_offsets[first:first + count + 1]
        base = int(offsets[0]) if len(offsets) else 0
        rebased = (offsets - base).astype("<i8")
        cols = data.col_indices[offsets[0]:offsets[-1]].astype("<i4")
        vals = data.values[offsets[0]:offsets[-1]].astype("<f4")
        head = _CHUNK_HEAD.pack(first, count, 1)
        return (head + struct.pack("<Q", len(cols)) + rebased.tobytes()
                + cols.tobytes() + vals.tobytes())
    rows = data.values[first:first + count].astype("<f4")
    return _CHUNK_HEAD.pack(first, count, 0) + rows.tobytes()


def unpack_chunk(payload: bytes, n_dimensions: int) -> tuple[int, Dataset]:
    first, count, fmt = _CHUNK_HEAD.unpack_from(payload)
    body = payload[_CHUNK_HEAD.size:]
    if fmt == 0:
        expected = count * n_dimensions * 4
        if len(body) != expected:
            raise errors.ShapeMismatch(
                f"dense chunk payload {len(body)} B, expected {expected}")
        values = np.frombuffer(body, dtype="<f4").reshape(count, n_dimensions)
        return first, DenseDataset(values.copy())
    (nnz,) = struct.unpack_from("<Q", body)
    off = 8
    sizes = ((count + 1) * 8, nnz * 4, nnz * 4)
    if len(body) != off + sum(sizes):
        raise errors.ShapeMismatch("sparse chunk payload size mismatch")
    offsets = np.frombuffer(body, dtype="<i8", count=count + 1, offset=off)
    off += sizes[0]
    cols = np.frombuffer(body, dtype="<i4", count=nnz, offset=off)
    off += sizes[1]
    vals = np.frombuffer(body, dtype="<f4", count=nnz, offset=off)
    return first, SparseDataset(n_dimensions, offsets.copy(), cols.copy(),
                                vals.copy())


def pack_codebook(epoch: int, weights: np.ndarray) -> bytes:
    return _BCAST_HEAD.pack(epoch) + weights.astype("<f4", copy=False).tobytes()


def unpack_codebook(payload: bytes, n_nodes: int,
                    n_dimensions: int) -> tuple[int, np.ndarray]:
    (epoch,) = _BCAST_HEAD.unpack_from(payload)
    expected = n_nodes * n_dimensions * 4
    body = payload[_BCAST_HEAD.size:]
    if len(body) != expected:
        raise errors.ShapeMismatch(
            f"codebook payload {len(body)} B, expected {expected}")
    weights = np.frombuffer(body, dtype="<f4").reshape(n_nodes, n_dimensions)
    return epoch, weights.copy()


def pack_accumulators(epoch: int, rank: int, qe_sum: float, acc: Accumulators,
                      bmu_flat: Optional[np.ndarray]) -> bytes:
    parts = [_ACC_HEAD.pack(epoch, rank, qe_sum, bmu_flat is not None),
             acc.numerators.astype("<f8", copy=False).tobytes(),
             acc.denominators.astype("<f8", copy=False).tobytes()]
    if bmu_flat is not None:
        parts.append(bmu_flat.astype("<i8", copy=False).tobytes())
    return b"".join(parts)


def unpack_accumulators(payload: bytes, n_nodes: int, n_dimensions: int,
                        chunk_count: int):
    epoch, rank, qe_sum, has_bmus = _ACC_HEAD.unpack_from(payload)
    body = payload[_ACC_HEAD.size:]
    num_size = n_nodes * n_dimensions * 8
    den_size = n_nodes * 8
    expected = num_size + den_size + (chunk_count * 8 if has_bmus else 0)
    if len(body) != expected:
        raise errors.ShapeMismatch(
            f"accumulator payload {len(body)} B, expected {expected}")
    num = np.frombuffer(body, dtype="<f8",
                        count=n_nodes * n_dimensions).reshape(n_nodes,
                                                              n_dimensions)
    den = np.frombuffer(body, dtype="<f8", count=n_nodes, offset=num_size)
    bmus = None
    if has_bmus:
        bmus = np.frombuffer(body, dtype="<i8", count=chunk_count,
                             offset=num_size + den_size).copy()
    return epoch, rank, qe_sum, Accumulators(num.copy(), den.copy()), bmus


def pack_report(rank: int, qe_sum: float, bmu_flat: np.ndarray) -> bytes:
    return (_REPORT_HEAD.pack(rank, qe_sum, len(bmu_flat))
            + bmu_flat.astype("<i8", copy=False).tobytes())


def unpack_report(payload: bytes, chunk_count: int):
    rank, qe_sum, count = _REPORT_HEAD.unpack_from(payload)
    if count != chunk_count:
        raise errors.ShapeMismatch(
            f"BMU report for {count} instances, expected {chunk_count}")
    bmus = np.frombuffer(payload, dtype="<i8", count=count,
                         offset=_REPORT_HEAD.size)
    return rank, qe_sum, bmus.copy()


# ----------------------------------------------------------------- partition

def partition(n_vectors: int, p: int) -> list[tuple[int, int]]:
    """Contiguous near-equal slices: rank r gets floor(n/p), plus one extra
    if r < n mod p. Sizes differ by at most 1 and cover [0, n)."""
    base, extra = divmod(n_vectors, p)
    out = []
    first = 0
    for r in range(p):
        count = base + (1 if r < extra else 0)
        out.append((first, count))
        first += count
    return out


# --------------------------------------------------------------- coordinator

def _expect(channel, tag: int, rank: int, timeout: Optional[float]):
    try:
        got, payload = channel.recv(timeout)
    except errors.ChannelClosed as exc:
        raise errors.WorkerLost(f"worker rank {rank} disconnected") from exc
    if got != tag:
        raise errors.ProtocolError(
            f"worker rank {rank}: expected tag {tag}, got {got}")
    return payload


def coordinator_run(data: Dataset, cfg: TrainConfig, p: int, transport, *,
                    sinks: Optional[FileSinks] = None,
                    initial_codebook: Optional[CodeBook] = None,
                    progress=None, timeout: Optional[float] = None):
    """Drive a full training run over P workers.

    ``transport`` must provide ``accept(p, timeout) -> channels``. Returns
    (CodeBook, bmus, UMatrix) exactly like local train().
    """
    cfg = resolve_defaults(cfg)
    check_kernel_data(cfg.kernel, data)
    if p < 1:
        raise errors.InvalidConfig("worker count must be >= 1")
    sparse = isinstance(data, SparseDataset)
    n = data.n_vectors
    channels = transport.accept(p, timeout)
    try:
        for rank, ch in enumerate(channels):
            payload = _expect(ch, TAG_HELLO, rank, timeout)
            _rank_req, version = _HELLO.unpack(payload)
            if version != PROTOCOL_VERSION:
                raise errors.VersionMismatch(
                    f"worker rank {rank} speaks protocol {version}, "
                    f"coordinator speaks {PROTOCOL_VERSION}")
            ch.send(TAG_HELLO, _HELLO.pack(rank, PROTOCOL_VERSION))

        meta_payload = pack_meta(cfg, data.n_dimensions, n, p, sparse)
        slices = partition(n, p)
        for rank, ch in enumerate(channels):
            ch.send(TAG_ASSIGN_META, meta_payload)
            first, count = slices[rank]
            ch.send(TAG_ASSIGN_CHUNK, pack_chunk(data, first, count))
        for rank, ch in enumerate(channels):
            payload = _expect(ch, TAG_EPOCH_ACK, rank, timeout)
            (ack,) = _ACK.unpack(payload)
            if ack != 0:
                raise errors.ProtocolError(
                    f"worker rank {rank} acked epoch {ack}, expected 0")

        cb = init_codebook(cfg, data.n_dimensions,
                           initial_codebook=initial_codebook)
        n_nodes = cb.n_nodes
        for epoch in range(cfg.n_epochs):
            state = epoch_schedules(cfg, epoch)
            codebook_payload = pack_codebook(epoch, cb.weights)
            for ch in channels:
                ch.send(TAG_BROADCAST_CODEBOOK, codebook_payload)
            total = Accumulators.zeros(n_nodes, data.n_dimensions)
            qe_sum = 0.0
            bmu_parts: list[Optional[np.ndarray]] = [None] * p
            # Receive in ascending rank order: the transport buffers, so
            # arrival order cannot change the fold order.
            for rank, ch in enumerate(channels):
                payload = _expect(ch, TAG_LOCAL_ACCUMULATORS, rank, timeout)
                got_epoch, got_rank, qe, acc, bmus = unpack_accumulators(
                    payload, n_nodes, data.n_dimensions, slices[rank][1])
                if got_epoch != epoch or got_rank != rank:
                    raise errors.ProtocolError(
                        f"worker rank {rank} answered epoch {got_epoch} "
                        f"as rank {got_rank}")
                total.merge(acc)
                qe_sum += qe
                bmu_parts[rank] = bmus
            cb = CodeBook(cb.n_columns, cb.n_rows, cb.n_dimensions,
                          blend(cb.weights, total, state.scale))
            if progress is not None:
                progress(state, qe_sum / max(n, 1))
            if sinks is not None and cfg.snapshot_level >= 1:
                u = compute_umatrix(cb, cfg.map_type)
                if cfg.snapshot_level >= 2:
                    flat = np.concatenate([b for b in bmu_parts]) \
                        if all(b is not None for b in bmu_parts) \
                        else None
                    if flat is None:
                        raise errors.ProtocolError(
                            "snapshot level 2 requires per-epoch BMU tables")
                    sinks.interim(epoch, u, cb, _to_coords(flat, cb.n_columns))
                else:
                    sinks.interim(epoch, u)

        # One extra broadcast: BMU tables against the final codebook.
        final_payload = pack_codebook(cfg.n_epochs, cb.weights)
        for ch in channels:
            ch.send(TAG_BROADCAST_CODEBOOK, final_payload)
        flat = np.empty(n, dtype=np.int64)
        for rank, ch in enumerate(channels):
            payload = _expect(ch, TAG_BMU_REPORT, rank, timeout)
            got_rank, _qe, bmus = unpack_report(payload, slices[rank][1])
            if got_rank != rank:
                raise errors.ProtocolError(
                    f"final report from rank {got_rank} on channel {rank}")
            first, count = slices[rank]
            flat[first:first + count] = bmus
        for ch in channels:
            ch.send(TAG_SHUTDOWN, b"")
        bmus = _to_coords(flat, cb.n_columns)
        u = compute_umatrix(cb, cfg.map_type)
        if sinks is not None:
            sinks.final(cb, bmus, u)
        return cb, bmus, u
    finally:
        for ch in channels:
            try:
                ch.close()
            except Exception:
                pass


# -------------------------------------------------------------------- worker

def worker_run(channel, worker_threads: int = 1,
               timeout: Optional[float] = None) -> None:
    """Serve one training run: handshake, store the assigned chunk, then
    answer per-epoch codebook broadcasts with local accumulator sums until
    told to shut down."""
    try:
        channel.send(TAG_HELLO, _HELLO.pack(-1, PROTOCOL_VERSION))
        tag, payload = channel.recv(timeout)
        if tag != TAG_HELLO:
            raise errors.ProtocolError(f"expected handshake, got tag {tag}")
        rank, version = _HELLO.unpack(payload)
        if version != PROTOCOL_VERSION:
            raise errors.VersionMismatch(
                f"coordinator speaks protocol {version}, "
                f"worker speaks {PROTOCOL_VERSION}")

        tag, payload = channel.recv(timeout)
        if tag != TAG_ASSIGN_META:
            raise errors.ProtocolError(f"expected metadata, got tag {tag}")
        meta = unpack_meta(payload)
        cfg = meta.config()

        tag, payload = channel.recv(timeout)
        if tag != TAG_ASSIGN_CHUNK:
            raise errors.ProtocolError(f"expected chunk, got tag {tag}")
        _first, local = unpack_chunk(payload, meta.n_dimensions)
        channel.send(TAG_EPOCH_ACK, _ACK.pack(0))

        n_nodes = meta.n_columns * meta.n_rows
        expected_epoch = 0
        while True:
            tag, payload = channel.recv(timeout)
            if tag == TAG_SHUTDOWN:
                return
            if tag != TAG_BROADCAST_CODEBOOK:
                raise errors.ProtocolError(f"unexpected tag {tag}")
            epoch, weights = unpack_codebook(payload, n_nodes,
                                             meta.n_dimensions)
            cb = CodeBook(meta.n_columns, meta.n_rows, meta.n_dimensions,
                          weights)
            if epoch == meta.n_epochs:
                # Final round: BMUs against the final codebook. The naive
                # search is per-instance, so its bits cannot depend on how
                # the data was partitioned across workers.
                final_kernel = Kernel.SPARSE if meta.sparse \
                    else Kernel.DENSE_NAIVE
                flat, qe_sum, _ = search_accumulate(
                    local, cb, 1.0, 0.0, meta.map_type, final_kernel,
                    worker_threads, with_accumulators=False)
                channel.send(TAG_BMU_REPORT, pack_report(rank, qe_sum, flat))
                continue
            if epoch != expected_epoch:
                raise errors.ProtocolError(
                    f"epoch {epoch} arrived, expected {expected_epoch}")
            expected_epoch += 1
            state = epoch_schedules(cfg, epoch)
            flat, qe_sum, acc = search_accumulate(
                local, cb, state.radius, meta.cutoff, meta.map_type,
                meta.kernel, worker_threads)
            bmus = flat if meta.snapshot_level >= 2 else None
            channel.send(TAG_LOCAL_ACCUMULATORS,
                         pack_accumulators(epoch, rank, qe_sum, acc, bmus))
    except errors.ChannelClosed as exc:
        raise errors.CoordinatorLost(str(exc)) from exc
    finally:
        try:
            channel.close()
        except Exception:
            pass
