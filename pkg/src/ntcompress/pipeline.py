"""Compression and decompression of traffic datasets.

The encoder and the decoder run the same per-bin procedure
(:meth:`_Coder.code_bin`); only the callback that turns a distribution into a
value differs (encode the true value vs. decode one). This keeps every
prediction, link order and mask identical on both sides.
"""

from __future__ import annotations

import hashlib
import io
import struct
import time
import zlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coder import CodedStream, DecodeError, RangeDecoder, RangeEncoder
from .core import Topology, TrafficDataset, build_link_graph
from .models import (
    HistogramModel,
    LaplaceModel,
    QuantizedDistribution,
    SymbolAlphabet,
    UniformModel,
    DistParams,
)
from .neural.predictor import NETWORK, SINGLE_LINK, InferenceSession, PredictorModel

CONTAINER_MAGIC = b"NTCC"
CONTAINER_VERSION = 1

SINGLE = "single_link"
NETWORK_WIDE = "network_wide"
MODES = (SINGLE, NETWORK_WIDE)

UNIFORM = "uniform"
STATIC_AC = "static_ac"
ADAPTIVE_AC = "adaptive_ac"
RNN = "rnn"
STGNN = "stgnn"
METHODS = (UNIFORM, STATIC_AC, ADAPTIVE_AC, RNN, STGNN)

DEFAULT_W_PAST = 4


class ContainerError(ValueError):
    pass


class ModelMismatch(ValueError):
    pass


def select_next_link(b: np.ndarray, known: np.ndarray) -> int:
    """Unknown link with the smallest predicted Laplace scale; ties go to the lowest id."""
    b = np.asarray(b, dtype=np.float64)
    known = np.asarray(known, dtype=bool)
    if known.all():
        raise AssertionError("select_next_link called with every link already known")
    return int(np.argmin(np.where(known, np.inf, b)))


@dataclass
class CodingSpec:
    """Everything both sides need to reproduce the model sequence."""

    method: str
    mode: str
    topology: Topology
    v_max: int
    w_past: int = DEFAULT_W_PAST
    bin_duration_s: float = 300.0
    model: PredictorModel | None = None
    static_tables: list[HistogramModel] | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.method in (RNN, STGNN):
            if self.model is None:
                raise ValueError(f"method {self.method} needs a trained model")
            expected = SINGLE_LINK if self.method == RNN else NETWORK
            if self.model.kind != expected:
                raise ModelMismatch(f"method {self.method} needs a {expected} model, got {self.model.kind}")
            if (self.method == RNN) != (self.mode == SINGLE):
                raise ModelMismatch(f"method {self.method} does not run in {self.mode} mode")
            self.w_past = self.model.w_past
        if self.method == STATIC_AC and self.static_tables is None:
            raise ValueError("static_ac needs histogram tables")
        if self.w_past < 1:
            raise ValueError("w_past must be >= 1")

    @property
    def alphabet(self) -> SymbolAlphabet:
        return SymbolAlphabet(self.v_max)

    @property
    def bootstraps(self) -> bool:
        return self.method in (ADAPTIVE_AC, RNN, STGNN)

    @property
    def model_hash(self) -> bytes:
        if self.model is None:
            return bytes(32)
        return bytes.fromhex(self.model.content_hash)


def build_spec(dataset: TrafficDataset, method, mode: str | None = None,
               w_past: int | None = None) -> CodingSpec:
    """Resolve a method name or a trained model into a :class:`CodingSpec`."""
    model = None
    if isinstance(method, PredictorModel):
        model = method
        method = RNN if model.kind == SINGLE_LINK else STGNN
    if mode is None:
        mode = SINGLE if method == RNN else NETWORK_WIDE
    tables = None
    if method == STATIC_AC:
        alpha = SymbolAlphabet(dataset.v_max)
        if mode == NETWORK_WIDE:
            tables = [HistogramModel.from_samples(alpha, dataset.values)]
        else:
            tables = [HistogramModel.from_samples(alpha, dataset.values[:, j]) for j in range(dataset.num_links)]
    return CodingSpec(method, mode, dataset.topology, dataset.v_max, w_past or DEFAULT_W_PAST,
                      dataset.bin_duration_s, model, tables)


TraceHook = Callable[[int, int, QuantizedDistribution], None]


class _Coder:
    """Per-bin model sequence shared by encoder and decoder."""

    def __init__(self, spec: CodingSpec, trace: TraceHook | None = None):
        self.spec = spec
        self.num_links = spec.topology.num_links
        self.alphabet = spec.alphabet
        self.uniform = UniformModel(self.alphabet)
        self.trace = trace
        self.session = None
        if spec.model is not None:
            graph = build_link_graph(spec.topology) if spec.model.kind == NETWORK else None
            self.session = InferenceSession(spec.model, graph, self.num_links)

    def code_bin(self, t: int, history: np.ndarray, code_value) -> np.ndarray:
        """Code bin ``t``; ``history`` holds the previous ``w_past`` bins (or fewer)."""
        spec, n = self.spec, self.num_links
        out = np.zeros(n, dtype=np.int64)

        def code(link, dist):
            if self.trace:
                self.trace(t, link, dist)
            out[link] = code_value(link, dist)

        if spec.method == UNIFORM or (spec.bootstraps and t < spec.w_past):
            for j in range(n):
                code(j, self.uniform)
        elif spec.method == STATIC_AC:
            tables = spec.static_tables
            for j in range(n):
                code(j, tables[0] if spec.mode == NETWORK_WIDE else tables[j])
        elif spec.method == ADAPTIVE_AC:
            if spec.mode == NETWORK_WIDE:
                dist = HistogramModel.from_samples(self.alphabet, history)
                for j in range(n):
                    code(j, dist)
            else:
                for j in range(n):
                    code(j, HistogramModel.from_samples(self.alphabet, history[:, j]))
        else:
            self.session.start_bin(history)
            tf = spec.model.transform
            if spec.mode == SINGLE:
                mu, b = self.session.predict(out, np.zeros(n, dtype=bool))
                for j in range(n):
                    code(j, LaplaceModel(DistParams(mu[j], b[j]), self.alphabet, tf))
            else:
                known = np.zeros(n, dtype=bool)
                for _ in range(n):
                    mu, b = self.session.predict(out, known)
                    j = select_next_link(b, known)
                    code(j, LaplaceModel(DistParams(mu[j], b[j]), self.alphabet, tf))
                    known[j] = True
        return out


class CompressionSession:
    """Bin-at-a-time compressor.

    ``push_bin`` codes one bin immediately and returns the bytes each link's
    stream finalized; ``close`` flushes every stream and returns the
    container.
    """

    def __init__(self, spec: CodingSpec, trace: TraceHook | None = None):
        self.spec = spec
        self._coder = _Coder(spec, trace)
        self._encoders = [RangeEncoder() for _ in range(spec.topology.num_links)]
        self._history = np.zeros((0, spec.topology.num_links), dtype=np.int64)
        self.bins = 0
        self.bin_latencies: list[float] = []
        self._closed = False

    def push_bin(self, values) -> list[bytes]:
        if self._closed:
            raise ValueError("session already closed")
        values = np.asarray(values)
        n = self.spec.topology.num_links
        if values.shape != (n,):
            raise ValueError(f"expected {n} values per bin, got shape {values.shape}")
        for j, v in enumerate(values.tolist()):
            if v != int(v) or not 0 <= v <= self.spec.v_max:
                raise ValueError(f"bin {self.bins}, link {j}: value {v} outside 0..{self.spec.v_max}")
        values = values.astype(np.int64)
        start = time.perf_counter()

        def encode(link, dist):
            v = int(values[link])
            self._encoders[link].encode(*dist.interval(v))
            return v

        self._coder.code_bin(self.bins, self._history, encode)
        self.bin_latencies.append(time.perf_counter() - start)
        w = self.spec.w_past
        self._history = np.vstack([self._history, values[None]])[-w:]
        self.bins += 1
        return [enc.take_bytes() for enc in self._encoders]

    def close(self) -> "CompressedContainer":
        if self._closed:
            raise ValueError("session already closed")
        self._closed = True
        streams = [enc.finish() for enc in self._encoders]
        return CompressedContainer(self.spec, self.bins, streams)


def compress(dataset: TrafficDataset, model, mode: str | None = None, w_past: int | None = None,
             trace: TraceHook | None = None) -> "CompressedContainer":
    """Compress a dataset with a trained model or a baseline method name."""
    spec = build_spec(dataset, model, mode, w_past)
    if dataset.v_max > spec.v_max:
        raise ValueError("dataset exceeds the alphabet of the coding spec")
    session = CompressionSession(spec, trace)
    for row in dataset.values:
        session.push_bin(row)
    return session.close()


def decompress(container, model: PredictorModel | None = None,
               trace: TraceHook | None = None) -> TrafficDataset:
    if isinstance(container, (bytes, bytearray)):
        container = CompressedContainer.from_bytes(bytes(container))
    spec = container.resolve_spec(model)
    n = spec.topology.num_links
    decoders = [RangeDecoder(s) for s in container.streams]
    coder = _Coder(spec, trace)
    values = np.zeros((container.num_bins, n), dtype=np.int64)

    def decode(link, dist):
        dec = decoders[link]
        v = dist.invert(dec.target())
        dec.consume(*dist.interval(v))
        if v > spec.v_max:
            raise DecodeError(f"decoded value {v} exceeds v_max")
        return v

    for t in range(container.num_bins):
        history = values[max(0, t - spec.w_past):t]
        values[t] = coder.code_bin(t, history, decode)
    return TrafficDataset(spec.topology, values, spec.bin_duration_s, spec.v_max)


# container format ----------------------------------------------------------

_HEADER = struct.Struct("<4sHBBIIIQHd32s")


def _varint(n: int) -> bytes:
    out = bytearray()
    while True:
        byte = n & 0x7F
        n >>= 7
        if n:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _read_varint(buf: bytes, off: int) -> tuple[int, int]:
    shift = value = 0
    while True:
        if off >= len(buf):
            raise ContainerError("truncated varint")
        byte = buf[off]
        off += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, off
        shift += 7


def _pack_tables(tables: list[HistogramModel] | None) -> bytes:
    if not tables:
        return b""
    out = bytearray(_varint(len(tables)))
    for tab in tables:
        out += _varint(len(tab.values))
        prev = 0
        for v, c in zip(tab.values, tab.counts):
            out += _varint(v - prev) + _varint(c)
            prev = v
    return bytes(out)


def _unpack_tables(blob: bytes, alphabet: SymbolAlphabet) -> list[HistogramModel] | None:
    if not blob:
        return None
    n, off = _read_varint(blob, 0)
    tables = []
    for _ in range(n):
        k, off = _read_varint(blob, off)
        vals, counts, prev = [], [], 0
        for _ in range(k):
            d, off = _read_varint(blob, off)
            c, off = _read_varint(blob, off)
            prev += d
            vals.append(prev)
            counts.append(c)
        tables.append(HistogramModel(alphabet, vals, counts))
    if off != len(blob):
        raise ContainerError("trailing bytes in model parameter block")
    return tables


@dataclass
class CompressedContainer:
    spec: CodingSpec
    num_bins: int
    streams: list[CodedStream]
    model_hash: bytes = field(default=b"")

    def __post_init__(self):
        if not self.model_hash:
            self.model_hash = self.spec.model_hash

    def to_bytes(self) -> bytes:
        spec = self.spec
        buf = io.BytesIO()
        buf.write(_HEADER.pack(CONTAINER_MAGIC, CONTAINER_VERSION, METHODS.index(spec.method),
                               MODES.index(spec.mode), spec.topology.num_nodes, spec.topology.num_links,
                               self.num_bins, spec.v_max, spec.w_past, spec.bin_duration_s, self.model_hash))
        blob = _pack_tables(spec.static_tables)
        buf.write(struct.pack("<I", len(blob)) + blob)
        for tail, head in spec.topology.links:
            buf.write(struct.pack("<II", tail, head))
        for s in self.streams:
            buf.write(struct.pack("<II", s.symbol_count, len(s.data)) + s.data)
        body = buf.getvalue()
        return body + struct.pack("<I", zlib.crc32(body))

    @property
    def size(self) -> int:
        return len(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "CompressedContainer":
        if len(data) < _HEADER.size + 8 or data[:4] != CONTAINER_MAGIC:
            raise ContainerError("not a compressed container (bad magic or too short)")
        body, crc = data[:-4], struct.unpack("<I", data[-4:])[0]
        if zlib.crc32(body) != crc:
            raise ContainerError("container checksum mismatch")
        try:
            (_, version, method_idx, mode_idx, n_nodes, n_links, n_bins, v_max, w_past, dur,
             model_hash) = _HEADER.unpack_from(body, 0)
            if version != CONTAINER_VERSION:
                raise ContainerError(f"unsupported container version {version}")
            off = _HEADER.size
            (blob_len,) = struct.unpack_from("<I", body, off)
            off += 4
            blob = body[off:off + blob_len]
            off += blob_len
            links = []
            for _ in range(n_links):
                links.append(struct.unpack_from("<II", body, off))
                off += 8
            streams = []
            for _ in range(n_links):
                count, nbytes = struct.unpack_from("<II", body, off)
                off += 8
                if off + nbytes > len(body):
                    raise ContainerError("truncated stream")
                streams.append(CodedStream(body[off:off + nbytes], count))
                off += nbytes
        except struct.error as exc:
            raise ContainerError(f"malformed container: {exc}") from None
        if off != len(body):
            raise ContainerError("trailing bytes after the last stream")
        if any(s.symbol_count != n_bins for s in streams):
            raise ContainerError("stream symbol count differs from the bin count")
        topology = Topology(n_nodes, links)
        alphabet = SymbolAlphabet(v_max)
        method = METHODS[method_idx]
        spec = _PendingSpec(method, MODES[mode_idx], topology, v_max, w_past, dur,
                            _unpack_tables(blob, alphabet))
        return cls(spec, n_bins, streams, model_hash)  # type: ignore[arg-type]

    def resolve_spec(self, model: PredictorModel | None) -> CodingSpec:
        spec = self.spec
        if isinstance(spec, CodingSpec) and (model is None or model is spec.model):
            return spec
        if spec.method in (RNN, STGNN):
            if model is None:
                raise ModelMismatch(f"container was produced by {spec.method}; a model is required")
            if bytes.fromhex(model.content_hash) != self.model_hash:
                raise ModelMismatch("model content hash does not match the container")
            if model.w_past != spec.w_past:
                raise ModelMismatch("model window length does not match the container")
        else:
            model = None
        return CodingSpec(spec.method, spec.mode, spec.topology, spec.v_max, spec.w_past,
                          spec.bin_duration_s, model, spec.static_tables)


@dataclass
class _PendingSpec:
    """Container header fields before a model has been attached."""

    method: str
    mode: str
    topology: Topology
    v_max: int
    w_past: int
    bin_duration_s: float
    static_tables: list[HistogramModel] | None


def dataset_digest(dataset: TrafficDataset) -> str:
    return hashlib.sha256(dataset.values.astype("<i8").tobytes()).hexdigest()
