"""Recurrent and spatio-temporal graph predictors.

Per link and per bin the input features are ``[T(v), known]`` where ``T``
is the log1p/standardize transform and masked values are zeroed. One bin of
the recurrence is::

    e_i  = tanh([x_i, k_i, h_i] @ embed.W + embed.b)
    m_i  = tanh(e_i @ msg.W + msg.b)                  # graph model only
    a_i  = sum of m_j over neighbors j of i           # graph model only
    h_i' = GRU([e_i, a_i], h_i)                       # single-link: GRU(e_i, h_i)

After the last bin (the masked bin being coded) a readout MLP maps ``h_i`` to
``(mu, b_raw)`` and ``b = softplus(b_raw) + b_min``.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass

import numpy as np

from ..core import LinkGraph, TrafficWindow, build_link_graph
from ..models import B_MIN, DistParams, LogTransform
from . import tensor as tn
from .tensor import Tensor

SINGLE_LINK = "single_link_rnn"
NETWORK = "network_stgnn"
KINDS = (SINGLE_LINK, NETWORK)
NUM_FEATURES = 2
MODEL_MAGIC = b"NTCM"
MODEL_VERSION = 1


def param_shapes(kind: str, hidden: int) -> dict[str, tuple[int, ...]]:
    h = hidden
    gru_in = 2 * h if kind == NETWORK else h
    shapes = {
        "embed.W": (NUM_FEATURES + h, h),
        "embed.b": (h,),
        "gru.Wx": (gru_in, 3 * h),
        "gru.Uzr": (h, 2 * h),
        "gru.Un": (h, h),
        "gru.b": (3 * h,),
        "readout.W1": (h, h),
        "readout.b1": (h,),
        "readout.W2": (h, 2),
        "readout.b2": (2,),
    }
    if kind == NETWORK:
        shapes["msg.W"] = (h, h)
        shapes["msg.b"] = (h,)
    return dict(sorted(shapes.items()))


@dataclass
class PredictorModel:
    kind: str
    hidden_size: int
    w_past: int
    transform: LogTransform
    params: dict[str, np.ndarray]
    b_min: float = B_MIN

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown predictor kind {self.kind!r}")
        if self.hidden_size < 1 or self.w_past < 1:
            raise ValueError("hidden_size and w_past must be >= 1")
        expected = param_shapes(self.kind, self.hidden_size)
        if set(expected) != set(self.params):
            raise ValueError("parameter set does not match the architecture")
        for name, shape in expected.items():
            arr = np.asarray(self.params[name], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name}: shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name}: non-finite weights")
            self.params[name] = arr

    @classmethod
    def initialize(cls, kind: str, hidden_size: int, w_past: int, transform: LogTransform,
                   rng: np.random.Generator) -> "PredictorModel":
        params = {}
        for name, shape in param_shapes(kind, hidden_size).items():
            if len(shape) == 1:
                params[name] = np.zeros(shape)
            else:
                limit = np.sqrt(6.0 / (shape[0] + shape[1]))
                params[name] = rng.uniform(-limit, limit, size=shape)
        return cls(kind, hidden_size, w_past, transform, params)

    @classmethod
    def zeros(cls, kind: str, hidden_size: int, w_past: int, transform=None) -> "PredictorModel":
        params = {n: np.zeros(s) for n, s in param_shapes(kind, hidden_size).items()}
        return cls(kind, hidden_size, w_past, transform or LogTransform(), params)

    def with_params(self, params: dict[str, np.ndarray]) -> "PredictorModel":
        return PredictorModel(self.kind, self.hidden_size, self.w_past, self.transform,
                              {k: np.array(v, dtype=np.float64) for k, v in params.items()}, self.b_min)

    # serialization -----------------------------------------------------
    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(MODEL_MAGIC)
        buf.write(struct.pack("<HBIIddd", MODEL_VERSION, KINDS.index(self.kind), self.hidden_size,
                              self.w_past, self.transform.mean, self.transform.std, self.b_min))
        buf.write(struct.pack("<I", len(self.params)))
        for name in sorted(self.params):
            arr = self.params[name]
            enc = name.encode()
            buf.write(struct.pack("<H", len(enc)) + enc)
            buf.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
            buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        body = buf.getvalue()
        return body + hashlib.sha256(body).digest()

    @classmethod
    def from_bytes(cls, data: bytes) -> "PredictorModel":
        if data[:4] != MODEL_MAGIC:
            raise ValueError("not a model file (bad magic)")
        body, digest = data[:-32], data[-32:]
        if hashlib.sha256(body).digest() != digest:
            raise ValueError("model file content hash mismatch")
        off = 4
        version, kind_idx, hidden, w_past, m, s, b_min = struct.unpack_from("<HBIIddd", body, off)
        if version != MODEL_VERSION:
            raise ValueError(f"unsupported model version {version}")
        off += struct.calcsize("<HBIIddd")
        (count,) = struct.unpack_from("<I", body, off)
        off += 4
        params = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", body, off)
            off += 2
            name = body[off:off + n].decode()
            off += n
            (ndim,) = struct.unpack_from("<B", body, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", body, off)
            off += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            params[name] = np.frombuffer(body, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
            off += 8 * size
        if off != len(body):
            raise ValueError("trailing bytes in model file")
        return cls(KINDS[kind_idx], hidden, w_past, LogTransform(m, s), params, b_min)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "PredictorModel":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    @property
    def content_hash(self) -> str:
        """SHA-256 of the serialized model; binds containers to exact weights."""
        return hashlib.sha256(self.to_bytes()).hexdigest()


# forward pass ------------------------------------------------------------

def _as_tensors(params, grad: bool = False) -> dict[str, Tensor]:
    return {k: (v if isinstance(v, Tensor) else Tensor(v, requires_grad=grad)) for k, v in params.items()}


def gru_step(p: dict[str, Tensor], x, h) -> Tensor:
    """Gated recurrent update: ``h' = (1 - z) * h + z * tanh(x Wn + (r * h) Un + bn)``."""
    x, h = tn._wrap(x), tn._wrap(h)
    hidden = h.shape[-1]
    if p["gru.Wx"].shape[0] != x.shape[-1] or p["gru.Un"].shape[0] != hidden:
        raise ValueError("gru_step: input/state shape does not match the weights")
    gx = x @ p["gru.Wx"] + p["gru.b"]
    gh = h @ p["gru.Uzr"]
    z = tn.sigmoid(gx[..., :hidden] + gh[..., :hidden])
    r = tn.sigmoid(gx[..., hidden:2 * hidden] + gh[..., hidden:])
    n = tn.tanh(gx[..., 2 * hidden:] + (r * h) @ p["gru.Un"])
    return h + z * (n - h)


def _bin_step(p, kind, adj, x, known, h) -> Tensor:
    feats = tn.concat([Tensor(x[..., None]), Tensor(known[..., None]), h])
    e = tn.tanh(feats @ p["embed.W"] + p["embed.b"])
    if kind == NETWORK:
        m = tn.tanh(e @ p["msg.W"] + p["msg.b"])
        e = tn.concat([e, tn.graph_sum(adj, m)])
    return gru_step(p, e, h)


def _readout(p, h, b_min):
    hid = tn.tanh(h @ p["readout.W1"] + p["readout.b1"])
    out = hid @ p["readout.W2"] + p["readout.b2"]
    mu = out[..., 0]
    b = tn.softplus(out[..., 1]) + b_min
    return mu, b


def encode_past(p, kind: str, adj, past_x: np.ndarray) -> Tensor:
    """Hidden states after the fully known past bins.

    ``past_x`` has shape ``(..., w_past, L)`` in transformed space.
    """
    lead = past_x.shape[:-2] + (past_x.shape[-1],)
    hidden = p["gru.Un"].shape[0]
    h = Tensor(np.zeros(lead + (hidden,)))
    ones = np.ones(lead)
    for t in range(past_x.shape[-2]):
        h = _bin_step(p, kind, adj, past_x[..., t, :], ones, h)
    return h


def label_step(p, kind: str, adj, h, label_x: np.ndarray, known: np.ndarray, b_min: float):
    """Masked step over the bin being coded, then the readout."""
    known = known.astype(np.float64)
    h = _bin_step(p, kind, adj, np.where(known > 0, label_x, 0.0), known, h)
    return _readout(p, h, b_min)


def adjacency_for(model_or_kind, graph: LinkGraph | None, num_links: int) -> np.ndarray:
    kind = getattr(model_or_kind, "kind", model_or_kind)
    if kind == NETWORK:
        if graph is None:
            raise ValueError("the graph predictor needs a link graph")
        if graph.num_links != num_links:
            raise ValueError(f"graph has {graph.num_links} links, window has {num_links}")
        return graph.adjacency()
    return np.zeros((num_links, num_links))


def stgnn_forward(model: PredictorModel, window: TrafficWindow, graph: LinkGraph) -> list[DistParams]:
    if model.kind != NETWORK:
        raise ValueError("stgnn_forward needs a network_stgnn model")
    if window.past.shape[0] != model.w_past:
        raise ValueError(f"window has {window.past.shape[0]} past bins, model expects {model.w_past}")
    adj = adjacency_for(model, graph, window.past.shape[1])
    tf = model.transform
    with tn.no_grad():
        p = _as_tensors(model.params)
        h = encode_past(p, model.kind, adj, tf(window.past))
        mu, b = label_step(p, model.kind, adj, h, tf(window.label_bin), window.mask.known, model.b_min)
    return [DistParams(float(m), float(s)) for m, s in zip(mu.data, b.data)]


def rnn_forward(model: PredictorModel, series) -> DistParams:
    """Prediction for the bin following ``series`` (length ``w_past``) of one link."""
    if model.kind != SINGLE_LINK:
        raise ValueError("rnn_forward needs a single_link_rnn model")
    series = np.asarray(series)
    if series.shape != (model.w_past,):
        raise ValueError(f"expected {model.w_past} past values, got shape {series.shape}")
    mu, b = predict_arrays(model, None, series[:, None], np.zeros(1), np.zeros(1, dtype=bool))
    return DistParams(float(mu[0]), float(b[0]))


def predict_arrays(model: PredictorModel, adj, past_values: np.ndarray, label_values: np.ndarray,
                   known: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Raw ``(mu, b)`` arrays for one window; ``past_values`` is ``(w_past, L)``."""
    if adj is None:
        adj = np.zeros((past_values.shape[1],) * 2)
    tf = model.transform
    with tn.no_grad():
        p = _as_tensors(model.params)
        h = encode_past(p, model.kind, adj, tf(past_values))
        mu, b = label_step(p, model.kind, adj, h, tf(label_values), known, model.b_min)
    return mu.data, b.data


class InferenceSession:
    """Caches the past-bin hidden states so the masked step can be re-run cheaply.

    Encoder and decoder drive identical call sequences through this class,
    which keeps their predictions bit-identical.
    """

    def __init__(self, model: PredictorModel, graph: LinkGraph | None, num_links: int):
        self.model = model
        self.adj = adjacency_for(model, graph, num_links)
        self._p = _as_tensors(model.params)
        self._h = None

    def start_bin(self, past_values: np.ndarray) -> None:
        with tn.no_grad():
            self._h = encode_past(self._p, self.model.kind, self.adj, self.model.transform(past_values))

    def predict(self, label_values: np.ndarray, known: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = self.model.transform(np.where(known, label_values, 0))
        with tn.no_grad():
            mu, b = label_step(self._p, self.model.kind, self.adj, self._h, x, known, self.model.b_min)
        return mu.data, b.data


def laplace_nll(params: DistParams, x: float) -> float:
    if not params.b > 0:
        raise ValueError("Laplace scale must be positive")
    return float(np.log(2.0 * params.b) + abs(x - params.mu) / params.b)


def laplace_nll_tensor(mu: Tensor, b: Tensor, x: np.ndarray) -> Tensor:
    """Elementwise ``log(2b) + |x - mu| / b``."""
    return tn.log(b * 2.0) + tn.absolute(tn.sub(x, mu)) * tn.reciprocal(b)


def default_graph(topology) -> LinkGraph:
    return build_link_graph(topology)
