"""Domain types shared across the package: topology, traffic matrices, masks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class TopologyError(ValueError):
    pass


class CorrelationUndefined(ValueError):
    """Raised when Pearson correlation is requested for a constant vector."""


@dataclass(frozen=True)
class Topology:
    """Directed network topology.

    Links are kept in canonical order (sorted by ``(tail, head)``); a link's
    position in :attr:`links` is its id everywhere else in the package.
    """

    num_nodes: int
    links: tuple[tuple[int, int], ...]

    def __init__(self, num_nodes: int, links: Iterable[Sequence[int]]):
        canon = tuple(sorted((int(a), int(b)) for a, b in links))
        if num_nodes < 1:
            raise TopologyError("topology needs at least one node")
        for tail, head in canon:
            if tail == head:
                raise TopologyError(f"self-loop on node {tail}")
            if not (0 <= tail < num_nodes and 0 <= head < num_nodes):
                raise TopologyError(f"link ({tail}, {head}) references a node >= {num_nodes}")
        if len(set(canon)) != len(canon):
            raise TopologyError("duplicate link")
        object.__setattr__(self, "num_nodes", int(num_nodes))
        object.__setattr__(self, "links", canon)

    @property
    def num_links(self) -> int:
        return len(self.links)

    def link_id(self, tail: int, head: int) -> int:
        return self.links.index((tail, head))

    def to_text(self) -> str:
        lines = [f"nodes {self.num_nodes}"]
        lines += [f"{a} {b}" for a, b in self.links]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Topology":
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if not rows or len(rows[0]) != 2 or rows[0][0] != "nodes":
            raise TopologyError("topology file must start with 'nodes N'")
        try:
            n = int(rows[0][1])
            links = []
            for i, row in enumerate(rows[1:], start=2):
                if len(row) != 2:
                    raise TopologyError(f"line {i}: expected 'tail head'")
                links.append((int(row[0]), int(row[1])))
        except ValueError as exc:
            raise TopologyError(f"non-integer entry in topology file: {exc}") from None
        return cls(n, links)

    @classmethod
    def load(cls, path) -> "Topology":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def bidirectional(cls, num_nodes: int, edges: Iterable[Sequence[int]]) -> "Topology":
        links = []
        for a, b in edges:
            links += [(a, b), (b, a)]
        return cls(num_nodes, links)


@dataclass(frozen=True)
class TrafficDataset:
    """Per-link traffic volume per time bin, ``values[t, link]``."""

    topology: Topology
    values: np.ndarray
    bin_duration_s: float = 300.0
    v_max: int = -1

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.ndim != 2:
            raise ValueError("values must be a T x L matrix")
        if vals.shape[0] < 1:
            raise ValueError("dataset needs at least one bin")
        if vals.shape[1] != self.topology.num_links:
            raise ValueError(f"dataset has {vals.shape[1]} columns, topology has {self.topology.num_links} links")
        if not np.issubdtype(vals.dtype, np.integer):
            if not np.all(np.equal(np.mod(vals, 1), 0)):
                raise ValueError("traffic values must be integers")
        vals = vals.astype(np.int64)
        if vals.min() < 0:
            raise ValueError("traffic values must be nonnegative")
        vmax = int(vals.max()) if self.v_max < 0 else int(self.v_max)
        if int(vals.max()) > vmax:
            raise ValueError(f"value {int(vals.max())} exceeds v_max={vmax}")
        if vmax >= 1 << 32:
            raise ValueError("alphabet larger than 2^32 symbols is not supported")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "v_max", vmax)

    @property
    def num_bins(self) -> int:
        return self.values.shape[0]

    @property
    def num_links(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, TrafficDataset):
            return NotImplemented
        return (
            self.topology == other.topology
            and self.v_max == other.v_max
            and self.bin_duration_s == other.bin_duration_s
            and np.array_equal(self.values, other.values)
        )

    def slice_bins(self, start: int, stop: int) -> "TrafficDataset":
        return TrafficDataset(self.topology, self.values[start:stop], self.bin_duration_s, self.v_max)


@dataclass
class Mask:
    """Which links of the bin being coded are already known."""

    known: np.ndarray

    @classmethod
    def all_unknown(cls, num_links: int) -> "Mask":
        return cls(np.zeros(num_links, dtype=bool))

    def __len__(self):
        return len(self.known)

    def mark(self, link: int) -> None:
        self.known[link] = True

    def copy(self) -> "Mask":
        return Mask(self.known.copy())


@dataclass
class TrafficWindow:
    past: np.ndarray  # (w_past, L), all known
    label_bin: np.ndarray  # (L,)
    mask: Mask

    def __post_init__(self):
        self.past = np.asarray(self.past)
        self.label_bin = np.asarray(self.label_bin)
        if self.past.ndim != 2 or self.past.shape[0] < 1:
            raise ValueError("window needs w_past >= 1 past bins")
        if self.label_bin.shape != (self.past.shape[1],) or len(self.mask) != self.past.shape[1]:
            raise ValueError("label bin and mask must have one entry per link")


@dataclass(frozen=True)
class LinkGraph:
    predecessors: tuple[tuple[int, ...], ...]
    successors: tuple[tuple[int, ...], ...]
    neighbors: tuple[tuple[int, ...], ...] = field(repr=False)

    @property
    def num_links(self) -> int:
        return len(self.neighbors)

    def adjacency(self) -> np.ndarray:
        """Dense 0/1 matrix with ``A[i, j] = 1`` iff ``j`` is a neighbor of ``i``."""
        a = np.zeros((self.num_links, self.num_links))
        for i, nbrs in enumerate(self.neighbors):
            a[i, list(nbrs)] = 1.0
        return a


def build_link_graph(topology: Topology) -> LinkGraph:
    """Directed line-graph adjacency; neighbors are predecessors ∪ successors."""
    by_head: dict[int, list[int]] = {}
    by_tail: dict[int, list[int]] = {}
    for idx, (tail, head) in enumerate(topology.links):
        by_head.setdefault(head, []).append(idx)
        by_tail.setdefault(tail, []).append(idx)
    preds, succs, nbrs = [], [], []
    for tail, head in topology.links:
        p = tuple(sorted(by_head.get(tail, ())))
        s = tuple(sorted(by_tail.get(head, ())))
        preds.append(p)
        succs.append(s)
        nbrs.append(tuple(sorted(set(p) | set(s))))
    return LinkGraph(tuple(preds), tuple(succs), tuple(nbrs))


def compression_ratio(uncompressed_bytes: int, compressed_bytes: int) -> float:
    if compressed_bytes <= 0:
        raise ValueError("compressed size must be positive")
    return uncompressed_bytes / compressed_bytes


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1-D vectors of equal length")
    if len(x) < 2:
        raise ValueError("pearson needs at least two samples")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise CorrelationUndefined("correlation undefined for a constant vector")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def raw_value_dtype(v_max: int) -> np.dtype:
    """Smallest unsigned little-endian integer type holding ``v_max``."""
    for dt in ("<u1", "<u2", "<u4", "<u8"):
        if v_max <= np.iinfo(np.dtype(dt)).max:
            return np.dtype(dt)
    raise ValueError("v_max too large")


def raw_bytes(dataset: TrafficDataset) -> bytes:
    """Row-major binary dump of the value matrix; the uncompressed reference size."""
    return dataset.values.astype(raw_value_dtype(dataset.v_max)).tobytes()
