"""Synthetic correlated link traffic and correlation diagnostics."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .core import CorrelationUndefined, Topology, TrafficDataset, pearson

NSFNET_EDGES = (
    (0, 1), (0, 2), (0, 3), (1, 2), (1, 7), (2, 5), (3, 4), (3, 8), (4, 5), (4, 6), (5, 12),
    (5, 13), (6, 7), (7, 10), (8, 9), (8, 11), (9, 10), (9, 12), (10, 11), (10, 13), (11, 12),
)


def nsfnet() -> Topology:
    """NSFNet: 14 nodes, 21 bidirectional edges (42 directed links)."""
    return Topology.bidirectional(14, NSFNET_EDGES)


class UnreachableError(ValueError):
    pass


def shortest_paths(topology: Topology) -> dict[tuple[int, int], tuple[int, ...]]:
    """Hop-count shortest path (as link ids) for every ordered node pair.

    Ties are broken towards the lexicographically smallest node sequence: a
    BFS that scans out-neighbors in ascending order reaches each node first
    along that sequence.
    """
    out: dict[int, list[tuple[int, int]]] = {n: [] for n in range(topology.num_nodes)}
    for idx, (tail, head) in enumerate(topology.links):
        out[tail].append((head, idx))
    for n in out:
        out[n].sort()
    paths = {}
    for src in range(topology.num_nodes):
        parent: dict[int, tuple[int, int]] = {src: (-1, -1)}
        dist = {src: 0}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v, link in out[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    parent[v] = (u, link)
                    queue.append(v)
        for dst in range(topology.num_nodes):
            if dst == src:
                continue
            if dst not in parent:
                raise UnreachableError(f"node {dst} unreachable from {src}")
            links = []
            node = dst
            while node != src:
                node, link = parent[node]
                links.append(link)
            paths[(src, dst)] = tuple(reversed(links))
    return paths


@dataclass
class ARNoise:
    coefficients: tuple[float, ...] = (0.8,)
    innovation_std: float = 10.0

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        p = len(self.coefficients)
        eps = rng.normal(0.0, self.innovation_std, size=n + p)
        x = np.zeros(n + p)
        for t in range(p, n + p):
            x[t] = eps[t] + sum(c * x[t - 1 - i] for i, c in enumerate(self.coefficients))
        return x[p:]


@dataclass
class FlowSignalSpec:
    amplitude: float = 40.0
    period: float = 48.0
    phase: float = 0.0
    noise_std: float = 2.0
    ar_noise: ARNoise | None = None

    def __post_init__(self):
        if self.period < 2:
            raise ValueError("period must be at least 2 bins")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        t = np.arange(n)
        x = self.amplitude * (np.sin(2 * np.pi * (t + self.phase) / self.period) + 1.0)
        if self.noise_std > 0:
            x = x + rng.normal(0.0, self.noise_std, size=n)
        if self.ar_noise is not None:
            x = x + self.ar_noise.sample(rng, n)
        lo = x.min()
        return x - lo if lo < 0 else x


@dataclass
class SynthConfig:
    topology: Topology = field(default_factory=nsfnet)
    bins: int = 1004
    spatial_pct: float = 100.0
    temporal_pct: float = 100.0
    seed: int = 0
    amplitude: float = 40.0
    period_range: tuple[float, float] = (24.0, 96.0)
    noise_std: float = 2.0
    ar_noise: ARNoise = field(default_factory=ARNoise)
    bin_duration_s: float = 300.0

    def __post_init__(self):
        for pct in (self.spatial_pct, self.temporal_pct):
            if not 0 <= pct <= 100:
                raise ValueError("correlation percentages must lie in [0, 100]")
        if self.bins < 1:
            raise ValueError("bins must be >= 1")


def flow_specs(config: SynthConfig) -> list[tuple[tuple[int, int], FlowSignalSpec]]:
    """One signal spec per ordered node pair.

    A ``spatial_pct`` share of flows copies a master period/phase; the rest
    draw their own. A ``100 - temporal_pct`` share gets AR noise on top.
    """
    rng = np.random.default_rng([config.seed, 0])
    n = config.topology.num_nodes
    pairs = [(s, d) for s in range(n) for d in range(n) if s != d]
    lo, hi = config.period_range
    master_period = rng.uniform(lo, hi)
    master_phase = rng.uniform(0, master_period)
    n_flows = len(pairs)
    shared = np.zeros(n_flows, dtype=bool)
    shared[rng.permutation(n_flows)[: int(round(n_flows * config.spatial_pct / 100))]] = True
    noisy = np.zeros(n_flows, dtype=bool)
    noisy[rng.permutation(n_flows)[: int(round(n_flows * (100 - config.temporal_pct) / 100))]] = True
    specs = []
    for i, pair in enumerate(pairs):
        if shared[i]:
            period, phase = master_period, master_phase
        else:
            period = rng.uniform(lo, hi)
            phase = rng.uniform(0, period)
        specs.append((pair, FlowSignalSpec(config.amplitude, period, phase, config.noise_std,
                                           config.ar_noise if noisy[i] else None)))
    return specs


def gen_flows(config: SynthConfig):
    """Routed flows: ``(paths, specs, flow_matrix)`` with ``flow_matrix[t, f]``."""
    paths = shortest_paths(config.topology)
    specs = flow_specs(config)
    flows = np.empty((config.bins, len(specs)))
    for f, (pair, spec) in enumerate(specs):
        flows[:, f] = spec.sample(np.random.default_rng([config.seed, 1, f]), config.bins)
    return paths, specs, flows


def routing_matrix(topology: Topology, paths, specs) -> np.ndarray:
    """``R[f, link] = 1`` if flow ``f`` traverses ``link``."""
    r = np.zeros((len(specs), topology.num_links))
    for f, (pair, _) in enumerate(specs):
        r[f, list(paths[pair])] = 1.0
    return r


def gen_synthetic(config: SynthConfig) -> TrafficDataset:
    paths, specs, flows = gen_flows(config)
    link_load = flows @ routing_matrix(config.topology, paths, specs)
    values = np.rint(link_load).astype(np.int64)
    return TrafficDataset(config.topology, values, config.bin_duration_s)


@dataclass
class CorrelationReport:
    pearson: np.ndarray  # (L, L), NaN where undefined
    mean_drift: np.ndarray
    var_drift: np.ndarray

    @property
    def drift(self) -> np.ndarray:
        return self.mean_drift + self.var_drift

    def offdiag(self) -> np.ndarray:
        n = self.pearson.shape[0]
        vals = self.pearson[~np.eye(n, dtype=bool)]
        return vals[np.isfinite(vals)]

    def median_abs_pearson(self) -> float:
        vals = self.offdiag()
        return float(np.median(np.abs(vals))) if vals.size else float("nan")

    def median_drift(self) -> float:
        d = self.drift
        d = d[np.isfinite(d)]
        return float(np.median(d)) if d.size else float("nan")

    def format(self) -> str:
        lines = [
            f"links: {self.pearson.shape[0]}",
            f"median |pearson| (off-diagonal): {self.median_abs_pearson():.4f}",
            f"median drift (mean + variance): {self.median_drift():.4f}",
            "link,mean_drift,var_drift",
        ]
        for i, (m, v) in enumerate(zip(self.mean_drift, self.var_drift)):
            lines.append(f"{i},{_fmt(m)},{_fmt(v)}")
        return "\n".join(lines)


def _fmt(x: float) -> str:
    return "n/a" if not np.isfinite(x) else f"{x:.6f}"


def correlation_report(dataset: TrafficDataset) -> CorrelationReport:
    """Pairwise Pearson matrix and first-half/second-half drift per link.

    Mean drift is ``|mean1 - mean2| / std`` and variance drift is
    ``|var1 - var2| / var``, both against the full-series statistics.
    """
    vals = dataset.values.astype(np.float64)
    n_bins, n_links = vals.shape
    if n_bins < 4:
        raise ValueError("correlation report needs at least 4 bins")
    corr = np.full((n_links, n_links), np.nan)
    for i in range(n_links):
        for j in range(i, n_links):
            try:
                corr[i, j] = corr[j, i] = pearson(vals[:, i], vals[:, j])
            except CorrelationUndefined:
                pass
    half = n_bins // 2
    a, b = vals[:half], vals[half:]
    std = vals.std(axis=0)
    var = vals.var(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean_drift = np.where(std > 0, np.abs(a.mean(0) - b.mean(0)) / std, np.nan)
        var_drift = np.where(var > 0, np.abs(a.var(0) - b.var(0)) / var, np.nan)
    return CorrelationReport(corr, mean_drift, var_drift)
