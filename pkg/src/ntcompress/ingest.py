"""CSV loading, gap cleaning and chronological splitting."""

from __future__ import annotations

import csv
import gzip
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Topology, TrafficDataset

DROP = "drop_bins_with_gaps"
FILL = "fill_previous"
POLICIES = (DROP, FILL)


class CSVFormatError(ValueError):
    pass


def _open_text(path):
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, encoding="utf-8", newline="")


@dataclass
class RawTable:
    """Parsed CSV before cleaning: a time index and a float matrix with NaN gaps."""

    times: np.ndarray
    values: np.ndarray

    @property
    def has_gaps(self) -> bool:
        return bool(np.isnan(self.values).any())


def read_table(path, num_links: int | None = None, allow_gaps: bool = False) -> RawTable:
    """Parse ``t,link_0,...`` rows. Empty cells are gaps (NaN) when ``allow_gaps``."""
    times, rows = [], []
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CSVFormatError(f"{path}: empty file") from None
        if not header or header[0].strip() != "t":
            raise CSVFormatError(f"{path}: line 1: header must start with 't'")
        n = len(header) - 1
        if num_links is not None and n != num_links:
            raise CSVFormatError(f"{path}: line 1: header has {n} link columns, topology has {num_links}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n + 1:
                raise CSVFormatError(f"{path}: line {lineno}: expected {n + 1} columns, got {len(row)}")
            try:
                times.append(int(row[0]))
            except ValueError:
                raise CSVFormatError(f"{path}: line {lineno}, column t: non-integer time {row[0]!r}") from None
            vals = []
            for col, cell in enumerate(row[1:]):
                cell = cell.strip()
                if cell == "" and allow_gaps:
                    vals.append(math.nan)
                    continue
                try:
                    v = int(cell)
                except ValueError:
                    raise CSVFormatError(
                        f"{path}: line {lineno}, column link_{col}: non-integer value {cell!r}") from None
                if v < 0:
                    raise CSVFormatError(f"{path}: line {lineno}, column link_{col}: negative value {v}")
                vals.append(float(v))
            rows.append(vals)
    values = np.array(rows, dtype=np.float64).reshape(len(rows), n)
    return RawTable(np.array(times, dtype=np.int64), values)


def load_csv(path, topology_path) -> TrafficDataset:
    """Load a gapless CSV (optionally gzip-compressed) against a topology file."""
    topology = Topology.load(topology_path)
    table = read_table(path, topology.num_links)
    if table.values.shape[0] == 0:
        raise CSVFormatError(f"{path}: no data rows")
    return TrafficDataset(topology, table.values.astype(np.int64))


def save_csv(dataset: TrafficDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dataset_to_csv(dataset))


def dataset_to_csv(dataset: TrafficDataset) -> str:
    out = io.StringIO()
    out.write(",".join(["t"] + [f"link_{j}" for j in range(dataset.num_links)]) + "\n")
    for t, row in enumerate(dataset.values.tolist()):
        out.write(f"{t}," + ",".join(map(str, row)) + "\n")
    return out.getvalue()


@dataclass
class CleanReport:
    policy: str
    removed_bins: list[int] = field(default_factory=list)
    filled_bins: list[int] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.removed_bins and not self.filled_bins


def clean(table: RawTable, policy: str = DROP) -> tuple[RawTable, CleanReport]:
    """Remove or forward-fill bins with missing cells.

    Under ``fill_previous`` missing time stamps are materialized and filled
    too; leading gaps cannot be filled and are dropped and reported as
    removed. Under the drop policy a missing stamp has no row to remove.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown cleaning policy {policy!r}")
    report = CleanReport(policy)
    times, values = table.times, table.values
    if len(times) == 0:
        return RawTable(times.copy(), values.copy()), report
    order = np.argsort(times, kind="stable")
    times, values = times[order], values[order]
    # materialize missing time stamps as all-NaN rows
    full_t = np.arange(times[0], times[-1] + 1)
    if policy == FILL and (len(full_t) != len(times) or np.any(full_t != times)):
        grid = np.full((len(full_t), values.shape[1]), np.nan)
        keep = np.unique(times, return_index=True)[1]
        grid[times[keep] - times[0]] = values[keep]
        times, values = full_t, grid
    gap = np.isnan(values).any(axis=1)
    if policy == DROP:
        report.removed_bins = times[gap].tolist()
        return RawTable(times[~gap], values[~gap]), report
    values = values.copy()
    keep = np.ones(len(times), dtype=bool)
    last = None
    for i in range(len(times)):
        row = values[i]
        if np.isnan(row).any():
            if last is None:
                keep[i] = False
                report.removed_bins.append(int(times[i]))
                continue
            row[np.isnan(row)] = last[np.isnan(row)]
            report.filled_bins.append(int(times[i]))
        last = row
    return RawTable(times[keep], values[keep]), report


def load_and_clean(path, topology_path, policy: str = DROP) -> tuple[TrafficDataset, CleanReport]:
    topology = Topology.load(topology_path)
    table, report = clean(read_table(path, topology.num_links, allow_gaps=True), policy)
    if table.values.shape[0] == 0:
        raise CSVFormatError(f"{path}: no complete bins after cleaning")
    return TrafficDataset(topology, table.values.astype(np.int64)), report


def split_windows(num_bins: int, fraction: float, w_past: int) -> tuple[np.ndarray, np.ndarray]:
    """Label-bin indices of the train and eval windows (chronological)."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    n = num_bins - w_past
    if n < 2:
        raise ValueError(f"need at least 2 windows, have {max(n, 0)}")
    n_train = min(max(1, int(round(fraction * n))), n - 1)
    labels = np.arange(w_past, num_bins)
    return labels[:n_train], labels[n_train:]


def chronological_split(dataset: TrafficDataset, fraction: float = 0.7,
                        w_past: int = 4) -> tuple[TrafficDataset, TrafficDataset]:
    """Split on windows. Eval keeps the ``w_past`` context bins preceding its first label."""
    train_labels, eval_labels = split_windows(dataset.num_bins, fraction, w_past)
    train = dataset.slice_bins(0, int(train_labels[-1]) + 1)
    evaluation = dataset.slice_bins(int(eval_labels[0]) - w_past, dataset.num_bins)
    return train, evaluation
