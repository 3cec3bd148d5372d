"""Comparative benchmark: coded methods against an external DEFLATE tool."""

from __future__ import annotations

import csv
import io
import os
import shutil
import subprocess
import time
from dataclasses import dataclass, field

import numpy as np

from .core import TrafficDataset, compression_ratio, raw_bytes, raw_value_dtype
from .neural.predictor import PredictorModel
from .pipeline import (
    ADAPTIVE_AC,
    NETWORK_WIDE,
    RNN,
    SINGLE,
    STATIC_AC,
    STGNN,
    UNIFORM,
    CompressionSession,
    build_spec,
)

DEFLATE = "deflate"
DEFLATE_PER_BIN = "deflate_per_bin"
BENCH_METHODS = (UNIFORM, STATIC_AC, ADAPTIVE_AC, RNN, STGNN, DEFLATE)
DEFLATE_ENV = "NTC_DEFLATE_TOOL"

CSV_FIELDS = ("method", "bytes", "cr", "improvement_vs_deflate_pct", "mean_bin_latency_s", "total_s")
# wall-clock columns; everything else is reproducible for fixed inputs
NONDETERMINISTIC_FIELDS = ("mean_bin_latency_s", "total_s")


class ToolUnavailable(RuntimeError):
    pass


@dataclass
class DeflateTool:
    path: str

    @classmethod
    def locate(cls) -> "DeflateTool":
        name = os.environ.get(DEFLATE_ENV, "gzip")
        path = shutil.which(name)
        if path is None:
            raise ToolUnavailable(f"deflate tool {name!r} not found")
        return cls(path)

    def version(self) -> str:
        try:
            out = subprocess.run([self.path, "--version"], capture_output=True, text=True, timeout=30)
        except OSError as exc:
            raise ToolUnavailable(str(exc)) from None
        lines = (out.stdout or out.stderr).strip().splitlines()
        return lines[0] if lines else os.path.basename(self.path)

    def compressed_size(self, data: bytes) -> int:
        # default level, no name/timestamp so output is reproducible
        try:
            out = subprocess.run([self.path, "-c", "-n"], input=data, capture_output=True, timeout=600)
        except OSError as exc:
            raise ToolUnavailable(str(exc)) from None
        if out.returncode != 0:
            raise ToolUnavailable(f"deflate tool failed: {out.stderr.decode(errors='replace').strip()}")
        return len(out.stdout)


@dataclass
class BenchRow:
    method: str
    bytes: int | None
    cr: float | None
    improvement_vs_deflate_pct: float | None = None
    mean_bin_latency_s: float | None = None
    total_s: float | None = None
    note: str = ""

    @property
    def available(self) -> bool:
        return self.bytes is not None


@dataclass
class BenchReport:
    uncompressed_bytes: int
    rows: list[BenchRow] = field(default_factory=list)
    deflate_tool: str = "unavailable"

    def row(self, method: str) -> BenchRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for r in self.rows:
            writer.writerow([r.method, _cell(r.bytes, "d"), _cell(r.cr, ".6f"),
                             _cell(r.improvement_vs_deflate_pct, ".3f"),
                             _cell(r.mean_bin_latency_s, ".6f"), _cell(r.total_s, ".3f")])
        return buf.getvalue()

    def to_text(self) -> str:
        rows = list(csv.reader(io.StringIO(self.to_csv())))
        rows = [[c if c else "-" for c in row] for row in rows]
        widths = [max(len(row[i]) for row in rows) for i in range(len(CSV_FIELDS))]
        lines = ["  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths)))
                 for row in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        for r in self.rows:
            if r.note:
                lines.append(f"# {r.method}: {r.note}")
        lines.append(f"# uncompressed bytes: {self.uncompressed_bytes}")
        lines.append(f"# deflate tool: {self.deflate_tool}")
        return "\n".join(lines)


def _cell(v, fmt: str) -> str:
    return "" if v is None else format(v, fmt)


def run_method(dataset: TrafficDataset, method, mode: str | None = None,
               w_past: int | None = None) -> tuple[int, list[float], float]:
    """Compress through a streaming session; returns (bytes, per-bin latencies, seconds)."""
    start = time.perf_counter()
    session = CompressionSession(build_spec(dataset, method, mode, w_past))
    for row in dataset.values:
        session.push_bin(row)
    size = len(session.close().to_bytes())
    return size, session.bin_latencies, time.perf_counter() - start


def deflate_row(dataset: TrafficDataset, tool: DeflateTool | None) -> BenchRow:
    if tool is None:
        return BenchRow(DEFLATE, None, None, note="unavailable: deflate tool not found")
    start = time.perf_counter()
    try:
        size = tool.compressed_size(raw_bytes(dataset))
    except ToolUnavailable as exc:
        return BenchRow(DEFLATE, None, None, note=f"unavailable: {exc}")
    return BenchRow(DEFLATE, size, compression_ratio(len(raw_bytes(dataset)), size),
                    total_s=time.perf_counter() - start)


def per_bin_deflate_baseline(dataset: TrafficDataset, tool: DeflateTool | None = None) -> BenchRow:
    """Deflate every bin's L values independently and sum the sizes."""
    if tool is None:
        try:
            tool = DeflateTool.locate()
        except ToolUnavailable as exc:
            return BenchRow(DEFLATE_PER_BIN, None, None, note=f"unavailable: {exc}")
    dtype = raw_value_dtype(dataset.v_max)
    start = time.perf_counter()
    total = 0
    try:
        for row in dataset.values:
            total += tool.compressed_size(row.astype(dtype).tobytes())
    except ToolUnavailable as exc:
        return BenchRow(DEFLATE_PER_BIN, None, None, note=f"unavailable: {exc}")
    elapsed = time.perf_counter() - start
    return BenchRow(DEFLATE_PER_BIN, total, compression_ratio(len(raw_bytes(dataset)), total),
                    mean_bin_latency_s=elapsed / dataset.num_bins, total_s=elapsed)


def bench_run(dataset: TrafficDataset, methods=BENCH_METHODS, models: dict | None = None,
              baseline_mode: str = NETWORK_WIDE, w_past: int | None = None,
              per_bin_deflate: bool = False) -> BenchReport:
    """Run each method on ``dataset`` and tabulate sizes, ratios and timings.

    ``models`` maps ``rnn``/``stgnn`` to a :class:`PredictorModel` or a model
    file path. Neural methods without a model get an unavailable row.
    """
    models = dict(models or {})
    unknown = set(methods) - set(BENCH_METHODS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    uncompressed = len(raw_bytes(dataset))
    report = BenchReport(uncompressed)
    try:
        tool = DeflateTool.locate()
        report.deflate_tool = f"{tool.path} ({tool.version()})"
    except ToolUnavailable:
        tool = None
    for method in methods:
        if method == DEFLATE:
            report.rows.append(deflate_row(dataset, tool))
            continue
        if method in (RNN, STGNN):
            model = models.get(method)
            if model is None:
                report.rows.append(BenchRow(method, None, None, note="unavailable: no model given"))
                continue
            if not isinstance(model, PredictorModel):
                model = PredictorModel.load(model)
            size, lat, secs = run_method(dataset, model)
        else:
            size, lat, secs = run_method(dataset, method, baseline_mode, w_past)
        report.rows.append(BenchRow(method, size, compression_ratio(uncompressed, size),
                                    mean_bin_latency_s=float(np.mean(lat)), total_s=secs))
    if per_bin_deflate:
        report.rows.append(per_bin_deflate_baseline(dataset, tool) if tool else
                           BenchRow(DEFLATE_PER_BIN, None, None, note="unavailable: deflate tool not found"))
    try:
        ref = report.row(DEFLATE)
    except KeyError:
        ref = None
    if ref is not None and ref.available:
        for r in report.rows:
            if r.available:
                r.improvement_vs_deflate_pct = (r.cr / ref.cr - 1.0) * 100.0
    return report
