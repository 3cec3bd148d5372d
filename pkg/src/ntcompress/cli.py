"""Command-line interface: gen, train, compress, decompress, bench, stats."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench, pipeline
from .core import Topology, TrafficDataset
from .datagen import SynthConfig, correlation_report, gen_synthetic, nsfnet
from .ingest import load_and_clean, save_csv
from .neural import NETWORK, SINGLE_LINK, PredictorModel, TrainConfig, train

MODES = {"single": pipeline.SINGLE, "network": pipeline.NETWORK_WIDE}


def topology_sidecar(csv_path) -> Path:
    return Path(str(csv_path) + ".topo")


def _load_dataset(args) -> TrafficDataset:
    topo = args.topology or topology_sidecar(args.data)
    if not Path(topo).exists():
        raise FileNotFoundError(f"topology file {topo} not found (pass --topology)")
    dataset, report = load_and_clean(args.data, topo, getattr(args, "clean", "drop_bins_with_gaps"))
    if not report.empty:
        logging.warning("cleaning removed %d and filled %d bins", len(report.removed_bins),
                        len(report.filled_bins))
    return dataset


def _write_dataset(dataset: TrafficDataset, out) -> None:
    save_csv(dataset, out)
    dataset.topology.save(topology_sidecar(out))


def cmd_gen(args) -> None:
    topology = Topology.load(args.topology) if args.topology else nsfnet()
    cfg = SynthConfig(topology=topology, bins=args.bins, spatial_pct=args.spatial,
                      temporal_pct=args.temporal, seed=args.seed, noise_std=args.noise_std)
    _write_dataset(gen_synthetic(cfg), args.output)


def cmd_train(args) -> None:
    dataset = _load_dataset(args)
    cfg = TrainConfig(kind=SINGLE_LINK if args.mode == "single" else NETWORK, epochs=args.epochs,
                      batch_size=args.batch_size, learning_rate=args.lr,
                      masks_per_window=args.masks, seed=args.seed, hidden_size=args.hidden,
                      w_past=args.window, lr_schedule=args.lr_schedule)
    result = train(dataset, cfg, progress=lambda e, tr, ev: print(
        f"epoch {e} train_nll {tr:.4f} eval_nll {ev:.4f}", file=sys.stderr))
    result.model.save(args.output)
    print(f"model {args.output} hash {result.model.content_hash} best_epoch {result.best_epoch}")


def cmd_compress(args) -> None:
    dataset = _load_dataset(args)
    mode = MODES[args.mode] if args.mode else None
    if args.model:
        method = PredictorModel.load(args.model)
    elif args.method in (pipeline.RNN, pipeline.STGNN):
        raise ValueError(f"method {args.method} needs --model")
    else:
        method = args.method
    container = pipeline.compress(dataset, method, mode, args.window)
    data = container.to_bytes()
    Path(args.output).write_bytes(data)
    print(f"{args.output}: {len(data)} bytes, {container.spec.method}/{container.spec.mode}")


def cmd_decompress(args) -> None:
    model = PredictorModel.load(args.model) if args.model else None
    dataset = pipeline.decompress(Path(args.container).read_bytes(), model)
    _write_dataset(dataset, args.output)


def cmd_bench(args) -> None:
    dataset = _load_dataset(args)
    models = {}
    if args.rnn_model:
        models[pipeline.RNN] = args.rnn_model
    if args.stgnn_model:
        models[pipeline.STGNN] = args.stgnn_model
    report = bench.bench_run(dataset, args.methods, models, MODES[args.mode or "network"],
                             args.window, per_bin_deflate=args.per_bin_deflate)
    if args.output:
        Path(args.output).write_text(report.to_csv())
    print(report.to_text())


def cmd_stats(args) -> None:
    print(correlation_report(_load_dataset(args)).format())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ntcompress", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("data", help="CSV with header t,link_0,... (gzip accepted)")
        p.add_argument("--topology", help="topology file (default: DATA.topo)")
        p.add_argument("--clean", choices=["drop_bins_with_gaps", "fill_previous"],
                       default="drop_bins_with_gaps")
        return p

    p = sub.add_parser("gen", help="generate a synthetic correlated dataset")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--spatial", type=float, default=100.0)
    p.add_argument("--temporal", type=float, default=100.0)
    p.add_argument("--bins", type=int, default=1004)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-std", type=float, default=2.0)
    p.add_argument("--topology", help="topology file (default: NSFNet)")
    p.set_defaults(func=cmd_gen)

    p = data_cmd("train", "train a predictor")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--mode", choices=MODES, default="network")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lr-schedule", choices=["constant", "cosine"], default="constant")
    p.add_argument("--masks", type=int, default=50)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--window", type=int, default=pipeline.DEFAULT_W_PAST)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = data_cmd("compress", "compress a dataset")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--method", choices=pipeline.METHODS, default=pipeline.ADAPTIVE_AC)
    p.add_argument("--model", help="trained model file (selects rnn or stgnn)")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--window", type=int, help="context window for adaptive_ac")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="restore a dataset from a container")
    p.add_argument("container")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--model")
    p.set_defaults(func=cmd_decompress)

    p = data_cmd("bench", "compare methods against deflate")
    p.add_argument("-o", "--output", help="CSV report path")
    p.add_argument("--methods", nargs="+", choices=bench.BENCH_METHODS, default=list(bench.BENCH_METHODS))
    p.add_argument("--rnn-model")
    p.add_argument("--stgnn-model")
    p.add_argument("--mode", choices=MODES, help="mode for the histogram baselines")
    p.add_argument("--window", type=int)
    p.add_argument("--per-bin-deflate", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = data_cmd("stats", "correlation report")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - surfaced as a machine-readable line
        print(json.dumps({"error": type(exc).__name__, "command": args.command, "message": str(exc)}),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
