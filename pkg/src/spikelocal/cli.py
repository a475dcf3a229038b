"""Command-line front end.

Subcommands: train, ablate, cost, verify, bin, gen, plot. Consumers are
scripts and people reading the CSV/JSON outputs; there is no
interactive mode. Config files are JSON documents mirroring
ExperimentConfig, and command-line flags override file values.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .costs import CostReport
from .data import EventStream, bin_events, save_binned
from .errors import ConfigError, DataFormatError
from .experiments import (
    ablation_text,
    config_from_json,
    load_dataset,
    run_ablation,
    run_experiment,
)
from .verify import run_all


def _load_config(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    return config_from_json(obj)


def _apply_overrides(config, args):
    if getattr(args, "seed", None) is not None:
        config = replace(config, seeds=(args.seed,))
    if getattr(args, "out", None) is not None:
        config = replace(config, out_dir=args.out)
    return config


def cmd_train(args) -> int:
    config = _apply_overrides(_load_config(args.config), args)
    result = run_experiment(config, keep_weights=config.out_dir is not None)
    summary = result.summary()
    print(json.dumps(summary, indent=2))
    if result.csv_path:
        print(f"metrics: {result.csv_path}", file=sys.stderr)
    return 0


def _parse_grid(spec: str) -> dict:
    text = spec
    path = Path(spec)
    if path.exists():
        text = path.read_text(encoding="utf-8")
    try:
        grid = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"grid is neither a file nor valid JSON: {exc}") from None
    if not isinstance(grid, dict):
        raise ConfigError("grid must be a JSON object of parameter -> values")
    return grid


def cmd_ablate(args) -> int:
    config = _apply_overrides(_load_config(args.config), args)
    grid = _parse_grid(args.grid)
    table = run_ablation(config, grid, jobs=args.jobs)
    print(ablation_text(table))
    return 0


def cmd_cost(args) -> int:
    if args.config:
        config = _load_config(args.config)
        widths = config.network.widths
        t_total = config.learning.t_total
        t_signal = config.learning.t_signal
    else:
        if not args.widths:
            raise ConfigError("cost needs --widths or --config")
        widths = [int(w) for w in args.widths.split(",")]
        t_total = args.t
        t_signal = args.tl
    if t_total is None or t_signal is None:
        raise ConfigError("cost needs --t and --tl (or a config providing them)")
    report = CostReport.build(widths, t_total, t_signal)
    print(report.to_text())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "cost_report.json").write_text(report.to_json(), encoding="utf-8")
        print(f"report: {out / 'cost_report.json'}", file=sys.stderr)
    return 0


def cmd_verify(args) -> int:
    results = run_all(deep=args.deep)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.ok]
    if failed:
        print(f"{len(failed)} of {len(results)} checks failed", file=sys.stderr)
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def cmd_bin(args) -> int:
    stream = EventStream.from_csv(args.events, width=args.width, height=args.height)
    tensor = bin_events(stream, num_bins=args.bins, mode=args.mode)
    tensor.label = args.label
    save_binned(args.out, tensor)
    print(
        f"wrote {args.out}: shape {list(tensor.data.shape)}, "
        f"bin width {tensor.bin_ms:.3f} ms"
    )
    return 0


def cmd_gen(args) -> int:
    dataset_spec = {"kind": args.kind, "seed": args.seed}
    if args.kind == "pattern":
        dataset_spec.update(
            classes=args.classes,
            width=args.width,
            t_total=args.steps,
            spikes_per_pattern=args.spikes,
            noise_flip_prob=args.noise,
            train_per_class=args.train_per_class,
            test_per_class=args.test_per_class,
        )
    else:
        dataset_spec.update(input_width=args.width, t_total=args.steps)
    ds = load_dataset(dataset_spec)

    out = Path(args.out)
    from .data import BinnedTensor

    for split, xs, ys in (
        ("train", ds.train_x, ds.train_y),
        ("test", ds.test_x, ds.test_y),
    ):
        split_dir = out / split
        split_dir.mkdir(parents=True, exist_ok=True)
        for i in range(xs.shape[0]):
            label = int(ys[i]) if np.ndim(ys[i]) == 0 else None
            tensor = BinnedTensor(data=xs[i], label=label)
            save_binned(split_dir / f"sample_{i:04d}.bin", tensor)
    (out / "manifest.json").write_text(
        json.dumps({"dataset": dataset_spec, "train": int(ds.train_x.shape[0]),
                    "test": int(ds.test_x.shape[0])}, indent=2),
        encoding="utf-8",
    )
    print(f"wrote {ds.train_x.shape[0]} train / {ds.test_x.shape[0]} test samples to {out}")
    return 0


def cmd_plot(args) -> int:
    """Emit gnuplot-ready columns: epoch, mean loss, mean accuracy."""
    by_epoch: dict[int, list[tuple[float, float]]] = {}
    with open(args.csv, "r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["split"] != args.split:
                continue
            by_epoch.setdefault(int(row["epoch"]), []).append(
                (float(row["loss"]), float(row["accuracy"]))
            )
    lines = [f"# epoch mean_loss mean_accuracy (split={args.split})"]
    for epoch in sorted(by_epoch):
        vals = np.asarray(by_epoch[epoch])
        lines.append(f"{epoch} {vals[:, 0].mean():.10g} {vals[:, 1].mean():.10g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikelocal",
        description=(
            "Train spiking networks with a temporally local three-factor "
            "rule; verify it against a BPTT oracle; count what it costs."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="multi-seed training run from a config file")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--seed", type=int, help="override: run this single seed")
    p.add_argument("--out", help="override: output directory")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("ablate", help="grid sweep over plasticity parameters")
    p.add_argument("--config", required=True)
    p.add_argument(
        "--grid",
        required=True,
        help='JSON object or file, e.g. \'{"alpha_post": [-1, 0, 1]}\'',
    )
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="override: output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep cells")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("cost", help="memory/MAC counts and speedup ratios")
    p.add_argument("--widths", help="comma-separated, input first: 1000,1000,1")
    p.add_argument("--t", type=int, help="sequence length T")
    p.add_argument("--tl", type=int, help="signal onset T_l")
    p.add_argument("--config", help="read widths/T/T_l from a config instead")
    p.add_argument("--out", help="also write cost_report.json here")
    p.set_defaults(fn=cmd_cost)

    p = sub.add_parser("verify", help="run the invariant suite; nonzero exit on failure")
    p.add_argument("--deep", action="store_true", help="acceptance-scale case counts")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("bin", help="bin an event CSV into frame tensors")
    p.add_argument("--events", required=True, help='CSV of "t_us,x,y,p" lines')
    p.add_argument("--width", type=int, required=True, help="sensor width")
    p.add_argument("--height", type=int, required=True, help="sensor height")
    p.add_argument("--bins", type=int, required=True)
    p.add_argument("--mode", choices=("binary", "count"), default="binary")
    p.add_argument("--label", type=int)
    p.add_argument("--out", required=True, help="output .bin file")
    p.set_defaults(fn=cmd_bin)

    p = sub.add_parser("gen", help="generate a synthetic dataset as sample files")
    p.add_argument("--kind", choices=("pattern", "regression"), default="pattern")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--width", type=int, default=100)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--spikes", type=int, default=400, help="spikes per class template")
    p.add_argument("--noise", type=float, default=0.02, help="bit flip probability")
    p.add_argument("--train-per-class", type=int, default=20)
    p.add_argument("--test-per-class", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("plot", help="columnar epoch curves for gnuplot")
    p.add_argument("--csv", required=True, help="a metrics.csv file")
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(fn=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
