"""Experiment configuration, multi-seed training runs, and sweeps.

Everything an experiment produces is reproducible from (config, seeds)
alone: weight init, feedback matrices, batch order, and dataset
generation all derive from explicit seeds. Metric CSVs are appended and
flushed per epoch so interrupted runs stay analyzable.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import Dataset, gen_pattern_task, gen_regression_task, load_binned
from .errors import ConfigError
from .learning import LearningConfig, Trainer
from .network import LayerSpec, Network, NetworkSpec
from .neurons import PsiKind
from .plasticity import StdpParams

CSV_HEADER = "epoch,seed,split,loss,accuracy"


@dataclass(frozen=True)
class ExperimentConfig:
    network: NetworkSpec
    learning: LearningConfig
    dataset: dict
    epochs: int = 10
    batch_size: int = 20
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    out_dir: str | None = None
    eval_every: int = 1
    target_train_accuracy: float | None = None

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


def _layer_from_json(obj: dict) -> LayerSpec:
    known = {"kind", "width", "gamma", "v_th", "psi", "surrogate", "standardize"}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown layer fields: {sorted(unknown)}")
    kwargs = dict(obj)
    if "psi" in kwargs:
        kwargs["psi"] = PsiKind.parse(kwargs["psi"])
    if "surrogate" in kwargs:
        kwargs["surrogate"] = PsiKind.parse(kwargs["surrogate"])
    return LayerSpec(**kwargs)


def config_from_json(obj: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from its JSON document form."""
    try:
        net = NetworkSpec(
            input_width=int(obj["network"]["input_width"]),
            layers=tuple(_layer_from_json(l) for l in obj["network"]["layers"]),
        )
        learn_obj = dict(obj["learning"])
        stdp = StdpParams(**learn_obj.pop("stdp", {}))
        learning = LearningConfig(stdp=stdp, **learn_obj)
        return ExperimentConfig(
            network=net,
            learning=learning,
            dataset=dict(obj["dataset"]),
            epochs=int(obj.get("epochs", 10)),
            batch_size=int(obj.get("batch_size", 20)),
            seeds=tuple(obj.get("seeds", (1, 2, 3, 4, 5))),
            out_dir=obj.get("out_dir"),
            eval_every=int(obj.get("eval_every", 1)),
            target_train_accuracy=obj.get("target_train_accuracy"),
        )
    except KeyError as exc:
        raise ConfigError(f"config missing required key: {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"bad config field: {exc}") from None


def config_to_json(config: ExperimentConfig) -> dict:
    layers = []
    for l in config.network.layers:
        layers.append(
            {
                "kind": l.kind,
                "width": l.width,
                "gamma": l.gamma,
                "v_th": l.v_th,
                "psi": l.psi.value,
                "surrogate": l.surrogate.value,
                "standardize": l.standardize,
            }
        )
    lc = config.learning
    return {
        "network": {"input_width": config.network.input_width, "layers": layers},
        "learning": {
            "mode": lc.mode,
            "t_total": lc.t_total,
            "t_signal": lc.t_signal,
            "rho": lc.rho,
            "loss": lc.loss,
            "optimizer": lc.optimizer,
            "beta1": lc.beta1,
            "beta2": lc.beta2,
            "adam_eps": lc.adam_eps,
            "stdp": {
                "lambda_pre": lc.stdp.lambda_pre,
                "lambda_post": lc.stdp.lambda_post,
                "alpha_pre": lc.stdp.alpha_pre,
                "alpha_post": lc.stdp.alpha_post,
            },
        },
        "dataset": config.dataset,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "seeds": list(config.seeds),
        "out_dir": config.out_dir,
        "eval_every": config.eval_every,
        "target_train_accuracy": config.target_train_accuracy,
    }


def load_dataset(dataset: dict) -> Dataset:
    """Materialize the configured dataset (synthetic or from files)."""
    kind = dataset.get("kind")
    if kind == "pattern":
        return gen_pattern_task(
            classes=int(dataset["classes"]),
            width=int(dataset["width"]),
            t_total=int(dataset["t_total"]),
            spikes_per_pattern=int(dataset["spikes_per_pattern"]),
            noise_flip_prob=float(dataset.get("noise_flip_prob", 0.0)),
            seed=int(dataset.get("seed", 0)),
            train_per_class=int(dataset.get("train_per_class", 20)),
            test_per_class=int(dataset.get("test_per_class", 8)),
        )
    if kind == "regression":
        return gen_regression_task(
            input_width=int(dataset["input_width"]),
            t_total=int(dataset["t_total"]),
            seed=int(dataset.get("seed", 0)),
            n_samples=int(dataset.get("n_samples", 8)),
        )
    if kind == "files":
        return _load_dataset_dir(dataset["path"])
    raise ConfigError(f"unknown dataset kind {kind!r}")


def _load_split_dir(split_dir: Path) -> tuple[np.ndarray, np.ndarray]:
    files = sorted(split_dir.glob("*.bin"))
    if not files:
        raise ConfigError(f"no .bin sample files in {split_dir}")
    xs, ys = [], []
    for f in files:
        tensor = load_binned(f)
        if tensor.label is None:
            raise ConfigError(f"{f}: sample file has no label in its header")
        xs.append(tensor.flat_frames())
        ys.append(int(tensor.label))
    shapes = {x.shape for x in xs}
    if len(shapes) != 1:
        raise ConfigError(f"inconsistent sample shapes in {split_dir}: {shapes}")
    return np.stack(xs), np.asarray(ys, dtype=int)


def _load_dataset_dir(path) -> Dataset:
    root = Path(path)
    train_x, train_y = _load_split_dir(root / "train")
    test_x, test_y = _load_split_dir(root / "test")
    return Dataset(
        train_x=train_x, train_y=train_y, test_x=test_x, test_y=test_y,
        meta={"kind": "files", "path": str(root)},
    )


@dataclass
class SeedResult:
    seed: int
    epochs_run: int
    final_train_loss: float
    final_train_accuracy: float
    best_train_accuracy: float
    final_test_accuracy: float
    final_weights: list = field(default_factory=list)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    seed_results: list[SeedResult]
    csv_path: str | None = None
    summary_path: str | None = None

    def summary(self) -> dict:
        train = [r.final_train_accuracy for r in self.seed_results]
        test = [r.final_test_accuracy for r in self.seed_results]
        return {
            "seeds": [r.seed for r in self.seed_results],
            "train_accuracy_mean": float(np.mean(train)),
            "train_accuracy_std": float(np.std(train)),
            "test_accuracy_mean": float(np.mean(test)),
            "test_accuracy_std": float(np.std(test)),
            "per_seed": [
                {
                    "seed": r.seed,
                    "epochs_run": r.epochs_run,
                    "final_train_loss": r.final_train_loss,
                    "final_train_accuracy": r.final_train_accuracy,
                    "best_train_accuracy": r.best_train_accuracy,
                    "final_test_accuracy": r.final_test_accuracy,
                }
                for r in self.seed_results
            ],
        }


def _fmt(value: float) -> str:
    return "nan" if np.isnan(value) else f"{value:.10g}"


def run_experiment(
    config: ExperimentConfig, keep_weights: bool = False
) -> ExperimentResult:
    """Train once per seed, streaming metrics and writing a summary.

    Writes metrics.csv (header epoch,seed,split,loss,accuracy, one train
    and one test row per evaluated epoch) and summary.json under
    config.out_dir when set.
    """
    ds = load_dataset(config.dataset)
    out_dir = Path(config.out_dir) if config.out_dir else None
    csv_path = summary_path = None
    csv_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "metrics.csv"
        csv_fh = open(csv_path, "w", encoding="utf-8")
        csv_fh.write(CSV_HEADER + "\n")
        csv_fh.flush()

    results = []
    try:
        for seed in config.seeds:
            net = Network.build(config.network, seed=seed)
            trainer = Trainer(net, config.learning, seed=seed)
            best_train = 0.0
            train_m = test_acc = None
            epochs_run = 0
            for epoch in range(1, config.epochs + 1):
                train_m = trainer.run_epoch(ds.train_x, ds.train_y, config.batch_size)
                epochs_run = epoch
                evaluate_now = (
                    epoch % config.eval_every == 0 or epoch == config.epochs
                )
                if evaluate_now:
                    test_m = trainer.evaluate(ds.test_x, ds.test_y)
                    test_acc = test_m.accuracy
                    if csv_fh is not None:
                        csv_fh.write(
                            f"{epoch},{seed},train,{_fmt(train_m.loss)},{_fmt(train_m.accuracy)}\n"
                        )
                        csv_fh.write(
                            f"{epoch},{seed},test,{_fmt(test_m.loss)},{_fmt(test_m.accuracy)}\n"
                        )
                        csv_fh.flush()
                if not np.isnan(train_m.accuracy):
                    best_train = max(best_train, train_m.accuracy)
                if (
                    config.target_train_accuracy is not None
                    and not np.isnan(train_m.accuracy)
                    and train_m.accuracy >= config.target_train_accuracy
                ):
                    break
            results.append(
                SeedResult(
                    seed=seed,
                    epochs_run=epochs_run,
                    final_train_loss=train_m.loss,
                    final_train_accuracy=train_m.accuracy,
                    best_train_accuracy=best_train,
                    final_test_accuracy=(
                        test_acc if test_acc is not None else float("nan")
                    ),
                    final_weights=(net.copy_weights() if keep_weights else []),
                )
            )
    finally:
        if csv_fh is not None:
            csv_fh.close()

    result = ExperimentResult(
        config=config,
        seed_results=results,
        csv_path=str(csv_path) if csv_path else None,
    )
    if out_dir is not None:
        summary_path = out_dir / "summary.json"
        payload = {"config": config_to_json(config), "summary": result.summary()}
        summary_path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        result.summary_path = str(summary_path)
        for r in results:
            if r.final_weights:
                np.savez(
                    out_dir / f"weights_seed{r.seed}.npz",
                    **_weights_to_arrays(r.final_weights),
                )
    return result


def _weights_to_arrays(weights) -> dict[str, np.ndarray]:
    arrays = {}
    for idx, lw in enumerate(weights):
        arrays[f"w{idx}"] = lw.w
        if lw.w_rec is not None:
            arrays[f"w{idx}_rec"] = lw.w_rec
    return arrays


SWEEPABLE = ("alpha_post", "alpha_pre", "lambda_pre", "lambda_post", "psi", "mode")


def _apply_cell(config: ExperimentConfig, cell: dict) -> ExperimentConfig:
    stdp = config.learning.stdp
    stdp_fields = {k: v for k, v in cell.items() if k.startswith(("alpha", "lambda"))}
    if stdp_fields:
        stdp = replace(stdp, **stdp_fields)
    learning = replace(config.learning, stdp=stdp)
    if "mode" in cell:
        learning = replace(learning, mode=cell["mode"])
    network = config.network
    if "psi" in cell:
        kind = PsiKind.parse(cell["psi"])
        network = NetworkSpec(
            input_width=network.input_width,
            layers=tuple(
                replace(l, psi=kind) if l.spiking else l for l in network.layers
            ),
        )
    return replace(config, network=network, learning=learning)


def _cell_name(cell: dict) -> str:
    parts = []
    for key in sorted(cell):
        val = cell[key]
        val = val.value if isinstance(val, PsiKind) else val
        parts.append(f"{key}={val}")
    return "_".join(parts).replace("/", "-")


def _run_cell(args) -> tuple[dict, dict, dict[str, np.ndarray]]:
    base, cell, out_root = args
    cfg = _apply_cell(base, cell)
    if out_root is not None:
        cfg = replace(cfg, out_dir=str(Path(out_root) / _cell_name(cell)))
    res = run_experiment(cfg, keep_weights=True)
    first = res.seed_results[0]
    return cell, res.summary(), _weights_to_arrays(first.final_weights)


def run_ablation(
    config: ExperimentConfig, grid: dict[str, list], jobs: int = 1
) -> dict:
    """Cross-product sweep; one summary row per cell, mean +- std over seeds.

    Also reports pairwise weight distances between cells (first seed's
    final weights, Frobenius norm over all matrices) so distinct-model
    claims are checkable from the output alone.
    """
    if not grid:
        raise ConfigError("ablation grid must not be empty")
    unknown = set(grid) - set(SWEEPABLE)
    if unknown:
        raise ConfigError(
            f"cannot sweep {sorted(unknown)}; sweepable: {list(SWEEPABLE)}"
        )
    keys = sorted(grid)
    for key in keys:
        if not grid[key]:
            raise ConfigError(f"empty value list for sweep key {key!r}")

    cells: list[dict] = [{}]
    for key in keys:
        cells = [dict(c, **{key: v}) for c in cells for v in grid[key]]

    out_root = config.out_dir
    tasks = [(replace(config, out_dir=None), cell, out_root) for cell in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_cell, tasks))
    else:
        outcomes = [_run_cell(t) for t in tasks]

    rows = []
    weight_sets = []
    for cell, summary, warrays in outcomes:
        rows.append(
            {
                "cell": {
                    k: (v.value if isinstance(v, PsiKind) else v)
                    for k, v in cell.items()
                },
                **{k: v for k, v in summary.items() if k != "per_seed"},
                "per_seed": summary["per_seed"],
            }
        )
        weight_sets.append(warrays)

    distances = []
    for i in range(len(cells)):
        for j in range(i + 1, len(cells)):
            dist = 0.0
            for key in weight_sets[i]:
                dist += float(
                    np.linalg.norm(weight_sets[i][key] - weight_sets[j][key]) ** 2
                )
            distances.append(
                {
                    "a": rows[i]["cell"],
                    "b": rows[j]["cell"],
                    "weight_distance": float(np.sqrt(dist)),
                }
            )

    table = {"rows": rows, "pairwise_weight_distances": distances}
    if out_root is not None:
        path = Path(out_root)
        path.mkdir(parents=True, exist_ok=True)
        (path / "ablation.json").write_text(
            json.dumps(table, indent=2), encoding="utf-8"
        )
        (path / "ablation.txt").write_text(
            ablation_text(table) + "\n", encoding="utf-8"
        )
    return table


def ablation_text(table: dict) -> str:
    """Aligned text summary, one row per sweep cell."""
    lines = [f"{'cell':40}{'train acc':>22}{'test acc':>22}"]
    for row in table["rows"]:
        cell = ",".join(f"{k}={v}" for k, v in row["cell"].items()) or "(base)"
        train = f"{row['train_accuracy_mean']:.4f}+-{row['train_accuracy_std']:.4f}"
        test = f"{row['test_accuracy_mean']:.4f}+-{row['test_accuracy_std']:.4f}"
        lines.append(f"{cell:40}{train:>22}{test:>22}")
    return "\n".join(lines)
