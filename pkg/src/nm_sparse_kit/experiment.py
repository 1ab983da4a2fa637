"""Experiment orchestration: config files, metric persistence, ablation runs.

Configs are flat ``key = value`` text files (``#`` starts a comment), chosen
so experiment logs diff cleanly. ``metrics.csv`` carries one row per training
iteration under a versioned header comment; reruns with the same seed are
byte-identical.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .data import DatasetHandle, DatasetKind, generate_synthetic, load_idx
from .masks import BinarizationCriterion, save_mask
from .tensorops import NmPattern, save_matrix
from .training import (
    Strategy,
    TrainConfig,
    TrainingTrace,
    evaluate_accuracy,
    init_layers,
    train,
)

METRICS_VERSION_LINE = "# nm-sparse-kit metrics v1"
METRICS_HEADER = "iteration,loss,grad_gap_l2,eligible_block_ratio,mask_flip_count"
SUMMARY_HEADER = (
    "strategy,pattern,criterion,final_train_accuracy,final_test_accuracy,"
    "mean_grad_gap_l2,mean_eligible_block_ratio,search_seconds_total"
)


@dataclass
class ExperimentConfig:
    strategy: Strategy
    pattern: NmPattern
    dataset: str = "synthetic"
    out_dir: str = "runs/experiment"
    hidden_dims: tuple = (64,)
    criterion: BinarizationCriterion = BinarizationCriterion.WEIGHT_MAGNITUDE
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=40, batch_size=32))
    # synthetic dataset knobs
    classes: int = 16
    dim: int = 32
    per_class: int = 50
    spread: float = 0.35


def serialize_config(cfg: ExperimentConfig) -> str:
    t = cfg.train
    lines = [
        "# nm-sparse-kit experiment config v1",
        f"strategy = {cfg.strategy.value}",
        f"pattern = {cfg.pattern}",
        f"criterion = {cfg.criterion.value}",
        f"dataset = {cfg.dataset}",
        f"out_dir = {cfg.out_dir}",
        "hidden_dims = " + ",".join(str(d) for d in cfg.hidden_dims),
        f"epochs = {t.epochs}",
        f"batch_size = {t.batch_size}",
        f"delta_t = {t.delta_t}",
        f"k = {t.k}",
        f"warmup_epochs = {t.warmup_epochs}",
        f"peak_lr = {t.peak_lr!r}",
        f"momentum = {t.momentum!r}",
        f"weight_decay = {t.weight_decay!r}",
        f"seed = {t.seed}",
        f"classes = {cfg.classes}",
        f"dim = {cfg.dim}",
        f"per_class = {cfg.per_class}",
        f"spread = {cfg.spread!r}",
    ]
    return "\n".join(lines) + "\n"


_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_INT_KEYS = {"epochs", "batch_size", "delta_t", "k", "warmup_epochs", "seed", "classes", "dim", "per_class"}
_FLOAT_KEYS = {"peak_lr", "momentum", "weight_decay", "spread"}


def parse_config(text: str) -> ExperimentConfig:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in _INT_KEYS:
            values[key] = int(value)
        elif key in _FLOAT_KEYS:
            values[key] = float(value)
        elif key == "strategy":
            values[key] = Strategy(value)
        elif key == "pattern":
            values[key] = NmPattern.parse(value)
        elif key == "criterion":
            values[key] = BinarizationCriterion(value)
        elif key == "hidden_dims":
            values[key] = tuple(int(d) for d in value.split(",") if d.strip())
        elif key in ("dataset", "out_dir"):
            values[key] = value
        else:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
    if "strategy" not in values or "pattern" not in values:
        raise ValueError("config must declare at least 'strategy' and 'pattern'")
    train_kwargs = {k: values.pop(k) for k in list(values) if k in _TRAIN_KEYS}
    train_kwargs.setdefault("epochs", 40)
    train_kwargs.setdefault("batch_size", 32)
    return ExperimentConfig(train=TrainConfig(**train_kwargs), **values)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def save_config(path, cfg: ExperimentConfig) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_config(cfg))


def build_dataset(cfg: ExperimentConfig) -> DatasetHandle:
    if cfg.dataset == "synthetic":
        return generate_synthetic(cfg.classes, cfg.dim, cfg.per_class, cfg.spread, cfg.train.seed)
    if cfg.dataset.startswith("idx:"):
        root = cfg.dataset[len("idx:") :]
        train_set = load_idx(
            os.path.join(root, "train-images-idx3-ubyte"),
            os.path.join(root, "train-labels-idx1-ubyte"),
        )
        test_images = os.path.join(root, "t10k-images-idx3-ubyte")
        test_labels = os.path.join(root, "t10k-labels-idx1-ubyte")
        if os.path.exists(test_images) and os.path.exists(test_labels):
            test_set = load_idx(test_images, test_labels)
            if test_set.input_dim != train_set.input_dim:
                raise ValueError(
                    f"test images are {test_set.input_dim}-dim but train images are {train_set.input_dim}-dim"
                )
            return DatasetHandle(
                DatasetKind.IDX_PAIR,
                train_set.input_dim,
                max(train_set.num_classes, test_set.num_classes),
                train_set.x_train,
                train_set.y_train,
                test_set.x_train,
                test_set.y_train,
            )
        return train_set
    raise ValueError(f"unknown dataset descriptor {cfg.dataset!r} (expected 'synthetic' or 'idx:<dir>')")


def write_metrics_csv(path, trace: TrainingTrace) -> None:
    lines = [METRICS_VERSION_LINE, METRICS_HEADER]
    for s in trace:
        lines.append(
            f"{s.iteration},{s.loss!r},{s.grad_gap_l2!r},{s.eligible_block_ratio!r},{s.mask_flip_count}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass
class ExperimentSummary:
    strategy: str
    pattern: str
    criterion: str
    final_train_accuracy: float
    final_test_accuracy: float | None
    mean_grad_gap_l2: float
    mean_eligible_block_ratio: float
    search_seconds_total: float

    def csv_row(self) -> str:
        test = "" if self.final_test_accuracy is None else repr(self.final_test_accuracy)
        return (
            f"{self.strategy},{self.pattern},{self.criterion},"
            f"{self.final_train_accuracy!r},{test},{self.mean_grad_gap_l2!r},"
            f"{self.mean_eligible_block_ratio!r},{self.search_seconds_total!r}"
        )

    def pretty(self, label: str | None = None) -> str:
        head = label if label is not None else f"{self.strategy} {self.pattern}"
        test = "" if self.final_test_accuracy is None else f" test_acc={self.final_test_accuracy:.4f}"
        return (
            f"{head}: train_acc={self.final_train_accuracy:.4f}{test} "
            f"mean_gap={self.mean_grad_gap_l2:.3e} "
            f"mean_eligible={self.mean_eligible_block_ratio:.4f} "
            f"search_s={self.search_seconds_total:.3f}"
        )


def run_experiment(cfg: ExperimentConfig) -> ExperimentSummary:
    """Train one configuration, persist its artifacts, and summarize it.

    Writes metrics.csv, the final masked weights and masks (text formats),
    the resolved config, and summary.csv into cfg.out_dir.
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    try:
        data = build_dataset(cfg)
        dims = [data.input_dim, *cfg.hidden_dims, data.num_classes]
        layers = init_layers(dims, cfg.pattern, cfg.strategy, cfg.train.seed)
    except ValueError as exc:
        raise ValueError(f"[{cfg.strategy.value} {cfg.pattern} -> {cfg.out_dir}] {exc}") from exc
    layers, trace = train(layers, data, cfg.train, cfg.criterion)

    save_config(os.path.join(cfg.out_dir, "config.txt"), cfg)
    write_metrics_csv(os.path.join(cfg.out_dir, "metrics.csv"), trace)
    for i, layer in enumerate(layers):
        save_matrix(os.path.join(cfg.out_dir, f"layer{i}_weights.txt"), layer.masked_weights())
        if layer.fwd_mask is not None:
            save_mask(os.path.join(cfg.out_dir, f"layer{i}_forward_mask.txt"), layer.fwd_mask)
        if layer.bwd_mask is not None:
            save_mask(os.path.join(cfg.out_dir, f"layer{i}_backward_mask.txt"), layer.bwd_mask)

    train_acc = evaluate_accuracy(layers, data.x_train, data.y_train)
    test_acc = (
        evaluate_accuracy(layers, data.x_test, data.y_test) if data.test_count else None
    )
    steps = trace.steps
    summary = ExperimentSummary(
        strategy=cfg.strategy.value,
        pattern=str(cfg.pattern),
        criterion=cfg.criterion.value,
        final_train_accuracy=train_acc,
        final_test_accuracy=test_acc,
        mean_grad_gap_l2=float(np.mean([s.grad_gap_l2 for s in steps])),
        mean_eligible_block_ratio=float(np.mean([s.eligible_block_ratio for s in steps])),
        search_seconds_total=trace.search_seconds_total,
    )
    with open(os.path.join(cfg.out_dir, "summary.csv"), "w") as fh:
        fh.write(SUMMARY_HEADER + "\n" + summary.csv_row() + "\n")
    return summary


ABLATION_LABELS = ("baseline", "+backward-mask", "+permutation-updating")


def run_ablation(cfg: ExperimentConfig) -> list[tuple[str, ExperimentSummary]]:
    """The component ablation triple on one config.

    baseline: vanilla forward mask, exact (dense) backward;
    +backward-mask: bi-mask with the permutation pinned to identity;
    +permutation-updating: full bi-mask with scheduled permutation search.
    """
    variants = [
        replace(cfg, strategy=Strategy.VANILLA, out_dir=os.path.join(cfg.out_dir, "baseline")),
        replace(
            cfg,
            strategy=Strategy.BI_MASK,
            train=replace(cfg.train, delta_t=10**9),
            out_dir=os.path.join(cfg.out_dir, "backward_mask"),
        ),
        replace(cfg, strategy=Strategy.BI_MASK, out_dir=os.path.join(cfg.out_dir, "permutation")),
    ]
    results = []
    for label, variant in zip(ABLATION_LABELS, variants):
        results.append((label, run_experiment(variant)))
    return results
