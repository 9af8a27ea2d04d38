"""Config-driven experiment runner.

A run is fully determined by its :class:`RunConfig` (JSON on disk, dotted
``--set`` overrides on top).  Each run directory contains the resolved
config, a CSV of per-eval metric rows, a JSON summary, and the final model
checkpoint.  Everything except wall-clock timing is byte-reproducible from
(config, seed); timings therefore live only in the summary.
"""

from __future__ import annotations

import copy
import csv
import json
import os
import time
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from .data import (
    Dataset,
    batch_iterator,
    load_cifar_binary,
    normalize_dataset,
    split_per_class,
    synth_gaussian_classes,
)
from .errors import ConfigError
from .metrics import collapse_report, top1_accuracy
from .network import (
    MlpModel,
    SgdConfig,
    backward,
    clip_global_norm,
    cross_entropy,
    forward,
    init_mlp,
    mlp_widths,
    save_checkpoint,
    sgd_step,
)
from .regularizers import SigregConfig, strong_sigreg, weak_sigreg
from .rng import RngStream

SUMMARY_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1
OUT_ROOT_ENV = "SIGREG_OUT_ROOT"

# A run counts as collapsed when the final effective rank is below this
# fraction of the embedding width.  Documented default; raw metrics are
# always recorded alongside it.
COLLAPSE_RANK_FRACTION = 0.1

CSV_COLUMNS = [
    "epoch",
    "train_loss",
    "task_loss",
    "reg_loss",
    "test_top1",
    "effective_rank",
    "eigen_entropy",
    "condition_number",
    "top_eigen_fraction",
    "embedding_dim",
]

ABLATION_AXES = {
    "sigreg.variant",
    "sigreg.alpha",
    "sigreg.sketch_dim",
    "sigreg.integration_points",
    "seed",
}


@dataclass
class DatasetConfig:
    kind: str = "synthetic"  # synthetic | cifar10 | cifar100
    # synthetic
    num_classes: int = 10
    per_class: int = 200
    test_per_class: int = 100
    dim: int = 32
    spread: float = 1.5
    # cifar
    path: str | None = None
    test_path: str | None = None
    limit: int | None = None
    test_limit: int | None = None
    normalize: bool = True


@dataclass
class ModelConfig:
    depth: int = 6
    width: int = 128


@dataclass
class SigregSettings:
    """Regularizer section of a run config; variant "none" disables it."""

    variant: str = "none"  # none | weak | strong
    sketch_dim: int = 64
    integration_points: int = 17
    t_max: float = 5.0
    alpha: float = 0.1
    resample: str = "per_step"
    attach_layer: int | None = None  # None -> penultimate hidden layer

    def to_config(self) -> SigregConfig | None:
        if self.variant == "none":
            return None
        return SigregConfig(
            variant=self.variant,
            sketch_dim=self.sketch_dim,
            integration_points=self.integration_points,
            t_max=self.t_max,
            alpha=self.alpha,
            resample=self.resample,
        )


@dataclass
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    sgd: SgdConfig = field(default_factory=SgdConfig)
    sigreg: SigregSettings = field(default_factory=SigregSettings)
    epochs: int = 30
    batch_size: int = 128
    seed: int = 0
    eval_every: int = 5
    out: str = "runs/run"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = copy.deepcopy(raw)
        sections = {
            "dataset": DatasetConfig,
            "model": ModelConfig,
            "sgd": SgdConfig,
            "sigreg": SigregSettings,
        }
        kwargs = {}
        for key, value in raw.items():
            if key in sections:
                kwargs[key] = _build_section(sections[key], value, key)
            elif key in ("epochs", "batch_size", "seed", "eval_every", "out"):
                kwargs[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(load_config_dict(path))

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.sigreg.variant not in ("none", "weak", "strong"):
            raise ConfigError(f"unknown sigreg variant {self.sigreg.variant!r}")
        if self.dataset.kind not in ("synthetic", "cifar10", "cifar100"):
            raise ConfigError(f"unknown dataset kind {self.dataset.kind!r}")
        if self.dataset.kind != "synthetic" and not self.dataset.path:
            raise ConfigError("cifar datasets need dataset.path")
        attach = self.sigreg.attach_layer
        if attach is not None and not 1 <= attach <= self.model.depth - 1:
            raise ConfigError(
                f"attach_layer must be in [1, {self.model.depth - 1}], got {attach}"
            )
        self.sigreg.to_config()  # SigregConfig runs its own validation


def _build_section(cls, value: dict, name: str):
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    valid = {f for f in cls.__dataclass_fields__}
    for key in value:
        if key not in valid:
            raise ConfigError(f"unknown key {name}.{key}")
    return cls(**value)


def load_config_dict(path: str | Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    return raw


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply dotted KEY=VALUE overrides to scalar leaves of a config dict."""
    raw = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        key, _, text = item.partition("=")
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                node[part] = {}
            node = node[part]
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text  # bare strings stay strings
        if isinstance(value, dict) or isinstance(value, list):
            raise ConfigError(f"override {key!r} must be a scalar leaf")
        node[parts[-1]] = value
    return raw


def resolve_out(out: str) -> Path:
    """Output directory, honoring the output-root override env var."""
    root = os.environ.get(OUT_ROOT_ENV)
    path = Path(out)
    if root and not path.is_absolute():
        return Path(root) / path
    return path


@dataclass
class RunRecord:
    """One metrics row per eval point."""

    epoch: int
    train_loss: float
    task_loss: float
    reg_loss: float
    test_top1: float
    effective_rank: float
    eigen_entropy: float
    condition_number: float
    top_eigen_fraction: float
    embedding_dim: int
    wall_ms: float  # summary-only: kept out of the CSV so bytes reproduce

    def csv_row(self) -> list:
        values = asdict(self)
        return [values[col] for col in CSV_COLUMNS]


def build_datasets(cfg: DatasetConfig, rng: RngStream) -> tuple[Dataset, Dataset]:
    """Train/test pair per the dataset section; synthetic splits share the
    class means, CIFAR test data reuses the train normalization record."""
    if cfg.kind == "synthetic":
        ds = synth_gaussian_classes(
            rng,
            num_classes=cfg.num_classes,
            per_class=cfg.per_class + cfg.test_per_class,
            dim=cfg.dim,
            spread=cfg.spread,
        )
        train, test = split_per_class(ds, cfg.per_class)
        if cfg.normalize:
            train = normalize_dataset(train)
            test = normalize_dataset(test, train.normalization)
        return train, test
    train = load_cifar_binary(cfg.path, cfg.kind, limit=cfg.limit)
    if cfg.test_path:
        test = load_cifar_binary(
            cfg.test_path, cfg.kind, limit=cfg.test_limit,
            normalization=train.normalization,
        )
    else:
        test = train
    return train, test


def _forward_in_chunks(model: MlpModel, ds: Dataset, attach: int, chunk: int = 2048):
    logits = []
    embeddings = []
    for start in range(0, len(ds), chunk):
        trace = forward(model, ds.features[start : start + chunk])
        logits.append(trace.logits)
        embeddings.append(trace.activations[attach])
    return np.concatenate(logits), np.concatenate(embeddings)


def _regularizer_fn(variant: str):
    return weak_sigreg if variant == "weak" else strong_sigreg


def run_training(config: RunConfig) -> Path:
    """Train per config and write config.json / records.csv / summary.json /
    model.ckpt into the run directory, which is returned."""
    config.validate()
    out_dir = resolve_out(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config.json", "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")

    started = time.perf_counter()
    root = RngStream(config.seed)
    train_ds, test_ds = build_datasets(config.dataset, root.child("data"))
    widths = mlp_widths(
        train_ds.features.shape[1], train_ds.num_classes,
        config.model.depth, config.model.width,
    )
    model = init_mlp(widths, root.child("init"))
    velocity = None
    batch_rng = root.child("batches")
    reg_rng = root.child("sigreg")

    sig_cfg = config.sigreg.to_config()
    attach = config.sigreg.attach_layer or (config.model.depth - 1)
    reg_fn = _regularizer_fn(config.sigreg.variant) if sig_cfg else None
    alpha = config.sigreg.alpha

    records: list[RunRecord] = []
    diverged = False
    halted_epoch = None
    last_eval_wall = time.perf_counter()

    for epoch in range(1, config.epochs + 1):
        task_sum = reg_sum = 0.0
        steps = 0
        for features, labels in batch_iterator(train_ds, config.batch_size, batch_rng):
            trace = forward(model, features)
            task = cross_entropy(trace.logits, labels)
            if reg_fn is not None:
                reg = reg_fn(trace.activations[attach], sig_cfg, reg_rng)
                grads = backward(model, trace, task.grad, attach, alpha * reg.grad)
                reg_value = reg.value
            else:
                grads = backward(model, trace, task.grad)
                reg_value = 0.0
            total_value = task.value + alpha * reg_value
            if not np.isfinite(total_value):
                diverged = True
                halted_epoch = epoch
                break
            task_sum += task.value
            reg_sum += reg_value
            steps += 1
            grads = clip_global_norm(grads, config.sgd.clip_norm)
            model, velocity = sgd_step(model, grads, config.sgd, velocity)
        if diverged:
            break
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            logits, embeddings = _forward_in_chunks(model, test_ds, attach)
            report = collapse_report(embeddings)
            now = time.perf_counter()
            records.append(
                RunRecord(
                    epoch=epoch,
                    train_loss=(task_sum + alpha * reg_sum) / max(steps, 1),
                    task_loss=task_sum / max(steps, 1),
                    reg_loss=reg_sum / max(steps, 1),
                    test_top1=top1_accuracy(logits, test_ds.labels),
                    effective_rank=report.effective_rank,
                    eigen_entropy=report.eigen_entropy,
                    condition_number=report.condition_number,
                    top_eigen_fraction=report.top_eigen_fraction,
                    embedding_dim=report.embedding_dim,
                    wall_ms=(now - last_eval_wall) * 1000.0,
                )
            )
            last_eval_wall = now

    _write_csv(out_dir / "records.csv", records)
    save_checkpoint(model, out_dir / "model.ckpt")
    final = records[-1] if records else None
    summary = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "config": config.to_dict(),
        "model": model.describe(),
        "diverged": diverged,
        "halted_epoch": halted_epoch,
        "final": {col: getattr(final, col) for col in CSV_COLUMNS} if final else None,
        "collapsed": (
            final.effective_rank < COLLAPSE_RANK_FRACTION * final.embedding_dim
            if final
            else None
        ),
        "wall_ms_total": (time.perf_counter() - started) * 1000.0,
        "wall_ms_per_eval": [r.wall_ms for r in records],
    }
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return out_dir


def _write_csv(path: Path, records: list[RunRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for record in records:
            writer.writerow(record.csv_row())


# --- ablation -------------------------------------------------------------

def load_ablation(path: str | Path) -> tuple[dict, dict]:
    raw = load_config_dict(path)
    if set(raw) - {"base", "axes"}:
        raise ConfigError("ablation config must contain only 'base' and 'axes'")
    base = raw.get("base")
    axes = raw.get("axes")
    if not isinstance(base, dict) or not isinstance(axes, dict):
        raise ConfigError("ablation config needs 'base' (object) and 'axes' (object)")
    validate_axes(axes)
    return base, axes


def validate_axes(axes: dict) -> None:
    if not axes:
        raise ConfigError("ablation requires at least one axis")
    for key, values in axes.items():
        if key not in ABLATION_AXES:
            raise ConfigError(
                f"axis {key!r} not allowed; ablation axes are restricted to "
                f"{sorted(ABLATION_AXES)} so optimizer settings stay identical "
                f"across cells"
            )
        if not isinstance(values, list) or not values:
            raise ConfigError(f"axis {key!r} must be a non-empty list")


def _cell_name(keys: list[str], values: tuple) -> str:
    parts = []
    for key, value in zip(keys, values):
        leaf = key.split(".")[-1]
        parts.append(f"{leaf}={value}")
    return "_".join(parts)


def run_ablation(base: dict, axes: dict, out: str) -> Path:
    """Run the full cross product of axes over the base config.

    Per-cell failures are recorded in the aggregate and do not stop the
    remaining cells.
    """
    validate_axes(axes)
    out_dir = resolve_out(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    keys = list(axes.keys())
    rows = []
    for combo in product(*(axes[k] for k in keys)):
        name = _cell_name(keys, combo)
        overrides = [f"{k}={json.dumps(v)}" for k, v in zip(keys, combo)]
        row = {"cell": name}
        try:
            cell_dict = apply_overrides(base, overrides)
            cell_dict["out"] = str(out_dir / name)
            cfg = RunConfig.from_dict(cell_dict)
            run_dir = run_training(cfg)
            with open(run_dir / "summary.json", "r", encoding="utf-8") as fh:
                summary = json.load(fh)
            final = summary["final"] or {}
            row.update(
                variant=cfg.sigreg.variant,
                alpha=cfg.sigreg.alpha,
                sketch_dim=cfg.sigreg.sketch_dim,
                integration_points=cfg.sigreg.integration_points,
                seed=cfg.seed,
                status="diverged" if summary["diverged"] else "ok",
                final_test_top1=final.get("test_top1"),
                final_effective_rank=final.get("effective_rank"),
                run_dir=str(run_dir),
            )
        except Exception as exc:  # noqa: BLE001 - cell isolation is the contract
            row.update(
                variant=None, alpha=None, sketch_dim=None, integration_points=None,
                seed=None, status=f"error: {exc}", final_test_top1=None,
                final_effective_rank=None, run_dir=None,
            )
        rows.append(row)

    columns = [
        "cell", "variant", "alpha", "sketch_dim", "integration_points", "seed",
        "status", "final_test_top1", "final_effective_rank", "run_dir",
    ]
    with open(out_dir / "aggregate.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    return out_dir


# --- report ---------------------------------------------------------------

def build_report(run_dirs: list[str | Path]) -> tuple[dict, list[str]]:
    """Merge run CSVs into plot-ready series, one named series per run and
    metric.  Returns (report, failures); failures list unreadable inputs."""
    metrics: dict[str, list[dict]] = {}
    failures: list[str] = []
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        csv_path = run_dir / "records.csv"
        try:
            with open(csv_path, "r", encoding="utf-8", newline="") as fh:
                reader = csv.DictReader(fh)
                if reader.fieldnames != CSV_COLUMNS:
                    raise ValueError(f"unexpected columns {reader.fieldnames}")
                rows = list(reader)
        except Exception as exc:  # noqa: BLE001
            failures.append(f"{csv_path}: {exc}")
            continue
        epochs = [int(r["epoch"]) for r in rows]
        for col in CSV_COLUMNS[1:]:
            metrics.setdefault(col, []).append(
                {
                    "run": run_dir.name,
                    "epochs": epochs,
                    "values": [float(r[col]) for r in rows],
                }
            )
    report = {"schema_version": REPORT_SCHEMA_VERSION, "metrics": metrics,
              "failures": failures}
    return report, failures
