"""Noisy-label training protocol: single runs, sweeps and their summaries.

One run trains an MLP on the training split with (optionally) corrupted
labels, evaluates top-1 accuracy on a clean validation split and on the test
set after every epoch, and reports the test accuracy at the epoch with the
best validation accuracy.

Every run directory holds ``config.json``, ``metrics.csv`` and
``summary.json``; a sweep directory additionally holds ``summary.csv`` and
``table.csv``.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import data as D
from .core import ContractError, argmax_rows, stream
from .losses import LossSpec
from .model import LrSchedule, Mlp, Sgd

log = logging.getLogger(__name__)

METRICS_HEADER = ["epoch", "train_loss", "train_top1", "val_top1", "test_top1", "lr"]
SUMMARY_HEADER = ["loss", "alpha", "eta", "mean_test_top1", "std_test_top1",
                  "mean_best_epoch", "n_seeds", "n_diverged"]

# sub-stream keys for model init and per-epoch shuffling
INIT_STREAM = 10
SHUFFLE_STREAM = 11


@dataclass
class TrainConfig:
    loss: str = "ce"
    alpha: float = 0.0
    eta: float = 0.0
    seed: int = 0
    epochs: int = 60
    batch_size: int = 128
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_drops: tuple[int, ...] = (30, 45)
    lr_factor: float = 10.0
    hidden: tuple[int, ...] = (256, 128)
    dataset: str = "mnist"
    data_dir: str = "data/mnist10k"
    train_subset: int | None = None
    normalize: str = "feature"
    holdout: int = 1000
    blobs_classes: int = 10
    blobs_dim: int = 20
    blobs_per_class: int = 100
    blobs_test_per_class: int = 50
    blobs_separation: float = 4.0
    blobs_spread: float = 1.0
    threshold: float | None = None
    out: str = "runs"

    def __post_init__(self):
        self.lr_drops = tuple(int(e) for e in self.lr_drops)
        self.hidden = tuple(int(w) for w in self.hidden)
        if self.dataset not in ("mnist", "blobs"):
            raise ContractError(f"unknown dataset {self.dataset!r}")
        if self.normalize not in ("feature", "channel"):
            raise ContractError(f"normalize must be 'feature' or 'channel', got {self.normalize!r}")
        if not 0 <= self.eta <= 1:
            raise ContractError(f"eta must be in [0, 1], got {self.eta}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractError("epochs and batch_size must be >= 1")
        if self.holdout < 0:
            raise ContractError("holdout must be >= 0")
        if self.threshold is not None and not 0 < self.threshold <= 100:
            raise ContractError(f"threshold must be in (0, 100], got {self.threshold}")
        self.loss_spec(2)  # validates loss kind and alpha
        Sgd(self.lr, self.momentum, self.weight_decay)

    def loss_spec(self, num_classes: int) -> LossSpec:
        return LossSpec(self.loss, self.alpha, num_classes)

    @property
    def loss_label(self) -> str:
        return f"tce{self.alpha:g}" if self.loss == "tce" else self.loss

    @property
    def run_name(self) -> str:
        return f"{self.loss_label}_eta{self.eta:g}_seed{self.seed}"

    def schedule(self) -> LrSchedule:
        return LrSchedule(self.lr, self.lr_drops, self.lr_factor)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lr_drops"] = list(self.lr_drops)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class MetricsRow:
    epoch: int
    train_loss: float
    train_top1: float
    val_top1: float
    test_top1: float
    lr: float

    def as_csv(self) -> list[str]:
        return [str(self.epoch)] + [repr(float(getattr(self, k))) for k in METRICS_HEADER[1:]]


@dataclass
class RunResult:
    config: TrainConfig
    metrics: list[MetricsRow]
    best_epoch: int | None
    test_top1_at_best: float | None
    diverged: bool = False
    diverged_epoch: int | None = None
    epochs_to_threshold: int | None = None
    run_dir: Path | None = None

    def summary(self) -> dict:
        return {
            "loss": self.config.loss,
            "alpha": self.config.alpha,
            "eta": self.config.eta,
            "seed": self.config.seed,
            "best_epoch": self.best_epoch,
            "test_top1_at_best": self.test_top1_at_best,
            "final_test_top1": self.metrics[-1].test_top1 if self.metrics else None,
            "diverged": self.diverged,
            "diverged_epoch": self.diverged_epoch,
            "threshold": self.config.threshold,
            "epochs_to_threshold": self.epochs_to_threshold,
        }


# Selection metrics ------------------------------------------------------------

def select_best_epoch(metrics: list[MetricsRow]) -> int:
    """Epoch with the lowest validation error; earliest on ties.

    Without a validation split (all ``val_top1`` NaN) the last epoch is used.
    """
    if not metrics:
        raise ContractError("select_best_epoch needs at least one epoch")
    val = np.array([m.val_top1 for m in metrics], dtype=float)
    if np.all(np.isnan(val)):
        return metrics[-1].epoch
    return metrics[int(np.nanargmax(val))].epoch


def epochs_to_threshold(metrics: list[MetricsRow], threshold: float) -> int | None:
    """First epoch whose test accuracy exceeds ``threshold`` percent, else None."""
    if not 0 < threshold <= 100:
        raise ContractError(f"threshold must be in (0, 100], got {threshold}")
    for m in metrics:
        if m.test_top1 > threshold:
            return m.epoch
    return None


def top1(model: Mlp, ds: D.Dataset, batch: int = 2048) -> float:
    if not len(ds):
        return math.nan
    hits = 0
    for i in range(0, len(ds), batch):
        pred = argmax_rows(model.forward(ds.images[i:i + batch]))
        hits += int((pred == ds.labels[i:i + batch]).sum())
    return 100.0 * hits / len(ds)


# Data preparation ---------------------------------------------------------------

def prepare_data(cfg: TrainConfig) -> tuple[D.Dataset, D.Dataset, D.Dataset]:
    """Return ``(train, validation, test)``: noisy train, clean validation, normalised."""
    if cfg.dataset == "mnist":
        data_dir = Path(cfg.data_dir)
        if not data_dir.is_dir():
            raise FileNotFoundError(
                f"MNIST directory {data_dir} not found; expected train-images-idx3-ubyte[.gz], "
                f"train-labels-idx1-ubyte[.gz], t10k-images-idx3-ubyte[.gz], t10k-labels-idx1-ubyte[.gz]")
        full = D.load_mnist_idx(*D.find_mnist(data_dir, "train"))
        test = D.load_mnist_idx(*D.find_mnist(data_dir, "test"))
        if cfg.train_subset is not None and cfg.train_subset < len(full):
            full = full.take(np.arange(cfg.train_subset))
    else:
        per_class = cfg.blobs_per_class + cfg.blobs_test_per_class
        blobs = D.make_blobs(per_class, cfg.blobs_classes, cfg.blobs_dim, cfg.blobs_separation,
                             cfg.seed, cfg.blobs_spread)
        full, test = D.holdout_split(blobs, cfg.blobs_test_per_class * cfg.blobs_classes,
                                     cfg.seed, key=D.TEST_SPLIT_STREAM)

    train, val = D.holdout_split(full, cfg.holdout, cfg.seed)
    train = D.inject_noise(train, D.NoiseSpec(cfg.eta, cfg.seed))
    per_feature = cfg.normalize == "feature"
    train, stats = D.normalize(train, per_feature=per_feature)
    val = D.normalize(val, stats)[0] if len(val) else val
    test = D.normalize(test, stats)[0]
    return train, val, test


# Training ----------------------------------------------------------------------

def train(cfg: TrainConfig, datasets=None) -> RunResult:
    """Train one configuration in memory; see :func:`run_training` for file output."""
    train_ds, val_ds, test_ds = datasets if datasets is not None else prepare_data(cfg)
    n_classes = train_ds.num_classes
    loss_fn = cfg.loss_spec(n_classes)
    model = Mlp([train_ds.images.shape[1], *cfg.hidden, n_classes], stream(cfg.seed, INIT_STREAM))
    sgd = Sgd(cfg.lr, cfg.momentum, cfg.weight_decay)
    schedule = cfg.schedule()
    shuffle_rng = stream(cfg.seed, SHUFFLE_STREAM)
    params, mask = model.params, model.decay_mask

    n = len(train_ds)
    metrics: list[MetricsRow] = []
    diverged_epoch = None
    for epoch in range(cfg.epochs):
        sgd.lr = schedule(epoch)
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        hits = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            x, y = train_ds.images[idx], train_ds.labels[idx]
            with np.errstate(over="ignore", invalid="ignore"):
                logits, acts = model.forward(x, keep=True)
            if not np.all(np.isfinite(logits)):
                break
            out = loss_fn(logits, y)
            if not np.isfinite(out.value):
                break
            loss_sum += float(out.value) * len(idx)
            hits += int((argmax_rows(logits) == y).sum())
            with np.errstate(over="ignore", invalid="ignore"):
                sgd.step(params, model.backward(x, out.grad_logits, acts), mask)
        else:
            if all(np.all(np.isfinite(p)) for p in params):
                row = MetricsRow(epoch + 1, loss_sum / n, 100.0 * hits / n,
                                 top1(model, val_ds), top1(model, test_ds), sgd.lr)
                metrics.append(row)
                log.info("%s epoch %d loss %.4f train %.2f val %.2f test %.2f lr %g",
                         cfg.run_name, row.epoch, row.train_loss, row.train_top1,
                         row.val_top1, row.test_top1, row.lr)
                continue
        diverged_epoch = epoch + 1
        log.warning("%s diverged at epoch %d", cfg.run_name, diverged_epoch)
        break

    best = select_best_epoch(metrics) if metrics else None
    result = RunResult(
        cfg, metrics, best,
        metrics[best - 1].test_top1 if best is not None else None,
        diverged=diverged_epoch is not None, diverged_epoch=diverged_epoch,
    )
    if cfg.threshold is not None:
        result.epochs_to_threshold = epochs_to_threshold(metrics, cfg.threshold)
    return result


def write_metrics(path, metrics: list[MetricsRow]):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for m in metrics:
            w.writerow(m.as_csv())


def read_metrics(path) -> list[MetricsRow]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [MetricsRow(int(r["epoch"]), float(r["train_loss"]), float(r["train_top1"]),
                       float(r["val_top1"]), float(r["test_top1"]), float(r["lr"])) for r in rows]


def run_training(cfg: TrainConfig, run_dir=None, datasets=None) -> RunResult:
    """Train and write ``config.json``, ``metrics.csv`` and ``summary.json`` to ``run_dir``."""
    run_dir = Path(run_dir) if run_dir is not None else Path(cfg.out) / cfg.run_name
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg.save(run_dir / "config.json")
    result = train(cfg, datasets)
    result.run_dir = run_dir
    write_metrics(run_dir / "metrics.csv", result.metrics)
    (run_dir / "summary.json").write_text(json.dumps(result.summary(), indent=2) + "\n")
    return result


# Sweeps and aggregation --------------------------------------------------------

def aggregate(summaries: list[dict]) -> list[dict]:
    """Group run summaries by (loss, alpha, eta) into mean/std rows.

    ``std_test_top1`` is the sample standard deviation, left empty with fewer
    than two finished seeds. Runs that diverged before completing an epoch
    have no accuracy and are only counted in ``n_diverged``.
    """
    cells: dict[tuple, list[dict]] = {}
    for s in summaries:
        alpha = s["alpha"] if s["loss"] == "tce" else 0.0
        cells.setdefault((s["loss"], alpha, s["eta"]), []).append(s)
    rows = []
    for (loss, alpha, eta), runs in sorted(cells.items()):
        done = [r for r in runs if r["test_top1_at_best"] is not None]
        acc = np.array([r["test_top1_at_best"] for r in done], dtype=float)
        best = np.array([r["best_epoch"] for r in done], dtype=float)
        rows.append({
            "loss": loss, "alpha": alpha, "eta": eta,
            "mean_test_top1": float(acc.mean()) if len(acc) else None,
            "std_test_top1": float(acc.std(ddof=1)) if len(acc) >= 2 else None,
            "mean_best_epoch": float(best.mean()) if len(best) else None,
            "n_seeds": len(done),
            "n_diverged": sum(bool(r["diverged"]) for r in runs),
        })
    return rows


def write_summary(out_dir, rows: list[dict]):
    out_dir = Path(out_dir)
    with open(out_dir / "summary.csv", "w", newline="") as f:
        w = csv.DictWriter(f, SUMMARY_HEADER, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r[k] is None else r[k]) for k in SUMMARY_HEADER})

    # Same layout as a results table: one row per loss, one column per noise level.
    etas = sorted({r["eta"] for r in rows})
    labels = []
    for r in rows:
        lab = f"tce{r['alpha']:g}" if r["loss"] == "tce" else r["loss"]
        if lab not in labels:
            labels.append(lab)
    cell = {}
    for r in rows:
        lab = f"tce{r['alpha']:g}" if r["loss"] == "tce" else r["loss"]
        m, s = r["mean_test_top1"], r["std_test_top1"]
        text = "" if m is None else f"{m:.2f}" if s is None else f"{m:.2f} +- {s:.2f}"
        cell[lab, r["eta"]] = text
    with open(out_dir / "table.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["loss"] + [f"eta={e:g}" for e in etas])
        for lab in labels:
            w.writerow([lab] + [cell.get((lab, e), "") for e in etas])


def summarize(out_dir) -> list[dict]:
    """Aggregate every ``*/summary.json`` under ``out_dir`` and write the tables."""
    summaries = [json.loads(p.read_text()) for p in sorted(Path(out_dir).glob("*/summary.json"))]
    rows = aggregate(summaries)
    write_summary(out_dir, rows)
    return rows


def run_sweep(base: TrainConfig, losses, etas, seeds) -> list[dict]:
    """Run every (loss, eta, seed) cell and write the aggregated tables.

    ``losses`` holds ``(kind, alpha)`` pairs. Datasets are built once per
    (eta, seed) and shared by the losses, which only differ in the objective.
    """
    losses, etas, seeds = list(losses), list(etas), list(seeds)
    if not (losses and etas and seeds):
        raise ContractError("sweep grids must be nonempty")
    out = Path(base.out)
    summaries = []
    for eta in etas:
        for seed in seeds:
            proto = TrainConfig.from_dict({**base.to_dict(), "eta": eta, "seed": seed})
            datasets = prepare_data(proto)
            for kind, alpha in losses:
                cfg = TrainConfig.from_dict({**proto.to_dict(), "loss": kind, "alpha": alpha})
                res = run_training(cfg, out / cfg.run_name, datasets)
                summaries.append(res.summary())
    rows = aggregate(summaries)
    write_summary(out, rows)
    return rows
