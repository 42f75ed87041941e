"""One training round: seeded init, mini-batch SGD, per-epoch losses, test metrics."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .data import DatasetSplit
from .nn import Network, NetworkSpec, bce_loss
from .stats import UndefinedStatistic, auroc

EVAL_BATCH = 64
THRESHOLD = 0.5


class TrainingDiverged(RuntimeError):
    pass


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=20, ge=0)
    lr: float = Field(default=0.01, ge=0)
    batch_size: int = Field(default=32, ge=1)
    seed: int = Field(default=0, ge=0)
    architecture: Literal["classical", "hybrid"] = "classical"
    shuffle_each_epoch: bool = True


@dataclass
class RunResult:
    architecture: str
    seed: int
    train_loss: list[float]
    val_loss: list[float]
    test_accuracy: float
    test_auroc: Optional[float]
    wall_time_seconds: float
    n_params: int = 0
    data_counts: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        missing = {"architecture", "seed", "train_loss", "val_loss", "test_accuracy", "test_auroc"} - d.keys()
        if missing:
            raise ValueError(f"run file is missing fields: {sorted(missing)}")
        return cls(**d)

    def write(self, out_dir: str | Path, stem: str = "run") -> tuple[Path, Path]:
        """Write ``<stem>.json`` and the per-epoch ``<stem>_losses.csv`` (``losses.csv`` for ``run``)."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        json_path = out_dir / f"{stem}.json"
        json_path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        csv_path = out_dir / ("losses.csv" if stem == "run" else f"{stem}_losses.csv")
        with csv_path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss"])
            for i, (tl, vl) in enumerate(zip(self.train_loss, self.val_loss), start=1):
                w.writerow([i, repr(tl), repr(vl)])
        return json_path, csv_path


def evaluate(net: Network, split: DatasetSplit) -> tuple[float, Optional[float]]:
    """Accuracy at p >= 0.5 and AUROC (``None`` when only one class is present)."""
    if len(split) == 0:
        raise ValueError("cannot evaluate on an empty split")
    scores = net.predict(split.images, EVAL_BATCH)
    return _metrics(scores, split.labels)


def _metrics(scores: np.ndarray, labels: np.ndarray) -> tuple[float, Optional[float]]:
    accuracy = float(np.mean((scores >= THRESHOLD).astype(np.int64) == labels))
    try:
        area = auroc(scores, labels)
    except UndefinedStatistic:
        area = None
    return accuracy, area


def mean_loss(net: Network, split: DatasetSplit) -> float:
    return float(np.mean(bce_loss(net.predict(split.images, EVAL_BATCH), split.labels)))


def train_one_run(spec: NetworkSpec, data, cfg: TrainConfig) -> RunResult:
    """Train from scratch and evaluate the final weights.

    ``data`` is a ``(train, val, test)`` triple of splits. The epoch training
    loss is the mean per-sample loss accumulated while the epoch runs.
    """
    train, val, test = data
    if len(train) == 0:
        raise ValueError("training split is empty")
    if cfg.epochs and len(val) == 0:
        raise ValueError("validation split is empty")
    start = time.perf_counter()
    init_seq, shuffle_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    net = Network(spec, seed=np.random.default_rng(init_seq))
    shuffle_rng = np.random.default_rng(shuffle_seq)

    n = len(train)
    train_losses: list[float] = []
    val_losses: list[float] = []
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n) if cfg.shuffle_each_epoch else np.arange(n)
        total = 0.0
        for i in range(0, n, cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            losses, grads = net.loss_and_grads(train.images[idx], train.labels[idx])
            total += float(losses.sum())
            if not math.isfinite(total):
                raise TrainingDiverged(f"non-finite training loss in epoch {epoch + 1} (seed {cfg.seed})")
            net.step(grads, cfg.lr)
        train_losses.append(total / n)
        val_losses.append(mean_loss(net, val))
        if not math.isfinite(val_losses[-1]):
            raise TrainingDiverged(f"non-finite validation loss in epoch {epoch + 1} (seed {cfg.seed})")

    accuracy, area = evaluate(net, test)
    return RunResult(
        architecture=cfg.architecture,
        seed=cfg.seed,
        train_loss=train_losses,
        val_loss=val_losses,
        test_accuracy=accuracy,
        test_auroc=area,
        wall_time_seconds=time.perf_counter() - start,
        n_params=net.n_params,
        data_counts={s.split_name: {str(k): v for k, v in s.class_counts().items()} for s in data},
        config=cfg.model_dump(),
    )
