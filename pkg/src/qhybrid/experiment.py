"""Multi-round classical-vs-hybrid experiments and their comparison report.

An experiment directory looks like::

    out/
      config.json              # validated config echo
      runs/<arm>_round<i>.json # one RunResult per round (plus _losses.csv)
      report.json, report.csv # metric table with one-tailed Welch p-values
      mean_train_loss.csv     # epoch-wise means across rounds, per arm
      mean_val_loss.csv

The report is a pure function of the run files, so ``load_report`` on a
finished directory reproduces the report written at experiment time.
"""

from __future__ import annotations

import csv
import json
import logging
import multiprocessing as mp
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .data import load_dataset, synth_dataset
from .nn import PRESETS, NetworkSpec, to_hybrid
from .stats import UndefinedStatistic, welch_one_tailed
from .train import RunResult, TrainConfig, train_one_run

log = logging.getLogger(__name__)

ARMS = ("classical", "hybrid")

# metric key -> (report label, direction of the one-tailed test on hybrid vs classical)
METRICS = {
    "final_train_loss": ("Mean loss on training set", "a_less"),
    "final_val_loss": ("Mean loss on validation set", "a_less"),
    "test_auroc": ("AUROC on test set", "a_greater"),
    "test_accuracy": ("Accuracy on test set", "a_greater"),
}
_DIRECTION_NAMES = {"a_less": "hybrid_less", "a_greater": "hybrid_greater"}


class ExperimentError(RuntimeError):
    pass


class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_per_class: int = Field(default=100, ge=4)
    image_size: int = Field(default=32, ge=4)
    seed: int = Field(default=0, ge=0)


class SharedTrain(BaseModel):
    """Hyperparameters held constant across both arms."""

    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=20, ge=0)
    lr: float = Field(default=0.01, ge=0)
    batch_size: int = Field(default=32, ge=1)
    shuffle_each_epoch: bool = True


class _DataSource(BaseModel):
    model_config = ConfigDict(extra="forbid")

    data_root: Optional[str] = None
    synth: Optional[SynthConfig] = None
    image_size: int = Field(default=128, ge=4)
    strict_data: bool = False
    network: Union[Literal["reference", "desk"], NetworkSpec] = "reference"

    @model_validator(mode="after")
    def _one_source(self):
        if (self.data_root is None) == (self.synth is None):
            raise ValueError("exactly one data source is required: set `data_root` or `synth`")
        return self

    def load_data(self):
        if self.synth is not None:
            return synth_dataset(self.synth.n_per_class, self.synth.image_size, self.synth.seed)
        return load_dataset(self.data_root, self.image_size, self.strict_data)

    @property
    def input_size(self) -> int:
        return self.synth.image_size if self.synth is not None else self.image_size

    def architectures(self) -> dict[str, NetworkSpec]:
        if isinstance(self.network, NetworkSpec):
            classical = self.network
            hybrid = self.network if self.network.is_hybrid else to_hybrid(self.network)
        else:
            classical, hybrid = PRESETS[self.network](self.input_size)
        return {"classical": classical, "hybrid": hybrid}


class RunConfig(_DataSource):
    """Config for a single training run."""

    train: TrainConfig = TrainConfig()
    output_dir: str


class ExperimentConfig(_DataSource):
    rounds: int = Field(default=30, ge=1)
    base_seed: int = Field(default=0, ge=0)
    train: SharedTrain = SharedTrain()
    # which architecture each arm trains; swapping lets you run a null comparison
    arm_architectures: dict[Literal["classical", "hybrid"], Literal["classical", "hybrid"]] = {
        "classical": "classical",
        "hybrid": "hybrid",
    }
    output_dir: str
    parallel_rounds: int = Field(default=1, ge=1)

    @field_validator("arm_architectures")
    @classmethod
    def _fill_arms(cls, v):
        return {arm: v.get(arm, arm) for arm in ARMS}

    def train_config(self, arm: str, round_index: int) -> TrainConfig:
        return TrainConfig(
            **self.train.model_dump(),
            seed=self.base_seed + round_index,
            architecture=arm,
        )


def load_config(path: str | Path, model: type[BaseModel]):
    """Parse a JSON config file; raises ``pydantic.ValidationError`` or ``json.JSONDecodeError``."""
    return model.model_validate(json.loads(Path(path).read_text()))


# Worker state: set before the pool forks so the dataset is inherited, not pickled.
_WORKER: dict = {}


def _run_round(job):
    arm, i = job
    cfg: ExperimentConfig = _WORKER["cfg"]
    spec = _WORKER["specs"][cfg.arm_architectures[arm]]
    return arm, i, train_one_run(spec, _WORKER["data"], cfg.train_config(arm, i))


def run_experiment(cfg: ExperimentConfig, data=None) -> dict:
    """Train ``cfg.rounds`` seeded rounds per arm, persist everything, return the report."""
    out = Path(cfg.output_dir)
    runs_dir = out / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.model_dump_json(indent=2) + "\n")

    _WORKER.update(cfg=cfg, specs=cfg.architectures(), data=data if data is not None else cfg.load_data())
    jobs = [(arm, i) for arm in ARMS for i in range(cfg.rounds)]
    results: dict[tuple[str, int], RunResult] = {}
    try:
        if cfg.parallel_rounds == 1:
            for job in jobs:
                _collect(results, job, lambda j=job: _run_round(j), cfg.base_seed)
        else:
            ctx = mp.get_context("fork") if sys.platform != "win32" else None
            with ProcessPoolExecutor(cfg.parallel_rounds, mp_context=ctx) as pool:
                futures = {job: pool.submit(_run_round, job) for job in jobs}
                for job, fut in futures.items():
                    _collect(results, job, fut.result, cfg.base_seed)
    finally:
        _WORKER.clear()

    runs = {arm: [results[(arm, i)] for i in range(cfg.rounds)] for arm in ARMS}
    for arm, arm_runs in runs.items():
        for i, r in enumerate(arm_runs):
            r.write(runs_dir, run_stem(arm, i))
    report = build_report(runs, json.loads(cfg.model_dump_json()))
    write_report(report, out)
    return report


def _collect(results, job, get, base_seed: int):
    arm, i = job
    try:
        _, _, result = get()
    except Exception as exc:
        raise ExperimentError(f"{arm} round {i} (seed {base_seed + i}) failed: {exc}") from exc
    results[job] = result
    log.info("%s round %d: acc=%.3f auroc=%s", arm, i, result.test_accuracy, result.test_auroc)


def run_stem(arm: str, i: int) -> str:
    return f"{arm}_round{i:03d}"


def _final(values: list[float]) -> Optional[float]:
    return values[-1] if values else None


def _metric_values(runs: list[RunResult], metric: str) -> list[Optional[float]]:
    if metric == "final_train_loss":
        return [_final(r.train_loss) for r in runs]
    if metric == "final_val_loss":
        return [_final(r.val_loss) for r in runs]
    return [getattr(r, metric) for r in runs]


def _mean(values) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def _mean_curve(runs: list[RunResult], attr: str) -> list[Optional[float]]:
    if not runs:
        return []
    n = max(len(getattr(r, attr)) for r in runs)
    return [_mean([getattr(r, attr)[e] for r in runs if e < len(getattr(r, attr))]) for e in range(n)]


def build_report(runs: dict[str, list[RunResult]], config: Optional[dict] = None) -> dict:
    """Aggregate per-round results into the four-row comparison table."""
    classical = runs.get("classical", [])
    hybrid = runs.get("hybrid", [])
    rows = []
    for key, (label, direction) in METRICS.items():
        c_vals = _metric_values(classical, key)
        h_vals = _metric_values(hybrid, key)
        row = {
            "metric": key,
            "label": label,
            "direction": _DIRECTION_NAMES[direction],
            "classical_mean": _mean(c_vals),
            "hybrid_mean": _mean(h_vals),
            "n_classical": sum(v is not None for v in c_vals),
            "n_hybrid": sum(v is not None for v in h_vals),
            "t_statistic": None,
            "degrees_of_freedom": None,
            "p_value": None,
        }
        try:
            res = welch_one_tailed(
                [v for v in h_vals if v is not None], [v for v in c_vals if v is not None], direction
            )
        except UndefinedStatistic:
            pass
        else:
            row.update(t_statistic=res.t_statistic, degrees_of_freedom=res.degrees_of_freedom, p_value=res.p_one_tailed)
        rows.append(row)

    epochs = max((len(r.train_loss) for arm_runs in runs.values() for r in arm_runs), default=0)
    curves = {"epoch": list(range(1, epochs + 1))}
    for attr in ("train_loss", "val_loss"):
        for arm in ARMS:
            curves[f"mean_{attr}_{arm}"] = _mean_curve(runs.get(arm, []), attr)
    return {
        "config": config,
        "rows": rows,
        "loss_curves": curves,
        "runs": {arm: [r.to_dict() for r in runs.get(arm, [])] for arm in ARMS},
    }


def _cell(v) -> str:
    return "NA" if v is None else repr(v)


def write_report(report: dict, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    with (out / "report.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "classical_mean", "hybrid_mean", "p_value", "direction"])
        for row in report["rows"]:
            w.writerow([row["label"], _cell(row["classical_mean"]), _cell(row["hybrid_mean"]), _cell(row["p_value"]), row["direction"]])
    curves = report["loss_curves"]
    for attr in ("train_loss", "val_loss"):
        cols = [f"mean_{attr}_{arm}" for arm in ARMS]
        with (out / f"mean_{attr}.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", *cols])
            for e, epoch in enumerate(curves["epoch"]):
                w.writerow([epoch, *(_cell(curves[c][e]) if e < len(curves[c]) else "NA" for c in cols)])


def load_runs(directory: str | Path) -> dict[str, list[RunResult]]:
    """Read ``<arm>_round<i>.json`` files from ``directory`` or its ``runs/`` child."""
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"no such directory: {d}")
    if (d / "runs").is_dir():
        d = d / "runs"
    runs: dict[str, list[RunResult]] = {}
    for arm in ARMS:
        files = sorted(d.glob(f"{arm}_round*.json"))
        loaded = []
        for f in files:
            try:
                loaded.append(RunResult.from_dict(json.loads(f.read_text())))
            except (json.JSONDecodeError, TypeError, ValueError) as exc:
                raise ExperimentError(f"malformed run file {f}: {exc}") from exc
        if loaded:
            runs[arm] = sorted(loaded, key=lambda r: r.seed)
    if not runs:
        raise ExperimentError(f"no run files found in {d}")
    return runs


def load_report(directory: str | Path) -> dict:
    """Rebuild the comparison report from persisted run files, without training."""
    d = Path(directory)
    runs = load_runs(d)
    config_path = d / "config.json"
    config = json.loads(config_path.read_text()) if config_path.is_file() else None
    return build_report(runs, config)


def render_table(report: dict) -> str:
    lines = [f"{'Metric':<30} {'Classical':>10} {'Hybrid':>10} {'p-value':>10}"]

    def fmt(v):
        return f"{v:>10.3f}" if v is not None else f"{'n/a':>10}"

    for row in report["rows"]:
        lines.append(f"{row['label']:<30} {fmt(row['classical_mean'])} {fmt(row['hybrid_mean'])} {fmt(row['p_value'])}")
    return "\n".join(lines)
