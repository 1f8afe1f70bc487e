"""Run directories: config snapshot, metrics CSV and checkpoints.

Layout::

    <run>/config.txt
    <run>/metrics.csv
    <run>/timing.csv            (wall-clock seconds per iteration)
    <run>/checkpoints/iter_000050.pifo
    <run>/checkpoints/best.pifo
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import astuple, dataclass, field, fields
from pathlib import Path

from ..errors import ConfigError, UsageError
from ..nn.checkpoint import load_checkpoint, save_checkpoint
from ..nn.params import ParamSet
from ..rl.config import TrainConfig, save_config

ABORTED = "aborted"


@dataclass
class MetricsRow:
    iteration: int
    wall_clock_s: float
    disc_loss: float
    mean_D_imitator: float
    mean_D_expert: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    mean_true_return: float
    mean_episode_len: float
    normalized_score: float
    aborted: bool = field(default=False, compare=False)


METRIC_FIELDS = [f.name for f in fields(MetricsRow) if f.name != "aborted"]
# filled with ABORTED when an iteration's training signal went non-finite
TRAINING_FIELDS = ("disc_loss", "mean_D_imitator", "mean_D_expert", "policy_loss",
                   "value_loss", "entropy", "clip_fraction")


def format_value(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    return format(float(v), ".17g")


def row_to_cells(row: MetricsRow) -> list[str]:
    cells = []
    for name, value in zip(METRIC_FIELDS, astuple(row)):
        if row.aborted and name in TRAINING_FIELDS:
            cells.append(ABORTED)
        else:
            cells.append(format_value(value))
    return cells


def read_metrics(path) -> list[MetricsRow]:
    """Parse a metrics.csv; malformed rows raise ConfigError naming file and line."""
    path = os.fspath(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != METRIC_FIELDS:
            raise ConfigError(f"{path}:1: unexpected metrics header {header}")
        for lineno, cells in enumerate(reader, 2):
            if len(cells) != len(METRIC_FIELDS):
                raise ConfigError(f"{path}:{lineno}: expected {len(METRIC_FIELDS)} columns, "
                                  f"got {len(cells)}")
            aborted = ABORTED in cells
            try:
                values = [int(cells[0])] + [math.nan if c == ABORTED else float(c) for c in cells[1:]]
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: malformed metrics row {cells}") from None
            if rows and values[0] <= rows[-1].iteration:
                raise ConfigError(f"{path}:{lineno}: iteration {values[0]} not increasing")
            rows.append(MetricsRow(*values, aborted=aborted))
    return rows


@dataclass
class RunRecord:
    run_dir: Path | None
    config: TrainConfig
    rows: list[MetricsRow] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    best_params: ParamSet | None = None
    final_params: ParamSet | None = None
    best_score: float = -math.inf
    eval_history: list = field(default_factory=list)  # (iteration, EvalResult)

    def append(self, row: MetricsRow) -> None:
        if self.rows and row.iteration <= self.rows[-1].iteration:
            raise UsageError(f"metrics iteration {row.iteration} does not increase")
        self.rows.append(row)
        if self.run_dir is not None:
            with open(self.run_dir / "metrics.csv", "a", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(row_to_cells(row))

    def log_time(self, iteration: int, seconds: float) -> None:
        if self.run_dir is not None:
            with open(self.run_dir / "timing.csv", "a") as fh:
                fh.write(f"{iteration},{seconds:.6f}\n")

    def save(self, params: ParamSet, name: str) -> Path | None:
        if self.run_dir is None:
            return None
        path = self.run_dir / "checkpoints" / name
        save_checkpoint(params, path)
        self.checkpoints.append(path)
        return path

    @property
    def best_path(self) -> Path | None:
        return None if self.run_dir is None else self.run_dir / "checkpoints" / "best.pifo"


def open_run(run_dir, cfg: TrainConfig) -> RunRecord:
    """Create (or reset) a run directory and write its config and CSV header."""
    if run_dir is None:
        return RunRecord(None, cfg)
    run_dir = Path(run_dir)
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    save_config(cfg, run_dir / "config.txt")
    with open(run_dir / "metrics.csv", "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerow(METRIC_FIELDS)
    with open(run_dir / "timing.csv", "w") as fh:
        fh.write("iteration,wall_clock_s\n")
    return RunRecord(run_dir, cfg)


def load_params(path) -> ParamSet:
    return load_checkpoint(path)
