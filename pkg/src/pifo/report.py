"""Static report from run directories: curves.svg, bars.svg and summary.csv.

Runs sharing a label (``label`` in config.txt, else the directory name with
a trailing seed suffix removed) are treated as seeds of one method. The SVG
is written by hand so that identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .errors import ConfigError
from .pipeline.runs import read_metrics
from .rl.config import parse_overrides

WIDTH, HEIGHT = 800, 500
MARGIN = dict(left=70, right=170, top=40, bottom=60)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")
_SEED_SUFFIX = re.compile(r"[-_.]?(seed|s)?\d+$")
SUMMARY_FIELDS = ["label", "run", "final_iteration", "final_normalized_score", "final_mean_true_return"]


@dataclass
class RunCurve:
    label: str
    path: Path
    iterations: np.ndarray
    scores: np.ndarray  # NaN where no evaluation had been made
    returns: np.ndarray

    def final(self):
        """(iteration, score, return) at the last row with a finite score; NaNs if none."""
        ok = np.flatnonzero(np.isfinite(self.scores))
        if len(ok) == 0:
            last = len(self.iterations) - 1
            return (int(self.iterations[last]) if last >= 0 else 0, math.nan,
                    float(self.returns[last]) if last >= 0 else math.nan)
        i = ok[-1]
        return int(self.iterations[i]), float(self.scores[i]), float(self.returns[i])


def run_label(run_dir) -> str:
    run_dir = Path(run_dir)
    cfg = run_dir / "config.txt"
    if cfg.is_file():
        label = parse_overrides(cfg.read_text(), str(cfg)).get("label", "")
        if label:
            return label
    name = run_dir.resolve().name
    stripped = _SEED_SUFFIX.sub("", name)
    return stripped or name


def load_run(run_dir) -> RunCurve:
    run_dir = Path(run_dir)
    rows = read_metrics(run_dir / "metrics.csv")
    return RunCurve(run_label(run_dir), run_dir,
                    np.array([r.iteration for r in rows], dtype=int),
                    np.array([r.normalized_score for r in rows], dtype=float),
                    np.array([r.mean_true_return for r in rows], dtype=float))


def group_runs(runs: list[RunCurve]) -> dict[str, list[RunCurve]]:
    """Labels in order of first appearance; runs keep their input order."""
    groups: dict[str, list[RunCurve]] = {}
    for r in runs:
        groups.setdefault(r.label, []).append(r)
    return groups


def standard_error(values) -> float:
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


def band(group: list[RunCurve]):
    """Mean score and standard-error half-width at iterations where every run has a score."""
    common = None
    for r in group:
        its = set(r.iterations[np.isfinite(r.scores)].tolist())
        common = its if common is None else common & its
    its = np.array(sorted(common or ()), dtype=int)
    table = np.array([[r.scores[np.searchsorted(r.iterations, it)] for it in its] for r in group])
    if len(its) == 0:
        return its, np.zeros(0), np.zeros(0)
    mean = table.mean(axis=0)
    half = np.array([standard_error(table[:, j]) for j in range(len(its))])
    return its, mean, half


class _Axes:
    def __init__(self, x_lo, x_hi, y_lo, y_hi):
        self.x_lo, self.x_hi = x_lo, x_hi if x_hi > x_lo else x_lo + 1
        self.y_lo, self.y_hi = y_lo, y_hi if y_hi > y_lo else y_lo + 1
        self.left, self.top = MARGIN["left"], MARGIN["top"]
        self.w = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def x(self, v):
        return self.left + (v - self.x_lo) / (self.x_hi - self.x_lo) * self.w

    def y(self, v):
        return self.top + (self.y_hi - v) / (self.y_hi - self.y_lo) * self.h

    def frame(self, title, xlabel, ylabel, xticks, yticks) -> list[str]:
        b = self.top + self.h
        out = [f'<rect x="{self.left}" y="{self.top}" width="{self.w}" height="{self.h}" '
               f'fill="none" stroke="#333"/>',
               f'<text x="{WIDTH / 2:.2f}" y="24" text-anchor="middle" font-size="16">{escape(title)}</text>',
               f'<text x="{self.left + self.w / 2:.2f}" y="{HEIGHT - 15}" text-anchor="middle" '
               f'font-size="13">{escape(xlabel)}</text>',
               f'<text x="18" y="{self.top + self.h / 2:.2f}" text-anchor="middle" font-size="13" '
               f'transform="rotate(-90 18 {self.top + self.h / 2:.2f})">{escape(ylabel)}</text>']
        for v, text in xticks:
            out.append(f'<line x1="{self.x(v):.2f}" y1="{b}" x2="{self.x(v):.2f}" y2="{b + 5}" stroke="#333"/>')
            out.append(f'<text x="{self.x(v):.2f}" y="{b + 18}" text-anchor="middle" '
                       f'font-size="11">{escape(text)}</text>')
        for v in yticks:
            out.append(f'<line x1="{self.left}" y1="{self.y(v):.2f}" x2="{self.left + self.w}" '
                       f'y2="{self.y(v):.2f}" stroke="#ddd"/>')
            out.append(f'<text x="{self.left - 6}" y="{self.y(v) + 4:.2f}" text-anchor="end" '
                       f'font-size="11">{v:.2f}</text>')
        return out


def _ticks(lo, hi, n=5):
    return [lo + (hi - lo) * k / n for k in range(n + 1)]


def _svg(body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
            f'width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif">')
    return "\n".join([head, f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>', *body, "</svg>"]) + "\n"


def _points(xs, ys, ax: _Axes) -> str:
    return " ".join(f"{ax.x(x):.2f},{ax.y(y):.2f}" for x, y in zip(xs, ys))


def _y_range(values) -> tuple[float, float]:
    finite = [v for v in values if math.isfinite(v)]
    lo = min([0.0] + finite)
    hi = max([1.0] + finite)
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def curves_svg(groups: dict[str, list[RunCurve]]) -> str:
    bands = {label: band(g) for label, g in groups.items()}
    values, x_hi = [], 1
    for label, g in groups.items():
        for r in g:
            values.extend(r.scores[np.isfinite(r.scores)].tolist())
            if len(r.iterations):
                x_hi = max(x_hi, int(r.iterations.max()))
        its, mean, half = bands[label]
        values.extend((mean + half).tolist() + (mean - half).tolist())
    ax = _Axes(0, x_hi, *_y_range(values))
    body = ax.frame("Normalized score vs. iteration", "iteration", "normalized score",
                    [(v, f"{v:.0f}") for v in _ticks(0, x_hi)], _ticks(ax.y_lo, ax.y_hi))
    for k, (label, g) in enumerate(groups.items()):
        color = PALETTE[k % len(PALETTE)]
        multi = len(g) > 1
        its, mean, half = bands[label]
        if multi and len(its):
            outline = _points(its, mean + half, ax) + " " + _points(its[::-1], (mean - half)[::-1], ax)
            body.append(f'<polygon points="{outline}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        for r in g:
            ok = np.isfinite(r.scores)
            if ok.any():
                body.append(f'<polyline points="{_points(r.iterations[ok], r.scores[ok], ax)}" '
                            f'fill="none" stroke="{color}" stroke-width="{0.8 if multi else 1.8}" '
                            f'stroke-opacity="{0.45 if multi else 1}"/>')
        if multi and len(its):
            body.append(f'<polyline points="{_points(its, mean, ax)}" fill="none" stroke="{color}" '
                        f'stroke-width="2.2"/>')
        ly = MARGIN["top"] + 16 + 20 * k
        lx = WIDTH - MARGIN["right"] + 12
        body.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2.2"/>')
        body.append(f'<text x="{lx + 26}" y="{ly + 4}" font-size="12">{escape(label)} (n={len(g)})</text>')
    return _svg(body)


def bar_stats(groups: dict[str, list[RunCurve]]) -> list[tuple[str, float, float, int]]:
    """(label, mean final score, standard error, runs) per label."""
    out = []
    for label, g in groups.items():
        finals = [r.final()[1] for r in g]
        finals = [v for v in finals if math.isfinite(v)]
        mean = float(np.mean(finals)) if finals else math.nan
        out.append((label, mean, standard_error(finals), len(g)))
    return out


def bars_svg(groups: dict[str, list[RunCurve]]) -> str:
    stats = bar_stats(groups)
    values = []
    for _, m, se, _ in stats:
        values += [m + se, m - se]
    ax = _Axes(0, max(len(stats), 1), *_y_range(values))
    body = ax.frame("Final normalized score", "", "normalized score", [], _ticks(ax.y_lo, ax.y_hi))
    zero = ax.y(0.0)
    slot = ax.w / max(len(stats), 1)
    for k, (label, m, se, n) in enumerate(stats):
        color = PALETTE[k % len(PALETTE)]
        cx = ax.x(k + 0.5)
        body.append(f'<text x="{cx:.2f}" y="{ax.top + ax.h + 18}" text-anchor="middle" '
                    f'font-size="11">{escape(label)} (n={n})</text>')
        if not math.isfinite(m):
            continue
        top, bottom = min(ax.y(m), zero), max(ax.y(m), zero)
        body.append(f'<rect x="{cx - 0.3 * slot:.2f}" y="{top:.2f}" width="{0.6 * slot:.2f}" '
                    f'height="{bottom - top:.2f}" fill="{color}" fill-opacity="0.8"/>')
        if se > 0:
            y1, y2 = ax.y(m + se), ax.y(m - se)
            body.append(f'<line x1="{cx:.2f}" y1="{y1:.2f}" x2="{cx:.2f}" y2="{y2:.2f}" stroke="#000"/>')
            for y in (y1, y2):
                body.append(f'<line x1="{cx - 6:.2f}" y1="{y:.2f}" x2="{cx + 6:.2f}" y2="{y:.2f}" stroke="#000"/>')
    body.append(f'<line x1="{ax.left}" y1="{zero:.2f}" x2="{ax.left + ax.w}" y2="{zero:.2f}" stroke="#333"/>')
    return _svg(body)


def _cell(v) -> str:
    return format(v, ".17g") if isinstance(v, float) else str(v)


def emit_report(run_dirs, out_dir) -> list[Path]:
    """Write curves.svg, bars.svg and summary.csv into ``out_dir``; returns their paths."""
    if not run_dirs:
        raise ConfigError("report needs at least one run directory")
    runs = [load_run(d) for d in run_dirs]
    groups = group_runs(runs)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    curves, bars, summary = out_dir / "curves.svg", out_dir / "bars.svg", out_dir / "summary.csv"
    curves.write_text(curves_svg(groups))
    bars.write_text(bars_svg(groups))
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for r in runs:
            it, score, ret = r.final()
            w.writerow([r.label, str(r.path), it, _cell(score), _cell(ret)])
    return [curves, bars, summary]
