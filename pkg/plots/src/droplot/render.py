"""Figure rendering for the four supported plot kinds.

Output is a raster image with pinned size, dpi, and metadata so that
identical inputs produce identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import SchemaError, read_ablation_summary, read_run_log

__all__ = ["PlotKind", "PlotJob", "render"]

_FIGSIZE = (8.0, 5.0)
_DPI = 120
# pinned so rebuilds of matplotlib do not change the bytes
_METADATA = {"Software": "droplot"}


class PlotKind(str, Enum):
    LAMBDA_TRAJECTORY = "lambda-trajectory"
    LOSS_DYNAMICS = "loss-dynamics"
    EPSILON_SWEEP = "epsilon-sweep"
    TREATMENT_COMPARISON = "treatment-comparison"


@dataclass
class PlotJob:
    kind: PlotKind
    inputs: List[Path]
    output: Path

    def __post_init__(self) -> None:
        if isinstance(self.kind, str) and not isinstance(self.kind, PlotKind):
            self.kind = PlotKind(self.kind)
        self.inputs = [Path(p) for p in self.inputs]
        self.output = Path(self.output)
        if not self.inputs:
            raise SchemaError("at least one input file is required")


def _save(fig, output: Path) -> None:
    output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output, format="png", dpi=_DPI, metadata=_METADATA)
    plt.close(fig)


def _render_lambda_trajectory(job: PlotJob) -> None:
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for path in job.inputs:
        log = read_run_log(path)
        ax.plot(log["step"], log["lambda"], label=path.stem)
    ax.set_xlabel("step")
    ax.set_ylabel("dual variable")
    ax.set_title("Dual-variable trajectory")
    ax.legend(fontsize="small")
    _save(fig, job.output)


def _render_loss_dynamics(job: PlotJob) -> None:
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for path in job.inputs:
        log = read_run_log(path)
        ax.plot(log["step"], log["agg_loss"], label=f"{path.stem} aggregate")
        ax.plot(log["step"], log["p90"], linestyle="--", label=f"{path.stem} p90")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title("Training loss dynamics")
    ax.legend(fontsize="small")
    _save(fig, job.output)


def _grouped_stats(rows: Sequence[dict], metric: str):
    """Per-value mean and (min, max) range over seeds."""
    values = sorted({r["value"] for r in rows}, key=lambda v: (len(str(v)), str(v)))
    means, lows, highs = [], [], []
    for v in values:
        data = np.array([r[metric] for r in rows if r["value"] == v], dtype=float)
        means.append(float(np.mean(data)))
        lows.append(float(np.min(data)))
        highs.append(float(np.max(data)))
    return values, np.array(means), np.array(lows), np.array(highs)


def _render_epsilon_sweep(job: PlotJob) -> None:
    rows = [r for path in job.inputs for r in read_ablation_summary(path)]
    rows = [r for r in rows if r["status"] == "ok"]
    if not rows:
        raise SchemaError("no successful runs in the ablation summary")
    eps = np.array(sorted({float(r["value"]) for r in rows}))
    fig, (ax_top, ax_bot) = plt.subplots(2, 1, figsize=_FIGSIZE, sharex=True)
    for ax, metric, label in (
        (ax_top, "final_p90_adv_loss", "final p90 adversarial loss"),
        (ax_bot, "final_utility_loss", "final utility loss"),
    ):
        means, lows, highs = [], [], []
        for e in eps:
            data = np.array(
                [r[metric] for r in rows if float(r["value"]) == e], dtype=float
            )
            means.append(float(np.mean(data)))
            lows.append(float(np.min(data)))
            highs.append(float(np.max(data)))
        means = np.array(means)
        yerr = np.vstack([means - np.array(lows), np.array(highs) - means])
        ax.errorbar(eps, means, yerr=yerr, marker="o", capsize=3)
        ax.set_ylabel(label)
        ax.set_xscale("log")
    ax_bot.set_xlabel("ambiguity radius")
    ax_top.set_title("Radius sweep (mean with min-max range over seeds)")
    _save(fig, job.output)


def _render_treatment_comparison(job: PlotJob) -> None:
    rows = [r for path in job.inputs for r in read_ablation_summary(path)]
    rows = [r for r in rows if r["status"] == "ok"]
    if not rows:
        raise SchemaError("no successful runs in the ablation summary")
    metrics = ["final_p90_adv_loss", "final_mean_adv_loss", "final_utility_loss"]
    modes = sorted({str(r["value"]) for r in rows})
    width = 0.8 / len(metrics)
    x = np.arange(len(modes))
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for k, metric in enumerate(metrics):
        means, lows, highs = [], [], []
        for mode in modes:
            data = np.array(
                [r[metric] for r in rows if str(r["value"]) == mode], dtype=float
            )
            means.append(float(np.mean(data)))
            lows.append(float(np.min(data)))
            highs.append(float(np.max(data)))
        means = np.array(means)
        yerr = np.vstack([means - np.array(lows), np.array(highs) - means])
        ax.bar(x + k * width, means, width, yerr=yerr, capsize=3, label=metric)
    ax.set_xticks(x + width)
    ax.set_xticklabels(modes)
    ax.set_ylabel("final metric value")
    ax.set_title("Dual-variable treatment comparison")
    ax.legend(fontsize="small")
    _save(fig, job.output)


_RENDERERS = {
    PlotKind.LAMBDA_TRAJECTORY: _render_lambda_trajectory,
    PlotKind.LOSS_DYNAMICS: _render_loss_dynamics,
    PlotKind.EPSILON_SWEEP: _render_epsilon_sweep,
    PlotKind.TREATMENT_COMPARISON: _render_treatment_comparison,
}


def render(job: PlotJob) -> Path:
    """Render the job to its output path and return that path."""
    _RENDERERS[job.kind](job)
    return job.output
