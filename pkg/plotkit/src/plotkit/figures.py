"""The three figure kinds: training curves, value contours, tracking.

Figures are deterministic functions of their input files: fixed sizes,
colors and level counts, no timestamps.  Every plotted quantity is
recomputed from the raw columns rather than trusting derived ones, so a
figure doubles as a consistency check on the artifact.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import matplotlib.pyplot as plt
import numpy as np

from .io import read_grid, read_trajectory, read_training_log

LINE = "tab:blue"
BAND_ALPHA = 0.25


def aligned_metric(logs, metric: str):
    """Inner-join several training logs on the env-step axis.

    Returns (steps, values) with values[r, t] the metric of run r at
    steps[t]; runs of different lengths contribute their common steps.
    """
    runs = [read_training_log(p) for p in logs]
    for path, run in zip(logs, runs):
        if metric not in run:
            raise ValueError(f"{path}: no column {metric!r}")
    steps = runs[0]["env_steps"]
    for run in runs[1:]:
        steps = np.intersect1d(steps, run["env_steps"])
    if steps.size == 0:
        raise ValueError("training logs share no env_steps values")
    rows = []
    for run in runs:
        index = {s: j for j, s in enumerate(run["env_steps"])}
        rows.append([run[metric][index[s]] for s in steps])
    return steps, np.asarray(rows)


def plot_training(logs, metric: str, out=None):
    """Mean curve with a +-1 population-sigma band across runs."""
    steps, values = aligned_metric(logs, metric)
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.fill_between(steps, mean - std, mean + std, color=LINE,
                    alpha=BAND_ALPHA, linewidth=0)
    ax.plot(steps, mean, color=LINE)
    ax.set_xlabel("environment steps")
    ax.set_ylabel(metric)
    ax.set_title(f"{metric}, {values.shape[0]} runs, mean and 1 std")
    fig.tight_layout()
    if out is not None:
        save_figure(fig, out)
    return fig


def plot_grid(path, out=None, levels: int = 12):
    """Contour figure of a value matrix, axes taken from its header."""
    matrix, meta = read_grid(path)
    res_i, res_j = matrix.shape
    lo = float(meta.get("lo", 0.0))
    hi = float(meta.get("hi", 1.0))
    # rows sweep axis_i, columns sweep axis_j; columns land on x
    xs = np.linspace(lo, hi, res_j)
    ys = np.linspace(lo, hi, res_i)
    fig, ax = plt.subplots(figsize=(5.4, 4.6))
    cs = ax.contour(xs, ys, matrix, levels=levels)
    ax.clabel(cs, inline=True, fontsize=7)
    ax.set_xlabel(f"state[{meta.get('axis_j', 1)}]")
    ax.set_ylabel(f"state[{meta.get('axis_i', 0)}]")
    title = meta.get("env_id", "value grid")
    ax.set_title(f"certificate level sets, {title}")
    ax.set_aspect("equal", adjustable="box")
    fig.tight_layout()
    if out is not None:
        save_figure(fig, out)
    return fig


def plot_tracking(path, out=None):
    """Reference-versus-actual overlay plus the tracking error norm."""
    cols, meta = read_trajectory(path)
    if "pos_0" not in cols or "ref_0" not in cols:
        raise ValueError(f"{path}: no position/reference columns; tracking "
                         "figures need a tracking-task trajectory")
    state_names = sorted((c for c in cols if c.startswith("s_")),
                         key=lambda c: int(c[2:]))
    err = np.sqrt(sum(cols[c] ** 2 for c in state_names))

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.6, 4.2))
    ax1.plot(cols["ref_0"], cols["ref_1"], "k--",
             label=f"reference ({meta.get('reference', 'unknown')})")
    ax1.plot(cols["pos_0"], cols["pos_1"], color="tab:red",
             label="closed loop")
    ax1.set_xlabel("x")
    ax1.set_ylabel("y")
    ax1.set_aspect("equal", adjustable="datalim")
    ax1.legend(loc="best")
    ax2.plot(cols["time"], err, color="tab:red")
    ax2.set_xlabel("time [s]")
    ax2.set_ylabel("tracking error norm")
    title = meta.get("env_id", "")
    fig.suptitle(f"tracking episode, {title}".rstrip(", "))
    fig.tight_layout()
    if out is not None:
        save_figure(fig, out)
    return fig


def save_figure(fig, out) -> Path:
    """Write the figure; output bytes depend only on the figure content.

    SVG needs two knobs for that: no Date field and a fixed hash salt
    for element ids (the default salt is a fresh uuid per process).
    """
    out = Path(out)
    if out.suffix == ".svg":
        with matplotlib.rc_context({"svg.hashsalt": "plotkit"}):
            fig.savefig(out, dpi=150, metadata={"Date": None})
    else:
        fig.savefig(out, dpi=150)
    return out
