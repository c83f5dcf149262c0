"""Render experiment CSVs into figures.

This package reads only the documented CSV schemas (landscape grids,
per-seed metrics, ablation summaries, trajectory dumps); it has no access
to checkpoints or the training code. Rendering is a pure function of file
content: fixed styling, no timestamps, so a re-render is byte-stable.
"""

import csv
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("landscape", "curves", "curriculum", "ablation", "trajectories")

_SAVE_KW = dict(dpi=110, metadata={"Software": None})


@dataclass
class FigureSpec:
    kind: str
    inputs: list
    output: str
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")
        if not self.inputs:
            raise ValueError("spec needs at least one input CSV")

    @classmethod
    def from_dict(cls, data):
        return cls(kind=data["kind"], inputs=list(data["inputs"]),
                   output=data["output"], labels=dict(data.get("labels", {})))


def read_csv(path, required=()):
    """Rows as {column: float} dicts; named error on a missing column."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty CSV")
        for column in required:
            if column not in reader.fieldnames:
                raise ValueError(f"{path}: missing column {column!r}")
        rows = [{k: float(v) for k, v in row.items() if v != ""} for row in reader]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return rows


def _column(rows, name):
    return np.array([row[name] for row in rows])


# ---------------------------------------------------------------------------
# Loaders per kind

def load_landscape(path):
    rows = read_csv(path, required=("x", "y", "score"))
    xs = np.unique(_column(rows, "x"))
    ys = np.unique(_column(rows, "y"))
    grid = np.full((len(xs), len(ys)), np.nan)
    xi = {v: i for i, v in enumerate(xs)}
    yi = {v: i for i, v in enumerate(ys)}
    for row in rows:
        grid[xi[row["x"]], yi[row["y"]]] = row["score"]
    return xs, ys, grid


def load_seed_curves(paths, column):
    """Per-seed metric column aligned on the common epoch prefix."""
    curves = []
    for path in paths:
        rows = read_csv(path, required=("epoch", column))
        curves.append(_column(rows, column))
    t = min(len(c) for c in curves)
    return np.arange(t), np.stack([c[:t] for c in curves])


# ---------------------------------------------------------------------------
# Panel painters (shared between render and compare)

def _paint_landscape(ax, path, labels, vmin=None, vmax=None):
    xs, ys, grid = load_landscape(path)
    im = ax.pcolormesh(xs, ys, grid.T, shading="nearest", cmap="viridis",
                       vmin=vmin, vmax=vmax)
    ax.set_xlabel(labels.get("xlabel", "x"))
    ax.set_ylabel(labels.get("ylabel", "y"))
    ax.set_aspect("equal")
    return im


def _paint_curves(ax, paths, labels):
    column = labels.get("column", "training_error")
    epochs, curves = load_seed_curves(paths, column)
    mean = curves.mean(axis=0)
    std = curves.std(axis=0)
    ax.plot(epochs, mean, color="C0", label=f"mean over {len(curves)} seeds")
    ax.fill_between(epochs, mean - std, mean + std, color="C0", alpha=0.25,
                    linewidth=0)
    ax.set_xlabel("epoch")
    ax.set_ylabel(labels.get("ylabel", column))
    ax.legend(frameon=False)


def _paint_curriculum(ax, paths, labels):
    rows = read_csv(paths[0], required=("epoch", "forcing_frequency",
                                        "mean_segment_length"))
    epochs = _column(rows, "epoch")
    ax.plot(epochs, _column(rows, "forcing_frequency"), color="C0",
            label="intervention frequency")
    ax.set_xlabel("epoch")
    ax.set_ylabel("frequency", color="C0")
    twin = ax.twinx()
    twin.plot(epochs, _column(rows, "mean_segment_length"), color="C1",
              label="mean segment length")
    twin.set_ylabel("segment length", color="C1")


def _paint_ablation(ax, paths, labels):
    rows = read_csv(paths[0], required=("value", "seed", "best_error"))
    by_value = {}
    for row in rows:
        by_value.setdefault(row["value"], []).append(row["best_error"])
    values = sorted(by_value)
    means = [np.mean(by_value[v]) for v in values]
    stds = [np.std(by_value[v]) for v in values]
    ax.bar(range(len(values)), means, yerr=stds, color="C0", capsize=4)
    ax.set_xticks(range(len(values)), [f"{v:g}" for v in values])
    ax.set_xlabel(labels.get("xlabel", "value"))
    ax.set_ylabel(labels.get("ylabel", "best error"))


def _paint_trajectories(ax, paths, labels):
    rows = read_csv(paths[0], required=("episode", "t", "agent", "s0", "s1"))
    episodes = {}
    for row in rows:
        key = (row["episode"], row["agent"])
        episodes.setdefault(key, []).append((row["t"], row["s0"], row["s1"]))
    for (_, agent), pts in sorted(episodes.items()):
        pts.sort()
        arr = np.array(pts)
        ax.plot(arr[:, 1], arr[:, 2], color=f"C{int(agent) % 10}", alpha=0.6,
                linewidth=1.0)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_aspect("equal")


def render(spec):
    """Draw one figure; returns a summary dict for inspection."""
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    info = {"kind": spec.kind, "output": spec.output, "panels": 1}
    try:
        if spec.kind == "landscape":
            im = _paint_landscape(ax, spec.inputs[0], spec.labels)
            fig.colorbar(im, ax=ax, label=spec.labels.get("score", "score"))
            info["color_range"] = [float(im.norm.vmin), float(im.norm.vmax)]
        elif spec.kind == "curves":
            _paint_curves(ax, spec.inputs, spec.labels)
        elif spec.kind == "curriculum":
            _paint_curriculum(ax, spec.inputs, spec.labels)
        elif spec.kind == "ablation":
            _paint_ablation(ax, spec.inputs, spec.labels)
        else:
            _paint_trajectories(ax, spec.inputs, spec.labels)
        if "title" in spec.labels:
            ax.set_title(spec.labels["title"])
        fig.tight_layout()
        fig.savefig(spec.output, **_SAVE_KW)
    finally:
        plt.close(fig)
    return info


def compare(specs, output=None):
    """Multi-panel figure with shared scales across panels of one kind."""
    if len(specs) < 2:
        raise ValueError("compare needs at least two specs")
    kinds = {s.kind for s in specs}
    if len(kinds) != 1:
        raise ValueError(f"compare requires one kind, got {sorted(kinds)}")
    kind = specs[0].kind
    output = output or specs[0].output
    n = len(specs)
    fig, axes = plt.subplots(1, n, figsize=(4.0 * n, 4.0))
    info = {"kind": kind, "output": output, "panels": n}
    try:
        if kind == "landscape":
            grids = [load_landscape(s.inputs[0])[2] for s in specs]
            vmin = min(np.nanmin(g) for g in grids)
            vmax = max(np.nanmax(g) for g in grids)
            last = None
            for ax, s in zip(axes, specs):
                last = _paint_landscape(ax, s.inputs[0], s.labels, vmin, vmax)
                ax.set_title(s.labels.get("title", ""))
            fig.colorbar(last, ax=list(axes), label="score")
            info["color_range"] = [float(vmin), float(vmax)]
        else:
            painters = {"curves": _paint_curves, "curriculum": _paint_curriculum,
                        "ablation": _paint_ablation,
                        "trajectories": _paint_trajectories}
            for ax, s in zip(axes, specs):
                painters[kind](ax, s.inputs, s.labels)
                ax.set_title(s.labels.get("title", ""))
            if kind in ("curves", "trajectories"):
                x0 = min(ax.get_xlim()[0] for ax in axes)
                x1 = max(ax.get_xlim()[1] for ax in axes)
                y0 = min(ax.get_ylim()[0] for ax in axes)
                y1 = max(ax.get_ylim()[1] for ax in axes)
                for ax in axes:
                    ax.set_xlim(x0, x1)
                    ax.set_ylim(y0, y1)
                info["axis_range"] = [x0, x1, y0, y1]
        fig.savefig(output, **_SAVE_KW)
    finally:
        plt.close(fig)
    return info
