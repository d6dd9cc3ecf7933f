"""Figures (PNG via matplotlib) and plain-text gnuplot data files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .measures import EmpiricalMeasure  # noqa: E402

# no version string or timestamp in the files, so reruns are byte-identical
_META = {"Software": None}


def write_gnuplot(path, columns: dict, comment: str = "") -> Path:
    """Whitespace-separated columns with a ``#`` header, readable by ``plot 'f' using 1:2``."""
    path = Path(path)
    names = list(columns)
    cols = [np.asarray(columns[k], dtype=float).reshape(-1) for k in names]
    n = max((len(c) for c in cols), default=0)
    lines = []
    if comment:
        lines += [f"# {ln}" for ln in comment.splitlines()]
    lines.append("# " + " ".join(names))
    for i in range(n):
        lines.append(" ".join(f"{c[i]:.10g}" if i < len(c) else "nan" for c in cols))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_gnuplot_blocks(path, x, y, Z, comment: str = "") -> Path:
    """Grid data for ``splot ... with pm3d``: one block per ``x`` separated by blank lines."""
    path = Path(path)
    lines = [f"# {ln}" for ln in comment.splitlines()] if comment else []
    lines.append("# x y value")
    for i, xi in enumerate(x):
        for j, yj in enumerate(y):
            lines.append(f"{xi:.6f} {yj:.6f} {Z[i, j]:.10g}")
        lines.append("")
    path.write_text("\n".join(lines) + "\n")
    return path


def _save(fig, path):
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return Path(path)


def measure_density(mu: EmpiricalMeasure) -> np.ndarray:
    """Bin weights as a density; 3D measures are marginalized onto the first two axes."""
    B = mu.bins
    if mu.dim == 3:
        B = B.sum(axis=2)
    return B * (mu.resolution ** min(mu.dim, 2)) / max(B.sum(), 1e-300)


def plot_measure(mu: EmpiricalMeasure, stem, title: str = "") -> list:
    """``<stem>.png`` and ``<stem>.dat`` of the binned density."""
    stem = Path(stem)
    D = measure_density(mu)
    g = (np.arange(mu.resolution) + 0.5) / mu.resolution
    fig, ax = plt.subplots(figsize=(5, 4))
    if mu.dim == 1:
        ax.plot(g, D)
        ax.set_xlabel("x")
        ax.set_ylabel("density")
        dat = write_gnuplot(stem.with_suffix(".dat"), {"x": g, "density": D}, title)
    else:
        im = ax.imshow(D.T, origin="lower", extent=(0, 1, 0, 1), cmap="viridis")
        fig.colorbar(im, ax=ax)
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        dat = write_gnuplot_blocks(stem.with_suffix(".dat"), g, g, D, title)
    if title:
        ax.set_title(title)
    return [_save(fig, stem.with_suffix(".png")), dat]


def plot_series(stem, x, series: dict, xlabel: str, ylabel: str, title: str = "",
                logy: bool = False, markers: bool = True) -> list:
    stem = Path(stem)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, y in series.items():
        ax.plot(x, y, "o-" if markers else "-", ms=3, label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if logy:
        ax.set_yscale("log")
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    cols = {xlabel: x}
    cols.update(series)
    dat = write_gnuplot(stem.with_suffix(".dat"), cols, title)
    return [_save(fig, stem.with_suffix(".png")), dat]


def plot_histogram(stem, values, xlabel: str, bins: int = 40, title: str = "") -> list:
    stem = Path(stem)
    values = np.asarray(values, float)
    values = values[np.isfinite(values)]
    counts, edges = np.histogram(values, bins=bins)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.stairs(counts, edges, fill=True)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    centers = 0.5 * (edges[:-1] + edges[1:])
    dat = write_gnuplot(stem.with_suffix(".dat"), {xlabel: centers, "count": counts}, title)
    return [_save(fig, stem.with_suffix(".png")), dat]


def plot_points(stem, groups: dict, title: str = "") -> list:
    """Scatter of point sets (first two coordinates), one colour per group."""
    stem = Path(stem)
    fig, ax = plt.subplots(figsize=(5, 5))
    cols = {}
    for name, P in groups.items():
        P = np.atleast_2d(np.asarray(P, float))
        y = P[:, 1] if P.shape[1] > 1 else np.zeros(len(P))
        ax.scatter(P[:, 0], y, s=8, label=name)
        cols[f"{name}_x1"] = P[:, 0]
        cols[f"{name}_x2"] = y
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_aspect("equal")
    ax.legend()
    if title:
        ax.set_title(title)
    dat = write_gnuplot(stem.with_suffix(".dat"), cols, title)
    return [_save(fig, stem.with_suffix(".png")), dat]
