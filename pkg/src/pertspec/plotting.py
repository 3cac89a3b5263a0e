"""Deterministic SVG output (line plots and heatmaps)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "pertspec", "svg.fonttype": "none", "font.size": 9}


def _save(fig, path: Path) -> Path:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    fig.savefig(tmp, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    tmp.replace(path)
    return path


def line_plot(
    path: str | Path,
    x,
    series: dict[str, np.ndarray],
    xlabel: str,
    ylabel: str,
    title: str = "",
    logx: bool = False,
    logy: bool = False,
    errors: dict[str, np.ndarray] | None = None,
    styles: dict[str, str] | None = None,
    note: str = "",
) -> Path:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        for name, y in series.items():
            fmt = (styles or {}).get(name, "-")
            if errors and name in errors:
                ax.errorbar(x, y, yerr=errors[name], fmt=fmt, ms=3, capsize=2, label=name)
            else:
                ax.plot(x, y, fmt, label=name)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if note:
            ax.text(0.99, 0.01, note, transform=ax.transAxes, ha="right", va="bottom", fontsize=6)
        ax.legend(loc="best")
        ax.grid(alpha=0.3)
        fig.tight_layout()
        return _save(fig, path)


def heatmap(
    path: str | Path,
    re_axis: np.ndarray,
    im_axis: np.ndarray,
    values: np.ndarray,
    label: str,
    title: str = "",
    points: np.ndarray | None = None,
    note: str = "",
) -> Path:
    """``values[i_im, i_re]`` drawn over the rectangle spanned by the axes."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4.5))
        mesh = ax.pcolormesh(re_axis, im_axis, values, shading="auto", cmap="viridis")
        fig.colorbar(mesh, ax=ax, label=label)
        if points is not None and len(points):
            ax.plot(np.real(points), np.imag(points), "w.", ms=2)
        ax.set_xlabel("Re z")
        ax.set_ylabel("Im z")
        if title:
            ax.set_title(title)
        if note:
            ax.text(0.99, 0.01, note, transform=ax.transAxes, ha="right", va="bottom", fontsize=6, color="w")
        fig.tight_layout()
        return _save(fig, path)
