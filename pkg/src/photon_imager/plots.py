"""SVG heatmaps with fixed colour ranges and byte-reproducible output."""
from __future__ import annotations

import numpy as np
from matplotlib import rc_context
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure


def color_range(*images, symmetric_zero: bool = False):
    """``(lo, hi)`` spanning the finite values of all images."""
    vals = np.concatenate([np.asarray(im, dtype=float).ravel() for im in images])
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return 0.0, 1.0
    lo, hi = (0.0, float(vals.max())) if symmetric_zero else (float(vals.min()), float(vals.max()))
    if hi <= lo:
        hi = lo + 1.0
    return lo, hi


def save_heatmap(path, image, vmin: float, vmax: float, title: str, units: str, cmap: str = "viridis") -> None:
    fig = Figure(figsize=(4.2, 3.6))
    FigureCanvasSVG(fig)
    ax = fig.add_subplot()
    im = ax.imshow(np.asarray(image, dtype=float), vmin=vmin, vmax=vmax, cmap=cmap, interpolation="nearest")
    ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    fig.colorbar(im, ax=ax, label=units)
    with rc_context({"svg.hashsalt": "photon-imager", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
