"""Polar sky-plot rendering.

Satellite positions are drawn on the local celestial hemisphere: zenith at
the center, horizon at the rim (radius is 90 minus elevation), azimuth
clockwise with north up. Markers are color-mapped on a diverging scale
centered at zero so positive and negative key rates separate visually.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import TwoSlopeNorm


def render_skyplot(rows: list[tuple[float, float, float]], path: str | Path,
                   value_label: str = "r_sk (bits)", title: str = "") -> None:
    """Write one SVG sky plot of (azimuth, elevation, value) rows.

    An empty row list still produces a valid, empty plot.
    """
    # fixed hash salt and suppressed date keep repeated renders byte-identical
    with matplotlib.rc_context({"svg.hashsalt": "skyplot"}):
        _render(rows, path, value_label, title)


def _render(rows: list[tuple[float, float, float]], path: str | Path,
            value_label: str, title: str) -> None:
    fig = plt.figure(figsize=(6.0, 5.0))
    ax = fig.add_subplot(111, projection="polar")
    ax.set_theta_zero_location("N")
    ax.set_theta_direction(-1)
    ax.set_rlim(0.0, 90.0)
    ax.set_rgrids([0.0, 30.0, 60.0, 90.0], labels=["90", "60", "30", "0"])
    ax.set_thetagrids([0, 45, 90, 135, 180, 225, 270, 315],
                      labels=["N", "NE", "E", "SE", "S", "SW", "W", "NW"])
    if title:
        ax.set_title(title)
    if rows:
        azimuth = np.radians([r[0] for r in rows])
        radius = 90.0 - np.asarray([r[1] for r in rows], dtype=float)
        values = np.asarray([r[2] for r in rows], dtype=float)
        span = max(float(np.max(np.abs(values))), 0.1)
        norm = TwoSlopeNorm(vmin=-span, vcenter=0.0, vmax=span)
        scatter = ax.scatter(azimuth, radius, c=values, cmap="RdYlGn",
                             norm=norm, s=18, edgecolors="none")
        fig.colorbar(scatter, ax=ax, shrink=0.8, pad=0.1, label=value_label)
    fig.savefig(path, format="svg", bbox_inches="tight",
                metadata={"Date": None})
    plt.close(fig)
