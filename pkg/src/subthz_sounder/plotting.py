"""SVG figures: CIR overlays, rose plots, gain-vs-distance sweeps."""

from __future__ import annotations

import io
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_cir_overlay", "plot_rose", "plot_sweep", "figure_svg"]

STYLE = {
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "subthz-sounder",
    "svg.fonttype": "none",
}


def figure_svg(fig, timestamp: bool = True) -> str:
    """Serialise a figure to SVG text; without timestamp the output is stable."""
    buf = io.StringIO()
    metadata = None if timestamp else {"Date": None}
    fig.savefig(buf, format="svg", metadata=metadata)
    plt.close(fig)
    return buf.getvalue()


def plot_cir_overlay(delay_s: np.ndarray, omni_db: np.ndarray, los_db: np.ndarray | None,
                     title: str = "", zoom_us: float = 0.4, floor_db: float | None = None,
                     timestamp: bool = True) -> str:
    """LOS-direction CIR as a line over the pseudo-omni CIR as an area.

    The right panel repeats the leading ``zoom_us`` microseconds.
    """
    with plt.rc_context(STYLE):
        fig, (ax_full, ax_zoom) = plt.subplots(
            1, 2, figsize=(8.0, 3.2), gridspec_kw={"width_ratios": [2, 1]})
        t_us = np.asarray(delay_s) * 1e6
        finite = np.asarray(omni_db)[np.isfinite(omni_db)] if len(omni_db) else np.array([])
        bottom = float(np.floor(finite.min() / 10) * 10) if finite.size else -160.0
        if floor_db is not None and np.isfinite(floor_db):
            bottom = min(bottom, float(floor_db) - 10.0)
        for ax, limit in ((ax_full, None), (ax_zoom, zoom_us)):
            if len(t_us):
                ax.fill_between(t_us, bottom, np.where(np.isfinite(omni_db), omni_db, bottom),
                                color="tab:blue", alpha=0.35, lw=0, label="pseudo-omni")
                if los_db is not None:
                    ax.plot(t_us, los_db, color="tab:red", lw=0.8, label="LOS direction")
            ax.set_xlabel("delay (µs)")
            if limit is not None:
                ax.set_xlim(0, limit)
            elif len(t_us):
                ax.set_xlim(t_us[0], t_us[-1])
        ax_full.set_ylabel("channel gain (dB)")
        if finite.size:
            ax_full.set_ylim(bottom, float(finite.max()) + 5)
            ax_zoom.set_ylim(bottom, float(finite.max()) + 5)
            ax_full.legend(loc="upper right", frameon=False)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        return figure_svg(fig, timestamp)


def plot_rose(bin_power: Sequence[float], dots: Sequence[tuple[int, float]], n_bins: int = 24,
              title: str = "", timestamp: bool = True) -> str:
    """Polar wedge per angle bin plus one dot per extracted path."""
    with plt.rc_context(STYLE):
        fig = plt.figure(figsize=(4.0, 4.0))
        ax = fig.add_subplot(projection="polar")
        width = 2 * np.pi / n_bins
        centres = np.arange(n_bins) * width
        values = np.asarray(bin_power, dtype=float)
        if values.size and values.sum() > 0:
            ax.bar(centres, values, width=width, bottom=0.0, color="tab:blue", alpha=0.6,
                   edgecolor="white", lw=0.5)
        if dots:
            bins, shares = zip(*dots)
            ax.scatter(np.asarray(bins) * width, shares, s=8, color="k", zorder=3)
        ax.set_ylim(0, 1)
        ax.set_theta_zero_location("E")
        ax.set_theta_direction(1)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return figure_svg(fig, timestamp)


def plot_sweep(distance_m, measured_db, theory_db, two_ray_db=None, title: str = "",
               timestamp: bool = True) -> str:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        ax.semilogx(distance_m, theory_db, "k--", lw=0.8, label="free space + antennas")
        if two_ray_db is not None:
            ax.semilogx(distance_m, two_ray_db, color="tab:gray", lw=0.8, label="two-ray")
        ax.semilogx(distance_m, measured_db, "o", ms=3, color="tab:red", label="strongest path")
        ax.set_xlabel("distance (m)")
        ax.set_ylabel("channel gain (dB)")
        ax.legend(frameon=False)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return figure_svg(fig, timestamp)
