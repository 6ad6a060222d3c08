"""Render a FigureSpec into a static SVG or PNG.

The canonical picture is two stacked panels on one shared T0 axis: the von
Neumann entropy on top, the requested channels' |b_n| and |c_n| moduli below,
legend entries carrying the usual ``T_n E_n`` channel names.  An empty
channel subset collapses the figure to the entropy panel alone.

Rendering is deterministic: a fixed ``svg.hashsalt``, a pinned font family,
no timestamps in the output metadata.  Identical inputs give byte-identical
files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .data import ChannelTable, EntropyTable, read_channels_csv, read_entropy_csv
from .figspec import FigureSpec, FigureSpecError

__all__ = ["RenderResult", "render"]

_RC = {
    "svg.hashsalt": "dotfigs",
    "font.family": "DejaVu Sans",
    "mathtext.fontset": "dejavusans",
    "axes.grid": True,
    "grid.alpha": 0.25,
    "legend.framealpha": 0.9,
}

# Per-layout cosmetics: overview keeps plain lines, the zoom variant marks
# every computed energy so sparse grids read honestly.
_STYLE = {
    "fig2_style": dict(figsize=(6.4, 6.2), marker="", linewidth=1.4, minor=False),
    "fig3_zoom_style": dict(figsize=(5.4, 5.8), marker=".", linewidth=1.1, minor=True),
}


@dataclass(frozen=True)
class RenderResult:
    output: Path
    format: str
    panel_count: int
    channels_rendered: tuple[int, ...]
    rows_plotted: int


def _check_window(spec: FigureSpec, table: ChannelTable | EntropyTable) -> None:
    lo, hi = spec.window_mev
    dlo, dhi = table.t0_range
    if lo < dlo - 1e-9 or hi > dhi + 1e-9:
        raise FigureSpecError(
            f"window [{lo}, {hi}] meV extends outside the data's T0 range "
            f"[{dlo}, {dhi}] meV ({table.path})"
        )


def _window_mask(t0: np.ndarray, window: tuple[float, float]) -> np.ndarray:
    lo, hi = window
    return (t0 >= lo - 1e-9) & (t0 <= hi + 1e-9)


def _resolve_channels(spec: FigureSpec, table: ChannelTable) -> tuple[int, ...]:
    if spec.channels is None:
        return tuple(range(table.num_levels))
    bad = [c for c in spec.channels if c >= table.num_levels]
    if bad:
        raise FigureSpecError(
            f"channel {bad[0]} requested but {table.path} carries levels "
            f"0..{table.num_levels - 1}"
        )
    return spec.channels


def render(spec: FigureSpec) -> RenderResult:
    """Draw the figure described by ``spec`` and write it to ``spec.output``."""
    if spec.entropy_csv is None:
        raise FigureSpecError(
            "no entropy CSV: set 'entropy_csv' in the spec or pass --entropy-csv"
        )
    entropy = read_entropy_csv(spec.entropy_csv)
    _check_window(spec, entropy)

    channels: ChannelTable | None = None
    wanted: tuple[int, ...] = ()
    if spec.wants_channel_panel:
        if spec.channels_csv is None:
            raise FigureSpecError(
                "channels_csv is required unless 'channels' is an empty list"
            )
        channels = read_channels_csv(spec.channels_csv)
        _check_window(spec, channels)
        wanted = _resolve_channels(spec, channels)

    style = _STYLE[spec.layout]
    panel_count = 2 if channels is not None else 1

    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=style["figsize"], constrained_layout=True)
        axes = fig.subplots(panel_count, 1, sharex=True)
        axes = np.atleast_1d(axes)

        mask = _window_mask(entropy.t0_mev, spec.window_mev)
        top = axes[0]
        top.plot(
            entropy.t0_mev[mask],
            entropy.xi[mask],
            color="tab:blue",
            marker=style["marker"],
            linewidth=style["linewidth"],
        )
        top.set_ylabel(r"$\xi$")
        rows_plotted = int(mask.sum())

        if channels is not None:
            bottom = axes[1]
            cmask = _window_mask(channels.t0_mev, spec.window_mev)
            cycle = matplotlib.rcParams["axes.prop_cycle"].by_key()["color"]
            for n in wanted:
                color = cycle[n % len(cycle)]
                name = f"$T_{{{n}}}E_{{{n}}}$"
                bottom.plot(
                    channels.t0_mev[cmask],
                    channels.b_abs[cmask, n],
                    color=color,
                    linestyle="--",
                    marker=style["marker"],
                    linewidth=style["linewidth"],
                    label=f"$|b_{{{n}}}|$  {name}",
                )
                bottom.plot(
                    channels.t0_mev[cmask],
                    channels.c_abs[cmask, n],
                    color=color,
                    linestyle="-",
                    marker=style["marker"],
                    linewidth=style["linewidth"],
                    label=f"$|c_{{{n}}}|$  {name}",
                )
            bottom.set_ylabel(r"$|b_n|,\ |c_n|$")
            bottom.legend(loc="upper right", fontsize=8, ncols=2)

        axes[-1].set_xlabel(r"$T_0$ (meV)")
        axes[-1].set_xlim(*spec.window_mev)
        if style["minor"]:
            for ax in axes:
                ax.minorticks_on()

        fmt = spec.output.suffix.lower().lstrip(".")
        spec.output.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "svg":
            fig.savefig(spec.output, format="svg", metadata={"Date": None})
        else:
            fig.savefig(
                spec.output, format="png", dpi=150, metadata={"Software": None}
            )

    return RenderResult(
        output=spec.output,
        format=fmt,
        panel_count=panel_count,
        channels_rendered=wanted,
        rows_plotted=rows_plotted,
    )
