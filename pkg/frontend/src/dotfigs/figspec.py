"""Figure specification: what to plot, from which CSVs, into which file.

A spec is a small JSON object::

    {
      "channels_csv": "golden/qd_channels.csv",
      "entropy_csv": "golden/qd_entropy.csv",
      "layout": "fig2_style",
      "window_mev": [10.0, 40.0],
      "channels": [0, 1, 2],
      "output": "qd_overview.svg"
    }

* ``layout`` -- ``fig2_style`` is the full-range overview (plain lines);
  ``fig3_zoom_style`` is the close-up variant (point markers, finer ticks).
* ``window_mev`` -- plotted T0 range; must lie inside the data's T0 range.
* ``channels`` -- which bound levels get their |b_n| / |c_n| traces drawn.
  ``null`` means every level in the CSV; ``[]`` means no channel panel at
  all (entropy-only, single panel).
* ``channels_csv`` may be null/omitted when ``channels`` is ``[]``.
* ``entropy_csv`` may be omitted on the command line path: the CLI then
  derives it from the channels CSV filename (``channels`` -> ``entropy``).

Relative paths are resolved against the directory containing the spec file
(so checked-in example specs work from any working directory); specs built
in code resolve against the current directory unless ``base_dir`` says
otherwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

__all__ = ["FigureSpecError", "FigureSpec", "LAYOUTS"]

LAYOUTS = ("fig2_style", "fig3_zoom_style")

_KEYS = {"channels_csv", "entropy_csv", "layout", "window_mev", "channels", "output"}


class FigureSpecError(ValueError):
    """The figure spec itself is malformed or inconsistent with the data."""


@dataclass(frozen=True)
class FigureSpec:
    layout: str
    window_mev: tuple[float, float]
    output: Path
    channels: tuple[int, ...] | None = None
    channels_csv: Path | None = None
    entropy_csv: Path | None = None

    def __post_init__(self) -> None:
        if self.layout not in LAYOUTS:
            raise FigureSpecError(
                f"unknown layout '{self.layout}'; expected one of {', '.join(LAYOUTS)}"
            )
        lo, hi = self.window_mev
        if not (lo < hi):
            raise FigureSpecError(
                f"window_mev must satisfy lo < hi, got [{lo}, {hi}]"
            )
        if self.channels is not None:
            bad = [c for c in self.channels if c < 0]
            if bad:
                raise FigureSpecError(f"negative channel index {bad[0]}")
        # channels_csv/entropy_csv presence is checked at render time, after
        # command-line overrides have had their chance to fill the paths in
        if self.output.suffix.lower() not in (".svg", ".png"):
            raise FigureSpecError(
                f"output '{self.output}' must end in .svg or .png"
            )

    @property
    def wants_channel_panel(self) -> bool:
        return self.channels is None or len(self.channels) > 0

    @classmethod
    def from_json(cls, path: str | Path) -> "FigureSpec":
        """Load a spec file, resolving relative paths against its directory."""
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise FigureSpecError(f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise FigureSpecError(f"{path}: not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise FigureSpecError(f"{path}: top level must be a JSON object")
        unknown = sorted(set(raw) - _KEYS)
        if unknown:
            raise FigureSpecError(f"{path}: unknown spec key '{unknown[0]}'")
        missing = [k for k in ("layout", "window_mev", "output") if k not in raw]
        if missing:
            raise FigureSpecError(f"{path}: missing required key '{missing[0]}'")

        window = raw["window_mev"]
        if (
            not isinstance(window, (list, tuple))
            or len(window) != 2
            or not all(isinstance(v, (int, float)) for v in window)
        ):
            raise FigureSpecError(f"{path}: window_mev must be [lo, hi] in meV")
        channels = raw.get("channels")
        if channels is not None:
            if not isinstance(channels, list) or not all(
                isinstance(c, int) and not isinstance(c, bool) for c in channels
            ):
                raise FigureSpecError(f"{path}: channels must be null or a list of integers")
            channels = tuple(channels)

        base = path.parent
        spec = cls(
            layout=str(raw["layout"]),
            window_mev=(float(window[0]), float(window[1])),
            output=base / str(raw["output"]),
            channels=channels,
            channels_csv=(
                base / str(raw["channels_csv"])
                if raw.get("channels_csv") is not None
                else None
            ),
            entropy_csv=(
                base / str(raw["entropy_csv"])
                if raw.get("entropy_csv") is not None
                else None
            ),
        )
        return spec

    def with_overrides(
        self,
        channels_csv: str | Path | None = None,
        entropy_csv: str | Path | None = None,
        output: str | Path | None = None,
    ) -> "FigureSpec":
        """Copy with command-line path overrides applied."""
        spec = self
        if channels_csv is not None:
            spec = replace(spec, channels_csv=Path(channels_csv))
        if entropy_csv is not None:
            spec = replace(spec, entropy_csv=Path(entropy_csv))
        if output is not None:
            spec = replace(spec, output=Path(output))
        return spec
