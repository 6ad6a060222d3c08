"""Command line entry point.

Usage::

    dotfigs CHANNELS_CSV SPEC_JSON [--entropy-csv PATH] [--output PATH]

The positional CSV is the channels file of a sweep; the entropy file rides
along either via ``--entropy-csv``, the spec's ``entropy_csv`` key, or -- as
a last resort -- the naming convention of the sweep writer ("channels" ->
"entropy" in the filename).  Command-line paths beat spec-file paths.

Exit codes: 0 on success, 1 on any spec/schema/IO error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .data import SchemaError
from .figspec import FigureSpec, FigureSpecError
from .render import render

__all__ = ["main"]


def _derive_entropy_path(channels_csv: Path) -> Path | None:
    name = channels_csv.name.replace("channels", "entropy")
    if name == channels_csv.name:
        return None
    candidate = channels_csv.with_name(name)
    return candidate if candidate.exists() else None


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dotfigs",
        description="Render sweep CSVs into entropy / channel-moduli panels.",
    )
    parser.add_argument("channels_csv", help="channels CSV written by a sweep")
    parser.add_argument("spec", help="figure spec JSON file")
    parser.add_argument(
        "--entropy-csv",
        default=None,
        help="entropy CSV (default: spec value, else derived from the channels filename)",
    )
    parser.add_argument(
        "--output", default=None, help="output image path (overrides the spec)"
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = FigureSpec.from_json(args.spec)
        spec = spec.with_overrides(
            channels_csv=args.channels_csv,
            entropy_csv=args.entropy_csv,
            output=args.output,
        )
        if spec.entropy_csv is None:
            derived = _derive_entropy_path(Path(args.channels_csv))
            if derived is None:
                raise FigureSpecError(
                    "cannot locate the entropy CSV: pass --entropy-csv or set "
                    "'entropy_csv' in the spec"
                )
            spec = spec.with_overrides(entropy_csv=derived)
        result = render(spec)
    except (FigureSpecError, SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    noun = "panel" if result.panel_count == 1 else "panels"
    print(
        f"wrote {result.output} ({result.panel_count} {noun}, "
        f"{len(result.channels_rendered)} channels, {result.rows_plotted} rows)"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
