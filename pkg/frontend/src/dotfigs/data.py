"""Parsing of dotscatter sweep CSVs into plot-ready tables.

Two files describe one sweep, keyed by the incident kinetic energy column
``T0_meV``:

* channels CSV -- header ``T0_meV, M`` then five columns per bound level n
  (``T_n_meV, R_n, T_n_prob, b_abs_n, c_abs_n``), then ``status, wall_s``;
* entropy CSV -- header ``T0_meV, xi, M`` then ``lambda_0 ...``.

Parsing is strict: any deviation from the documented header, a short row, or
an unparsable cell raises :class:`SchemaError` naming the offending column.
Rows whose ``status`` is not ``ok`` carry NaN physics values and are dropped
from the returned table (their count is kept for reporting).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "SchemaError",
    "ChannelTable",
    "EntropyTable",
    "read_channels_csv",
    "read_entropy_csv",
]


class SchemaError(ValueError):
    """A sweep CSV does not match the documented schema."""


def _channel_columns(num_levels: int) -> list[str]:
    cols = ["T0_meV", "M"]
    for n in range(num_levels):
        cols += [f"T_{n}_meV", f"R_{n}", f"T_{n}_prob", f"b_abs_{n}", f"c_abs_{n}"]
    cols += ["status", "wall_s"]
    return cols


@dataclass(frozen=True)
class ChannelTable:
    """Converged rows of a channels CSV, one array column per quantity.

    Arrays with a level axis are shaped ``(num_rows, num_levels)``.
    """

    path: Path
    num_levels: int
    t0_mev: np.ndarray
    num_open: np.ndarray
    kinetic_mev: np.ndarray
    reflection: np.ndarray
    transmission: np.ndarray
    b_abs: np.ndarray
    c_abs: np.ndarray
    num_dropped: int

    @property
    def t0_range(self) -> tuple[float, float]:
        return float(self.t0_mev.min()), float(self.t0_mev.max())


@dataclass(frozen=True)
class EntropyTable:
    """Rows of an entropy CSV; ``eigenvalues`` is ``(num_rows, num_levels)``."""

    path: Path
    num_levels: int
    t0_mev: np.ndarray
    xi: np.ndarray
    num_open: np.ndarray
    eigenvalues: np.ndarray

    @property
    def t0_range(self) -> tuple[float, float]:
        return float(self.t0_mev.min()), float(self.t0_mev.max())


def _read_rows(path: Path) -> list[list[str]]:
    try:
        with open(path, newline="") as stream:
            rows = [row for row in csv.reader(stream) if row]
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise SchemaError(f"{path}: file is empty")
    return rows


def _match_header(path: Path, found: list[str], expected: list[str]) -> None:
    for pos, want in enumerate(expected):
        if pos >= len(found):
            raise SchemaError(
                f"{path}: header is missing column '{want}' (position {pos})"
            )
        if found[pos].strip() != want:
            raise SchemaError(
                f"{path}: expected column '{want}' at position {pos}, "
                f"found '{found[pos].strip()}'"
            )
    if len(found) > len(expected):
        raise SchemaError(
            f"{path}: unexpected extra column '{found[len(expected)].strip()}'"
        )


def _cell_float(path: Path, row_num: int, column: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise SchemaError(
            f"{path}: row {row_num}, column '{column}': "
            f"could not parse '{raw}' as a number"
        ) from None


def read_channels_csv(path: str | Path) -> ChannelTable:
    """Parse a channels CSV, keeping only rows whose status is ``ok``."""
    path = Path(path)
    rows = _read_rows(path)
    header = [cell.strip() for cell in rows[0]]
    # The level count is implied by the header length: 2 leading columns,
    # 2 trailing ones, and five per level in between.
    body = len(header) - 4
    if body < 0 or body % 5:
        _match_header(path, header, _channel_columns(max(body // 5 + 1, 1)))
        raise SchemaError(f"{path}: header has {len(header)} columns; expected 2 + 5*levels + 2")
    num_levels = body // 5
    expected = _channel_columns(num_levels)
    _match_header(path, header, expected)

    kept: list[list[float]] = []
    dropped = 0
    for row_num, row in enumerate(rows[1:], start=2):
        if len(row) != len(expected):
            raise SchemaError(
                f"{path}: row {row_num} has {len(row)} cells, header has {len(expected)}"
            )
        if row[-2].strip() != "ok":
            dropped += 1
            continue
        values = [
            _cell_float(path, row_num, expected[i], row[i].strip())
            for i in range(len(expected) - 2)
        ]
        kept.append(values)
    if not kept:
        raise SchemaError(f"{path}: no converged rows (status == 'ok') to plot")

    data = np.asarray(kept, dtype=float)
    order = np.argsort(data[:, 0], kind="stable")
    data = data[order]
    per_level = data[:, 2:].reshape(len(kept), num_levels, 5)
    return ChannelTable(
        path=path,
        num_levels=num_levels,
        t0_mev=data[:, 0],
        num_open=data[:, 1].astype(int),
        kinetic_mev=per_level[:, :, 0],
        reflection=per_level[:, :, 1],
        transmission=per_level[:, :, 2],
        b_abs=per_level[:, :, 3],
        c_abs=per_level[:, :, 4],
        num_dropped=dropped,
    )


def read_entropy_csv(path: str | Path) -> EntropyTable:
    """Parse an entropy CSV."""
    path = Path(path)
    rows = _read_rows(path)
    header = [cell.strip() for cell in rows[0]]
    num_levels = max(len(header) - 3, 0)
    expected = ["T0_meV", "xi", "M"] + [f"lambda_{n}" for n in range(num_levels)]
    _match_header(path, header, expected)
    if num_levels == 0:
        raise SchemaError(f"{path}: header carries no 'lambda_n' columns")

    parsed: list[list[float]] = []
    for row_num, row in enumerate(rows[1:], start=2):
        if len(row) != len(expected):
            raise SchemaError(
                f"{path}: row {row_num} has {len(row)} cells, header has {len(expected)}"
            )
        parsed.append(
            [
                _cell_float(path, row_num, expected[i], row[i].strip())
                for i in range(len(expected))
            ]
        )
    if not parsed:
        raise SchemaError(f"{path}: no data rows")

    data = np.asarray(parsed, dtype=float)
    order = np.argsort(data[:, 0], kind="stable")
    data = data[order]
    return EntropyTable(
        path=path,
        num_levels=num_levels,
        t0_mev=data[:, 0],
        xi=data[:, 1],
        num_open=data[:, 2].astype(int),
        eigenvalues=data[:, 3:],
    )
