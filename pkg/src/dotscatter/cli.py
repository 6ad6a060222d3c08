"""Command-line driver: bound-state reports, energy sweeps, single solves.

Exit codes: 0 success, 1 configuration error, 2 solver failures (more than
10% of sweep rows, or a failed single solve).
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path
from typing import Sequence

from .channels import extract_amplitudes, post_select
from .entanglement import entropy_record
from .errors import InvalidParameterError, SimulationError
from .scattering import dump_wavefunction
from .sweep import (
    SweepConfig,
    SweepRow,
    build_sweep_model,
    report_spectrum,
    run_sweep,
)

_FAILURE_EXIT_FRACTION = 0.10


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # unquoted strings are fine on a command line
    return key, value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dotscatter",
        description="Scattering sweeps over incident energy for dot-bound electrons",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file (keys = SweepConfig fields)")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            type=_parse_override,
            metavar="KEY=VALUE",
            help="override any config key (value parsed as JSON when possible)",
        )
        p.add_argument("--system", choices=("qd_2p", "dqd_3p"))
        p.add_argument("--t0-min", type=float, dest="t0_min_mev")
        p.add_argument("--t0-max", type=float, dest="t0_max_mev")
        p.add_argument("--num-steps", type=int, dest="num_steps")

    sweep_p = sub.add_parser("sweep", help="run an energy sweep, write CSV outputs")
    add_common(sweep_p)
    sweep_p.add_argument("--channels-csv", dest="channels_csv")
    sweep_p.add_argument("--entropy-csv", dest="entropy_csv")
    sweep_p.add_argument("--provenance-json", dest="provenance_json")
    sweep_p.add_argument("--workers", type=int, dest="workers")
    sweep_p.add_argument(
        "--refine", action="store_true", default=None,
        help="insert midpoints where adjacent entropies jump",
    )
    sweep_p.add_argument(
        "--post-selection", dest="post_selection",
        choices=("both", "transmitted", "reflected"),
    )
    sweep_p.add_argument(
        "--quiet", action="store_true", help="suppress per-energy progress lines"
    )

    spectrum_p = sub.add_parser("spectrum", help="report bound levels and thresholds")
    add_common(spectrum_p)

    solve_p = sub.add_parser("solve-one", help="solve a single incident energy")
    add_common(solve_p)
    solve_p.add_argument("--t0", type=float, required=True, help="incident kinetic energy (meV)")
    solve_p.add_argument("--dump", help="write the solved wavefunction to this path")
    return parser


def _config_from_args(args: argparse.Namespace) -> SweepConfig:
    data: dict = {}
    if args.config:
        data.update(json.loads(Path(args.config).read_text()))
    field_names = {f.name for f in fields(SweepConfig)}
    for name in field_names:
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    for key, value in args.overrides:
        data[key] = value
    # spectrum/solve-one do not sweep, but the config type still wants a grid
    if args.command != "sweep":
        data.setdefault("t0_min_mev", 1.0)
        data.setdefault("t0_max_mev", 2.0)
        data.setdefault("num_steps", 2)
    return SweepConfig.from_mapping(data)


def _run_sweep(args: argparse.Namespace) -> int:
    config = _config_from_args(args)

    def progress(row: SweepRow) -> None:
        xi = f"{row.record.xi:.4f}" if row.record is not None else "-"
        print(
            f"T0={row.t0_mev:10.4f} meV  status={row.status:<22s} xi={xi} "
            f"({row.wall_s:.1f} s)",
            flush=True,
        )

    result = run_sweep(config, progress=None if args.quiet else progress)
    print(
        f"{len(result.rows)} rows ({result.num_failed} failed) -> "
        f"{config.channels_csv}, {config.entropy_csv}"
    )
    if result.failure_fraction > _FAILURE_EXIT_FRACTION:
        return 2
    return 0


def _run_spectrum(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    print(report_spectrum(config).format())
    return 0


def _run_solve_one(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    model = build_sweep_model(config)
    basis = model.bound if config.system == "qd_2p" else model.pair
    try:
        solution = model.solve(
            args.t0,
            incident_channel=config.incident_channel,
            incident_side=config.incident_side,
            num_evanescent=config.num_evanescent,
        )
        amps = extract_amplitudes(solution)
        record = entropy_record(
            post_select(amps, config.post_selection), basis.degeneracy_groups
        )
    except InvalidParameterError:
        raise  # bad inputs are a config error (exit 1), not a solver failure
    except SimulationError as exc:
        print(f"solve failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(f"T0 = {args.t0:.6f} meV   total E = {solution.total_energy_mev:.6f} meV")
    print(f"unitarity defect = {amps.unitarity_defect:.3e}")
    print(f"xi = {record.xi:.6f} nats over {record.num_open} open channels")
    for ch in amps.channels:
        if ch.is_open:
            print(
                f"  channel {ch.index}: T_n = {ch.kinetic_mev:9.4f} meV  "
                f"R = {amps.reflection[ch.index]:.6f}  "
                f"T = {amps.transmission[ch.index]:.6f}"
            )
    if args.dump:
        dump_wavefunction(solution, args.dump)
        print(f"wavefunction written to {args.dump}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "sweep":
            return _run_sweep(args)
        if args.command == "spectrum":
            return _run_spectrum(args)
        return _run_solve_one(args)
    except (SimulationError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover - exercised via the console script
    sys.exit(main())
