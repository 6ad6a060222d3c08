"""Config-driven energy sweeps: streaming CSV output, resume, refinement.

The sweep driver owns everything between a JSON config and the two output
CSVs (channel amplitudes and entropy).  Solves are independent per energy,
so failures are recorded in-row and the sweep continues; the output files
are rewritten in strictly increasing T0 order once the run finishes.
"""
from __future__ import annotations

import concurrent.futures
import hashlib
import json
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import __version__
from .channels import ChannelAmplitudes, extract_amplitudes, post_select
from .entanglement import EntropyRecord, entropy_record
from .errors import InvalidParameterError
from .model import Grid1D, InteractionTaper, build_potential, make_material
from .scattering import PairScatteringModel, TripleScatteringModel

_SYSTEMS = ("qd_2p", "dqd_3p")
_POST_SELECTIONS = ("both", "transmitted", "reflected")

# Column layout documentation lives in the writer functions below; the
# formatting contract (12 fixed decimals) is shared by both files.
_FMT = "{:.12f}"


@dataclass(frozen=True)
class SweepConfig:
    """Validated sweep parameters; frozen so a run cannot mutate its config."""

    system: str
    t0_min_mev: float
    t0_max_mev: float
    num_steps: int
    channels_csv: str = "sweep_channels.csv"
    entropy_csv: str = "sweep_entropy.csv"
    provenance_json: str = "sweep_provenance.json"
    refine: bool = False
    refine_delta_xi: float = 0.05
    refine_max_points: int = 40
    post_selection: str = "both"
    length_nm: float = 600.0
    spacing_nm: float = 1.0
    well_depth_mev: float = 110.0
    well_width_nm: float = 30.0
    barrier_nm: float = 20.0
    effective_mass_ratio: float = 0.067
    relative_permittivity: float = 12.9
    coulomb_cutoff_d_nm: float = 5.0
    interaction_strength: float = 1.0
    taper_on_nm: float | None = 100.0
    taper_off_nm: float | None = 150.0
    max_levels: int | None = None
    num_evanescent: int = 6
    incident_channel: int = 0
    incident_side: str = "left"
    unitarity_tol: float = 1e-8
    workers: int = 1

    def __post_init__(self) -> None:
        if self.system not in _SYSTEMS:
            raise InvalidParameterError(
                f"system must be one of {_SYSTEMS}, got {self.system!r}"
            )
        if self.t0_min_mev <= 0.0:
            raise InvalidParameterError("t0_min_mev must be > 0")
        if self.t0_max_mev <= self.t0_min_mev:
            raise InvalidParameterError("t0_max_mev must exceed t0_min_mev")
        if self.num_steps < 2:
            raise InvalidParameterError("num_steps must be at least 2")
        if self.post_selection not in _POST_SELECTIONS:
            raise InvalidParameterError(
                f"post_selection must be one of {_POST_SELECTIONS}"
            )
        if self.refine_max_points < 0:
            raise InvalidParameterError("refine_max_points must be >= 0")
        if self.workers < 1:
            raise InvalidParameterError("workers must be >= 1")
        if (self.taper_on_nm is None) != (self.taper_off_nm is None):
            raise InvalidParameterError(
                "taper_on_nm and taper_off_nm must be given together"
            )

    @classmethod
    def from_mapping(cls, data: Mapping[str, object]) -> "SweepConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidParameterError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)  # type: ignore[arg-type]

    @classmethod
    def from_json(cls, path: str | Path) -> "SweepConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidParameterError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidParameterError("config root must be a JSON object")
        return cls.from_mapping(data)

    def config_hash(self) -> str:
        """Hash of the physics-defining fields only.

        Output paths and worker count do not change the numbers, so they are
        excluded; two runs agree row-for-row exactly when the hashes match.
        """
        skip = {"channels_csv", "entropy_csv", "provenance_json", "workers"}
        payload = {
            f.name: getattr(self, f.name) for f in fields(self) if f.name not in skip
        }
        text = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def energy_grid(self) -> np.ndarray:
        return np.linspace(self.t0_min_mev, self.t0_max_mev, self.num_steps)


@dataclass
class SweepRow:
    """Outcome of one energy: either a record pair or an error code."""

    t0_mev: float
    status: str  # "ok" or an exception class name
    wall_s: float
    amplitudes: ChannelAmplitudes | None = None
    record: EntropyRecord | None = None
    detail: str = ""
    raw_lines: tuple[str | None, str | None] = (None, None)  # resumed CSV lines
    xi_hint: float | None = None  # xi parsed back from a resumed entropy line

    @property
    def xi(self) -> float | None:
        if self.record is not None:
            return self.record.xi
        return self.xi_hint


@dataclass
class SweepResult:
    config: SweepConfig
    rows: list[SweepRow]
    bound_energies: tuple[float, ...]
    degeneracy_groups: tuple[tuple[int, ...], ...]
    provenance: dict

    @property
    def num_failed(self) -> int:
        return sum(1 for r in self.rows if r.status != "ok")

    @property
    def failure_fraction(self) -> float:
        return self.num_failed / len(self.rows) if self.rows else 0.0


def _t0_key(t0: float) -> str:
    return _FMT.format(t0)


def build_sweep_model(config: SweepConfig):
    """Construct the scattering model a config describes (shared with the CLI)."""
    material = make_material(
        effective_mass_ratio=config.effective_mass_ratio,
        relative_permittivity=config.relative_permittivity,
        coulomb_cutoff_d_nm=config.coulomb_cutoff_d_nm,
    )
    grid = Grid1D.from_length(config.length_nm, config.spacing_nm)
    kind = "single" if config.system == "qd_2p" else "double"
    potential = build_potential(
        grid,
        kind=kind,
        well_depth_mev=config.well_depth_mev,
        well_width_nm=config.well_width_nm,
        barrier_nm=config.barrier_nm,
    )
    taper = None
    if config.taper_on_nm is not None:
        taper = InteractionTaper(config.taper_on_nm, config.taper_off_nm)
    if config.system == "qd_2p":
        return PairScatteringModel(
            potential,
            material,
            taper=taper,
            interaction_strength=config.interaction_strength,
            max_levels=config.max_levels,
        )
    kwargs = {} if config.max_levels is None else {"max_levels": config.max_levels}
    return TripleScatteringModel(
        potential,
        material,
        taper=taper,
        interaction_strength=config.interaction_strength,
        **kwargs,
    )


def _solve_one(model, config: SweepConfig, t0: float) -> SweepRow:
    """One energy end-to-end; never raises, failures become the row status."""
    start = time.perf_counter()
    basis = model.bound if config.system == "qd_2p" else model.pair
    try:
        solution = model.solve(
            t0,
            incident_channel=config.incident_channel,
            incident_side=config.incident_side,
            num_evanescent=config.num_evanescent,
        )
        amps = extract_amplitudes(solution)
        selected = post_select(amps, config.post_selection)
        record = entropy_record(selected, basis.degeneracy_groups)
        status = "ok"
        if amps.unitarity_defect > config.unitarity_tol:
            status = "UnitarityError"
        return SweepRow(
            t0_mev=t0,
            status=status,
            wall_s=time.perf_counter() - start,
            amplitudes=amps,
            record=record,
        )
    except Exception as exc:  # noqa: BLE001 - per-row isolation is the contract
        return SweepRow(
            t0_mev=t0,
            status=type(exc).__name__,
            wall_s=time.perf_counter() - start,
            detail=str(exc),
        )


# --- worker-pool plumbing ---------------------------------------------------

_WORKER_STATE: dict = {}


def _worker_init(config: SweepConfig) -> None:
    _WORKER_STATE["config"] = config
    _WORKER_STATE["model"] = build_sweep_model(config)


def _worker_solve(t0: float) -> SweepRow:
    return _solve_one(_WORKER_STATE["model"], _WORKER_STATE["config"], t0)


def _solve_batch(
    model,
    config: SweepConfig,
    energies: Sequence[float],
    pool: concurrent.futures.Executor | None,
    emit: Callable[[SweepRow], None],
) -> list[SweepRow]:
    if pool is None:
        rows = []
        for t0 in energies:
            row = _solve_one(model, config, t0)
            emit(row)
            rows.append(row)
        return rows
    rows = list(pool.map(_worker_solve, energies))
    for row in rows:
        emit(row)
    return rows


# --- CSV serialization ------------------------------------------------------


def channels_header(num_levels: int) -> str:
    """Channel-amplitude CSV schema.

    ``T0_meV, M`` then five columns per bound level n -- the longitudinal
    kinetic energy ``T_n_meV``, the probabilities ``R_n`` and ``T_n_prob``,
    and the moduli ``b_abs_n``, ``c_abs_n`` -- then ``status`` and the
    wall-clock seconds (the one column exempt from bit-reproducibility).
    """
    cols = ["T0_meV", "M"]
    for n in range(num_levels):
        cols += [f"T_{n}_meV", f"R_{n}", f"T_{n}_prob", f"b_abs_{n}", f"c_abs_{n}"]
    cols += ["status", "wall_s"]
    return ",".join(cols)


def entropy_header(num_levels: int) -> str:
    """Entropy CSV schema: ``T0_meV, xi, M`` then one eigenvalue per level.

    Rows always carry ``num_levels`` eigenvalue columns; entries beyond the
    reduced density matrix's support are written as zero so the column count
    never depends on how many channels happen to be open.
    """
    cols = ["T0_meV", "xi", "M"]
    cols += [f"lambda_{n}" for n in range(num_levels)]
    return ",".join(cols)


def _channels_line(row: SweepRow, num_levels: int) -> str:
    parts = [_t0_key(row.t0_mev)]
    amps = row.amplitudes
    if amps is None:
        parts.append("0")
        parts.extend(["nan"] * (5 * num_levels))
    else:
        parts.append(str(amps.num_open))
        for n in range(num_levels):
            ch = amps.channels[n]
            parts += [
                _FMT.format(ch.kinetic_mev),
                _FMT.format(amps.reflection[n]),
                _FMT.format(amps.transmission[n]),
                _FMT.format(abs(amps.b[n])),
                _FMT.format(abs(amps.c[n])),
            ]
    parts.append(row.status)
    parts.append(f"{row.wall_s:.3f}")
    return ",".join(parts)


def _entropy_line(row: SweepRow, num_levels: int) -> str | None:
    if row.record is None:
        return None
    rec = row.record
    lam = np.zeros(num_levels)
    take = min(num_levels, rec.eigenvalues.size)
    lam[:take] = rec.eigenvalues[:take]
    parts = [_t0_key(row.t0_mev), _FMT.format(rec.xi), str(rec.num_open)]
    parts += [_FMT.format(v) for v in lam]
    return ",".join(parts)


def _render_lines(row: SweepRow, num_levels: int) -> tuple[str, str | None]:
    raw_ch, raw_en = row.raw_lines
    if raw_ch is not None:
        return raw_ch, raw_en
    return _channels_line(row, num_levels), _entropy_line(row, num_levels)


def _load_resumed_rows(config: SweepConfig) -> dict[str, SweepRow]:
    """Rows already on disk from a matching earlier run, keyed by T0.

    The match requires the provenance sidecar to carry the same config hash;
    otherwise the stale files are ignored and overwritten.  Resumed rows keep
    their original CSV lines verbatim (including wall times).
    """
    ch_path = Path(config.channels_csv)
    prov_path = Path(config.provenance_json)
    if not ch_path.exists() or not prov_path.exists():
        return {}
    try:
        sidecar = json.loads(prov_path.read_text())
    except (OSError, json.JSONDecodeError):
        return {}
    if sidecar.get("config_hash") != config.config_hash():
        return {}
    entropy_by_key: dict[str, str] = {}
    en_path = Path(config.entropy_csv)
    if en_path.exists():
        for line in en_path.read_text().splitlines()[1:]:
            if line.strip():
                entropy_by_key[line.split(",", 1)[0]] = line
    out: dict[str, SweepRow] = {}
    for line in ch_path.read_text().splitlines()[1:]:
        if not line.strip():
            continue
        cells = line.split(",")
        key = cells[0]
        en_line = entropy_by_key.get(key)
        xi_hint = float(en_line.split(",")[1]) if en_line is not None else None
        out[key] = SweepRow(
            t0_mev=float(key),
            status=cells[-2],
            wall_s=float(cells[-1]),
            raw_lines=(line, en_line),
            xi_hint=xi_hint,
        )
    return out


def run_sweep(
    config: SweepConfig,
    *,
    progress: Callable[[SweepRow], None] | None = None,
) -> SweepResult:
    """Run (or resume) the sweep a config describes and write its outputs.

    Rows are appended to the channels CSV as each energy finishes, so an
    interrupted run loses at most the energy in flight; on completion both
    CSVs are rewritten sorted by T0.  With ``refine`` enabled, midpoints are
    inserted wherever adjacent entropies differ by more than
    ``refine_delta_xi`` until the gap budget (``refine_max_points``) runs out.
    """
    t_start = time.perf_counter()
    model = build_sweep_model(config)
    basis = model.bound if config.system == "qd_2p" else model.pair
    num_levels = basis.num_levels

    resumed = _load_resumed_rows(config)
    rows_by_key: dict[str, SweepRow] = dict(resumed)

    ch_path = Path(config.channels_csv)
    ch_path.parent.mkdir(parents=True, exist_ok=True)
    Path(config.entropy_csv).parent.mkdir(parents=True, exist_ok=True)
    Path(config.provenance_json).parent.mkdir(parents=True, exist_ok=True)

    stream = ch_path.open("a" if resumed else "w")
    if not resumed:
        stream.write(channels_header(num_levels) + "\n")

    def emit(row: SweepRow) -> None:
        rows_by_key[_t0_key(row.t0_mev)] = row
        stream.write(_channels_line(row, num_levels) + "\n")
        stream.flush()
        if progress is not None:
            progress(row)

    pool = None
    if config.workers > 1:
        pool = concurrent.futures.ProcessPoolExecutor(
            max_workers=config.workers,
            initializer=_worker_init,
            initargs=(config,),
        )
    try:
        todo = [t0 for t0 in config.energy_grid() if _t0_key(t0) not in rows_by_key]
        _solve_batch(model, config, todo, pool, emit)

        if config.refine:
            budget = config.refine_max_points
            while budget > 0:
                ordered = sorted(rows_by_key.values(), key=lambda r: r.t0_mev)
                midpoints: list[float] = []
                for left, right in zip(ordered, ordered[1:]):
                    if left.xi is None or right.xi is None:
                        continue
                    if abs(left.xi - right.xi) > config.refine_delta_xi:
                        mid = 0.5 * (left.t0_mev + right.t0_mev)
                        if _t0_key(mid) not in rows_by_key:
                            midpoints.append(mid)
                if not midpoints:
                    break
                midpoints = midpoints[:budget]
                budget -= len(midpoints)
                _solve_batch(model, config, midpoints, pool, emit)
    finally:
        stream.close()
        if pool is not None:
            pool.shutdown()

    ordered = sorted(rows_by_key.values(), key=lambda r: r.t0_mev)

    # final sorted rewrite: the deliverable files are strictly increasing in T0
    ch_lines = [channels_header(num_levels)]
    en_lines = [entropy_header(num_levels)]
    for row in ordered:
        ch, en = _render_lines(row, num_levels)
        ch_lines.append(ch)
        if en is not None:
            en_lines.append(en)
    ch_path.write_text("\n".join(ch_lines) + "\n")
    Path(config.entropy_csv).write_text("\n".join(en_lines) + "\n")

    num_failed = sum(1 for r in ordered if r.status != "ok")
    provenance = {
        "config": {f.name: getattr(config, f.name) for f in fields(config)},
        "config_hash": config.config_hash(),
        "package_version": __version__,
        "system": config.system,
        "grid": {
            "length_nm": config.length_nm,
            "spacing_nm": config.spacing_nm,
            "num_points": model.potential.grid.num_points,
        },
        "material": {
            "kinetic_prefactor_mev_nm2": model.material.kinetic_prefactor,
            "coulomb_prefactor_mev_nm": model.material.coulomb_prefactor,
            "coulomb_cutoff_d_nm": model.material.coulomb_cutoff_d_nm,
        },
        "bound_energies_mev": [float(e) for e in basis.energies],
        "degeneracy_groups": [list(g) for g in basis.degeneracy_groups],
        "num_rows": len(ordered),
        "num_failed": num_failed,
        "total_wall_s": round(time.perf_counter() - t_start, 3),
    }
    Path(config.provenance_json).write_text(
        json.dumps(provenance, indent=2, sort_keys=True) + "\n"
    )

    return SweepResult(
        config=config,
        rows=ordered,
        bound_energies=tuple(float(e) for e in basis.energies),
        degeneracy_groups=basis.degeneracy_groups,
        provenance=provenance,
    )


@dataclass(frozen=True)
class SpectrumReport:
    """Bound-level report: energies, spacings, groups, opening thresholds."""

    system: str
    energies_mev: tuple[float, ...]
    degeneracy_groups: tuple[tuple[int, ...], ...]
    thresholds_mev: tuple[float, ...]  # E_n - E_0 per level

    def format(self) -> str:
        if not self.energies_mev:
            return "no bound states"
        lines = [f"bound levels: {len(self.energies_mev)} ({self.system})"]
        for n, e in enumerate(self.energies_mev):
            gap = "" if n == 0 else f"  gap {e - self.energies_mev[n - 1]:10.6f}"
            lines.append(f"  level {n:2d}: {e:14.6f} meV{gap}")
        lines.append("degeneracy groups:")
        for group in self.degeneracy_groups:
            ener = [self.energies_mev[i] for i in group]
            split = max(ener) - min(ener)
            tag = f" (splitting {split:.6f} meV)" if len(group) > 1 else ""
            lines.append(f"  {tuple(group)}{tag}")
        lines.append("channel-opening thresholds (E_n - E_0):")
        for n, thr in enumerate(self.thresholds_mev):
            lines.append(f"  channel {n:2d}: {thr:12.6f} meV")
        return "\n".join(lines)


def report_spectrum(config: SweepConfig) -> SpectrumReport:
    """Solve only the bound problem a sweep would use and describe it."""
    from .bound import solve_bound_states_1d, solve_bound_states_2p

    material = make_material(
        effective_mass_ratio=config.effective_mass_ratio,
        relative_permittivity=config.relative_permittivity,
        coulomb_cutoff_d_nm=config.coulomb_cutoff_d_nm,
    )
    grid = Grid1D.from_length(config.length_nm, config.spacing_nm)
    kind = "single" if config.system == "qd_2p" else "double"
    potential = build_potential(
        grid,
        kind=kind,
        well_depth_mev=config.well_depth_mev,
        well_width_nm=config.well_width_nm,
        barrier_nm=config.barrier_nm,
    )
    if config.system == "qd_2p":
        basis = solve_bound_states_1d(potential, material, max_levels=config.max_levels)
    else:
        taper = None
        if config.taper_on_nm is not None:
            taper = InteractionTaper(config.taper_on_nm, config.taper_off_nm)
        kwargs = {} if config.max_levels is None else {"max_levels": config.max_levels}
        basis = solve_bound_states_2p(
            potential,
            material,
            potential.dot_window(60.0),
            taper=taper,
            strength=config.interaction_strength,
            **kwargs,
        )
    energies = tuple(float(e) for e in basis.energies)
    if not energies:
        return SpectrumReport(config.system, (), (), ())
    thresholds = tuple(e - energies[0] for e in energies)
    return SpectrumReport(
        config.system,
        energies,
        tuple(tuple(g) for g in basis.degeneracy_groups),
        thresholds,
    )
