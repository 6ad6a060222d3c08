"""Material constants, 1D grids, confinement potentials and the pair interaction.

All quantities are expressed in meV and nm.  The two derived scales that set
the physics are

* ``kinetic_prefactor``  = hbar^2 / (2 m*)        [meV nm^2]
* ``coulomb_prefactor``  = e^2 / (4 pi eps)       [meV nm]

both obtained from CODATA constants divided by the dimensionless material
ratios, so a :class:`MaterialParams` instance is the single source of truth
for every solver module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.constants as sc

from .errors import GeometryError, InvalidParameterError

# --- unit conversion helpers -------------------------------------------------
_J_PER_MEV = 1.0e-3 * sc.e  # J per meV

# hbar^2/(2 m0) in meV nm^2 (divide by the relative effective mass to use).
FREE_KINETIC_SCALE = sc.hbar**2 / (2.0 * sc.m_e) / _J_PER_MEV * 1e18
# e^2/(4 pi eps0) in meV nm (divide by the relative permittivity to use).
VACUUM_COULOMB_SCALE = sc.e**2 / (4.0 * math.pi * sc.epsilon_0) / _J_PER_MEV * 1e9


@dataclass(frozen=True)
class MaterialParams:
    """Host-material parameters of the heterostructure.

    Parameters
    ----------
    effective_mass_ratio : float
        Electron effective mass in units of the bare electron mass.
    relative_permittivity : float
        Static dielectric constant of the host.
    coulomb_cutoff_d_nm : float
        Transverse-confinement cutoff of the effective 1D interaction; keeps
        the kernel finite at zero longitudinal separation.
    """

    effective_mass_ratio: float = 0.067
    relative_permittivity: float = 12.9
    coulomb_cutoff_d_nm: float = 5.0

    def __post_init__(self) -> None:
        for name in ("effective_mass_ratio", "relative_permittivity", "coulomb_cutoff_d_nm"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise InvalidParameterError(f"{name} must be a positive finite number, got {value!r}")

    @property
    def kinetic_prefactor(self) -> float:
        """hbar^2/(2 m*) in meV nm^2."""
        return FREE_KINETIC_SCALE / self.effective_mass_ratio

    @property
    def coulomb_prefactor(self) -> float:
        """e^2/(4 pi eps) in meV nm."""
        return VACUUM_COULOMB_SCALE / self.relative_permittivity


def make_material(
    effective_mass_ratio: float = 0.067,
    relative_permittivity: float = 12.9,
    coulomb_cutoff_d_nm: float = 5.0,
) -> MaterialParams:
    """Build a :class:`MaterialParams`, validating every entry."""
    return MaterialParams(effective_mass_ratio, relative_permittivity, coulomb_cutoff_d_nm)


# --- grid ---------------------------------------------------------------------


@dataclass(frozen=True)
class Grid1D:
    """Uniform 1D grid spanning ``[0, length_nm]`` inclusive of both edges."""

    length_nm: float
    spacing_nm: float
    num_points: int

    def __post_init__(self) -> None:
        if self.length_nm <= 0 or self.spacing_nm <= 0:
            raise InvalidParameterError("grid length and spacing must be positive")
        steps = self.length_nm / self.spacing_nm
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise InvalidParameterError(
                f"grid length {self.length_nm} nm is not an integer number of spacings {self.spacing_nm} nm"
            )
        if self.num_points != int(round(steps)) + 1:
            raise InvalidParameterError(
                f"num_points={self.num_points} inconsistent with length/spacing (+1 expected)"
            )

    @classmethod
    def from_length(cls, length_nm: float, spacing_nm: float) -> "Grid1D":
        if spacing_nm <= 0:
            raise InvalidParameterError("grid spacing must be positive")
        steps = length_nm / spacing_nm
        if abs(steps - round(steps)) > 1e-9 * max(1.0, abs(steps)):
            raise InvalidParameterError(
                f"length {length_nm} nm must be an integer multiple of spacing {spacing_nm} nm"
            )
        return cls(length_nm, spacing_nm, int(round(steps)) + 1)

    @property
    def points(self) -> np.ndarray:
        """Grid coordinates in nm, shape ``(num_points,)``."""
        return np.arange(self.num_points) * self.spacing_nm

    def index_near(self, x_nm: float) -> int:
        """Index of the grid point closest to ``x_nm``."""
        return int(round(x_nm / self.spacing_nm))


# --- potential profiles ---------------------------------------------------------


@dataclass(frozen=True)
class WellSpec:
    """One rectangular well: ``-depth_mev`` for ``|x - center| <= width/2``."""

    center_nm: float
    width_nm: float
    depth_mev: float


@dataclass
class PotentialProfile:
    """Piecewise-constant confinement potential sampled on a grid.

    ``samples`` holds the potential value at every grid point: strictly
    negative inside wells, exactly zero in the leads.
    """

    grid: Grid1D
    samples: np.ndarray
    wells: tuple[WellSpec, ...]
    kind: str = "single"

    def well_span_nm(self) -> tuple[float, float]:
        """Outermost well edges ``(lo, hi)`` in nm."""
        lo = min(w.center_nm - 0.5 * w.width_nm for w in self.wells)
        hi = max(w.center_nm + 0.5 * w.width_nm for w in self.wells)
        return lo, hi

    def dot_window(self, margin_nm: float) -> tuple[int, int]:
        """Inclusive index range covering the wells plus a decay margin.

        Raises :class:`GeometryError` if the requested window does not fit
        inside the computational domain.
        """
        if margin_nm < 0:
            raise InvalidParameterError("window margin must be non-negative")
        lo_nm, hi_nm = self.well_span_nm()
        h = self.grid.spacing_nm
        i_lo = int(math.floor((lo_nm - margin_nm) / h))
        i_hi = int(math.ceil((hi_nm + margin_nm) / h))
        if i_lo < 0 or i_hi > self.grid.num_points - 1:
            raise GeometryError(
                f"dot window [{i_lo}, {i_hi}] exceeds the domain [0, {self.grid.num_points - 1}]"
            )
        return i_lo, i_hi


def build_potential(
    grid: Grid1D,
    kind: str = "single",
    well_depth_mev: float = 110.0,
    well_width_nm: float = 30.0,
    barrier_nm: float = 20.0,
    center_nm: float | None = None,
) -> PotentialProfile:
    """Sample a single- or double-well profile on ``grid``.

    ``single`` places one well of the given depth/width at the domain centre;
    ``double`` places two identical wells whose facing edges are separated by
    ``barrier_nm``.  Each sample is the cell average of the sharp profile over
    ``[x - h/2, x + h/2]``, so a well edge sitting exactly on a grid point
    contributes half depth there.  Cell averaging keeps the effective well
    geometry accurate to O(h^2); naive point sampling would widen the well by
    one spacing and degrade every downstream convergence rate to O(h).

    Raises
    ------
    GeometryError
        If wells overlap, protrude from the domain, or leave a lead segment
        shorter than three well widths on either side.
    """
    if well_depth_mev < 0:
        raise InvalidParameterError("well depth must be >= 0 (depth of the well in meV)")
    if well_width_nm <= 0:
        raise InvalidParameterError("well width must be positive")
    centre = 0.5 * grid.length_nm if center_nm is None else float(center_nm)

    if kind == "single":
        wells = (WellSpec(centre, well_width_nm, well_depth_mev),)
    elif kind == "double":
        if barrier_nm <= 0:
            raise GeometryError("double-dot barrier must be positive; wells would overlap")
        offset = 0.5 * (well_width_nm + barrier_nm)
        wells = (
            WellSpec(centre - offset, well_width_nm, well_depth_mev),
            WellSpec(centre + offset, well_width_nm, well_depth_mev),
        )
    else:
        raise InvalidParameterError(f"unknown potential kind {kind!r} (expected 'single' or 'double')")

    lo_nm = min(w.center_nm - 0.5 * w.width_nm for w in wells)
    hi_nm = max(w.center_nm + 0.5 * w.width_nm for w in wells)
    if lo_nm < 0 or hi_nm > grid.length_nm:
        raise GeometryError("wells protrude from the computational domain")
    lead_required = 3.0 * well_width_nm
    if lo_nm < lead_required or grid.length_nm - hi_nm < lead_required:
        raise GeometryError(
            f"lead segments must be at least three well widths ({lead_required} nm); "
            f"got {lo_nm:.1f} nm left and {grid.length_nm - hi_nm:.1f} nm right"
        )

    x = grid.points
    h = grid.spacing_nm
    samples = np.zeros(grid.num_points)
    for w in wells:
        w_lo, w_hi = w.center_nm - 0.5 * w.width_nm, w.center_nm + 0.5 * w.width_nm
        overlap = np.minimum(x + 0.5 * h, w_hi) - np.maximum(x - 0.5 * h, w_lo)
        samples -= w.depth_mev * np.clip(overlap / h, 0.0, 1.0)
    return PotentialProfile(grid=grid, samples=samples, wells=wells, kind=kind)


# --- electron-electron interaction ----------------------------------------------


@dataclass(frozen=True)
class InteractionTaper:
    """Smooth long-range switch-off of the pair interaction.

    The kernel is multiplied by 1 for separations below ``on_nm``, by 0 above
    ``off_nm`` and by a C1 cosine ramp in between.  Switching the tail off
    before the leads keeps the lead dispersion exactly flat, which the
    open-boundary matching requires; the separations that matter physically
    (both particles near the dot) are far below ``on_nm``.
    """

    on_nm: float = 100.0
    off_nm: float = 150.0

    def __post_init__(self) -> None:
        if not (0 < self.on_nm < self.off_nm):
            raise InvalidParameterError("taper must satisfy 0 < on_nm < off_nm")

    def factor(self, separation_nm: np.ndarray | float) -> np.ndarray | float:
        r = np.abs(separation_nm)
        ramp = 0.5 * (1.0 + np.cos(math.pi * (r - self.on_nm) / (self.off_nm - self.on_nm)))
        return np.where(r <= self.on_nm, 1.0, np.where(r >= self.off_nm, 0.0, ramp))


def pair_interaction(
    separation_nm: np.ndarray | float,
    material: MaterialParams,
    taper: InteractionTaper | None = None,
    strength: float = 1.0,
) -> np.ndarray | float:
    """Effective 1D electron-electron repulsion at a given separation (meV).

    ``strength`` linearly scales the interaction; 0 switches it off entirely.
    """
    if strength < 0:
        raise InvalidParameterError("interaction strength scale must be non-negative")
    if strength == 0.0:
        return np.zeros_like(np.asarray(separation_nm, dtype=float))
    d = material.coulomb_cutoff_d_nm
    bare = material.coulomb_prefactor / np.sqrt(np.asarray(separation_nm, dtype=float) ** 2 + d * d)
    if taper is not None:
        bare = bare * taper.factor(separation_nm)
    return strength * bare


def coulomb_kernel_matrix(
    material: MaterialParams,
    x_a: np.ndarray,
    x_b: np.ndarray,
    taper: InteractionTaper | None = None,
    strength: float = 1.0,
) -> np.ndarray:
    """Pair interaction evaluated on the outer product of two coordinate sets.

    Returns ``K[i, j] = V(x_a[i] - x_b[j])`` in meV, shape ``(len(x_a), len(x_b))``.
    """
    sep = np.subtract.outer(np.asarray(x_a, float), np.asarray(x_b, float))
    return np.asarray(pair_interaction(sep, material, taper=taper, strength=strength))


# --- configuration parsing -------------------------------------------------------

_MATERIAL_KEYS = {"effective_mass_ratio", "relative_permittivity", "coulomb_cutoff_d_nm"}
_GEOMETRY_KEYS = {"kind", "L_nm", "h_nm", "well_depth_meV", "well_width_nm", "barrier_nm", "center_nm"}
_INTERACTION_KEYS = {"taper_on_nm", "taper_off_nm", "strength"}


def parse_material(cfg: dict | None) -> MaterialParams:
    """Material section of a JSON config; unknown keys are rejected."""
    cfg = dict(cfg or {})
    unknown = set(cfg) - _MATERIAL_KEYS
    if unknown:
        raise InvalidParameterError(f"unknown material config keys: {sorted(unknown)}")
    return make_material(
        effective_mass_ratio=cfg.get("effective_mass_ratio", 0.067),
        relative_permittivity=cfg.get("relative_permittivity", 12.9),
        coulomb_cutoff_d_nm=cfg.get("coulomb_cutoff_d_nm", 5.0),
    )


def parse_geometry(cfg: dict | None) -> tuple[Grid1D, PotentialProfile]:
    """Geometry section of a JSON config -> (grid, potential)."""
    cfg = dict(cfg or {})
    unknown = set(cfg) - _GEOMETRY_KEYS
    if unknown:
        raise InvalidParameterError(f"unknown geometry config keys: {sorted(unknown)}")
    grid = Grid1D.from_length(cfg.get("L_nm", 600.0), cfg.get("h_nm", 1.0))
    profile = build_potential(
        grid,
        kind=cfg.get("kind", "single"),
        well_depth_mev=cfg.get("well_depth_meV", 110.0),
        well_width_nm=cfg.get("well_width_nm", 30.0),
        barrier_nm=cfg.get("barrier_nm", 20.0),
        center_nm=cfg.get("center_nm"),
    )
    return grid, profile


def parse_interaction(cfg: dict | None) -> tuple[InteractionTaper | None, float]:
    """Interaction section of a JSON config -> (taper, strength scale)."""
    cfg = dict(cfg or {})
    unknown = set(cfg) - _INTERACTION_KEYS
    if unknown:
        raise InvalidParameterError(f"unknown interaction config keys: {sorted(unknown)}")
    strength = float(cfg.get("strength", 1.0))
    on = cfg.get("taper_on_nm", 100.0)
    off = cfg.get("taper_off_nm", 150.0)
    taper = None if on is None or off is None else InteractionTaper(on, off)
    return taper, strength
