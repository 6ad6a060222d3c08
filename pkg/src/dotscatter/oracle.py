"""Independent reference solvers used for cross-checks.

Nothing here shares assembly code with the product-grid solver: the
coupled-channel system below is built plane by plane as an explicit block
tridiagonal matrix, and the single-particle path is its one-channel special
case.  Only the extraction/flux algebra (channels module) is shared, so an
assembly bug in either path cannot cancel against itself.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bound import BoundStateSet
from .channels import ChannelAmplitudes, boundary_factors, extract_amplitudes, open_channels
from .errors import InvalidParameterError, SolverConvergenceError
from .model import InteractionTaper, MaterialParams, PotentialProfile, coulomb_kernel_matrix
from .scattering import ScatteringSolution, _injection_vector, _nudged_energy

_DENSE_CAP = 4000


def analytic_transmission_1d(
    well_depth_mev: float,
    well_width_nm: float,
    kinetic_mev: float,
    material: MaterialParams,
) -> float:
    """Continuum closed-form transmission probability of a square well."""
    if kinetic_mev <= 0.0:
        raise InvalidParameterError("kinetic energy must be positive")
    if well_depth_mev < 0.0 or well_width_nm <= 0.0:
        raise InvalidParameterError("well depth must be >= 0 and width > 0")
    if well_depth_mev == 0.0:
        return 1.0
    kp = material.kinetic_prefactor
    q = np.sqrt((kinetic_mev + well_depth_mev) / kp)
    t_inv = 1.0 + well_depth_mev**2 * np.sin(q * well_width_nm) ** 2 / (
        4.0 * kinetic_mev * (kinetic_mev + well_depth_mev)
    )
    return float(1.0 / t_inv)


def dense_eigensolve_small(operator: np.ndarray | sp.spmatrix) -> tuple[np.ndarray, np.ndarray]:
    """Full dense Hermitian eigendecomposition for validating sparse paths."""
    if sp.issparse(operator):
        operator = operator.toarray()
    operator = np.asarray(operator)
    if operator.shape[0] != operator.shape[1]:
        raise InvalidParameterError("operator must be square")
    if operator.shape[0] > _DENSE_CAP:
        raise InvalidParameterError(
            f"dense reference solve capped at dimension {_DENSE_CAP}, got {operator.shape[0]}"
        )
    return la.eigh(operator)


@dataclass(frozen=True)
class CoupledChannelSystem:
    """The scattering problem projected onto a truncated bound basis.

    ``coupling[p, m, n]`` is the interaction matrix element between channels
    m and n at scattering coordinate plane p; it decays to zero in the leads.
    """

    bound_energies: np.ndarray  # (n_ch,)
    coupling: np.ndarray  # (n_planes, n_ch, n_ch)
    v1: np.ndarray  # (n_planes,) scattered-coordinate potential
    x1_coords: np.ndarray
    spacing_nm: float
    material: MaterialParams

    @property
    def num_channels(self) -> int:
        return int(self.bound_energies.size)


def build_coupled_channel_system(
    potential: PotentialProfile,
    material: MaterialParams,
    basis: BoundStateSet,
    *,
    taper: InteractionTaper | None = None,
    strength: float = 1.0,
    num_channels: int | None = None,
) -> CoupledChannelSystem:
    """Project the pair interaction onto the bound basis, plane by plane."""
    n_ch = basis.num_levels if num_channels is None else num_channels
    if not 1 <= n_ch <= basis.num_levels:
        raise InvalidParameterError(f"num_channels must be in [1, {basis.num_levels}]")
    x1 = potential.grid.points[1:-1]
    phi = basis.wavefunctions[:, :n_ch]
    kernel = coulomb_kernel_matrix(material, x1, basis.points, taper=taper, strength=strength)
    h = potential.grid.spacing_nm
    coupling = np.einsum("pj,jm,jn->pmn", kernel, phi, phi, optimize=True) * h
    return CoupledChannelSystem(
        bound_energies=np.asarray(basis.energies[:n_ch], dtype=float),
        coupling=coupling,
        v1=potential.samples[1:-1].astype(float),
        x1_coords=x1,
        spacing_nm=h,
        material=material,
    )


def coupled_channel_solve(
    system: CoupledChannelSystem,
    incident_kinetic_mev: float,
    *,
    incident_channel: int = 0,
    incident_side: str = "left",
) -> ChannelAmplitudes:
    """Solve the coupled 1D channel equations with open boundaries.

    Same lattice dispersion and extraction as the product-grid solver, but
    the state space is the truncated channel basis: the cross-section is the
    channel index itself, so the channel "profiles" form an identity matrix.
    """
    if incident_kinetic_mev <= 0.0:
        raise InvalidParameterError("incident kinetic energy must be positive")
    n_ch = system.num_channels
    if not 0 <= incident_channel < n_ch:
        raise InvalidParameterError("incident_channel outside the basis")
    e_tot, nudge = _nudged_energy(
        float(system.bound_energies[incident_channel]) + incident_kinetic_mev,
        system.bound_energies,
    )
    h = system.spacing_nm
    chans = open_channels(e_tot, system.bound_energies, system.material, h)
    lam = boundary_factors(chans, h)
    t = system.material.kinetic_prefactor / h**2
    p = system.x1_coords.size

    eps = np.diag(system.bound_energies)
    blocks: list[list] = [[None] * p for _ in range(p)]
    for i in range(p):
        d = (2.0 * t + system.v1[i] - e_tot) * np.eye(n_ch) + eps + system.coupling[i]
        d = d.astype(complex)
        if i == 0 or i == p - 1:
            d -= t * np.diag(lam)  # channel basis diagonalizes the lead
        blocks[i][i] = d
        if i + 1 < p:
            blocks[i][i + 1] = -t * np.eye(n_ch)
            blocks[i + 1][i] = -t * np.eye(n_ch)
    a = sp.bmat(blocks, format="csc", dtype=complex)

    k_inc = chans[incident_channel].wavenumber_per_nm
    source = _injection_vector(lam[incident_channel], k_inc, h)
    rhs = np.zeros(p * n_ch, dtype=complex)
    inj = 0 if incident_side == "left" else p - 1
    rhs[inj * n_ch + incident_channel] = t * source

    u = spla.spsolve(a, rhs)
    resid = float(np.linalg.norm(a @ u - rhs) / np.linalg.norm(rhs))
    if resid > 1e-8:
        raise SolverConvergenceError(
            f"coupled-channel solve residual {resid:.2e}", residual=resid
        )
    psi = u.reshape(p, n_ch)

    face_source = (1.0 - lam[incident_channel] ** 2) * np.eye(n_ch)[:, incident_channel]
    face_left = lam * psi[0]
    face_right = lam * psi[-1]
    if incident_side == "left":
        face_left = face_left + face_source
    else:
        face_right = face_right + face_source

    solution = ScatteringSolution(
        psi=psi,
        x1_coords=system.x1_coords,
        spacing_nm=h,
        cross_weight=1.0,
        channel_profiles=np.eye(n_ch),
        channels=chans,
        retained=tuple(range(n_ch)),
        total_energy_mev=e_tot,
        incident_channel=incident_channel,
        incident_side=incident_side,
        nudge_mev=nudge,
        solver_residual=resid,
        interior_residual=0.0,
        face_left=face_left,
        face_right=face_right,
        kind="coupled-channel",
    )
    return extract_amplitudes(solution)


def coupled_channel_with_truncation_check(
    potential: PotentialProfile,
    material: MaterialParams,
    basis: BoundStateSet,
    incident_kinetic_mev: float,
    *,
    taper: InteractionTaper | None = None,
    strength: float = 1.0,
    num_channels: int | None = None,
    drift_tol: float = 1e-3,
    **solve_kwargs,
) -> ChannelAmplitudes:
    """Solve at the requested basis size and flag drift against basis growth.

    When two more levels are available, the solve is repeated with them; any
    channel probability shifting by more than ``drift_tol`` attaches a
    truncation warning to the result.
    """
    n_ch = basis.num_levels if num_channels is None else num_channels
    system = build_coupled_channel_system(
        potential, material, basis, taper=taper, strength=strength, num_channels=n_ch
    )
    result = coupled_channel_solve(system, incident_kinetic_mev, **solve_kwargs)
    grown = min(n_ch + 2, basis.num_levels)
    if grown == n_ch:
        return result
    bigger_sys = build_coupled_channel_system(
        potential, material, basis, taper=taper, strength=strength, num_channels=grown
    )
    bigger = coupled_channel_solve(bigger_sys, incident_kinetic_mev, **solve_kwargs)
    drift = max(
        float(np.max(np.abs(bigger.reflection[:n_ch] - result.reflection))),
        float(np.max(np.abs(bigger.transmission[:n_ch] - result.transmission))),
    )
    if drift > drift_tol:
        from dataclasses import replace

        result = replace(
            result,
            warnings=result.warnings
            + (f"truncation: probabilities shift by {drift:.2e} from {n_ch} to {grown} channels",),
        )
    return result


def lattice_transmission_1d(
    potential: PotentialProfile,
    material: MaterialParams,
    kinetic_mev: float,
    *,
    incident_side: str = "left",
) -> ChannelAmplitudes:
    """Single-particle transmission over the 1D profile on the same lattice.

    One free channel with zero binding energy; used as the separable-limit
    reference for the product-grid solver.
    """
    x1 = potential.grid.points[1:-1]
    system = CoupledChannelSystem(
        bound_energies=np.zeros(1),
        coupling=np.zeros((x1.size, 1, 1)),
        v1=potential.samples[1:-1].astype(float),
        x1_coords=x1,
        spacing_nm=potential.grid.spacing_nm,
        material=material,
    )
    return coupled_channel_solve(system, kinetic_mev, incident_side=incident_side)
