"""Channel bookkeeping: lattice dispersion, amplitude extraction, flux algebra.

A *channel* pairs a bound level of the target (energy ``E_n``) with the
longitudinal motion of the scattered electron (kinetic energy
``T_n = E - E_n``).  Channels with ``T_n > 0`` carry travelling waves whose
wavenumber solves the discrete three-point dispersion; channels with
``T_n < 0`` are evanescent.  All wavenumbers here are lattice-consistent so
that flux conservation holds to solver precision rather than O(h**2).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import ContaminatedLeadError, InvalidParameterError, PostSelectionError
from .model import MaterialParams

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, typing only
    from .scattering import ScatteringSolution


@dataclass(frozen=True)
class Channel:
    """One outgoing configuration (bound level, longitudinal energy)."""

    index: int
    bound_energy_mev: float
    kinetic_mev: float
    wavenumber_per_nm: float  # k_n for open channels, decay rate kappa_n for closed
    is_open: bool
    group_velocity: float  # (2*kp/h)*sin(k*h); 0 for closed channels


def open_channels(
    total_energy_mev: float,
    bound_energies_mev: Sequence[float],
    material: MaterialParams,
    spacing_nm: float,
) -> tuple[Channel, ...]:
    """Classify every bound level into an open or closed channel at energy E.

    Open channels get the travelling-wave wavenumber from the lattice
    dispersion T = (2*kp/h^2)*(1 - cos(k*h)); closed ones get the decay rate
    from the evanescent branch T = -(2*kp/h^2)*(cosh(kappa*h) - 1).
    """
    if spacing_nm <= 0.0:
        raise InvalidParameterError("grid spacing must be positive")
    energies = np.asarray(bound_energies_mev, dtype=float)
    if energies.ndim != 1:
        raise InvalidParameterError("bound energies must be a flat sequence")
    kp = material.kinetic_prefactor
    h = spacing_nm
    band_top = 4.0 * kp / h**2
    out: list[Channel] = []
    for idx, eb in enumerate(energies):
        t_n = total_energy_mev - eb
        if t_n > 0.0:
            if t_n >= band_top:
                raise InvalidParameterError(
                    f"channel {idx}: longitudinal energy {t_n:.3f} meV is at or above "
                    f"the lattice band top {band_top:.3f} meV; refine the grid"
                )
            k = np.arccos(1.0 - t_n * h**2 / (2.0 * kp)) / h
            v = (2.0 * kp / h) * np.sin(k * h)
            out.append(Channel(idx, float(eb), t_n, float(k), True, float(v)))
        else:
            kappa = np.arccosh(1.0 + (-t_n) * h**2 / (2.0 * kp)) / h
            out.append(Channel(idx, float(eb), t_n, float(kappa), False, 0.0))
    return tuple(out)


def boundary_factors(channels: Sequence[Channel], spacing_nm: float) -> np.ndarray:
    """Per-channel one-step transfer factor of the outgoing lead solution.

    exp(+i*k*h) for open channels (outward travelling), exp(-kappa*h) for
    closed ones (decaying into the lead).  These are the eigenvalues the
    open-boundary self-energy is built from.
    """
    lam = np.empty(len(channels), dtype=complex)
    for i, ch in enumerate(channels):
        if ch.is_open:
            lam[i] = np.exp(1j * ch.wavenumber_per_nm * spacing_nm)
        else:
            lam[i] = np.exp(-ch.wavenumber_per_nm * spacing_nm)
    return lam


@dataclass(frozen=True)
class ChannelAmplitudes:
    """Flux-normalized reflection/transmission amplitudes per channel.

    ``b`` and ``c`` are stored pre-weighted by sqrt(v_n / v_inc) so that
    ``R_n = |b_n|**2`` and ``T_n = |c_n|**2`` are directly the outgoing
    probabilities.  Closed channels are kept (with zero amplitude) so the
    arrays stay index-aligned with the bound basis.
    """

    channels: tuple[Channel, ...]
    b: np.ndarray  # complex, reflected side
    c: np.ndarray  # complex, transmitted side
    reflection: np.ndarray  # R_n = |b_n|^2
    transmission: np.ndarray  # T_n = |c_n|^2
    unitarity_defect: float
    incident_channel: int
    incident_kinetic_mev: float
    post_selection: str = "both"
    warnings: tuple[str, ...] = field(default=())

    @property
    def num_open(self) -> int:
        return sum(1 for ch in self.channels if ch.is_open)

    def total_outgoing(self) -> float:
        return float(np.sum(self.reflection) + np.sum(self.transmission))


def _plane_wave_fit(
    u: np.ndarray, x: np.ndarray, k: float
) -> tuple[complex, complex, float]:
    """Least-squares split of lead samples into e^{+ikx} and e^{-ikx} parts.

    Returns (forward coefficient, backward coefficient, fit residual norm).
    """
    basis = np.column_stack((np.exp(1j * k * x), np.exp(-1j * k * x)))
    coef, _, _, _ = np.linalg.lstsq(basis, u, rcond=None)
    res = float(np.linalg.norm(basis @ coef - u))
    return complex(coef[0]), complex(coef[1]), res


def extract_amplitudes(
    solution: "ScatteringSolution",
    *,
    plane_offset: int = 0,
    fit_tol: float = 1e-6,
) -> ChannelAmplitudes:
    """Project a scattering solution onto its channels and fit plane waves.

    Three lead cross-sections per side (two for the 2-point fit, the third as
    an over-determination check) are projected onto every bound-basis
    function; the forward/backward split of each open channel gives the raw
    incoming/outgoing amplitudes, which are then normalized by the fitted
    incident amplitude and flux-weighted.

    Raises ContaminatedLeadError when the fit residual, the incoming content
    of any non-incident channel, or the off-basis remainder at the sampled
    planes exceeds ``fit_tol`` relative to the incident amplitude.
    """
    if plane_offset < 0:
        raise InvalidParameterError("plane_offset must be >= 0")
    psi = solution.psi
    n_planes = psi.shape[0]
    if n_planes < 2 * (plane_offset + 3):
        raise InvalidParameterError("solution too short for the requested extraction planes")

    rows_left = np.arange(plane_offset, plane_offset + 3)
    rows_right = np.arange(n_planes - 1 - plane_offset, n_planes - 4 - plane_offset, -1)

    profiles = solution.channel_profiles  # (ncross, n_levels)
    weight = solution.cross_weight
    channels = solution.channels
    n_lvl = len(channels)
    inc = solution.incident_channel
    side = solution.incident_side

    u_left = psi[rows_left, :] @ profiles * weight  # (3, n_levels)
    u_right = psi[rows_right, :] @ profiles * weight
    x_left = solution.x1_coords[rows_left]
    x_right = solution.x1_coords[rows_right]

    # raw fits: per open channel and side, forward (+k) and backward (-k) parts
    fwd = {"left": np.zeros(n_lvl, complex), "right": np.zeros(n_lvl, complex)}
    bwd = {"left": np.zeros(n_lvl, complex), "right": np.zeros(n_lvl, complex)}
    fit_res = 0.0
    for n, ch in enumerate(channels):
        if not ch.is_open:
            continue
        k = ch.wavenumber_per_nm
        fwd["left"][n], bwd["left"][n], r1 = _plane_wave_fit(u_left[:, n], x_left, k)
        fwd["right"][n], bwd["right"][n], r2 = _plane_wave_fit(u_right[:, n], x_right, k)
        fit_res = max(fit_res, r1, r2)

    if side == "left":
        a_inc = fwd["left"][inc]
        b_raw, c_raw = bwd["left"], fwd["right"]
        stray = np.concatenate((np.delete(fwd["left"], inc), bwd["right"]))
    else:
        a_inc = bwd["right"][inc]
        b_raw, c_raw = fwd["right"], bwd["left"]
        stray = np.concatenate((np.delete(bwd["right"], inc), fwd["left"]))

    scale = abs(a_inc)
    if scale == 0.0:
        raise ContaminatedLeadError("no incident amplitude found in the incident channel")
    if fit_res / scale > fit_tol:
        raise ContaminatedLeadError(
            f"plane-wave fit residual {fit_res / scale:.2e} exceeds {fit_tol:.1e}; "
            "move the extraction planes deeper into the lead or extend it"
        )
    stray_max = float(np.max(np.abs(stray))) if stray.size else 0.0
    if stray_max / scale > fit_tol:
        raise ContaminatedLeadError(
            f"incoming-wave contamination {stray_max / scale:.2e} exceeds {fit_tol:.1e} "
            "in channels that should carry only outgoing flux"
        )
    # off-basis remainder: the sampled planes must be spanned by the channel set
    for rows, u in ((rows_left, u_left), (rows_right, u_right)):
        remainder = psi[rows, :] - u @ profiles.T
        rem = float(np.linalg.norm(remainder, axis=1).max()) * np.sqrt(weight)
        if rem / scale > fit_tol:
            raise ContaminatedLeadError(
                f"off-channel content {rem / scale:.2e} at the extraction planes "
                f"exceeds {fit_tol:.1e}; raise the evanescent count or the lead length"
            )

    v_inc = channels[inc].group_velocity
    b = np.zeros(n_lvl, complex)
    c = np.zeros(n_lvl, complex)
    for n, ch in enumerate(channels):
        if not ch.is_open:
            continue
        w = np.sqrt(ch.group_velocity / v_inc)
        b[n] = b_raw[n] / a_inc * w
        c[n] = c_raw[n] / a_inc * w
    refl = np.abs(b) ** 2
    trans = np.abs(c) ** 2
    defect = abs(1.0 - float(np.sum(refl) + np.sum(trans)))
    return ChannelAmplitudes(
        channels=channels,
        b=b,
        c=c,
        reflection=refl,
        transmission=trans,
        unitarity_defect=defect,
        incident_channel=inc,
        incident_kinetic_mev=channels[inc].kinetic_mev,
    )


def post_select(amplitudes: ChannelAmplitudes, side: str) -> ChannelAmplitudes:
    """Condition the outgoing state on one detection side.

    ``both`` returns the input unchanged; ``transmitted``/``reflected`` zero
    the discarded side and renormalize the kept probabilities to sum to 1.
    """
    if side == "both":
        return amplitudes
    if side not in ("transmitted", "reflected"):
        raise InvalidParameterError(f"unknown post-selection side: {side!r}")
    if side == "transmitted":
        kept_b, kept_c = np.zeros_like(amplitudes.b), amplitudes.c
    else:
        kept_b, kept_c = amplitudes.b, np.zeros_like(amplitudes.c)
    total = float(np.sum(np.abs(kept_b) ** 2) + np.sum(np.abs(kept_c) ** 2))
    if total < 1e-12:
        raise PostSelectionError(
            f"probability on the {side} side is {total:.2e}; post-selection undefined"
        )
    norm = 1.0 / np.sqrt(total)
    b, c = kept_b * norm, kept_c * norm
    return replace(
        amplitudes,
        b=b,
        c=c,
        reflection=np.abs(b) ** 2,
        transmission=np.abs(c) ** 2,
        unitarity_defect=0.0,
        post_selection=side,
    )
