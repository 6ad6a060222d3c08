"""Reduced density matrix of the bound subsystem and its von Neumann entropy.

Tracing the outgoing state over the scattered electron leaves the dot in a
mixed state.  Channels at distinct energies ride on orthogonal outgoing
waves, so they contribute only diagonal weight ``|b_n|^2 + |c_n|^2``.
Degenerate levels share one outgoing kinetic energy — their plane waves are
identical, not orthogonal markers — so cross terms ``b_m conj(b_n) +
c_m conj(c_n)`` survive inside each degeneracy group and the matrix is
block-diagonal with one Hermitian block per group.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channels import ChannelAmplitudes
from .errors import NumericalConsistencyError, UnitarityError

_CLIP_FLOOR = -1e-10


@dataclass(frozen=True)
class ReducedDensityMatrix:
    """Block-diagonal dot-subsystem density matrix, unit trace after normalization."""

    blocks: tuple[np.ndarray, ...]
    groups: tuple[tuple[int, ...], ...]
    eigenvalues: np.ndarray  # all blocks pooled, descending
    raw_trace: float  # total outgoing probability before normalization


@dataclass(frozen=True)
class EntropyRecord:
    """Entanglement entropy at one incident energy, with its probability snapshot."""

    incident_kinetic_mev: float
    xi: float  # nats
    num_open: int
    eigenvalues: np.ndarray
    reflection: np.ndarray
    transmission: np.ndarray
    post_selection: str = "both"


def reduce_density_matrix(
    amplitudes: ChannelAmplitudes,
    degeneracy_groups: Sequence[Sequence[int]] | None = None,
    *,
    trace_tol: float = 1e-6,
) -> ReducedDensityMatrix:
    """Build the block-diagonal reduced density matrix from flux-normalized amplitudes.

    Levels absent from ``degeneracy_groups`` default to singleton groups (the
    non-degenerate single-dot case).  The pre-normalization trace must equal
    1 within ``trace_tol`` or the upstream solve was not flux-conserving.
    """
    n = len(amplitudes.channels)
    if degeneracy_groups is None:
        degeneracy_groups = [(i,) for i in range(n)]
    seen = sorted(i for g in degeneracy_groups for i in g)
    if seen != list(range(n)):
        raise NumericalConsistencyError(
            "degeneracy groups must partition the channel indices exactly"
        )
    raw_trace = amplitudes.total_outgoing()
    if amplitudes.post_selection == "both" and abs(raw_trace - 1.0) > trace_tol:
        raise UnitarityError(
            f"outgoing probability {raw_trace:.9f} deviates from 1 by more than "
            f"{trace_tol:.1e}; refusing to normalize a non-unitary solve"
        )

    b, c = amplitudes.b, amplitudes.c
    blocks = []
    eigs = []
    for group in degeneracy_groups:
        idx = np.asarray(group, dtype=int)
        bg, cg = b[idx], c[idx]
        block = (np.outer(bg, bg.conj()) + np.outer(cg, cg.conj())) / raw_trace
        blocks.append(block)
        if len(idx) == 1:
            eigs.append(block.real.ravel())
        else:
            eigs.append(np.linalg.eigvalsh(block))
    lam = np.concatenate(eigs)
    bad = lam < _CLIP_FLOOR
    if np.any(bad):
        raise NumericalConsistencyError(
            f"density-matrix eigenvalue {lam[bad].min():.3e} below the clip floor "
            f"{_CLIP_FLOOR:.0e}"
        )
    if np.any(lam > 1.0 + 1e-12):
        raise NumericalConsistencyError(
            f"density-matrix eigenvalue {lam.max():.12f} exceeds 1"
        )
    lam = np.clip(lam, 0.0, 1.0)
    order = np.argsort(lam)[::-1]
    return ReducedDensityMatrix(
        blocks=tuple(blocks),
        groups=tuple(tuple(g) for g in degeneracy_groups),
        eigenvalues=lam[order],
        raw_trace=raw_trace,
    )


def von_neumann_entropy(rdm: ReducedDensityMatrix) -> float:
    """xi = -sum(lambda ln lambda) in nats, with 0*ln(0) := 0."""
    lam = rdm.eigenvalues
    positive = lam[lam > 0.0]
    return float(-np.sum(positive * np.log(positive)))


def entropy_record(
    amplitudes: ChannelAmplitudes,
    degeneracy_groups: Sequence[Sequence[int]] | None = None,
    *,
    trace_tol: float = 1e-6,
) -> EntropyRecord:
    """Entropy plus the per-channel probability snapshot for one solve."""
    rdm = reduce_density_matrix(amplitudes, degeneracy_groups, trace_tol=trace_tol)
    xi = von_neumann_entropy(rdm)
    num_open = amplitudes.num_open
    # the state lives on at most num_open outgoing waves, so xi <= ln(num_open)
    bound = math.log(max(num_open, 1))
    if xi > bound + 1e-9:
        raise NumericalConsistencyError(
            f"entropy {xi:.9f} exceeds the support bound ln({num_open}) = {bound:.9f}"
        )
    lam = rdm.eigenvalues[: max(num_open, 1)]
    return EntropyRecord(
        incident_kinetic_mev=amplitudes.incident_kinetic_mev,
        xi=xi,
        num_open=num_open,
        eigenvalues=lam,
        reflection=amplitudes.reflection.copy(),
        transmission=amplitudes.transmission.copy(),
        post_selection=amplitudes.post_selection,
    )
