"""Bound states of the confinement potential.

Two solvers live here:

* :func:`solve_bound_states_1d` — single-particle levels of a 1D profile,
  used both as the scattering channel basis and for spectrum reports.
* :func:`solve_bound_states_2p` — interacting two-particle levels of the
  double dot on ``window x window``, the channel basis of the three-particle
  scattering problem.

Both discretise with the same 3-point kinetic stencil as the scattering
assembly, so the returned eigenvectors are *exact* lattice eigenfunctions of
the cross-section Hamiltonian seen by the open-boundary solver — this is what
makes the boundary matching exact and probability conservation hold to solver
precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidParameterError, WindowTooSmallError
from .model import Grid1D, InteractionTaper, MaterialParams, PotentialProfile, coulomb_kernel_matrix

# Deterministic start vector seed for the iterative eigensolver (ARPACK must
# not start from an exchange-symmetric vector, or it never finds the
# antisymmetric states).
_EIGS_SEED = 0x5EED


def kinetic_stencil_1d(num_points: int, kinetic_prefactor: float, spacing_nm: float) -> sp.csr_matrix:
    """3-point finite-difference kinetic operator with Dirichlet ghost edges."""
    t = kinetic_prefactor / spacing_nm**2
    main = np.full(num_points, 2.0 * t)
    off = np.full(num_points - 1, -t)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def hamiltonian_1d(
    potential: PotentialProfile,
    material: MaterialParams,
    window: tuple[int, int] | None = None,
) -> tuple[sp.csr_matrix, np.ndarray]:
    """Single-particle lattice Hamiltonian, optionally window-restricted.

    Returns ``(H, v)`` where ``v`` is the potential sample vector actually
    used (window slice of the profile).
    """
    if window is None:
        lo, hi = 0, potential.grid.num_points - 1
    else:
        lo, hi = window
        if not (0 <= lo < hi <= potential.grid.num_points - 1):
            raise InvalidParameterError(f"window {window} outside grid")
    v = potential.samples[lo : hi + 1]
    n = v.size
    H = kinetic_stencil_1d(n, material.kinetic_prefactor, potential.grid.spacing_nm)
    return (H + sp.diags(v)).tocsr(), v


@dataclass
class BoundStateSet:
    """Single-particle bound levels on (a window of) a grid.

    ``wavefunctions[:, n]`` is level ``n`` sampled on ``points``, normalised
    so that ``sum(|phi|^2) * h == 1``.
    """

    energies: np.ndarray
    wavefunctions: np.ndarray
    grid: Grid1D
    window: tuple[int, int]
    degeneracy_groups: tuple[tuple[int, ...], ...]
    delta_deg_mev: float
    dropped_energies: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def num_levels(self) -> int:
        return int(self.energies.size)

    @property
    def points(self) -> np.ndarray:
        lo, hi = self.window
        return self.grid.points[lo : hi + 1]

    @property
    def spacing_nm(self) -> float:
        return self.grid.spacing_nm

    def edge_amplitude(self, level: int) -> float:
        """Largest relative wavefunction magnitude at the window edges."""
        phi = self.wavefunctions[:, level]
        return float(max(abs(phi[0]), abs(phi[-1])) / np.max(np.abs(phi)))


def group_degenerate(energies: np.ndarray, delta_deg_mev: float) -> tuple[tuple[int, ...], ...]:
    """Cluster sorted energies into near-degenerate groups.

    Consecutive levels closer than ``delta_deg_mev`` belong to one group.
    """
    if delta_deg_mev < 0:
        raise InvalidParameterError("degeneracy tolerance must be non-negative")
    groups: list[list[int]] = []
    for n, e in enumerate(energies):
        if groups and e - energies[groups[-1][-1]] < delta_deg_mev:
            groups[-1].append(n)
        else:
            groups.append([n])
    return tuple(tuple(g) for g in groups)


def _fix_sign(vecs: np.ndarray) -> np.ndarray:
    """Deterministic global sign: largest-magnitude component positive."""
    for col in range(vecs.shape[1]):
        idx = int(np.argmax(np.abs(vecs[:, col])))
        if vecs[idx, col] < 0:
            vecs[:, col] = -vecs[:, col]
    return vecs


def solve_bound_states_1d(
    potential: PotentialProfile,
    material: MaterialParams,
    max_levels: int | None = None,
    window: tuple[int, int] | None = None,
    delta_deg_mev: float = 0.05,
    decay_tol: float = 1e-8,
    method: str = "auto",
) -> BoundStateSet:
    """All single-particle levels with E < 0, lowest first.

    Parameters
    ----------
    max_levels : int, optional
        Keep at most this many levels (lowest first).  ``None`` keeps all.
    window : (int, int), optional
        Inclusive index range to restrict the solve to; ``None`` uses the
        whole grid.  The eigenproblem sees Dirichlet ghost points just
        outside the range.
    decay_tol : float
        Every returned wavefunction must have decayed below this relative
        magnitude at the solve-domain edges, else
        :class:`WindowTooSmallError` is raised.
    method : {"auto", "dense", "shift-invert"}
        ``auto`` solves the tridiagonal problem densely up to 4096 points and
        switches to shift-invert iteration above.
    """
    H, v = hamiltonian_1d(potential, material, window)
    n = v.size
    h = potential.grid.spacing_nm
    t = material.kinetic_prefactor / h**2

    if method not in ("auto", "dense", "shift-invert"):
        raise InvalidParameterError(f"unknown eigensolver method {method!r}")
    use_dense = method == "dense" or (method == "auto" and n <= 4096)

    if use_dense:
        diag = 2.0 * t + v
        offdiag = np.full(n - 1, -t)
        energies, vecs = la.eigh_tridiagonal(diag, offdiag, select="v", select_range=(-np.inf, 0.0))
    else:
        k = min((max_levels or 16) + 4, n - 2)
        sigma = float(v.min()) - 5.0
        rng = np.random.default_rng(_EIGS_SEED)
        energies, vecs = spla.eigsh(H.tocsc(), k=k, sigma=sigma, which="LM", v0=rng.standard_normal(n))
        order = np.argsort(energies)
        energies, vecs = energies[order], vecs[:, order]
        keep = energies < 0.0
        energies, vecs = energies[keep], vecs[:, keep]

    if max_levels is not None:
        energies, vecs = energies[:max_levels], vecs[:, :max_levels]

    vecs = _fix_sign(vecs / np.sqrt(h))  # sum |phi|^2 h = 1
    win = window if window is not None else (0, potential.grid.num_points - 1)
    result = BoundStateSet(
        energies=energies,
        wavefunctions=vecs,
        grid=potential.grid,
        window=win,
        degeneracy_groups=group_degenerate(energies, delta_deg_mev),
        delta_deg_mev=delta_deg_mev,
    )
    for lvl in range(result.num_levels):
        tail = result.edge_amplitude(lvl)
        if tail > decay_tol:
            raise WindowTooSmallError(
                f"level {lvl} (E = {energies[lvl]:.4f} meV) has relative edge amplitude "
                f"{tail:.2e} > {decay_tol:.1e}; enlarge the solve window or the domain"
            )
    return result


# --- two-particle bound states ---------------------------------------------------


@dataclass
class TwoParticleBoundSet:
    """Interacting two-particle levels on the square dot window.

    ``wavefunctions[:, n]`` is the flattened ``(w, w)`` pair wavefunction of
    level ``n`` (row-major over the two internal coordinates), normalised so
    ``sum(|Gamma|^2) h^2 == 1``.
    """

    energies: np.ndarray
    wavefunctions: np.ndarray
    grid: Grid1D
    window: tuple[int, int]
    degeneracy_groups: tuple[tuple[int, ...], ...]
    delta_deg_mev: float
    exchange_parity: np.ndarray
    continuum_edge_mev: float
    dropped_energies: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def num_levels(self) -> int:
        return int(self.energies.size)

    @property
    def window_size(self) -> int:
        lo, hi = self.window
        return hi - lo + 1

    @property
    def points(self) -> np.ndarray:
        lo, hi = self.window
        return self.grid.points[lo : hi + 1]

    def level_grid(self, level: int) -> np.ndarray:
        """Level ``n`` reshaped to ``(w, w)``."""
        w = self.window_size
        return self.wavefunctions[:, level].reshape(w, w)

    def edge_amplitude(self, level: int) -> float:
        g = np.abs(self.level_grid(level))
        frame = max(g[0].max(), g[-1].max(), g[:, 0].max(), g[:, -1].max())
        return float(frame / g.max())


def _exchange_purify(vecs: np.ndarray, energies: np.ndarray, w: int, tol_mev: float = 1e-8) -> np.ndarray:
    """Rotate numerically degenerate clusters into exchange-pure combinations.

    The pair Hamiltonian commutes with coordinate exchange, so non-degenerate
    eigenvectors come out with definite parity on their own.  Only inside a
    cluster that the eigensolver cannot resolve (spread below ``tol_mev``) is
    the returned basis an arbitrary mixture; diagonalising the exchange
    operator there restores parity without perturbing eigen-residuals beyond
    the cluster width.  Clusters split more widely must not be rotated — that
    would mix eigenvectors of resolvably different energy.
    """
    for g in group_degenerate(energies, tol_mev):
        if len(g) < 2:
            continue
        cols = list(g)
        block = vecs[:, cols]
        swapped = block.reshape(w, w, -1).transpose(1, 0, 2).reshape(w * w, -1)
        overlap = block.T @ swapped  # exchange operator in the cluster basis
        overlap = 0.5 * (overlap + overlap.T)
        _, rot = la.eigh(overlap)
        vecs[:, cols] = block @ rot
    return vecs


def exchange_parities(vecs: np.ndarray, w: int) -> np.ndarray:
    """<Gamma | swap | Gamma> for each column of a flattened (w, w) basis."""
    swapped = vecs.reshape(w, w, -1).transpose(1, 0, 2).reshape(w * w, -1)
    return np.einsum("ij,ij->j", vecs, swapped) / np.einsum("ij,ij->j", vecs, vecs)


def pair_bound_hamiltonian(
    potential: PotentialProfile,
    material: MaterialParams,
    window: tuple[int, int],
    taper: InteractionTaper | None = None,
    strength: float = 1.0,
) -> sp.csr_matrix:
    """Two-bound-electron Hamiltonian on window^2: H(x2) + H(x3) + pair term."""
    H1, v1 = hamiltonian_1d(potential, material, window)
    w = v1.size
    x_win = potential.grid.points[window[0] : window[1] + 1]
    pair = coulomb_kernel_matrix(material, x_win, x_win, taper=taper, strength=strength)
    eye = sp.identity(w, format="csr")
    return (sp.kron(H1, eye) + sp.kron(eye, H1) + sp.diags(pair.ravel())).tocsr()


def solve_bound_states_2p(
    potential: PotentialProfile,
    material: MaterialParams,
    window: tuple[int, int],
    taper: InteractionTaper | None = None,
    strength: float = 1.0,
    max_levels: int = 24,
    delta_deg_mev: float = 0.05,
    decay_tol: float = 1e-8,
    on_tail: str = "error",
) -> TwoParticleBoundSet:
    """Two-particle levels below the one-bound-one-free continuum edge.

    The pair Hamiltonian (kinetic stencils plus the dot potential for each
    coordinate plus the pair interaction) is restricted to ``window^2`` and
    solved by shift-invert iteration from below the spectrum.  Only levels
    with total energy below the single-particle ground energy — i.e. states
    that cannot shed one electron into the leads — are returned.

    ``on_tail`` selects what to do with a level whose wavefunction has not
    decayed at the window frame: ``"error"`` raises
    :class:`WindowTooSmallError`, ``"drop"`` removes it and records its
    energy in ``dropped_energies`` for downstream basis-sufficiency checks.
    """
    if on_tail not in ("error", "drop"):
        raise InvalidParameterError(f"on_tail must be 'error' or 'drop', got {on_tail!r}")
    _, v1 = hamiltonian_1d(potential, material, window)
    w = v1.size
    h = potential.grid.spacing_nm
    t = material.kinetic_prefactor / h**2

    # continuum edge: single-particle ground level on the same window grid
    edge = float(la.eigh_tridiagonal(2.0 * t + v1, np.full(w - 1, -t),
                                     select="i", select_range=(0, 0))[0][0])

    H2 = pair_bound_hamiltonian(potential, material, window, taper=taper, strength=strength)

    m = w * w
    k = min(max_levels + 8, m - 2)
    sigma = 2.0 * float(v1.min()) - 10.0  # strictly below the pair spectrum
    if m <= 1200:
        energies, vecs = la.eigh(H2.toarray())
        energies, vecs = energies[:k], vecs[:, :k]
    else:
        rng = np.random.default_rng(_EIGS_SEED)
        energies, vecs = spla.eigsh(H2.tocsc(), k=k, sigma=sigma, which="LM",
                                    v0=rng.standard_normal(m))
        order = np.argsort(energies)
        energies, vecs = energies[order], vecs[:, order]

    below = energies < edge
    energies, vecs = energies[below], vecs[:, below]
    if energies.size == 0:
        raise InvalidParameterError("no two-particle levels below the continuum edge")
    energies, vecs = energies[:max_levels], vecs[:, :max_levels]

    groups = group_degenerate(energies, delta_deg_mev)
    vecs = _exchange_purify(np.ascontiguousarray(vecs), energies, w)
    vecs = _fix_sign(vecs / h)  # sum |Gamma|^2 h^2 = 1

    result = TwoParticleBoundSet(
        energies=energies,
        wavefunctions=vecs,
        grid=potential.grid,
        window=window,
        degeneracy_groups=groups,
        delta_deg_mev=delta_deg_mev,
        exchange_parity=exchange_parities(vecs, w),
        continuum_edge_mev=edge,
    )

    bad = [lvl for lvl in range(result.num_levels) if result.edge_amplitude(lvl) > decay_tol]
    if bad and on_tail == "error":
        lvl = bad[0]
        raise WindowTooSmallError(
            f"two-particle level {lvl} (eps = {energies[lvl]:.4f} meV) has relative window-frame "
            f"amplitude {result.edge_amplitude(lvl):.2e} > {decay_tol:.1e}; enlarge the window"
        )
    if bad:
        keep = np.setdiff1d(np.arange(result.num_levels), bad)
        result.dropped_energies = energies[bad]
        result.energies = energies[keep]
        result.wavefunctions = vecs[:, keep]
        result.degeneracy_groups = group_degenerate(result.energies, delta_deg_mev)
        result.exchange_parity = result.exchange_parity[keep]
    return result
