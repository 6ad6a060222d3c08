import numpy as np
import pytest
from scipy.optimize import brentq

from dotscatter.bound import (
    BoundStateSet,
    group_degenerate,
    hamiltonian_1d,
    solve_bound_states_1d,
    solve_bound_states_2p,
)
from dotscatter.errors import InvalidParameterError, WindowTooSmallError
from dotscatter.model import Grid1D, InteractionTaper, PotentialProfile, build_potential, make_material

MAT = make_material()


def square_well_levels_continuum(depth, width, kinetic_prefactor):
    """Independent reference: transcendental finite-square-well equations."""
    a = width / 2.0
    u0 = np.sqrt(depth * a**2 / kinetic_prefactor)
    levels = []
    n = 0
    while n * np.pi / 2 < u0:
        lo, hi = n * np.pi / 2 + 1e-9, min((n + 1) * np.pi / 2 - 1e-9, u0 - 1e-12)
        if lo >= hi:
            break
        f = (lambda u: u * np.tan(u) - np.sqrt(u0**2 - u**2)) if n % 2 == 0 else (
            lambda u: -u / np.tan(u) - np.sqrt(u0**2 - u**2))
        try:
            u = brentq(f, lo, hi, xtol=1e-13)
            levels.append(kinetic_prefactor * u**2 / a**2 - depth)
        except ValueError:
            pass
        n += 1
    return np.array(levels)


@pytest.fixture(scope="module")
def qd_h1():
    grid = Grid1D.from_length(600.0, 1.0)
    prof = build_potential(grid, "single")
    return solve_bound_states_1d(prof, MAT)


def test_single_dot_level_count_and_order(qd_h1):
    assert qd_h1.num_levels == 5
    assert np.all(qd_h1.energies < 0.0)
    assert np.all(np.diff(qd_h1.energies) > 0.0)


def test_single_dot_frozen_energies(qd_h1):
    # frozen from this lattice (h = 1 nm, cell-averaged edges)
    expected = [-105.28107, -91.28098, -68.53455, -38.28984, -4.86974]
    assert qd_h1.energies == pytest.approx(expected, abs=2e-5)
    assert qd_h1.energies[1] - qd_h1.energies[0] == pytest.approx(14.000089, abs=1e-5)


def test_lattice_converges_to_transcendental_reference():
    cont = square_well_levels_continuum(110.0, 30.0, MAT.kinetic_prefactor)
    grid = Grid1D.from_length(600.0, 0.25)
    prof = build_potential(grid, "single")
    bs = solve_bound_states_1d(prof, MAT)
    assert bs.num_levels == cont.size == 5
    assert np.max(np.abs(bs.energies[:4] - cont[:4])) < 0.05
    assert abs(bs.energies[4] - cont[4]) < 0.3


def test_eigenvalue_richardson_ratio_is_second_order():
    e = {}
    for h in (1.0, 0.5, 0.25):
        grid = Grid1D.from_length(600.0, h)
        bs = solve_bound_states_1d(build_potential(grid, "single"), MAT, max_levels=1)
        e[h] = bs.energies[0]
    ratio = (e[1.0] - e[0.5]) / (e[0.5] - e[0.25])
    assert 3.4 < ratio < 4.6


def test_infinite_well_limit_spacing():
    # depth >> kinetic scale: spacing approaches the particle-in-a-box formula
    grid = Grid1D.from_length(600.0, 0.25)
    prof = build_potential(grid, "single", well_depth_mev=5.0e6, well_width_nm=30.0)
    bs = solve_bound_states_1d(prof, MAT, max_levels=3)
    box = np.pi**2 * MAT.kinetic_prefactor / 30.0**2
    assert bs.energies[1] - bs.energies[0] == pytest.approx(3.0 * box, rel=5e-3)
    assert bs.energies[2] - bs.energies[1] == pytest.approx(5.0 * box, rel=5e-3)


def test_zero_potential_has_no_bound_states():
    grid = Grid1D.from_length(600.0, 1.0)
    prof = PotentialProfile(grid=grid, samples=np.zeros(grid.num_points), wells=(), kind="single")
    bs = solve_bound_states_1d(prof, MAT)
    assert bs.num_levels == 0


def test_normalisation_orthogonality_residual(qd_h1):
    h = qd_h1.spacing_nm
    V = qd_h1.wavefunctions
    gram = V.T @ V * h
    assert np.abs(gram - np.eye(qd_h1.num_levels)).max() < 1e-8
    grid = Grid1D.from_length(600.0, 1.0)
    prof = build_potential(grid, "single")
    H, _ = hamiltonian_1d(prof, MAT)
    for n in range(qd_h1.num_levels):
        phi = V[:, n]
        res = np.linalg.norm(H @ phi - qd_h1.energies[n] * phi) / np.linalg.norm(phi)
        assert res < 1e-8


def test_wavefunctions_decay_at_domain_edges(qd_h1):
    for n in range(qd_h1.num_levels):
        assert qd_h1.edge_amplitude(n) < 1e-8


def test_energies_invariant_under_longer_leads(qd_h1):
    grid = Grid1D.from_length(720.0, 1.0)
    bs = solve_bound_states_1d(build_potential(grid, "single"), MAT)
    assert np.max(np.abs(bs.energies - qd_h1.energies)) < 1e-3


def test_window_restricted_solve_matches_full(qd_h1):
    grid = Grid1D.from_length(600.0, 1.0)
    prof = build_potential(grid, "single")
    win = prof.dot_window(80.0)
    bs = solve_bound_states_1d(prof, MAT, max_levels=4, window=win)
    assert np.max(np.abs(bs.energies - qd_h1.energies[:4])) < 1e-6


def test_window_too_small_raises():
    grid = Grid1D.from_length(600.0, 1.0)
    prof = build_potential(grid, "single")
    win = prof.dot_window(80.0)
    # the shallowest level has not decayed 80 nm past the well edge
    with pytest.raises(WindowTooSmallError):
        solve_bound_states_1d(prof, MAT, window=win)


def test_shift_invert_matches_dense(qd_h1):
    grid = Grid1D.from_length(600.0, 1.0)
    prof = build_potential(grid, "single")
    bs = solve_bound_states_1d(prof, MAT, max_levels=5, method="shift-invert")
    assert bs.energies == pytest.approx(qd_h1.energies, abs=1e-9)


def test_degeneracy_grouping_double_dot():
    grid = Grid1D.from_length(600.0, 1.0)
    prof = build_potential(grid, "double")
    bs = solve_bound_states_1d(prof, MAT)
    assert bs.num_levels == 10
    # tunnel doublets: three deep pairs resolve below the 0.05 meV tolerance
    assert bs.degeneracy_groups[:3] == ((0, 1), (2, 3), (4, 5))
    wide = solve_bound_states_1d(prof, MAT, delta_deg_mev=0.2)
    assert (6, 7) in wide.degeneracy_groups


def test_group_degenerate_helper():
    e = np.array([0.0, 0.004, 0.011, 1.0])
    assert group_degenerate(e, 0.01) == ((0, 1, 2), (3,))
    assert group_degenerate(e, 1e-6) == ((0,), (1,), (2,), (3,))
    with pytest.raises(InvalidParameterError):
        group_degenerate(e, -1.0)


# --- two-particle levels -------------------------------------------------


@pytest.fixture(scope="module")
def dqd_setup():
    grid = Grid1D.from_length(600.0, 2.0)
    prof = build_potential(grid, "double")
    win = prof.dot_window(60.0)
    return grid, prof, win


def test_pair_levels_coulomb_off_are_sums(dqd_setup):
    """With the interaction off the pair spectrum is exactly the sum spectrum."""
    _, prof, win = dqd_setup
    ps = solve_bound_states_2p(prof, MAT, win, strength=0.0, max_levels=16, decay_tol=1e-6)
    one = solve_bound_states_1d(prof, MAT, window=win, max_levels=6, decay_tol=1e-6)
    sums = np.sort([a + b for a in one.energies for b in one.energies])
    sums = sums[sums < ps.continuum_edge_mev][: ps.num_levels]
    assert np.max(np.abs(ps.energies - sums)) < 1e-9
    assert ps.continuum_edge_mev == pytest.approx(one.energies[0], abs=1e-9)


def test_pair_levels_coulomb_on(dqd_setup):
    _, prof, win = dqd_setup
    off = solve_bound_states_2p(prof, MAT, win, strength=0.0, max_levels=4, decay_tol=1e-6)
    on = solve_bound_states_2p(prof, MAT, win, taper=InteractionTaper(), max_levels=16, decay_tol=1e-6)
    # repulsion raises the ground level; ~2.2 meV for charges one well apart
    assert on.energies[0] > off.energies[0]
    assert on.energies[0] - off.energies[0] == pytest.approx(2.28, abs=0.3)
    # interacting levels pair up into exactly degenerate parity doublets
    assert all(len(g) == 2 for g in on.degeneracy_groups)
    assert np.max(np.abs(np.abs(on.exchange_parity) - 1.0)) < 1e-6
    # ground state: one electron per well
    G0 = on.level_grid(0)
    half = (on.points < 300.0).sum()
    cross = (np.abs(G0[:half, half:]) ** 2).sum() + (np.abs(G0[half:, :half]) ** 2).sum()
    assert cross * prof.grid.spacing_nm**2 > 0.99


def test_pair_levels_normalised_orthogonal(dqd_setup):
    _, prof, win = dqd_setup
    ps = solve_bound_states_2p(prof, MAT, win, taper=InteractionTaper(), max_levels=12, decay_tol=1e-6)
    h = prof.grid.spacing_nm
    gram = ps.wavefunctions.T @ ps.wavefunctions * h * h
    assert np.abs(gram - np.eye(ps.num_levels)).max() < 1e-8
    assert np.all(np.diff(ps.energies) > -1e-12)
    assert np.all(ps.energies < ps.continuum_edge_mev)


def test_pair_dense_path_matches_sum_oracle():
    # small single-dot window exercises the dense fallback (w^2 <= 1200)
    grid = Grid1D.from_length(600.0, 2.0)
    prof = build_potential(grid, "single")
    win = prof.dot_window(16.0)
    assert (win[1] - win[0] + 1) ** 2 <= 1200
    ps = solve_bound_states_2p(prof, MAT, win, strength=0.0, max_levels=6, decay_tol=1.0)
    one = solve_bound_states_1d(prof, MAT, window=win, decay_tol=1.0)
    sums = np.sort([a + b for a in one.energies for b in one.energies])
    sums = sums[sums < ps.continuum_edge_mev][: ps.num_levels]
    assert np.max(np.abs(ps.energies - sums)) < 1e-9


def test_pair_window_too_small_raises(dqd_setup):
    _, prof, _ = dqd_setup
    tight = prof.dot_window(10.0)
    with pytest.raises(WindowTooSmallError):
        solve_bound_states_2p(prof, MAT, tight, taper=InteractionTaper(), max_levels=8)


def test_pair_on_tail_drop_records(dqd_setup):
    _, prof, _ = dqd_setup
    tight = prof.dot_window(30.0)
    ps = solve_bound_states_2p(prof, MAT, tight, taper=InteractionTaper(), max_levels=16,
                               decay_tol=1e-8, on_tail="drop")
    assert ps.dropped_energies.size > 0
    for lvl in range(ps.num_levels):
        assert ps.edge_amplitude(lvl) <= 1e-8
    with pytest.raises(InvalidParameterError):
        solve_bound_states_2p(prof, MAT, tight, on_tail="maybe")
