"""Tests for ray pooling, binarization, threshold optimization and thinning."""

import itertools

import numpy as np
import pytest

from voxmvs.core.exceptions import InvalidCandidatesError, NoViewsError
from voxmvs.stereo.binarize import (
    SurfaceCube,
    binarize_cube,
    optimize_thresholds,
    psi,
    ray_votes,
    thin,
)
from voxmvs.stereo.fusion import FusedCube
from voxmvs.stereo.geometry import CameraView, Cube, build_lattice

EPS = 1e-6


def _axis_view(view_id: int, axis: str, shift: float = 0.2) -> CameraView:
    """
    Near-orthographic 16x16 view whose pixel rays run along one world axis.

    Voxel (i, j, k) of a unit-voxel cube at the origin lands on pixel
    (i+1, j+1) for axis "z" and (j+1, k+1) for axis "x".
    """
    if axis == "z":
        proj = [[1.0, 0.0, 0.0, shift], [0.0, 1.0, 0.0, shift], [0.0, 0.0, EPS, 1.0]]
    else:
        proj = [[0.0, 1.0, 0.0, shift], [0.0, 0.0, 1.0, shift], [EPS, 0.0, 0.0, 1.0]]
    image = np.zeros((16, 16, 3), dtype=np.uint8)
    return CameraView(id=view_id, image=image, proj=np.array(proj))


def _cube(s: int) -> Cube:
    return Cube(index=(0, 0, 0), origin=(0.0, 0.0, 0.0), voxel_size=1.0, s=s)


def _fused(p, cube_index=(0, 0, 0), votes=None) -> FusedCube:
    p = np.asarray(p, dtype=np.float64)
    fused = FusedCube(cube_index=cube_index, p=p, valid=np.ones(p.shape, dtype=bool))
    fused.votes = votes
    return fused


def _surface(occ) -> SurfaceCube:
    return SurfaceCube(cube_index=(0, 0, 0), occ=np.asarray(occ, dtype=bool), tau_used=0.5)


def _winners_along(p: np.ndarray, axis: int) -> np.ndarray:
    """Brute-force ray winners: argmax of p along an axis, ties to the smallest index."""
    winners = np.zeros(p.shape, dtype=bool)
    for idx in np.ndindex(*p.shape):
        ray = [tuple(idx[:axis]) + (n,) + tuple(idx[axis + 1 :]) for n in range(p.shape[axis])]
        best = max(ray, key=lambda v: (p[v], -v[axis]))
        winners[best] = True
    return winners


def test_ray_votes_monotone_rays(rng):
    """Test that one view votes for exactly one voxel per ray."""
    p = np.sort(rng.uniform(size=(4, 4, 4)), axis=2)
    fused = _fused(p)

    votes = ray_votes(fused, [_axis_view(0, "z")], _cube(4))

    assert fused.votes is votes
    assert np.all(votes.sum(axis=2) == 1.0)
    assert np.all(votes[:, :, 3] == 1.0)


def test_ray_votes_uniform_field_tie_rule():
    """Test that ties go to the lexicographically first voxel of each ray."""
    votes = ray_votes(_fused(np.full((3, 3, 3), 0.5)), [_axis_view(0, "z")], _cube(3))
    assert np.all(votes[:, :, 0] == 1.0)
    assert not votes[:, :, 1:].any()


def test_ray_votes_two_orthogonal_views(rng):
    """Test vote fractions against brute-force bucketing of two orthogonal views."""
    p = rng.integers(0, 3, size=(3, 3, 3)) / 2.0
    views = [_axis_view(0, "z"), _axis_view(1, "x")]

    votes = ray_votes(_fused(p), views, _cube(3))

    expected = (_winners_along(p, 2).astype(float) + _winners_along(p, 0).astype(float)) / 2.0
    np.testing.assert_array_equal(votes, expected)
    assert set(np.unique(votes)) <= {0.0, 0.5, 1.0}


def test_ray_votes_ignores_views_missing_the_cube(rng):
    """Test that views seeing no voxel do not dilute the vote fraction."""
    p = rng.uniform(size=(3, 3, 3))
    seen = ray_votes(_fused(p), [_axis_view(0, "z")], _cube(3))
    blind = _axis_view(1, "z", shift=100.0)
    with_blind = ray_votes(_fused(p), [_axis_view(0, "z"), blind], _cube(3))
    np.testing.assert_array_equal(with_blind, seen)


def test_ray_votes_no_views():
    """Test that ray pooling needs a view."""
    with pytest.raises(NoViewsError):
        ray_votes(_fused(np.zeros((2, 2, 2))), [], _cube(2))


def test_binarize_high_threshold_is_empty(rng):
    """Test that tau above every probability gives an empty surface."""
    fused = _fused(rng.uniform(0.0, 0.9, size=(4, 4, 4)))
    surf = binarize_cube(fused, np.ones((4, 4, 4)), 0.99, 0.8)
    assert surf.occupied == 0
    assert surf.tau_used == 0.99


def test_binarize_vacuous_vote_rule(rng):
    """Test gamma = 0 and tau = 0 reduces to p > 0."""
    p = rng.uniform(size=(4, 4, 4))
    p[p < 0.3] = 0.0
    surf = binarize_cube(_fused(p), np.zeros((4, 4, 4)), 0.0, 0.0)
    np.testing.assert_array_equal(surf.occ, p > 0)


def test_binarize_eighty_percent_rule():
    """Test that with 5 views, 4 votes pass gamma = 0.8 and 3 votes do not."""
    p = np.full((2, 1, 1), 0.9)
    votes = np.array([4 / 5, 3 / 5]).reshape(2, 1, 1)
    surf = binarize_cube(_fused(p), votes, 0.7, 0.8)
    assert surf.occ[0, 0, 0]
    assert not surf.occ[1, 0, 0]


def test_binarize_monotone_in_tau(rng):
    """Test that raising tau never adds surface voxels."""
    for _ in range(500):
        fused = _fused(rng.uniform(size=(3, 3, 3)))
        votes = rng.integers(0, 6, size=(3, 3, 3)) / 5.0
        tau1, tau2 = np.sort(rng.uniform(0.0, 1.0, size=2))
        low = binarize_cube(fused, votes, tau1, 0.6)
        high = binarize_cube(fused, votes, tau2, 0.6)
        assert not np.any(high.occ & ~low.occ)


def test_psi_closed_forms(rng):
    """Test psi on identical, complementary and empty surfaces."""
    lattice = build_lattice((0.0, 0.0, 0.0, 6.0, 4.0, 4.0), 1.0, 4, 2)
    overlap = lattice.overlap((0, 0, 0), (1, 0, 0))
    assert overlap is not None

    occ = rng.uniform(size=(4, 4, 4)) > 0.5
    shifted = np.zeros_like(occ)
    shifted[0:2] = occ[2:4]
    n = int(occ[2:4].sum())
    assert psi(_surface(occ), _surface(shifted), overlap, 6.0) == -6.0 * n

    flipped = np.zeros_like(occ)
    flipped[0:2] = ~occ[2:4]
    assert psi(_surface(occ), _surface(flipped), overlap, 6.0) == float(overlap.size)

    empty = np.zeros((4, 4, 4), dtype=bool)
    assert psi(_surface(empty), _surface(empty), overlap, 6.0) == 0.0


def test_psi_matches_term_by_term_sum(rng):
    """Test psi against its per-voxel definition on random masks."""
    lattice = build_lattice((0.0, 0.0, 0.0, 6.0, 4.0, 4.0), 1.0, 4, 2)
    overlap = lattice.overlap((0, 0, 0), (1, 0, 0))
    assert overlap is not None
    for _ in range(50):
        a = rng.uniform(size=(4, 4, 4)) > 0.5
        b = rng.uniform(size=(4, 4, 4)) > 0.5
        beta = float(rng.uniform(0.0, 10.0))
        sa = a[overlap.a].astype(int).ravel()
        sb = b[overlap.b].astype(int).ravel()
        terms = [(1 - x) * y + x * (1 - y) - beta * x * y for x, y in zip(sa, sb, strict=True)]
        expected = sum(terms)
        assert psi(_surface(a), _surface(b), overlap, beta) == pytest.approx(expected, abs=1e-9)


def test_optimize_single_cube():
    """Test that a cube without neighbors takes the smallest candidate."""
    lattice = build_lattice((0.0, 0.0, 0.0, 4.0, 4.0, 4.0), 1.0, 4, 2)
    fused = {(0, 0, 0): _fused(np.full((4, 4, 4), 0.8))}

    result = optimize_thresholds(fused, lattice, 0.8, 6.0, [0.5, 0.7, 0.9])
    assert result.tau == {(0, 0, 0): 0.5}
    assert result.converged
    assert result.iteration_count == 1
    assert result.energy_history == (0.0,)

    result = optimize_thresholds(fused, lattice, 0.8, 6.0, [0.6, 0.9])
    assert result.tau == {(0, 0, 0): 0.6}
    assert result.converged


def _votes_or_ones(fused):
    return np.ones(fused.p.shape) if fused.votes is None else fused.votes


def _cube_energy(lattice, fused, idx, surf, surfaces, beta):
    total = 0.0
    for other in lattice.neighbors(idx):
        overlap = lattice.overlap(idx, other)
        if other in fused and overlap is not None:
            total += psi(surf, surfaces[other], overlap, beta)
    return total


def _jacobi_reference(fused, lattice, gamma, beta, grid, max_sweeps):
    """
    Plain Jacobi sweeps built from binarize_cube and psi.

    Returns (tau, sweeps, converged, history) and checks that every cube's new
    threshold does no worse than its old candidate against the sweep's snapshot.
    """

    def surface(idx, tau):
        return binarize_cube(fused[idx], _votes_or_ones(fused[idx]), tau, gamma)

    order = sorted(fused)
    tau = {idx: 0.5 for idx in order}
    history = []
    for sweep in range(1, max_sweeps + 1):
        snapshot = {idx: surface(idx, tau[idx]) for idx in order}
        new_tau = {}
        for idx in order:
            energies = [
                _cube_energy(lattice, fused, idx, surface(idx, t), snapshot, beta) for t in grid
            ]
            new_tau[idx] = grid[int(np.argmin(energies))]
            if tau[idx] in grid:
                old = _cube_energy(lattice, fused, idx, snapshot[idx], snapshot, beta)
                assert min(energies) <= old
        changed = new_tau != tau
        tau = new_tau
        surfaces = {idx: surface(idx, tau[idx]) for idx in order}
        history.append(
            sum(_cube_energy(lattice, fused, idx, surfaces[idx], surfaces, beta) for idx in order)
        )
        if not changed:
            return tau, sweep, True, history
    return tau, max_sweeps, False, history


def _brute_force(fused, lattice, gamma, beta, grid):
    """Exhaustive minimization of the symmetric two-cube energy; ties to the smallest taus."""
    overlap = lattice.overlap((0, 0, 0), (1, 0, 0))
    reverse = lattice.overlap((1, 0, 0), (0, 0, 0))
    ones = np.ones((4, 4, 4))
    best, best_energy = None, np.inf
    for tau_a, tau_b in itertools.product(grid, grid):
        sa = binarize_cube(fused[(0, 0, 0)], ones, tau_a, gamma)
        sb = binarize_cube(fused[(1, 0, 0)], ones, tau_b, gamma)
        energy = psi(sa, sb, overlap, beta) + psi(sb, sa, reverse, beta)
        if energy < best_energy:
            best, best_energy = (tau_a, tau_b), energy
    return best, best_energy


def _random_grid(rng, size=3):
    picked = rng.choice(np.linspace(0.5, 0.98, 25), size, replace=False)
    return [float(t) for t in np.sort(picked)]


def test_optimize_two_cubes_with_identical_fields_agree(rng):
    """Test that cubes sharing their overlap probabilities settle on equal thresholds."""
    lattice = build_lattice((0.0, 0.0, 0.0, 6.0, 4.0, 4.0), 1.0, 4, 2)
    assert lattice.counts == (2, 1, 1)
    for _ in range(20):
        p_a = rng.uniform(0.3, 1.0, size=(4, 4, 4))
        p_b = rng.uniform(0.3, 1.0, size=(4, 4, 4))
        p_b[0:2] = p_a[2:4]
        fused = {(0, 0, 0): _fused(p_a, (0, 0, 0)), (1, 0, 0): _fused(p_b, (1, 0, 0))}
        grid = _random_grid(rng)

        result = optimize_thresholds(fused, lattice, 0.8, 6.0, grid)
        best, best_energy = _brute_force(fused, lattice, 0.8, 6.0, grid)

        assert result.tau[(0, 0, 0)] == result.tau[(1, 0, 0)]
        assert (result.tau[(0, 0, 0)], result.tau[(1, 0, 0)]) == best
        assert result.converged
        assert result.energy_history[-1] == best_energy
        assert best_energy <= 0.0


def test_optimize_two_cubes_matches_exhaustive_search(rng):
    """Test two cubes with independent fields against all 9 threshold combinations."""
    lattice = build_lattice((0.0, 0.0, 0.0, 6.0, 4.0, 4.0), 1.0, 4, 2)
    # Each cube shares 32 voxels; beta above 62 makes every shared surface voxel
    # outweigh any number of unshared ones, so descent from tau = 0.5 is exact.
    beta = 64.0
    for _ in range(20):
        fused = {
            (0, 0, 0): _fused(rng.uniform(0.3, 1.0, size=(4, 4, 4)), (0, 0, 0)),
            (1, 0, 0): _fused(rng.uniform(0.3, 1.0, size=(4, 4, 4)), (1, 0, 0)),
        }
        grid = _random_grid(rng)

        result = optimize_thresholds(fused, lattice, 0.8, beta, grid)
        best, best_energy = _brute_force(fused, lattice, 0.8, beta, grid)

        assert (result.tau[(0, 0, 0)], result.tau[(1, 0, 0)]) == best
        assert result.converged
        assert result.energy_history[-1] == best_energy


def test_optimize_matches_jacobi_sweeps(rng):
    """Test thresholds, sweep counts and energies against simultaneous updates."""
    lattice = build_lattice((0.0, 0.0, 0.0, 8.0, 8.0, 4.0), 1.0, 4, 2)
    assert lattice.counts == (3, 3, 1)
    for _ in range(10):
        fused = {}
        for cube in lattice:
            votes = rng.integers(0, 6, size=(4, 4, 4)) / 5.0
            fused[cube.index] = _fused(rng.uniform(size=(4, 4, 4)), cube.index, votes)
        del fused[(1, 1, 0)]
        grid = _random_grid(rng, 6)

        result = optimize_thresholds(fused, lattice, 0.6, 6.0, grid, max_sweeps=10)
        tau, sweeps, converged, history = _jacobi_reference(fused, lattice, 0.6, 6.0, grid, 10)

        assert result.tau == tau
        assert result.iteration_count == sweeps
        assert result.converged == converged
        assert list(result.energy_history) == history


def test_optimize_ignores_cube_order(rng):
    """Test that the insertion order of the fused cubes does not matter."""
    lattice = build_lattice((0.0, 0.0, 0.0, 8.0, 8.0, 4.0), 1.0, 4, 2)
    fused = {cube.index: _fused(rng.uniform(size=(4, 4, 4)), cube.index) for cube in lattice}
    grid = _random_grid(rng, 5)

    forward = optimize_thresholds(fused, lattice, 0.8, 6.0, grid)
    backward = optimize_thresholds(dict(reversed(fused.items())), lattice, 0.8, 6.0, grid)
    assert forward == backward


def test_optimize_energy_never_increases(rng):
    """Test that the recorded total energy is non-increasing on 3x3x3 lattices."""
    lattice = build_lattice((0.0, 0.0, 0.0, 8.0, 8.0, 8.0), 1.0, 4, 2)
    assert len(lattice) == 27
    grid = [float(t) for t in np.linspace(0.5, 0.95, 10)]
    for _ in range(20):
        fused = {}
        for cube in lattice:
            votes = rng.integers(0, 6, size=(4, 4, 4)) / 5.0
            fused[cube.index] = _fused(rng.uniform(size=(4, 4, 4)), cube.index, votes)

        result = optimize_thresholds(fused, lattice, 0.6, 6.0, grid, max_sweeps=10)

        history = result.energy_history
        assert len(history) == result.iteration_count <= 10
        assert all(b <= a for a, b in zip(history, history[1:], strict=False))
        assert set(result.tau.values()) <= set(grid)


def test_optimize_skips_missing_neighbors():
    """Test that cubes absent from the fused set are not neighbors."""
    lattice = build_lattice((0.0, 0.0, 0.0, 6.0, 4.0, 4.0), 1.0, 4, 2)
    fused = {(1, 0, 0): _fused(np.full((4, 4, 4), 0.9), (1, 0, 0))}
    result = optimize_thresholds(fused, lattice, 0.8, 6.0, [0.55, 0.75])
    assert result.tau == {(1, 0, 0): 0.55}


@pytest.mark.parametrize(
    "candidates",
    [[], [0.4, 0.6], [0.6, 1.0], [0.8, 0.6], [0.6, 0.6]],
)
def test_optimize_invalid_candidates(candidates):
    """Test threshold grid validation."""
    lattice = build_lattice((0.0, 0.0, 0.0, 4.0, 4.0, 4.0), 1.0, 4, 2)
    fused = {(0, 0, 0): _fused(np.full((4, 4, 4), 0.8))}
    with pytest.raises(InvalidCandidatesError):
        optimize_thresholds(fused, lattice, 0.8, 6.0, candidates)


def test_thin_single_layer_unchanged(rng):
    """Test that a one-voxel-thick surface survives thinning."""
    occ = np.zeros((4, 4, 4), dtype=bool)
    depth = rng.integers(0, 4, size=(4, 4))
    for i, j in np.ndindex(4, 4):
        occ[i, j, depth[i, j]] = True
    surf = _surface(occ)

    thinned = thin(surf, _fused(rng.uniform(size=(4, 4, 4))), [_axis_view(0, "z")], _cube(4), 0.8)
    np.testing.assert_array_equal(thinned.occ, occ)


def test_thin_empty_surface():
    """Test that an empty surface stays empty."""
    surf = _surface(np.zeros((3, 3, 3), dtype=bool))
    thinned = thin(surf, _fused(np.full((3, 3, 3), 0.9)), [_axis_view(0, "z")], _cube(3), 0.8)
    assert thinned.occupied == 0


def test_thin_removes_back_layer():
    """Test that the less confident layer of a two-deep slab is removed."""
    occ = np.zeros((4, 4, 4), dtype=bool)
    occ[:, :, 1:3] = True
    p = np.zeros((4, 4, 4))
    p[:, :, 1] = 0.9
    p[:, :, 2] = 0.8

    thinned = thin(_surface(occ), _fused(p), [_axis_view(0, "z")], _cube(4), 1.0)

    assert thinned.occ[:, :, 1].all()
    assert not thinned.occ[:, :, 2].any()
    assert thinned.occupied == 16


def test_thin_idempotent(rng):
    """Test that thinning twice equals thinning once."""
    views = [_axis_view(0, "z"), _axis_view(1, "x")]
    for _ in range(20):
        surf = _surface(rng.uniform(size=(4, 4, 4)) > 0.4)
        fused = _fused(rng.integers(0, 4, size=(4, 4, 4)) / 4.0)
        once = thin(surf, fused, views, _cube(4), 0.5)
        twice = thin(once, fused, views, _cube(4), 0.5)
        np.testing.assert_array_equal(twice.occ, once.occ)
        assert not np.any(once.occ & ~surf.occ)
