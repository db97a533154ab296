"""
Turning fused probabilities into surface voxels.

Ray pooling lets every view vote, per pixel ray, for the most confident voxel
it sees. A voxel becomes surface when enough views vote for it and its fused
probability exceeds the cube's threshold. Thresholds are either one global
value or chosen per cube so that overlapping cubes agree on their surfaces.
"""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from voxmvs.core.exceptions import InvalidCandidatesError, NoViewsError
from voxmvs.stereo.fusion import FusedCube
from voxmvs.stereo.geometry import CameraView, Cube, CubeLattice, Index3, Overlap, project_points

logger = logging.getLogger(__name__)

INITIAL_TAU = 0.5


@dataclass(frozen=True, eq=False)
class SurfaceCube:
    """Binary surface of one cube."""

    cube_index: Index3
    occ: NDArray[np.bool_]
    tau_used: float

    @property
    def occupied(self) -> int:
        return int(np.count_nonzero(self.occ))


@dataclass(frozen=True)
class ThresholdField:
    """Per-cube thresholds found by optimize_thresholds."""

    tau: dict[Index3, float]
    iteration_count: int
    converged: bool
    energy_history: tuple[float, ...] = field(default=())


def _bucket_winners(
    p: NDArray[np.float64],
    candidates: NDArray[np.bool_],
    view: CameraView,
    cube: Cube,
) -> tuple[NDArray[np.bool_], bool]:
    """
    Find, for one view, the highest-p candidate voxel of every pixel ray.

    Rays are identified by the projected pixel rounded to the nearest integer.
    Ties go to the smallest (i, j, k) index.

    Returns:
        (winners, sees_cube): winner mask over the cube, and whether any voxel
        of the cube projects into the view's frame
    """
    centers = cube.voxel_centers().reshape(-1, 3)
    uv, _, in_frame = project_points(view.proj, centers, view.image_shape)
    winners = np.zeros(p.size, dtype=bool)
    sees_cube = bool(np.any(in_frame))

    idx = np.flatnonzero(in_frame & candidates.ravel())
    if idx.size == 0:
        return winners.reshape(p.shape), sees_cube

    cols = np.floor(uv[idx, 0] + 0.5).astype(np.int64)
    rows = np.floor(uv[idx, 1] + 0.5).astype(np.int64)
    keys = rows * view.width + cols
    # Primary key last: ray, then descending p, then flat voxel index.
    order = np.lexsort((idx, -p.ravel()[idx], keys))
    _, first = np.unique(keys[order], return_index=True)
    winners[idx[order[first]]] = True
    return winners.reshape(p.shape), sees_cube


def ray_votes(fused: FusedCube, views: Sequence[CameraView], cube: Cube) -> NDArray[np.float64]:
    """
    Ray-pooling vote fraction of every voxel of a cube.

    Each view votes for the argmax-p voxel of every pixel ray through the cube.
    The fraction is taken over the views that see at least one voxel of the
    cube. The result is also stored on fused.votes.

    Raises:
        NoViewsError: If views is empty
    """
    if not views:
        raise NoViewsError(f"Ray pooling of cube {fused.cube_index} needs at least one view")

    counts = np.zeros(fused.p.shape, dtype=np.int64)
    seeing = 0
    everything = np.ones(fused.p.shape, dtype=bool)
    for view in views:
        winners, sees_cube = _bucket_winners(fused.p, everything, view, cube)
        if sees_cube:
            seeing += 1
            counts += winners

    fraction = counts / seeing if seeing else np.zeros(fused.p.shape, dtype=np.float64)
    fused.votes = fraction
    return fraction


def _votes_or_full(fused: FusedCube) -> NDArray[np.float64]:
    if fused.votes is None:
        return np.ones(fused.p.shape, dtype=np.float64)
    return fused.votes


def binarize_cube(
    fused: FusedCube,
    vote_fraction: NDArray[np.float64],
    tau: float,
    gamma: float,
) -> SurfaceCube:
    """Mark voxels with vote fraction >= gamma and p > tau as surface."""
    occ = (np.asarray(vote_fraction) >= gamma) & (fused.p > tau)
    return SurfaceCube(cube_index=fused.cube_index, occ=occ, tau_used=float(tau))


def psi(surf_a: SurfaceCube, surf_b: SurfaceCube, overlap: Overlap, beta: float) -> float:
    """
    Overlap disagreement of two neighboring surfaces.

    Counts voxels occupied in exactly one of the two cubes and subtracts beta
    for every voxel occupied in both.
    """
    a = surf_a.occ[overlap.a]
    b = surf_b.occ[overlap.b]
    return float(np.count_nonzero(a ^ b)) - beta * float(np.count_nonzero(a & b))


def _check_candidates(candidates: Sequence[float]) -> NDArray[np.float64]:
    grid = np.asarray(candidates, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0:
        raise InvalidCandidatesError("Threshold candidates must be a nonempty list")
    if np.any(grid < 0.5) or np.any(grid >= 1.0):
        raise InvalidCandidatesError(
            f"Threshold candidates must lie in [0.5, 1), got {grid.tolist()}"
        )
    if np.any(np.diff(grid) <= 0):
        raise InvalidCandidatesError("Threshold candidates must be strictly increasing")
    return grid


def _count_above(values: NDArray[np.float64], grid: NDArray[np.float64]) -> NDArray[np.int64]:
    """Number of values strictly greater than each grid entry."""
    ordered = np.sort(values)
    return ordered.size - np.searchsorted(ordered, grid, side="right")


class _ThresholdProblem:
    """Energy bookkeeping for optimize_thresholds."""

    def __init__(
        self,
        fused_cubes: Mapping[Index3, FusedCube],
        lattice: CubeLattice,
        gamma: float,
        beta: float,
        grid: NDArray[np.float64],
    ) -> None:
        self.fused = fused_cubes
        self.gamma = gamma
        self.beta = beta
        self.grid = grid
        self.eligible = {idx: _votes_or_full(f) >= gamma for idx, f in fused_cubes.items()}
        self.links: dict[Index3, list[tuple[Index3, Overlap]]] = {}
        for idx in sorted(fused_cubes):
            links = []
            for other in lattice.neighbors(idx):
                overlap = lattice.overlap(idx, other) if other in fused_cubes else None
                if overlap is not None:
                    links.append((other, overlap))
            self.links[idx] = links

    def surface(self, idx: Index3, tau: float) -> NDArray[np.bool_]:
        return self.eligible[idx] & (self.fused[idx].p > tau)

    def profile(
        self, idx: Index3, surfaces: Mapping[Index3, NDArray[np.bool_]]
    ) -> NDArray[np.float64]:
        """E(tau) of one cube at every candidate, neighbors held at their current surfaces."""
        energy = np.zeros(self.grid.size, dtype=np.float64)
        p = self.fused[idx].p
        for other, overlap in self.links[idx]:
            eligible = self.eligible[idx][overlap.a]
            p_over = p[overlap.a]
            fixed = surfaces[other][overlap.b]
            n_a = _count_above(p_over[eligible], self.grid)
            n_ab = _count_above(p_over[eligible & fixed], self.grid)
            n_b = int(np.count_nonzero(fixed))
            disagree = (n_a + n_b - 2 * n_ab).astype(np.float64)
            energy += disagree - self.beta * n_ab.astype(np.float64)
        return energy

    def cube_energy(self, idx: Index3, surfaces: Mapping[Index3, NDArray[np.bool_]]) -> float:
        total = 0.0
        for other, overlap in self.links[idx]:
            a = surfaces[idx][overlap.a]
            b = surfaces[other][overlap.b]
            total += float(np.count_nonzero(a ^ b)) - self.beta * float(np.count_nonzero(a & b))
        return total


def optimize_thresholds(
    fused_cubes: Mapping[Index3, FusedCube],
    lattice: CubeLattice,
    gamma: float,
    beta: float,
    candidates: Sequence[float],
    max_sweeps: int = 10,
) -> ThresholdField:
    """
    Choose per-cube thresholds that make overlapping surfaces agree.

    Every cube starts at tau = 0.5. Sweeps are Jacobi updates: every cube
    takes the candidate minimizing its energy against the surfaces of the
    previous sweep (ties go to the smallest tau), and all new thresholds are
    applied together at the end of the sweep. Sweeps stop once a sweep changes
    no threshold, or after max_sweeps. Simultaneous updates may cycle, in
    which case the result is reported as not converged.

    Cubes missing from fused_cubes are not counted as neighbors. Cubes whose
    votes are unset are treated as voted by every view.

    Raises:
        InvalidCandidatesError: If candidates are empty, unsorted or outside [0.5, 1)
    """
    grid = _check_candidates(candidates)
    problem = _ThresholdProblem(fused_cubes, lattice, gamma, beta, grid)
    order = sorted(fused_cubes)
    tau = {idx: INITIAL_TAU for idx in order}
    surfaces = {idx: problem.surface(idx, tau[idx]) for idx in order}

    history: list[float] = []
    converged = False
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        updates: dict[Index3, float] = {}
        for idx in order:
            best = float(grid[int(np.argmin(problem.profile(idx, surfaces)))])
            if best != tau[idx]:
                updates[idx] = best
        for idx, value in updates.items():
            tau[idx] = value
            surfaces[idx] = problem.surface(idx, value)

        total = sum(problem.cube_energy(idx, surfaces) for idx in order)
        history.append(total)
        logger.debug(f"Threshold sweep {sweeps}: total energy {total}")
        if not updates:
            converged = True
            break

    logger.info(f"Threshold optimization: {sweeps} sweeps, converged={converged}")
    return ThresholdField(
        tau=tau, iteration_count=sweeps, converged=converged, energy_history=tuple(history)
    )


def thin(
    surf: SurfaceCube,
    fused: FusedCube,
    views: Sequence[CameraView],
    cube: Cube,
    gamma: float,
) -> SurfaceCube:
    """
    Reduce a surface to the voxels that lead their pixel rays.

    A voxel survives when it is occupied and is the highest-p occupied voxel
    of its ray in at least a gamma fraction of the views that see the cube.
    """
    if not views or not np.any(surf.occ):
        return SurfaceCube(cube_index=surf.cube_index, occ=surf.occ.copy(), tau_used=surf.tau_used)

    wins = np.zeros(surf.occ.shape, dtype=np.int64)
    seeing = 0
    for view in views:
        winners, sees_cube = _bucket_winners(fused.p, surf.occ, view, cube)
        if sees_cube:
            seeing += 1
            wins += winners

    if seeing == 0:
        return SurfaceCube(cube_index=surf.cube_index, occ=surf.occ.copy(), tau_used=surf.tau_used)
    occ = surf.occ & (wins / seeing >= gamma)
    return SurfaceCube(cube_index=surf.cube_index, occ=occ, tau_used=surf.tau_used)
