"""
End-to-end reconstruction.

Cubes are processed independently on a thread pool: gate, weight and select
view pairs, predict per pair and fuse, then ray-pool. Results are collected in
lattice order, so the thread count never changes the output. Thresholding,
thinning and the point cloud are computed once for the whole lattice.
"""

import logging
import time
from collections import defaultdict
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, Field

from voxmvs.core.config import PipelineConfig, PredictorSpec
from voxmvs.core.exceptions import CubeProcessingError, InvalidConfigError, VoxError
from voxmvs.core.factory import PairScorer, build_gate, build_pair_scorer
from voxmvs.predictors.base import SurfacePredictor
from voxmvs.predictors.registry import PredictorRegistry, default_registry
from voxmvs.scene_io import (
    OccGrid,
    Scene,
    SceneManifest,
    lattice_occgrid,
    load_views,
    surface_voxel_indices,
    write_ply,
)
from voxmvs.stereo.binarize import SurfaceCube, binarize_cube, optimize_thresholds, ray_votes, thin
from voxmvs.stereo.cvc import CvcVolume, build_cvc
from voxmvs.stereo.descriptor import PatchEmbedding, dissimilarity, embed_view
from voxmvs.stereo.fusion import FusedCube, enumerate_pairs, fuse, select_pairs
from voxmvs.stereo.geometry import CameraView, Cube, CubeLattice, Index3, build_lattice, pair_angle
from voxmvs.stereo.weighting import GateModel, gate_cube, weigh_pairs

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CubePairs:
    """Candidate view pairs of one cube with their geometric and appearance features."""

    cube_index: Index3
    pairs: tuple[tuple[int, int], ...]
    thetas: tuple[float, ...]
    dissims: tuple[float, ...]
    embeddings: dict[int, PatchEmbedding]


def cube_pair_features(cube: Cube, views: Sequence[CameraView]) -> CubePairs:
    """Enumerate a cube's view pairs and compute theta and d for each."""
    by_id = {view.id: view for view in views}
    pairs = enumerate_pairs(views, cube)
    embeddings: dict[int, PatchEmbedding] = {}
    for view_id in sorted({v for pair in pairs for v in pair}):
        embedding = embed_view(cube, by_id[view_id])
        if embedding is not None:
            embeddings[view_id] = embedding

    thetas = tuple(pair_angle(cube, by_id[i], by_id[j]) for i, j in pairs)
    dissims = tuple(dissimilarity(embeddings[i], embeddings[j]) for i, j in pairs)
    return CubePairs(
        cube_index=cube.index,
        pairs=tuple(pairs),
        thetas=thetas,
        dissims=dissims,
        embeddings=embeddings,
    )


@dataclass(eq=False)
class CubeResult:
    """Outcome of processing one cube."""

    cube_index: Index3
    status: str
    n_pairs: int = 0
    fused: FusedCube | None = None
    timings: dict[str, float] = field(default_factory=dict)


class RunReport(BaseModel):
    """Summary of a reconstruction run."""

    cubes_total: int = Field(..., description="Cubes in the lattice")
    cubes_accepted: int = Field(..., description="Cubes fused and binarized")
    cubes_rejected: int = Field(..., description="Cubes skipped by the gate")
    cubes_without_pairs: int = Field(..., description="Cubes no view pair sees")
    pairs_evaluated: int = Field(..., description="Candidate view pairs over all cubes")
    pairs_predicted: int = Field(..., description="Selected view pairs run through the predictor")
    occupied_voxels: int = Field(..., description="Distinct surface voxels written")
    voxel_size: float = Field(..., description="World units per voxel")
    lattice: Index3 = Field(..., description="Cubes per axis")
    adaptive: bool = Field(..., description="Per-cube thresholds were optimized")
    threshold_sweeps: int = Field(default=0, description="Sweeps of the threshold optimization")
    threshold_converged: bool = Field(default=False, description="Threshold optimization converged")
    mean_tau: float = Field(..., description="Mean threshold over accepted cubes")
    thread_count: int = Field(..., description="Worker threads used")
    timings: dict[str, float] = Field(default_factory=dict, description="Seconds per stage")

    def to_lines(self) -> list[str]:
        """Machine-readable key=value lines."""
        lines = [
            f"cubes_total={self.cubes_total}",
            f"cubes_accepted={self.cubes_accepted}",
            f"cubes_rejected={self.cubes_rejected}",
            f"cubes_without_pairs={self.cubes_without_pairs}",
            f"pairs_evaluated={self.pairs_evaluated}",
            f"pairs_predicted={self.pairs_predicted}",
            f"occupied_voxels={self.occupied_voxels}",
            f"voxel_size={self.voxel_size!r}",
            "lattice=" + "x".join(str(n) for n in self.lattice),
            f"adaptive={'true' if self.adaptive else 'false'}",
            f"threshold_sweeps={self.threshold_sweeps}",
            f"threshold_converged={'true' if self.threshold_converged else 'false'}",
            f"mean_tau={self.mean_tau!r}",
            f"thread_count={self.thread_count}",
        ]
        for stage, seconds in sorted(self.timings.items()):
            lines.append(f"time_{stage}={seconds:.6f}")
        return lines


@dataclass(frozen=True, eq=False)
class Reconstruction:
    """Everything a reconstruction run produces."""

    surface_cubes: tuple[SurfaceCube, ...]
    ply: bytes
    report: RunReport
    lattice: CubeLattice
    fused: dict[Index3, FusedCube]

    def occgrid(self) -> OccGrid:
        return lattice_occgrid(self.surface_cubes, self.lattice)


class _CubeJob:
    """Per-cube work; holds only immutable inputs shared across worker threads."""

    def __init__(
        self,
        views: tuple[CameraView, ...],
        config: PipelineConfig,
        predictor: SurfacePredictor,
        scorer: PairScorer,
        gate: GateModel,
    ) -> None:
        self.views = views
        self.by_id = {view.id: view for view in views}
        self.config = config
        self.spec: PredictorSpec = config.predictor_spec()
        self.predictor = predictor
        self.scorer = scorer
        self.gate = gate

    def __call__(self, cube: Cube) -> CubeResult:
        try:
            return self._process(cube)
        except VoxError as e:
            raise CubeProcessingError(cube.index, e) from e

    def _process(self, cube: Cube) -> CubeResult:
        timings: dict[str, float] = defaultdict(float)
        start = time.perf_counter()
        features = cube_pair_features(cube, self.views)
        timings["embed"] += time.perf_counter() - start

        if not features.pairs:
            logger.debug(f"Cube {cube.index}: no view pair sees it")
            return CubeResult(cube_index=cube.index, status="no_pairs", timings=dict(timings))

        if not gate_cube(self.gate, features.dissims, self.config.n_min):
            logger.debug(f"Cube {cube.index}: rejected by gate")
            return CubeResult(
                cube_index=cube.index,
                status="rejected",
                n_pairs=len(features.pairs),
                timings=dict(timings),
            )

        start = time.perf_counter()
        pairs, thetas, dissims = features.pairs, features.thetas, features.dissims
        emb = features.embeddings
        scores = [
            self.scorer.score(theta, d, emb[i].vec, emb[j].vec)
            for (i, j), theta, d in zip(pairs, thetas, dissims, strict=True)
        ]
        weighting = weigh_pairs(cube.index, pairs, thetas, dissims, scores)
        selected = select_pairs(weighting, self.config.n_v)
        timings["weight"] += time.perf_counter() - start

        start = time.perf_counter()
        cvcs: dict[int, CvcVolume] = {}
        for entry in selected:
            for view_id in entry.pair:
                if view_id not in cvcs:
                    cvcs[view_id] = build_cvc(cube, self.by_id[view_id])
        timings["cvc"] += time.perf_counter() - start

        start = time.perf_counter()
        prob_cubes = [
            self.predictor.predict(cvcs[e.pair[0]], cvcs[e.pair[1]], self.spec) for e in selected
        ]
        timings["predict"] += time.perf_counter() - start

        start = time.perf_counter()
        fused = fuse(prob_cubes, [e.w for e in selected], pair_set=selected)
        timings["fuse"] += time.perf_counter() - start

        start = time.perf_counter()
        ray_votes(fused, self.views, cube)
        timings["votes"] += time.perf_counter() - start

        logger.debug(f"Cube {cube.index}: fused {len(selected)} of {len(features.pairs)} pairs")
        return CubeResult(
            cube_index=cube.index,
            status="accepted",
            n_pairs=len(features.pairs),
            fused=fused,
            timings=dict(timings),
        )


def resolve_voxel_size(config: PipelineConfig, manifest: SceneManifest) -> float:
    """
    Voxel size from the configuration, else from the scene manifest.

    Raises:
        InvalidConfigError: If neither provides one
    """
    if config.voxel_size is not None:
        return config.voxel_size
    if manifest.voxel_size is not None:
        return manifest.voxel_size
    raise InvalidConfigError(
        "voxel_size is set neither in the configuration nor in the scene manifest"
    )


def process_cubes(
    views: tuple[CameraView, ...],
    lattice: CubeLattice,
    config: PipelineConfig,
    predictor: SurfacePredictor,
    scorer: PairScorer,
    gate: GateModel,
) -> list[CubeResult]:
    """Run the per-cube stages on a thread pool; results follow lattice order."""
    job = _CubeJob(views, config, predictor, scorer, gate)
    with ThreadPoolExecutor(max_workers=config.thread_count) as executor:
        return list(executor.map(job, lattice.cubes))


def reconstruct(
    scene: Scene | SceneManifest,
    config: PipelineConfig,
    *,
    registry: PredictorRegistry | None = None,
    scorer: PairScorer | None = None,
    gate: GateModel | None = None,
) -> Reconstruction:
    """
    Reconstruct the surface voxels of a scene.

    Args:
        scene: Loaded scene, or a manifest whose views are loaded here
        config: Pipeline configuration
        registry: Predictor registry (built-ins only when None)
        scorer: Pair scorer (built from config.weight_mode when None)
        gate: Cube gate (loaded from config.gate_path when None)

    Returns:
        Reconstruction with the surface cubes, PLY bytes and run report

    Raises:
        CubeProcessingError: If a cube fails; chained to the component error
        InvalidConfigError: For unusable configurations
    """
    wall = time.perf_counter()
    if isinstance(scene, SceneManifest):
        scene = Scene(manifest=scene, views=load_views(scene))
    views = scene.views

    voxel_size = resolve_voxel_size(config, scene.manifest)
    lattice = build_lattice(scene.manifest.bbox, voxel_size, config.cube_size, config.stride)
    predictor = (registry or default_registry()).get(config.predictor)
    scorer = scorer or build_pair_scorer(config)
    gate = gate or build_gate(config)
    logger.info(
        f"Reconstructing {len(views)} views over {len(lattice)} cubes "
        f"(predictor={config.predictor}, weights={scorer.name}, threads={config.thread_count})"
    )

    results = process_cubes(views, lattice, config, predictor, scorer, gate)
    timings: dict[str, float] = defaultdict(float)
    for result in results:
        for stage, seconds in result.timings.items():
            timings[stage] += seconds

    fused = {r.cube_index: r.fused for r in results if r.fused is not None}
    order = sorted(fused)

    start = time.perf_counter()
    sweeps, converged = 0, False
    if config.adaptive and fused:
        thresholds = optimize_thresholds(
            fused, lattice, config.gamma, config.beta, config.candidate_grid(), config.max_sweeps
        )
        taus = thresholds.tau
        sweeps, converged = thresholds.iteration_count, thresholds.converged
    else:
        taus = {idx: config.tau for idx in order}
    timings["thresholds"] += time.perf_counter() - start

    start = time.perf_counter()
    surfaces = [
        binarize_cube(fused[idx], _votes(fused[idx]), taus[idx], config.gamma) for idx in order
    ]
    timings["binarize"] += time.perf_counter() - start

    if config.thinning:
        start = time.perf_counter()
        surfaces = [
            thin(surf, fused[surf.cube_index], views, lattice.cube(surf.cube_index), config.gamma)
            for surf in surfaces
        ]
        timings["thin"] += time.perf_counter() - start

    start = time.perf_counter()
    ply = write_ply(surfaces, lattice)
    occupied = len(surface_voxel_indices(surfaces, lattice))
    timings["write"] += time.perf_counter() - start
    timings["total"] = time.perf_counter() - wall

    report = RunReport(
        cubes_total=len(lattice),
        cubes_accepted=sum(r.status == "accepted" for r in results),
        cubes_rejected=sum(r.status == "rejected" for r in results),
        cubes_without_pairs=sum(r.status == "no_pairs" for r in results),
        pairs_evaluated=sum(r.n_pairs for r in results),
        pairs_predicted=sum(len(f.pair_set) for f in fused.values()),
        occupied_voxels=occupied,
        voxel_size=voxel_size,
        lattice=lattice.counts,
        adaptive=config.adaptive,
        threshold_sweeps=sweeps,
        threshold_converged=converged,
        mean_tau=float(np.mean([taus[idx] for idx in order])) if order else config.tau,
        thread_count=config.thread_count,
        timings=dict(timings),
    )
    logger.info(
        f"Reconstruction done: {report.cubes_accepted}/{report.cubes_total} cubes accepted, "
        f"{report.occupied_voxels} surface voxels in {timings['total']:.2f}s"
    )
    return Reconstruction(
        surface_cubes=tuple(surfaces),
        ply=ply,
        report=report,
        lattice=lattice,
        fused=fused,
    )


def _votes(fused: FusedCube) -> NDArray[np.float64]:
    if fused.votes is None:
        raise ValueError(f"Cube {fused.cube_index} has not been ray-pooled")
    return fused.votes

