"""Rigid registration of a robot model into a scene cloud.

Two routes: seeded point-to-point ICP, and a global 4-point congruent set
search (coplanar bases, diagonal-intersection ratio invariants, candidates
scored by largest-common-pointset fraction). Quality is the RMS of
model-to-scene closest-point distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud, crop_sphere, mls_smooth, remove_outliers, sample_mesh
from .geometry import RigidTransform, rotation_angle
from .meshing import robot_mesh
from .model import RobotModel

__all__ = [
    "RegistrationError",
    "EmptyCropError",
    "NoCorrespondencesError",
    "NoCongruentBaseError",
    "DegenerateGeometryError",
    "IcpParams",
    "CongruentParams",
    "RegistrationResult",
    "estimate_rigid",
    "icp",
    "diagonal_intersection_ratios",
    "congruent_set_register",
    "rms_closest",
    "robot_surface_cloud",
    "register_pipeline",
    "PRESET_SAMPLES",
    "PRESET_MODEL_EDGE",
]


class RegistrationError(RuntimeError):
    """Registration failure, tagged with the pipeline stage that raised it."""

    stage = "registration"


class EmptyCropError(RegistrationError):
    stage = "crop"


class NoCorrespondencesError(RegistrationError):
    stage = "icp"


class NoCongruentBaseError(RegistrationError):
    stage = "congruent"


class DegenerateGeometryError(RegistrationError):
    stage = "rigid-fit"


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 60
    max_correspondence_distance: float = 0.25
    translation_epsilon: float = 1e-6
    rotation_epsilon: float = 1e-6
    max_source_points: Optional[int] = None  # working subset for iterations
    subset_seed: int = 0

    def __post_init__(self):
        if min(self.max_iterations, 1) < 1 or self.max_correspondence_distance <= 0:
            raise ValueError("ICP parameters must be positive")
        if self.translation_epsilon <= 0 or self.rotation_epsilon <= 0:
            raise ValueError("convergence thresholds must be positive")


@dataclass(frozen=True)
class CongruentParams:
    overlap_estimate: float = 0.5
    delta: float = 0.01
    sample_size: int = 500
    num_bases: int = 200
    coplanarity_tol: float = 0.01
    seed: int = 0
    min_lcp: float = 0.25           # convergence floor on the reported LCP
    max_candidates_per_base: int = 64
    refine_iterations: int = 3

    def __post_init__(self):
        if not 0 < self.overlap_estimate <= 1:
            raise ValueError("overlap_estimate must be in (0, 1]")
        if self.delta <= 0 or self.coplanarity_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.sample_size < 4 or self.num_bases < 1:
            raise ValueError("sample_size/num_bases too small")


@dataclass(frozen=True)
class RegistrationResult:
    transform: RigidTransform
    rms: float
    converged: bool
    iterations: int
    lcp: Optional[float] = None
    objective_history: tuple = ()

    def to_dict(self) -> dict:
        d = {
            "transform": self.transform.to_dict(),
            "rms": float(self.rms),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
        }
        if self.lcp is not None:
            d["lcp"] = float(self.lcp)
        return d


def estimate_rigid(source_pts, target_pts) -> RigidTransform:
    """Least-squares rigid fit mapping paired source points onto target points.

    SVD solution of the centered cross-covariance with the usual reflection
    fix. Needs at least 3 non-collinear pairs.
    """
    A = np.asarray(source_pts, dtype=float).reshape(-1, 3)
    B = np.asarray(target_pts, dtype=float).reshape(-1, 3)
    if A.shape != B.shape:
        raise ValueError("source/target point counts differ")
    if len(A) < 3:
        raise DegenerateGeometryError("need at least 3 point pairs")
    ca = A.mean(axis=0)
    cb = B.mean(axis=0)
    H = (A - ca).T @ (B - cb)
    U, S, Vt = np.linalg.svd(H)
    spread = float(np.linalg.norm(A - ca))
    if S[1] <= 1e-12 * max(S[0], spread, 1e-30):
        raise DegenerateGeometryError("point pairs are collinear or coincident")
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    t = cb - R @ ca
    return RigidTransform(R, t)


def rms_closest(model_cloud: PointCloud, scene_cloud: PointCloud, transform: RigidTransform) -> float:
    """RMS distance from transformed model points to their nearest scene point."""
    if len(model_cloud) == 0 or len(scene_cloud) == 0:
        raise ValueError("clouds must be non-empty")
    moved = transform.apply(model_cloud.points)
    tree = cKDTree(scene_cloud.points)
    d, _ = tree.query(moved, workers=-1)
    return float(np.sqrt(np.mean(d**2)))


def icp(
    source: PointCloud,
    target: PointCloud,
    init: RigidTransform,
    params: IcpParams = IcpParams(),
) -> RegistrationResult:
    """Point-to-point ICP from an initial guess.

    Alternates distance-gated nearest-neighbor matching with a full rigid
    re-fit until the pose change drops below the epsilons. The reported rms
    is rms_closest of the full source cloud at the final pose.
    """
    if len(source) == 0 or len(target) == 0:
        raise ValueError("clouds must be non-empty")
    tree = cKDTree(target.points)
    src = source.points
    if params.max_source_points is not None and len(src) > params.max_source_points:
        rng = np.random.default_rng(params.subset_seed)
        src = src[rng.choice(len(src), size=params.max_source_points, replace=False)]

    T = init
    converged = False
    iterations = 0
    history = []
    for it in range(params.max_iterations):
        iterations = it + 1
        moved = T.apply(src)
        d, j = tree.query(moved, distance_upper_bound=params.max_correspondence_distance, workers=-1)
        mask = np.isfinite(d)
        n_pairs = int(mask.sum())
        if n_pairs < 3:
            if it == 0:
                raise NoCorrespondencesError(
                    "no correspondences within "
                    f"{params.max_correspondence_distance} m at the initial pose (bad seed?)"
                )
            break
        history.append(float(np.mean(d[mask] ** 2)))
        T_new = estimate_rigid(src[mask], target.points[j[mask]])
        dt = float(np.linalg.norm(T_new.translation - T.translation))
        dr = rotation_angle(T_new.rotation @ T.rotation.T)
        T = T_new
        if dt < params.translation_epsilon and dr < params.rotation_epsilon:
            converged = True
            break
    return RegistrationResult(
        transform=T,
        rms=rms_closest(source, target, T),
        converged=converged,
        iterations=iterations,
        objective_history=tuple(history),
    )


# --- 4-point congruent sets ---


def diagonal_intersection_ratios(points4):
    """Intersection ratios of the best-crossing segment pairing of 4 coplanar points.

    Returns (pairing, r1, r2) where pairing is ((a, b), (c, d)) into the input
    points, and the crossing point is points[a] + r1*(points[b]-points[a]) =
    points[c] + r2*(points[d]-points[c]) up to the coplanarity gap. These two
    ratios are invariant under rigid transforms.
    """
    p = np.asarray(points4, dtype=float).reshape(4, 3)
    pairings = [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))]
    best = None
    for (a, b), (c, d) in pairings:
        u = p[b] - p[a]
        v = p[d] - p[c]
        w = p[c] - p[a]
        uu = u @ u
        vv = v @ v
        uv = u @ v
        uw = u @ w
        vw = v @ w
        det = uu * vv - uv * uv
        if det <= 1e-12 * max(uu * vv, 1e-30):
            continue
        r1 = (vv * uw - uv * vw) / det
        r2 = (uv * uw - uu * vw) / det
        gap = float(np.linalg.norm((p[a] + r1 * u) - (p[c] + r2 * v)))
        crossing = 0.0 <= r1 <= 1.0 and 0.0 <= r2 <= 1.0
        key = (not crossing, gap)
        if best is None or key < best[0]:
            best = (key, ((a, b), (c, d)), float(r1), float(r2))
    if best is None:
        raise DegenerateGeometryError("no usable segment pairing for the base")
    return best[1], best[2], best[3]


def _pick_coplanar_base(pts: np.ndarray, rng: np.random.Generator, coplanarity_tol: float):
    """Indices of a wide coplanar 4-point base, or None if none found."""
    n = len(pts)
    extent = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    if extent <= 0:
        return None
    min_area = 1e-3 * extent * extent
    for _ in range(60):
        i, j, k = rng.choice(n, size=3, replace=False)
        a, b, c = pts[i], pts[j], pts[k]
        normal = np.cross(b - a, c - a)
        area2 = float(np.linalg.norm(normal))
        if area2 < 2 * min_area:
            continue
        normal = normal / area2
        dist = np.abs((pts - a) @ normal)
        near = np.flatnonzero(dist <= coplanarity_tol)
        near = near[(near != i) & (near != j) & (near != k)]
        if len(near) == 0:
            continue
        # prefer a 4th point away from the triangle corners
        spread = np.minimum.reduce(
            [np.linalg.norm(pts[near] - p, axis=1) for p in (a, b, c)]
        )
        good = near[spread > 0.05 * extent]
        pool = good if len(good) else near
        m = int(pool[rng.integers(len(pool))])
        return np.array([i, j, k, m])
    return None


def congruent_set_register(
    source: PointCloud,
    target: PointCloud,
    params: CongruentParams = CongruentParams(),
) -> RegistrationResult:
    """Global registration by matching coplanar 4-point bases.

    For each source base, target point pairs reproducing the base's two
    segment lengths are combined through the intersection-ratio invariants;
    every congruent candidate yields a rigid transform scored by the fraction
    of source sample points within delta of the full target cloud. The best
    candidate is refined by delta-gated rigid re-fits.
    """
    if len(source) < 4 or len(target) < 4:
        raise RegistrationError("congruent registration needs at least 4 points per cloud")
    rng = np.random.default_rng(params.seed)

    def sample(cloud):
        pts = cloud.points
        if len(pts) > params.sample_size:
            idx = rng.choice(len(pts), size=params.sample_size, replace=False)
            return pts[np.sort(idx)]
        return pts

    src = sample(source)
    tgt = sample(target)
    target_tree = cKDTree(target.points)
    diff = tgt[:, None, :] - tgt[None, :, :]
    pair_dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    iu, ju = np.triu_indices(len(tgt), k=1)

    best_lcp = -1.0
    best_T = None
    bases_tried = 0
    stop_lcp = min(0.98, max(params.overlap_estimate, 0.95))

    def lcp_of(T: RigidTransform) -> float:
        d, _ = target_tree.query(T.apply(src), distance_upper_bound=params.delta, workers=-1)
        return float(np.isfinite(d).mean())

    while bases_tried < params.num_bases:
        base_idx = _pick_coplanar_base(src, rng, params.coplanarity_tol)
        if base_idx is None:
            break
        bases_tried += 1
        base_pts = src[base_idx]
        try:
            pairing, r1, r2 = diagonal_intersection_ratios(base_pts)
        except DegenerateGeometryError:
            continue
        (pa, pb), (pc, pd) = pairing
        d1 = float(np.linalg.norm(base_pts[pb] - base_pts[pa]))
        d2 = float(np.linalg.norm(base_pts[pd] - base_pts[pc]))
        if d1 < 4 * params.delta or d2 < 4 * params.delta:
            continue

        def matching_pairs(length):
            hit = np.abs(pair_dist[iu, ju] - length) <= params.delta
            a = iu[hit]
            b = ju[hit]
            # both orientations of every segment
            return np.concatenate([a, b]), np.concatenate([b, a])

        a1, b1 = matching_pairs(d1)
        a2, b2 = matching_pairs(d2)
        if len(a1) == 0 or len(a2) == 0:
            continue
        e1 = tgt[a1] + r1 * (tgt[b1] - tgt[a1])
        e2 = tgt[a2] + r2 * (tgt[b2] - tgt[a2])
        matches = cKDTree(e1).query_ball_point(e2, params.delta)

        candidates = []
        for i2, lst in enumerate(matches):
            for i1 in sorted(lst):
                candidates.append((i1, i2))
                if len(candidates) >= params.max_candidates_per_base:
                    break
            if len(candidates) >= params.max_candidates_per_base:
                break

        src_base = np.array([base_pts[pa], base_pts[pb], base_pts[pc], base_pts[pd]])
        for i1, i2 in candidates:
            cand = np.array([tgt[a1[i1]], tgt[b1[i1]], tgt[a2[i2]], tgt[b2[i2]]])
            # cheap congruence screen on the cross distances
            if abs(np.linalg.norm(cand[2] - cand[0]) - np.linalg.norm(src_base[2] - src_base[0])) > 3 * params.delta:
                continue
            if abs(np.linalg.norm(cand[3] - cand[1]) - np.linalg.norm(src_base[3] - src_base[1])) > 3 * params.delta:
                continue
            try:
                T = estimate_rigid(src_base, cand)
            except DegenerateGeometryError:
                continue
            lcp = lcp_of(T)
            if lcp > best_lcp:
                best_lcp = lcp
                best_T = T
        if best_lcp >= stop_lcp:
            break

    if best_T is None:
        raise NoCongruentBaseError("no congruent base produced a candidate transform")

    # refine the winner with gated rigid re-fits over the working sample
    T = best_T
    for _ in range(params.refine_iterations):
        moved = T.apply(src)
        d, j = target_tree.query(moved, distance_upper_bound=2 * params.delta, workers=-1)
        mask = np.isfinite(d)
        if mask.sum() < 4:
            break
        try:
            T = estimate_rigid(src[mask], target.points[j[mask]])
        except DegenerateGeometryError:
            break
    final_lcp = lcp_of(T)
    if final_lcp < best_lcp:
        T, final_lcp = best_T, best_lcp

    return RegistrationResult(
        transform=T,
        rms=rms_closest(source, target, T),
        converged=final_lcp >= params.min_lcp,
        iterations=bases_tried,
        lcp=final_lcp,
    )


# --- end-to-end pipeline ---

PRESET_SAMPLES = {"big": 256_000, "small": 16_000}
PRESET_MODEL_EDGE = {"big": 0.015, "small": 0.10}


def robot_surface_cloud(
    model: RobotModel,
    q,
    samples: int,
    seed: int = 0,
    max_edge: float = 0.02,
) -> PointCloud:
    """Sampled surface cloud of the posed robot, in the robot base frame."""
    return sample_mesh(robot_mesh(model, q, max_edge), samples, seed)


def register_pipeline(
    scene: PointCloud,
    model: RobotModel,
    q,
    seed_pose: RigidTransform,
    method: str = "icp",
    preset: str = "small",
    icp_params: Optional[IcpParams] = None,
    congruent_params: Optional[CongruentParams] = None,
    crop_radius: float = 2.5,
    outlier_k: int = 16,
    outlier_alpha: float = 1.0,
    mls_radius: float = 0.05,
    mls_max_neighbors: Optional[int] = 48,
    model_samples: Optional[int] = None,
    sample_seed: int = 0,
) -> RegistrationResult:
    """Crop around the seed, denoise, and register the robot surface.

    Stages: crop_sphere(seed, crop_radius) -> remove_outliers -> mls_smooth
    -> icp (seeded) or congruent_set_register. The reported rms is measured
    against the raw crop (the scene as observed); smoothing only conditions
    the registration input.
    """
    if preset not in PRESET_SAMPLES:
        raise ValueError(f"unknown preset '{preset}'")
    if method not in ("icp", "congruent"):
        raise ValueError(f"unknown method '{method}'")

    crop = crop_sphere(scene, seed_pose.translation, crop_radius)
    if len(crop) == 0:
        raise EmptyCropError(
            f"empty crop: no scene points within {crop_radius} m of the seed (bad seed?)"
        )
    try:
        filtered = remove_outliers(crop, k=outlier_k, alpha=outlier_alpha)
    except ValueError as exc:
        raise RegistrationError(f"outlier stage: {exc}") from exc
    smoothed = mls_smooth(filtered, radius=mls_radius, degree=1, max_neighbors=mls_max_neighbors)

    n_model = model_samples if model_samples is not None else PRESET_SAMPLES[preset]
    model_cloud = robot_surface_cloud(
        model, q, n_model, seed=sample_seed, max_edge=PRESET_MODEL_EDGE[preset]
    )

    if method == "icp":
        result = icp(model_cloud, smoothed, seed_pose, icp_params or IcpParams())
    else:
        result = congruent_set_register(model_cloud, smoothed, congruent_params or CongruentParams())

    return replace(result, rms=rms_closest(model_cloud, crop, result.transform))
