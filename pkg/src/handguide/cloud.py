"""Point clouds and triangle meshes: sampling, neighbors, filtering, I/O.

Clouds are thin wrappers over (N, 3) float64 arrays. The smoothing here is
classic moving least squares: each point is projected onto a locally
weighted polynomial surface fitted over its radius neighborhood.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "PointCloud",
    "TriangleMesh",
    "NeighborIndex",
    "sample_mesh",
    "remove_outliers",
    "mls_smooth",
    "crop_sphere",
    "load_cloud",
    "save_cloud",
    "save_mesh_obj",
]


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (N, 3), finite

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def transformed(self, transform) -> "PointCloud":
        return PointCloud(transform.apply(self.points))


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray   # (V, 3)
    triangles: np.ndarray  # (F, 3) int indices

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        f = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("triangle indices out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)

    def triangle_areas(self) -> np.ndarray:
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


class NeighborIndex:
    """k-NN and radius queries over a fixed cloud (KD-tree backed)."""

    def __init__(self, cloud: PointCloud):
        self._points = cloud.points
        self._tree = cKDTree(cloud.points)

    def nearest(self, query, k: int = 1):
        """Distances and indices of the k nearest points to `query`."""
        d, i = self._tree.query(np.asarray(query, dtype=float), k=k)
        return np.atleast_1d(d), np.atleast_1d(i)

    def within(self, query, radius: float) -> np.ndarray:
        """Sorted indices of points within `radius` of `query`."""
        idx = self._tree.query_ball_point(np.asarray(query, dtype=float), radius)
        return np.sort(np.asarray(idx, dtype=np.int64))

    @property
    def tree(self) -> cKDTree:
        return self._tree


def sample_mesh(mesh: TriangleMesh, n: int, seed: int) -> PointCloud:
    """Draw n points area-uniformly over the mesh, deterministically per seed."""
    if n < 0:
        raise ValueError("sample count must be non-negative")
    if n == 0:
        return PointCloud(np.zeros((0, 3)))
    if len(mesh.triangles) == 0:
        raise ValueError("cannot sample an empty mesh")
    areas = mesh.triangle_areas()
    total = float(areas.sum())
    if total <= 0:
        raise ValueError("mesh has zero total area")
    rng = np.random.default_rng(seed)
    tri = rng.choice(len(areas), size=n, p=areas / total)
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    a = mesh.vertices[mesh.triangles[tri, 0]]
    b = mesh.vertices[mesh.triangles[tri, 1]]
    c = mesh.vertices[mesh.triangles[tri, 2]]
    return PointCloud(a + u[:, None] * (b - a) + v[:, None] * (c - a))


def remove_outliers(cloud: PointCloud, k: int = 16, alpha: float = 1.0) -> PointCloud:
    """Statistical outlier removal.

    Keeps point i iff its mean distance to its k nearest neighbors is at most
    mu + alpha * sigma, with mu and sigma taken over all points' mean
    neighbor distances.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(cloud) <= k:
        raise ValueError(f"cloud of {len(cloud)} points is too small for k={k}")
    tree = cKDTree(cloud.points)
    d, _ = tree.query(cloud.points, k=k + 1, workers=-1)
    mean_d = d[:, 1:].mean(axis=1)
    mu = mean_d.mean()
    sigma = mean_d.std()
    keep = mean_d <= mu + alpha * sigma
    return PointCloud(cloud.points[keep])


def _weighted_plane_normals(pts, pair_i, pair_j, w):
    """Per-point Gaussian-weighted centroid and smallest-covariance direction."""
    n = len(pts)
    wsum = np.bincount(pair_i, weights=w, minlength=n)
    centroid = np.empty_like(pts)
    for c in range(3):
        centroid[:, c] = np.bincount(pair_i, weights=w * pts[pair_j, c], minlength=n)
    centroid /= np.maximum(wsum, 1e-300)[:, None]

    diff = pts[pair_j] - centroid[pair_i]
    cov = np.empty((n, 3, 3))
    for a in range(3):
        for b in range(a, 3):
            m = np.bincount(pair_i, weights=w * diff[:, a] * diff[:, b], minlength=n)
            cov[:, a, b] = m
            cov[:, b, a] = m
    cov /= np.maximum(wsum, 1e-300)[:, None, None]
    # guard against exactly singular neighborhoods
    cov += 1e-18 * np.eye(3)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    return centroid, normals


def mls_smooth(
    cloud: PointCloud,
    radius: float = 0.05,
    degree: int = 1,
    max_neighbors: int | None = None,
) -> PointCloud:
    """Moving-least-squares smoothing.

    Each point is projected onto a polynomial surface of the given degree
    (1 = plane, 2 = quadric height field) fitted with Gaussian weights
    (bandwidth radius/2) over its radius neighborhood. Points with fewer
    than 3 neighbors pass through unchanged. `max_neighbors` optionally caps
    the neighborhood to the nearest points inside the radius (for very dense
    clouds); None uses the full radius neighborhood.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if degree not in (1, 2):
        raise ValueError("degree must be 1 or 2")
    pts = cloud.points
    n = len(pts)
    if n < 4:
        # nobody can have 3 neighbors: everything passes through
        return PointCloud(pts.copy())
    tree = cKDTree(pts)
    bandwidth = radius / 2.0

    if max_neighbors is not None:
        kq = min(n, max_neighbors + 1)  # +1 for the point itself
        d, j = tree.query(pts, k=kq, distance_upper_bound=radius, workers=-1)
        valid = np.isfinite(d)
        pair_i = np.repeat(np.arange(n), valid.sum(axis=1))
        pair_j = j[valid]
        pair_d = d[valid]
    else:
        neigh = tree.query_ball_point(pts, radius, workers=-1)
        counts_list = np.fromiter((len(x) for x in neigh), dtype=np.int64, count=n)
        pair_i = np.repeat(np.arange(n), counts_list)
        pair_j = np.concatenate([np.asarray(x, dtype=np.int64) for x in neigh]) if n else np.empty(0, np.int64)
        pair_d = np.linalg.norm(pts[pair_j] - pts[pair_i], axis=1)

    counts = np.bincount(pair_i, minlength=n)
    w = np.exp(-((pair_d / bandwidth) ** 2))

    centroid, normals = _weighted_plane_normals(pts, pair_i, pair_j, w)
    movable = counts >= 4  # self plus at least 3 neighbors

    out = pts.copy()
    if degree == 1:
        offset = np.einsum("ij,ij->i", pts - centroid, normals)
        proj = pts - offset[:, None] * normals
        out[movable] = proj[movable]
        return PointCloud(out)

    # degree 2: per-point weighted quadric height-field fit in the local frame
    order = np.argsort(pair_i, kind="stable")
    pair_i = pair_i[order]
    pair_j = pair_j[order]
    w = w[order]
    starts = np.searchsorted(pair_i, np.arange(n))
    ends = np.searchsorted(pair_i, np.arange(n) + 1)
    for i in np.flatnonzero(movable):
        sl = slice(starts[i], ends[i])
        nb = pts[pair_j[sl]]
        wi = w[sl]
        ni = normals[i]
        # local tangent basis
        ref = np.array([1.0, 0.0, 0.0]) if abs(ni[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = np.cross(ni, ref)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(ni, e1)
        rel = nb - centroid[i]
        uu = rel @ e1
        vv = rel @ e2
        hh = rel @ ni
        A = np.column_stack([np.ones_like(uu), uu, vv, uu * uu, uu * vv, vv * vv])
        Aw = A * wi[:, None]
        coef, *_ = np.linalg.lstsq(Aw.T @ A, Aw.T @ hh, rcond=None)
        rp = pts[i] - centroid[i]
        u0 = rp @ e1
        v0 = rp @ e2
        h_fit = coef @ np.array([1.0, u0, v0, u0 * u0, u0 * v0, v0 * v0])
        out[i] = centroid[i] + u0 * e1 + v0 * e2 + h_fit * ni
    return PointCloud(out)


def crop_sphere(cloud: PointCloud, center, radius: float) -> PointCloud:
    """Points within `radius` of `center` (boundary inclusive)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    center = np.asarray(center, dtype=float)
    d2 = np.sum((cloud.points - center) ** 2, axis=1)
    return PointCloud(cloud.points[d2 <= radius * radius])


# --- ASCII I/O: PLY (x y z) and plain XYZ, 9 significant digits ---


def _format_row(p) -> str:
    return f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}"


def save_cloud(cloud: PointCloud, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".ply":
        lines = [
            "ply",
            "format ascii 1.0",
            f"element vertex {len(cloud)}",
            "property double x",
            "property double y",
            "property double z",
            "end_header",
        ]
        lines.extend(_format_row(p) for p in cloud.points)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    elif path.suffix.lower() == ".xyz":
        path.write_text("".join(_format_row(p) + "\n" for p in cloud.points), encoding="utf-8")
    else:
        raise ValueError(f"unsupported cloud format '{path.suffix}' (use .ply or .xyz)")


def _load_ply(text: str) -> PointCloud:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ValueError("not an ascii PLY file")
    n_vertex = None
    props = []
    i = 1
    in_vertex = False
    while i < len(lines):
        parts = lines[i].split()
        i += 1
        if not parts:
            continue
        if parts[0] == "format" and parts[1] != "ascii":
            raise ValueError("only ascii PLY is supported")
        if parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                n_vertex = int(parts[2])
        elif parts[0] == "property" and in_vertex:
            props.append(parts[-1])
        elif parts[0] == "end_header":
            break
    if n_vertex is None:
        raise ValueError("PLY header has no vertex element")
    try:
        ix, iy, iz = props.index("x"), props.index("y"), props.index("z")
    except ValueError as exc:
        raise ValueError("PLY vertex element lacks x/y/z properties") from exc
    rows = []
    for line in lines[i : i + n_vertex]:
        parts = line.split()
        rows.append((float(parts[ix]), float(parts[iy]), float(parts[iz])))
    if len(rows) != n_vertex:
        raise ValueError("PLY vertex data truncated")
    return PointCloud(np.asarray(rows, dtype=float).reshape(-1, 3))


def load_cloud(path) -> PointCloud:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".ply":
        return _load_ply(text)
    if path.suffix.lower() == ".xyz":
        rows = [
            [float(v) for v in line.split()[:3]]
            for line in text.splitlines()
            if line.strip()
        ]
        return PointCloud(np.asarray(rows, dtype=float).reshape(-1, 3))
    raise ValueError(f"unsupported cloud format '{path.suffix}' (use .ply or .xyz)")


def save_mesh_obj(mesh: TriangleMesh, path) -> None:
    """Write a mesh as ASCII OBJ (v/f records, 1-based indices)."""
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {_format_row(v)}\n")
        for f in mesh.triangles:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
