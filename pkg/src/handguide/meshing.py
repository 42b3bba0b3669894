"""Triangle tessellation of collision primitives and posed robot models."""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import ConvexHull

from .cloud import TriangleMesh
from .geometry import RigidTransform
from .model import Box, Cylinder, Hull, RobotModel, forward_kinematics

__all__ = [
    "tessellate_box",
    "tessellate_cylinder",
    "tessellate_hull",
    "primitive_mesh",
    "merge_meshes",
    "robot_mesh",
    "floor_mesh",
    "box_mesh",
]


def _grid_face(corner, eu, ev, nu: int, nv: int):
    """Vertices and triangles for a planar quad subdivided nu x nv."""
    us = np.linspace(0.0, 1.0, nu + 1)
    vs = np.linspace(0.0, 1.0, nv + 1)
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    verts = corner + uu[..., None] * eu + vv[..., None] * ev
    verts = verts.reshape(-1, 3)

    iu, iv = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    i00 = (iu * (nv + 1) + iv).ravel()
    i10 = ((iu + 1) * (nv + 1) + iv).ravel()
    i01 = (iu * (nv + 1) + iv + 1).ravel()
    i11 = ((iu + 1) * (nv + 1) + iv + 1).ravel()
    tris = np.concatenate(
        [np.stack([i00, i10, i11], axis=1), np.stack([i00, i11, i01], axis=1)]
    )
    return verts, tris


def merge_meshes(meshes) -> TriangleMesh:
    verts = []
    tris = []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        offset += len(m.vertices)
    if not verts:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    return TriangleMesh(np.concatenate(verts), np.concatenate(tris))


def tessellate_box(half_extents, max_edge: float) -> TriangleMesh:
    hx, hy, hz = [float(v) for v in half_extents]
    parts = []
    faces = [
        # corner, edge u, edge v  (one pair of faces per axis)
        ((-hx, -hy, -hz), (2 * hx, 0, 0), (0, 2 * hy, 0), (0, 0, 2 * hz)),
        ((-hx, -hy, -hz), (2 * hx, 0, 0), (0, 0, 2 * hz), (0, 2 * hy, 0)),
        ((-hx, -hy, -hz), (0, 2 * hy, 0), (0, 0, 2 * hz), (2 * hx, 0, 0)),
    ]
    for corner, eu, ev, shift in faces:
        corner = np.asarray(corner, dtype=float)
        eu = np.asarray(eu, dtype=float)
        ev = np.asarray(ev, dtype=float)
        nu = max(1, math.ceil(np.linalg.norm(eu) / max_edge))
        nv = max(1, math.ceil(np.linalg.norm(ev) / max_edge))
        v0, t0 = _grid_face(corner, eu, ev, nu, nv)
        v1, t1 = _grid_face(corner + np.asarray(shift, dtype=float), eu, ev, nu, nv)
        parts.append(TriangleMesh(v0, t0))
        parts.append(TriangleMesh(v1, t1))
    return merge_meshes(parts)


def tessellate_cylinder(radius: float, length: float, max_edge: float, min_segments: int = 16) -> TriangleMesh:
    """z-aligned cylinder centered at the origin, lateral surface plus caps."""
    n_seg = max(min_segments, math.ceil(2 * math.pi * radius / max_edge))
    n_z = max(1, math.ceil(length / max_edge))
    n_r = max(1, math.ceil(radius / max_edge))
    ang = np.linspace(0.0, 2 * math.pi, n_seg, endpoint=False)
    ca, sa = np.cos(ang), np.sin(ang)

    verts = []
    tris = []

    # lateral rings
    zs = np.linspace(-length / 2.0, length / 2.0, n_z + 1)
    ring0 = len(verts)
    for z in zs:
        for c, s in zip(ca, sa):
            verts.append((radius * c, radius * s, z))
    for iz in range(n_z):
        for k in range(n_seg):
            a = ring0 + iz * n_seg + k
            b = ring0 + iz * n_seg + (k + 1) % n_seg
            a2 = a + n_seg
            b2 = b + n_seg
            tris.append((a, b, b2))
            tris.append((a, b2, a2))

    # caps as concentric rings with a center vertex
    for z in (-length / 2.0, length / 2.0):
        radii = np.linspace(0.0, radius, n_r + 1)
        center = len(verts)
        verts.append((0.0, 0.0, z))
        ring_start = []
        for r in radii[1:]:
            ring_start.append(len(verts))
            for c, s in zip(ca, sa):
                verts.append((r * c, r * s, z))
        # innermost fan
        first = ring_start[0]
        for k in range(n_seg):
            tris.append((center, first + k, first + (k + 1) % n_seg))
        # ring-to-ring quads
        for ri in range(len(ring_start) - 1):
            inner = ring_start[ri]
            outer = ring_start[ri + 1]
            for k in range(n_seg):
                k2 = (k + 1) % n_seg
                tris.append((inner + k, outer + k, outer + k2))
                tris.append((inner + k, outer + k2, inner + k2))

    return TriangleMesh(np.asarray(verts, dtype=float), np.asarray(tris, dtype=np.int64))


def _subdivide_to_edge(verts: np.ndarray, tris: np.ndarray, max_edge: float):
    """Midpoint 4-way subdivision until every edge is at most max_edge."""
    verts = list(map(tuple, verts))
    tris = [tuple(t) for t in tris]
    for _ in range(12):  # hard cap on refinement depth
        va = np.asarray(verts)
        longest = 0.0
        for i, j, k in tris:
            longest = max(
                longest,
                float(np.linalg.norm(va[i] - va[j])),
                float(np.linalg.norm(va[j] - va[k])),
                float(np.linalg.norm(va[k] - va[i])),
            )
        if longest <= max_edge:
            break
        midpoint_cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in midpoint_cache:
                verts.append(tuple((np.asarray(verts[i]) + np.asarray(verts[j])) / 2.0))
                midpoint_cache[key] = len(verts) - 1
            return midpoint_cache[key]

        new_tris = []
        for i, j, k in tris:
            ij = midpoint(i, j)
            jk = midpoint(j, k)
            ki = midpoint(k, i)
            new_tris.extend([(i, ij, ki), (ij, j, jk), (ki, jk, k), (ij, jk, ki)])
        tris = new_tris
    return np.asarray(verts, dtype=float), np.asarray(tris, dtype=np.int64)


def tessellate_hull(vertices, max_edge: float) -> TriangleMesh:
    hull = ConvexHull(np.asarray(vertices, dtype=float))
    verts, tris = _subdivide_to_edge(hull.points, hull.simplices, max_edge)
    return TriangleMesh(verts, tris)


def primitive_mesh(prim, max_edge: float) -> TriangleMesh:
    """Tessellate a collision primitive in its own link frame."""
    if isinstance(prim, Box):
        local = tessellate_box(prim.half_extents, max_edge)
    elif isinstance(prim, Cylinder):
        local = tessellate_cylinder(prim.radius, prim.length, max_edge)
    elif isinstance(prim, Hull):
        return tessellate_hull(prim.vertices, max_edge)
    else:
        raise TypeError(f"unknown primitive {type(prim)!r}")
    return TriangleMesh(prim.origin.apply(local.vertices), local.triangles)


def robot_mesh(model: RobotModel, q, max_edge: float, base: RigidTransform | None = None) -> TriangleMesh:
    """Posed surface mesh of every link's collision primitive."""
    poses = forward_kinematics(model, q, base)
    names = model.link_names
    parts = []
    for pose, name in zip(poses, names):
        local = primitive_mesh(model.link(name).collision, max_edge)
        parts.append(TriangleMesh(pose.apply(local.vertices), local.triangles))
    return merge_meshes(parts)


def floor_mesh(center, extent: float, z: float, max_edge: float) -> TriangleMesh:
    """Square horizontal quad of side `extent` at height z."""
    corner = np.asarray([center[0] - extent / 2.0, center[1] - extent / 2.0, z], dtype=float)
    n = max(1, math.ceil(extent / max_edge))
    v, t = _grid_face(corner, np.array([extent, 0.0, 0.0]), np.array([0.0, extent, 0.0]), n, n)
    return TriangleMesh(v, t)


def box_mesh(half_extents, pose: RigidTransform, max_edge: float) -> TriangleMesh:
    local = tessellate_box(half_extents, max_edge)
    return TriangleMesh(pose.apply(local.vertices), local.triangles)
