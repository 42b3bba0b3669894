"""Robot description loading, forward kinematics, and per-joint collision zones.

The description format is a reduced JSON schema: a serial chain of revolute
joints (name, parent, child, origin xyz/rpy, axis, limits) plus one convex
collision primitive per link (box, cylinder, or convex hull), all in meters
and radians. See data/arm6.json for a complete document.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial import QhullError

from .geometry import RigidTransform, rotation_about_axis

__all__ = [
    "ModelError",
    "ModelParseError",
    "ModelValidationError",
    "JointLimits",
    "JointSpec",
    "Box",
    "Cylinder",
    "Hull",
    "LinkSpec",
    "RobotModel",
    "load_model",
    "load_model_file",
    "model_to_document",
    "forward_kinematics",
    "joint_frames",
    "joint_world_frame",
    "zone_distance",
    "zone_contains",
    "active_zone",
]


class ModelError(ValueError):
    """Base class for robot-description problems."""


class ModelParseError(ModelError):
    """The document is not well-formed (reports line/column context)."""


class ModelValidationError(ModelError):
    """The document parsed but violates the schema (names the offender)."""


@dataclass(frozen=True)
class JointLimits:
    lower: float = -math.pi
    upper: float = math.pi
    max_velocity: float = 1.0

    def contains(self, angle: float) -> bool:
        return self.lower <= angle <= self.upper

    def clamp(self, angle: float) -> float:
        return min(max(angle, self.lower), self.upper)


@dataclass(frozen=True)
class JointSpec:
    name: str
    parent_link: str
    child_link: str
    origin: RigidTransform
    axis: np.ndarray  # unit vector in the joint frame
    limits: JointLimits

    def __post_init__(self):
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=float).reshape(3))


# --- collision primitives (link frame, optionally offset by `origin`) ---


@dataclass(frozen=True)
class Box:
    half_extents: np.ndarray
    origin: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        object.__setattr__(self, "half_extents", np.asarray(self.half_extents, dtype=float).reshape(3))

    def distance(self, p: np.ndarray) -> float:
        """Distance from a point (primitive frame) to the box; 0 inside."""
        excess = np.abs(p) - self.half_extents
        outside = np.maximum(excess, 0.0)
        return float(np.sqrt(outside @ outside))


@dataclass(frozen=True)
class Cylinder:
    radius: float
    length: float
    origin: RigidTransform = field(default_factory=RigidTransform.identity)

    def distance(self, p: np.ndarray) -> float:
        """Distance to a z-aligned cylinder centered at the primitive origin."""
        dr = max(0.0, math.hypot(p[0], p[1]) - self.radius)
        dz = max(0.0, abs(p[2]) - self.length / 2.0)
        return math.hypot(dr, dz)


def _point_triangle_distance(p, a, b, c) -> float:
    """Closest distance from point p to triangle abc (Ericson's method)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab @ ap
    d2 = ac @ ap
    if d1 <= 0.0 and d2 <= 0.0:
        return float(np.linalg.norm(ap))
    bp = p - b
    d3 = ab @ bp
    d4 = ac @ bp
    if d3 >= 0.0 and d4 <= d3:
        return float(np.linalg.norm(bp))
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return float(np.linalg.norm(ap - v * ab))
    cp = p - c
    d5 = ab @ cp
    d6 = ac @ cp
    if d6 >= 0.0 and d5 <= d6:
        return float(np.linalg.norm(cp))
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return float(np.linalg.norm(ap - w * ac))
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return float(np.linalg.norm(p - (b + w * (c - b))))
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return float(np.linalg.norm(p - (a + ab * v + ac * w)))


@dataclass(frozen=True)
class Hull:
    vertices: np.ndarray  # (V, 3), V >= 4, non-coplanar

    def __post_init__(self):
        pts = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "vertices", pts)
        hull = ConvexHull(pts)
        object.__setattr__(self, "_equations", hull.equations)
        object.__setattr__(self, "_simplices", hull.simplices)

    @property
    def origin(self) -> RigidTransform:
        return RigidTransform.identity()

    def distance(self, p: np.ndarray) -> float:
        if np.all(self._equations[:, :3] @ p + self._equations[:, 3] <= 1e-12):
            return 0.0
        verts = self.vertices
        return min(
            _point_triangle_distance(p, verts[i], verts[j], verts[k])
            for i, j, k in self._simplices
        )


@dataclass(frozen=True)
class LinkSpec:
    name: str
    collision: object  # Box | Cylinder | Hull
    visual: Optional[str] = None


@dataclass(frozen=True)
class RobotModel:
    """A serial revolute chain: joints ordered base to tip, links base first."""

    name: str
    joints: tuple
    links: tuple
    base_link: str

    @property
    def joint_count(self) -> int:
        return len(self.joints)

    @property
    def link_names(self) -> list:
        return [self.base_link] + [j.child_link for j in self.joints]

    def link(self, name: str) -> LinkSpec:
        for l in self.links:
            if l.name == name:
                return l
        raise KeyError(name)

    def joint_limits(self) -> list:
        return [j.limits for j in self.joints]


# --- document loading ---


def _req(obj: dict, key: str, where: str):
    if key not in obj:
        raise ModelValidationError(f"{where}: missing required field '{key}'")
    return obj[key]


def _parse_origin(obj: Optional[dict], where: str) -> RigidTransform:
    if obj is None:
        return RigidTransform.identity()
    xyz = obj.get("xyz", (0.0, 0.0, 0.0))
    rpy = obj.get("rpy", (0.0, 0.0, 0.0))
    if len(xyz) != 3 or len(rpy) != 3:
        raise ModelValidationError(f"{where}: origin xyz/rpy must be 3-vectors")
    return RigidTransform.from_xyz_rpy(xyz, rpy)


def _parse_collision(obj: dict, where: str):
    kind = _req(obj, "type", where)
    origin = _parse_origin(obj.get("origin"), where)
    if kind == "box":
        he = np.asarray(_req(obj, "half_extents", where), dtype=float)
        if he.shape != (3,) or np.any(he <= 0):
            raise ModelValidationError(f"{where}: box half_extents must be 3 positive numbers")
        return Box(he, origin)
    if kind == "cylinder":
        r = float(_req(obj, "radius", where))
        l = float(_req(obj, "length", where))
        if r <= 0 or l <= 0:
            raise ModelValidationError(f"{where}: cylinder radius/length must be positive")
        return Cylinder(r, l, origin)
    if kind == "hull":
        verts = np.asarray(_req(obj, "vertices", where), dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 3 or verts.shape[0] < 4:
            raise ModelValidationError(f"{where}: hull needs at least 4 vertices of 3 coordinates")
        try:
            return Hull(verts)
        except QhullError as exc:
            raise ModelValidationError(f"{where}: degenerate hull vertices ({exc})") from exc
    raise ModelValidationError(f"{where}: unknown collision type '{kind}'")


def load_model(text: str) -> RobotModel:
    """Parse and validate a robot-description document (JSON text)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelParseError(
            f"malformed document at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise ModelValidationError("document root must be an object")

    name = doc.get("name", "robot")
    links = []
    for i, raw in enumerate(doc.get("links", [])):
        lname = _req(raw, "name", f"links[{i}]")
        collision = _parse_collision(_req(raw, "collision", f"link '{lname}'"), f"link '{lname}'")
        links.append(LinkSpec(lname, collision, raw.get("visual")))
    if not links:
        raise ModelValidationError("document defines no links")
    link_names = {l.name for l in links}
    if len(link_names) != len(links):
        raise ModelValidationError("duplicate link names")

    raw_joints = doc.get("joints", [])
    if not raw_joints:
        raise ModelValidationError("document defines no joints")
    joints = []
    for i, raw in enumerate(raw_joints):
        jname = _req(raw, "name", f"joints[{i}]")
        where = f"joint '{jname}'"
        parent = _req(raw, "parent", where)
        child = _req(raw, "child", where)
        for ln in (parent, child):
            if ln not in link_names:
                raise ModelValidationError(f"{where}: unknown link '{ln}'")
        axis = np.asarray(_req(raw, "axis", where), dtype=float)
        if axis.shape != (3,):
            raise ModelValidationError(f"{where}: axis must be a 3-vector")
        norm = float(np.linalg.norm(axis))
        if norm < 1e-9:
            raise ModelValidationError(f"{where}: axis has zero length")
        axis = axis / norm
        lim = raw.get("limits", {})
        limits = JointLimits(
            lower=float(lim.get("lower", -math.pi)),
            upper=float(lim.get("upper", math.pi)),
            max_velocity=float(lim.get("velocity", 1.0)),
        )
        if limits.lower > limits.upper:
            raise ModelValidationError(f"{where}: lower limit exceeds upper limit")
        if limits.max_velocity <= 0:
            raise ModelValidationError(f"{where}: velocity limit must be positive")
        origin = _parse_origin(raw.get("origin"), where)
        joints.append(JointSpec(jname, parent, child, origin, axis, limits))

    # serial chain: each joint hangs off the previous joint's child
    base = joints[0].parent_link
    expected_parent = base
    seen = {base}
    for j in joints:
        if j.parent_link != expected_parent:
            raise ModelValidationError(
                f"joint '{j.name}': chain is not serial (parent '{j.parent_link}', expected '{expected_parent}')"
            )
        if j.child_link in seen:
            raise ModelValidationError(f"joint '{j.name}': link '{j.child_link}' reused (cycle or branch)")
        seen.add(j.child_link)
        expected_parent = j.child_link
    if seen != link_names:
        extra = sorted(link_names - seen)
        raise ModelValidationError(f"links not part of the chain: {extra}")

    return RobotModel(name=name, joints=tuple(joints), links=tuple(links), base_link=base)


def load_model_file(path) -> RobotModel:
    with open(path, "r", encoding="utf-8") as fh:
        return load_model(fh.read())


def _origin_to_dict(tf: RigidTransform) -> dict:
    # round-trippable xyz/rpy is not recoverable from a matrix in general,
    # so serialize the rotation explicitly when it is not the identity
    if np.allclose(tf.rotation, np.eye(3), atol=1e-15):
        return {"xyz": [float(v) for v in tf.translation], "rpy": [0.0, 0.0, 0.0]}
    R = tf.rotation
    pitch = -math.asin(max(-1.0, min(1.0, R[2, 0])))
    roll = math.atan2(R[2, 1], R[2, 2])
    yaw = math.atan2(R[1, 0], R[0, 0])
    return {"xyz": [float(v) for v in tf.translation], "rpy": [roll, pitch, yaw]}


def _collision_to_dict(prim) -> dict:
    if isinstance(prim, Box):
        return {
            "type": "box",
            "half_extents": [float(v) for v in prim.half_extents],
            "origin": _origin_to_dict(prim.origin),
        }
    if isinstance(prim, Cylinder):
        return {
            "type": "cylinder",
            "radius": float(prim.radius),
            "length": float(prim.length),
            "origin": _origin_to_dict(prim.origin),
        }
    if isinstance(prim, Hull):
        return {"type": "hull", "vertices": [[float(v) for v in row] for row in prim.vertices]}
    raise TypeError(f"unknown primitive {type(prim)!r}")


def model_to_document(model: RobotModel) -> dict:
    """Serialize a model back to the document schema (round-trippable)."""
    return {
        "name": model.name,
        "links": [
            {"name": l.name, "collision": _collision_to_dict(l.collision), **({"visual": l.visual} if l.visual else {})}
            for l in model.links
        ],
        "joints": [
            {
                "name": j.name,
                "parent": j.parent_link,
                "child": j.child_link,
                "origin": _origin_to_dict(j.origin),
                "axis": [float(v) for v in j.axis],
                "limits": {
                    "lower": j.limits.lower,
                    "upper": j.limits.upper,
                    "velocity": j.limits.max_velocity,
                },
            }
            for j in model.joints
        ],
    }


# --- kinematics ---


def forward_kinematics(model: RobotModel, q, base: Optional[RigidTransform] = None) -> list:
    """World pose of every link, base link first.

    pose[i+1] = pose[i] o origin[i] o rotation(axis[i], q[i]) for joint i.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (model.joint_count,):
        raise ValueError(f"expected {model.joint_count} joint angles, got {q.shape}")
    pose = base if base is not None else RigidTransform.identity()
    poses = [pose]
    for i, j in enumerate(model.joints):
        pose = pose @ j.origin @ RigidTransform(rotation_about_axis(j.axis, q[i]), np.zeros(3))
        poses.append(pose)
    return poses


def joint_frames(model: RobotModel, q, base: Optional[RigidTransform] = None) -> list:
    """Per-joint (origin point, world axis) pairs, one forward pass."""
    q = np.asarray(q, dtype=float)
    if q.shape != (model.joint_count,):
        raise ValueError(f"expected {model.joint_count} joint angles, got {q.shape}")
    R = base.rotation.copy() if base is not None else np.eye(3)
    t = base.translation.copy() if base is not None else np.zeros(3)
    out = []
    for i, j in enumerate(model.joints):
        t = R @ j.origin.translation + t
        R = R @ j.origin.rotation
        out.append((t.copy(), R @ j.axis))
        R = R @ rotation_about_axis(j.axis, q[i])
    return out


def joint_world_frame(model: RobotModel, q, k: int, base: Optional[RigidTransform] = None):
    """(origin point, unit axis, frame) of joint k in the world frame."""
    if not 0 <= k < model.joint_count:
        raise IndexError(f"joint index {k} out of range for {model.joint_count} joints")
    poses = forward_kinematics(model, q, base)
    frame = poses[k + 1]
    axis = frame.rotation @ model.joints[k].axis
    return frame.translation.copy(), axis, frame


# --- collision zones ---


def zone_distance(model: RobotModel, q, k: int, point, base: Optional[RigidTransform] = None) -> float:
    """Distance from a world point to joint k's zone primitive (child link); 0 inside."""
    if not 0 <= k < model.joint_count:
        raise IndexError(f"joint index {k} out of range for {model.joint_count} joints")
    poses = forward_kinematics(model, q, base)
    link_pose = poses[k + 1]
    prim = model.link(model.joints[k].child_link).collision
    local = (link_pose @ prim.origin).inverse().apply(np.asarray(point, dtype=float))
    return prim.distance(local)


def zone_contains(model: RobotModel, q, k: int, point, margin: float, base: Optional[RigidTransform] = None) -> bool:
    """True iff the point lies within `margin` of joint k's zone primitive."""
    if margin < 0:
        raise ValueError("margin must be non-negative")
    return zone_distance(model, q, k, point, base) <= margin


def active_zone(model: RobotModel, q, point, margin: float, base: Optional[RigidTransform] = None) -> Optional[int]:
    """Highest joint index whose zone contains the point (most distal wins)."""
    if margin < 0:
        raise ValueError("margin must be non-negative")
    poses = forward_kinematics(model, q, base)
    point = np.asarray(point, dtype=float)
    for k in range(model.joint_count - 1, -1, -1):
        prim = model.link(model.joints[k].child_link).collision
        local = (poses[k + 1] @ prim.origin).inverse().apply(point)
        if prim.distance(local) <= margin:
            return k
    return None
