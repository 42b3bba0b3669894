"""Simulation stand-ins for the physical system.

An online per-joint trapezoidal interpolator tracks streamed joint targets
under velocity/acceleration limits, and a synthetic scene generator replaces
the AR headset's spatial mesh with tessellated, optionally noisy geometry.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .cloud import PointCloud, TriangleMesh, sample_mesh
from .geometry import RigidTransform
from .guidance import GuidanceConfig, GuidanceState, HandSample, load_hand_trajectory, session_step
from .meshing import box_mesh, floor_mesh, merge_meshes, robot_mesh
from .model import RobotModel

__all__ = [
    "MotionLimits",
    "ControllerState",
    "controller_tick",
    "ScenePreset",
    "SCENE_PRESETS",
    "SceneSpec",
    "synth_scene",
    "replay",
    "write_joint_trajectory",
]


@dataclass(frozen=True)
class MotionLimits:
    max_velocity: np.ndarray      # rad/s per joint
    max_acceleration: np.ndarray  # rad/s^2 per joint

    def __post_init__(self):
        v = np.asarray(self.max_velocity, dtype=float).reshape(-1)
        a = np.asarray(self.max_acceleration, dtype=float).reshape(-1)
        if np.any(v <= 0) or np.any(a <= 0):
            raise ValueError("motion limits must be positive")
        object.__setattr__(self, "max_velocity", v)
        object.__setattr__(self, "max_acceleration", a)

    @staticmethod
    def from_model(model: RobotModel, max_acceleration: float = 2.0) -> "MotionLimits":
        v = np.array([j.limits.max_velocity for j in model.joints])
        return MotionLimits(v, np.full(model.joint_count, max_acceleration))


@dataclass(frozen=True)
class ControllerState:
    position: np.ndarray
    velocity: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        for name in ("position", "velocity", "target"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))

    @staticmethod
    def at(q) -> "ControllerState":
        q = np.asarray(q, dtype=float)
        return ControllerState(q.copy(), np.zeros_like(q), q.copy())

    def with_target(self, target) -> "ControllerState":
        return replace(self, target=np.asarray(target, dtype=float).copy())

    def settled(self, tol: float = 1e-9) -> bool:
        return bool(
            np.all(np.abs(self.target - self.position) <= tol)
            and np.all(np.abs(self.velocity) <= tol)
        )


def controller_tick(state: ControllerState, limits: MotionLimits, dt: float) -> ControllerState:
    """One interpolation step toward the target.

    Each joint follows the discrete-time trapezoid: accelerate at most
    max_acceleration per second toward the velocity that still allows
    stopping exactly on the target, capped at max_velocity. Once the target
    is a single-tick hop away at near-zero speed, the joint settles on it.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = state.position
    v = state.velocity
    tgt = state.target
    a = limits.max_acceleration
    vmax = limits.max_velocity

    err = tgt - x
    # largest speed from which a per-tick deceleration of a*dt still stops
    # within |err|: brake distance of v = k*a*dt over k ticks is
    # v^2/(2a) + v*dt/2
    brake = -a * dt / 2.0 + np.sqrt((a * dt / 2.0) ** 2 + 2.0 * a * np.abs(err))
    v_des = np.sign(err) * np.minimum(vmax, brake)
    dv = np.clip(v_des - v, -a * dt, a * dt)

    snap = (np.abs(err) <= 1.5 * a * dt * dt + 1e-15) & (np.abs(v) <= a * dt * (1 + 1e-12))
    v_new = np.where(snap, 0.0, v + dv)
    x_new = np.where(snap, tgt, x + v_new * dt)
    return ControllerState(x_new, v_new, tgt.copy())


# --- synthetic scenes ---


@dataclass(frozen=True)
class ScenePreset:
    samples: int
    robot_edge: float    # tessellation edge target on robot/table surfaces (m)
    clutter_edge: float  # tessellation edge target on the floor (m)


SCENE_PRESETS = {
    "big": ScenePreset(samples=256_000, robot_edge=0.015, clutter_edge=0.06),
    "small": ScenePreset(samples=16_000, robot_edge=0.10, clutter_edge=0.30),
}

TABLE_HALF = (0.40, 0.30, 0.36)  # a 0.8 x 0.6 m table, 0.72 m tall


@dataclass(frozen=True)
class SceneSpec:
    base_pose: RigidTransform = field(default_factory=RigidTransform.identity)
    q: tuple = ()
    floor: bool = False
    adjacent_table: bool = False
    table_gap: float = 0.0
    noise_sigma: float = 0.0
    preset: str = "small"
    seed: int = 0
    samples: Optional[int] = None      # override of the preset sample count
    robot_edge: Optional[float] = None  # override of the tessellation target

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.table_gap < 0:
            raise ValueError("table_gap must be non-negative")
        if self.preset not in SCENE_PRESETS:
            raise ValueError(f"unknown preset '{self.preset}'")

    @staticmethod
    def from_dict(d: dict) -> "SceneSpec":
        base = RigidTransform.from_dict(d["base_pose"]) if "base_pose" in d else RigidTransform.identity()
        return SceneSpec(
            base_pose=base,
            q=tuple(d.get("q", ())),
            floor=bool(d.get("floor", False)),
            adjacent_table=bool(d.get("adjacent_table", False)),
            table_gap=float(d.get("table_gap", 0.0)),
            noise_sigma=float(d.get("noise_sigma", 0.0)),
            preset=str(d.get("preset", "small")),
            seed=int(d.get("seed", 0)),
            samples=d.get("samples"),
            robot_edge=d.get("robot_edge"),
        )


def synth_scene(model: RobotModel, spec: SceneSpec):
    """Build (mesh, cloud, ground-truth base pose) for a synthetic scan.

    The posed robot primitives (plus optional floor and adjacent table) are
    tessellated at the preset's edge targets, vertices are perturbed with
    Gaussian noise, and the cloud is sampled area-uniformly at the preset's
    count. Deterministic for a fixed spec.
    """
    preset = SCENE_PRESETS[spec.preset]
    edge = spec.robot_edge if spec.robot_edge is not None else preset.robot_edge
    q = np.asarray(spec.q, dtype=float)
    parts = [robot_mesh(model, q, edge, base=spec.base_pose)]
    base_t = spec.base_pose.translation

    if spec.floor:
        parts.append(floor_mesh(base_t, extent=4.0, z=base_t[2], max_edge=preset.clutter_edge))
    if spec.adjacent_table:
        robot_max_x = float(parts[0].vertices[:, 0].max())
        center = np.array(
            [robot_max_x + spec.table_gap + TABLE_HALF[0], base_t[1], base_t[2] + TABLE_HALF[2]]
        )
        pose = RigidTransform(np.eye(3), center)
        parts.append(box_mesh(TABLE_HALF, pose, edge))

    mesh = merge_meshes(parts)
    rng = np.random.default_rng(spec.seed)
    vertices = mesh.vertices
    if spec.noise_sigma > 0:
        vertices = vertices + rng.normal(0.0, spec.noise_sigma, size=vertices.shape)
    mesh = TriangleMesh(vertices, mesh.triangles)
    n = spec.samples if spec.samples is not None else preset.samples
    cloud = sample_mesh(mesh, n, seed=int(rng.integers(2**63)))
    return mesh, cloud, spec.base_pose


# --- batch replay: guidance + controller over a recorded hand stream ---


def replay(
    model: RobotModel,
    trajectory,
    config: GuidanceConfig = GuidanceConfig(),
    dt: float = 0.004,
    max_acceleration: float = 2.0,
    settle_tol: float = 1e-7,
    max_settle_time: float = 10.0,
):
    """Drive the guidance session and controller over a hand-sample stream.

    `trajectory` is a path to a replay file or an iterable of HandSample.
    Returns (t, q) records at every controller tick, continuing after the
    last sample until the controller settles on its final target.
    """
    if isinstance(trajectory, (str,)) or hasattr(trajectory, "__fspath__"):
        samples = load_hand_trajectory(trajectory)
    else:
        samples = list(trajectory)

    records = []
    if not samples:
        return records

    limits = MotionLimits.from_model(model, max_acceleration)
    gstate = GuidanceState.initial(model.joint_count)
    cstate = ControllerState.at(np.zeros(model.joint_count))
    clock = samples[0].t

    for sample in samples:
        while clock + dt <= sample.t + 1e-12:
            cstate = controller_tick(cstate, limits, dt)
            clock += dt
            records.append((clock, cstate.position.copy()))
        gstate, _ = session_step(gstate, model, sample, config)
        cstate = cstate.with_target(gstate.q)

    waited = 0.0
    while waited < max_settle_time and not cstate.settled(settle_tol):
        cstate = controller_tick(cstate, limits, dt)
        clock += dt
        waited += dt
        records.append((clock, cstate.position.copy()))
    return records


def write_joint_trajectory(records, path) -> None:
    """Line-delimited {t, q} records."""
    with open(path, "w", encoding="utf-8") as fh:
        for t, q in records:
            fh.write(json.dumps({"t": float(t), "q": [float(v) for v in q]}) + "\n")
