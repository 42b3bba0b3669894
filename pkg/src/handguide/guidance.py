"""Hand-displacement decomposition into per-joint angle updates.

Each joint sees the hand displacement projected onto the plane through the
joint origin with the rotation axis as normal. The in-plane component is
converted to a signed rotation, limited and checked against joint limits,
and the unrealized remainder is handed to the next joint toward the base.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .model import JointLimits, RobotModel, active_zone, joint_frames

__all__ = [
    "GuidanceConfig",
    "HandSample",
    "GuidanceUpdate",
    "GuidanceState",
    "StreamOrderError",
    "DegenerateRadiusError",
    "project_onto_plane",
    "signed_angle_about_axis",
    "JointStep",
    "joint_step",
    "decompose",
    "session_step",
    "load_hand_trajectory",
    "save_hand_trajectory",
]


class StreamOrderError(ValueError):
    """Hand samples must arrive with strictly increasing timestamps."""


class DegenerateRadiusError(ValueError):
    """The rotation radius is too small to define an angle."""


@dataclass(frozen=True)
class GuidanceConfig:
    sensitivity: float = 1.0          # scale on hand displacement, > 0
    residual_tol: float = 1e-4        # stop when the residual is this short (m)
    axis_tol: float = 1e-6            # hand-on-axis skip radius (m)
    max_step_angle: float = 0.1       # per-frame angle cap (rad)
    limit_policy: str = "reject"      # "reject" or "clamp"
    zone_margin: float = 0.05         # zone inflation around link primitives (m)

    def __post_init__(self):
        if self.sensitivity <= 0:
            raise ValueError("sensitivity must be positive")
        if self.residual_tol <= 0 or self.axis_tol <= 0 or self.max_step_angle <= 0:
            raise ValueError("tolerances must be positive")
        if self.limit_policy not in ("reject", "clamp"):
            raise ValueError("limit_policy must be 'reject' or 'clamp'")
        if self.zone_margin < 0:
            raise ValueError("zone_margin must be non-negative")


@dataclass(frozen=True)
class HandSample:
    t: float
    position: np.ndarray
    tracked: bool = True

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))


@dataclass(frozen=True)
class GuidanceUpdate:
    dq: np.ndarray                  # per-joint angle deltas, zeros where untouched
    residual: np.ndarray            # unachieved hand displacement (m)
    joints_used: tuple              # joint indices visited, distal to proximal


@dataclass(frozen=True)
class GuidanceState:
    """Idle (zone None) or engaged with a zone and the previous hand position."""

    q: np.ndarray
    zone: Optional[int] = None
    last_position: Optional[np.ndarray] = None
    last_t: Optional[float] = None

    @staticmethod
    def initial(joint_count: int) -> "GuidanceState":
        return GuidanceState(q=np.zeros(joint_count))


def project_onto_plane(v, n) -> np.ndarray:
    """Remove the component of v along the unit normal n: v - (v.n) n."""
    v = np.asarray(v, dtype=float)
    n = np.asarray(n, dtype=float)
    return v - (v @ n) * n


def signed_angle_about_axis(r, t, a, radius_tol: float = 1e-6) -> float:
    """Signed angle that rotates direction r onto direction t about unit axis a.

    r and t are expected to lie in the plane normal to a; the result is in
    (-pi, pi].
    """
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    a = np.asarray(a, dtype=float)
    if float(np.linalg.norm(r)) <= radius_tol:
        raise DegenerateRadiusError("rotation radius below tolerance")
    angle = math.atan2(float(np.cross(r, t) @ a), float(r @ t))
    if angle <= -math.pi:
        angle = math.pi
    return angle


class JointStep(NamedTuple):
    angle: float                # applied joint delta (rad)
    hand_rotated: np.ndarray    # previous hand position rotated by `angle`
    residual: np.ndarray        # hand_cur - hand_rotated


def joint_step(
    origin,
    axis,
    theta: float,
    limits: JointLimits,
    hand_prev,
    hand_cur,
    config: GuidanceConfig,
) -> JointStep:
    """One joint's share of the hand displacement.

    Projects the previous hand position and the displacement into the joint
    plane, rotates by the (capped, limit-checked) signed angle, and returns
    the remaining displacement. A hand on the axis contributes nothing.
    """
    origin = np.asarray(origin, dtype=float)
    axis = np.asarray(axis, dtype=float)
    hand_prev = np.asarray(hand_prev, dtype=float)
    hand_cur = np.asarray(hand_cur, dtype=float)

    u = hand_prev - origin
    r = u - (u @ axis) * axis
    r_norm = math.sqrt(float(r @ r))
    if r_norm <= config.axis_tol:
        return JointStep(0.0, hand_prev, hand_cur - hand_prev)

    d = hand_cur - hand_prev
    t = r + (d - (d @ axis) * axis)
    desired = math.atan2(float(np.cross(r, t) @ axis), float(r @ t))
    if desired > config.max_step_angle:
        desired = config.max_step_angle
    elif desired < -config.max_step_angle:
        desired = -config.max_step_angle

    target = theta + desired
    if config.limit_policy == "reject":
        applied = desired if limits.contains(target) else 0.0
    else:
        applied = limits.clamp(target) - theta

    if applied == 0.0:
        return JointStep(0.0, hand_prev, hand_cur - hand_prev)

    c = math.cos(applied)
    s = math.sin(applied)
    rotated = origin + c * u + s * np.cross(axis, u) + (1.0 - c) * (axis @ u) * axis
    return JointStep(applied, rotated, hand_cur - rotated)


def decompose(
    model: RobotModel,
    q,
    hand_prev,
    hand_cur,
    start_joint: int,
    config: GuidanceConfig = GuidanceConfig(),
) -> GuidanceUpdate:
    """Split a hand displacement over joints start_joint, ..., 0.

    hand_cur must already carry any sensitivity scaling. Each visited joint
    rotates the tracked previous position toward the current one; iteration
    stops early once the residual drops below config.residual_tol.
    """
    q = np.asarray(q, dtype=float)
    if not 0 <= start_joint < model.joint_count:
        raise IndexError(f"start joint {start_joint} out of range")
    frames = joint_frames(model, q)
    dq = np.zeros(model.joint_count)
    prev = np.asarray(hand_prev, dtype=float)
    cur = np.asarray(hand_cur, dtype=float)
    residual = cur - prev
    used = []
    for k in range(start_joint, -1, -1):
        if math.sqrt(float(residual @ residual)) < config.residual_tol:
            break
        origin_k, axis_k = frames[k]
        step = joint_step(origin_k, axis_k, float(q[k]), model.joints[k].limits, prev, cur, config)
        dq[k] = step.angle
        prev = step.hand_rotated
        residual = step.residual
        used.append(k)
    return GuidanceUpdate(dq=dq, residual=residual, joints_used=tuple(used))


def session_step(
    state: GuidanceState,
    model: RobotModel,
    sample: HandSample,
    config: GuidanceConfig = GuidanceConfig(),
):
    """Advance one hand sample; returns (new state, update or None).

    The first sample inside a zone (or after a zone switch) only initializes
    tracking and never commands motion.
    """
    if state.last_t is not None and sample.t <= state.last_t:
        raise StreamOrderError(f"sample at t={sample.t} not after t={state.last_t}")

    if not sample.tracked:
        return replace(state, zone=None, last_position=None, last_t=sample.t), None

    zone = active_zone(model, state.q, sample.position, config.zone_margin)
    if zone is None:
        return replace(state, zone=None, last_position=None, last_t=sample.t), None
    if state.zone is None or zone != state.zone or state.last_position is None:
        # entry frame (or zone switch): remember the position, move nothing
        return replace(state, zone=zone, last_position=sample.position.copy(), last_t=sample.t), None

    scaled = state.last_position + config.sensitivity * (sample.position - state.last_position)
    update = decompose(model, state.q, state.last_position, scaled, zone, config)
    return (
        replace(
            state,
            q=state.q + update.dq,
            zone=zone,
            last_position=sample.position.copy(),
            last_t=sample.t,
        ),
        update,
    )


# --- replay file format: one JSON record {t, x, y, z, tracked} per line ---


def load_hand_trajectory(path) -> list:
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            samples.append(
                HandSample(
                    t=float(rec["t"]),
                    position=(float(rec["x"]), float(rec["y"]), float(rec["z"])),
                    tracked=bool(rec.get("tracked", True)),
                )
            )
    return samples


def save_hand_trajectory(samples, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(
                json.dumps(
                    {
                        "t": float(s.t),
                        "x": float(s.position[0]),
                        "y": float(s.position[1]),
                        "z": float(s.position[2]),
                        "tracked": bool(s.tracked),
                    }
                )
                + "\n"
            )
