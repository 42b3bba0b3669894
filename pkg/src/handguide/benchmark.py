"""Registration benchmark over randomized synthetic scenes.

Each scenario pairs a registration method with a scene/sampling preset; each
trial draws a fresh robot pose, base placement, scene noise, and perturbed
seed, runs the full pipeline, and records the closest-point RMS. Summaries
mirror the min/max/mean/std table layout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import RigidTransform, rotation_about_axis, rotation_angle, unit
from .model import RobotModel
from .registration import (
    CongruentParams,
    IcpParams,
    RegistrationError,
    register_pipeline,
)
from .simcontrol import SceneSpec, synth_scene

__all__ = [
    "ScenarioSpec",
    "TrialRecord",
    "BenchmarkStats",
    "default_scenarios",
    "run_benchmark",
    "format_table",
    "write_records",
    "clutter_comparison",
]


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    method: str                  # "icp" | "congruent"
    preset: str                  # "big" | "small"
    noise_sigma: float = 0.003
    adjacent_table: bool = False
    table_gap: float = 0.0
    seed_offset: float = 0.08    # max seed translation perturbation (m)
    seed_angle: float = math.radians(8.0)
    scene_samples: Optional[int] = None   # preset override, mainly for tests
    model_samples: Optional[int] = None


@dataclass(frozen=True)
class TrialRecord:
    scenario: str
    trial: int
    seed: int
    ok: bool
    converged: bool = False
    rms: float = float("nan")
    pose_error_m: float = float("nan")
    pose_error_deg: float = float("nan")
    error: str = ""

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "trial": self.trial,
            "seed": self.seed,
            "ok": self.ok,
            "converged": self.converged,
            "rms": None if math.isnan(self.rms) else self.rms,
            "pose_error_m": None if math.isnan(self.pose_error_m) else self.pose_error_m,
            "pose_error_deg": None if math.isnan(self.pose_error_deg) else self.pose_error_deg,
            "error": self.error,
        }


@dataclass(frozen=True)
class BenchmarkStats:
    scenario: str
    trials: int
    failures: int
    rms_min: float
    rms_max: float
    rms_mean: float
    rms_std: float


def default_scenarios(noise_sigma: float = 0.003, scene_samples=None, model_samples=None) -> list:
    return [
        ScenarioSpec("icp-big", "icp", "big", noise_sigma, scene_samples=scene_samples, model_samples=model_samples),
        ScenarioSpec("icp-small", "icp", "small", noise_sigma, scene_samples=scene_samples, model_samples=model_samples),
        ScenarioSpec("congruent-big", "congruent", "big", noise_sigma, scene_samples=scene_samples, model_samples=model_samples),
        ScenarioSpec("congruent-small", "congruent", "small", noise_sigma, scene_samples=scene_samples, model_samples=model_samples),
    ]


def random_configuration(model: RobotModel, rng: np.random.Generator, span: float = 0.4) -> np.ndarray:
    """Random in-limits configuration, kept away from the extremes."""
    q = np.empty(model.joint_count)
    for i, j in enumerate(model.joints):
        lo, hi = j.limits.lower, j.limits.upper
        mid = (lo + hi) / 2.0
        half = (hi - lo) / 2.0 * span
        q[i] = rng.uniform(mid - half, mid + half)
    return q


def perturbed_pose(
    truth: RigidTransform, rng: np.random.Generator, max_offset: float, max_angle: float
) -> RigidTransform:
    axis = unit(rng.normal(size=3))
    angle = rng.uniform(-max_angle, max_angle)
    offset = rng.normal(size=3)
    offset = offset / np.linalg.norm(offset) * rng.uniform(0.0, max_offset)
    wobble = RigidTransform(rotation_about_axis(axis, angle), offset)
    return wobble @ truth


def pose_errors(estimate: RigidTransform, truth: RigidTransform):
    dt = float(np.linalg.norm(estimate.translation - truth.translation))
    dr = math.degrees(rotation_angle(estimate.rotation @ truth.rotation.T))
    return dt, dr


def _run_trial(model: RobotModel, scenario: ScenarioSpec, seed: int) -> TrialRecord:
    rng = np.random.default_rng(seed)
    q = random_configuration(model, rng)
    yaw = rng.uniform(-math.pi, math.pi)
    base = RigidTransform(
        rotation_about_axis(np.array([0.0, 0.0, 1.0]), yaw),
        np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 0.0]),
    )
    spec = SceneSpec(
        base_pose=base,
        q=tuple(q),
        adjacent_table=scenario.adjacent_table,
        table_gap=scenario.table_gap,
        noise_sigma=scenario.noise_sigma,
        preset=scenario.preset,
        seed=int(rng.integers(2**31)),
        samples=scenario.scene_samples,
    )
    _, scene, truth = synth_scene(model, spec)
    seed_pose = perturbed_pose(truth, rng, scenario.seed_offset, scenario.seed_angle)

    icp_params = IcpParams(
        max_source_points=20_000 if scenario.preset == "big" else None,
        subset_seed=int(rng.integers(2**31)),
    )
    congruent_params = CongruentParams(seed=int(rng.integers(2**31)))
    try:
        result = register_pipeline(
            scene,
            model,
            q,
            seed_pose,
            method=scenario.method,
            preset=scenario.preset,
            icp_params=icp_params,
            congruent_params=congruent_params,
            model_samples=scenario.model_samples,
            sample_seed=int(rng.integers(2**31)),
        )
    except RegistrationError as exc:
        return TrialRecord(scenario.name, 0, seed, ok=False, error=f"{exc.stage}: {exc}")
    dt, dr = pose_errors(result.transform, truth)
    return TrialRecord(
        scenario.name,
        0,
        seed,
        ok=result.converged,
        converged=result.converged,
        rms=result.rms,
        pose_error_m=dt,
        pose_error_deg=dr,
        error="" if result.converged else "did not converge",
    )


def run_benchmark(model: RobotModel, scenarios, trials: int, seed: int = 0):
    """Run every scenario `trials` times; returns (stats, records).

    Failed trials (pipeline errors or non-convergence) are counted but
    excluded from the rms statistics. Deterministic for a fixed master seed.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    stats = []
    records = []
    for si, scenario in enumerate(scenarios):
        ok_rms = []
        failures = 0
        for ti in range(trials):
            child = int(np.random.SeedSequence(seed, spawn_key=(si, ti)).generate_state(1)[0])
            rec = _run_trial(model, scenario, child)
            rec = TrialRecord(**{**rec.__dict__, "trial": ti})
            records.append(rec)
            if rec.ok:
                ok_rms.append(rec.rms)
            else:
                failures += 1
        if ok_rms:
            arr = np.asarray(ok_rms)
            stats.append(
                BenchmarkStats(
                    scenario.name,
                    trials,
                    failures,
                    float(arr.min()),
                    float(arr.max()),
                    float(arr.mean()),
                    float(arr.std()),
                )
            )
        else:
            nan = float("nan")
            stats.append(BenchmarkStats(scenario.name, trials, failures, nan, nan, nan, nan))
    return stats, records


def format_table(stats) -> str:
    header = f"{'Algorithm':<16} {'Min':>9} {'Max':>9} {'Mean':>9} {'Std':>9} {'Trials':>7} {'Failed':>7}"
    lines = [header, "-" * len(header)]
    for s in stats:
        def fmt(v):
            return "      nan" if math.isnan(v) else f"{v:9.5f}"
        lines.append(
            f"{s.scenario:<16} {fmt(s.rms_min)} {fmt(s.rms_max)} {fmt(s.rms_mean)} {fmt(s.rms_std)}"
            f" {s.trials:>7d} {s.failures:>7d}"
        )
    return "\n".join(lines) + "\n"


def write_records(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict()) + "\n")


def clutter_comparison(
    model: RobotModel,
    seeds,
    noise_sigma: float = 0.003,
    preset: str = "small",
    success_m: float = 0.05,
    success_deg: float = 5.0,
    scene_samples: Optional[int] = None,
    num_bases: int = 60,
):
    """Paired congruent-method runs on segmented vs table-touching scenes.

    Returns (segmented success rate, cluttered success rate, records); a
    success is a converged run with pose error under the given thresholds.
    The adjacent table cannot be segmented away, which is exactly the
    situation where a global congruent search loses ground.
    """
    seeds = list(seeds)
    records = []
    hits = {False: 0, True: 0}
    for seed in seeds:
        for cluttered in (False, True):
            rng = np.random.default_rng(seed)
            q = random_configuration(model, rng)
            base = RigidTransform(
                rotation_about_axis(np.array([0.0, 0.0, 1.0]), rng.uniform(-math.pi, math.pi)),
                np.array([rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 0.0]),
            )
            spec = SceneSpec(
                base_pose=base,
                q=tuple(q),
                adjacent_table=cluttered,
                table_gap=0.0,
                noise_sigma=noise_sigma,
                preset=preset,
                seed=int(rng.integers(2**31)),
                samples=scene_samples,
            )
            _, scene, truth = synth_scene(model, spec)
            seed_pose = perturbed_pose(truth, rng, 0.08, math.radians(8.0))
            params = CongruentParams(seed=int(rng.integers(2**31)), num_bases=num_bases)
            try:
                result = register_pipeline(
                    scene, model, q, seed_pose, method="congruent", preset=preset,
                    congruent_params=params, model_samples=scene_samples,
                    sample_seed=int(rng.integers(2**31)),
                )
                dt, dr = pose_errors(result.transform, truth)
                success = result.converged and dt < success_m and dr < success_deg
            except RegistrationError as exc:
                dt = dr = float("nan")
                success = False
                result = None
            hits[cluttered] += int(success)
            records.append(
                {
                    "seed": int(seed),
                    "cluttered": cluttered,
                    "success": success,
                    "pose_error_m": None if math.isnan(dt) else dt,
                    "pose_error_deg": None if math.isnan(dr) else dr,
                    "rms": None if result is None else result.rms,
                    "lcp": None if result is None else result.lcp,
                }
            )
    n = len(seeds) or 1
    return hits[False] / n, hits[True] / n, records
