"""Command-line entry points: register, bench, synth, replay, serve.

Exit codes: 0 success, 1 algorithmic failure (non-convergence, registration
error), 2 usage or I/O problems.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import default_scenarios, format_table, run_benchmark, write_records
from .cloud import load_cloud, save_cloud, save_mesh_obj
from .geometry import RigidTransform
from .guidance import GuidanceConfig
from .model import ModelError, load_model_file
from .registration import RegistrationError, register_pipeline
from .simcontrol import SceneSpec, replay, synth_scene, write_joint_trajectory

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _parse_q(text: str, joint_count: int) -> np.ndarray:
    if not text:
        return np.zeros(joint_count)
    values = [float(v) for v in text.replace(",", " ").split()]
    if len(values) != joint_count:
        raise ValueError(f"expected {joint_count} joint angles, got {len(values)}")
    return np.asarray(values)


def cmd_register(args) -> int:
    model = load_model_file(args.model)
    scene = load_cloud(args.scene)
    seed_pose = RigidTransform.from_xyz_rpy(args.seed_pose[:3], args.seed_pose[3:])
    q = _parse_q(args.q, model.joint_count)
    try:
        result = register_pipeline(
            scene, model, q, seed_pose, method=args.method, preset=args.preset,
            model_samples=args.samples, sample_seed=args.seed,
        )
    except RegistrationError as exc:
        print(f"registration failed at stage '{exc.stage}': {exc}", file=sys.stderr)
        return EXIT_FAILURE
    payload = result.to_dict()
    text = json.dumps(payload, indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK if result.converged else EXIT_FAILURE


def cmd_bench(args) -> int:
    model = load_model_file(args.model)
    names = [n.strip() for n in args.scenarios.split(",")] if args.scenarios else None
    scenarios = default_scenarios(
        noise_sigma=args.noise, scene_samples=args.samples, model_samples=args.samples
    )
    if names:
        scenarios = [s for s in scenarios if s.name in names]
        if not scenarios:
            print(f"no scenarios match '{args.scenarios}'", file=sys.stderr)
            return EXIT_USAGE
    stats, records = run_benchmark(model, scenarios, trials=args.trials, seed=args.seed)
    table = format_table(stats)
    print(table, end="")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.txt").write_text(table, encoding="utf-8")
    write_records(records, out / "records.jsonl")
    return EXIT_OK


def cmd_synth(args) -> int:
    model = load_model_file(args.model)
    spec_doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    if args.seed is not None:
        spec_doc["seed"] = args.seed
    spec = SceneSpec.from_dict(spec_doc)
    mesh, cloud, truth = synth_scene(model, spec)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    save_mesh_obj(mesh, prefix.with_suffix(".obj"))
    save_cloud(cloud, prefix.with_suffix(".ply"))
    meta = {
        "truth_pose": truth.to_dict(),
        "points": len(cloud),
        "triangles": int(len(mesh.triangles)),
        "preset": spec.preset,
        "noise_sigma": spec.noise_sigma,
    }
    prefix.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(meta, indent=2))
    return EXIT_OK


def cmd_replay(args) -> int:
    model = load_model_file(args.model)
    config = GuidanceConfig(sensitivity=args.sensitivity, max_step_angle=args.max_step_angle)
    records = replay(model, args.trajectory, config=config, dt=args.dt)
    write_joint_trajectory(records, args.out)
    if records:
        final = " ".join(f"{v:.6f}" for v in records[-1][1])
        print(f"{len(records)} ticks, final q: {final}")
    else:
        print("0 ticks")
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        probe.bind((args.host, args.port))
        probe.close()
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="handguide", description=__doc__)
    parser.add_argument("--version", action="version", version=f"handguide {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="register a robot model into a scene cloud")
    p.add_argument("--model", required=True, help="robot description JSON")
    p.add_argument("--scene", required=True, help="scene cloud (.ply or .xyz)")
    p.add_argument("--seed-pose", type=float, nargs=6, required=True,
                   metavar=("X", "Y", "Z", "ROLL", "PITCH", "YAW"),
                   help="operator seed pose guess")
    p.add_argument("--method", choices=("icp", "congruent"), default="icp")
    p.add_argument("--preset", choices=("big", "small"), default="small")
    p.add_argument("--q", default="", help="comma-separated joint angles (default zeros)")
    p.add_argument("--samples", type=int, default=None, help="model cloud sample override")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="also write the result JSON here")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("bench", help="randomized registration benchmark")
    p.add_argument("--model", required=True)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.003, help="scene noise sigma (m)")
    p.add_argument("--scenarios", default="", help="comma-separated subset of scenario names")
    p.add_argument("--samples", type=int, default=None, help="sample-count override for quick runs")
    p.add_argument("--out", required=True, help="output directory (table.txt, records.jsonl)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="generate a synthetic scene mesh + cloud")
    p.add_argument("--model", required=True)
    p.add_argument("--spec", required=True, help="scene spec JSON file")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.add_argument("--out", required=True, help="output prefix (.obj/.ply/.json)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("replay", help="replay a hand trajectory through guidance + control")
    p.add_argument("--model", required=True)
    p.add_argument("--trajectory", required=True, help="hand-sample JSONL file")
    p.add_argument("--dt", type=float, default=0.004, help="controller tick (s)")
    p.add_argument("--sensitivity", type=float, default=1.0)
    p.add_argument("--max-step-angle", type=float, default=0.1, help="per-frame joint step cap (rad)")
    p.add_argument("--out", required=True, help="joint trajectory JSONL output")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="run the session service")
    p.add_argument("--port", type=int, default=8734)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
