"""HTTP + WebSocket session service for live hand-guidance steering.

One session owns a robot model, a base pose (manual or registered), a
guidance state, and an interpolating controller. Hand samples stream in
(request/response or WebSocket) and consistent state snapshots stream out.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, UploadFile, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse

from .cloud import PointCloud, _load_ply
from .geometry import RigidTransform
from .guidance import GuidanceConfig, GuidanceState, HandSample, StreamOrderError, session_step
from .model import ModelError, RobotModel, load_model, model_to_document
from .registration import RegistrationError, register_pipeline
from .simcontrol import ControllerState, MotionLimits, SceneSpec, controller_tick, synth_scene

__all__ = ["create_app", "app"]

CONTROLLER_DT = 1.0 / 250.0


@dataclass
class Session:
    id: str
    model: RobotModel
    document: dict
    config: GuidanceConfig = field(default_factory=GuidanceConfig)
    base_pose: Optional[RigidTransform] = None
    guidance: GuidanceState = None  # set in __post_init__
    controller: ControllerState = None
    limits: MotionLimits = None
    clock: Optional[float] = None
    last_residual: float = 0.0
    lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self):
        n = self.model.joint_count
        self.guidance = GuidanceState.initial(n)
        self.controller = ControllerState.at(np.zeros(n))
        self.limits = MotionLimits.from_model(self.model)

    def state_message(self) -> dict:
        return {
            "t": self.clock if self.clock is not None else 0.0,
            "q": [float(v) for v in self.controller.position],
            "qdot": [float(v) for v in self.controller.velocity],
            "active_zone": self.guidance.zone,
            "residual": float(self.last_residual),
            "sensitivity": float(self.config.sensitivity),
        }

    def handle_sample(self, payload: dict) -> dict:
        """Apply one hand sample and return the resulting state snapshot."""
        with self.lock:
            if self.base_pose is None:
                raise BasePoseUnset("base pose not set; place the robot or run registration first")
            try:
                t = float(payload["t"])
                position = np.asarray(payload["position"], dtype=float).reshape(3)
                tracked = bool(payload.get("tracked", True))
                frame = payload.get("frame", "world")
            except (KeyError, TypeError, ValueError) as exc:
                raise BadSample(f"malformed hand sample: {exc}") from exc
            if frame == "world":
                position = self.base_pose.inverse().apply(position)
            elif frame != "base":
                raise BadSample(f"unknown frame '{frame}' (use 'world' or 'base')")

            sample = HandSample(t=t, position=position, tracked=tracked)
            self.guidance, update = session_step(self.guidance, self.model, sample, self.config)
            if update is not None:
                self.last_residual = float(np.linalg.norm(update.residual))
            if self.clock is None:
                self.clock = t
            self.controller = self.controller.with_target(self.guidance.q)
            while self.clock + CONTROLLER_DT <= t + 1e-12:
                self.controller = controller_tick(self.controller, self.limits, CONTROLLER_DT)
                self.clock += CONTROLLER_DT
            return self.state_message()


class BasePoseUnset(RuntimeError):
    pass


class BadSample(ValueError):
    pass


def create_app() -> FastAPI:
    app = FastAPI(title="handguide", version="0.1.0")
    sessions: dict[str, Session] = {}

    def get_session(sid: str) -> Session:
        try:
            return sessions[sid]
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session '{sid}'")

    @app.post("/sessions", status_code=201)
    def create_session(document: dict):
        try:
            model = load_model(json.dumps(document))
        except ModelError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        sid = uuid.uuid4().hex[:12]
        sessions[sid] = Session(id=sid, model=model, document=document)
        return {
            "session_id": sid,
            "joint_count": model.joint_count,
            "joint_names": [j.name for j in model.joints],
        }

    @app.get("/sessions/{sid}/model")
    def get_model(sid: str):
        return model_to_document(get_session(sid).model)

    @app.get("/sessions/{sid}/state")
    def get_state(sid: str):
        session = get_session(sid)
        with session.lock:
            return session.state_message()

    @app.post("/sessions/{sid}/base-pose")
    def set_base_pose(sid: str, pose: dict):
        session = get_session(sid)
        try:
            transform = RigidTransform.from_dict(pose)
            transform.validate(1e-6)
        except (KeyError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"bad pose: {exc}")
        with session.lock:
            session.base_pose = transform
            return {"base_pose": transform.to_dict(), **session.state_message()}

    @app.post("/sessions/{sid}/sensitivity")
    def set_sensitivity(sid: str, body: dict):
        session = get_session(sid)
        try:
            s = float(body["sensitivity"])
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"bad sensitivity: {exc}")
        if s <= 0:
            raise HTTPException(status_code=422, detail="sensitivity must be positive")
        with session.lock:
            session.config = replace(session.config, sensitivity=s)
            return {
                "sensitivity": session.config.sensitivity,
                "residual_tol": session.config.residual_tol,
                "max_step_angle": session.config.max_step_angle,
                "limit_policy": session.config.limit_policy,
                "zone_margin": session.config.zone_margin,
            }

    @app.post("/sessions/{sid}/register")
    async def run_registration(
        sid: str,
        seed_pose: str = Form(...),
        method: str = Form("icp"),
        preset: str = Form("small"),
        model_samples: Optional[int] = Form(None),
        scene_spec: Optional[str] = Form(None),
        cloud: Optional[UploadFile] = File(None),
    ):
        session = get_session(sid)
        try:
            seed = RigidTransform.from_dict(json.loads(seed_pose))
        except (ValueError, KeyError) as exc:
            raise HTTPException(status_code=422, detail=f"bad seed pose: {exc}")

        if cloud is not None:
            text = (await cloud.read()).decode("utf-8")
            name = (cloud.filename or "").lower()
            try:
                if name.endswith(".xyz"):
                    rows = [[float(v) for v in ln.split()[:3]] for ln in text.splitlines() if ln.strip()]
                    scene = PointCloud(np.asarray(rows, dtype=float).reshape(-1, 3))
                else:
                    scene = _load_ply(text)
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=f"bad cloud file: {exc}")
        elif scene_spec is not None:
            try:
                spec = SceneSpec.from_dict(json.loads(scene_spec))
            except (ValueError, KeyError) as exc:
                raise HTTPException(status_code=422, detail=f"bad scene spec: {exc}")
            _, scene, _ = synth_scene(session.model, spec)
        else:
            raise HTTPException(status_code=422, detail="provide a cloud file or a scene_spec")

        with session.lock:
            q = session.guidance.q.copy()
        try:
            result = register_pipeline(
                scene, session.model, q, seed, method=method, preset=preset,
                model_samples=model_samples,
            )
        except RegistrationError as exc:
            raise HTTPException(status_code=409, detail=f"registration failed at stage '{exc.stage}': {exc}")
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        with session.lock:
            session.base_pose = result.transform
        return result.to_dict()

    @app.post("/sessions/{sid}/hand")
    def post_hand(sid: str, sample: dict):
        session = get_session(sid)
        try:
            return session.handle_sample(sample)
        except BasePoseUnset as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except StreamOrderError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except BadSample as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.websocket("/sessions/{sid}/stream")
    async def stream(ws: WebSocket, sid: str):
        await ws.accept()
        session = sessions.get(sid)
        if session is None:
            await ws.send_json({"error": f"unknown session '{sid}'"})
            await ws.close(code=4004)
            return
        try:
            while True:
                payload = await ws.receive_json()
                try:
                    state = session.handle_sample(payload)
                except (BasePoseUnset, StreamOrderError, BadSample) as exc:
                    await ws.send_json({"error": str(exc)})
                    continue
                await ws.send_json(state)
        except WebSocketDisconnect:
            return

    @app.get("/", response_class=HTMLResponse)
    def index():
        return (
            "<html><body><h1>handguide service</h1>"
            "<p>POST /sessions with a robot document to begin.</p></body></html>"
        )

    return app


app = create_app()
