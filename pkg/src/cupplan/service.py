"""HTTP + WebSocket session service: a thin layer exposing the planner and
the AR alignment stage to a browser client. The server owns every geometric
computation; clients only display what they are sent."""

from __future__ import annotations

import asyncio
import io
import struct
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from . import arsim, planner
from .drr import build_phantom, raycast_drr
from .errors import RotationLocked, SessionCommitted
from .geom import RigidTransform, compose
from .implant import AnglePair, CupPose
from .scene import (
    PRESETS,
    ScenePreset,
    bb_phantom_spec,
    default_app_frame,
    make_station,
)


class CreateSessionRequest(BaseModel):
    preset: str = "user-study-20deg"
    render_images: bool = True
    separation_deg: float | None = None
    mesh_resolution: int | None = None


class PoseRequest(BaseModel):
    translation_mm: list[float] | None = None
    rotation_axis: list[float] | None = None
    rotation_deg: float = 0.0
    absolute_q: list[float] | None = None
    absolute_t_mm: list[float] | None = None


class PresetRequest(BaseModel):
    enabled: bool = True
    inclination_deg: float | None = None
    anteversion_deg: float | None = None


@dataclass
class SessionRecord:
    id: str
    session: planner.PlanningSession
    preset_name: str
    xray_to_rgbd: RigidTransform
    created_at: float = field(default_factory=time.time)
    images_png: list[bytes] = field(default_factory=list)
    alignment: arsim.AlignmentState | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    deleted: bool = False
    sensor: arsim.SensorGrid = field(default_factory=lambda: arsim.SensorGrid(n_u=96, n_v=72))


def _http_error(status: int, code: str, message: str, field_path: str | None = None):
    payload = {"code": code, "message": message}
    if field_path:
        payload["field"] = field_path
    raise HTTPException(status_code=status, detail=payload)


def _angles_dict(a: AnglePair) -> dict:
    return {"inclination_deg": a.inclination_deg, "anteversion_deg": a.anteversion_deg}


def _contours_payload(contours) -> list:
    return [[poly.tolist() for poly in view] for view in contours]


def encode_cloud_frame(seq: int, frame: arsim.PointCloudFrame) -> bytes:
    pts = np.ascontiguousarray(frame.points, dtype="<f4")
    return struct.pack("<II", seq, len(pts)) + pts.tobytes()


class SessionStore:
    def __init__(self):
        self._records: dict[str, SessionRecord] = {}
        self._volumes: dict[str, object] = {}

    def get(self, session_id: str) -> SessionRecord:
        rec = self._records.get(session_id)
        if rec is None or rec.deleted:
            _http_error(404, "not_found", f"no session {session_id}")
        return rec

    def _volume(self, preset: ScenePreset):
        key = f"{preset.name}:{preset.volume_dims}:{preset.volume_spacing_mm}"
        if key not in self._volumes:
            app = default_app_frame(preset.geometry)
            spec = bb_phantom_spec(app)
            self._volumes[key] = build_phantom(
                spec, dims=preset.volume_dims, spacing=preset.volume_spacing_mm
            )
        return self._volumes[key]

    def create(self, req: CreateSessionRequest) -> SessionRecord:
        if req.preset not in PRESETS:
            _http_error(400, "invalid_spec", f"unknown preset {req.preset!r}", "preset")
        preset = PRESETS[req.preset]
        if req.separation_deg is not None:
            preset = preset.with_overrides(separation_deg=req.separation_deg)
        if req.mesh_resolution is not None:
            preset = preset.with_overrides(mesh_resolution=req.mesh_resolution)

        session = planner.build_session(
            preset.geometry,
            axis=preset.separation_axis,
            separation_deg=preset.separation_deg,
            cup_diameter_mm=preset.cup_diameter_mm,
            mesh_resolution=preset.mesh_resolution,
        )
        images: list[bytes] = []
        if req.render_images:
            vol = self._volume(preset)
            step = preset.volume_spacing_mm / 2
            for view in session.views:
                img = raycast_drr(vol, view.camera, step_mm=step)
                buf = io.BytesIO()
                from PIL import Image

                Image.fromarray(img.to_uint16()).save(buf, format="PNG")
                images.append(buf.getvalue())

        station = make_station(preset.geometry, preset.separation_axis, 0.0)
        xray_frame = session.views[0].camera.pose.to_frame
        xray_to_rgbd = station.rgbd_to_xray.invert().with_frames(
            xray_frame, f"rgbd@{station.station_id}"
        )
        rec = SessionRecord(
            id=uuid.uuid4().hex[:12],
            session=session,
            preset_name=preset.name,
            xray_to_rgbd=xray_to_rgbd,
            images_png=images,
        )
        self._records[rec.id] = rec
        return rec

    def delete(self, session_id: str) -> None:
        rec = self.get(session_id)
        rec.deleted = True
        del self._records[session_id]


def _session_payload(rec: SessionRecord) -> dict:
    s = rec.session
    return {
        "id": rec.id,
        "preset": rec.preset_name,
        "state": s.state,
        "preset_mode": s.preset_mode,
        "angles": _angles_dict(s.angles()),
        "ground_truth_available": s.ground_truth is not None,
        "views": [
            {
                "name": name,
                "camera": v.camera.to_json_dict(),
                "image_url": f"/sessions/{rec.id}/views/{name}.png",
            }
            for name, v in zip("ab", s.views)
        ],
    }


def _pose_response(rec: SessionRecord, update: planner.PoseUpdate) -> dict:
    s = rec.session
    payload = {
        "contours": _contours_payload(update.contours),
        "angles": _angles_dict(update.angles),
        "cup_pose": update.cup_pose.pose.to_json_dict(),
    }
    if s.ground_truth is not None:
        errs = planner.pose_errors(update.cup_pose, s.ground_truth, s.app_frame)
        payload["errors"] = {
            "translation_mm": errs.translation_mm,
            "inclination_deg": errs.inclination_deg,
            "anteversion_deg": errs.anteversion_deg,
        }
    return payload


def create_app() -> FastAPI:
    app = FastAPI(title="cupplan service")
    store = SessionStore()
    app.state.store = store

    @app.exception_handler(HTTPException)
    async def _handler(request, exc: HTTPException):
        detail = exc.detail if isinstance(exc.detail, dict) else {"code": "error", "message": str(exc.detail)}
        return JSONResponse(status_code=exc.status_code, content=detail)

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        rec = store.create(req)
        return _session_payload(rec)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return _session_payload(store.get(session_id))

    @app.get("/sessions/{session_id}/views/{view_name}.png")
    def get_view(session_id: str, view_name: str):
        rec = store.get(session_id)
        idx = {"a": 0, "b": 1}.get(view_name)
        if idx is None or idx >= len(rec.images_png):
            _http_error(404, "not_found", f"no rendered view {view_name!r}")
        return Response(content=rec.images_png[idx], media_type="image/png")

    @app.put("/sessions/{session_id}/pose")
    def update_pose(session_id: str, req: PoseRequest):
        rec = store.get(session_id)
        absolute = None
        if req.absolute_q is not None and req.absolute_t_mm is not None:
            p = rec.session.cup_pose.pose
            absolute = CupPose(
                RigidTransform(np.asarray(req.absolute_q), np.asarray(req.absolute_t_mm), p.from_frame, p.to_frame)
            )
        delta = planner.PoseDelta(
            translation_mm=None if req.translation_mm is None else np.asarray(req.translation_mm),
            rotation_axis=None if req.rotation_axis is None else np.asarray(req.rotation_axis),
            rotation_deg=req.rotation_deg,
            absolute=absolute,
        )
        with rec.lock:
            try:
                update = planner.set_cup_pose(rec.session, delta)
            except SessionCommitted as e:
                _http_error(409, "committed", str(e))
            except RotationLocked as e:
                _http_error(422, "rotation_locked", str(e))
        return _pose_response(rec, update)

    @app.post("/sessions/{session_id}/preset")
    def set_preset(session_id: str, req: PresetRequest):
        rec = store.get(session_id)
        with rec.lock:
            if rec.session.state != "Planning":
                _http_error(409, "committed", "session already committed")
            rec.session.preset_mode = req.enabled
            if req.inclination_deg is not None and req.anteversion_deg is not None:
                rec.session.preset_angles = AnglePair(req.inclination_deg, req.anteversion_deg)
            update = planner.set_cup_pose(rec.session, planner.PoseDelta())
        return _pose_response(rec, update)

    @app.post("/sessions/{session_id}/commit")
    def commit(session_id: str):
        rec = store.get(session_id)
        with rec.lock:
            if rec.session.state != "Planning":
                _http_error(409, "committed", "session already committed")
            rec.session.commit()
            cam_a = rec.session.views[0].camera
            plan_in_xray = compose(cam_a.pose, rec.session.cup_pose.pose)
            planned_rgbd = arsim.cup_to_rgbd(plan_in_xray, rec.xray_to_rgbd)
            rec.alignment = arsim.AlignmentState(
                planned_pose=planned_rgbd,
                impactor=rec.session.impactor,
                live_pose=planned_rgbd,
            )
        return {
            "state": rec.session.state,
            "planned_pose_rgbd": planned_rgbd.to_json_dict(),
            "planned_axis": rec.alignment.planned_axis().tolist(),
            "planned_tip_mm": rec.alignment.planned_tip().tolist(),
            "stream_url": f"/sessions/{rec.id}/ar",
        }

    @app.get("/sessions/{session_id}/metrics")
    def metrics(session_id: str):
        rec = store.get(session_id)
        s = rec.session
        payload: dict = {"state": s.state, "angles": _angles_dict(s.angles())}
        if s.ground_truth is not None:
            errs = planner.pose_errors(s.cup_pose, s.ground_truth, s.app_frame)
            payload["plan_errors"] = {
                "translation_mm": errs.translation_mm,
                "inclination_deg": errs.inclination_deg,
                "anteversion_deg": errs.anteversion_deg,
            }
        if rec.alignment is not None:
            payload["alignment"] = {
                "axis_deg": rec.alignment.current_axis_error_deg,
                "tip_mm": rec.alignment.current_tip_error_mm,
            }
        return payload

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        store.delete(session_id)
        return Response(status_code=204)

    @app.websocket("/sessions/{session_id}/ar")
    async def ar_stream(ws: WebSocket, session_id: str):
        rec = store._records.get(session_id)
        if rec is None or rec.alignment is None:
            await ws.close(code=4004)
            return
        await ws.accept()
        seq = 0
        stop = asyncio.Event()

        async def sender():
            nonlocal seq
            while not stop.is_set() and not rec.deleted:
                with rec.lock:
                    live = rec.alignment.live_pose or rec.alignment.planned_pose
                    frame = arsim.simulate_impactor_cloud(
                        rec.session.impactor, live, rec.sensor, seed=seq
                    )
                seq += 1
                await ws.send_bytes(encode_cloud_frame(seq, frame))
                await asyncio.sleep(0.05)

        task = asyncio.create_task(sender())
        try:
            while True:
                msg = await ws.receive_json()
                if msg.get("type") != "impactor_pose":
                    await ws.send_json({"type": "error", "message": "unknown message type"})
                    continue
                with rec.lock:
                    planned = rec.alignment.planned_pose
                    live = RigidTransform(
                        np.asarray(msg["q"], float),
                        np.asarray(msg["t_mm"], float),
                        planned.from_frame,
                        planned.to_frame,
                    )
                    frame = arsim.simulate_impactor_cloud(
                        rec.session.impactor, live, rec.sensor, seed=seq
                    )
                    fit = arsim.fit_principal_axis(frame)
                    err = arsim.alignment_error(rec.alignment, fit.axis, fit.centroid)
                    rec.alignment = arsim.AlignmentState(
                        planned_pose=planned,
                        impactor=rec.alignment.impactor,
                        live_pose=live,
                        current_axis_error_deg=err.axis_deg,
                        current_tip_error_mm=err.tip_mm,
                    )
                await ws.send_json(
                    {"type": "alignment", "seq": seq, "axis_deg": err.axis_deg, "tip_mm": err.tip_mm}
                )
        except WebSocketDisconnect:
            pass
        finally:
            stop.set()
            task.cancel()

    return app


app = create_app()
