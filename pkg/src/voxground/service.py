"""Session management and wire protocol over the grounding engine.

A session owns one scene and one dialogue; commands arrive serialized,
mutate only through completed execution traces, and every observable
change is emitted as a wire event with a strictly increasing sequence
number. Logs replay deterministically to the same final scene hash.
"""
from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from . import conacq
from . import events as ev
from . import interaction as ia
from . import learner
from . import scene as sc
from . import transfer
from . import voxml

DEFAULT_SEED = 0

EVENT_KINDS = ("sceneDiff", "agentSpeech", "proposal", "stateChange", "error")


class ServiceError(Exception):
    pass


class CorruptLog(ServiceError):
    def __init__(self, seq):
        super().__init__(f"first bad sequence number: {seq}")
        self.seq = seq


@dataclass
class WireEvent:
    seq: int
    kind: str
    payload: dict

    def to_json(self) -> dict:
        return {"seq": self.seq, "kind": self.kind, "payload": self.payload}


def default_scene(library: Optional[voxml.VoxemeLibrary] = None) -> sc.SceneState:
    state = sc.SceneState(library=library)
    state.add(sc.make_object("plate1", "plate", (0.0, 0.012, 0.0)))
    state.add(sc.make_object("block1", "block", (0.3, 0.025, 0.0)))
    state.add(sc.make_object("book1", "book", (-0.3, 0.015, 0.0)))
    state.add(sc.make_object("cup1", "cup", (0.15, 0.05, 0.25)))
    return state


def scene_hash(state: sc.SceneState) -> str:
    doc = state.to_json()
    blob = json.dumps(doc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


class Session:
    """Single-writer session: commands are serialized under a lock."""

    def __init__(self, sid: str, seed: int = DEFAULT_SEED,
                 scene: Optional[sc.SceneState] = None):
        self.id = sid
        self.seed = int(seed)
        self.scene = scene if scene is not None else default_scene()
        self.dialogue = ia.DialogueState(scene=self.scene)
        self.anaphora = ev.AnaphoraStore()
        self.events: list[WireEvent] = []
        self.log: list[dict] = []
        self._seq = 0
        self._command_count = 0
        self._lock = threading.Lock()
        self._transfer_model: Optional[transfer.EmbeddingModel] = None

    # -- wire plumbing ------------------------------------------------------

    def _emit(self, kind: str, payload: dict) -> WireEvent:
        self._seq += 1
        e = WireEvent(self._seq, kind, payload)
        self.events.append(e)
        self.log.append({"seq": e.seq, "dir": "out", "kind": kind,
                         "payload": payload})
        return e

    def _log_input(self, kind: str, payload: dict):
        self._seq += 1
        self.log.append({"seq": self._seq, "dir": "in", "kind": kind,
                         "payload": payload})

    def _command_seed(self) -> int:
        # one named substream per command, derived from the session seed
        self._command_count += 1
        return int(np.random.SeedSequence(
            [self.seed, self._command_count]).generate_state(1)[0])

    def events_since(self, seq: int) -> list[WireEvent]:
        return [e for e in self.events if e.seq > seq]

    def transfer_model(self) -> transfer.EmbeddingModel:
        if self._transfer_model is None:
            pairs = transfer.build_pair_dataset(self.scene.library,
                                                seed=self.seed)
            self._transfer_model = transfer.train_embedding(
                pairs, transfer.MLP7, seed=self.seed)
        return self._transfer_model

    # -- commands -----------------------------------------------------------

    def handle_utterance(self, text: str) -> dict:
        with self._lock:
            self._log_input("utterance", {"text": text})
            return self._utterance(text)

    def _utterance(self, text: str) -> dict:
        stripped = text.strip().rstrip("?!.").lower()
        if stripped in ("what is that", "what's that"):
            return self._describe_focus(text)
        try:
            program, params = ev.parse_utterance(text, self.scene,
                                                 anaphora=self.anaphora)
        except ev.EventError:
            return self._dialogue_input(text)
        cmd_seed = self._command_seed()
        try:
            sampled = ev.sample_parameters(program, params, cmd_seed,
                                           scene=self.scene)
            trace, result = ev.execute(program, self.scene, params=sampled,
                                       grasp_bindings=dict(self.dialogue.bindings))
        except ev.EventError as e:
            reply = f"I couldn't do that: {e}"
            self._emit("error", {"reply": reply, "error": type(e).__name__})
            return {"reply": reply, "ok": False}
        if trace.completed:
            # mutations come only from a completed trace
            self.scene.objects = result.objects
            self.scene.recompute_support()
            self.dialogue.scene = self.scene
            for t in trace.ticks:
                if t.diff:
                    self._emit("sceneDiff", {"clock": round(t.clock, 6),
                                             "diff": _jsonable(t.diff)})
            reply = "Done."
        else:
            reply = f"I couldn't finish: {trace.status}"
            self._emit("error", {"reply": reply, "status": trace.status})
        self._emit("agentSpeech", {"reply": reply, "status": trace.status})
        return {"reply": reply, "ok": trace.completed,
                "status": trace.status}

    def _describe_focus(self, text: str) -> dict:
        oid = self.dialogue.focus
        if oid is None:
            reply = "Point at something first."
            self._emit("agentSpeech", {"reply": reply})
            return {"reply": reply, "ok": False}
        obj = self.scene.objects[oid]
        try:
            analogy = transfer.analogical_object(obj, self.transfer_model(),
                                                 self.scene.library)
        except transfer.NoMatch:
            reply = "I don't know anything like it."
            self._emit("agentSpeech", {"reply": reply})
            return {"reply": reply, "ok": False}
        like = analogy.grasp_like
        if like == obj.voxeme:
            like = next((n for n, _ in analogy.ranking[1:]), like)
            reply = f"That is a {obj.voxeme}."
        else:
            reply = f"I'm not sure, but I can grasp it like a {like}."
        self._emit("agentSpeech", {"reply": reply,
                                   "ranking": [
                                       {"voxeme": n, "score": round(s, 4)}
                                       for n, s in analogy.ranking[:3]]})
        return {"reply": reply, "ok": True,
                "ranking": [n for n, _ in analogy.ranking[:3]]}

    def _dialogue_input(self, text: str) -> dict:
        before = self.dialogue.state
        try:
            _, reply = ia.step(self.dialogue, text)
            ok = True
        except ia.NoMoreCandidates as e:
            reply, ok = str(e), False
        self._after_dialogue(before, reply)
        return {"reply": reply, "ok": ok, "state": self.dialogue.state}

    def _after_dialogue(self, before: str, reply: str):
        if self.dialogue.state != before:
            self._emit("stateChange", {"from": before,
                                       "to": self.dialogue.state,
                                       "focus": self.dialogue.focus})
        pose = self.dialogue.current_pose()
        if pose is not None:
            self._emit("proposal", {"object": self.dialogue.focus,
                                    "pose": pose.label,
                                    "index": self.dialogue.pose_index})
        self._emit("agentSpeech", {"reply": reply})

    def handle_pointing(self, object_id: str) -> dict:
        with self._lock:
            self._log_input("point", {"objectId": object_id})
            if object_id not in self.scene.objects:
                reply = "I don't see that object."
                self._emit("error", {"reply": reply, "objectId": object_id})
                return {"reply": reply, "ok": False}
            before = self.dialogue.state
            _, reply = ia.step(self.dialogue, ia.Pointing(object_id))
            self.anaphora.focus = object_id
            self._after_dialogue(before, reply)
            return {"reply": reply, "ok": True, "state": self.dialogue.state}

    def handle_feedback(self, polarity: str) -> dict:
        with self._lock:
            self._log_input("feedback", {"polarity": polarity})
            word = "yes" if polarity in ("yes", "positive", "up") else "no"
            before = self.dialogue.state
            try:
                _, reply = ia.step(self.dialogue, word)
                ok = True
            except ia.NoMoreCandidates as e:
                reply, ok = str(e), False
            self._after_dialogue(before, reply)
            return {"reply": reply, "ok": ok, "state": self.dialogue.state}

    def handle_gesture(self, name: Optional[str] = None,
                       descriptor: Optional[list] = None) -> dict:
        with self._lock:
            self._log_input("gesture", {"name": name,
                                        "descriptor": descriptor})
            if descriptor is not None:
                d = ia.GestureDescriptor(np.asarray(descriptor, dtype=float),
                                         name=name)
            elif name in self.dialogue.library.centroids:
                d = ia.GestureDescriptor(self.dialogue.library.centroids[name],
                                         name=name)
            else:
                reply = f"I don't know the gesture {name!r}."
                self._emit("error", {"reply": reply, "gesture": name})
                return {"reply": reply, "ok": False}
            before = self.dialogue.state
            try:
                _, reply = ia.step(self.dialogue, d)
                ok = True
            except ia.NoMoreCandidates as e:
                reply, ok = str(e), False
            self._after_dialogue(before, reply)
            return {"reply": reply, "ok": ok, "state": self.dialogue.state}

    def final_hash(self) -> str:
        return scene_hash(self.scene)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [float(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return float(x)
    return x


# ---------------------------------------------------------------------------
# Replay

_HANDLERS = {
    "utterance": lambda s, p: s.handle_utterance(p["text"]),
    "point": lambda s, p: s.handle_pointing(p["objectId"]),
    "feedback": lambda s, p: s.handle_feedback(p["polarity"]),
    "gesture": lambda s, p: s.handle_gesture(p.get("name"),
                                             p.get("descriptor")),
}


def replay_session(log: list[dict], seed: int = DEFAULT_SEED,
                   scene: Optional[sc.SceneState] = None) -> Session:
    """Re-run a session's input log; bit-equal final state by construction."""
    expected = 1
    for entry in log:
        if entry.get("seq") != expected:
            raise CorruptLog(entry.get("seq"))
        expected += 1
    session = Session("replay", seed=seed, scene=scene)
    for entry in log:
        if entry["dir"] != "in":
            continue
        handler = _HANDLERS.get(entry["kind"])
        if handler is None:
            raise CorruptLog(entry["seq"])
        handler(session, entry["payload"])
    return session


# ---------------------------------------------------------------------------
# Session manager and HTTP app

class SessionManager:
    def __init__(self, seed: int = DEFAULT_SEED):
        self.seed = seed
        self.sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def get(self, sid: str = "main") -> Session:
        with self._lock:
            if sid not in self.sessions:
                self.sessions[sid] = Session(sid, seed=self.seed)
            return self.sessions[sid]


def _constraints_payload(seed: int) -> dict:
    exemplars = learner.generate_exemplars(12, 0.1, seed=seed)
    cs = conacq.acquire(exemplars, threshold=0.9)
    roles = conacq.roles_from_graph(exemplars[0].graph)
    emitted = conacq.emit_voxml(cs, roles, name="staircase")
    return {"report": json.loads(cs.report()),
            "voxml": voxml.print_voxeme(emitted)}


def create_app(manager: Optional[SessionManager] = None,
               seed: int = DEFAULT_SEED):
    manager = manager or SessionManager(seed=seed)
    app = FastAPI(title="voxground")
    app.state.manager = manager
    cache: dict = {}

    def session(request: Request) -> Session:
        return manager.get(request.query_params.get("session", "main"))

    @app.get("/api/scene")
    def get_scene(request: Request):
        s = session(request)
        return {"scene": s.scene.to_json(), "hash": s.final_hash(),
                "focus": s.dialogue.focus, "state": s.dialogue.state}

    @app.post("/api/utterance")
    async def post_utterance(request: Request):
        body = await request.json()
        if "text" not in body:
            return JSONResponse({"error": "missing text"}, status_code=400)
        return session(request).handle_utterance(body["text"])

    @app.post("/api/point")
    async def post_point(request: Request):
        body = await request.json()
        oid = body.get("objectId")
        if oid is None:
            return JSONResponse({"error": "missing objectId"},
                                status_code=400)
        return session(request).handle_pointing(oid)

    @app.post("/api/feedback")
    async def post_feedback(request: Request):
        body = await request.json()
        if "polarity" not in body:
            return JSONResponse({"error": "missing polarity"},
                                status_code=400)
        return session(request).handle_feedback(body["polarity"])

    @app.post("/api/gesture")
    async def post_gesture(request: Request):
        body = await request.json()
        if "name" not in body and "descriptor" not in body:
            return JSONResponse({"error": "missing name or descriptor"},
                                status_code=400)
        return session(request).handle_gesture(body.get("name"),
                                               body.get("descriptor"))

    @app.get("/api/constraints")
    def get_constraints():
        if "constraints" not in cache:
            cache["constraints"] = _constraints_payload(manager.seed)
        return cache["constraints"]

    @app.get("/api/voxemes")
    def get_voxemes(request: Request):
        lib = session(request).scene.library
        return {"voxemes": [{"name": n, "text": voxml.print_voxeme(lib[n])}
                            for n in lib.names()]}

    @app.get("/api/log")
    def get_log(request: Request):
        return {"log": session(request).log}

    @app.get("/api/events")
    async def get_events(request: Request):
        s = session(request)
        since = int(request.query_params.get("since", 0))
        live = request.query_params.get("live", "0") == "1"

        async def stream():
            import asyncio
            last = since
            while True:
                for e in s.events_since(last):
                    last = e.seq
                    yield f"id: {e.seq}\ndata: {json.dumps(e.to_json())}\n\n"
                if not live:
                    return
                if await request.is_disconnected():
                    return
                await asyncio.sleep(0.05)

        return StreamingResponse(stream(), media_type="text/event-stream")

    # serve the browser client same-origin when a built frontend is present
    frontend = Path(__file__).resolve().parents[2] / "frontend"
    if (frontend / "index.html").exists():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=frontend, html=True),
                  name="frontend")

    return app
