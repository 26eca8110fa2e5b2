"""Dialogue loop for grasp-pose negotiation and one-shot gesture binding.

A session holds a finite-state dialogue: focus an object, negotiate a
grasp pose from geometrically inferred candidates, then attach a novel
gesture to the object's open grasp affordance. Bound gestures propagate
into every later event program that grasps the object.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import scene as sc
from . import events
from .voxml import Term, Var

GESTURE_DIM = 32
NOVELTY_THRESHOLD = 0.5
_SEED_SEPARATION = 0.45  # max pairwise cosine similarity among seeds


class InteractionError(Exception):
    pass


class NoMoreCandidates(InteractionError):
    pass


class NotNovel(InteractionError):
    pass


# ---------------------------------------------------------------------------
# Gesture descriptors and library

SEED_GESTURE_NAMES = (
    "point left", "point right", "point front", "point back", "point down",
    "thumbs up", "thumbs down", "claw down", "claw left", "claw right",
    "claw front", "claw back", "open palm", "closed fist", "beckon",
    "wave", "stop", "push left", "push right", "push front",
    "push back", "push down", "grab", "release", "lift up",
    "lower down", "rotate left", "rotate right", "slide left", "slide right",
    "slide front", "slide back", "pinch", "spread",
)
assert len(SEED_GESTURE_NAMES) == 34


@dataclass
class GestureDescriptor:
    vector: np.ndarray
    name: Optional[str] = None

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=float)
        if self.vector.shape != (GESTURE_DIM,):
            raise InteractionError(
                f"descriptor must have {GESTURE_DIM} entries")
        if not np.all(np.isfinite(self.vector)):
            raise InteractionError("descriptor entries must be finite")

    def unit(self) -> np.ndarray:
        n = float(np.linalg.norm(self.vector))
        if n < 1e-12:
            raise InteractionError("descriptor must be nonzero")
        return self.vector / n


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na < 1e-12 or nb < 1e-12:
        return 1.0
    return 1.0 - float(np.dot(a, b)) / (na * nb)


def _seed_centroids(seed: int = 0) -> dict[str, np.ndarray]:
    """Deterministic unit centroids kept pairwise well-separated."""
    rng = np.random.default_rng(seed)
    out: dict[str, np.ndarray] = {}
    vecs: list[np.ndarray] = []
    for name in SEED_GESTURE_NAMES:
        for _ in range(10_000):
            v = rng.normal(size=GESTURE_DIM)
            v = v / np.linalg.norm(v)
            if all(abs(float(np.dot(v, u))) < _SEED_SEPARATION for u in vecs):
                break
        else:  # pragma: no cover - generation always converges at dim 32
            raise InteractionError("could not separate seed centroids")
        vecs.append(v)
        out[name] = v
    return out


NOVEL = "Novel"


class GestureLibrary:
    def __init__(self, threshold: float = NOVELTY_THRESHOLD, seed: int = 0):
        self.threshold = float(threshold)
        self.centroids: dict[str, np.ndarray] = _seed_centroids(seed)
        self.provenance: dict[str, str] = {n: "seed" for n in self.centroids}

    def register(self, name: str, d: GestureDescriptor,
                 provenance: str = "learned"):
        if name in self.centroids:
            raise InteractionError(f"gesture name {name!r} already registered")
        self.centroids[name] = d.unit()
        self.provenance[name] = provenance

    def save(self, path):
        doc = [{"name": n, "centroid": list(map(float, c)),
                "provenance": self.provenance[n]}
               for n, c in self.centroids.items()]
        with open(path, "w") as f:
            json.dump({"threshold": self.threshold, "gestures": doc}, f)

    @classmethod
    def load(cls, path) -> "GestureLibrary":
        with open(path) as f:
            doc = json.load(f)
        lib = cls.__new__(cls)
        lib.threshold = float(doc["threshold"])
        lib.centroids = {}
        lib.provenance = {}
        for g in doc["gestures"]:
            v = np.asarray(g["centroid"], dtype=float)
            lib.centroids[g["name"]] = v / np.linalg.norm(v)
            lib.provenance[g["name"]] = g["provenance"]
        return lib


def classify_gesture(d: GestureDescriptor, lib: GestureLibrary) -> str:
    """Nearest centroid by cosine distance; NOVEL beyond the threshold."""
    if not lib.centroids:
        raise InteractionError("gesture library is empty")
    v = d.unit()
    best_name, best_dist = None, float("inf")
    for name in sorted(lib.centroids):
        dist = cosine_distance(v, lib.centroids[name])
        if dist < best_dist:
            best_name, best_dist = name, dist
    return best_name if best_dist <= lib.threshold else NOVEL


# ---------------------------------------------------------------------------
# Affordance semantics

@dataclass
class AffordanceSemantics:
    """lambda y. grasp(obj, with(y)) with an optionally closed gesture slot."""
    object_id: str
    gesture: Optional[str] = None
    pose: Optional[sc.GraspPose] = None

    @property
    def bound(self) -> bool:
        return self.gesture is not None

    def term(self):
        if self.bound:
            return Term("grasp", (Term(self.object_id),
                                  Term("with", (Term(self.gesture),))))
        return ("lambda", "y",
                Term("grasp", (Term(self.object_id), Term("with", (Var("y"),)))))


# ---------------------------------------------------------------------------
# Dialogue state machine

IDLE = "Idle"
OBJECT_FOCUS = "ObjectFocus"
PROPOSE_POSE = "ProposePose"
AWAIT_GESTURE = "AwaitGesture"
BOUND = "Bound"

_AFFIRM = {"yes", "yeah", "ok", "okay", "sure"}
_NEGATE = {"no", "nope", "not like that"}
_GRASP_WORDS = {"grasp", "grab", "pick up", "hold"}


@dataclass
class Pointing:
    object_id: str


@dataclass
class DialogueState:
    scene: sc.SceneState
    library: GestureLibrary = field(default_factory=GestureLibrary)
    state: str = IDLE
    focus: Optional[str] = None
    candidates: list[sc.GraspPose] = field(default_factory=list)
    pose_index: int = 0
    transcript: list[dict] = field(default_factory=list)
    semantics: dict[str, AffordanceSemantics] = field(default_factory=dict)
    bindings: dict[str, str] = field(default_factory=dict)

    def current_pose(self) -> Optional[sc.GraspPose]:
        if self.state == PROPOSE_POSE and self.pose_index < len(self.candidates):
            return self.candidates[self.pose_index]
        return None

    def log(self, path):
        with open(path, "w") as f:
            for entry in self.transcript:
                f.write(json.dumps(entry) + "\n")


def _record(ds: DialogueState, kind: str, content: str, reply: str) -> str:
    ds.transcript.append({"input": {"kind": kind, "content": content},
                          "state": ds.state, "reply": reply})
    return reply


def _resolve_object(ds: DialogueState, text: str) -> Optional[str]:
    try:
        return events.resolve_np(text, ds.scene)
    except events.EventError:
        return None


def _focus(ds: DialogueState, oid: str, kind: str, content: str) -> str:
    ds.focus = oid
    ds.state = OBJECT_FOCUS
    ds.candidates = []
    ds.pose_index = 0
    voxeme = ds.scene.objects[oid].voxeme
    return _record(ds, kind, content, f"OK, the {voxeme}.")


def _propose_first(ds: DialogueState, kind: str, content: str) -> str:
    obj = ds.scene.objects[ds.focus]
    ds.candidates = sc.grasp_pose_candidates(obj, library=ds.scene.library)
    if not ds.candidates:
        ds.state = OBJECT_FOCUS
        return _record(ds, kind, content,
                       f"I don't know how to grasp the {obj.voxeme}.")
    ds.pose_index = 0
    ds.state = PROPOSE_POSE
    return _record(ds, kind, content,
                   f"Should I grasp it like this? "
                   f"({ds.candidates[0].label})")


def _advance_pose(ds: DialogueState, kind: str, content: str) -> str:
    ds.pose_index += 1
    if ds.pose_index >= len(ds.candidates):
        ds.state = OBJECT_FOCUS
        reply = "Sorry, I'm out of grasp ideas for this object."
        _record(ds, kind, content, reply)
        raise NoMoreCandidates(reply)
    return _record(ds, kind, content,
                   f"Should I grasp it like this? "
                   f"({ds.candidates[ds.pose_index].label})")


def _accept_pose(ds: DialogueState, kind: str, content: str) -> str:
    ds.state = AWAIT_GESTURE
    return _record(ds, kind, content, "Is there a gesture for that?")


def bind_gesture(ds: DialogueState, d: GestureDescriptor) -> AffordanceSemantics:
    """Close the focus object's open grasp slot with a novel gesture."""
    if ds.state != AWAIT_GESTURE:
        raise InteractionError("no grasp negotiation awaiting a gesture")
    label = classify_gesture(d, ds.library)
    if label != NOVEL:
        existing = ds.semantics.get(ds.focus)
        if existing is not None and existing.gesture == label:
            return existing  # re-binding the same gesture changes nothing
        raise NotNovel(f"gesture matches known {label!r}")
    name = d.name or f"{ds.focus}-grasp"
    base = name
    n = 2
    while name in ds.library.centroids:
        name = f"{base}-{n}"
        n += 1
    ds.library.register(name, d)
    pose = ds.candidates[ds.pose_index]
    sem = AffordanceSemantics(ds.focus, gesture=name, pose=pose)
    ds.semantics[ds.focus] = sem
    ds.bindings[ds.focus] = pose.label
    ds.state = BOUND
    return sem


def execute_with_bindings(ds: DialogueState, utterance: str,
                          seed: int = 0):
    """Run an event program; bound grasp poses ride along as subevents."""
    program, params = events.parse_utterance(utterance, ds.scene)
    sampled = events.sample_parameters(program, params, seed, scene=ds.scene)
    return events.execute(program, ds.scene, params=sampled,
                          grasp_bindings=dict(ds.bindings))


Input = Union[str, GestureDescriptor, Pointing]


def step(ds: DialogueState, inp: Input) -> tuple[DialogueState, str]:
    """Total transition function: every input in every state has a successor."""
    if isinstance(inp, Pointing):
        if inp.object_id not in ds.scene.objects:
            return ds, _record(ds, "pointing", inp.object_id,
                               "I don't see that object.")
        return ds, _focus(ds, inp.object_id, "pointing", inp.object_id)

    if isinstance(inp, GestureDescriptor):
        label = classify_gesture(inp, ds.library)
        if ds.state == AWAIT_GESTURE:
            if label == NOVEL:
                sem = bind_gesture(ds, inp)
                return ds, _record(
                    ds, "gesture", NOVEL,
                    f"Got it. I'll grasp the "
                    f"{ds.scene.objects[ds.focus].voxeme} like that "
                    f"({sem.pose.label}) when you show me {sem.gesture!r}.")
            existing = ds.semantics.get(ds.focus)
            if existing is not None and existing.gesture == label:
                ds.state = BOUND
                return ds, _record(ds, "gesture", label, "Already bound.")
            return ds, _record(ds, "gesture", label,
                               f"I already know {label!r}; show me a new one.")
        if label == "thumbs down" and ds.state == PROPOSE_POSE:
            return ds, _advance_pose(ds, "gesture", label)
        if label == "thumbs up" and ds.state == PROPOSE_POSE:
            return ds, _accept_pose(ds, "gesture", label)
        if label == "claw down" and ds.state in (OBJECT_FOCUS, BOUND):
            return ds, _propose_first(ds, "gesture", label)
        bound = next((s for s in ds.semantics.values() if s.gesture == label),
                     None)
        if bound is not None:
            return ds, _focus(ds, bound.object_id, "gesture", label)
        return ds, _record(ds, "gesture", str(label),
                           "I'm not sure what you mean by that here.")

    text = inp.strip().lower()
    if ds.state == PROPOSE_POSE:
        if text in _NEGATE:
            return ds, _advance_pose(ds, "utterance", text)
        if text in _AFFIRM:
            return ds, _accept_pose(ds, "utterance", text)
    if any(w in text for w in _GRASP_WORDS):
        oid = _resolve_object(ds, text)
        if oid is not None:
            _focus(ds, oid, "utterance", text)
            ds.transcript.pop()  # fold focus + proposal into one reply
            return ds, _propose_first(ds, "utterance", text)
        if ds.focus is not None and ds.state in (OBJECT_FOCUS, BOUND):
            return ds, _propose_first(ds, "utterance", text)
    oid = _resolve_object(ds, text)
    if oid is not None:
        return ds, _focus(ds, oid, "utterance", text)
    if text in _AFFIRM or text in _NEGATE:
        return ds, _record(ds, "utterance", text,
                           "I'm not sure what that refers to.")
    return ds, _record(ds, "utterance", text, "Could you rephrase that?")
