"""Quantitative world model: poses, extents, habitats, motions, grasping.

World frame is right-handed with +Y up and the floor plane at Y=0; units
are meters, radians, and seconds.  Geometry is parametric (boxes,
cylinders, ellipsoids), so collision and surface queries are exact.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .voxml import Voxeme, VoxemeLibrary, seed_library

ALIGN_TOLERANCE = math.radians(10.0)
TOP_FACE_TOLERANCE = math.radians(15.0)
SUPPORT_CONTACT = 0.002     # m
SUPPORT_NORMAL_TOLERANCE = math.radians(20.0)
TOUCH_GAP = 0.002           # m
GRASP_CIRCLE_SAMPLES = 32
GRASP_MARGIN = 0.005        # m

AXIS_INDEX = {"X": 0, "Y": 1, "Z": 2}
WORLD_UP = np.array([0.0, 1.0, 0.0])

# canonical half-extents for seed voxemes (m)
DEFAULT_EXTENTS = {
    "cup": (0.035, 0.05, 0.035),
    "plate": (0.1, 0.012, 0.1),
    "knife": (0.11, 0.01, 0.012),
    "book": (0.08, 0.015, 0.11),
    "block": (0.025, 0.025, 0.025),
    "spoon": (0.08, 0.01, 0.015),
    "bottle-shape": (0.03, 0.09, 0.03),
}


class SceneError(Exception):
    pass


class CollisionError(SceneError):
    def __init__(self, a: str, b: str):
        super().__init__(f"objects {a!r} and {b!r} would interpenetrate")
        self.pair = (a, b)


class NoSymmetry(SceneError):
    pass


class PoseInfeasible(SceneError):
    pass


# ---------------------------------------------------------------------------
# Quaternions: stored as (w, x, y, z), unit norm

def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return np.asarray(q, dtype=float) / np.linalg.norm(q)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = angle / 2.0
    return np.concatenate([[math.cos(half)], math.sin(half) * axis])


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    u = np.array([x, y, z])
    return v + 2.0 * np.cross(u, np.cross(u, v) + w * np.asarray(v, dtype=float))


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    return np.column_stack([quat_rotate(q, np.eye(3)[i]) for i in range(3)])


# ---------------------------------------------------------------------------
# Domain types

@dataclass(frozen=True)
class SceneFrame:
    """World embedding frame; fixed for a session."""
    up_axis: str = "Y"

    def axis_vector(self, axis: str) -> np.ndarray:
        v = np.zeros(3)
        v[AXIS_INDEX[axis]] = 1.0
        return v


@dataclass
class ObjectInstance:
    id: str
    voxeme: str
    position: np.ndarray
    rotation: np.ndarray = field(default_factory=quat_identity)
    extents: np.ndarray = field(default_factory=lambda: np.array([0.025, 0.025, 0.025]))
    held_by: Optional[str] = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.rotation = np.asarray(self.rotation, dtype=float)
        self.extents = np.asarray(self.extents, dtype=float)
        if abs(np.linalg.norm(self.rotation) - 1.0) > 1e-9:
            raise SceneError(f"{self.id}: rotation quaternion not normalized")
        if not np.all(self.extents > 0):
            raise SceneError(f"{self.id}: extents must be strictly positive")

    def local_axis(self, axis: str) -> np.ndarray:
        return quat_rotate(self.rotation, SceneFrame().axis_vector(axis))

    def world_corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
        local = signs * self.extents
        return np.array([self.position + quat_rotate(self.rotation, c) for c in local])

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        corners = self.world_corners()
        return corners.min(axis=0), corners.max(axis=0)

    def to_local(self, p: np.ndarray) -> np.ndarray:
        return quat_rotate(quat_conjugate(self.rotation), np.asarray(p, dtype=float) - self.position)

    def to_world(self, p: np.ndarray) -> np.ndarray:
        return self.position + quat_rotate(self.rotation, np.asarray(p, dtype=float))

    def copy(self) -> "ObjectInstance":
        return ObjectInstance(self.id, self.voxeme, self.position.copy(),
                              self.rotation.copy(), self.extents.copy(), self.held_by)


def make_object(oid: str, voxeme: str, position, rotation=None, extents=None,
                held_by=None) -> ObjectInstance:
    if extents is None:
        extents = DEFAULT_EXTENTS.get(voxeme, (0.025, 0.025, 0.025))
    if rotation is None:
        rotation = quat_identity()
    return ObjectInstance(oid, voxeme, np.asarray(position, dtype=float),
                          quat_normalize(rotation), np.asarray(extents, dtype=float),
                          held_by)


class SceneState:
    """Object instances plus derived support graph and a sim clock."""

    def __init__(self, library: Optional[VoxemeLibrary] = None):
        self.library = library or seed_library()
        self.objects: dict[str, ObjectInstance] = {}
        self.support: set[tuple[str, str]] = set()  # (supporter, supported)
        self.clock: float = 0.0

    def add(self, obj: ObjectInstance, check_collision: bool = True) -> "SceneState":
        if obj.id in self.objects:
            raise SceneError(f"duplicate object id {obj.id!r}")
        if check_collision:
            for other in self.objects.values():
                if obb_penetration(obj, other) > 1e-6:
                    raise CollisionError(obj.id, other.id)
        self.objects[obj.id] = obj
        self.recompute_support()
        return self

    def remove(self, oid: str):
        del self.objects[oid]
        self.recompute_support()

    def snapshot(self) -> "SceneState":
        s = SceneState(self.library)
        s.objects = {k: v.copy() for k, v in self.objects.items()}
        s.support = set(self.support)
        s.clock = self.clock
        return s

    def supporter_of(self, oid: str) -> Optional[str]:
        for a, b in self.support:
            if b == oid:
                return a
        return None

    def supported_by(self, oid: str) -> list[str]:
        return sorted(b for a, b in self.support if a == oid)

    def recompute_support(self):
        self.support = set()
        objs = list(self.objects.values())
        for sup in objs:
            for dep in objs:
                if sup.id != dep.id and dep.held_by is None and supports(sup, dep):
                    self.support.add((sup.id, dep.id))
        # held objects are never supported; enforce acyclicity by construction
        self._check_acyclic()

    def _check_acyclic(self):
        order: dict[str, int] = {}
        visiting: set[str] = set()

        def visit(n: str):
            if n in order:
                return
            if n in visiting:
                raise SceneError("support graph cycle detected")
            visiting.add(n)
            for a, b in self.support:
                if a == n:
                    visit(b)
            visiting.discard(n)
            order[n] = len(order)

        for oid in self.objects:
            visit(oid)

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "objects": [
                {
                    "id": o.id,
                    "voxeme": o.voxeme,
                    "position": [round(float(v), 9) for v in o.position],
                    "rotationQuat": [round(float(v), 9) for v in o.rotation],
                    "extents": [round(float(v), 9) for v in o.extents],
                    **({"heldBy": o.held_by} if o.held_by else {}),
                }
                for o in sorted(self.objects.values(), key=lambda o: o.id)
            ],
            "clock": round(self.clock, 6),
        }

    @classmethod
    def from_json(cls, doc: dict, library: Optional[VoxemeLibrary] = None) -> "SceneState":
        s = cls(library)
        for o in doc.get("objects", []):
            s.add(ObjectInstance(o["id"], o["voxeme"], np.array(o["position"]),
                                 quat_normalize(np.array(o["rotationQuat"])),
                                 np.array(o["extents"]), o.get("heldBy")),
                  check_collision=False)
        s.clock = float(doc.get("clock", 0.0))
        return s

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=2)

    @classmethod
    def load(cls, path, library=None) -> "SceneState":
        with open(path) as f:
            return cls.from_json(json.load(f), library)


# ---------------------------------------------------------------------------
# Contact / collision geometry

def obb_penetration(a: ObjectInstance, b: ObjectInstance) -> float:
    """Penetration depth between two oriented boxes (0 when separated).

    Separating axis test over the 15 candidate axes; returns the minimum
    overlap, which is the (approximate) penetration depth when positive.
    """
    ra = quat_to_matrix(a.rotation)
    rb = quat_to_matrix(b.rotation)
    axes = [ra[:, i] for i in range(3)] + [rb[:, i] for i in range(3)]
    for i in range(3):
        for j in range(3):
            c = np.cross(ra[:, i], rb[:, j])
            n = np.linalg.norm(c)
            if n > 1e-9:
                axes.append(c / n)
    d = b.position - a.position
    min_overlap = math.inf
    for axis in axes:
        proj_a = sum(abs(float(np.dot(axis, ra[:, i]))) * a.extents[i] for i in range(3))
        proj_b = sum(abs(float(np.dot(axis, rb[:, i]))) * b.extents[i] for i in range(3))
        overlap = proj_a + proj_b - abs(float(np.dot(axis, d)))
        if overlap < min_overlap:
            min_overlap = overlap
    return max(min_overlap, 0.0) if min_overlap > 0 else 0.0


def aabb_gaps(a: ObjectInstance, b: ObjectInstance) -> np.ndarray:
    """Per-axis separation between world AABBs (negative = overlap)."""
    amin, amax = a.aabb()
    bmin, bmax = b.aabb()
    return np.maximum(amin - bmax, bmin - amax)


def touching(a: ObjectInstance, b: ObjectInstance) -> bool:
    """Face contact: one axis within the 2 mm gap, clear overlap elsewhere."""
    gaps = np.sort(aabb_gaps(a, b))[::-1]
    return bool(gaps[0] <= TOUCH_GAP and gaps[1] <= -0.001)


def supports(sup: ObjectInstance, dep: ObjectInstance) -> bool:
    """True when ``dep`` rests on ``sup``'s top face."""
    up = top_face_axis(sup)
    if up is None:
        return False
    amin, amax = sup.aabb()
    bmin, bmax = dep.aabb()
    if abs(bmin[1] - amax[1]) > SUPPORT_CONTACT:
        return False
    # require footprint overlap on the horizontal plane
    for axis in (0, 2):
        if min(amax[axis], bmax[axis]) - max(amin[axis], bmin[axis]) <= 1e-6:
            return False
    return True


def top_face_axis(obj: ObjectInstance) -> Optional[np.ndarray]:
    """World normal of the up-most local face if within 20 deg of +Y."""
    best = None
    best_dot = -2.0
    for axis in AXIS_INDEX:
        for sign in (1, -1):
            n = sign * obj.local_axis(axis)
            d = float(np.dot(n, WORLD_UP))
            if d > best_dot:
                best_dot = d
                best = n
    if best_dot < math.cos(SUPPORT_NORMAL_TOLERANCE):
        return None
    return best


# ---------------------------------------------------------------------------
# Habitat evaluation

def _axis_alignment_angle(obj: ObjectInstance, obj_axis: str, frame_axis: str) -> float:
    """Angle between the object axis line and the frame axis line."""
    a = obj.local_axis(obj_axis)
    f = SceneFrame().axis_vector(frame_axis)
    return math.acos(min(1.0, abs(float(np.dot(a, f)))))


def _up_most_face(obj: ObjectInstance) -> tuple[int, str, float]:
    best = (1, "Y", -2.0)
    for axis in AXIS_INDEX:
        for sign in (1, -1):
            d = float(np.dot(sign * obj.local_axis(axis), WORLD_UP))
            if d > best[2]:
                best = (sign, axis, d)
    return best


def active_habitats(obj: ObjectInstance, frame: SceneFrame = SceneFrame(),
                    library: Optional[VoxemeLibrary] = None) -> set[int]:
    """Labels of habitats whose pose predicates all hold for ``obj``."""
    lib = library or seed_library()
    voxeme = lib[obj.voxeme]
    active: set[int] = set()
    for h in voxeme.habitats:
        ok = True
        if h.align is not None:
            angle = _axis_alignment_angle(obj, h.align.object_axis, h.align.frame_axis)
            if h.align.perpendicular:
                ok = abs(angle - math.pi / 2) <= ALIGN_TOLERANCE
            else:
                ok = angle <= ALIGN_TOLERANCE
        if ok and h.top is not None:
            sign, axis, d = _up_most_face(obj)
            ok = (sign == h.top.sign and axis == h.top.axis
                  and d >= math.cos(TOP_FACE_TOLERANCE))
        if ok:
            active.add(h.label)
    return active


# ---------------------------------------------------------------------------
# Primitive motions

def _move_with_dependents(scene: SceneState, oid: str, delta: np.ndarray,
                          moved: set[str]):
    obj = scene.objects[oid]
    obj.position = obj.position + delta
    moved.add(oid)
    for dep in scene.supported_by(oid):
        if dep not in moved:
            _move_with_dependents(scene, dep, delta, moved)


def translate(scene: SceneState, oid: str, delta) -> SceneState:
    """Translate an object (plus anything it supports); collision checked."""
    delta = np.asarray(delta, dtype=float)
    moving = {oid}
    stack = [oid]
    while stack:
        cur = stack.pop()
        for dep in scene.supported_by(cur):
            if dep not in moving:
                moving.add(dep)
                stack.append(dep)
    trial = scene.snapshot()
    moved: set[str] = set()
    _move_with_dependents(trial, oid, delta, moved)
    for mid in moving:
        for other in trial.objects.values():
            if other.id not in moving and obb_penetration(trial.objects[mid], other) > 1e-6:
                raise CollisionError(mid, other.id)
    _move_with_dependents(scene, oid, delta, set())
    scene.recompute_support()
    return scene


def rotate(scene: SceneState, oid: str, q) -> SceneState:
    q = quat_normalize(np.asarray(q, dtype=float))
    obj = scene.objects[oid]
    new_rot = quat_normalize(quat_multiply(q, obj.rotation))
    trial = obj.copy()
    trial.rotation = new_rot
    for other in scene.objects.values():
        if other.id != oid and obb_penetration(trial, other) > 1e-6:
            raise CollisionError(oid, other.id)
    obj.rotation = new_rot
    scene.recompute_support()
    return scene


# ---------------------------------------------------------------------------
# Signed distance and grasp inference

def signed_distance(obj: ObjectInstance, point, library=None) -> float:
    """Signed distance from a world point to the object's surface."""
    lib = library or seed_library()
    head = lib[obj.voxeme].type_info.head if lib[obj.voxeme].type_info else "cuboid"
    p = obj.to_local(point)
    e = obj.extents
    if head == "cylindroid":
        r = float(e[0] + e[2]) / 2.0
        q = np.array([math.hypot(p[0], p[2]) - r, abs(p[1]) - e[1]])
        outside = np.maximum(q, 0.0)
        return float(np.linalg.norm(outside) + min(max(q[0], q[1]), 0.0))
    if head == "ellipsoid":
        k0 = float(np.linalg.norm(p / e))
        k1 = float(np.linalg.norm(p / (e * e)))
        if k1 < 1e-12:
            return -float(e.min())
        return k0 * (k0 - 1.0) / k1
    # cuboid, sheet, assembly: box SDF
    q = np.abs(p) - e
    outside = np.maximum(q, 0.0)
    return float(np.linalg.norm(outside) + min(float(q.max()), 0.0))


def grasp_points(obj: ObjectInstance, library=None,
                 samples: int = GRASP_CIRCLE_SAMPLES) -> list[np.ndarray]:
    """Symmetry-derived candidate grasp points, all on the object surface.

    Rotational symmetry about an axis yields the circle of surface points
    equidistant from the extremes along that axis plus the two extremes;
    reflectional-only symmetry yields surface points on the mid planes
    perpendicular to each symmetry plane.
    """
    lib = library or seed_library()
    voxeme = lib[obj.voxeme]
    t = voxeme.type_info
    if t is None or (not t.rotational_symmetry and not t.reflectional_symmetry):
        raise NoSymmetry(f"{obj.voxeme} declares no symmetry")
    points: list[np.ndarray] = []
    e = obj.extents
    head = t.head
    if t.rotational_symmetry:
        for axis in t.rotational_symmetry:
            i = AXIS_INDEX[axis]
            j, k = [m for m in range(3) if m != i]
            if head == "cylindroid" and axis == "Y":
                rj = rk = float(e[0] + e[2]) / 2.0
            elif head == "ellipsoid":
                rj, rk = float(e[j]), float(e[k])
            else:
                rj, rk = float(e[j]), float(e[k])
            for s in range(samples):
                th = 2.0 * math.pi * s / samples
                local = np.zeros(3)
                local[j] = rj * math.cos(th)
                local[k] = rk * math.sin(th)
                if head == "cuboid":
                    # project onto the box perimeter at the mid cross-section
                    scale = 1.0 / max(abs(local[j]) / e[j], abs(local[k]) / e[k], 1e-12)
                    local[j] *= scale
                    local[k] *= scale
                points.append(obj.to_world(local))
            for sign in (1, -1):
                local = np.zeros(3)
                local[i] = sign * float(e[i])
                points.append(obj.to_world(local))
    else:
        for plane in t.reflectional_symmetry:
            normal_axis = ({"XY": "Z", "YZ": "X", "XZ": "Y"})[plane]
            n = AXIS_INDEX[normal_axis]
            # surface outline in each mid plane containing the normal axis
            for other in [m for m in range(3) if m != n]:
                third = next(m for m in range(3) if m not in (n, other))
                per_side = max(2, samples // 8)
                for s in range(per_side):
                    frac = -1.0 + 2.0 * s / (per_side - 1)
                    for sign in (1, -1):
                        local = np.zeros(3)
                        local[n] = frac * float(e[n])
                        local[other] = sign * float(e[other])
                        points.append(obj.to_world(local))
    # deduplicate while keeping deterministic order
    seen = set()
    out = []
    for p in points:
        key = tuple(np.round(p, 9))
        if key not in seen:
            seen.add(key)
            out.append(p)
    return out


@dataclass
class HandModel:
    """Wrist position plus five fingers (length, rest bend angle)."""
    wrist: np.ndarray
    finger_lengths: tuple[float, ...] = (0.07, 0.08, 0.085, 0.08, 0.065)
    bend_angles: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        self.wrist = np.asarray(self.wrist, dtype=float)
        if any(l <= 0 for l in self.finger_lengths):
            raise SceneError("finger lengths must be positive")
        if any(not 0 <= b <= math.pi / 2 for b in self.bend_angles):
            raise SceneError("bend angles must lie in [0, pi/2]")


@dataclass
class GraspPose:
    target: np.ndarray
    bend_angles: tuple[float, ...]
    approach: np.ndarray
    label: str = "side"

    def semantics(self, obj_id: str):
        # affordance semantics: lambda y. grasp(obj, with(y)), gesture slot open
        from .voxml import Term, Var
        return ("lambda", "y", Term("grasp", (Term(obj_id), Term("with", (Var("y"),)))))


def _finger_sides(n: int) -> list[int]:
    # thumb opposes the other fingers
    return [-1] + [1] * (n - 1)


def infer_grasp_pose(obj: ObjectInstance, hand: HandModel, library=None) -> GraspPose:
    """Closest-point grasp with per-finger bend angles.

    The bend angle per finger is arccos((extent + side*margin)/reach),
    clamped to [0, 1]: the maximum bend that keeps the fingertip outside
    the object bounds along the approach axis.
    """
    lib = library or seed_library()
    pts = grasp_points(obj, lib)
    dists = [float(np.linalg.norm(p - hand.wrist)) for p in pts]
    order = sorted(range(len(pts)), key=lambda i: (dists[i], tuple(np.round(pts[i], 9))))
    p = pts[order[0]]
    span = 2.0 * max(hand.finger_lengths)
    d = float(np.linalg.norm(p - hand.wrist))
    if d < 1e-12:
        return GraspPose(p, tuple(0.0 for _ in hand.finger_lengths),
                         np.array([0.0, -1.0, 0.0]))
    u = (p - hand.wrist) / d
    v = WORLD_UP if abs(u[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    v = v - u * float(np.dot(u, v))
    v = v / np.linalg.norm(v)
    # extent along the finger-closing axis: the fingers bend in the u-v
    # plane, so v is the direction the tips must clear
    closing = int(np.argmax(np.abs(v)))
    corners = obj.world_corners()
    e_axis = float(corners[:, closing].max() - corners[:, closing].min()) / 2.0
    if e_axis > span:
        raise PoseInfeasible(f"{obj.id}: object exceeds hand span")
    sides = _finger_sides(len(hand.finger_lengths))
    bends = []
    for length, side in zip(hand.finger_lengths, sides):
        c = (e_axis + side * GRASP_MARGIN) / length
        theta = math.acos(min(1.0, max(0.0, c)))
        # back the finger off until the tip clears the volume
        for _ in range(32):
            tip = hand.wrist + length * (u * math.cos(theta) + v * side * math.sin(theta))
            if signed_distance(obj, tip, lib) >= -1e-6:
                break
            theta = max(0.0, theta - math.radians(3.0))
        else:
            raise PoseInfeasible(f"{obj.id}: finger cannot clear object bounds")
        tip = hand.wrist + length * (u * math.cos(theta) + v * side * math.sin(theta))
        if signed_distance(obj, tip, lib) < -1e-6:
            raise PoseInfeasible(f"{obj.id}: finger cannot clear object bounds")
        bends.append(theta)
    return GraspPose(p, tuple(bends), u)


def grasp_pose_candidates(obj: ObjectInstance, hand_distance: float = 0.15,
                          library=None) -> list[GraspPose]:
    """Candidate poses in negotiation order: beneath first, sides clockwise."""
    lib = library or seed_library()
    approaches = [
        ("beneath", np.array([0.0, -1.0, 0.0])),
        ("side+X", np.array([1.0, 0.0, 0.0])),
        ("side+Z", np.array([0.0, 0.0, 1.0])),
        ("side-X", np.array([-1.0, 0.0, 0.0])),
        ("side-Z", np.array([0.0, 0.0, -1.0])),
    ]
    out = []
    for label, direction in approaches:
        wrist = obj.position + direction * (float(np.max(obj.extents)) + hand_distance)
        try:
            pose = infer_grasp_pose(obj, HandModel(wrist), lib)
        except (PoseInfeasible, NoSymmetry):
            continue
        pose.label = label
        out.append(pose)
    return out
