"""Qualitative spatial relations: extraction, composition, operationalization.

The vocabulary is a seven-relation reconstruction of the RCC8/TPCC subsets
used for desk-scale scenes: four viewer-relative directional relations on
the horizontal plane, on/under from the support graph, and touching for
non-support face contact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from . import scene as sc
from .scene import SceneState, ObjectInstance

RELATIONS = ("left", "right", "front", "behind", "on", "under", "touching")
INVERSE = {"left": "right", "right": "left", "front": "behind", "behind": "front",
           "on": "under", "under": "on", "touching": "touching"}
DIRECTIONAL = ("left", "right", "front", "behind")

NEUTRAL_CONE = math.radians(22.5)
DEFAULT_VIEWPOINT = np.array([0.0, 0.4, -1.0])


class QsrError(Exception):
    pass


class Inconsistent(QsrError):
    def __init__(self, chain, forced, existing):
        super().__init__(f"chain {chain} forces {forced}, contradicting {existing}")
        self.chain = chain
        self.forced = forced
        self.existing = existing


class NoPlacement(QsrError):
    pass


class RelationGraph:
    """Labeled directed relations with the inverse-closure invariant."""

    def __init__(self, edges: Iterable[tuple[str, str, str]] = ()):
        self._edges: set[tuple[str, str, str]] = set()
        for i, rel, j in edges:
            self.add(i, rel, j)

    def add(self, i: str, rel: str, j: str):
        if i == j:
            raise QsrError(f"self edge {i}")
        if rel not in RELATIONS:
            raise QsrError(f"unknown relation {rel!r}")
        self._edges.add((i, rel, j))
        self._edges.add((j, INVERSE[rel], i))

    def discard(self, i: str, rel: str, j: str):
        self._edges.discard((i, rel, j))
        self._edges.discard((j, INVERSE[rel], i))

    def __contains__(self, edge: tuple[str, str, str]) -> bool:
        return edge in self._edges

    def __len__(self) -> int:
        return len(self._edges)

    def __eq__(self, other) -> bool:
        return isinstance(other, RelationGraph) and self._edges == other._edges

    def edges(self) -> list[tuple[str, str, str]]:
        return sorted(self._edges)

    def nodes(self) -> list[str]:
        return sorted({i for i, _, _ in self._edges} | {j for _, _, j in self._edges})

    def relations_between(self, i: str, j: str) -> set[str]:
        return {rel for a, rel, b in self._edges if a == i and b == j}

    def copy(self) -> "RelationGraph":
        g = RelationGraph()
        g._edges = set(self._edges)
        return g

    def serialize(self) -> str:
        return "\n".join(f"{i} {rel} {j}" for i, rel, j in self.edges()) + "\n"

    @classmethod
    def parse(cls, text: str) -> "RelationGraph":
        g = cls()
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            i, rel, j = line.split()
            g.add(i, rel, j)
        return g


# ---------------------------------------------------------------------------
# Extraction

def _viewer_frame(viewpoint: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal (right, forward) unit vectors for a viewpoint at the -Z side."""
    forward = -np.asarray(viewpoint, dtype=float)
    forward[1] = 0.0
    n = np.linalg.norm(forward)
    forward = np.array([0.0, 0.0, 1.0]) if n < 1e-9 else forward / n
    right = np.cross(sc.WORLD_UP, forward)
    right = right / np.linalg.norm(right)
    return right, forward


def _vertical_overlap(a: ObjectInstance, b: ObjectInstance) -> float:
    amin, amax = a.aabb()
    bmin, bmax = b.aabb()
    return min(amax[1], bmax[1]) - max(amin[1], bmin[1])


def extract_relations(scene: SceneState,
                      viewpoint: Optional[np.ndarray] = None,
                      objects: Optional[list[str]] = None) -> RelationGraph:
    """Qualitative relations of the current scene, viewer-relative.

    Directional relations are computed on the horizontal plane between
    objects at comparable height (overlapping vertical intervals), with a
    +-22.5 degree neutral cone per axis.  On/under come from the support
    graph, touching from non-support face contact.  ``objects`` restricts
    extraction to a subset of the scene.
    """
    vp = DEFAULT_VIEWPOINT if viewpoint is None else np.asarray(viewpoint, dtype=float)
    right, forward = _viewer_frame(vp)
    g = RelationGraph()
    ids = sorted(scene.objects) if objects is None else sorted(objects)
    for a, b in scene.support:
        if a in ids and b in ids:
            g.add(a, "under", b)
    for x in range(len(ids)):
        for y in range(x + 1, len(ids)):
            i, j = ids[x], ids[y]
            oi, oj = scene.objects[i], scene.objects[j]
            in_support = (i, j) in scene.support or (j, i) in scene.support
            if not in_support and sc.touching(oi, oj):
                g.add(i, "touching", j)
            if in_support or _vertical_overlap(oi, oj) <= 1e-6:
                continue
            d = oi.position - oj.position
            dh = np.array([float(np.dot(d, right)), float(np.dot(d, forward))])
            norm = float(np.linalg.norm(dh))
            if norm < 1e-9:
                continue
            ang = math.atan2(dh[1], dh[0])  # 0 = right, pi/2 = away from viewer
            for rel, center in (("right", 0.0), ("behind", math.pi / 2),
                                ("left", math.pi), ("front", -math.pi / 2)):
                delta = abs((ang - center + math.pi) % (2 * math.pi) - math.pi)
                if delta <= NEUTRAL_CONE:
                    g.add(i, rel, j)
                    break
    return g


# ---------------------------------------------------------------------------
# Composition

class CompositionTable:
    """Partial (rel1, rel2) -> possible rel3 map for chains i-r1-j-r2-k."""

    def __init__(self, entries: Optional[dict] = None):
        if entries is None:
            entries = {}
            for rel in DIRECTIONAL + ("on", "under"):
                if rel in DIRECTIONAL:
                    entries[(rel, rel)] = {rel}
            entries[("on", "on")] = set()     # direct support is not transitive
            entries[("under", "under")] = set()
        self.entries = entries
        self._check_inverse_consistency()

    def _check_inverse_consistency(self):
        for (r, s), outs in self.entries.items():
            mirror = self.entries.get((INVERSE[s], INVERSE[r]))
            if mirror is not None and {INVERSE[o] for o in outs} != mirror:
                raise QsrError(f"composition table inconsistent at ({r}, {s})")

    def compose(self, r1: str, r2: str) -> Optional[set[str]]:
        return self.entries.get((r1, r2))


CONTRADICTIONS = {("left", "right"), ("right", "left"), ("front", "behind"),
                   ("behind", "front"), ("on", "under"), ("under", "on")}


def check_consistency(g: RelationGraph):
    for i, rel, j in g.edges():
        for other in g.relations_between(i, j):
            if (rel, other) in CONTRADICTIONS:
                raise Inconsistent(((i, rel, j),), (i, other, j), (i, rel, j))


def compose_closure(g: RelationGraph,
                    table: Optional[CompositionTable] = None) -> RelationGraph:
    """Fixpoint of adding forced relations; raises Inconsistent on conflict."""
    table = table or CompositionTable()
    out = g.copy()
    check_consistency(out)
    changed = True
    while changed:
        changed = False
        for i, r1, j in list(out.edges()):
            for j2, r2, k in list(out.edges()):
                if j2 != j or k == i:
                    continue
                forced = table.compose(r1, r2)
                if not forced:
                    continue
                for rel in sorted(forced):
                    if (i, rel, k) in out:
                        continue
                    for existing in out.relations_between(i, k):
                        if (rel, existing) in CONTRADICTIONS:
                            raise Inconsistent(((i, r1, j), (j, r2, k)),
                                               (i, rel, k), (i, existing, k))
                    out.add(i, rel, k)
                    changed = True
    return out


# ---------------------------------------------------------------------------
# Operationalization

MAX_REJECTIONS = 200


def _direction_vector(rel: str, viewpoint: np.ndarray) -> np.ndarray:
    right, forward = _viewer_frame(viewpoint)
    return {"right": right, "left": -right, "behind": forward, "front": -forward}[rel]


def operationalize(rel: tuple[str, str, str], scene: SceneState, seed: int = 0,
                   viewpoint: Optional[np.ndarray] = None,
                   max_attempts: int = MAX_REJECTIONS) -> SceneState:
    """Reposition object i so that extract_relations contains (i, rel, j).

    Placement parameters are rejection-sampled; deterministic under seed.
    """
    i, relation, j = rel
    vp = DEFAULT_VIEWPOINT if viewpoint is None else np.asarray(viewpoint, dtype=float)
    rng = np.random.default_rng(seed)
    obj = scene.objects[i]
    anchor = scene.objects[j]
    others = [o for o in scene.objects.values() if o.id != i]

    for attempt in range(max_attempts):
        trial = obj.copy()
        if relation in ("on",):
            jitter = rng.uniform(-0.3, 0.3, size=2) * (anchor.extents[[0, 2]])
            top = anchor.aabb()[1][1]
            trial.position = np.array([anchor.position[0] + jitter[0],
                                       top + float(obj.extents[1]),
                                       anchor.position[2] + jitter[1]])
        elif relation == "under":
            return operationalize((j, "on", i), scene, seed, viewpoint, max_attempts)
        elif relation == "touching":
            # prefer lateral contact (the common assembly direction);
            # fall back to depth contact on later attempts
            direction = _direction_vector(
                ("right", "left", "front", "behind")[min(rng.integers(3), 1) if attempt < max_attempts // 2
                                                    else rng.integers(4)], vp)
            gap = rng.uniform(0.0, sc.TOUCH_GAP * 0.5)
            span = _span_along(anchor, direction) + _span_along(obj, direction) + gap
            trial.position = anchor.position + direction * span
            _settle(trial, others)
        elif relation in DIRECTIONAL:
            direction = _direction_vector(relation, vp)
            # half the draws sit flush against the anchor (plausible for
            # assembly), the rest stand off by up to 12 cm
            dist = 0.0 if rng.random() < 0.5 else float(rng.uniform(0.0, 0.12))
            span = _span_along(anchor, direction) + _span_along(obj, direction)
            lateral = rng.uniform(-0.02, 0.02)
            perp = np.cross(sc.WORLD_UP, direction)
            trial.position = (anchor.position + direction * (span + 0.001 + dist)
                              + perp * lateral)
            _settle(trial, others)  # rest on whatever lies beneath
        else:
            raise QsrError(f"cannot operationalize relation {relation!r}")
        if any(sc.obb_penetration(trial, o) > 1e-6 for o in others):
            continue
        candidate = scene.snapshot()
        candidate.objects[i] = trial
        candidate.recompute_support()
        if (i, relation, j) in extract_relations(candidate, vp):
            scene.objects[i] = trial
            scene.recompute_support()
            return scene
    raise NoPlacement(f"no placement found for {rel} after {max_attempts} attempts")


def _settle(trial: ObjectInstance, others: list[ObjectInstance]):
    """Drop the trial object onto the highest surface under its footprint."""
    amin, amax = trial.aabb()
    best_top = 0.0
    for o in others:
        omin, omax = o.aabb()
        if (min(amax[0], omax[0]) - max(amin[0], omin[0]) > 1e-6
                and min(amax[2], omax[2]) - max(amin[2], omin[2]) > 1e-6):
            best_top = max(best_top, float(omax[1]))
    trial.position = trial.position + np.array([0.0, best_top - float(amin[1]), 0.0])


def _span_along(obj: ObjectInstance, direction: np.ndarray) -> float:
    corners = obj.world_corners() - obj.position
    return float(np.max(corners @ direction))
