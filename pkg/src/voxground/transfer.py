"""Affordance embedding: collocation of habitats and affordances.

A small classifier learns which (habitat, affordance) pairs co-occur in
the object vocabulary. The trained model answers second-order queries
("what else happens in the habitats where this action applies?") and
ranks known objects analogically against a novel shape, transferring a
grasp strategy from the best match.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import neural
from . import scene as sc
from .voxml import (Affordance, Habitat, TypeStruct, Voxeme, VoxemeLibrary,
                    seed_library)

ACTIONS = ("grasp", "lean", "lift", "put", "roll", "slide", "ungrasp")
RESULTS = ("contain", "hold", "release", "support")
AXES = ("X", "Y", "Z")
HEADS = ("assembly", "cuboid", "cylindroid", "ellipsoid")

NEGATIVE_RATIO = 3


class TransferError(Exception):
    pass


class UnknownAction(TransferError):
    pass


class NoMatch(TransferError):
    pass


# ---------------------------------------------------------------------------
# Featurization

# habitat: align target one-hot (E_axis or perp(E_axis)) + top-face one-hot
# (sign x axis, or none) + intrinsic/extrinsic/universal flag
_HABITAT_DIM = 6 + 7 + 3
# affordance: action one-hot + result one-hot (possibly none)
_AFFORDANCE_DIM = len(ACTIONS) + len(RESULTS)
PAIR_DIM = _HABITAT_DIM + _AFFORDANCE_DIM

UNIVERSAL = "universal"


def habitat_features(h: Optional[Habitat]) -> np.ndarray:
    """None encodes the universal pseudo-habitat (unconditioned pairs)."""
    v = np.zeros(_HABITAT_DIM)
    if h is None:
        v[-1] = 1.0
        return v
    if h.align is not None:
        idx = AXES.index(h.align.frame_axis)
        v[idx + (3 if h.align.perpendicular else 0)] = 1.0
    if h.top is not None:
        v[6 + AXES.index(h.top.axis) * 2 + (0 if h.top.sign > 0 else 1)] = 1.0
    else:
        v[12] = 1.0
    v[13 if h.kind == "intr" else 14] = 1.0
    return v


def affordance_features(a: Affordance) -> np.ndarray:
    v = np.zeros(_AFFORDANCE_DIM)
    action = a.event.name
    if action not in ACTIONS:
        raise TransferError(f"action {action!r} outside the closed vocabulary")
    v[ACTIONS.index(action)] = 1.0
    if a.result is not None and a.result.name in RESULTS:
        v[len(ACTIONS) + RESULTS.index(a.result.name)] = 1.0
    return v


@dataclass
class HAPair:
    features: np.ndarray
    voxeme: str
    habitat: Optional[int]   # habitat label, None for universal
    affordance: int          # affordance label
    label: int               # 1 collocated, 0 not


def _pair(v: Voxeme, h: Optional[Habitat], a: Affordance, label: int) -> HAPair:
    feats = np.concatenate([habitat_features(h), affordance_features(a)])
    return HAPair(feats, v.name, None if h is None else h.label,
                  a.label, label)


def build_pair_dataset(lib: VoxemeLibrary,
                       negative_ratio: int = NEGATIVE_RATIO,
                       seed: int = 0) -> list[HAPair]:
    """All attested pairs as positives; mismatched pairs as negatives.

    An affordance with an empty condition is universal and pairs with the
    universal pseudo-habitat; a conditioned affordance pairs with each
    habitat it names. Negatives are drawn from habitat/affordance
    combinations never attested anywhere in the library.
    """
    rng = np.random.default_rng(seed)
    positives: list[HAPair] = []
    for v in lib.objects():
        by_label = {h.label: h for h in v.habitats}
        for a in v.affordances:
            if not a.condition:
                positives.append(_pair(v, None, a, 1))
            else:
                for lbl in a.condition:
                    if lbl in by_label:
                        positives.append(_pair(v, by_label[lbl], a, 1))
    if not positives:
        return []

    seen = {tuple(p.features) for p in positives}
    candidates: list[HAPair] = []
    objects = lib.objects()
    for v in objects:
        habitats: list[Optional[Habitat]] = [None] + list(v.habitats)
        for w in objects:
            for a in w.affordances:
                for h in habitats:
                    p = _pair(v, h, a, 0)
                    key = tuple(p.features)
                    if key not in seen:
                        seen.add(key)
                        candidates.append(p)
    rng.shuffle(candidates)
    negatives = candidates[:negative_ratio * len(positives)]
    return positives + negatives


# ---------------------------------------------------------------------------
# Embedding models

MLP7 = "mlp7"
CNN4 = "cnn4"


@dataclass
class EmbeddingModel:
    arch: str
    net: neural.Network
    calibration: dict = field(default_factory=dict)


def _build_net(arch: str, seed: int) -> neural.Network:
    if arch == MLP7:
        widths = [PAIR_DIM, 64, 64, 48, 32, 16, 8]
        specs = [{"kind": "dense", "in": a, "out": b, "activation": "tanh"}
                 for a, b in zip(widths, widths[1:])]
        specs.append({"kind": "dense", "in": widths[-1], "out": 2,
                      "activation": "linear"})
        return neural.Network.build(specs, seed=seed)
    if arch == CNN4:
        length = PAIR_DIM - 2 - 2  # two valid k=3 convolutions
        return neural.Network.build([
            {"kind": "conv1d", "in": 1, "out": 16, "kernel": 3,
             "activation": "relu"},
            {"kind": "conv1d", "in": 16, "out": 16, "kernel": 3,
             "activation": "relu"},
            {"kind": "flatten"},
            {"kind": "dense", "in": length * 16, "out": 32,
             "activation": "tanh"},
            {"kind": "dense", "in": 32, "out": 2, "activation": "linear"},
        ], seed=seed)
    raise TransferError(f"unknown architecture {arch!r}")


def _inputs(pairs: list[HAPair], arch: str) -> np.ndarray:
    x = np.stack([p.features for p in pairs])
    if arch == CNN4:
        x = x[:, :, None]
    return x


def train_embedding(pairs: list[HAPair], arch: str = MLP7,
                    epochs: int = 200, seed: int = 0) -> EmbeddingModel:
    if not pairs:
        raise TransferError("empty pair dataset")
    net = _build_net(arch, seed)
    x = _inputs(pairs, arch)
    y = np.array([p.label for p in pairs])
    lr = 5e-3 if arch == MLP7 else 2e-3
    curve = neural.train_classifier(
        net, x, y, neural.TrainConfig(learning_rate=lr, epochs=epochs,
                                      batch_size=16, seed=seed))
    return EmbeddingModel(arch, net, {"final_loss": curve[-1],
                                      "n_pairs": len(pairs)})


def collocation_probability(m: EmbeddingModel, pair: HAPair) -> float:
    if not m.net.trained:
        raise neural.ModelNotTrained("embedding model is untrained")
    x = _inputs([pair], m.arch)
    return float(neural.softmax(m.net.forward(x))[0, 1])


# ---------------------------------------------------------------------------
# Second-order collocation queries

def describe_habitat_for(action: str, m: EmbeddingModel,
                         lib: Optional[VoxemeLibrary] = None
                         ) -> list[dict]:
    """For each habitat where the action applies, the co-located
    affordances that do not mention the action, ranked by probability."""
    if action not in ACTIONS:
        raise UnknownAction(action)
    lib = lib or seed_library()
    out = []
    for v in lib.objects():
        by_label = {h.label: h for h in v.habitats}
        applies: set[Optional[int]] = set()
        for a in v.affordances:
            if a.event.name != action:
                continue
            if not a.condition:
                applies.update(by_label)   # universal: applies everywhere
            else:
                applies.update(l for l in a.condition if l in by_label)
        for lbl in sorted(applies, key=lambda x: (x is None, x)):
            h = by_label[lbl]
            ranked = []
            for a in v.affordances:
                if a.event.name == action:
                    continue
                if a.condition and lbl not in a.condition:
                    continue
                p = collocation_probability(
                    m, _pair(v, h if a.condition else None, a, 1))
                ranked.append({"action": a.event.name,
                               "result": a.result.name if a.result else None,
                               "probability": round(p, 6)})
            ranked.sort(key=lambda r: (-r["probability"], r["action"]))
            out.append({"voxeme": v.name, "habitat": lbl, "answers": ranked})
    return out


# ---------------------------------------------------------------------------
# Analogical object reference

def infer_shape(obj: sc.ObjectInstance) -> TypeStruct:
    """Symmetry from geometry: principal extents equal within 5%."""
    e = np.asarray(obj.extents, dtype=float)
    rot = []
    for i, axis in enumerate(AXES):
        j, k = [m for m in range(3) if m != i]
        if abs(e[j] - e[k]) <= 0.05 * max(e[j], e[k]):
            rot.append(axis)
    refl = []
    planes = {"X": "YZ", "Y": "XZ", "Z": "XY"}
    for axis in AXES:
        refl.append(planes[axis])
    head = "cylindroid" if rot else "cuboid"
    return TypeStruct(head=head, components=(),
                      rotational_symmetry=tuple(rot),
                      reflectional_symmetry=tuple(sorted(refl)))


def _shape_bits(t: TypeStruct) -> np.ndarray:
    v = np.zeros(len(HEADS) + 3 + 3 + 1)
    if t.head in HEADS:
        v[HEADS.index(t.head)] = 1.0
    for axis in t.rotational_symmetry:
        v[len(HEADS) + AXES.index(axis)] = 1.0
    for plane in t.reflectional_symmetry:
        normal = {"YZ": "X", "XZ": "Y", "XY": "Z"}[plane]
        v[len(HEADS) + 3 + AXES.index(normal)] = 1.0
    if t.concave_component is not None:
        v[-1] = 1.0
    return v


def _infer_habitats(t: TypeStruct) -> list[Habitat]:
    """Default habitats implied by shape: upright, plus lying when the
    object presents a rolling axis."""
    from .voxml import AlignPred, TopPred
    habs = [Habitat(label=3, kind="intr",
                    align=AlignPred("Y", "Y"), top=TopPred(+1, "Y"))]
    if "Y" in t.rotational_symmetry:
        habs.append(Habitat(label=5, kind="extr",
                            align=AlignPred("Y", "Y", perpendicular=True),
                            top=None))
    return habs


def _habitat_similarity(a: Habitat, b: Habitat) -> float:
    fa, fb = habitat_features(a), habitat_features(b)
    return 1.0 - float(np.sum(np.abs(fa - fb))) / len(fa)


@dataclass
class Analogy:
    ranking: list[tuple[str, float]]
    grasp_like: str
    grasp_pose: Optional[sc.GraspPose]


def analogical_object(obj: sc.ObjectInstance, m: EmbeddingModel,
                      lib: Optional[VoxemeLibrary] = None,
                      shape: Optional[TypeStruct] = None,
                      floor: float = 0.4) -> Analogy:
    """Rank known objects by habitat similarity weighted by collocation.

    Uses the object's declared shape when its voxeme is known, an
    explicitly supplied shape otherwise, or symmetry inferred from the
    geometry as a last resort.
    """
    lib = lib or seed_library()
    if shape is None:
        declared = lib.get(obj.voxeme)
        if declared is not None and declared.type_info is not None:
            shape = declared.type_info
        else:
            shape = infer_shape(obj)
    if not shape.rotational_symmetry and not shape.reflectional_symmetry:
        raise NoMatch("no declared or inferable symmetry")

    declared = lib.get(obj.voxeme)
    if declared is not None and declared.habitats:
        novel_habitats = list(declared.habitats)
    else:
        novel_habitats = _infer_habitats(shape)
    novel_bits = _shape_bits(shape)

    scores: list[tuple[str, float]] = []
    for v in lib.objects():
        if v.type_info is None or not v.habitats:
            continue
        bits = _shape_bits(v.type_info)
        shape_sim = 1.0 - float(np.sum(np.abs(bits - novel_bits))) / len(bits)
        by_label = {h.label: h for h in v.habitats}
        covered = 0.0
        for h in v.habitats:
            sim = max(_habitat_similarity(h, nh) for nh in novel_habitats)
            probs = [collocation_probability(m, _pair(v, by_label.get(l), a, 1))
                     for a in v.affordances
                     for l in (a.condition or (None,))
                     if l is None or l == h.label]
            # saturating affordance mass: richer habitats transfer more
            mass = float(np.sum(probs))
            covered += sim * mass / (1.0 + mass)
        covered /= len(v.habitats)
        matched = float(np.mean(
            [max(_habitat_similarity(h, nh) for h in v.habitats)
             for nh in novel_habitats]))
        hab_score = 0.5 * (covered + matched)
        bonus = 1.0 if v.name == obj.voxeme else 0.0
        scores.append((v.name, shape_sim + hab_score + bonus))
    scores.sort(key=lambda t: (-t[1], t[0]))
    if not scores or scores[0][1] < floor:
        raise NoMatch("no library object above the similarity floor")

    top = scores[0][0]
    pose = None
    grasp_lib = lib
    if lib.get(obj.voxeme) is None or lib[obj.voxeme].type_info is None:
        # register the inferred shape so grasp inference can use it
        grasp_lib = VoxemeLibrary(lib.objects() + lib.events())
        template = lib[top]
        grasp_lib.add(Voxeme(name=obj.voxeme, lex=template.lex,
                             type_info=shape, habitats=template.habitats,
                             affordances=(), embodiment=template.embodiment))
    candidates = sc.grasp_pose_candidates(obj, library=grasp_lib)
    if candidates:
        pose = candidates[0]
    return Analogy(scores, top, pose)
