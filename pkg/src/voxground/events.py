"""Dynamic event structure programs: parsing, interpretation, parameters.

An event program is built from sequencing, while, and if constructs over
primitive predicates.  Programs are assembled by recomposition: the verb
supplies a program template from the event voxemes, noun phrases resolve
against the scene, and prepositional phrases become goal locations.
Underspecified parameters (speed, lean angle, placement) are filled by
rejection sampling against a rule-based acceptability judge, or by a
trained predictor.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from . import neural, scene as sc
from .voxml import Term, Var, CompRef, VoxemeLibrary, parse_term, seed_library

TICK = 0.05           # s
DEFAULT_SPEED = 0.5   # m/s
AT_TOLERANCE = 0.02   # m
MAX_SAMPLE_ATTEMPTS = 200


class EventError(Exception):
    pass


class UnknownVerb(EventError):
    pass


class UnresolvedReference(EventError):
    def __init__(self, np_text: str):
        super().__init__(f"cannot resolve {np_text!r}")
        self.np = np_text


class AmbiguousReference(EventError):
    def __init__(self, np_text: str, candidates: list[str]):
        super().__init__(f"{np_text!r} is ambiguous among {candidates}")
        self.np = np_text
        self.candidates = candidates


class NoFeasibleSample(EventError):
    pass


class ArityMismatch(EventError):
    pass


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Seq:
    children: tuple

    def __str__(self):
        return "; ".join(str(c) for c in self.children)


@dataclass(frozen=True)
class While:
    cond: object
    body: object

    def __str__(self):
        return f"while({self.cond}, {self.body})"


@dataclass(frozen=True)
class If:
    cond: object
    body: object

    def __str__(self):
        return f"if({self.cond}, {self.body})"


@dataclass(frozen=True)
class Prim:
    pred: str
    event_index: Optional[str]
    args: tuple

    def __str__(self):
        head = [self.event_index] if self.event_index else []
        return f"{self.pred}({', '.join(head + [str(a) for a in self.args])})"


@dataclass(frozen=True)
class Lam:
    var: str
    body: object

    def __str__(self):
        return f"lambda {self.var}. {self.body}"


@dataclass(frozen=True)
class App:
    fn: object
    arg: object

    def __str__(self):
        return f"({self.fn}) @ {self.arg}"


@dataclass(frozen=True)
class LocSpec:
    """Goal location: a region relative to an anchor object, or a point."""
    anchor: Optional[str] = None
    relation: Optional[str] = None  # left/right/front/behind/on/in/near
    point: Optional[tuple] = None

    def __str__(self):
        if self.point is not None:
            return f"loc({self.point[0]:.3f}, {self.point[2]:.3f})"
        return f"loc({self.relation} {self.anchor})"


Node = Union[Seq, While, If, Prim, Lam, App]

_PRIMS = {"grasp", "ungrasp", "move_to", "move_dir", "lift", "lean_on",
          "roll_dir", "put"}
_COND_PREDS = {"hold", "on", "at", "not", "and", "or"}


def _term_to_node(t) -> Node:
    if isinstance(t, Term) and t.name == "while" and len(t.args) == 2:
        return While(t.args[0], _term_to_node(t.args[1]))
    if isinstance(t, Term) and t.name == "if" and len(t.args) == 2:
        return If(t.args[0], _term_to_node(t.args[1]))
    if isinstance(t, Term) and t.name == "lambda" and len(t.args) == 2:
        var = t.args[0]
        name = var.name if isinstance(var, (Var, Term)) else str(var)
        return Lam(name, _term_to_node(t.args[1]))
    if isinstance(t, Term) and t.name in _PRIMS:
        args = list(t.args)
        idx = None
        if args and isinstance(args[0], Term) and re.fullmatch(r"e\d+", args[0].name):
            idx = args.pop(0).name
        return Prim(t.name, idx, tuple(args))
    raise EventError(f"cannot interpret term {t} as a program node")


def parse_des(source: str) -> Node:
    """Parse DES source text (semicolon-sequenced term statements)."""
    stmts = _split_top(source)
    nodes = [_term_to_node(parse_term(s)) for s in stmts]
    prog = nodes[0] if len(nodes) == 1 else Seq(tuple(nodes))
    _check_event_indices(prog)
    return prog


def _split_top(source: str) -> list[str]:
    out, depth, cur = [], 0, []
    for ch in source:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == ";" and depth == 0:
            out.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail:
        out.append(tail)
    return out


def _collect_prims(node: Node) -> list[Prim]:
    if isinstance(node, Prim):
        return [node]
    if isinstance(node, Seq):
        return [p for c in node.children for p in _collect_prims(c)]
    if isinstance(node, (While, If)):
        return _collect_prims(node.body)
    if isinstance(node, Lam):
        return _collect_prims(node.body)
    if isinstance(node, App):
        return _collect_prims(node.fn)
    return []


def _check_event_indices(node: Node):
    indices = [p.event_index for p in _collect_prims(node) if p.event_index]
    if len(indices) != len(set(indices)):
        raise EventError(f"duplicate event indices {indices}")


def free_vars(node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Term):
        out = set()
        for a in node.args:
            out |= free_vars(a)
        return out
    if isinstance(node, Prim):
        out = set()
        for a in node.args:
            out |= free_vars(a)
        return out
    if isinstance(node, Seq):
        out = set()
        for c in node.children:
            out |= free_vars(c)
        return out
    if isinstance(node, (While, If)):
        return free_vars(node.cond) | free_vars(node.body)
    if isinstance(node, Lam):
        return free_vars(node.body) - {node.var}
    if isinstance(node, App):
        return free_vars(node.fn) | free_vars(node.arg)
    return set()


_fresh_counter = itertools.count()


def _substitute(node, var: str, value):
    """Capture-avoiding substitution of ``value`` for ``var``."""
    if isinstance(node, Var):
        return value if node.name == var else node
    if isinstance(node, Term):
        return Term(node.name, tuple(_substitute(a, var, value) for a in node.args))
    if isinstance(node, Prim):
        return Prim(node.pred, node.event_index,
                    tuple(_substitute(a, var, value) for a in node.args))
    if isinstance(node, Seq):
        return Seq(tuple(_substitute(c, var, value) for c in node.children))
    if isinstance(node, While):
        return While(_substitute(node.cond, var, value), _substitute(node.body, var, value))
    if isinstance(node, If):
        return If(_substitute(node.cond, var, value), _substitute(node.body, var, value))
    if isinstance(node, Lam):
        if node.var == var:
            return node
        if node.var in free_vars(value):
            fresh = f"{node.var}_{next(_fresh_counter)}"
            renamed = _substitute(node.body, node.var, Var(fresh))
            return Lam(fresh, _substitute(renamed, var, value))
        return Lam(node.var, _substitute(node.body, var, value))
    if isinstance(node, App):
        return App(_substitute(node.fn, var, value), _substitute(node.arg, var, value))
    return node


def apply_continuation(program, arg):
    """Beta-reduce a Lambda program: (lambda y. body) @ arg => body[y := arg].

    Attached operationalizations (bound grasp poses) travel with the
    substituted argument, reaching every grasp subevent over it.
    """
    if not isinstance(program, Lam):
        raise ArityMismatch(f"cannot apply non-lambda {type(program).__name__}")
    return _substitute(program.body, program.var, arg)


# ---------------------------------------------------------------------------
# Underspecified parameters

SLOT_PRIORS = {
    "speed": (0.1, 2.0),                  # m/s
    "leanAngle": (math.radians(10), math.radians(80)),
    "rollDistance": (0.05, 0.3),          # m
    "placementPoint": None,               # sampled over the target top face
    "pathShape": ("straight", "arc"),
}

# rule-based acceptability judge standing in for crowd annotation: closed
# per-verb bands over the underspecified parameter values
JUDGE_BANDS = {
    "speed": (0.2, 1.5),
    "leanAngle": (math.radians(20), math.radians(60)),
    "rollDistance": (0.05, 0.3),
}
PLACEMENT_EDGE_MARGIN = 0.01  # m from the support edge


def judge_acceptable(slot: str, value, scene=None, anchor: Optional[str] = None,
                     mover: Optional[str] = None) -> bool:
    """Synthetic acceptability oracle for underspecified parameter values."""
    if slot in JUDGE_BANDS:
        lo, hi = JUDGE_BANDS[slot]
        return lo <= float(value) <= hi
    if slot == "placementPoint":
        if scene is None or anchor is None:
            return True
        a = scene.objects[anchor]
        top = a.aabb()
        px, pz = float(value[0]), float(value[1])
        half = a.extents
        dx = abs(px - a.position[0])
        dz = abs(pz - a.position[2])
        margin = PLACEMENT_EDGE_MARGIN
        if mover is not None:
            m = scene.objects[mover]
            margin = max(margin, -min(float(half[0]) - float(m.extents[0]),
                                      float(half[2]) - float(m.extents[2]), 0.0))
        return dx <= float(half[0]) - margin and dz <= float(half[2]) - margin
    if slot == "pathShape":
        return True
    raise EventError(f"unknown slot {slot!r}")


@dataclass
class UnderspecifiedParams:
    open_slots: list[str] = field(default_factory=list)
    bound: dict = field(default_factory=dict)
    anchor: Optional[str] = None
    mover: Optional[str] = None


def sample_parameters(program, params: UnderspecifiedParams, seed: int,
                      scene=None) -> dict:
    """Draw each open slot from its prior, rejecting infeasible samples."""
    rng = np.random.default_rng(seed)
    bound = dict(params.bound)
    for slot in params.open_slots:
        prior = SLOT_PRIORS.get(slot, ...)
        if prior is ...:
            raise NoFeasibleSample(f"no prior defined for slot {slot!r}")
        for _ in range(MAX_SAMPLE_ATTEMPTS):
            if slot == "placementPoint":
                if scene is None or params.anchor is None:
                    raise NoFeasibleSample("placement sampling requires a scene anchor")
                a = scene.objects[params.anchor]
                x = float(rng.uniform(a.position[0] - a.extents[0],
                                      a.position[0] + a.extents[0]))
                z = float(rng.uniform(a.position[2] - a.extents[2],
                                      a.position[2] + a.extents[2]))
                value = (x, z)
            elif slot == "pathShape":
                value = prior[int(rng.integers(len(prior)))]
            else:
                lo, hi = prior
                value = float(rng.uniform(lo, hi))
            if judge_acceptable(slot, value, scene, params.anchor, params.mover):
                bound[slot] = value
                break
        else:
            raise NoFeasibleSample(f"no feasible sample for slot {slot!r}")
    return bound


# ---------------------------------------------------------------------------
# Parameter predictor (feedforward net over verb/geometry/relation features)

_VERBS = ("slide", "slide_to", "put", "lean", "roll", "lift", "grasp")
_REL_FEATS = ("none", "left", "right", "front", "behind", "on", "in", "near")
_HEADS = ("cylindroid", "cuboid", "ellipsoid", "assembly", "sheet")
_PARAM_BINS = 20


def encode_event_features(verb: str, mover_extents, anchor_extents,
                          mover_head: str, relation: str) -> np.ndarray:
    feats = np.zeros(len(_VERBS) + len(_HEADS) + 6 + len(_REL_FEATS))
    if verb in _VERBS:
        feats[_VERBS.index(verb)] = 1.0
    off = len(_VERBS)
    if mover_head in _HEADS:
        feats[off + _HEADS.index(mover_head)] = 1.0
    off += len(_HEADS)
    feats[off:off + 3] = np.asarray(mover_extents) * 10.0
    feats[off + 3:off + 6] = np.asarray(anchor_extents if anchor_extents is not None
                                        else (0, 0, 0)) * 10.0
    off += 6
    rel = relation if relation in _REL_FEATS else "none"
    feats[off + _REL_FEATS.index(rel)] = 1.0
    return feats


class ParameterPredictor:
    """Predicts underspecified values by classifying into prior-range bins."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.nets: dict[str, neural.Network] = {}

    def _net(self, slot: str) -> neural.Network:
        n_in = len(encode_event_features("slide", (0, 0, 0), None, "cuboid", "none"))
        return neural.Network.build([
            {"kind": "dense", "in": n_in, "out": 32, "activation": "tanh"},
            {"kind": "dense", "in": 32, "out": _PARAM_BINS, "activation": "linear"},
        ], seed=self.seed)

    @staticmethod
    def _bin_of(slot: str, value: float) -> int:
        lo, hi = SLOT_PRIORS[slot]
        frac = (float(value) - lo) / (hi - lo)
        return min(_PARAM_BINS - 1, max(0, int(frac * _PARAM_BINS)))

    @staticmethod
    def _value_of(slot: str, bin_idx: int) -> float:
        lo, hi = SLOT_PRIORS[slot]
        return lo + (bin_idx + 0.5) / _PARAM_BINS * (hi - lo)

    def train(self, slot: str, features: np.ndarray, values: np.ndarray,
              epochs: int = 60):
        net = self._net(slot)
        targets = np.array([self._bin_of(slot, v) for v in values])
        neural.train_classifier(net, features, targets,
                                neural.TrainConfig(learning_rate=5e-3, epochs=epochs,
                                                   seed=self.seed))
        self.nets[slot] = net

    def predict(self, slot: str, features: np.ndarray) -> float:
        if slot not in self.nets or not self.nets[slot].trained:
            raise neural.ModelNotTrained(f"no trained predictor for {slot!r}")
        logits = self.nets[slot].forward(features.reshape(1, -1))
        value = self._value_of(slot, int(np.argmax(logits[0])))
        lo, hi = SLOT_PRIORS[slot]
        return min(hi, max(lo, value))


_SLOT_VERBS = {"speed": ("slide", "slide_to"), "leanAngle": ("lean",),
               "rollDistance": ("roll",)}


def train_default_predictor(seed: int = 0, n_samples: int = 400,
                            epochs: int = 60) -> ParameterPredictor:
    """Predictor trained on synthetic events with judge-acceptable values."""
    rng = np.random.default_rng(seed)
    predictor = ParameterPredictor(seed=seed)
    for slot, verbs in _SLOT_VERBS.items():
        lo, hi = JUDGE_BANDS[slot]
        feats, values = [], []
        for _ in range(n_samples):
            verb = verbs[int(rng.integers(len(verbs)))]
            mover = rng.uniform(0.01, 0.12, size=3)
            anchor = rng.uniform(0.01, 0.12, size=3) if rng.random() < 0.7 else None
            head = _HEADS[int(rng.integers(len(_HEADS)))]
            rel = _REL_FEATS[int(rng.integers(len(_REL_FEATS)))]
            feats.append(encode_event_features(verb, mover, anchor, head, rel))
            values.append(float(rng.uniform(lo, hi)))
        predictor.train(slot, np.stack(feats), np.array(values), epochs=epochs)
    return predictor


def predict_parameters(program, params: UnderspecifiedParams,
                       predictor: ParameterPredictor, features: np.ndarray) -> dict:
    bound = dict(params.bound)
    for slot in params.open_slots:
        if slot == "placementPoint":
            if params.anchor is None:
                raise NoFeasibleSample("placement prediction requires an anchor")
            bound[slot] = "anchor-center"
        else:
            bound[slot] = predictor.predict(slot, features)
    return bound


# ---------------------------------------------------------------------------
# Utterance parsing

_COLORS = ("red", "green", "blue", "yellow", "purple", "orange", "black", "white")

VERB_EVENTS = {
    "slide": ("SLIDE", "SLIDE_TO"),
    "put": ("PUT", "PUT"),
    "move": ("PUT", "PUT"),
    "lean": ("LEAN", "LEAN"),
    "roll": ("ROLL", "ROLL"),
    "lift": ("LIFT", "LIFT"),
    "grasp": ("GRASP", "GRASP"),
    "grab": ("GRASP", "GRASP"),
}

VERB_OPEN_SLOTS = {
    "SLIDE": ["speed"],
    "SLIDE_TO": ["speed"],
    "PUT": ["placementPoint", "speed"],
    "LEAN": ["leanAngle"],
    "ROLL": ["rollDistance"],
    "LIFT": [],
    "GRASP": [],
}

_PP_RELS = {
    "to the left of": "left", "to the right of": "right",
    "in front of": "front", "behind": "behind",
    "on top of": "on", "on": "on", "in": "in", "into": "in", "to": "near",
    "next to": "touching",
}


class AnaphoraStore:
    """Single-slot focus store for it/this/that."""

    def __init__(self):
        self.focus: Optional[str] = None

    def set(self, oid: str):
        self.focus = oid


def resolve_np(np_text: str, scene: sc.SceneState,
               anaphora: Optional[AnaphoraStore] = None) -> str:
    words = np_text.lower().split()
    if words and words[0] in ("the", "a", "an"):
        words = words[1:]
    if words and words[0] in ("it", "this", "that") and len(words) == 1:
        if anaphora is None or anaphora.focus is None:
            raise UnresolvedReference(np_text)
        return anaphora.focus
    color = None
    if words and words[0] in _COLORS:
        color = words[0]
        words = words[1:]
    if not words:
        raise UnresolvedReference(np_text)
    noun = words[0]
    candidates = [o.id for o in scene.objects.values()
                  if o.voxeme == noun or scene.library[o.voxeme].lex.pred == noun]
    if color is not None:
        candidates = [c for c in candidates if color in c.lower()]
    candidates.sort()
    if not candidates:
        raise UnresolvedReference(np_text)
    if len(candidates) > 1:
        raise AmbiguousReference(np_text, candidates)
    return candidates[0]


def parse_utterance(text: str, scene: sc.SceneState,
                    anaphora: Optional[AnaphoraStore] = None,
                    library: Optional[VoxemeLibrary] = None
                    ) -> tuple[Node, UnderspecifiedParams]:
    """Parse ``Verb NP (PP)?`` into a ground DES program plus open slots."""
    lib = library or scene.library
    text = text.strip().rstrip(".!").lower()
    words = text.split()
    if not words:
        raise UnknownVerb("empty utterance")
    verb = words[0]
    if verb not in VERB_EVENTS:
        raise UnknownVerb(verb)
    rest = " ".join(words[1:])

    # find the prepositional phrase, longest preposition first
    pp_rel = None
    pp_anchor_text = None
    np_text = rest
    for prep in sorted(_PP_RELS, key=len, reverse=True):
        marker = f" {prep} "
        idx = rest.find(marker)
        if idx >= 0:
            np_text = rest[:idx]
            pp_rel = _PP_RELS[prep]
            pp_anchor_text = rest[idx + len(marker):]
            break

    mover = resolve_np(np_text, scene, anaphora)
    if anaphora is not None:
        anaphora.set(mover)
    anchor = resolve_np(pp_anchor_text, scene, anaphora) if pp_anchor_text else None

    event_name = VERB_EVENTS[verb][1 if pp_rel else 0]
    voxeme = lib[event_name]
    if voxeme.des is None:
        raise UnknownVerb(f"event voxeme {event_name} has no program")
    program = parse_des(voxeme.des)

    program = _substitute(program, "ag", Term("agent"))
    program = _substitute(program, "y", Term(mover))
    supporter = scene.supporter_of(mover)
    program = _substitute(program, "surf", Term(supporter if supporter else "floor"))
    if anchor is not None:
        loc = LocSpec(anchor=anchor, relation=pp_rel)
        program = _substitute(program, "loc", Term("__loc__", (Term(anchor), Term(pp_rel or "near"))))
    params = UnderspecifiedParams(open_slots=list(VERB_OPEN_SLOTS[event_name]),
                                  anchor=anchor, mover=mover)
    return program, params


# ---------------------------------------------------------------------------
# Execution

@dataclass
class TickRecord:
    clock: float
    node: str
    diff: dict


@dataclass
class ExecutionTrace:
    ticks: list[TickRecord] = field(default_factory=list)
    status: str = "completed"   # completed | incomplete(reason) | error(reason)

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def to_jsonl(self) -> str:
        import json
        lines = [json.dumps({"clock": round(t.clock, 6), "node": t.node,
                             "diff": t.diff}) for t in self.ticks]
        lines.append(json.dumps({"status": self.status}))
        return "\n".join(lines) + "\n"


class _WhileAborted(Exception):
    def __init__(self, reason: str):
        self.reason = reason


class _Interpreter:
    def __init__(self, scene: sc.SceneState, params: dict,
                 perturb: Optional[Callable] = None,
                 grasp_bindings: Optional[dict] = None):
        self.scene = scene
        self.params = params
        self.perturb = perturb
        self.grasp_bindings = grasp_bindings or {}
        self.trace = ExecutionTrace()
        self.tick_no = 0
        self._loc_cache: dict = {}

    # -- condition evaluation ---------------------------------------------

    def _resolve_loc(self, term: Term, mover: str) -> np.ndarray:
        key = str(term)
        if key in self._loc_cache:
            return self._loc_cache[key]
        anchor_id = term.args[0].name
        relation = term.args[1].name
        anchor = self.scene.objects[anchor_id]
        mobj = self.scene.objects[mover]
        if relation == "on":
            point = anchor.position + np.array([0.0, float(anchor.extents[1] + mobj.extents[1]), 0.0])
        elif relation in ("left", "right", "front", "behind"):
            from . import qsr
            direction = qsr._direction_vector(relation, qsr.DEFAULT_VIEWPOINT)
            span = (qsr._span_along(anchor, direction)
                    + qsr._span_along(mobj, direction) + 0.02)
            point = anchor.position + direction * span
            point = np.array([point[0], mobj.position[1], point[2]])
        else:  # near / in / touching
            d = mobj.position - anchor.position
            d[1] = 0.0
            n = np.linalg.norm(d)
            d = d / n if n > 1e-9 else np.array([1.0, 0.0, 0.0])
            span = float(np.max(anchor.extents) + np.max(mobj.extents)) + 0.005
            point = anchor.position + d * span
            point = np.array([point[0], mobj.position[1], point[2]])
        self._loc_cache[key] = point
        return point

    def eval_cond(self, cond, mover_hint: Optional[str] = None) -> bool:
        if isinstance(cond, Term):
            name = cond.name
            if name == "and":
                return all(self.eval_cond(a, mover_hint) for a in cond.args)
            if name == "or":
                return any(self.eval_cond(a, mover_hint) for a in cond.args)
            if name == "not":
                return not self.eval_cond(cond.args[0], mover_hint)
            if name == "hold":
                _, y = cond.args
                obj = self.scene.objects.get(y.name)
                return obj is not None and obj.held_by is not None
            if name == "on":
                y, surf = cond.args
                obj = self.scene.objects.get(y.name)
                if obj is None:
                    return False
                if surf.name == "floor":
                    return abs(float(obj.aabb()[0][1])) <= sc.SUPPORT_CONTACT
                sup = self.scene.objects.get(surf.name)
                return sup is not None and sc.supports(sup, obj)
            if name == "at":
                y, loc = cond.args
                obj = self.scene.objects[y.name]
                point = self._resolve_loc(loc, y.name)
                d = obj.position - point
                return float(math.hypot(d[0], d[2])) <= AT_TOLERANCE
        raise EventError(f"cannot evaluate condition {cond}")

    # -- ticking -----------------------------------------------------------

    def record(self, node_label: str, diff: dict):
        if self.perturb is not None:
            self.perturb(self.tick_no, self.scene)
        self.trace.ticks.append(TickRecord(self.scene.clock, node_label, diff))
        self.scene.clock += TICK
        self.tick_no += 1

    def run_prim(self, prim: Prim):
        """Generator advancing the primitive one tick per iteration."""
        name = prim.pred
        if name == "grasp":
            _, y = prim.args
            obj = self.scene.objects[y.name]
            obj.held_by = "agent"
            self.scene.recompute_support()
            diff = {"grasp": y.name}
            if y.name in self.grasp_bindings:
                diff["pose"] = self.grasp_bindings[y.name]
            self.record(str(prim), diff)
            return
        if name == "ungrasp":
            _, y = prim.args
            obj = self.scene.objects[y.name]
            obj.held_by = None
            self._settle(obj)
            self.scene.recompute_support()
            self.record(str(prim), {"ungrasp": y.name})
            return
        if name == "move_to":
            _, y, loc = prim.args
            obj = self.scene.objects[y.name]
            target = self._resolve_loc(loc, y.name)
            speed = float(self.params.get("speed") or DEFAULT_SPEED)
            arrive = AT_TOLERANCE * 0.999  # finish inside the at-region
            while True:
                d = target - obj.position
                dist = float(np.linalg.norm(d))
                if dist <= arrive:
                    return
                step = min(dist, speed * TICK)
                obj.position = obj.position + d / dist * step
                self.record(str(prim), {"move": y.name,
                                        "position": [round(float(v), 6) for v in obj.position]})
                if dist - step <= arrive:
                    return
                yield
        elif name == "move_dir":
            _, y = prim.args
            obj = self.scene.objects[y.name]
            speed = float(self.params.get("speed") or DEFAULT_SPEED)
            while True:
                obj.position = obj.position + np.array([speed * TICK, 0.0, 0.0])
                self.record(str(prim), {"move": y.name,
                                        "position": [round(float(v), 6) for v in obj.position]})
                yield
        elif name == "lift":
            _, y = prim.args
            obj = self.scene.objects[y.name]
            target = obj.position[1] + 0.15
            speed = float(self.params.get("speed") or DEFAULT_SPEED)
            while obj.position[1] < target - 1e-9:
                step = min(target - obj.position[1], speed * TICK)
                obj.position = obj.position + np.array([0.0, step, 0.0])
                self.record(str(prim), {"lift": y.name,
                                        "position": [round(float(v), 6) for v in obj.position]})
                if obj.position[1] < target - 1e-9:
                    yield
            return
        elif name == "lean_on":
            _, y, loc = prim.args
            obj = self.scene.objects[y.name]
            anchor = self.scene.objects[loc.args[0].name]
            angle = float(self.params.get("leanAngle") or math.radians(40))
            obj.rotation = sc.quat_normalize(
                sc.quat_multiply(sc.quat_from_axis_angle([0, 0, 1], angle), obj.rotation))
            amin, amax = anchor.aabb()
            half_h = float(obj.extents[1])
            obj.position = np.array([
                float(amin[0]) - half_h * math.sin(angle) - float(obj.extents[0]) * math.cos(angle) * 0.5,
                half_h * math.cos(angle) + float(obj.extents[0]) * math.sin(angle) * 0.5,
                float(anchor.position[2])])
            self.scene.recompute_support()
            self.record(str(prim), {"lean": y.name, "angle": round(angle, 4)})
            return
        elif name == "roll_dir":
            _, y = prim.args
            obj = self.scene.objects[y.name]
            distance = float(self.params.get("rollDistance") or 0.1)
            speed = float(self.params.get("speed") or DEFAULT_SPEED)
            rolled = 0.0
            radius = float(obj.extents[0])
            while rolled < distance - 1e-9:
                step = min(distance - rolled, speed * TICK)
                rolled += step
                obj.position = obj.position + np.array([step, 0.0, 0.0])
                spin = sc.quat_from_axis_angle([0, 0, -1], step / max(radius, 1e-6))
                obj.rotation = sc.quat_normalize(sc.quat_multiply(spin, obj.rotation))
                self.record(str(prim), {"roll": y.name,
                                        "position": [round(float(v), 6) for v in obj.position]})
                if rolled < distance - 1e-9:
                    yield
            return
        else:
            raise EventError(f"unknown primitive {name!r}")

    def _settle(self, obj: sc.ObjectInstance):
        """Drop an object straight down onto the highest surface below."""
        bottom = float(obj.aabb()[0][1])
        best_top = 0.0
        for other in self.scene.objects.values():
            if other.id == obj.id:
                continue
            omin, omax = other.aabb()
            amin, amax = obj.aabb()
            if (min(amax[0], omax[0]) - max(amin[0], omin[0]) > 1e-6
                    and min(amax[2], omax[2]) - max(amin[2], omin[2]) > 1e-6
                    and omax[1] <= bottom + 1e-6):
                best_top = max(best_top, float(omax[1]))
        obj.position = obj.position + np.array([0.0, best_top - bottom, 0.0])

    def run(self, node: Node):
        if isinstance(node, Seq):
            for child in node.children:
                self.run(child)
            return
        if isinstance(node, Prim):
            gen = self.run_prim(node)
            if gen is not None:
                for _ in gen:
                    pass
            return
        if isinstance(node, If):
            if self.eval_cond(node.cond):
                self.run(node.body)
            return
        if isinstance(node, While):
            gen = None
            while True:
                if not self.eval_cond(node.cond):
                    if gen is None:
                        return  # constraint false on arrival: vacuous while
                    raise _WhileAborted("while-constraint failed")
                if gen is None:
                    gen = self.run_prim(node.body) if isinstance(node.body, Prim) else None
                    if gen is None:
                        self.run(node.body)
                        return
                    try:
                        next(gen)
                    except StopIteration:
                        return
                else:
                    try:
                        next(gen)
                    except StopIteration:
                        return
        if isinstance(node, (Lam, App)):
            raise EventError("cannot execute a program with free lambdas")


def execute(program: Node, scene: sc.SceneState, params: Optional[dict] = None,
            perturb: Optional[Callable] = None,
            grasp_bindings: Optional[dict] = None) -> tuple[ExecutionTrace, sc.SceneState]:
    """Run the program tick-by-tick on a snapshot; returns (trace, final scene).

    While semantics: the constraint is checked every tick; if it fails
    while the body is still running the whole program terminates with
    status ``incomplete``; the body finishing its own goal ends the loop
    normally.
    """
    if isinstance(program, (Lam, App)):
        raise EventError("program is not closed (free lambdas)")
    work = scene.snapshot()
    interp = _Interpreter(work, params or {}, perturb, grasp_bindings)
    try:
        interp.run(program)
    except _WhileAborted as e:
        interp.trace.status = f"incomplete({e.reason})"
    except sc.SceneError as e:
        interp.trace.status = f"error({e})"
    return interp.trace, work
