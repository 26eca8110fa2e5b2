"""Interactive constraint acquisition over qualitative relation networks.

Candidate constraints over structural roles (base / step / top) are posed
as queries ranked by the move proposer's scores, answered by their
satisfaction frequency over an example pool, and the accepted set is
rendered as a reusable object description with habitats and affordances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import learner, qsr
from .qsr import RELATIONS, RelationGraph
from .voxml import (Affordance, AlignPred, CompRef, Embodiment, Habitat, Lex,
                    Term, TopPred, TypeStruct, Var, Voxeme, validate_voxeme)

ROLES = ("base", "step", "top")
DEFAULT_THRESHOLD = 0.9
DISJUNCT_FLOOR = 0.25
# mutually exclusive directional pairs eligible for disjunction
_EXCLUSIVE = (("left", "right"), ("front", "behind"))


class ConacqError(Exception):
    pass


class AllBase(ConacqError):
    """Degenerate flat structure: every block sits on the floor."""


class InconsistentAcquisition(ConacqError):
    pass


@dataclass(frozen=True)
class Constraint:
    """relation(role_i, role_j), or a disjunction of such over one role pair."""
    disjuncts: tuple[tuple[str, str, str], ...]  # (role_i, relation, role_j)

    def __post_init__(self):
        for (ri, rel, rj) in self.disjuncts:
            if ri not in ROLES + ("any-block",) or rj not in ROLES + ("any-block",):
                raise ConacqError(f"unknown role in {self.disjuncts}")
            if rel not in RELATIONS:
                raise ConacqError(f"unknown relation {rel!r}")

    @property
    def disjunctive(self) -> bool:
        return len(self.disjuncts) > 1

    def __str__(self):
        return " or ".join(f"{rel}({ri}, {rj})" for (ri, rel, rj) in self.disjuncts)


@dataclass(frozen=True)
class Query:
    constraint: Constraint
    score: float


@dataclass
class AcceptedConstraint:
    constraint: Constraint
    frequency: float


@dataclass
class ConstraintSet:
    accepted: list[AcceptedConstraint] = field(default_factory=list)
    rejected: list[Constraint] = field(default_factory=list)

    def constraints(self) -> list[Constraint]:
        return [a.constraint for a in self.accepted]

    def __contains__(self, c: Constraint) -> bool:
        return any(a.constraint == c for a in self.accepted)

    def report(self) -> str:
        return json.dumps({
            "accepted": [{"constraint": str(a.constraint),
                          "frequency": round(a.frequency, 4)}
                         for a in self.accepted],
            "rejected": [str(c) for c in self.rejected],
        }, indent=2)


# ---------------------------------------------------------------------------
# Role assignment

def _courses_from_graph(g: RelationGraph) -> dict[str, int]:
    """Stacking height of each node, 0 = resting course, from on-edges."""
    nodes = {i for (i, _, _) in g.edges()} | {j for (_, _, j) in g.edges()}
    below = {}
    for (i, r, j) in g.edges():
        if r == "on":
            below[i] = j
    course = {}

    def height(n, seen=()):
        if n in course:
            return course[n]
        if n in seen:
            raise ConacqError(f"support cycle at {n}")
        if n not in below:
            course[n] = 0
        else:
            course[n] = 1 + height(below[n], seen + (n,))
        return course[n]

    for n in nodes:
        height(n)
    return course


def _courses_from_scene(scene) -> dict[str, int]:
    course = {}

    def height(oid):
        if oid in course:
            return course[oid]
        sup = scene.supporter_of(oid)
        course[oid] = 0 if sup is None else 1 + height(sup)
        return course[oid]

    for oid in scene.objects:
        height(oid)
    return course


@dataclass
class RoleAssignment:
    roles: dict[str, str]  # objectId -> base | step | top

    def __post_init__(self):
        tops = [o for o, r in self.roles.items() if r == "top"]
        bases = [o for o, r in self.roles.items() if r == "base"]
        if len(tops) != 1:
            raise ConacqError(f"expected exactly one top, got {tops}")
        if not bases:
            raise ConacqError("base roles empty")

    def of_role(self, role: str) -> list[str]:
        return sorted(o for o, r in self.roles.items() if r == role)


def _roles_from_courses(course: dict[str, int]) -> RoleAssignment:
    if not course:
        raise ConacqError("no objects to assign roles over")
    top_height = max(course.values())
    if top_height == 0:
        raise AllBase("all blocks rest on the floor")
    top_candidates = sorted([o for o, h in course.items() if h == top_height])
    top = top_candidates[0]
    roles = {}
    for o, h in course.items():
        if o == top:
            roles[o] = "top"
        elif h == 0:
            roles[o] = "base"
        else:
            roles[o] = "step"
    return RoleAssignment(roles)


def assign_roles(scene, g: Optional[RelationGraph] = None) -> RoleAssignment:
    """Roles from height courses: resting course = base, highest = top."""
    if scene is not None:
        return _roles_from_courses(_courses_from_scene(scene))
    if g is None:
        raise ConacqError("need a scene or a relation graph")
    return _roles_from_courses(_courses_from_graph(g))


def roles_from_graph(g: RelationGraph) -> RoleAssignment:
    return _roles_from_courses(_courses_from_graph(g))


# ---------------------------------------------------------------------------
# Acquisition

def _column_heights(g: RelationGraph) -> dict[str, int]:
    """Height of the stack each node belongs to, from on-chains."""
    course = _courses_from_graph(g)
    below = {i: j for (i, r, j) in g.edges() if r == "on"}

    def root(n):
        while n in below:
            n = below[n]
        return n

    col_height: dict[str, int] = {}
    for n, h in course.items():
        r = root(n)
        col_height[r] = max(col_height.get(r, 0), h + 1)
    return {n: col_height[root(n)] for n in course}


def _satisfies(g: RelationGraph, roles: RoleAssignment,
               atom: tuple[str, str, str]) -> bool:
    """Existential satisfaction, except same-role directional atoms.

    Within a single role, a directional relation is read as ordered: the
    member in the tallest column relative to the member in the shortest
    (both directions always coexist as an unordered set, so the
    existential reading could never distinguish structure orientation).
    """
    ri, rel, rj = atom
    left = roles.of_role(ri) if ri != "any-block" else sorted(roles.roles)
    right = roles.of_role(rj) if rj != "any-block" else sorted(roles.roles)
    if ri == rj and rel in qsr.DIRECTIONAL and len(left) >= 2:
        heights = _column_heights(g)
        ordered = sorted(left, key=lambda n: (-heights.get(n, 0), n))
        a, b = ordered[0], ordered[-1]
        return (a, rel, b) in g
    for a in left:
        for b in right:
            if a != b and (a, rel, b) in g:
                return True
    return False


def _frequency(pool: list[tuple[RelationGraph, RoleAssignment]],
               constraint: Constraint) -> float:
    if not pool:
        return 0.0
    hits = 0
    for g, roles in pool:
        if any(_satisfies(g, roles, atom) for atom in constraint.disjuncts):
            hits += 1
    return hits / len(pool)


def _query_scores(models: Optional[learner.LearnerModels],
                  pool: list[tuple[RelationGraph, RoleAssignment]]) -> dict:
    """Aggregate proposer scores per (role_i, relation, role_j) atom.

    With a trained proposer, its empty-state score vector per class is
    role-mapped and summed; otherwise empirical frequencies provide the
    ranking (same ordering role, no learned component).
    """
    scores: dict[tuple[str, str, str], float] = {}
    if models is not None and models.proposer_net is not None:
        empty = RelationGraph()
        for cls in models.classes:
            _, vec = learner.propose_moves(models, empty, cls, 1)
            g, roles = pool[models.classes.index(cls) % len(pool)]
            for idx in range(learner.STATE_DIM):
                p = float(vec[idx])
                if p <= 1e-9:
                    continue
                m = learner.move_from_index(idx)
                if m.i not in roles.roles or m.j not in roles.roles:
                    continue
                key = (roles.roles[m.i], m.relation, roles.roles[m.j])
                scores[key] = scores.get(key, 0.0) + p
    else:
        for g, roles in pool:
            for (i, rel, j) in g.edges():
                key = (roles.roles[i], rel, roles.roles[j])
                scores[key] = scores.get(key, 0.0) + 1.0
    return scores


def _entailed(atom: tuple[str, str, str]) -> list[tuple[str, str, str]]:
    ri, rel, rj = atom
    if ri == rj and rel in qsr.DIRECTIONAL:
        # Same-role directional atoms are read as ordered (tallest column
        # first), so the swapped inverse is not entailed.
        return []
    return [(rj, qsr.INVERSE[rel], ri)]


def _contradicts(existing: list[Constraint], atom: tuple[str, str, str],
                 singleton_roles: frozenset[str]) -> bool:
    """Mutual exclusion only binds when each role names a unique block.

    Role constraints are existential over role members, so e.g. left and
    right can both hold between two multi-member roles; only
    singleton-to-singleton pairs admit genuine contradictions.
    """
    ri, rel, rj = atom
    if ri not in singleton_roles or rj not in singleton_roles:
        return False
    for c in existing:
        if c.disjunctive:
            continue
        (ei, erel, ej) = c.disjuncts[0]
        if (ei, ej) == (ri, rj) and (erel, rel) in qsr.CONTRADICTIONS:
            return True
    return False


def acquire(exemplars: list[learner.Exemplar],
            generated: list[RelationGraph] = (),
            threshold: float = DEFAULT_THRESHOLD,
            models: Optional[learner.LearnerModels] = None) -> ConstraintSet:
    """Rank candidate role constraints, accept those the pool supports.

    Accepted atoms bring their inverse-entailed closure along; rejected
    directional atoms above the disjunct floor remain candidates for
    mutually exclusive disjunctions (either-direction constraints).
    """
    pool: list[tuple[RelationGraph, RoleAssignment]] = []
    for ex in exemplars:
        pool.append((ex.graph, roles_from_graph(ex.graph)))
    for g in generated:
        try:
            pool.append((g, roles_from_graph(g)))
        except (AllBase, ConacqError):
            continue
    if not pool:
        raise ConacqError("empty example pool")

    singleton_roles = frozenset(
        r for r in ROLES
        if all(len(roles.of_role(r)) == 1 for _, roles in pool))

    scores = _query_scores(models, pool)
    atoms = [(ri, rel, rj) for ri in ROLES for rj in ROLES
             for rel in RELATIONS if not (ri == rj and ri in singleton_roles)]
    queue = sorted(atoms, key=lambda a: (-scores.get(a, 0.0), a))

    result = ConstraintSet()
    accepted_atoms: list[tuple[str, str, str]] = []
    deferred: dict[tuple, dict[str, float]] = {}

    def accept(constraint: Constraint, freq: float):
        for atom in constraint.disjuncts if not constraint.disjunctive else ():
            if _contradicts(result.constraints(), atom, singleton_roles):
                raise InconsistentAcquisition(f"{constraint} contradicts acquired set")
        if constraint in result:
            return
        result.accepted.append(AcceptedConstraint(constraint, freq))
        if not constraint.disjunctive:
            atom = constraint.disjuncts[0]
            accepted_atoms.append(atom)
            for ent in _entailed(atom):
                ent_c = Constraint((ent,))
                if ent_c not in result:
                    if _contradicts(result.constraints(), ent, singleton_roles):
                        raise InconsistentAcquisition(
                            f"entailment {ent_c} contradicts acquired set")
                    result.accepted.append(
                        AcceptedConstraint(ent_c, _frequency(pool, ent_c)))
                    accepted_atoms.append(ent)

    for atom in queue:
        if atom in accepted_atoms:
            continue
        c = Constraint((atom,))
        freq = _frequency(pool, c)
        if freq > threshold:
            accept(c, freq)
        else:
            result.rejected.append(c)
            ri, rel, rj = atom
            for pair in _EXCLUSIVE:
                if rel in pair and freq > DISJUNCT_FLOOR:
                    deferred.setdefault((ri, rj, pair), {})[rel] = freq

    # disjunction formation over mutually exclusive directional atoms
    for (ri, rj, pair), freqs in sorted(deferred.items()):
        if len(freqs) == len(pair):
            disj = Constraint(tuple((ri, rel, rj) for rel in pair))
            freq = _frequency(pool, disj)
            if freq > threshold:
                accept(disj, freq)

    return result


# ---------------------------------------------------------------------------
# Emission

_COMPONENT_INDEX = {"base": 2, "step": 3, "top": 4}


def emit_voxml(s: ConstraintSet, roles: Optional[RoleAssignment] = None,
               name: str = "staircase") -> Voxeme:
    """Render the acquired constraints as an assembly voxeme.

    Components: base[2], step[3], top[4].  The intrinsic habitat aligns
    the base row with the horizontal frame axis and takes up from the
    base-to-top direction; affordances follow the put-template family
    (putting on the base extends the step, etc.).
    """
    components = (("base", 2), ("step", 3), ("top", 4))
    habitats = []
    affordances = []
    if s.accepted:
        habitats.append(Habitat(label=3, kind="intr",
                                align=AlignPred("X", "X"),
                                top=TopPred(+1, "Y")))
        label = 0

        def next_label():
            nonlocal label
            label += 1
            return label

        def put_aff(goal: Term, result: Term) -> Affordance:
            return Affordance(next_label(), (3,),
                              Term("put", (Var("x"), goal)), result)

        atoms = {a for c in s.constraints() if not c.disjunctive
                 for a in c.disjuncts}
        if ("step", "on", "base") in atoms:
            # putting something on the base makes it part of the step
            affordances.append(put_aff(Term("on", (_comp("base"),)),
                                       Term("part_of", (Var("x"), _comp("step")))))
        if ("top", "on", "step") in atoms:
            affordances.append(put_aff(Term("on", (_comp("step"),)),
                                       Term("part_of", (Var("x"), _comp("top")))))
        for c in s.constraints():
            if c.disjunctive:
                ri, _, rj = c.disjuncts[0]
                alts = tuple(Term(rel, (_comp(rj),)) for (_, rel, _) in c.disjuncts)
                goal = Term("or", alts + (Term("touching", (_comp(rj),)),))
                affordances.append(put_aff(goal,
                                           Term("extend", (_comp(rj), Var("x")))))
    voxeme = Voxeme(
        name=name,
        lex=Lex(pred=name, type="physobj*artifact"),
        type_info=TypeStruct(head="assembly", components=components),
        habitats=tuple(habitats),
        affordances=tuple(affordances),
        embodiment=Embodiment(scale="<agent", movable=False),
    )
    validate_voxeme(voxeme)
    return voxeme


def _comp(role: str) -> CompRef:
    return CompRef(_COMPONENT_INDEX[role])
