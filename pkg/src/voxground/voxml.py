"""VoxML modeling language: voxemes for objects, events, and relations.

A voxeme pairs a lexical predicate with parametric geometry, habitats
(conditioning environments expressed as pose predicates), an affordance
structure ([action]result terms optionally gated on habitats), and
embodiment metadata.  The concrete syntax is an indented key/value block
format; see the files under ``voxground/voxemes/`` for the seed library.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Union


class VoxmlError(Exception):
    """Base class for VoxML parsing/validation failures."""


class VoxmlSyntaxError(VoxmlError):
    def __init__(self, msg: str, line: int, col: int = 0):
        super().__init__(f"line {line}, col {col}: {msg}")
        self.line = line
        self.col = col


class VoxmlSemanticError(VoxmlError):
    """Structurally well-formed source that violates voxeme invariants."""


# ---------------------------------------------------------------------------
# Term language (affordance event templates, results, DES fragments)

@dataclass(frozen=True)
class Term:
    """Applicative term: ``name(arg, ...)``.  Zero-ary terms are symbols."""
    name: str
    args: tuple = ()

    def __str__(self) -> str:
        if not self.args:
            return self.name
        return f"{self.name}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class CompRef:
    """Reference to a typeInfo component by index, written ``[n]``."""
    index: int

    def __str__(self) -> str:
        return f"[{self.index}]"


TermLike = Union[Term, Var, CompRef]

GENERIC_RESULT = Term("R")

# Variables are single lowercase letters plus the DES role names.
_VAR_NAMES = {"x", "y", "z", "ag", "surf", "loc", "this"}
_TOKEN_RE = re.compile(r"\s*(?:(?P<lbrack>\[)|(?P<rbrack>\])|(?P<lpar>\()|(?P<rpar>\))"
                       r"|(?P<comma>,)|(?P<semi>;)|(?P<num>\d+(?:\.\d+)?)"
                       r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*))")


def tokenize_term(text: str, line: int = 0):
    """Tokenize a term expression; yields (kind, value, col) triples."""
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == m.start():
            if text[pos:].strip() == "":
                break
            raise VoxmlSyntaxError(f"bad character {text[pos]!r}", line, pos)
        pos = m.end()
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
    return out


class _TermParser:
    def __init__(self, tokens, line):
        self.toks = tokens
        self.i = 0
        self.line = line

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None, -1)

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, kind):
        tok = self.next()
        if tok[0] != kind:
            raise VoxmlSyntaxError(f"expected {kind}, got {tok[1]!r}", self.line, tok[2])
        return tok

    def parse(self) -> TermLike:
        term = self.atom()
        if self.i < len(self.toks):
            tok = self.peek()
            raise VoxmlSyntaxError(f"trailing input {tok[1]!r}", self.line, tok[2])
        return term

    def atom(self) -> TermLike:
        kind, value, col = self.next()
        if kind == "lbrack":
            num = self.expect("num")
            self.expect("rbrack")
            return CompRef(int(num[1]))
        if kind == "num":
            return Term(value)
        if kind != "ident":
            raise VoxmlSyntaxError(f"expected term, got {value!r}", self.line, col)
        if self.peek()[0] == "lpar":
            self.next()
            args = []
            if self.peek()[0] != "rpar":
                args.append(self.atom())
                while self.peek()[0] == "comma":
                    self.next()
                    args.append(self.atom())
            self.expect("rpar")
            return Term(value, tuple(args))
        if value in _VAR_NAMES:
            return Var(value)
        return Term(value)


def parse_term(text: str, line: int = 0) -> TermLike:
    return _TermParser(tokenize_term(text, line), line).parse()


def term_comp_refs(t: TermLike) -> set[int]:
    if isinstance(t, CompRef):
        return {t.index}
    if isinstance(t, Term):
        out: set[int] = set()
        for a in t.args:
            out |= term_comp_refs(a)
        return out
    return set()


def term_vars(t: TermLike) -> set[str]:
    if isinstance(t, Var):
        return {t.name}
    if isinstance(t, Term):
        out: set[str] = set()
        for a in t.args:
            out |= term_vars(a)
        return out
    return set()


# ---------------------------------------------------------------------------
# Domain types

AXES = ("X", "Y", "Z")
PLANES = ("XY", "YZ", "XZ")
GEOMETRY_CLASSES = ("cylindroid", "cuboid", "ellipsoid", "assembly", "sheet")


@dataclass(frozen=True)
class AlignPred:
    """``align(objAxis, E_axis)`` or ``align(objAxis, perp(E_axis))``.

    Alignment is axis-line alignment (direction-insensitive); the ``perp``
    variant asks for the object axis perpendicular to the frame axis.
    """
    object_axis: str
    frame_axis: str
    perpendicular: bool = False

    def __str__(self) -> str:
        target = f"perp(E_{self.frame_axis})" if self.perpendicular else f"E_{self.frame_axis}"
        return f"align({self.object_axis}, {target})"


@dataclass(frozen=True)
class TopPred:
    """``top(+Y)``: the named local face is the world-up-most face."""
    sign: int
    axis: str

    def __str__(self) -> str:
        return f"top({'+' if self.sign > 0 else '-'}{self.axis})"


@dataclass(frozen=True)
class Habitat:
    label: int
    kind: str  # "intr" | "extr"
    align: Optional[AlignPred] = None
    top: Optional[TopPred] = None

    def predicates(self):
        out = []
        if self.align is not None:
            out.append(("up", self.align))
        if self.top is not None:
            out.append(("top", self.top))
        return out


@dataclass(frozen=True)
class Affordance:
    label: int
    condition: tuple[int, ...]  # habitat labels; empty tuple = universal (H ->)
    event: Term
    result: Optional[TermLike] = None

    @property
    def universal(self) -> bool:
        return not self.condition

    def format(self) -> str:
        cond = "H" if self.universal else "H[" + ",".join(str(c) for c in self.condition) + "]"
        result = "" if self.result is None else f" {self.result}"
        return f"A{self.label} {cond} -> [{self.event}]{result}".rstrip()


@dataclass(frozen=True)
class TypeStruct:
    head: str
    components: tuple[tuple[str, int], ...] = ()
    concave_component: Optional[int] = None
    rotational_symmetry: tuple[str, ...] = ()
    reflectional_symmetry: tuple[str, ...] = ()

    def component_indices(self) -> set[int]:
        return {idx for _, idx in self.components}


@dataclass(frozen=True)
class Embodiment:
    scale: str = "<agent"  # "<agent" | "agent" | ">agent"
    movable: bool = True


@dataclass(frozen=True)
class Lex:
    pred: str
    type: str


@dataclass(frozen=True)
class Voxeme:
    name: str
    lex: Lex
    type_info: Optional[TypeStruct] = None
    habitats: tuple[Habitat, ...] = ()
    affordances: tuple[Affordance, ...] = ()
    embodiment: Optional[Embodiment] = None
    des: Optional[str] = None  # dynamic event structure source, event voxemes only

    def habitat_labels(self) -> set[int]:
        return {h.label for h in self.habitats}

    def habitat(self, label: int) -> Habitat:
        for h in self.habitats:
            if h.label == label:
                return h
        raise KeyError(label)

    @property
    def is_event(self) -> bool:
        return self.lex.type == "event"


def validate_voxeme(v: Voxeme) -> Voxeme:
    labels = [h.label for h in v.habitats]
    if len(labels) != len(set(labels)):
        raise VoxmlSemanticError(f"{v.name}: duplicate habitat labels {labels}")
    label_set = set(labels)
    comp_indices = v.type_info.component_indices() if v.type_info else set()
    if v.type_info and v.type_info.concave_component is not None:
        if v.type_info.concave_component not in comp_indices:
            raise VoxmlSemanticError(
                f"{v.name}: concave component [{v.type_info.concave_component}] not declared")
    for aff in v.affordances:
        for lbl in aff.condition:
            if lbl not in label_set:
                raise VoxmlSemanticError(
                    f"{v.name}: affordance A{aff.label} references unknown habitat [{lbl}]")
        refs = term_comp_refs(aff.event)
        if aff.result is not None:
            refs |= term_comp_refs(aff.result)
        for idx in refs - comp_indices:
            raise VoxmlSemanticError(
                f"{v.name}: affordance A{aff.label} references unknown component [{idx}]")
        if aff.result is not None:
            unbound = term_vars(aff.result) - term_vars(aff.event) - {"this"}
            if unbound:
                raise VoxmlSemanticError(
                    f"{v.name}: affordance A{aff.label} result uses unbound {sorted(unbound)}")
    alabels = [a.label for a in v.affordances]
    if len(alabels) != len(set(alabels)):
        raise VoxmlSemanticError(f"{v.name}: duplicate affordance labels")
    return v


# ---------------------------------------------------------------------------
# Parsing

_HAB_HEAD_RE = re.compile(r"^(intr|extr)\[(\d+)\]$")
_AFF_RE = re.compile(r"^A(\d+)\s+(H(?:\[[\d,\s]+\])?)\s*->\s*\[")
_ALIGN_RE = re.compile(r"^align\(\s*([XYZ])\s*,\s*(?:E_([XYZ])|perp\(\s*E_([XYZ])\s*\))\s*\)$")
_TOP_RE = re.compile(r"^top\(\s*([+-])([XYZ])\s*\)$")


def _indent_of(line: str) -> int:
    return len(line) - len(line.lstrip(" "))


class _Block:
    """One line plus its more-indented children."""

    def __init__(self, text: str, line_no: int):
        self.text = text
        self.line_no = line_no
        self.children: list[_Block] = []

    def child_map(self):
        return {c.text.split(None, 1)[0]: c for c in self.children}


def _build_blocks(text: str) -> list[_Block]:
    root: list[_Block] = []
    stack: list[tuple[int, _Block]] = []
    for i, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].rstrip()
        if not stripped.strip():
            continue
        indent = _indent_of(stripped)
        block = _Block(stripped.strip(), i)
        while stack and stack[-1][0] >= indent:
            stack.pop()
        if stack:
            stack[-1][1].children.append(block)
        else:
            root.append(block)
        stack.append((indent, block))
    return root


def _kv(block: _Block) -> tuple[str, str]:
    parts = block.text.split(None, 1)
    return parts[0], (parts[1] if len(parts) > 1 else "")


def _parse_habitat(block: _Block) -> Habitat:
    m = _HAB_HEAD_RE.match(block.text)
    if not m:
        raise VoxmlSyntaxError(f"bad habitat header {block.text!r}", block.line_no)
    kind, label = m.group(1), int(m.group(2))
    align = top = None
    for child in block.children:
        key, value = _kv(child)
        if key == "up":
            if align is not None:
                raise VoxmlSemanticError(f"habitat [{label}]: more than one align predicate")
            am = _ALIGN_RE.match(value)
            if not am:
                raise VoxmlSyntaxError(f"bad align predicate {value!r}", child.line_no)
            frame = am.group(2) or am.group(3)
            align = AlignPred(am.group(1), frame, perpendicular=am.group(3) is not None)
        elif key == "top":
            if top is not None:
                raise VoxmlSemanticError(f"habitat [{label}]: more than one top predicate")
            tm = _TOP_RE.match(value)
            if not tm:
                raise VoxmlSyntaxError(f"bad top predicate {value!r}", child.line_no)
            top = TopPred(1 if tm.group(1) == "+" else -1, tm.group(2))
        else:
            raise VoxmlSyntaxError(f"unknown habitat predicate {key!r}", child.line_no)
    return Habitat(label, kind, align, top)


def _parse_affordance(block: _Block) -> Affordance:
    m = _AFF_RE.match(block.text)
    if not m:
        raise VoxmlSyntaxError(f"bad affordance {block.text!r}", block.line_no)
    label = int(m.group(1))
    cond_text = m.group(2)
    if cond_text == "H":
        condition: tuple[int, ...] = ()
    else:
        inner = cond_text[2:-1]
        condition = tuple(sorted(int(p) for p in inner.split(",")))
    # the event template may itself contain [n] component refs, so the
    # closing bracket is found by depth counting rather than regex
    depth = 1
    i = m.end()
    while i < len(block.text) and depth > 0:
        if block.text[i] == "[":
            depth += 1
        elif block.text[i] == "]":
            depth -= 1
        i += 1
    if depth != 0:
        raise VoxmlSyntaxError("unterminated event template", block.line_no, m.end())
    event = parse_term(block.text[m.end():i - 1], block.line_no)
    if not isinstance(event, Term) or not event.args:
        raise VoxmlSyntaxError("affordance event must be an applied term", block.line_no)
    result_text = block.text[i:].strip()
    result = parse_term(result_text, block.line_no) if result_text else None
    return Affordance(label, condition, event, result)


def _parse_type(block: _Block) -> TypeStruct:
    head = None
    components: tuple[tuple[str, int], ...] = ()
    concave = None
    rot: tuple[str, ...] = ()
    refl: tuple[str, ...] = ()
    for child in block.children:
        key, value = _kv(child)
        if key == "head":
            hm = re.match(r"^([a-z]+)(?:\[(\d+)\])?$", value)
            if not hm or hm.group(1) not in GEOMETRY_CLASSES:
                raise VoxmlSyntaxError(f"bad head {value!r}", child.line_no)
            head = hm.group(1)
        elif key == "components":
            comps = []
            for part in value.split(","):
                cm = re.match(r"^\s*([a-z_]+)\[(\d+)\]\s*$", part)
                if not cm:
                    raise VoxmlSyntaxError(f"bad component {part!r}", child.line_no)
                comps.append((cm.group(1), int(cm.group(2))))
            components = tuple(comps)
        elif key == "concavity":
            if value == "none":
                concave = None
            else:
                cm = re.match(r"^concave\[(\d+)\]$", value)
                if not cm:
                    raise VoxmlSyntaxError(f"bad concavity {value!r}", child.line_no)
                concave = int(cm.group(1))
        elif key == "rotat_sym":
            rot = tuple(a.strip() for a in value.split(",") if a.strip())
            if any(a not in AXES for a in rot):
                raise VoxmlSyntaxError(f"bad rotat_sym {value!r}", child.line_no)
        elif key == "refl_sym":
            refl = tuple(p.strip() for p in value.split(",") if p.strip())
            if any(p not in PLANES for p in refl):
                raise VoxmlSyntaxError(f"bad refl_sym {value!r}", child.line_no)
        else:
            raise VoxmlSyntaxError(f"unknown type field {key!r}", child.line_no)
    if head is None:
        raise VoxmlSyntaxError("type block missing head", block.line_no)
    return TypeStruct(head, components, concave, rot, refl)


def parse_voxeme(text: str) -> Voxeme:
    """Parse a single voxeme from VoxML source; raises on malformed input."""
    blocks = _build_blocks(text)
    if len(blocks) != 1:
        raise VoxmlSyntaxError("expected exactly one top-level voxeme block",
                               blocks[1].line_no if len(blocks) > 1 else 1)
    top = blocks[0]
    parts = top.text.split()
    if len(parts) != 2 or parts[0] != "voxeme":
        raise VoxmlSyntaxError(f"bad voxeme header {top.text!r}", top.line_no)
    name = parts[1]

    lex = None
    type_info = None
    habitats: list[Habitat] = []
    affordances: list[Affordance] = []
    embodiment = None
    des = None
    for section in top.children:
        key, _ = _kv(section)
        if key == "lex":
            fields = {k: v for k, v in (_kv(c) for c in section.children)}
            if "pred" not in fields or "type" not in fields:
                raise VoxmlSyntaxError("lex requires pred and type", section.line_no)
            lex = Lex(fields["pred"], fields["type"])
        elif key == "type":
            type_info = _parse_type(section)
        elif key == "habitat":
            habitats = [_parse_habitat(c) for c in section.children]
        elif key == "afford_str":
            affordances = [_parse_affordance(c) for c in section.children]
        elif key == "embodiment":
            fields = {k: v for k, v in (_kv(c) for c in section.children)}
            scale = fields.get("scale", "<agent")
            if scale not in ("<agent", "agent", ">agent"):
                raise VoxmlSyntaxError(f"bad scale {scale!r}", section.line_no)
            embodiment = Embodiment(scale, fields.get("movable", "true") == "true")
        elif key == "des":
            des = "; ".join(c.text for c in section.children)
        else:
            raise VoxmlSyntaxError(f"unknown section {key!r}", section.line_no)
    if lex is None:
        raise VoxmlSyntaxError("voxeme missing lex section", top.line_no)
    habitats.sort(key=lambda h: h.label)
    affordances.sort(key=lambda a: a.label)
    return validate_voxeme(Voxeme(name, lex, type_info, tuple(habitats),
                                  tuple(affordances), embodiment, des))


def print_voxeme(v: Voxeme) -> str:
    """Render canonical VoxML text; parse_voxeme(print_voxeme(v)) == v."""
    lines = [f"voxeme {v.name}"]
    lines.append("  lex")
    lines.append(f"    pred {v.lex.pred}")
    lines.append(f"    type {v.lex.type}")
    if v.type_info is not None:
        t = v.type_info
        lines.append("  type")
        lines.append(f"    head {t.head}")
        if t.components:
            comps = ", ".join(f"{n}[{i}]" for n, i in t.components)
            lines.append(f"    components {comps}")
        if t.concave_component is not None:
            lines.append(f"    concavity concave[{t.concave_component}]")
        if t.rotational_symmetry:
            lines.append(f"    rotat_sym {','.join(t.rotational_symmetry)}")
        if t.reflectional_symmetry:
            lines.append(f"    refl_sym {','.join(t.reflectional_symmetry)}")
    if v.habitats:
        lines.append("  habitat")
        for h in sorted(v.habitats, key=lambda h: h.label):
            lines.append(f"    {h.kind}[{h.label}]")
            if h.align is not None:
                lines.append(f"      up {h.align}")
            if h.top is not None:
                lines.append(f"      top {h.top}")
    if v.affordances:
        lines.append("  afford_str")
        for a in sorted(v.affordances, key=lambda a: a.label):
            lines.append(f"    {a.format()}")
    if v.embodiment is not None:
        lines.append("  embodiment")
        lines.append(f"    scale {v.embodiment.scale}")
        lines.append(f"    movable {'true' if v.embodiment.movable else 'false'}")
    if v.des is not None:
        lines.append("  des")
        for stmt in v.des.split("; "):
            lines.append(f"    {stmt}")
    return "\n".join(lines) + "\n"


def affordances_in_habitat(v: Voxeme, active: Iterable[int]) -> list[Affordance]:
    """All universal affordances plus those gated on any active habitat."""
    active = set(active)
    unknown = active - v.habitat_labels()
    if unknown:
        raise VoxmlSemanticError(f"{v.name}: unknown habitat labels {sorted(unknown)}")
    out = [a for a in v.affordances if a.universal or set(a.condition) & active]
    return sorted(out, key=lambda a: a.label)


# ---------------------------------------------------------------------------
# Library

class VoxemeLibrary:
    """Immutable-after-load name -> voxeme map."""

    def __init__(self, voxemes: Iterable[Voxeme] = ()):
        self._by_name: dict[str, Voxeme] = {}
        for v in voxemes:
            self.add(v)

    def add(self, v: Voxeme):
        if v.name in self._by_name:
            raise VoxmlSemanticError(f"duplicate voxeme {v.name!r}")
        self._by_name[v.name] = v

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __getitem__(self, name: str) -> Voxeme:
        return self._by_name[name]

    def get(self, name: str) -> Optional[Voxeme]:
        return self._by_name.get(name)

    def names(self) -> list[str]:
        return sorted(self._by_name)

    def objects(self) -> list[Voxeme]:
        return [self._by_name[n] for n in self.names() if not self._by_name[n].is_event]

    def events(self) -> list[Voxeme]:
        return [self._by_name[n] for n in self.names() if self._by_name[n].is_event]

    @classmethod
    def from_dir(cls, path: Union[str, Path]) -> "VoxemeLibrary":
        lib = cls()
        for f in sorted(Path(path).glob("*.voxml")):
            lib.add(parse_voxeme(f.read_text()))
        return lib


def seed_library() -> VoxemeLibrary:
    """The packaged seed voxemes (common objects plus event programs)."""
    lib = VoxemeLibrary()
    root = resources.files("voxground") / "voxemes"
    for f in sorted(root.iterdir(), key=lambda p: p.name):
        if f.name.endswith(".voxml"):
            lib.add(parse_voxeme(f.read_text()))
    return lib
