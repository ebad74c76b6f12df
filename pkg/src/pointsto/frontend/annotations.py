"""Inline expectations written as comments, checked against JSON reports.

    // eval(*p) = {null, x}
    // eval(*p) = eval(*q) = {t1.b}
    // unreachable

``eval(*...*v)`` follows the points-to rows from variable ``v`` once per
star.  A comment describes the state after the last statement of its
innermost block that ends before the comment, or the block's entry state if
there is none.  Expected names match reported paths by trailing components:
``x`` matches ``top.x``, ``a.Tail`` matches ``global.a.Tail``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from ..memory import layout_abstract, prefix_name
from . import syntax as S
from .cfg import LoweredProgram

_EVAL = re.compile(r"eval\(\s*(\**)\s*([A-Za-z_]\w*)\s*\)")
_SET = re.compile(r"=\s*\{([^}]*)\}\s*$")


@dataclass(frozen=True)
class Annotation:
    line: int
    pos: tuple
    exprs: tuple  # ((stars, name), ...)
    expected: Optional[frozenset]  # None: the point is unreachable
    text: str


@dataclass(frozen=True)
class Outcome:
    annotation: Annotation
    expr: tuple
    actual: Optional[frozenset]
    ok: bool

    def describe(self) -> str:
        stars, name = self.expr
        want = "unreachable" if self.annotation.expected is None else sorted(self.annotation.expected)
        got = "unreachable" if self.actual is None else sorted(self.actual)
        flag = "ok" if self.ok else "MISMATCH"
        return f"line {self.annotation.line}: eval({'*' * stars}{name}) expected {want} got {got} [{flag}]"


def extract(program: S.Program) -> list:
    out = []
    for c in program.comments:
        body = c.text.strip("/* \t")
        if body.strip().lower() == "unreachable":
            out.append(Annotation(c.start[0], c.start, (), None, body))
            continue
        exprs = tuple((len(m.group(1)), m.group(2)) for m in _EVAL.finditer(body))
        m = _SET.search(body)
        if exprs and m:
            names = frozenset(x.strip() for x in m.group(1).split(",") if x.strip())
            out.append(Annotation(c.start[0], c.start, exprs, names, body))
    return out


def attach(lowered: LoweredProgram, ann: Annotation) -> tuple:
    """``(function, node)`` whose state the annotation describes."""
    entries = {id(a): (fn, node) for kind, a, fn, node in lowered.anchors if kind == "entry"}
    afters = {id(a): (fn, node) for kind, a, fn, node in lowered.anchors if kind == "after"}
    blocks = [a for kind, a, _, _ in lowered.anchors if kind == "entry"]
    inside = [b for b in blocks if b.pos < ann.pos < b.end]
    if not inside:
        raise ValueError(f"annotation at line {ann.line} is outside every function body")
    block = max(inside, key=lambda b: b.pos)
    before = [s for s in block.items if s.end <= ann.pos]
    if before:
        return afters[id(before[-1])]
    return entries[id(block)]


def variable_path(lowered: LoweredProgram, fn: str, node: int, name: str) -> str:
    depth, scope = lowered.functions[fn].scopes[node]
    b = scope.get(name)
    if b is not None:
        prefix = ("top", name) if b.depth == depth else ("topb", depth - b.depth - 1, name)
        ctype = b.ctype
    else:
        ctype = dict(lowered.globals).get(name)
        if ctype is None:
            raise KeyError(f"{name!r} is not visible at {fn}:{node}")
        prefix = ("global", name)
    tag = ".".join(layout_abstract(ctype)[0][0])
    return prefix_name(prefix) + (f".{tag}" if tag else "")


def evaluate(report: dict, lowered: LoweredProgram, fn: str, node: int, stars: int, name: str) -> Optional[frozenset]:
    """Union over contexts of the locations reached; None when every context is unreachable."""
    start = variable_path(lowered, fn, node, name)
    key = f"{fn}:{node}"
    result: Optional[set] = None
    for p in report["program_points"]:
        if p["id"] != key and not p["id"].startswith(key + "@"):
            continue
        if p["memory"] is None:
            continue
        rows = {r["source"]: r["targets"] for r in p["memory"]}
        cur = {start}
        for _ in range(stars):
            cur = {t for s in cur for t in rows.get(s, ())}
        result = (result or set()) | cur
    return None if result is None else frozenset(result)


def name_matches(expected: str, actual: str) -> bool:
    want, got = expected.split("."), actual.split(".")
    return len(want) <= len(got) and got[-len(want) :] == want


def same_targets(expected: frozenset, actual: frozenset) -> bool:
    if len(expected) != len(actual):
        return False
    return all(any(name_matches(e, a) for e in expected) for a in actual) and all(
        any(name_matches(e, a) for a in actual) for e in expected
    )


def check(program: S.Program, lowered: LoweredProgram, report: dict) -> list:
    out = []
    for ann in extract(program):
        fn, node = attach(lowered, ann)
        if ann.expected is None:
            reachable = any(
                p["memory"] is not None
                for p in report["program_points"]
                if p["id"] == f"{fn}:{node}" or p["id"].startswith(f"{fn}:{node}@")
            )
            out.append(Outcome(ann, (0, ""), None if not reachable else frozenset(), not reachable))
            continue
        for stars, name in ann.exprs:
            got = evaluate(report, lowered, fn, node, stars, name)
            ok = got is not None and same_targets(ann.expected, got)
            out.append(Outcome(ann, (stars, name), got, ok))
    return out
