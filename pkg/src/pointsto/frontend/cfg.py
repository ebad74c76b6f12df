"""Control-flow graphs whose edges carry one memory operation each.

Expressions on edges are symbolic: they name memory paths, and are turned
into domain expressions against the relation view of the state they are
applied to (universes change with the memory shape).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from ..arith import IntAbstraction
from ..memory import CType
from ..transfer import CompareOp

# ---------------------------------------------------------------- symbolic expressions


@dataclass(frozen=True)
class SLoc:
    path: tuple


@dataclass(frozen=True)
class SDeref:
    inner: "SymExpr"


@dataclass(frozen=True)
class SField:
    """Move from the start of a record to one of its fields."""

    inner: "SymExpr"
    offset: int
    record: str


@dataclass(frozen=True)
class SAdd:
    """Pointer plus integer; ``offsets`` None means an index known to be valid."""

    inner: "SymExpr"
    elem: CType
    offsets: Optional[IntAbstraction]


SymExpr = Union[SLoc, SDeref, SField, SAdd]


@dataclass(frozen=True)
class Check:
    """An access to validate: ``value`` reads a pointer, ``read``/``write``
    touch the location itself, ``addr`` only computes an address."""

    sym: SymExpr
    mode: str
    text: str


# ---------------------------------------------------------------- conditions


@dataclass(frozen=True)
class CAtom:
    op: CompareOp
    lhs: SymExpr
    rhs: SymExpr
    checks: tuple = ()
    text: str = ""


@dataclass(frozen=True)
class CNot:
    cond: "SymCond"


@dataclass(frozen=True)
class CAnd:
    left: "SymCond"
    right: "SymCond"


@dataclass(frozen=True)
class COr:
    left: "SymCond"
    right: "SymCond"


@dataclass(frozen=True)
class COpaque:
    checks: tuple = ()


@dataclass(frozen=True)
class CConst:
    value: bool


SymCond = Union[CAtom, CNot, CAnd, COr, COpaque, CConst]


# ---------------------------------------------------------------- operations


@dataclass(frozen=True)
class Nop:
    pass


@dataclass(frozen=True)
class NewVar:
    name: str
    ctype: CType


@dataclass(frozen=True)
class MarkOp:
    pass


@dataclass(frozen=True)
class UnmarkOp:
    pass


@dataclass(frozen=True)
class StmtOp:
    """Validate ``checks`` in order, then optionally assign ``rhs`` to ``lhs``."""

    checks: tuple = ()
    lhs: Optional[SymExpr] = None
    rhs: Optional[SymExpr] = None


@dataclass(frozen=True)
class FilterOp:
    cond: SymCond
    branch: bool


@dataclass(frozen=True)
class CallOp:
    call_site: str
    callee: str


Op = Union[Nop, NewVar, MarkOp, UnmarkOp, StmtOp, FilterOp, CallOp]


def describe_op(op: Op) -> str:
    if isinstance(op, NewVar):
        return f"new_var {op.name}"
    if isinstance(op, MarkOp):
        return "mark"
    if isinstance(op, UnmarkOp):
        return "unmark"
    if isinstance(op, CallOp):
        return f"call {op.callee} @ {op.call_site}"
    if isinstance(op, FilterOp):
        return f"filter {'true' if op.branch else 'false'}"
    if isinstance(op, StmtOp):
        return "assign" if op.lhs is not None else "check"
    return "nop"


# ---------------------------------------------------------------- graphs


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    op: Op


@dataclass
class Binding:
    kind: str  # global, local, param, ret
    ctype: CType
    depth: int = 0


@dataclass
class FunctionCfg:
    name: str
    entry: int = 0
    exit: int = 0
    lines: list = field(default_factory=list)  # node -> source line
    edges: list = field(default_factory=list)
    visible: set = field(default_factory=set)
    # node -> (depth, {name: Binding}) for resolving names at that point
    scopes: dict = field(default_factory=dict)
    is_main: bool = False

    def new_node(self, line: int) -> int:
        self.lines.append(line)
        return len(self.lines) - 1

    @property
    def node_count(self) -> int:
        return len(self.lines)

    def successors(self) -> dict:
        out: dict = {n: [] for n in range(self.node_count)}
        for e in self.edges:
            out[e.src].append(e)
        return out

    def reverse_post_order(self) -> list:
        succ = self.successors()
        seen, order = set(), []
        stack = [(self.entry, iter(succ[self.entry]))]
        seen.add(self.entry)
        while stack:
            node, it = stack[-1]
            for e in it:
                if e.dst not in seen:
                    seen.add(e.dst)
                    stack.append((e.dst, iter(succ[e.dst])))
                    break
            else:
                stack.pop()
                order.append(node)
        order.reverse()
        return order


@dataclass(frozen=True)
class HeapSite:
    name: str
    ctype: CType
    line: int


@dataclass
class LoweredProgram:
    functions: dict  # name -> FunctionCfg (only defined functions)
    order: list  # function names in source order
    text: list  # all function names, for the text segment
    globals: list  # [(name, ctype)]
    heap: list  # [HeapSite]
    records: dict
    source: str
    # (kind, ast node, function, cfg node): "after" a statement / "entry" of a block
    anchors: list = field(default_factory=list)
