"""Flow-sensitive fixpoint over lowered CFGs, with call-string contexts.

States are keyed by ``(function, context, node)``; a context is the tuple of
the newest call sites, at most ``k`` long, and mirrors the frames kept in the
stack head.  Older frames go to the stack tail, summarized per call site.

Errors found while evaluating expressions are reported and the state goes on
with the offending configurations filtered out.  Diagnostics are collected in
one pass over the final states, so a transient state seen mid-iteration never
produces a report.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

from ..arith import shift_slot
from ..domain import Deref, Loc, PointsToRel, Shift, eval_expr, join
from ..memory import (
    NULL,
    UNDEF,
    AbstractMemory,
    AllocationBlock,
    Function,
    IncompatibleMemoryError,
    MalformedStackError,
    Record,
    array_regions,
    rows,
    layout_abstract,
    mem_join,
    op_link,
    op_mark,
    op_new_var,
    op_tail_pop,
    op_tail_push,
    op_unlink,
    op_unmark,
)
from ..transfer import (
    Assignment,
    Atom,
    CompareOp,
    ErrorKind,
    SpecialLocSets,
    assign,
    default_atomic,
    eval_checked,
    filter_toward,
)
from .cfg import (
    CAnd,
    CAtom,
    CConst,
    CNot,
    COpaque,
    COr,
    CallOp,
    Check,
    FilterOp,
    LoweredProgram,
    MarkOp,
    NewVar,
    Nop,
    SDeref,
    SField,
    SLoc,
    StmtOp,
    UnmarkOp,
)

BOTTOM = AbstractMemory.bottom()


class OffByOnePolicy(str, enum.Enum):
    ERROR = "error"  # report and drop the off-by-one target
    WARN = "warn"  # report and keep it
    ALLOW = "allow"  # legal to dereference


class AnalysisError(RuntimeError):
    """An internal invariant broke (malformed stack, incompatible join)."""


@dataclass(frozen=True)
class AnalysisConfig:
    filter_iterations: int = 2
    deref_offbyone: OffByOnePolicy = OffByOnePolicy.ERROR
    k: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "deref_offbyone", OffByOnePolicy(self.deref_offbyone))
        if self.k < 1:
            raise ValueError("stack head depth k must be at least 1")
        if self.filter_iterations < 1:
            raise ValueError("filter iterations must be at least 1")


@dataclass(frozen=True, order=True)
class Diagnostic:
    line: int
    kind: str
    expr: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "line": self.line, "expr": self.expr}


@dataclass(frozen=True)
class ProgramPoint:
    function: str
    context: tuple
    node: int
    line: int
    memory: AbstractMemory

    @property
    def id(self) -> str:
        ctx = "@" + "/".join(self.context) if self.context else ""
        return f"{self.function}:{self.node}{ctx}"


@dataclass
class AnalysisResult:
    points: list
    diagnostics: list
    iterations: int
    program: Optional[LoweredProgram] = None
    states: dict = field(default_factory=dict)


# ---------------------------------------------------------------- per-state environment


@lru_cache(maxsize=None)
def _record_starts(ctype, slot: int) -> frozenset:
    found: set = set()

    def walk(t, base: int) -> None:
        if isinstance(t, Record):
            if base == slot:
                found.add(t.name)
            off = base
            for _, ft in t.fields:
                walk(ft, off)
                off += len(layout_abstract(ft))
        elif hasattr(t, "elem"):
            n = len(layout_abstract(t.elem))
            for k in range(3):
                walk(t.elem, base + k * n)

    walk(ctype, 0)
    return frozenset(found)


@lru_cache(maxsize=None)
def _off_slots(ctype) -> frozenset:
    out: set = set()
    for r in array_regions(ctype):
        if r.part == "Off":
            out.update(range(r.start, r.start + r.elem_len))
    return frozenset(out)


WRITE = "write"
COMPARE = "compare"


class _Env:
    """Relation view of one memory plus the special-location sets for it."""

    def __init__(self, mem: AbstractMemory, policy: OffByOnePolicy):
        self.mem = mem
        self.view = mem.relation()
        u = self.view.universe
        self.null = u.index(NULL)
        self.undef = u.index(UNDEF)
        off = set()
        for l in u.locations:
            path = u.name(l)
            if path[0] == "special":
                continue
            if path[-1] in _off_slots(mem.allocation(path[:-1]).ctype):
                off.add(l)
        self.off = frozenset(off)
        nulls = frozenset({self.null})
        guarded = nulls | (self.off if policy is not OffByOnePolicy.ALLOW else frozenset())
        self.strict = SpecialLocSets(frozenset({self.undef}), guarded, guarded)
        kept = nulls if policy is OffByOnePolicy.WARN else guarded
        self.lenient = SpecialLocSets(frozenset({self.undef}), kept, kept)
        self.order = self.view.order(cross=False)
        self._sing: dict = {}

    def singular(self, l: int) -> bool:
        s = self._sing.get(l)
        if s is None:
            s = self._sing[l] = self.view.singular(l)
        return s

    def expr(self, sym):
        if isinstance(sym, SLoc):
            return Loc(self.view.loc(sym.path))
        if isinstance(sym, SDeref):
            return Deref(self.expr(sym.inner))
        inner = self.expr(sym.inner)
        table: dict = {}
        faults: dict = {}
        u = self.view.universe
        for l in u.locations:
            path = u.name(l)
            if path == UNDEF:
                continue
            if path == NULL:
                if isinstance(sym, SField):
                    faults[l] = frozenset({ErrorKind.DEREF})
                else:
                    if sym.offsets is None or sym.offsets.intersects(0, 0):
                        table[l] = frozenset({l})
                    if sym.offsets is not None and sym.offsets.values() != {0}:
                        faults[l] = frozenset({ErrorKind.ARITH})
                continue
            prefix, slot = path[:-1], path[-1]
            ctype = self.mem.allocation(prefix).ctype
            if isinstance(sym, SField):
                if sym.record in _record_starts(ctype, slot):
                    table[l] = frozenset({u.index(prefix + (slot + sym.offset,))})
                continue
            slots, errs = shift_slot(ctype, slot, sym.elem, sym.offsets)
            if slots:
                table[l] = frozenset(u.index(prefix + (s,)) for s in slots)
            if errs:
                faults[l] = errs
        label = f".+{sym.offset}" if isinstance(sym, SField) else "+"
        return Shift(inner, table, faults, label)


# ---------------------------------------------------------------- transfer


class _Transfer:
    def __init__(self, config: AnalysisConfig):
        self.config = config

    def env(self, mem: AbstractMemory) -> _Env:
        return _Env(mem, self.config.deref_offbyone)

    def check(self, env: _Env, rel: PointsToRel, ck: Check, sink: Optional[list]) -> PointsToRel:
        if rel.is_bottom:
            return rel
        e = env.expr(ck.sym)

        def once(specials: SpecialLocSets) -> tuple:
            ce = eval_checked(rel, e, specials, env.singular)
            faults = set(ce.faults)
            state = ce.ok_state
            if ck.mode in ("read", "write") and not state.is_bottom:
                guard = specials.read_only if ck.mode == "write" else specials.non_dereferenceable
                bad = ce.locations & guard
                if bad:
                    tag = WRITE if ck.mode == "write" else ErrorKind.DEREF
                    faults |= {(tag, l) for l in bad}
                    state = filter_toward(state, ce.locations - bad, e, env.singular)
            return state, faults

        state, faults = once(env.strict)
        if env.lenient != env.strict:
            state, _ = once(env.lenient)
        if sink is not None:
            for tag, l in sorted(faults, key=lambda f: (str(f[0]), f[1])):
                sink.append((_kind(env, tag, l), ck.text))
        return state

    def cond(self, env: _Env, rel: PointsToRel, c, sink: Optional[list]) -> tuple:
        if rel.is_bottom:
            return rel, rel
        bot = PointsToRel.bottom(rel.universe)
        if isinstance(c, CConst):
            return (rel, bot) if c.value else (bot, rel)
        if isinstance(c, COpaque):
            for ck in c.checks:
                rel = self.check(env, rel, ck, sink)
            return rel, rel
        if isinstance(c, CNot):
            t, f = self.cond(env, rel, c.cond, sink)
            return f, t
        if isinstance(c, CAnd):
            t0, f0 = self.cond(env, rel, c.left, sink)
            t1, f1 = self.cond(env, t0, c.right, sink)
            return t1, join(f0, f1)
        if isinstance(c, COr):
            t0, f0 = self.cond(env, rel, c.left, sink)
            t1, f1 = self.cond(env, f0, c.right, sink)
            return join(t0, t1), f1
        if isinstance(c, CAtom):
            for ck in c.checks:
                rel = self.check(env, rel, ck, sink)
            if rel.is_bottom:
                return rel, rel
            lhs, rhs = env.expr(c.lhs), env.expr(c.rhs)
            if c.op in (CompareOp.LESS, CompareOp.NOT_LESS) and sink is not None:
                le, lf = eval_expr(rel, lhs), eval_expr(rel, rhs)
                if any(not env.order.same_block(l, m) for l in le for m in lf):
                    sink.append(("UndefinedComparison", c.text))
            atomic = default_atomic(env.singular, env.order, self.config.filter_iterations)
            atom = Atom(c.op, lhs, rhs)
            return atomic(rel, atom, True), atomic(rel, atom, False)
        raise TypeError(f"not a condition: {c!r}")

    def apply(self, op, mem: AbstractMemory, sink: Optional[list] = None) -> AbstractMemory:
        if mem.is_bottom:
            return mem
        if isinstance(op, Nop):
            return mem
        if isinstance(op, NewVar):
            return op_new_var(mem, op.name, op.ctype)
        if isinstance(op, MarkOp):
            return op_mark(mem)
        if isinstance(op, UnmarkOp):
            return op_unmark(mem)
        env = self.env(mem)
        rel = env.view.rel
        if isinstance(op, StmtOp):
            for ck in op.checks:
                rel = self.check(env, rel, ck, sink)
                if rel.is_bottom:
                    return BOTTOM
            if op.lhs is not None:
                rel = assign(rel, Assignment(env.expr(op.lhs), env.expr(op.rhs)), env.singular)
            return env.view.memory_from(rel)
        if isinstance(op, FilterOp):
            t, f = self.cond(env, rel, op.cond, sink)
            return env.view.memory_from(t if op.branch else f)
        raise TypeError(f"no transfer for {op!r}")


def _kind(env: _Env, tag, l: int) -> str:
    if tag == WRITE:
        return "WriteReadOnly" if l == env.null else "OffByOneDeref"
    if tag is ErrorKind.DEREF:
        return "OffByOneDeref" if l in env.off else "NullDeref"
    if tag is ErrorKind.EVAL:
        return "UndefEval"
    if tag is ErrorKind.UNDERFLOW:
        return "ArrayUnderflow"
    if tag is ErrorKind.OVERFLOW:
        return "ArrayOverflow"
    if tag is ErrorKind.ARITH:
        return "ScalarArith"
    return str(tag)


# ---------------------------------------------------------------- fixpoint


def initial_memory(prog: LoweredProgram) -> AbstractMemory:
    return AbstractMemory(
        text=tuple(AllocationBlock.fresh(f, Function(f)) for f in prog.text),
        heap=tuple(AllocationBlock.fresh(h.name, h.ctype, UNDEF) for h in prog.heap),
        globals=tuple(AllocationBlock.fresh(n, t, NULL) for n, t in prog.globals),
    )


class Analyzer:
    def __init__(self, prog: LoweredProgram, config: AnalysisConfig = AnalysisConfig()):
        self.prog = prog
        self.config = config
        self.transfer = _Transfer(config)
        self.succ = {name: cfg.successors() for name, cfg in prog.functions.items()}
        self.states: dict = {}
        self.queue: deque = deque()
        self.queued: set = set()
        # (callee, callee ctx) -> set of (caller, caller ctx, return node)
        self.returns: dict = {}
        self.iterations = 0

    def _enqueue(self, key: tuple) -> None:
        if key not in self.queued:
            self.queued.add(key)
            self.queue.append(key)

    def _propagate(self, key: tuple, mem: AbstractMemory) -> None:
        if mem.is_bottom:
            return
        old = self.states.get(key)
        try:
            new = mem if old is None else mem_join(old, mem)
        except IncompatibleMemoryError as exc:
            raise AnalysisError(f"{exc} at {key}") from exc
        if new != old:
            self.states[key] = new
            self._enqueue(key)

    def _callee_ctx(self, ctx: tuple, call_site: str) -> tuple:
        return ((call_site,) + ctx)[: self.config.k]

    def _enter(self, mem: AbstractMemory, ctx: tuple, op: CallOp) -> AbstractMemory:
        mem = op_link(mem, op.call_site)
        if len(ctx) >= self.config.k:
            mem = op_tail_push(mem, merge="join")
        return mem

    def _leave(self, mem: AbstractMemory, ctx: tuple) -> AbstractMemory:
        mem = op_unlink(mem)
        if len(ctx) >= self.config.k:
            mem = op_tail_pop(mem, ctx[-1])
        return mem

    def _return_to(self, callee_key: tuple, caller: tuple) -> None:
        fn, ctx, ret_node = caller
        exit_mem = self.states.get((callee_key[0], callee_key[1], self.prog.functions[callee_key[0]].exit))
        if exit_mem is not None:
            self._propagate((fn, ctx, ret_node), self._leave(exit_mem, ctx))

    def _step(self, key: tuple) -> None:
        fn, ctx, node = key
        mem = self.states[key]
        cfg = self.prog.functions[fn]
        for edge in self.succ[fn][node]:
            if isinstance(edge.op, CallOp):
                callee = self.prog.functions[edge.op.callee]
                cctx = self._callee_ctx(ctx, edge.op.call_site)
                callers = self.returns.setdefault((callee.name, cctx), set())
                caller = (fn, ctx, edge.dst)
                if caller not in callers:
                    callers.add(caller)
                    self._return_to((callee.name, cctx), caller)
                self._propagate((callee.name, cctx, callee.entry), self._enter(mem, ctx, edge.op))
            else:
                self._propagate((fn, ctx, edge.dst), self.transfer.apply(edge.op, mem))
        if node == cfg.exit:
            for caller in sorted(self.returns.get((fn, ctx), ())):
                self._return_to((fn, ctx), caller)

    def run(self) -> AnalysisResult:
        start = initial_memory(self.prog)
        if "main" not in self.prog.functions:
            point = ProgramPoint("<program>", (), 0, 1, start)
            return AnalysisResult([point], [], 0, self.prog, {})
        main = self.prog.functions["main"]
        try:
            self._propagate(("main", (), main.entry), start)
            while self.queue:
                key = self.queue.popleft()
                self.queued.discard(key)
                self.iterations += 1
                self._step(key)
            diags = self._diagnostics()
        except (MalformedStackError, IncompatibleMemoryError) as exc:
            raise AnalysisError(str(exc)) from exc
        return AnalysisResult(self._points(), diags, self.iterations, self.prog, self.states)

    def _diagnostics(self) -> list:
        found: set = set()
        for (fn, ctx, node), mem in self.states.items():
            cfg = self.prog.functions[fn]
            for edge in self.succ[fn][node]:
                if isinstance(edge.op, (StmtOp, FilterOp)):
                    sink: list = []
                    self.transfer.apply(edge.op, mem, sink)
                    found |= {Diagnostic(cfg.lines[edge.dst], kind, text) for kind, text in sink}
        return sorted(found)

    def _points(self) -> list:
        contexts: dict = {}
        for fn, ctx, _ in self.states:
            contexts.setdefault(fn, set()).add(ctx)
        out = []
        for fn in self.prog.order:
            cfg = self.prog.functions[fn]
            for ctx in sorted(contexts.get(fn, ())):
                for node in sorted(cfg.visible):
                    mem = self.states.get((fn, ctx, node), BOTTOM)
                    out.append(ProgramPoint(fn, ctx, node, cfg.lines[node], mem))
        return out


def analyze(prog: LoweredProgram, config: AnalysisConfig = AnalysisConfig()) -> AnalysisResult:
    return Analyzer(prog, config).run()


def memory_rows(mem: AbstractMemory) -> Optional[list]:
    """``[(source, [targets])]`` in display form, or None for an unreachable point."""
    return None if mem.is_bottom else rows(mem)
