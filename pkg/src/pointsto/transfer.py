"""Transfer functions: assignment, condition filters and checked evaluation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Union

from .domain import (
    Deref,
    Expr,
    Loc,
    Location,
    LocationUniverse,
    PointsToRel,
    Shift,
    all_singular,
    depth,
    eval_at_depth,
    eval_expr,
    join,
    meet,
    post,
    prev,
    wrappers,
)

Singular = Callable[[Location], bool]


@dataclass(frozen=True)
class Assignment:
    lhs: Expr
    rhs: Expr


# ---------------------------------------------------------------- conditions


class CompareOp(enum.Enum):
    EQ = "=="
    NEQ = "!="
    LESS = "<"
    NOT_LESS = "!<"


_NEGATION = {
    CompareOp.EQ: CompareOp.NEQ,
    CompareOp.NEQ: CompareOp.EQ,
    CompareOp.LESS: CompareOp.NOT_LESS,
    CompareOp.NOT_LESS: CompareOp.LESS,
}


def negate(op: CompareOp) -> CompareOp:
    return _NEGATION[op]


@dataclass(frozen=True)
class Atom:
    op: CompareOp
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Not:
    cond: Cond


@dataclass(frozen=True)
class And:
    left: Cond
    right: Cond


@dataclass(frozen=True)
class Or:
    left: Cond
    right: Cond


@dataclass(frozen=True)
class Opaque:
    """A condition this domain cannot see into (integer tests, rand())."""

    label: str = "?"


@dataclass(frozen=True)
class Const:
    value: bool


Cond = Union[Atom, Not, And, Or, Opaque, Const]


class LocationOrder(Protocol):
    def may_less(self, l: Location, m: Location) -> bool: ...

    def may_not_less(self, l: Location, m: Location) -> bool: ...


@dataclass(frozen=True)
class StrictOrder:
    """A strict order given by its pairs; unrelated locations are unordered."""

    pairs: frozenset = frozenset()

    @classmethod
    def from_names(cls, universe: LocationUniverse, pairs: Iterable[tuple]) -> StrictOrder:
        return cls(frozenset((universe.index(a), universe.index(b)) for a, b in pairs))

    def less(self, l: Location, m: Location) -> bool:
        return (l, m) in self.pairs

    def may_less(self, l: Location, m: Location) -> bool:
        return (l, m) in self.pairs

    def may_not_less(self, l: Location, m: Location) -> bool:
        return (l, m) not in self.pairs


NO_ORDER = StrictOrder()


# ---------------------------------------------------------------- assignment


def assign(rel: PointsToRel, a: Assignment, singular: Singular = all_singular) -> PointsToRel:
    edges = rel.require()
    lhs = eval_expr(rel, a.lhs)
    rhs = eval_expr(rel, a.rhs)
    if len(lhs) == 1:
        (l,) = lhs
        if singular(l):
            edges = frozenset(p for p in edges if p[0] != l)
    return PointsToRel(rel.universe, edges | frozenset((l, m) for l in lhs for m in rhs))


# ---------------------------------------------------------------- filters


def _step_back(rel: PointsToRel, w: Expr, level: frozenset, targets: frozenset) -> frozenset:
    if isinstance(w, Deref):
        return level & prev(rel, targets)
    return w.preimage(level, targets)


def target(rel: PointsToRel, M: Iterable[Location], e: Expr, i: int) -> frozenset:
    return _targets(rel, frozenset(M), e, i)[i]


def _targets(rel: PointsToRel, M: frozenset, e: Expr, upto: int) -> list:
    ts = [eval_expr(rel, e) & M]
    ws = wrappers(e)
    for j in range(1, upto + 1):
        if j > len(ws) or not ts[-1]:
            ts.append(frozenset())
            continue
        level = eval_at_depth(rel, e, j)
        ts.append(_step_back(rel, ws[j - 1], level, ts[-1]))
    return ts


def filter_toward(
    rel: PointsToRel, M: Iterable[Location], e: Expr, singular: Singular = all_singular
) -> PointsToRel:
    """Restrict ``rel`` to memories where ``e`` evaluates into ``M``.

    Bottom when no location of ``eval(rel, e)`` lies in ``M``.
    """
    if rel.is_bottom:
        return rel
    M = frozenset(M)
    if isinstance(e, Loc):
        return rel if e.loc in M else PointsToRel.bottom(rel.universe)
    n = depth(e)
    ts = _targets(rel, M, e, n)
    if not ts[0]:
        return PointsToRel.bottom(rel.universe)
    ws = wrappers(e)
    drop = set()
    for i in range(n):
        if not isinstance(ws[i], Deref):
            continue
        hit = ts[i + 1]
        if len(hit) == 1:
            (t,) = hit
            if singular(t):
                drop |= {(t, m) for m in post(rel, hit) if m not in ts[i]}
    return rel.without(drop) if drop else rel


def _order_sets(le: frozenset, lf: frozenset, rel_fn) -> tuple:
    E = frozenset(l for l in le if any(rel_fn(l, m) for m in lf))
    F = frozenset(m for m in lf if any(rel_fn(l, m) for l in le))
    return E, F


def filter_atomic(
    rel: PointsToRel,
    op: CompareOp,
    e: Expr,
    f: Expr,
    singular: Singular = all_singular,
    order: LocationOrder = NO_ORDER,
) -> PointsToRel:
    if rel.is_bottom:
        return rel
    le, lf = eval_expr(rel, e), eval_expr(rel, f)
    if op is CompareOp.EQ:
        both = le & lf
        return meet(filter_toward(rel, both, e, singular), filter_toward(rel, both, f, singular))
    if op is CompareOp.NEQ:
        both = le & lf
        if len(both) == 1 and singular(next(iter(both))):
            return join(
                filter_toward(rel, le - lf, e, singular),
                filter_toward(rel, lf - le, f, singular),
            )
        return rel
    test = order.may_less if op is CompareOp.LESS else order.may_not_less
    E, F = _order_sets(le, lf, test)
    return meet(filter_toward(rel, E, e, singular), filter_toward(rel, F, f, singular))


AtomicFilter = Callable[[PointsToRel, Atom, bool], PointsToRel]


def default_atomic(
    singular: Singular = all_singular, order: LocationOrder = NO_ORDER, iterations: int = 1
) -> AtomicFilter:
    """Atomic filter applied up to ``iterations`` times, stopping early at a fixpoint."""

    def run(rel: PointsToRel, atom: Atom, positive: bool) -> PointsToRel:
        op = atom.op if positive else negate(atom.op)
        for _ in range(max(1, iterations)):
            nxt = filter_atomic(rel, op, atom.lhs, atom.rhs, singular, order)
            if nxt == rel:
                break
            rel = nxt
        return rel

    return run


def filter_extended(
    rel_t: PointsToRel,
    rel_f: PointsToRel,
    c: Cond,
    singular: Singular = all_singular,
    order: LocationOrder = NO_ORDER,
    *,
    iterations: int = 1,
    atomic: AtomicFilter | None = None,
    short_circuit: bool = False,
) -> tuple:
    """Return ``(true_state, false_state)`` for condition ``c``.

    ``rel_t`` is refined for the branch where ``c`` holds, ``rel_f`` for the
    one where it fails.  With ``short_circuit`` the right operand of ``&&``
    is only filtered inside the left operand's true part.
    """
    atomic = atomic or default_atomic(singular, order, iterations)

    def go(t: PointsToRel, f: PointsToRel, c: Cond) -> tuple:
        if isinstance(c, Atom):
            return (
                t if t.is_bottom else atomic(t, c, True),
                f if f.is_bottom else atomic(f, c, False),
            )
        if isinstance(c, Opaque):
            return t, f
        if isinstance(c, Const):
            bot = PointsToRel.bottom(t.universe)
            return (t, bot) if c.value else (bot, f)
        if isinstance(c, Not):
            nt, nf = go(f, t, c.cond)
            return nf, nt
        if isinstance(c, Or):
            return go(t, f, Not(And(Not(c.left), Not(c.right))))
        if isinstance(c, And):
            a0, b0 = go(t, f, c.left)
            if short_circuit:
                a1, b1 = go(a0, a0, c.right)
                return a1, join(b0, b1)
            a1, b1 = go(t, f, c.right)
            return meet(a0, a1), join(b0, meet(a0, b1))
        raise TypeError(f"not a condition: {c!r}")

    return go(rel_t, rel_f, c)


def filter_cond(rel: PointsToRel, c: Cond, singular: Singular = all_singular, order: LocationOrder = NO_ORDER, **kw) -> tuple:
    return filter_extended(rel, rel, c, singular, order, **kw)


# ---------------------------------------------------------------- checked evaluation


class ErrorKind(enum.Enum):
    DEREF = "DerefError"
    EVAL = "EvalError"
    UNDERFLOW = "Em"
    OVERFLOW = "Ep"
    ARITH = "Arith"  # offset applied to something that is not an array element


@dataclass(frozen=True)
class SpecialLocSets:
    non_evaluable: frozenset = frozenset()
    non_dereferenceable: frozenset = frozenset()
    read_only: frozenset = frozenset()


@dataclass(frozen=True)
class CheckedEval:
    locations: frozenset
    ok_state: PointsToRel
    errors: frozenset
    err_state: PointsToRel
    # (kind, offending location) pairs behind ``errors``
    faults: frozenset = field(default=frozenset())


def eval_checked(
    rel: PointsToRel, e: Expr, specials: SpecialLocSets, singular: Singular = all_singular
) -> CheckedEval:
    rel.require()
    bot = PointsToRel.bottom(rel.universe)
    if isinstance(e, Loc):
        if e.loc in specials.non_evaluable:
            return CheckedEval(frozenset(), bot, frozenset({ErrorKind.EVAL}), rel, frozenset({(ErrorKind.EVAL, e.loc)}))
        return CheckedEval(frozenset({e.loc}), rel, frozenset(), bot)

    inner = eval_checked(rel, e.inner, specials, singular)
    if inner.ok_state.is_bottom:
        return CheckedEval(frozenset(), bot, inner.errors, inner.err_state, inner.faults)
    errors, faults, err = set(inner.errors), set(inner.faults), inner.err_state
    l0 = inner.locations

    if isinstance(e, Shift):
        bad = {l: e.faults[l] for l in l0 if e.faults.get(l)}
        good = frozenset(l for l in l0 if e.table.get(l))
        for l, tags in bad.items():
            for tag in tags:
                errors.add(tag)
                faults.add((tag, l))
        if bad:
            err = join(err, filter_toward(inner.ok_state, frozenset(bad), e.inner, singular))
        ok = filter_toward(inner.ok_state, good, e.inner, singular)
        locs = e.image(good) if not ok.is_bottom else frozenset()
        return CheckedEval(locs, ok, frozenset(errors), err, frozenset(faults))

    l0x = l0 & specials.non_dereferenceable
    l0n = l0 - l0x
    a0n = filter_toward(inner.ok_state, l0n, e.inner, singular)
    if l0x:
        errors.add(ErrorKind.DEREF)
        faults |= {(ErrorKind.DEREF, l) for l in l0x}
        err = join(err, filter_toward(inner.ok_state, l0x, e.inner, singular))
    if a0n.is_bottom:
        return CheckedEval(frozenset(), a0n, frozenset(errors), err, frozenset(faults))
    l1 = post(a0n, l0n)
    l1x = l1 & specials.non_evaluable
    l1n = l1 - l1x
    a1n = filter_toward(a0n, l1n, e, singular)
    if l1x:
        errors.add(ErrorKind.EVAL)
        faults |= {(ErrorKind.EVAL, l) for l in l1x}
        err = join(err, filter_toward(a0n, l1x, e, singular))
    locs = l1n if not a1n.is_bottom else frozenset()
    return CheckedEval(locs, a1n, frozenset(errors), err, frozenset(faults))
