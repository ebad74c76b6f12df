"""Exact concrete semantics over tiny universes, and exhaustive soundness checks.

A concrete memory maps every location to exactly one location, so concrete
evaluation always yields a single location.  The checks enumerate every
relation over ``n`` locations (2^(n*n) of them, sampled beyond 512) and
compare each transfer function against the concrete semantics over gamma.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Sequence

from .domain import (
    DEFAULT_GAMMA_CAP,
    ConcreteMemory,
    Deref,
    EnumerationCapError,
    Expr,
    Loc,
    LocationUniverse,
    PointsToRel,
    alpha,
    eval_expr,
    format_rel,
    gamma,
    join,
    leq,
    post,
    prev,
    transpose,
)
from .transfer import (
    And,
    Assignment,
    Atom,
    CompareOp,
    Cond,
    Const,
    LocationOrder,
    Not,
    Or,
    StrictOrder,
    assign,
    filter_cond,
)

EXHAUSTIVE_LIMIT = 512


def concrete_eval(c: ConcreteMemory, e: Expr) -> int:
    if isinstance(e, Loc):
        return e.loc
    if isinstance(e, Deref):
        return c.succ[concrete_eval(c, e.inner)]
    raise TypeError(f"concrete evaluation supports Loc/Deref only, got {type(e).__name__}")


def concrete_assign(c: ConcreteMemory, a: Assignment) -> ConcreteMemory:
    l = concrete_eval(c, a.lhs)
    m = concrete_eval(c, a.rhs)
    succ = list(c.succ)
    succ[l] = m
    return ConcreteMemory(c.universe, tuple(succ))


def satisfies(c: ConcreteMemory, cond: Cond, order: StrictOrder = StrictOrder()) -> bool:
    if isinstance(cond, Atom):
        l, m = concrete_eval(c, cond.lhs), concrete_eval(c, cond.rhs)
        if cond.op is CompareOp.EQ:
            return l == m
        if cond.op is CompareOp.NEQ:
            return l != m
        if cond.op is CompareOp.LESS:
            return order.less(l, m)
        return not order.less(l, m)
    if isinstance(cond, Not):
        return not satisfies(c, cond.cond, order)
    if isinstance(cond, And):
        return satisfies(c, cond.left, order) and satisfies(c, cond.right, order)
    if isinstance(cond, Or):
        return satisfies(c, cond.left, order) or satisfies(c, cond.right, order)
    if isinstance(cond, Const):
        return cond.value
    raise TypeError(f"condition has no concrete meaning: {cond!r}")


def concrete_filter(mems: Iterable[ConcreteMemory], cond: Cond, order: StrictOrder = StrictOrder()) -> tuple:
    return tuple(c for c in mems if satisfies(c, cond, order))


# ---------------------------------------------------------------- enumeration


def small_universe(n: int) -> LocationUniverse:
    return LocationUniverse(tuple(f"l{i}" for i in range(n)))


def default_order(u: LocationUniverse) -> StrictOrder:
    """``l0 < l1`` in one two-slot block; every other pair is unordered."""
    return StrictOrder(frozenset({(0, 1)})) if len(u) >= 2 else StrictOrder()


def enumerate_relations(u: LocationUniverse) -> list:
    pairs = list(product(u.locations, repeat=2))
    out = []
    for bits in range(1 << len(pairs)):
        out.append(PointsToRel(u, frozenset(p for k, p in enumerate(pairs) if bits >> k & 1)))
    return out


def sample_relations(u: LocationUniverse, count: int, seed: int) -> list:
    pairs = list(product(u.locations, repeat=2))
    rng = random.Random(seed)
    return [PointsToRel(u, frozenset(p for p in pairs if rng.random() < 0.5)) for _ in range(count)]


def enumerate_exprs(u: LocationUniverse, max_depth: int) -> list:
    out = []
    for l in u.locations:
        e: Expr = Loc(l)
        out.append(e)
        for _ in range(max_depth):
            e = Deref(e)
            out.append(e)
    return out


def enumerate_assignments(u: LocationUniverse, max_depth: int) -> list:
    exprs = enumerate_exprs(u, max_depth)
    return [Assignment(e, f) for e in exprs for f in exprs]


ALL_OPS = (CompareOp.EQ, CompareOp.NEQ, CompareOp.LESS, CompareOp.NOT_LESS)


def enumerate_atoms(u: LocationUniverse, max_depth: int, ops: Sequence[CompareOp] = ALL_OPS) -> list:
    exprs = enumerate_exprs(u, max_depth)
    return [Atom(op, e, f) for op in ops for e in exprs for f in exprs]


def random_cond(rng: random.Random, atoms: Sequence[Atom], bound: int) -> Cond:
    if bound <= 0 or rng.random() < 0.25:
        return rng.choice(atoms)
    kind = rng.randrange(3)
    if kind == 0:
        return Not(random_cond(rng, atoms, bound - 1))
    ctor = And if kind == 1 else Or
    return ctor(random_cond(rng, atoms, bound - 1), random_cond(rng, atoms, bound - 1))


# ---------------------------------------------------------------- reports


@dataclass
class OracleReport:
    property: str
    universe_size: int
    cases: int = 0
    violations: list = field(default_factory=list)
    exhaustive: bool = True

    def record(self, state, given, expected, got) -> None:
        self.violations.append((state, given, expected, got))

    def to_dict(self) -> dict:
        return {
            "property": self.property,
            "universe_size": self.universe_size,
            "cases": self.cases,
            "violations": len(self.violations),
            "exhaustive": self.exhaustive,
        }

    def to_text(self) -> str:
        cover = "exhaustive" if self.exhaustive else "sampled"
        lines = [
            f"{self.property}: |L|={self.universe_size} {self.cases} cases ({cover}), "
            f"{len(self.violations)} violations"
        ]
        for state, given, expected, got in self.violations[:10]:
            lines.append(f"  state={state!s} input={given!s} expected={expected!s} got={got!s}")
        return "\n".join(lines)


def _relations(u: LocationUniverse, seed: int) -> tuple:
    if len(u) * len(u) <= 9:
        return enumerate_relations(u), True
    return sample_relations(u, EXHAUSTIVE_LIMIT, seed), False


def _flat(rel: PointsToRel) -> str:
    return format_rel(rel).replace("\n", "; ")


def check_soundness(
    kind: str,
    universe_size: int = 3,
    depth_bound: int = 2,
    connective_bound: int = 0,
    *,
    samples: int = 2000,
    seed: int = 0,
    cap: int = DEFAULT_GAMMA_CAP,
    short_circuit: bool = False,
) -> OracleReport:
    """Check one soundness property against the concrete semantics.

    ``eval``: every concrete evaluation lies in the abstract one.
    ``assign``: every concrete successor state lies in gamma of the result.
    ``filter``: every concrete state satisfying (failing) the condition lies
    in gamma of the true (false) result.  With ``connective_bound > 0`` the
    conditions are random trees over the atoms and only ``samples`` pairs of
    relation and condition are checked.
    """
    if kind not in ("eval", "assign", "filter"):
        raise ValueError(f"unknown soundness property {kind!r}")
    if universe_size > cap:
        raise EnumerationCapError(f"universe of size {universe_size} exceeds gamma cap {cap}")
    u = small_universe(universe_size)
    rels, exhaustive = _relations(u, seed)
    report = OracleReport(kind, universe_size, exhaustive=exhaustive)
    if kind == "eval":
        _check_eval(report, rels, enumerate_exprs(u, depth_bound), cap)
    elif kind == "assign":
        _check_assign(report, rels, enumerate_assignments(u, depth_bound), cap)
    else:
        order = default_order(u)
        atoms = enumerate_atoms(u, depth_bound)
        if connective_bound <= 0:
            cases = ((a, atom) for a in rels for atom in atoms)
        else:
            report.exhaustive = False
            rng = random.Random(seed)
            cases = ((rng.choice(rels), random_cond(rng, atoms, connective_bound)) for _ in range(samples))
        _check_filter(report, cases, order, cap, short_circuit)
    return report


def _check_eval(report: OracleReport, rels, exprs, cap) -> None:
    for a in rels:
        mems = gamma(a, cap)
        for e in exprs:
            report.cases += 1
            got = eval_expr(a, e)
            for c in mems:
                loc = concrete_eval(c, e)
                if loc not in got:
                    report.record(_flat(a), e, loc, sorted(got))
                    break


def _check_assign(report: OracleReport, rels, assignments, cap) -> None:
    for a in rels:
        mems = gamma(a, cap)
        for asg in assignments:
            report.cases += 1
            got = assign(a, asg)
            for c in mems:
                after = concrete_assign(c, asg)
                if not after.graph <= got.edges:
                    report.record(_flat(a), asg, sorted(after.graph), _flat(got))
                    break


def _check_filter(report: OracleReport, cases, order: LocationOrder, cap, short_circuit=False) -> None:
    cache: dict = {}
    for a, cond in cases:
        report.cases += 1
        mems = cache.get(a)
        if mems is None:
            mems = cache[a] = gamma(a, cap)
        true_part, false_part = filter_cond(a, cond, order=order, short_circuit=short_circuit)
        if not (leq(true_part, a) and leq(false_part, a)):
            report.record(_flat(a), cond, "filter result within input", (_flat(true_part), _flat(false_part)))
            continue
        for c in mems:
            side = true_part if satisfies(c, cond, order) else false_part
            if side.is_bottom or not c.graph <= side.edges:
                report.record(_flat(a), cond, sorted(c.graph), _flat(side))
                break


# ---------------------------------------------------------------- lattice laws


def check_laws(universe_size: int = 3, cap: int = DEFAULT_GAMMA_CAP, seed: int = 0) -> list:
    """Galois adjunction, abstraction effect, duality and filter-shrink laws."""
    u = small_universe(universe_size)
    rels, exhaustive = _relations(u, seed)
    gammas = {a: gamma(a, cap) for a in rels}
    all_mems = gamma(PointsToRel(u, frozenset(product(u.locations, repeat=2))), cap)
    reports = []

    galois = OracleReport("galois", universe_size, exhaustive=False)
    singles = [(c,) for c in all_mems]
    pairs = [(c, d) for i, c in enumerate(all_mems) for d in all_mems[i + 1 :]]
    for a in rels:
        members = set(gammas[a])
        for cs in singles + pairs:
            galois.cases += 1
            left = leq(alpha(u, cs), a)
            right = all(c in members for c in cs)
            if left != right:
                galois.record(_flat(a), cs, right, left)
    reports.append(galois)

    effect = OracleReport("alpha_gamma", universe_size, exhaustive=exhaustive)
    monotone = OracleReport("gamma_monotone", universe_size, exhaustive=exhaustive)
    dual = OracleReport("transpose_duality", universe_size, exhaustive=exhaustive)
    shrink = OracleReport("filter_shrinks", universe_size, exhaustive=exhaustive)
    cover = OracleReport("split_covers", universe_size, exhaustive=exhaustive)
    order = default_order(u)
    atoms = enumerate_atoms(u, 1)
    subsets = [frozenset(l for l in u.locations if bits >> l & 1) for bits in range(1 << len(u))]
    for a in rels:
        mems = gammas[a]
        effect.cases += 1
        back = alpha(u, mems)
        if not leq(back, a) or (mems and back != a):
            effect.record(_flat(a), None, _flat(a), _flat(back))

        for b in rels:
            if a.edges <= b.edges:
                monotone.cases += 1
                if not set(mems) <= set(gammas[b]):
                    monotone.record(_flat(a), _flat(b), "gamma(a) <= gamma(b)", False)

        dual.cases += 1
        if transpose(transpose(a)) != a or any(prev(a, s) != post(transpose(a), s) for s in subsets):
            dual.record(_flat(a), None, "involution and duality", False)

        for atom in atoms:
            shrink.cases += 1
            cover.cases += 1
            t, f = filter_cond(a, atom, order=order)
            if not (leq(t, a) and leq(f, a)):
                shrink.record(_flat(a), atom, "within input", (_flat(t), _flat(f)))
            if mems and not leq(alpha(u, mems), join(t, f)):
                cover.record(_flat(a), atom, _flat(alpha(u, mems)), _flat(join(t, f)))
    reports += [effect, monotone, dual, shrink, cover]
    return reports
