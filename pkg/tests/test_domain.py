from itertools import product

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointsto.domain import (
    AliasAnswer,
    ConcreteMemory,
    Deref,
    DomainBottomError,
    EnumerationCapError,
    Loc,
    LocationUniverse,
    PointsToRel,
    alias_query,
    alpha,
    eval_at_depth,
    eval_expr,
    format_rel,
    gamma,
    join,
    lattice,
    leq,
    meet,
    post,
    prev,
    transpose,
)

U3 = LocationUniverse(("a", "b", "c"))


def rel(u, *pairs):
    return u.rel(pairs)


def deref(u, name, times):
    e = Loc(u.index(name))
    for _ in range(times):
        e = Deref(e)
    return e


def names(u, locs):
    return {u.name(l) for l in locs}


# eval is not optimal: A = {(a,a),(a,b),(b,c)}
NOT_OPT = rel(U3, ("a", "a"), ("a", "b"), ("b", "c"))


def test_universe_rejects_duplicates_and_empty():
    with pytest.raises(ValueError):
        LocationUniverse(("a", "a"))
    with pytest.raises(ValueError):
        LocationUniverse(())


def test_post_examples():
    assert names(U3, post(rel(U3, ("a", "b"), ("b", "c")), U3.locs("a"))) == {"b"}
    assert names(U3, post(NOT_OPT, U3.locs("a", "b"))) == {"a", "b", "c"}
    assert post(rel(U3), U3.locs("a")) == frozenset()


def test_prev_examples():
    assert names(U3, prev(rel(U3, ("a", "b"), ("c", "b")), U3.locs("b"))) == {"a", "c"}
    assert names(U3, prev(NOT_OPT, U3.locs("c"))) == {"b"}
    assert prev(NOT_OPT, frozenset()) == frozenset()


def test_transpose_examples():
    assert transpose(rel(U3, ("a", "b"))) == rel(U3, ("b", "a"))
    assert transpose(rel(U3, ("a", "a"))) == rel(U3, ("a", "a"))
    assert transpose(rel(U3, ("a", "b"), ("b", "c"))) == rel(U3, ("b", "a"), ("c", "b"))


def test_eval_examples():
    assert names(U3, eval_expr(NOT_OPT, deref(U3, "a", 0))) == {"a"}
    assert names(U3, eval_expr(NOT_OPT, deref(U3, "a", 2))) == {"a", "b", "c"}
    assert eval_expr(rel(U3), deref(U3, "a", 1)) == frozenset()


def test_eval_at_depth_examples():
    e = deref(U3, "a", 2)
    assert names(U3, eval_at_depth(NOT_OPT, e, 2)) == {"a"}
    assert names(U3, eval_at_depth(NOT_OPT, e, 1)) == {"a", "b"}
    assert names(U3, eval_at_depth(NOT_OPT, e, 0)) == {"a", "b", "c"}
    assert eval_at_depth(NOT_OPT, deref(U3, "a", 0), 3) == frozenset()


def test_bottom_is_rejected_by_navigation():
    bot = PointsToRel.bottom(U3)
    with pytest.raises(DomainBottomError):
        post(bot, U3.locs("a"))
    with pytest.raises(DomainBottomError):
        eval_expr(bot, deref(U3, "a", 1))
    assert bot != rel(U3)


def test_lattice_examples():
    ab, bc = rel(U3, ("a", "b")), rel(U3, ("b", "c"))
    assert join(ab, bc) == rel(U3, ("a", "b"), ("b", "c"))
    assert meet(NOT_OPT, NOT_OPT) == NOT_OPT
    assert leq(ab, rel(U3, ("a", "b"), ("b", "c")))
    assert lattice(ab, bc, "join") == join(ab, bc)
    bot = PointsToRel.bottom(U3)
    assert join(bot, ab) == ab
    assert meet(bot, ab).is_bottom
    assert leq(bot, rel(U3))
    assert not leq(rel(U3), bot)


def test_lattice_universe_mismatch():
    other = LocationUniverse(("a", "b"))
    with pytest.raises(ValueError):
        join(rel(U3), rel(other))


def test_gamma_examples():
    one = LocationUniverse(("a",))
    assert gamma(rel(one, ("a", "a"))) == (ConcreteMemory(one, (0,)),)
    assert gamma(rel(U3, ("a", "b"), ("b", "c"))) == ()
    assert gamma(PointsToRel.bottom(U3)) == ()


def test_gamma_limitation_two_fixture():
    # edges (r,p),(r,q),(p,a),(q,c), plus self-loops on the non-pointer rows
    u = LocationUniverse(("r", "p", "q", "a", "c"))
    a = u.rel([("r", "p"), ("r", "q"), ("p", "a"), ("q", "c"), ("a", "a"), ("c", "c")])
    mems = gamma(a)
    rows = {tuple(u.name(m.succ[u.index(x)]) for x in ("r", "p", "q")) for m in mems}
    assert rows == {("p", "a", "c"), ("q", "a", "c")}


def test_gamma_cap():
    big = LocationUniverse(tuple("abcdefg"))
    with pytest.raises(EnumerationCapError):
        gamma(big.rel([]))
    assert gamma(big.rel([]), cap=7) == ()


def test_alpha_examples():
    u = LocationUniverse(("p", "q", "a", "b"))
    c0 = ConcreteMemory.of(u, {"p": "a", "q": "a", "a": "a", "b": "b"})
    c1 = ConcreteMemory.of(u, {"p": "b", "q": "b", "a": "a", "b": "b"})
    got = alpha(u, [c0, c1])
    assert got == u.rel([("p", "a"), ("q", "a"), ("p", "b"), ("q", "b"), ("a", "a"), ("b", "b")])
    assert alpha(u, []) == u.rel([])
    assert alpha(u, [c0]) == PointsToRel(u, c0.graph)


def test_alias_query_examples():
    u = LocationUniverse(("p", "q", "a", "b"))
    p, q = Deref(Loc(u.index("p"))), Deref(Loc(u.index("q")))
    assert alias_query(u.rel([("p", "a"), ("q", "a")]), p, q) is AliasAnswer.MUST_SINGLE
    assert alias_query(u.rel([("p", "a"), ("q", "b")]), p, q) is AliasAnswer.NO
    lim1 = u.rel([("p", "a"), ("p", "b"), ("q", "a"), ("q", "b")])
    assert alias_query(lim1, p, q) is AliasAnswer.TOP
    single = u.rel([("p", "a"), ("q", "a")])
    assert alias_query(single, p, q, singular=lambda l: False) is AliasAnswer.TOP


def test_format_rel():
    text = format_rel(NOT_OPT)
    assert text.splitlines() == ["a -> {a,b}", "b -> {c}"]
    assert format_rel(PointsToRel.bottom(U3)) == "<bottom>"


def test_concrete_memory_must_be_total():
    with pytest.raises(ValueError):
        ConcreteMemory(U3, (0, 1))
    with pytest.raises(ValueError):
        ConcreteMemory(U3, (0, 1, 5))


ALL_REL3 = [
    PointsToRel(U3, frozenset(p for p, bit in zip(product(range(3), repeat=2), bits) if bit))
    for bits in product((0, 1), repeat=9)
]

rels3 = st.sampled_from(ALL_REL3)


@settings(max_examples=200, deadline=None)
@given(rels3)
def test_transpose_involution(a):
    assert transpose(transpose(a)) == a


@settings(max_examples=200, deadline=None)
@given(rels3, st.sets(st.integers(0, 2)))
def test_prev_post_duality(a, locs):
    locs = frozenset(locs)
    assert prev(a, locs) == post(transpose(a), locs)


@settings(max_examples=200, deadline=None)
@given(rels3, rels3)
def test_gamma_monotone(a, b):
    lo, hi = meet(a, b), join(a, b)
    assert set(gamma(lo)) <= set(gamma(a)) <= set(gamma(hi))


def test_alpha_gamma_exhaustive():
    for a in ALL_REL3:
        cs = gamma(a)
        back = alpha(U3, cs)
        assert leq(back, a)
        if cs:
            assert back == a


@settings(max_examples=100, deadline=None)
@given(rels3, st.integers(0, 2), st.integers(0, 3))
def test_eval_is_union_of_concrete_evals_or_more(a, base, depth):
    e = deref(U3, U3.name(base), depth)
    concrete = set()
    for c in gamma(a):
        concrete |= eval_expr(PointsToRel(U3, c.graph), e)
    assert concrete <= eval_expr(a, e)
