import pytest

from pointsto.domain import ConcreteMemory, Deref, Loc, LocationUniverse, alpha, gamma
from pointsto.oracle import (
    check_laws,
    check_soundness,
    concrete_assign,
    concrete_eval,
    concrete_filter,
    enumerate_atoms,
    enumerate_exprs,
    satisfies,
)
from pointsto.transfer import And, Assignment, Atom, CompareOp, Not, Or, StrictOrder


def ex(u, name, times=0):
    e = Loc(u.index(name))
    for _ in range(times):
        e = Deref(e)
    return e


U3 = LocationUniverse(("a", "b", "c"))


def test_concrete_eval_examples():
    one = LocationUniverse(("a",))
    assert concrete_eval(ConcreteMemory.of(one, {"a": "a"}), ex(one, "a")) == 0
    c = ConcreteMemory.of(U3, {"a": "b", "b": "c", "c": "c"})
    assert U3.name(concrete_eval(c, ex(U3, "a", 2))) == "c"
    c1 = ConcreteMemory.of(U3, {"a": "a", "b": "c", "c": "c"})
    assert U3.name(concrete_eval(c1, ex(U3, "a", 2))) == "a"


def test_concrete_assign_examples():
    u = LocationUniverse(("p", "a", "b"))
    c = ConcreteMemory.of(u, {"p": "a", "a": "a", "b": "b"})
    got = concrete_assign(c, Assignment(ex(u, "p"), ex(u, "b")))
    assert got == ConcreteMemory.of(u, {"p": "b", "a": "a", "b": "b"})
    assert concrete_assign(c, Assignment(ex(u, "p"), ex(u, "a"))) == c
    # assign-not-optimal, first concrete: a -> b, writes b -> b
    c1 = ConcreteMemory.of(U3, {"a": "b", "b": "c", "c": "c"})
    got = concrete_assign(c1, Assignment(ex(U3, "a", 1), ex(U3, "a", 1)))
    assert got == ConcreteMemory.of(U3, {"a": "b", "b": "b", "c": "c"})


def test_satisfies_examples():
    u = LocationUniverse(("p", "q", "a"))
    c = ConcreteMemory.of(u, {"p": "a", "q": "a", "a": "a"})
    eq = Atom(CompareOp.EQ, ex(u, "p", 1), ex(u, "q", 1))
    assert satisfies(c, eq)
    assert not satisfies(c, And(eq, Not(eq)))
    assert satisfies(c, Or(eq, Not(eq)))
    u2 = LocationUniverse(("a", "b"))
    cond = Atom(CompareOp.EQ, ex(u2, "a", 2), ex(u2, "b"))
    assert satisfies(ConcreteMemory.of(u2, {"a": "b", "b": "b"}), cond)
    assert not satisfies(ConcreteMemory.of(u2, {"a": "a", "b": "b"}), cond)


def test_satisfies_less_uses_order():
    u = LocationUniverse(("p", "x", "y"))
    order = StrictOrder.from_names(u, [("x", "y")])
    c = ConcreteMemory.of(u, {"p": "x", "x": "x", "y": "y"})
    assert satisfies(c, Atom(CompareOp.LESS, ex(u, "p", 1), ex(u, "y")), order)
    assert not satisfies(c, Atom(CompareOp.LESS, ex(u, "y"), ex(u, "p", 1)), order)
    assert satisfies(c, Atom(CompareOp.NOT_LESS, ex(u, "p"), ex(u, "y")), order)


def test_concrete_filter_limitation_one():
    u = LocationUniverse(("p", "q", "a", "b"))
    a = u.rel([("p", "a"), ("p", "b"), ("q", "a"), ("q", "b"), ("a", "a"), ("b", "b")])
    eq = Atom(CompareOp.EQ, ex(u, "p", 1), ex(u, "q", 1))
    models = concrete_filter(gamma(a), eq)
    rows = {(u.name(m.succ[0]), u.name(m.succ[1])) for m in models}
    assert rows == {("a", "a"), ("b", "b")}
    assert concrete_filter((), eq) == ()
    assert concrete_filter(gamma(a), Or(eq, Not(eq))) == gamma(a)


def test_enumeration_sizes():
    assert len(enumerate_exprs(U3, 2)) == 9
    assert len(enumerate_atoms(U3, 2, (CompareOp.EQ, CompareOp.NEQ))) == 162


@pytest.mark.parametrize("kind", ["eval", "assign", "filter"])
def test_soundness_small_universe(kind):
    report = check_soundness(kind, universe_size=2, depth_bound=2)
    assert report.exhaustive
    assert report.cases > 0
    assert report.violations == []


@pytest.mark.parametrize("short_circuit", [False, True])
def test_filter_connectives_sampled(short_circuit):
    report = check_soundness(
        "filter", universe_size=3, depth_bound=2, connective_bound=2, samples=3000, short_circuit=short_circuit
    )
    assert not report.exhaustive
    assert report.violations == []


def test_laws_small_universe():
    for report in check_laws(universe_size=2):
        assert report.violations == [], report.property


def test_report_serialisation():
    report = check_soundness("eval", universe_size=2, depth_bound=1)
    d = report.to_dict()
    assert d["property"] == "eval" and d["violations"] == 0
    assert "0 violations" in report.to_text()


def test_unknown_kind():
    with pytest.raises(ValueError):
        check_soundness("nope", universe_size=2)


def test_alias_no_agrees_with_models():
    from pointsto.domain import AliasAnswer, alias_query
    from pointsto.oracle import enumerate_relations

    exprs = enumerate_exprs(U3, 1)
    for a in enumerate_relations(U3)[::7]:
        mems = gamma(a)
        for e in exprs:
            for f in exprs:
                if alias_query(a, e, f) is AliasAnswer.NO:
                    assert not concrete_filter(mems, Atom(CompareOp.EQ, e, f))


def test_alpha_of_gamma_matches_for_pointer_fixture():
    u = LocationUniverse(("a", "b"))
    a = u.rel([("a", "a"), ("a", "b"), ("b", "b")])
    assert alpha(u, gamma(a)) == a
