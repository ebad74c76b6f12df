import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointsto.memory import (
    NULL,
    UNDEF,
    AbstractMemory,
    AllocationBlock,
    Array,
    ConcreteAllocation,
    ConcreteFrame,
    ConcreteStore,
    Frame,
    IncompatibleMemoryError,
    MalformedStackError,
    Pointer,
    Record,
    Scalar,
    compatible_abs,
    compatible_conc,
    concretization_map,
    describe_frame,
    dump,
    is_singular,
    layout_abstract,
    layout_concrete,
    map_paths,
    mem_join,
    mem_lattice,
    mem_leq,
    mem_meet,
    op_link,
    op_mark,
    op_new_var,
    op_tail_pop,
    op_tail_push,
    op_unlink,
    op_unmark,
    shape_of,
    slot_map,
)

INT = Scalar("int")
FLOAT = Scalar("float")
DOUBLE = Scalar("double")
CHAR = Scalar("char")
PINT = Pointer(INT)
STRUCT_A = Record("A", (("a", Array(INT, 4)), ("b", FLOAT)))
STRUCT_B = Record("B", (("x", DOUBLE), ("a", STRUCT_A), ("y", CHAR)))


# ---------------------------------------------------------------- layouts


def test_layout_concrete_examples():
    assert layout_concrete(Array(INT, 4)) == [INT] * 5
    assert layout_concrete(STRUCT_A) == [INT] * 5 + [FLOAT]
    assert layout_concrete(STRUCT_B) == [DOUBLE] + [INT] * 5 + [FLOAT, CHAR]
    with pytest.raises(ValueError):
        layout_concrete(Array(INT, None))


def test_layout_abstract_examples():
    lay = layout_abstract(Array(INT, 4))
    assert [t for _, t in lay] == [INT] * 3
    assert [tag for tag, _ in lay] == [("Head",), ("Tail",), ("Off",)]
    assert [t for _, t in layout_abstract(STRUCT_A)] == [INT, INT, INT, FLOAT]
    assert [t for _, t in layout_abstract(STRUCT_B)] == [DOUBLE, INT, INT, INT, FLOAT, CHAR]
    assert layout_abstract(INT) == [((), INT)]
    assert len(layout_abstract(Array(INT, None))) == 3


def test_map_paths_examples():
    pm = map_paths(Array(INT, 4))
    assert [(c.abstract, c.concrete) for c in pm.children] == [
        ("Head", frozenset({0})),
        ("Tail", frozenset({1, 2, 3})),
        ("Off", frozenset({4})),
    ]
    scalar = map_paths(INT)
    assert (scalar.abstract, scalar.concrete, scalar.children) == (0, frozenset({0}), ())
    rec = map_paths(STRUCT_A)
    assert [c.abstract for c in rec.children] == ["a", "b"]
    assert slot_map(Array(INT, 4)) == [0, 1, 1, 1, 2]
    assert slot_map(STRUCT_B) == [0, 1, 2, 2, 2, 3, 4, 5]


@given(st.integers(1, 6), st.integers(1, 4))
def test_slot_map_total_and_onto(n, m):
    t = Record("R", (("x", Array(Array(INT, m), n)), ("y", PINT)))
    sm = slot_map(t)
    assert len(sm) == len(layout_concrete(t))
    n_abs = len(layout_abstract(t))
    assert all(0 <= s < n_abs for s in sm)
    if n >= 2 and m >= 2:
        assert set(sm) == set(range(n_abs))


# ---------------------------------------------------------------- helpers


def block(name, t, targets=None):
    return AllocationBlock.fresh(name, t, targets if targets is not None else NULL)


def mem(**kw):
    return AbstractMemory(**kw)


G = (block("p", PINT), block("q", PINT), block("a", Array(INT, 10)), block("x", INT))


def base_mem():
    return mem(globals=G)


def set_targets(m, path, targets):
    return m.with_leaf(path, frozenset(targets))


# ---------------------------------------------------------------- shapes and lattice


def test_frame_shape_by_call_site():
    # void f(int p) { int a, b; if (...) { int c; g(); } else { int d, e; g(); } }
    def frame_for(call_site, inner):
        m = mem()
        m = op_new_var(m, "p", INT)
        m = op_mark(m)
        m = op_link(m, "main@1")
        for n in ("a", "b"):
            m = op_new_var(m, n, INT)
        m = op_mark(m)
        for n in inner:
            m = op_new_var(m, n, INT)
        m = op_mark(m)
        m = op_mark(m)
        m = op_link(m, call_site)
        return m.head[0]

    f1, f2 = frame_for("f@8", ["c"]), frame_for("f@12", ["d", "e"])
    assert describe_frame(f1) == "[[int p], [int a, int b], [int c]]"
    assert describe_frame(f2) == "[[int p], [int a, int b], [int d, int e]]"
    assert shape_of(f1) != shape_of(f2)
    assert shape_of(f1) == shape_of(frame_for("f@8", ["c"]))


def test_compatible_abs():
    a = base_mem()
    assert compatible_abs(a, a)
    tail = (Frame("f@3", ((block("z", PINT),),)),)
    assert compatible_abs(a, mem(globals=G, tail=tail))
    deeper = mem(globals=G, head=(Frame("f@3", ()),))
    assert not compatible_abs(a, deeper)


def test_join_meet_leq_pointwise():
    a = set_targets(base_mem(), ("global", "p", 0), {("global", "x", 0)})
    b = set_targets(base_mem(), ("global", "p", 0), {("global", "a", 1)})
    j = mem_join(a, b)
    assert j.leaf(("global", "p", 0)) == {("global", "x", 0), ("global", "a", 1)}
    assert mem_join(a, a) == a and mem_meet(a, a) == a
    assert mem_leq(a, j) and mem_leq(b, j) and not mem_leq(j, a)
    assert mem_meet(a, b).is_bottom
    assert mem_meet(j, a) == a
    assert mem_lattice(a, b, "join") == j
    assert mem_lattice(a, b, "leq") is False


def test_incompatible_lattice():
    a = base_mem()
    b = mem(globals=G, head=(Frame("f@3", ()),))
    assert mem_meet(a, b).is_bottom
    with pytest.raises(IncompatibleMemoryError):
        mem_join(a, b)
    assert not mem_leq(a, b)


def test_meet_drops_empty_tail_frame_only():
    f_a = Frame("f@3", ((block("z", PINT, {("global", "x", 0)}),),))
    f_b = Frame("f@3", ((block("z", PINT, {("global", "a", 0)}),),))
    g_only = Frame("g@4", ((block("w", PINT),),))
    a = mem(globals=G, tail=(f_a, g_only))
    b = mem(globals=G, tail=(f_b,))
    met = mem_meet(a, b)
    assert not met.is_bottom
    assert met.tail == ()
    joined = mem_join(a, b)
    assert [f.call_site for f in joined.tail] == ["f@3", "g@4"]


def test_bottom_absorbs():
    bot = AbstractMemory.bottom()
    a = base_mem()
    assert mem_join(bot, a) == a and mem_meet(bot, a).is_bottom
    assert mem_leq(bot, a) and not mem_leq(a, bot)
    assert dump(bot) == "<bottom>"


mem_strategy = st.lists(
    st.sets(st.sampled_from([("global", "x", 0), ("global", "a", 0), ("global", "a", 1), NULL]), min_size=1),
    min_size=2,
    max_size=2,
).map(lambda ts: set_targets(set_targets(base_mem(), ("global", "p", 0), ts[0]), ("global", "q", 0), ts[1]))


@settings(max_examples=60, deadline=None)
@given(mem_strategy, mem_strategy, mem_strategy)
def test_lattice_laws(a, b, c):
    j, m = mem_join(a, b), mem_meet(a, b)
    assert mem_leq(a, j) and mem_leq(b, j)
    assert mem_leq(m, a) and mem_leq(m, b)
    if mem_leq(a, c) and mem_leq(b, c):
        assert mem_leq(j, c)
    if mem_leq(c, a) and mem_leq(c, b):
        assert mem_leq(c, m)
    assert mem_leq(a, a)
    if mem_leq(a, b) and mem_leq(b, a):
        assert a == b


# ---------------------------------------------------------------- stack operations


def test_mark_unmark_round_trip():
    m = op_new_var(base_mem(), "v", PINT)
    m = op_mark(m)
    assert m.top_allocs == () and len(m.top_blocks) == 1
    m2 = op_new_var(m, "w", INT)
    assert len(m2.top_allocs) == 1
    assert op_unmark(op_mark(m)) == m
    back = op_unmark(op_mark(op_new_var(base_mem(), "v", PINT)))
    assert back == op_new_var(base_mem(), "v", PINT)


def test_new_var_array_has_three_slots():
    m = op_new_var(base_mem(), "arr", Array(PINT, 2))
    alloc = m.top_allocs[0]
    assert len(alloc.targets) == 3
    assert all(t == {UNDEF} for t in alloc.targets)


def test_unmark_retargets_dangling_pointers():
    m = op_mark(base_mem())
    m = op_new_var(m, "x", INT)
    m = set_targets(m, ("global", "p", 0), {("top", "x", 0), ("global", "x", 0)})
    m = op_unmark(m)
    assert m.leaf(("global", "p", 0)) == {UNDEF, ("global", "x", 0)}


def test_mark_renames_paths():
    m = op_new_var(base_mem(), "v", INT)
    m = set_targets(m, ("global", "p", 0), {("top", "v", 0)})
    m = op_mark(m)
    assert m.leaf(("global", "p", 0)) == {("topb", 0, "v", 0)}


def test_link_unlink_round_trip():
    m = op_new_var(base_mem(), "local", PINT)
    m = op_mark(m)
    m = op_new_var(m, "arg", PINT)
    m = set_targets(m, ("top", "arg", 0), {("topb", 0, "local", 0)})
    m = op_mark(m)
    linked = op_link(m, "main@7")
    assert len(linked.head) == 1 and len(linked.top_blocks) == 1
    assert linked.leaf(("topb", 0, "arg", 0)) == {("head", 0, 0, "local", 0)}
    assert op_unlink(linked) == m


def test_stack_preconditions():
    with pytest.raises(MalformedStackError):
        op_unmark(base_mem())
    with pytest.raises(MalformedStackError):
        op_unlink(base_mem())
    with pytest.raises(MalformedStackError):
        op_link(op_new_var(base_mem(), "v", INT), "cs")
    with pytest.raises(MalformedStackError):
        op_tail_push(base_mem())


def _framed(targets):
    return mem(globals=G, head=(Frame("f@3", ((block("z", PINT, targets),),)),))


def test_tail_push_insert_and_meet():
    pushed = op_tail_push(_framed({("global", "x", 0), ("global", "a", 0)}))
    assert pushed.head == () and [f.call_site for f in pushed.tail] == ["f@3"]
    again = mem(globals=G, head=_framed({("global", "a", 0), NULL}).head, tail=pushed.tail)
    met = op_tail_push(again)
    assert met.tail[0].blocks[0][0].targets[0] == {("global", "a", 0)}
    joined = op_tail_push(again, merge="join")
    assert joined.tail[0].blocks[0][0].targets[0] == {("global", "x", 0), ("global", "a", 0), NULL}


def test_tail_push_renames_into_tail():
    m = _framed({NULL})
    m = set_targets(m, ("global", "p", 0), {("head", 0, 0, "z", 0)})
    pushed = op_tail_push(m)
    assert pushed.leaf(("global", "p", 0)) == {("tail", "f@3", 0, "z", 0)}


def test_tail_pop():
    pushed = op_tail_push(_framed({NULL}))
    popped = op_tail_pop(pushed, "f@3")
    assert [f.call_site for f in popped.head] == ["f@3"]
    assert shape_of(popped.head[0]) == shape_of(pushed.tail[0])
    assert op_tail_pop(pushed, "g@9").is_bottom
    orig = _framed({NULL})
    restored = op_tail_pop(op_tail_push(orig), "f@3")
    assert restored.head[0].blocks == orig.head[0].blocks


# ---------------------------------------------------------------- singularity


def test_is_singular():
    m = mem(
        globals=(block("i", INT), block("a", Array(INT, 10)), block("s", Array(INT, 2)), block("u", Array(INT, None))),
        heap=(block("pp4", PINT),),
        tail=(Frame("f@3", ((block("z", PINT),),)),),
    )
    assert is_singular(m, ("global", "i", 0))
    assert is_singular(m, ("global", "a", 0)) and not is_singular(m, ("global", "a", 1))
    assert is_singular(m, ("global", "a", 2))
    assert is_singular(m, ("global", "s", 1))
    assert not is_singular(m, ("global", "u", 1))
    assert not is_singular(m, ("heap", "pp4", 0))
    assert not is_singular(m, ("tail", "f@3", 0, "z", 0))
    assert is_singular(m, NULL) and not is_singular(m, UNDEF)


def test_singular_safety_by_enumeration():
    """No singular abstract location covers two concrete slots."""
    for size in (1, 2, 3):
        for depth in (0, 1, 2):
            arr = Array(INT, size)
            frames = tuple(
                ConcreteFrame("f@3", ((ConcreteAllocation("z", PINT),),)) for _ in range(depth)
            )
            head = (Frame("f@3", ((block("z", PINT),),)),) if depth else ()
            tail = (Frame("f@3", ((block("z", PINT),),)),) if depth > 1 else ()
            a = mem(globals=(block("a", arr), block("m", Array(arr, size))), head=head, tail=tail)
            c = ConcreteStore(
                globals=(ConcreteAllocation("a", arr), ConcreteAllocation("m", Array(arr, size))),
                frames=frames,
            )
            assert compatible_conc(c, a)
            cmap = concretization_map(c, a)
            pre: dict = {}
            for cpath, apath in cmap.items():
                pre.setdefault(apath, set()).add(cpath)
            for apath, cs in pre.items():
                if is_singular(a, apath):
                    assert len(cs) == 1, (size, depth, apath, cs)


def test_compatible_conc_conditions():
    a = mem(globals=G, heap=(block("pp4", PINT),))
    c = ConcreteStore(globals=tuple(ConcreteAllocation(b.name, b.ctype) for b in G))
    assert compatible_conc(c, a)
    bad_heap = ConcreteStore(
        globals=c.globals, heap=(("pp9", ConcreteAllocation("pp9", PINT)),)
    )
    assert not compatible_conc(bad_heap, a)
    three = tuple(ConcreteFrame(cs, ((ConcreteAllocation("z", PINT),),)) for cs in ("f@3", "f@3", "g@5"))
    head = (Frame("f@3", ((block("z", PINT),),)), Frame("f@3", ((block("z", PINT),),)))
    tail = (Frame("g@5", ((block("z", PINT),),)),)
    a3 = mem(globals=G, head=head, tail=tail)
    assert compatible_conc(ConcreteStore(globals=c.globals, frames=three), a3)
    assert not compatible_conc(ConcreteStore(globals=c.globals, frames=three[:1]), a3)
    a3_no_tail = mem(globals=G, head=head)
    assert not compatible_conc(ConcreteStore(globals=c.globals, frames=three), a3_no_tail)


# ---------------------------------------------------------------- relation view


def test_relation_round_trip():
    m = set_targets(base_mem(), ("global", "p", 0), {("global", "a", 0), ("global", "a", 1)})
    view = m.relation()
    assert view.memory_from(view.rel) == m
    names = {view.display(l) for l in view.universe.locations}
    assert {"global.p", "global.a.Head", "global.a.Tail", "global.a.Off", "special.null", "special.undef"} <= names


def test_dump_is_sorted_text():
    m = set_targets(base_mem(), ("global", "p", 0), {("global", "a", 1), ("global", "a", 0)})
    text = dump(m)
    assert "global.p -> {global.a.Head, global.a.Tail}" in text.splitlines()
    assert "global.x" not in text
