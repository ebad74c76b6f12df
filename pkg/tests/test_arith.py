import time

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pointsto.arith import (
    EM,
    EP,
    HEAD,
    OFF,
    TAIL,
    UNKNOWN,
    IntAbstraction,
    add_offset,
    concrete_class,
    table_rows,
)


def outcome(part, size, d):
    got = add_offset(part, size, IntAbstraction.of([d]))
    return got.parts | got.errors


def test_table_examples():
    assert add_offset(HEAD, 1, IntAbstraction.of([0])).parts == {HEAD}
    assert add_offset(HEAD, 1, IntAbstraction.of([1])).parts == {OFF}
    got = add_offset(TAIL, 7, IntAbstraction.of([1]))
    assert got.parts == {TAIL, OFF} and not got.errors
    got = add_offset(HEAD, UNKNOWN, IntAbstraction.range(2, None))
    assert got.parts == {TAIL, OFF} and got.errors == {EP}


@pytest.mark.parametrize(
    "part,size,d,expected",
    [
        (HEAD, 1, -1, {EM}),
        (OFF, 1, -1, {HEAD}),
        (TAIL, 1, 0, set()),
        (TAIL, 2, -1, {HEAD}),
        (OFF, 2, -1, {TAIL}),
        (TAIL, 2, 1, {OFF}),
        (TAIL, 3, -2, {EM, HEAD}),
        (TAIL, 3, 2, {OFF, EP}),
        (HEAD, 3, 2, {TAIL}),
        (TAIL, 5, -3, {EM, HEAD, TAIL}),
        (TAIL, 5, 3, {TAIL, OFF, EP}),
        (TAIL, 5, -4, {EM, HEAD}),
        (TAIL, 5, 4, {OFF, EP}),
        (OFF, 5, -5, {HEAD}),
        (OFF, 5, -6, {EM}),
        (HEAD, 5, 6, {EP}),
        (TAIL, UNKNOWN, -2, {EM, HEAD, TAIL}),
        (OFF, UNKNOWN, -1, {HEAD, TAIL}),
        (OFF, UNKNOWN, 1, {EP}),
        (HEAD, UNKNOWN, -1, {EM}),
    ],
)
def test_table_cells(part, size, d, expected):
    assert outcome(part, size, d) == expected


def test_brute_force_containment():
    start = time.perf_counter()
    violations = []
    for size in range(1, 7):
        for k in range(size + 1):
            for d in range(-size - 2, size + 3):
                want = concrete_class(k + d, size)
                got = outcome(concrete_class(k, size), size, d)
                if want not in got:
                    violations.append((size, k, d, want, got))
    assert violations == []
    assert time.perf_counter() - start < 1.0


def test_unknown_table_is_merge_of_known_sizes():
    window = range(-30, 31)
    for lo, hi, cells in table_rows(UNKNOWN):
        ds = [d for d in window if (lo is None or d >= lo) and (hi is None or d <= hi)]
        for part in (HEAD, TAIL, OFF):
            merged = set()
            for size in range(1, 25):
                if part is TAIL and size == 1:
                    continue
                for d in ds:
                    merged |= outcome(part, size, d)
            assert merged == set(cells[part]), (lo, hi, part)


@pytest.mark.parametrize("size", [1, 2, 3, 4, 5, 9, UNKNOWN])
def test_zero_offset_is_identity(size):
    for part in (HEAD, TAIL, OFF):
        if part is TAIL and size == 1:
            continue
        got = add_offset(part, size, IntAbstraction.of([0]))
        assert got.parts == {part} and not got.errors


@pytest.mark.parametrize("size", range(1, 12))
def test_symmetry(size):
    assert add_offset(OFF, size, IntAbstraction.of([-size])).parts == {HEAD}
    assert add_offset(HEAD, size, IntAbstraction.of([size])).parts == {OFF}


def test_top_offsets_union_every_row():
    got = add_offset(HEAD, 6, IntAbstraction.top())
    assert got.parts == {HEAD, TAIL, OFF} and got.errors == {EM, EP}


def test_empty_offsets_give_empty_outcome():
    got = add_offset(HEAD, 4, IntAbstraction.of([]))
    assert not got.parts and not got.errors


def test_int_abstraction_basics():
    one = IntAbstraction.of([1])
    assert one.intersects(1, 1) and not one.intersects(2, None)
    assert IntAbstraction.top().intersects(-(10**9), -(10**9))
    r = IntAbstraction.range(2, None)
    assert r.intersects(5, 5) and not r.intersects(None, 1)
    assert IntAbstraction.of([3]).singleton() == 3
    assert IntAbstraction.top().singleton() is None
    assert (IntAbstraction.of([1, 2]) + IntAbstraction.of([10])).values() == {11, 12}
    assert (-IntAbstraction.of([4])).values() == {-4}
    assert (IntAbstraction.of([1]) + IntAbstraction.top()).is_top


@given(st.sets(st.integers(-20, 20), max_size=6), st.integers(-25, 25), st.integers(0, 10))
def test_intersects_exact_on_finite_sets(values, lo, width):
    hi = lo + width
    ia = IntAbstraction.of(values)
    assert ia.intersects(lo, hi) == any(lo <= v <= hi for v in values)
