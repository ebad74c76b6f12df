"""Table-driven pointer arithmetic over the Head/Tail/Off array abstraction.

Each table maps an offset interval and a source part to the parts (and
underflow/overflow errors) the result may land in.  Results for a set of
offsets are the union over every row whose interval meets that set.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Optional

from .transfer import ErrorKind


class ArrayPart(enum.Enum):
    HEAD = "Head"
    TAIL = "Tail"
    OFF = "Off"


HEAD, TAIL, OFF = ArrayPart.HEAD, ArrayPart.TAIL, ArrayPart.OFF
EM, EP = ErrorKind.UNDERFLOW, ErrorKind.OVERFLOW
UNKNOWN = None

Bound = Optional[int]


@dataclass(frozen=True)
class ArithOutcome:
    parts: frozenset = frozenset()
    errors: frozenset = frozenset()


# ---------------------------------------------------------------- integer sets


@dataclass(frozen=True)
class IntAbstraction:
    """Union of closed intervals; ``None`` bounds are unbounded."""

    intervals: tuple = ()

    @classmethod
    def of(cls, values: Iterable[int]) -> IntAbstraction:
        return cls(tuple((v, v) for v in sorted(set(values))))

    @classmethod
    def range(cls, lo: Bound, hi: Bound) -> IntAbstraction:
        return cls(((lo, hi),))

    @classmethod
    def top(cls) -> IntAbstraction:
        return cls(((None, None),))

    @property
    def is_top(self) -> bool:
        return (None, None) in self.intervals

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    def intersects(self, lo: Bound, hi: Bound) -> bool:
        for a, b in self.intervals:
            if (lo is None or b is None or lo <= b) and (hi is None or a is None or a <= hi):
                return True
        return False

    def values(self) -> set | None:
        if any(a is None or b is None for a, b in self.intervals):
            return None
        out: set = set()
        for a, b in self.intervals:
            if b - a > 4096:
                return None
            out.update(range(a, b + 1))
        return out

    def singleton(self) -> int | None:
        vals = self.values()
        return next(iter(vals)) if vals is not None and len(vals) == 1 else None

    def _lift(self, other: IntAbstraction, fn) -> IntAbstraction:
        a, b = self.values(), other.values()
        if a is None or b is None:
            return IntAbstraction.top()
        return IntAbstraction.of(fn(x, y) for x in a for y in b)

    def __add__(self, other: IntAbstraction) -> IntAbstraction:
        return self._lift(other, lambda x, y: x + y)

    def __sub__(self, other: IntAbstraction) -> IntAbstraction:
        return self._lift(other, lambda x, y: x - y)

    def __mul__(self, other: IntAbstraction) -> IntAbstraction:
        return self._lift(other, lambda x, y: x * y)

    def __neg__(self) -> IntAbstraction:
        vals = self.values()
        if vals is None:
            return IntAbstraction.top()
        return IntAbstraction.of(-v for v in vals)


# ---------------------------------------------------------------- tables

_SYM = {"H": HEAD, "T": TAIL, "O": OFF, "Em": EM, "Ep": EP}


def _cells(head: str, tail: str, off: str) -> dict:
    parse = lambda s: frozenset(_SYM[x] for x in s.split(",") if x)
    return {HEAD: parse(head), TAIL: parse(tail), OFF: parse(off)}


def table_rows(size: int | None) -> list:
    """Rows ``(lo, hi, cells)`` for an array of ``size`` elements (None: unknown)."""
    S = size
    if S is None:
        raw = [
            (None, -2, "Em", "Em,H,T", "Em,H,T"),
            (-1, -1, "Em", "H,T", "H,T"),
            (0, 0, "H", "T", "O"),
            (1, 1, "T,O", "T,O", "Ep"),
            (2, None, "T,O,Ep", "T,O,Ep", "Ep"),
        ]
    elif S == 1:
        raw = [
            (None, -2, "Em", "", "Em"),
            (-1, -1, "Em", "", "H"),
            (0, 0, "H", "", "O"),
            (1, 1, "O", "", "Ep"),
            (2, None, "Ep", "", "Ep"),
        ]
    elif S == 2:
        raw = [
            (None, -3, "Em", "Em", "Em"),
            (-2, -2, "Em", "Em", "H"),
            (-1, -1, "Em", "H", "T"),
            (0, 0, "H", "T", "O"),
            (1, 1, "T", "O", "Ep"),
            (2, 2, "O", "Ep", "Ep"),
            (3, None, "Ep", "Ep", "Ep"),
        ]
    elif S == 3:
        raw = [
            (None, -4, "Em", "Em", "Em"),
            (-3, -3, "Em", "Em", "H"),
            (-2, -2, "Em", "Em,H", "T"),
            (-1, -1, "Em", "H,T", "T"),
            (0, 0, "H", "T", "O"),
            (1, 1, "T", "T,O", "Ep"),
            (2, 2, "T", "O,Ep", "Ep"),
            (3, 3, "O", "Ep", "Ep"),
            (4, None, "Ep", "Ep", "Ep"),
        ]
    elif S >= 4:
        raw = [
            (None, -S - 1, "Em", "Em", "Em"),
            (-S, -S, "Em", "Em", "H"),
            (1 - S, 1 - S, "Em", "Em,H", "T"),
            (2 - S, -2, "Em", "Em,H,T", "T"),
            (-1, -1, "Em", "H,T", "T"),
            (0, 0, "H", "T", "O"),
            (1, 1, "T", "T,O", "Ep"),
            (2, S - 2, "T", "T,O,Ep", "Ep"),
            (S - 1, S - 1, "T", "O,Ep", "Ep"),
            (S, S, "O", "Ep", "Ep"),
            (S + 1, None, "Ep", "Ep", "Ep"),
        ]
    else:
        raise ValueError(f"array size must be at least 1, got {S}")
    return [(lo, hi, _cells(h, t, o)) for lo, hi, h, t, o in raw]


def add_offset(part: ArrayPart, size: int | None, offsets: IntAbstraction) -> ArithOutcome:
    hit: set = set()
    for lo, hi, cells in table_rows(size):
        if offsets.intersects(lo, hi):
            hit |= cells[part]
    return ArithOutcome(
        frozenset(x for x in hit if isinstance(x, ArrayPart)),
        frozenset(x for x in hit if isinstance(x, ErrorKind)),
    )


def add_valid_index(part: ArrayPart, size: int | None) -> ArithOutcome:
    """Offset by an index known to stay inside the array: bounds errors and Off dropped."""
    got = add_offset(part, size, IntAbstraction.top())
    return ArithOutcome(got.parts - {OFF}, frozenset())


def concrete_class(index: int, size: int):
    """Part (or error) of concrete element ``index`` in an array of ``size``."""
    if index < 0:
        return EM
    if index == 0:
        return HEAD
    if index < size:
        return TAIL
    if index == size:
        return OFF
    return EP


# ---------------------------------------------------------------- lifting to memory slots

_PART_INDEX = {HEAD: 0, TAIL: 1, OFF: 2}


def shift_slot(ctype, slot: int, elem, offsets: IntAbstraction | None) -> tuple:
    """Abstract slots reachable from ``slot`` of an allocation of ``ctype`` by
    adding ``offsets`` elements of type ``elem`` (None: a valid index).

    Returns ``(slots, errors)``.  A slot that is not the start of an array
    element of type ``elem`` behaves as a lone object: offset 0 (or a valid
    index) stays put, anything else is an ``ARITH`` error.
    """
    from .memory import array_regions, type_key

    want = type_key(elem)
    slots: set = set()
    errors: set = set()
    matched = False
    for r in array_regions(ctype):
        if r.start != slot or type_key(r.elem) != want:
            continue
        matched = True
        part = ArrayPart(r.part)
        out = add_valid_index(part, r.size) if offsets is None else add_offset(part, r.size, offsets)
        slots |= {r.origin + _PART_INDEX[p] * r.elem_len for p in out.parts}
        errors |= out.errors
    if not matched:
        if offsets is None or offsets.intersects(0, 0):
            slots.add(slot)
        if offsets is not None and offsets.values() != {0}:
            errors.add(ErrorKind.ARITH)
    return frozenset(slots), frozenset(errors)
