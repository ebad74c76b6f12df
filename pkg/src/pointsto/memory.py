"""Segmented abstract memory: layouts, stack operations, lattice and singularity.

A location is addressed by a path tuple: the allocation prefix followed by the
abstract slot index inside that allocation.

    ("text", fname, slot)            ("heap", site, slot)
    ("global", name, slot)           ("top", name, slot)
    ("topb", j, name, slot)          ("head", i, j, name, slot)
    ("tail", call_site, j, name, slot)
    ("special", "null")              ("special", "undef")

``topb`` and ``head`` indices count from the innermost block / newest frame.
Stack operations rename paths so that pointers keep designating the same
object while it moves between segments.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Iterable, Iterator, Optional, Union

from .domain import LocationUniverse, PointsToRel

NULL = ("special", "null")
UNDEF = ("special", "undef")
SPECIALS = (NULL, UNDEF)

Path = tuple


class MalformedStackError(RuntimeError):
    """A stack operation was applied outside its precondition (a lowering bug)."""


class IncompatibleMemoryError(RuntimeError):
    """Join of memories with different shapes: the lattice top, treated as fatal."""


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class Scalar:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Pointer:
    target: "CType"

    def __str__(self) -> str:
        return f"{self.target}*"


@dataclass(frozen=True)
class Function:
    name: str = "fn"

    def __str__(self) -> str:
        return f"{self.name}()"


@dataclass(frozen=True)
class Array:
    elem: "CType"
    size: Optional[int]

    def __post_init__(self) -> None:
        if self.size is not None and self.size < 1:
            raise ValueError("array size must be at least 1")

    def __str__(self) -> str:
        return f"{self.elem}[{'' if self.size is None else self.size}]"


@dataclass(frozen=True)
class Record:
    name: str
    fields: tuple = ()

    def __post_init__(self) -> None:
        if not self.fields:
            raise ValueError("record needs at least one field")
        object.__setattr__(self, "fields", tuple(self.fields))

    def __str__(self) -> str:
        return f"struct {self.name}"

    def field_index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.fields):
            if n == name:
                return i
        raise KeyError(name)


@dataclass(frozen=True)
class RecordRef:
    """Named reference to a record, used behind pointers so types stay finite."""

    name: str

    def __str__(self) -> str:
        return f"struct {self.name}"


CType = Union[Scalar, Pointer, Function, Array, Record, RecordRef]


def type_key(t: CType):
    """Structural identity that ignores whether a record is inlined or referenced."""
    if isinstance(t, (Record, RecordRef)):
        return ("struct", t.name)
    if isinstance(t, Pointer):
        return ("ptr", type_key(t.target))
    if isinstance(t, Array):
        return ("array", type_key(t.elem), t.size)
    if isinstance(t, Function):
        return ("fn", t.name)
    return ("scalar", t.name)


def is_pointer(t: CType) -> bool:
    return isinstance(t, Pointer)


# ---------------------------------------------------------------- layouts

PART_NAMES = ("Head", "Tail", "Off")


def layout_concrete(t: CType) -> list:
    if isinstance(t, Array):
        if t.size is None:
            raise ValueError("concrete layout needs a known array size")
        return layout_concrete(t.elem) * (t.size + 1)
    if isinstance(t, Record):
        out = []
        for _, ft in t.fields:
            out += layout_concrete(ft)
        return out
    if isinstance(t, RecordRef):
        raise ValueError(f"record {t.name} is only referenced, not laid out")
    return [t]


@lru_cache(maxsize=None)
def _layout_abstract(t: CType) -> tuple:
    if isinstance(t, Array):
        inner = _layout_abstract(t.elem)
        return tuple(((part,) + tag, lt) for part in PART_NAMES for tag, lt in inner)
    if isinstance(t, Record):
        out: list = []
        for fname, ft in t.fields:
            out += [((fname,) + tag, lt) for tag, lt in _layout_abstract(ft)]
        return tuple(out)
    if isinstance(t, RecordRef):
        raise ValueError(f"record {t.name} is only referenced, not laid out")
    return (((), t),)


def layout_abstract(t: CType) -> list:
    """Abstract slots as ``(tag, leaf type)``; tags name the field/part path."""
    return list(_layout_abstract(t))


@dataclass(frozen=True)
class ArrayRegion:
    """One part of one array inside an allocation's abstract layout."""

    start: int
    elem: CType
    elem_len: int
    size: Optional[int]
    part: str
    origin: int  # slot of the array's Head element


@lru_cache(maxsize=None)
def array_regions(t: CType) -> tuple:
    out: list = []

    def walk(t: CType, base: int) -> None:
        if isinstance(t, Array):
            n = len(_layout_abstract(t.elem))
            for k, part in enumerate(PART_NAMES):
                out.append(ArrayRegion(base + k * n, t.elem, n, t.size, part, base))
                walk(t.elem, base + k * n)
        elif isinstance(t, Record):
            off = base
            for _, ft in t.fields:
                walk(ft, off)
                off += len(_layout_abstract(ft))

    walk(t, 0)
    return tuple(out)


@lru_cache(maxsize=None)
def field_offset(t: Record, name: str) -> int:
    off = 0
    for fname, ft in t.fields:
        if fname == name:
            return off
        off += len(_layout_abstract(ft))
    raise KeyError(name)


@lru_cache(maxsize=None)
def nonsingular_slots(t: CType) -> frozenset:
    out: set = set()
    for r in array_regions(t):
        if r.part == "Tail" and (r.size is None or r.size >= 3):
            out.update(range(r.start, r.start + r.elem_len))
    return frozenset(out)


@lru_cache(maxsize=None)
def slot_ranges(t: CType) -> tuple:
    """For each abstract slot, the ``(lo, hi)`` concrete slot indices it covers.

    ``hi`` is None when an unknown array size makes the range unbounded.
    """

    def walk(t: CType, lo: int, hi: Optional[int]) -> tuple:
        if isinstance(t, Array):
            n = len(layout_concrete_len(t.elem))
            res: list = []
            s = t.size
            spans = [
                (0, 0),
                (1, None if s is None else s - 1),
                (1 if s is None else s, None if s is None else s),
            ]
            for a, b in spans:
                sub_lo = lo + a * n
                sub_hi = None if hi is None or b is None else hi + b * n
                res += walk(t.elem, sub_lo, sub_hi)
            return tuple(res)
        if isinstance(t, Record):
            res = []
            off_lo, off_hi = 0, 0
            for _, ft in t.fields:
                res += walk(ft, lo + off_lo, None if hi is None or off_hi is None else hi + off_hi)
                size = layout_concrete_len(ft)
                off_lo += len(size)
                off_hi = None if off_hi is None or _has_unknown(ft) else off_hi + len(size)
            return tuple(res)
        return ((lo, hi),)

    return walk(t, 0, 0)


def _has_unknown(t: CType) -> bool:
    if isinstance(t, Array):
        return t.size is None or _has_unknown(t.elem)
    if isinstance(t, Record):
        return any(_has_unknown(ft) for _, ft in t.fields)
    return False


def layout_concrete_len(t: CType) -> list:
    """Concrete layout with unknown sizes read as 1 (lower bound on extent)."""
    if isinstance(t, Array):
        return layout_concrete_len(t.elem) * ((t.size or 1) + 1)
    if isinstance(t, Record):
        out = []
        for _, ft in t.fields:
            out += layout_concrete_len(ft)
        return out
    return [t]


# ---------------------------------------------------------------- path maps


@dataclass(frozen=True)
class PathMap:
    abstract: object
    concrete: frozenset
    children: tuple = ()


def map_paths(t: CType) -> PathMap:
    """Concrete-to-abstract correspondence for one allocation of type ``t``."""
    if isinstance(t, Array):
        if t.size is None:
            raise ValueError("path map needs a known array size")
        sub = map_paths(t.elem).children
        n = t.size
        parts = (
            PathMap("Head", frozenset({0}), sub),
            PathMap("Tail", frozenset(range(1, n)), sub),
            PathMap("Off", frozenset({n}), sub),
        )
        return PathMap(0, frozenset({0}), parts)
    if isinstance(t, Record):
        kids = tuple(PathMap(fname, frozenset({fname}), map_paths(ft).children) for fname, ft in t.fields)
        return PathMap(0, frozenset({0}), kids)
    return PathMap(0, frozenset({0}), ())


@lru_cache(maxsize=None)
def _slot_map(t: CType) -> tuple:
    if isinstance(t, Array):
        inner = _slot_map(t.elem)
        width = len(_layout_abstract(t.elem))
        out: list = []
        for k in range(t.size + 1):
            part = 0 if k == 0 else (1 if k < t.size else 2)
            out += [part * width + s for s in inner]
        return tuple(out)
    if isinstance(t, Record):
        out = []
        base = 0
        for _, ft in t.fields:
            out += [base + s for s in _slot_map(ft)]
            base += len(_layout_abstract(ft))
        return tuple(out)
    return (0,)


def slot_map(t: CType) -> list:
    """Abstract slot index for every concrete slot of an allocation of type ``t``."""
    return list(_slot_map(t))


# ---------------------------------------------------------------- allocations


@dataclass(frozen=True)
class AllocationBlock:
    name: str
    ctype: CType
    # one entry per abstract slot: target paths for pointers, None otherwise
    targets: tuple

    @classmethod
    def fresh(cls, name: str, ctype: CType, init=UNDEF) -> AllocationBlock:
        if isinstance(init, tuple) and init and isinstance(init[0], str):
            init = frozenset({init})
        init = frozenset(init)
        return cls(name, ctype, tuple(init if is_pointer(lt) else None for _, lt in _layout_abstract(ctype)))

    def map(self, fn: Callable[[frozenset], frozenset]) -> AllocationBlock:
        return replace(self, targets=tuple(None if t is None else fn(t) for t in self.targets))

    @property
    def shape(self):
        return (self.name, self.ctype)


Block = tuple


@dataclass(frozen=True)
class Frame:
    call_site: str
    blocks: tuple = ()


def describe_frame(frame: Frame) -> str:
    """Outermost block first, allocations in declaration order."""
    blocks = []
    for b in reversed(frame.blocks):
        blocks.append("[" + ", ".join(f"{a.ctype} {a.name}" for a in reversed(b)) + "]")
    return "[" + ", ".join(blocks) + "]"


def shape_of(x):
    if isinstance(x, AllocationBlock):
        return x.ctype
    if isinstance(x, Frame):
        return (x.call_site, tuple(shape_of(b) for b in x.blocks))
    if isinstance(x, AbstractMemory):
        return x.shape
    return tuple(a.shape if isinstance(a, AllocationBlock) else shape_of(a) for a in x)


def _block_shape(b: Block) -> tuple:
    return tuple(a.shape for a in b)


def _frame_shape(f: Frame) -> tuple:
    return (f.call_site, tuple(_block_shape(b) for b in f.blocks))


# ---------------------------------------------------------------- memory


@dataclass(frozen=True)
class AbstractMemory:
    text: tuple = ()
    heap: tuple = ()
    globals: tuple = ()
    tail: tuple = ()  # frames sorted by call site, at most one per site
    head: tuple = ()  # newest frame first
    top_allocs: tuple = ()
    top_blocks: tuple = ()  # innermost block first
    is_bottom: bool = False

    @classmethod
    def bottom(cls) -> AbstractMemory:
        return _BOTTOM

    # -- traversal

    def allocations(self) -> Iterator[tuple]:
        """``(prefix, block)`` for every allocation, in a fixed order."""
        for a in self.text:
            yield ("text", a.name), a
        for a in self.heap:
            yield ("heap", a.name), a
        for a in self.globals:
            yield ("global", a.name), a
        for f in self.tail:
            for j, b in enumerate(f.blocks):
                for a in b:
                    yield ("tail", f.call_site, j, a.name), a
        for i, f in enumerate(self.head):
            for j, b in enumerate(f.blocks):
                for a in b:
                    yield ("head", i, j, a.name), a
        for a in self.top_allocs:
            yield ("top", a.name), a
        for j, b in enumerate(self.top_blocks):
            for a in b:
                yield ("topb", j, a.name), a

    def leaves(self) -> Iterator[tuple]:
        for prefix, a in self.allocations():
            for s, t in enumerate(a.targets):
                yield prefix + (s,), a, t

    @property
    def shape(self) -> tuple:
        return (
            tuple(a.shape for a in self.text),
            tuple(a.shape for a in self.heap),
            tuple(a.shape for a in self.globals),
            tuple(_frame_shape(f) for f in self.head),
            tuple(a.shape for a in self.top_allocs),
            tuple(_block_shape(b) for b in self.top_blocks),
        )

    def allocation(self, prefix: tuple) -> AllocationBlock:
        return self._alloc_index()[prefix]

    def _alloc_index(self) -> dict:
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = dict(self.allocations())
            object.__setattr__(self, "_idx", idx)
        return idx

    def has(self, path: Path) -> bool:
        if path in SPECIALS:
            return True
        a = self._alloc_index().get(path[:-1])
        return a is not None and 0 <= path[-1] < len(a.targets)

    def leaf(self, path: Path) -> frozenset:
        t = self.allocation(path[:-1]).targets[path[-1]]
        if t is None:
            raise KeyError(f"{path} is not a pointer slot")
        return t

    def leaf_type(self, path: Path) -> CType:
        a = self.allocation(path[:-1])
        return _layout_abstract(a.ctype)[path[-1]][1]

    # -- rebuilding

    def map_blocks(self, fn: Callable[[tuple, AllocationBlock], AllocationBlock]) -> AbstractMemory:
        if self.is_bottom:
            return self
        seg = lambda tag, xs: tuple(fn((tag, a.name), a) for a in xs)
        return replace(
            self,
            text=seg("text", self.text),
            heap=seg("heap", self.heap),
            globals=seg("global", self.globals),
            tail=tuple(
                Frame(f.call_site, tuple(tuple(fn(("tail", f.call_site, j, a.name), a) for a in b) for j, b in enumerate(f.blocks)))
                for f in self.tail
            ),
            head=tuple(
                Frame(f.call_site, tuple(tuple(fn(("head", i, j, a.name), a) for a in b) for j, b in enumerate(f.blocks)))
                for i, f in enumerate(self.head)
            ),
            top_allocs=seg("top", self.top_allocs),
            top_blocks=tuple(tuple(fn(("topb", j, a.name), a) for a in b) for j, b in enumerate(self.top_blocks)),
        )

    def map_targets(self, fn: Callable[[frozenset], frozenset]) -> AbstractMemory:
        return self.map_blocks(lambda _p, a: a.map(fn))

    def rename(self, fn: Callable[[Path], Optional[Path]]) -> AbstractMemory:
        """Rewrite every target path; ``None`` means the object is gone (undefined)."""

        def move(ts: frozenset) -> frozenset:
            out = set()
            for p in ts:
                q = fn(p)
                out.add(UNDEF if q is None else q)
            return frozenset(out)

        return self.map_targets(move)

    def with_leaf(self, path: Path, targets: frozenset) -> AbstractMemory:
        prefix, slot = path[:-1], path[-1]

        def put(p: tuple, a: AllocationBlock) -> AllocationBlock:
            if p != prefix:
                return a
            ts = list(a.targets)
            if ts[slot] is None:
                raise KeyError(f"{path} is not a pointer slot")
            ts[slot] = frozenset(targets)
            return replace(a, targets=tuple(ts))

        return self.map_blocks(put)

    def relation(self) -> RelationView:
        return RelationView.of(self)


_BOTTOM = AbstractMemory(is_bottom=True)


# ---------------------------------------------------------------- display


def slot_name(a: AllocationBlock, slot: int) -> str:
    return ".".join(_layout_abstract(a.ctype)[slot][0])


def prefix_name(prefix: tuple) -> str:
    seg = prefix[0]
    if seg == "top":
        return f"top.{prefix[1]}"
    if seg == "topb":
        return f"top.b{prefix[1]}.{prefix[2]}"
    if seg == "head":
        return f"head{prefix[1]}.b{prefix[2]}.{prefix[3]}"
    if seg == "tail":
        return f"tail.{prefix[1]}.b{prefix[2]}.{prefix[3]}"
    return f"{seg}.{prefix[1]}"


def display_path(mem: AbstractMemory, path: Path) -> str:
    if path in SPECIALS:
        return ".".join(path)
    prefix = prefix_name(path[:-1])
    a = mem._alloc_index().get(path[:-1])
    suffix = slot_name(a, path[-1]) if a is not None else f"slot{path[-1]}"
    return f"{prefix}.{suffix}" if suffix else prefix


def rows(mem: AbstractMemory) -> list:
    """``(source, sorted targets)`` per pointer leaf, in display form, sorted by source."""
    out = []
    for path, _a, ts in mem.leaves():
        if ts is not None:
            out.append((display_path(mem, path), sorted(display_path(mem, t) for t in ts)))
    return sorted(out)


def dump(mem: AbstractMemory) -> str:
    if mem.is_bottom:
        return "<bottom>"
    return "\n".join(f"{src} -> {{{', '.join(ts)}}}" for src, ts in rows(mem))


# ---------------------------------------------------------------- lattice


def compatible_abs(a: AbstractMemory, b: AbstractMemory) -> bool:
    return a.shape == b.shape


def _zip_blocks(fa: Iterable[AllocationBlock], fb: Iterable[AllocationBlock], op) -> tuple:
    out = []
    for x, y in zip(fa, fb):
        out.append(replace(x, targets=tuple(None if s is None else op(s, t) for s, t in zip(x.targets, y.targets))))
    return tuple(out)


def _zip_frame(f: Frame, g: Frame, op) -> Frame:
    return Frame(f.call_site, tuple(_zip_blocks(x, y, op) for x, y in zip(f.blocks, g.blocks)))


def _zip_mem(a: AbstractMemory, b: AbstractMemory, op, tail: tuple) -> AbstractMemory:
    return AbstractMemory(
        text=_zip_blocks(a.text, b.text, op),
        heap=_zip_blocks(a.heap, b.heap, op),
        globals=_zip_blocks(a.globals, b.globals, op),
        tail=tail,
        head=tuple(_zip_frame(f, g, op) for f, g in zip(a.head, b.head)),
        top_allocs=_zip_blocks(a.top_allocs, b.top_allocs, op),
        top_blocks=tuple(_zip_blocks(x, y, op) for x, y in zip(a.top_blocks, b.top_blocks)),
    )


def _frames_by_site(frames: tuple) -> dict:
    return {f.call_site: f for f in frames}


def _frame_has_empty_leaf(f: Frame) -> bool:
    return any(t is not None and not t for b in f.blocks for a in b for t in a.targets)


def mem_join(a: AbstractMemory, b: AbstractMemory) -> AbstractMemory:
    if a.is_bottom:
        return b
    if b.is_bottom:
        return a
    if a == b:
        return a
    if not compatible_abs(a, b):
        raise IncompatibleMemoryError("join of memories with different shapes")
    ta, tb = _frames_by_site(a.tail), _frames_by_site(b.tail)
    tail = []
    for cs in sorted(set(ta) | set(tb)):
        if cs in ta and cs in tb:
            if _frame_shape(ta[cs]) != _frame_shape(tb[cs]):
                raise IncompatibleMemoryError(f"tail frames for {cs} differ in shape")
            tail.append(_zip_frame(ta[cs], tb[cs], frozenset.union))
        else:
            tail.append(ta.get(cs) or tb[cs])
    return _zip_mem(a, b, frozenset.union, tuple(tail))


def mem_meet(a: AbstractMemory, b: AbstractMemory) -> AbstractMemory:
    if a.is_bottom or b.is_bottom:
        return _BOTTOM
    if a == b:
        return a
    if not compatible_abs(a, b):
        return _BOTTOM
    ta, tb = _frames_by_site(a.tail), _frames_by_site(b.tail)
    tail = []
    for cs in sorted(set(ta) & set(tb)):
        if _frame_shape(ta[cs]) != _frame_shape(tb[cs]):
            continue
        tail.append(_zip_frame(ta[cs], tb[cs], frozenset.intersection))
    return normalize(_zip_mem(a, b, frozenset.intersection, tuple(tail)))


def normalize(m: AbstractMemory) -> AbstractMemory:
    """Propagate emptiness: an empty tail-frame leaf drops the frame, any other
    empty pointer leaf makes the whole memory bottom."""
    while not m.is_bottom:
        dead = {f.call_site for f in m.tail if _frame_has_empty_leaf(f)}
        if dead:
            m = replace(m, tail=tuple(f for f in m.tail if f.call_site not in dead))
            m = m.map_targets(lambda ts: frozenset(p for p in ts if not (p[0] == "tail" and p[1] in dead)))
            continue
        for _path, _a, ts in m.leaves():
            if ts is not None and not ts:
                return _BOTTOM
        return m
    return m


def mem_leq(a: AbstractMemory, b: AbstractMemory) -> bool:
    if a.is_bottom:
        return True
    if b.is_bottom or not compatible_abs(a, b):
        return False
    ta, tb = _frames_by_site(a.tail), _frames_by_site(b.tail)
    if not set(ta) <= set(tb):
        return False
    for cs, f in ta.items():
        if _frame_shape(f) != _frame_shape(tb[cs]):
            return False
    pa = {p: t for p, _a, t in a.leaves() if t is not None}
    pb = {p: t for p, _a, t in b.leaves() if t is not None}
    return all(t <= pb[p] for p, t in pa.items())


def mem_lattice(a: AbstractMemory, b: AbstractMemory, op: str):
    ops = {"leq": mem_leq, "join": mem_join, "meet": mem_meet}
    if op not in ops:
        raise ValueError(f"unknown lattice operation {op!r}")
    return ops[op](a, b)


# ---------------------------------------------------------------- stack operations


def _live(m: AbstractMemory) -> None:
    if m.is_bottom:
        raise MalformedStackError("stack operation on bottom")


def op_mark(m: AbstractMemory) -> AbstractMemory:
    if m.is_bottom:
        return m

    def move(p: Path) -> Path:
        if p[0] == "top":
            return ("topb", 0) + p[1:]
        if p[0] == "topb":
            return ("topb", p[1] + 1) + p[2:]
        return p

    m = m.rename(move)
    return replace(m, top_allocs=(), top_blocks=(m.top_allocs,) + m.top_blocks)


def op_link(m: AbstractMemory, call_site: str) -> AbstractMemory:
    if m.is_bottom:
        return m
    if m.top_allocs or not m.top_blocks:
        raise MalformedStackError("link needs an empty allocation list and at least one block")

    def move(p: Path) -> Path:
        if p[0] == "topb" and p[1] >= 1:
            return ("head", 0, p[1] - 1) + p[2:]
        if p[0] == "head":
            return ("head", p[1] + 1) + p[2:]
        return p

    m = m.rename(move)
    frame = Frame(call_site, m.top_blocks[1:])
    return replace(m, head=(frame,) + m.head, top_blocks=m.top_blocks[:1])


def op_new_var(m: AbstractMemory, name: str, ctype: CType, init=UNDEF) -> AbstractMemory:
    if m.is_bottom:
        return m
    if any(a.name == name for a in m.top_allocs):
        raise MalformedStackError(f"variable {name!r} already allocated in the current block")
    return replace(m, top_allocs=(AllocationBlock.fresh(name, ctype, init),) + m.top_allocs)


def op_unlink(m: AbstractMemory) -> AbstractMemory:
    if m.is_bottom:
        return m
    if not m.head or m.top_allocs or len(m.top_blocks) != 1:
        raise MalformedStackError("unlink needs a single top block and a non-empty stack head")

    def move(p: Path) -> Path:
        if p[0] == "head":
            if p[1] == 0:
                return ("topb", p[2] + 1) + p[3:]
            return ("head", p[1] - 1) + p[2:]
        return p

    frame = m.head[0]
    m = m.rename(move)
    return replace(m, head=m.head[1:], top_blocks=m.top_blocks + frame.blocks)


def op_unmark(m: AbstractMemory) -> AbstractMemory:
    if m.is_bottom:
        return m
    if not m.top_blocks:
        raise MalformedStackError("unmark needs at least one block")

    def move(p: Path) -> Optional[Path]:
        if p[0] == "top":
            return None
        if p[0] == "topb":
            if p[1] == 0:
                return ("top",) + p[2:]
            return ("topb", p[1] - 1) + p[2:]
        return p

    m = m.rename(move)
    return replace(m, top_allocs=m.top_blocks[0], top_blocks=m.top_blocks[1:])


def op_tail_push(m: AbstractMemory, merge: str = "meet") -> AbstractMemory:
    """Move the oldest head frame into the tail, merging with a same-site frame.

    ``merge`` is ``"meet"`` (the definition) or ``"join"``.
    """
    if m.is_bottom:
        return m
    if not m.head:
        raise MalformedStackError("tail push needs a non-empty stack head")
    if merge not in ("meet", "join"):
        raise ValueError(f"unknown merge {merge!r}")
    last = len(m.head) - 1
    cs = m.head[last].call_site

    def move(p: Path) -> Path:
        if p[0] == "head" and p[1] == last:
            return ("tail", cs) + p[2:]
        return p

    m = m.rename(move)
    frame = m.head[last]
    tail = _frames_by_site(m.tail)
    if cs in tail:
        op = frozenset.intersection if merge == "meet" else frozenset.union
        tail[cs] = _zip_frame(tail[cs], frame, op)
    else:
        tail[cs] = frame
    m = replace(m, head=m.head[:last], tail=tuple(tail[k] for k in sorted(tail)))
    return normalize(m)


def op_tail_pop(m: AbstractMemory, call_site: str) -> AbstractMemory:
    if m.is_bottom:
        return m
    frame = _frames_by_site(m.tail).get(call_site)
    if frame is None:
        return _BOTTOM
    return replace(m, head=m.head + (frame,))


# ---------------------------------------------------------------- singularity and order


def is_singular(m: AbstractMemory, path: Path) -> bool:
    if path == NULL:
        return True
    if path == UNDEF:
        return False
    if path[0] in ("heap", "tail"):
        return False
    a = m.allocation(path[:-1])
    return path[-1] not in nonsingular_slots(a.ctype)


@dataclass(frozen=True)
class MemoryOrder:
    """Address order inside one allocation, from concrete slot ranges.

    Locations in different allocations are unordered; ``cross`` decides what
    the negated comparison may assume for them.
    """

    view: "RelationView"
    cross: bool = False

    def _info(self, l: int):
        return self.view.slot_info(l)

    def may_less(self, l: int, m: int) -> bool:
        a, b = self._info(l), self._info(m)
        if a is None or b is None or a[0] != b[0]:
            return False
        (lo, _), (_, hi) = a[1], b[1]
        return hi is None or lo < hi

    def may_not_less(self, l: int, m: int) -> bool:
        a, b = self._info(l), self._info(m)
        if a is None or b is None or a[0] != b[0]:
            return self.cross
        (_, hi), (lo, _) = a[1], b[1]
        return hi is None or hi >= lo

    def same_block(self, l: int, m: int) -> bool:
        a, b = self._info(l), self._info(m)
        return a is not None and b is not None and a[0] == b[0]


# ---------------------------------------------------------------- relation view


@lru_cache(maxsize=256)
def _universe_for(paths: tuple) -> LocationUniverse:
    return LocationUniverse(paths)


@dataclass(frozen=True, eq=False)
class RelationView:
    """A memory seen as a points-to relation over its leaf locations."""

    memory: AbstractMemory
    universe: LocationUniverse
    rel: PointsToRel
    pointer_locs: frozenset

    @classmethod
    def of(cls, m: AbstractMemory) -> RelationView:
        if m.is_bottom:
            raise ValueError("no relation view of bottom")
        paths, edges_by_path, ptrs = [], [], []
        for path, _a, ts in m.leaves():
            paths.append(path)
            if ts is not None:
                ptrs.append(path)
                edges_by_path.append((path, ts))
        paths += list(SPECIALS)
        u = _universe_for(tuple(paths))
        edges = frozenset((u.index(p), u.index(t)) for p, ts in edges_by_path for t in ts)
        return cls(m, u, PointsToRel(u, edges), frozenset(u.index(p) for p in ptrs))

    def loc(self, path: Path) -> int:
        return self.universe.index(path)

    def path(self, loc: int) -> Path:
        return self.universe.name(loc)

    def display(self, loc: int) -> str:
        return display_path(self.memory, self.path(loc))

    def singular(self, loc: int) -> bool:
        return is_singular(self.memory, self.path(loc))

    def slot_info(self, loc: int):
        """``(allocation prefix, concrete slot range)`` or None for specials."""
        cache = self.__dict__.setdefault("_slot_cache", {})
        if loc in cache:
            return cache[loc]
        p = self.path(loc)
        info = None
        if p not in SPECIALS:
            a = self.memory.allocation(p[:-1])
            info = (p[:-1], slot_ranges(a.ctype)[p[-1]])
        cache[loc] = info
        return info

    def order(self, cross: bool = False) -> MemoryOrder:
        return MemoryOrder(self, cross)

    def memory_from(self, rel: PointsToRel) -> AbstractMemory:
        if rel.is_bottom:
            return _BOTTOM
        succ = rel.successors
        u = self.universe

        def put(prefix: tuple, a: AllocationBlock) -> AllocationBlock:
            ts = []
            for s, t in enumerate(a.targets):
                if t is None:
                    ts.append(None)
                else:
                    ts.append(frozenset(u.name(m) for m in succ.get(u.index(prefix + (s,)), ())))
            return replace(a, targets=tuple(ts))

        return normalize(self.memory.map_blocks(put))


# ---------------------------------------------------------------- concrete stores


@dataclass(frozen=True)
class ConcreteAllocation:
    name: str
    ctype: CType

    @property
    def slots(self) -> int:
        return len(layout_concrete(self.ctype))


@dataclass(frozen=True)
class ConcreteFrame:
    call_site: str
    blocks: tuple = ()


@dataclass(frozen=True)
class ConcreteStore:
    """Shape-only concrete memory tree (no contents), for compatibility checks."""

    text: tuple = ()
    heap: tuple = ()  # (allocation site, ConcreteAllocation) pairs
    globals: tuple = ()
    frames: tuple = ()  # newest first
    top_allocs: tuple = ()
    top_blocks: tuple = ()


def _cshape(xs) -> tuple:
    return tuple((a.name, a.ctype) for a in xs)


def _cframe_shape(f: ConcreteFrame) -> tuple:
    return (f.call_site, tuple(_cshape(b) for b in f.blocks))


def compatible_conc(c: ConcreteStore, a: AbstractMemory) -> bool:
    if a.is_bottom:
        return False
    if _cshape(c.text) != tuple(x.shape for x in a.text):
        return False
    heap = {x.name: x.ctype for x in a.heap}
    if any(site not in heap or heap[site] != alloc.ctype for site, alloc in c.heap):
        return False
    if _cshape(c.globals) != tuple(x.shape for x in a.globals):
        return False
    if _cshape(c.top_allocs) != tuple(x.shape for x in a.top_allocs):
        return False
    if tuple(_cshape(b) for b in c.top_blocks) != tuple(_block_shape(b) for b in a.top_blocks):
        return False
    if len(a.head) > len(c.frames):
        return False
    for cf, af in zip(c.frames, a.head):
        if _cframe_shape(cf) != _frame_shape(af):
            return False
    tail = _frames_by_site(a.tail)
    for cf in c.frames[len(a.head) :]:
        af = tail.get(cf.call_site)
        if af is None or _cframe_shape(cf) != _frame_shape(af):
            return False
    return True


def concretization_map(c: ConcreteStore, a: AbstractMemory) -> dict:
    """Map every concrete slot path to the abstract location covering it."""
    if not compatible_conc(c, a):
        raise ValueError("concrete store is not compatible with the abstract memory")
    out: dict = {}

    def alloc(cpre: tuple, apre: tuple, ca: ConcreteAllocation) -> None:
        for k, s in enumerate(slot_map(ca.ctype)):
            out[cpre + (k,)] = apre + (s,)

    for x in c.text:
        alloc(("text", x.name), ("text", x.name), x)
    for n, (site, x) in enumerate(c.heap):
        alloc(("heap", site, n), ("heap", site), x)
    for x in c.globals:
        alloc(("global", x.name), ("global", x.name), x)
    for i, f in enumerate(c.frames):
        apre = ("head", i) if i < len(a.head) else ("tail", f.call_site)
        for j, b in enumerate(f.blocks):
            for x in b:
                alloc(("frame", i, j, x.name), apre + (j, x.name), x)
    for x in c.top_allocs:
        alloc(("top", x.name), ("top", x.name), x)
    for j, b in enumerate(c.top_blocks):
        for x in b:
            alloc(("topb", j, x.name), ("topb", j, x.name), x)
    return out
