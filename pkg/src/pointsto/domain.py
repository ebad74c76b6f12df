"""Points-to relations over a finite location universe.

Locations are small integers indexing a :class:`LocationUniverse`; the
universe keeps the display names.  A :class:`PointsToRel` is either a set of
``(source, target)`` pairs or the distinguished bottom element.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Callable, Iterable, Mapping, Sequence, Union

Location = int
LocSet = frozenset
Pair = tuple[int, int]

DEFAULT_GAMMA_CAP = 6


class DomainBottomError(ValueError):
    """Raised when an operation that needs a concrete edge set receives bottom."""


class EnumerationCapError(ValueError):
    """Raised when exhaustive concretization would exceed the configured cap."""


@dataclass(frozen=True)
class LocationUniverse:
    names: tuple

    def __post_init__(self) -> None:
        names = tuple(self.names)
        if not names:
            raise ValueError("location universe must be non-empty")
        if len(set(names)) != len(names):
            raise ValueError("location names must be unique")
        object.__setattr__(self, "names", names)

    @cached_property
    def _index(self) -> dict:
        return {n: i for i, n in enumerate(self.names)}

    def __len__(self) -> int:
        return len(self.names)

    @property
    def locations(self) -> range:
        return range(len(self.names))

    def index(self, name) -> Location:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown location {name!r}") from None

    def name(self, loc: Location):
        return self.names[loc]

    def locs(self, *names) -> frozenset:
        return frozenset(self.index(n) for n in names)

    def rel(self, pairs: Iterable[tuple]) -> PointsToRel:
        """Build a relation from pairs of location names."""
        return PointsToRel(self, frozenset((self.index(a), self.index(b)) for a, b in pairs))


@dataclass(frozen=True)
class PointsToRel:
    universe: LocationUniverse
    edges: frozenset | None = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.edges is None:
            return
        edges = frozenset(self.edges)
        n = len(self.universe)
        for l, m in edges:
            if not (0 <= l < n and 0 <= m < n):
                raise ValueError(f"edge {(l, m)} outside universe of size {n}")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def bottom(cls, universe: LocationUniverse) -> PointsToRel:
        return cls(universe, None)

    @property
    def is_bottom(self) -> bool:
        return self.edges is None

    def require(self) -> frozenset:
        if self.edges is None:
            raise DomainBottomError("operation undefined on bottom")
        return self.edges

    @cached_property
    def successors(self) -> Mapping[Location, frozenset]:
        out: dict[Location, set] = {}
        for l, m in self.require():
            out.setdefault(l, set()).add(m)
        return {l: frozenset(ms) for l, ms in out.items()}

    @cached_property
    def predecessors(self) -> Mapping[Location, frozenset]:
        out: dict[Location, set] = {}
        for l, m in self.require():
            out.setdefault(m, set()).add(l)
        return {m: frozenset(ls) for m, ls in out.items()}

    def without(self, pairs: Iterable[Pair]) -> PointsToRel:
        return PointsToRel(self.universe, self.require() - frozenset(pairs))


@dataclass(frozen=True)
class ConcreteMemory:
    """A total successor function: ``succ[l]`` is the single target of ``l``."""

    universe: LocationUniverse
    succ: tuple

    def __post_init__(self) -> None:
        succ = tuple(self.succ)
        n = len(self.universe)
        if len(succ) != n:
            raise ValueError("concrete memory must map every location")
        if any(not 0 <= m < n for m in succ):
            raise ValueError("concrete memory maps outside the universe")
        object.__setattr__(self, "succ", succ)

    @classmethod
    def of(cls, universe: LocationUniverse, mapping: Mapping) -> ConcreteMemory:
        return cls(universe, tuple(universe.index(mapping[n]) for n in universe.names))

    @property
    def graph(self) -> frozenset:
        return frozenset(enumerate(self.succ))


# ---------------------------------------------------------------- expressions


@dataclass(frozen=True)
class Loc:
    loc: Location


@dataclass(frozen=True)
class Deref:
    inner: Expr


@dataclass(frozen=True, eq=False)
class Shift:
    """Location-to-locations step used for field selection and pointer offsets.

    ``table`` maps each source location to the locations it may move to;
    ``faults`` maps a source location to error tags produced on the way
    (array underflow/overflow).  Sources missing from ``table`` move nowhere.
    """

    inner: Expr
    table: Mapping[Location, frozenset]
    faults: Mapping[Location, frozenset] = field(default_factory=dict)
    label: str = "+"

    def image(self, locs: Iterable[Location]) -> frozenset:
        out: set = set()
        for l in locs:
            out |= self.table.get(l, frozenset())
        return frozenset(out)

    def preimage(self, sources: Iterable[Location], targets: frozenset) -> frozenset:
        return frozenset(l for l in sources if self.table.get(l, frozenset()) & targets)


Expr = Union[Loc, Deref, Shift]


def depth(e: Expr) -> int:
    n = 0
    while not isinstance(e, Loc):
        e = e.inner
        n += 1
    return n


def wrappers(e: Expr) -> list:
    """Wrapper nodes from the outside in; ``wrappers(e)[i]`` links level i+1 to level i."""
    out = []
    while not isinstance(e, Loc):
        out.append(e)
        e = e.inner
    return out


def base_of(e: Expr) -> Location:
    while not isinstance(e, Loc):
        e = e.inner
    return e.loc


def subexpr(e: Expr, i: int) -> Expr | None:
    """The expression ``i`` wrappers below ``e``, or None past the base."""
    for _ in range(i):
        if isinstance(e, Loc):
            return None
        e = e.inner
    return e


# ---------------------------------------------------------------- navigation


def post(rel: PointsToRel, sources: Iterable[Location]) -> frozenset:
    succ = rel.successors
    out: set = set()
    for l in sources:
        out |= succ.get(l, frozenset())
    return frozenset(out)


def prev(rel: PointsToRel, targets: Iterable[Location]) -> frozenset:
    pred = rel.predecessors
    out: set = set()
    for m in targets:
        out |= pred.get(m, frozenset())
    return frozenset(out)


def transpose(rel: PointsToRel) -> PointsToRel:
    return PointsToRel(rel.universe, frozenset((m, l) for l, m in rel.require()))


def eval_expr(rel: PointsToRel, e: Expr) -> frozenset:
    rel.require()
    if isinstance(e, Loc):
        return frozenset((e.loc,))
    inner = eval_expr(rel, e.inner)
    if isinstance(e, Deref):
        return post(rel, inner)
    return e.image(inner)


def eval_at_depth(rel: PointsToRel, e: Expr, i: int) -> frozenset:
    """Locations reached ``i`` steps before the end of evaluating ``e``."""
    if i < 0:
        raise ValueError("depth must be non-negative")
    rel.require()
    sub = subexpr(e, i)
    if sub is None:
        return frozenset()
    return eval_expr(rel, sub)


# ---------------------------------------------------------------- lattice


def _same_universe(a: PointsToRel, b: PointsToRel) -> None:
    if a.universe != b.universe:
        raise ValueError("relations over different universes")


def leq(a: PointsToRel, b: PointsToRel) -> bool:
    _same_universe(a, b)
    if a.is_bottom:
        return True
    if b.is_bottom:
        return False
    return a.edges <= b.edges


def join(a: PointsToRel, b: PointsToRel) -> PointsToRel:
    _same_universe(a, b)
    if a.is_bottom:
        return b
    if b.is_bottom:
        return a
    return PointsToRel(a.universe, a.edges | b.edges)


def meet(a: PointsToRel, b: PointsToRel) -> PointsToRel:
    _same_universe(a, b)
    if a.is_bottom or b.is_bottom:
        return PointsToRel.bottom(a.universe)
    return PointsToRel(a.universe, a.edges & b.edges)


def lattice(a: PointsToRel, b: PointsToRel, op: str):
    ops = {"leq": leq, "join": join, "meet": meet}
    if op not in ops:
        raise ValueError(f"unknown lattice operation {op!r}")
    return ops[op](a, b)


# ---------------------------------------------------------------- concretization


def gamma(rel: PointsToRel, cap: int = DEFAULT_GAMMA_CAP) -> tuple:
    """Every concrete memory whose graph is contained in ``rel``, in a fixed order."""
    u = rel.universe
    if len(u) > cap:
        raise EnumerationCapError(f"universe of size {len(u)} exceeds gamma cap {cap}")
    if rel.is_bottom:
        return ()
    choices = [sorted(rel.successors.get(l, ())) for l in u.locations]
    if any(not c for c in choices):
        return ()
    return tuple(ConcreteMemory(u, succ) for succ in product(*choices))


def alpha(universe: LocationUniverse, mems: Iterable[ConcreteMemory]) -> PointsToRel:
    edges: set = set()
    for c in mems:
        if c.universe != universe:
            raise ValueError("concrete memory over a different universe")
        edges |= c.graph
    return PointsToRel(universe, frozenset(edges))


# ---------------------------------------------------------------- alias queries


class AliasAnswer(enum.Enum):
    NO = "0"
    MUST_SINGLE = "1"
    TOP = "top"


def all_singular(_loc: Location) -> bool:
    return True


def alias_query(
    rel: PointsToRel,
    e: Expr,
    f: Expr,
    singular: Callable[[Location], bool] = all_singular,
) -> AliasAnswer:
    le, lf = eval_expr(rel, e), eval_expr(rel, f)
    if not le & lf:
        return AliasAnswer.NO
    if le == lf and len(le) == 1 and singular(next(iter(le))):
        return AliasAnswer.MUST_SINGLE
    return AliasAnswer.TOP


# ---------------------------------------------------------------- text form


def format_rel(rel: PointsToRel, names: Sequence[str] | None = None) -> str:
    if rel.is_bottom:
        return "<bottom>"
    label = (lambda l: str(names[l])) if names else (lambda l: str(rel.universe.name(l)))
    lines = []
    for l in sorted(rel.successors, key=label):
        targets = ",".join(sorted(label(m) for m in rel.successors[l]))
        lines.append(f"{label(l)} -> {{{targets}}}")
    return "\n".join(lines)
