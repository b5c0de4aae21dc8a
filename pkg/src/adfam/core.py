"""Finite encodings of almost disjoint families and the fat/free/tight toolkit.

Every object here is a finite approximation: a ``PartialFn`` is a function
from a finite set of naturals to naturals, a ``PlaneSet`` is a finite subset
of N x N, and a ``FamilySnapshot`` is an indexed finite list of either.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from math import comb, isqrt
from typing import Iterable, Iterator, Mapping, Sequence, Union

Point = tuple[int, int]


# ---------------------------------------------------------------------------
# pairings


def encode_pair(n: int, j: int) -> int:
    """Cantor pairing with (0,0)=0, (0,1)=1, (1,0)=2, (0,2)=3, ...

    Pairs are listed along the anti-diagonals n+j = s, with n increasing.
    """
    if n < 0 or j < 0:
        raise ValueError("pairing is defined on naturals only")
    s = n + j
    return s * (s + 1) // 2 + n


def decode_pair(m: int) -> tuple[int, int]:
    if m < 0:
        raise ValueError("pairing is defined on naturals only")
    s = (isqrt(8 * m + 1) - 1) // 2
    n = m - s * (s + 1) // 2
    return n, s - n


def _level_offset(k: int, level: int) -> int:
    return sum(comb(2**lvl, k) for lvl in range(level))


def _rank_combination(items: Sequence[int], n: int) -> int:
    """Lexicographic rank of the sorted k-subset ``items`` of range(n)."""
    k = len(items)
    return comb(n, k) - 1 - sum(comb(n - 1 - c, k - i) for i, c in enumerate(items))


def _unrank_combination(rank: int, n: int, k: int) -> list[int]:
    out = []
    x = 0
    for i in range(k):
        while True:
            block = comb(n - 1 - x, k - 1 - i)
            if rank < block:
                break
            rank -= block
            x += 1
        out.append(x)
        x += 1
    return out


def sk_encode(k: int, level: int, strings: Iterable[str]) -> int:
    """Code of a k-set of bit strings of length ``level``.

    Codes run through levels in increasing order, and within a level through
    the k-subsets of {0,1}^level in lexicographic order of the sorted tuple.
    Levels with fewer than k strings contribute no codes.
    """
    strs = list(strings)
    if len(set(strs)) != len(strs):
        raise ValueError("duplicate strings")
    if len(strs) != k:
        raise ValueError(f"expected {k} strings, got {len(strs)}")
    if any(len(s) != level or set(s) - {"0", "1"} for s in strs):
        raise ValueError(f"all strings must be bit strings of length {level}")
    if 2**level < k:
        raise ValueError(f"level {level} has fewer than {k} strings")
    values = sorted(int(s, 2) if s else 0 for s in strs)
    return _level_offset(k, level) + _rank_combination(values, 2**level)


def sk_decode(k: int, code: int) -> tuple[int, tuple[str, ...]]:
    if code < 0:
        raise ValueError("codes are naturals")
    level = 0
    while True:
        size = comb(2**level, k)
        if code < size:
            break
        code -= size
        level += 1
    values = _unrank_combination(code, 2**level, k)
    return level, tuple(format(v, f"0{level}b") if level else "" for v in values)


def sk_level(k: int, code: int) -> int:
    return sk_decode(k, code)[0]


# ---------------------------------------------------------------------------
# value types


class _Top:
    """The extra point of omega+1 used by tight functions."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "TOP"

    def __reduce__(self):
        return (_Top, ())


TOP = _Top()


class PartialFn:
    """A finite partial function N -> N whose coordinates lie below ``horizon``."""

    __slots__ = ("_entries", "horizon", "_graph")

    def __init__(self, entries: Mapping[int, int] | Iterable[Point] = (), horizon: int | None = None):
        items = dict(entries.items() if isinstance(entries, Mapping) else entries)
        for i, v in items.items():
            if i < 0 or v < 0:
                raise ValueError(f"negative entry ({i}, {v})")
        if horizon is None:
            horizon = max(items, default=-1) + 1
        if any(i >= horizon for i in items):
            raise ValueError(f"coordinate at or above horizon {horizon}")
        self._entries = items
        self.horizon = horizon
        self._graph = None

    def __getitem__(self, i: int) -> int:
        return self._entries[i]

    def get(self, i: int, default=None):
        return self._entries.get(i, default)

    def __contains__(self, i: int) -> bool:
        return i in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def items(self):
        return sorted(self._entries.items())

    @property
    def domain(self) -> frozenset[int]:
        return frozenset(self._entries)

    @property
    def graph(self) -> frozenset[Point]:
        if self._graph is None:
            self._graph = frozenset(self._entries.items())
        return self._graph

    def restrict(self, lo: int, hi: int) -> "PartialFn":
        """Restriction to coordinates in the half-open window [lo, hi)."""
        return PartialFn({i: v for i, v in self._entries.items() if lo <= i < hi}, self.horizon)

    def extended(self, more: Mapping[int, int], horizon: int | None = None) -> "PartialFn":
        merged = dict(self._entries)
        for i, v in more.items():
            if merged.get(i, v) != v:
                raise ValueError(f"conflicting value at {i}")
            merged[i] = v
        h = max(self.horizon, max(merged, default=-1) + 1) if horizon is None else horizon
        return PartialFn(merged, h)

    def is_total_below(self, h: int) -> bool:
        return all(i in self._entries for i in range(h))

    def __eq__(self, other):
        return isinstance(other, PartialFn) and self._entries == other._entries and self.horizon == other.horizon

    def __hash__(self):
        return hash((self.graph, self.horizon))

    def __repr__(self):
        body = ", ".join(f"{i}:{v}" for i, v in self.items()[:8])
        more = "..." if len(self) > 8 else ""
        return f"PartialFn({{{body}{more}}}, horizon={self.horizon})"


@dataclass(frozen=True)
class ExtendedFn:
    """Total function on [0, horizon) into N u {TOP}."""

    values: tuple
    horizon: int

    def __post_init__(self):
        if len(self.values) != self.horizon:
            raise ValueError("an extended function has exactly one value per coordinate")

    def __getitem__(self, i: int):
        if 0 <= i < self.horizon:
            return self.values[i]
        return TOP

    def avoided_by(self, sigma: PartialFn) -> bool:
        return all(self[i] is TOP or self[i] != v for i, v in sigma.items())


@dataclass(frozen=True)
class PlaneSet:
    points: frozenset
    horizon: int

    def __post_init__(self):
        object.__setattr__(self, "points", frozenset(self.points))
        for n, j in self.points:
            if n < 0 or j < 0 or n >= self.horizon:
                raise ValueError(f"point ({n}, {j}) outside the plane below column {self.horizon}")

    @classmethod
    def from_graphs(cls, fns: Iterable[PartialFn], horizon: int | None = None) -> "PlaneSet":
        fns = list(fns)
        pts = frozenset().union(*(f.graph for f in fns)) if fns else frozenset()
        if horizon is None:
            horizon = max((f.horizon for f in fns), default=0)
        return cls(pts, horizon)

    def columns(self) -> frozenset[int]:
        return frozenset(n for n, _ in self.points)

    def fibers(self) -> dict[int, set[int]]:
        out: dict[int, set[int]] = {}
        for n, j in self.points:
            out.setdefault(n, set()).add(j)
        return out

    def __len__(self):
        return len(self.points)

    def __contains__(self, pt) -> bool:
        return pt in self.points

    def __and__(self, other: "PlaneSet") -> "PlaneSet":
        return PlaneSet(self.points & other.points, min(self.horizon, other.horizon))


Member = Union[frozenset, PartialFn]


@dataclass(frozen=True)
class FamilySnapshot:
    """Indexed finite family; the index stands in for the ordinal position."""

    members: tuple
    universe_horizon: int
    kind: str = "fn"
    meta: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in ("fn", "set"):
            raise ValueError(f"unknown family kind {self.kind!r}")
        members = tuple((int(i), m) for i, m in self.members)
        object.__setattr__(self, "members", members)
        last = -1
        for idx, m in members:
            if idx <= last:
                raise ValueError("indices must be strictly increasing")
            last = idx
            if self.kind == "fn":
                if not isinstance(m, PartialFn):
                    raise TypeError("function families hold PartialFn members")
                if m.horizon > self.universe_horizon:
                    raise ValueError(f"member {idx} exceeds the universe horizon")
            else:
                if not isinstance(m, frozenset):
                    raise TypeError("set families hold frozenset members")
                if any(x < 0 or x >= self.universe_horizon for x in m):
                    raise ValueError(f"member {idx} exceeds the universe horizon")

    @classmethod
    def of_sets(cls, sets: Iterable[Iterable[int]], horizon: int | None = None, meta=None) -> "FamilySnapshot":
        sets = [frozenset(s) for s in sets]
        if horizon is None:
            horizon = max((max(s, default=-1) for s in sets), default=-1) + 1
        return cls(tuple(enumerate(sets)), horizon, "set", meta or {})

    @classmethod
    def of_fns(cls, fns: Iterable[PartialFn], horizon: int | None = None, meta=None) -> "FamilySnapshot":
        fns = list(fns)
        if horizon is None:
            horizon = max((f.horizon for f in fns), default=0)
        return cls(tuple(enumerate(fns)), horizon, "fn", meta or {})

    def __len__(self):
        return len(self.members)

    def __iter__(self) -> Iterator[tuple[int, Member]]:
        return iter(self.members)

    @property
    def indices(self) -> list[int]:
        return [i for i, _ in self.members]

    def member(self, index: int) -> Member:
        for i, m in self.members:
            if i == index:
                return m
        raise KeyError(f"no member with index {index}")

    def sub(self, picks: Iterable[int]) -> "FamilySnapshot":
        keep = set(picks)
        return FamilySnapshot(tuple((i, m) for i, m in self.members if i in keep), self.universe_horizon, self.kind, self.meta)

    def as_sets(self) -> "FamilySnapshot":
        """The same family on N, function graphs pushed through Cantor pairing."""
        if self.kind == "set":
            return self
        members = tuple((i, frozenset(encode_pair(n, j) for n, j in m.graph)) for i, m in self.members)
        horizon = max((max(s, default=-1) for _, s in members), default=-1) + 1
        return FamilySnapshot(members, horizon, "set", self.meta)


@dataclass(frozen=True)
class TreeOrder:
    """Finite forest order given by parent pointers (``None`` marks a root)."""

    parent: Mapping[int, int | None]

    def __post_init__(self):
        par = dict(self.parent)
        object.__setattr__(self, "parent", par)
        for node, p in par.items():
            if p is not None and p not in par:
                raise ValueError(f"parent {p} of {node} is not a node")
        for node in par:
            seen = set()
            x = node
            while x is not None:
                if x in seen:
                    raise ValueError(f"parent relation has a cycle through {node}")
                seen.add(x)
                x = par[x]
        children: dict[int, list[int]] = {n: [] for n in par}
        for node, p in par.items():
            if p is not None:
                children[p].append(node)
        object.__setattr__(self, "_children", {n: tuple(sorted(c)) for n, c in children.items()})

    @property
    def nodes(self) -> frozenset[int]:
        return frozenset(self.parent)

    def children(self, node: int) -> tuple[int, ...]:
        return self._children[node]

    def roots(self) -> list[int]:
        return sorted(n for n, p in self.parent.items() if p is None)

    def leaves(self) -> list[int]:
        return sorted(n for n in self.parent if not self._children[n])

    def ancestors(self, node: int) -> list[int]:
        """Strict predecessors of ``node``, nearest first."""
        out = []
        x = self.parent[node]
        while x is not None:
            out.append(x)
            x = self.parent[x]
        return out

    def depth(self, node: int) -> int:
        return len(self.ancestors(node))

    def precedes(self, s: int, t: int) -> bool:
        """Strict tree order s < t."""
        return s != t and s in self.ancestors(t)

    def comparable(self, s: int, t: int) -> bool:
        return s == t or self.precedes(s, t) or self.precedes(t, s)

    def is_chain(self, xs: Iterable[int]) -> bool:
        xs = sorted(set(xs), key=self.depth)
        return all(self.precedes(a, b) for a, b in zip(xs, xs[1:]))

    def path_to(self, node: int) -> tuple[int, ...]:
        return tuple(reversed(self.ancestors(node))) + (node,)

    def branches(self) -> list[tuple[int, ...]]:
        """Maximal chains, each listed from its root up to its leaf."""
        return [self.path_to(leaf) for leaf in self.leaves()]

    def is_branch(self, chain: Iterable[int]) -> bool:
        chain = tuple(chain)
        return bool(chain) and chain[-1] in self.parent and not self._children[chain[-1]] and self.path_to(chain[-1]) == chain

    def bfs_order(self) -> list[int]:
        return sorted(self.parent, key=lambda n: (self.depth(n), n))


def binary_tree(depth: int) -> TreeOrder:
    """Complete binary tree with ``depth`` levels below the root, heap-numbered from 0."""
    size = 2 ** (depth + 1) - 1
    return TreeOrder({i: (None if i == 0 else (i - 1) // 2) for i in range(size)})


def chain_tree(nodes: Sequence[int]) -> TreeOrder:
    return TreeOrder({n: (nodes[i - 1] if i else None) for i, n in enumerate(nodes)})


@dataclass(frozen=True)
class SubsetAssignment:
    """Caller-supplied stand-in for a guessing sequence: beta -> finite subset of beta."""

    assign: Mapping[int, frozenset]

    def __post_init__(self):
        clean = {}
        for beta, s in self.assign.items():
            s = frozenset(s)
            if any(g >= beta or g < 0 for g in s):
                raise ValueError(f"S_{beta} must consist of indices below {beta}")
            clean[int(beta)] = s
        object.__setattr__(self, "assign", clean)

    def __getitem__(self, beta: int) -> frozenset:
        return self.assign.get(beta, frozenset())

    @classmethod
    def initial_segments(cls, count: int) -> "SubsetAssignment":
        return cls({b: frozenset(range(b)) for b in range(1, count)})


# ---------------------------------------------------------------------------
# operations


def points_of(member: Member) -> frozenset:
    return member.graph if isinstance(member, PartialFn) else frozenset(member)


def intersect(a: Member, b: Member) -> frozenset:
    return points_of(a) & points_of(b)


def union_family(fam: FamilySnapshot, picks: Iterable[int]):
    """Union of the chosen members: a PlaneSet for function families, a frozenset otherwise."""
    picks = set(picks)
    unknown = picks - set(fam.indices)
    if unknown:
        raise KeyError(f"unknown indices {sorted(unknown)}")
    chosen = [m for i, m in fam if i in picks]
    if fam.kind == "fn":
        return PlaneSet.from_graphs(chosen, fam.universe_horizon)
    return frozenset().union(*chosen) if chosen else frozenset()


def pi_col(F: PlaneSet, n: int) -> frozenset[int]:
    if n < 0 or n >= F.horizon:
        raise ValueError(f"column {n} outside [0, {F.horizon})")
    return frozenset(j for c, j in F.points if c == n)


def pi_restrict(F: PlaneSet, E: Iterable[int]) -> PlaneSet:
    E = set(E)
    return PlaneSet(frozenset(p for p in F.points if p[0] in E), F.horizon)


def is_fat(F: PlaneSet, width: int, start: int = 0) -> tuple[bool, int | None]:
    """Is some column in [start, horizon) at least ``width`` tall?  Returns (verdict, witness column)."""
    if start >= F.horizon:
        raise ValueError(f"start {start} not below horizon {F.horizon}")
    fibers = Counter(n for n, _ in F.points if n >= start)
    for n in sorted(fibers):
        if fibers[n] >= width:
            return True, n
    if width <= 0:
        return True, start
    return False, None


def fat_width(F: PlaneSet, start: int = 0) -> int:
    """Tallest column at or after ``start``."""
    return max((c for n, c in Counter(n for n, _ in F.points if n >= start).items()), default=0)


def tight_function(sample: Sequence[PartialFn], horizon: int, tau: int) -> ExtendedFn:
    """Column-wise majority value when it occurs at least ``tau`` times, TOP otherwise.

    Ties between equally frequent values go to the smallest value.
    """
    if tau < 2:
        raise ValueError("tau must be at least 2")
    if not sample:
        raise ValueError("empty sample")
    values = []
    for i in range(horizon):
        col = Counter()
        for g in sample:
            if i not in g:
                raise ValueError(f"sample member undefined at coordinate {i}")
            col[g[i]] += 1
        best = min(col.items(), key=lambda kv: (-kv[1], kv[0]))
        values.append(best[0] if best[1] >= tau else TOP)
    return ExtendedFn(tuple(values), horizon)


def free_count(sample: Iterable[PartialFn], sigma: PartialFn) -> int:
    """Number of sample members whose graph misses the graph of ``sigma``."""
    pts = sigma.items()
    return sum(1 for g in sample if all(g.get(i) != v for i, v in pts))


# ---------------------------------------------------------------------------
# JSON


def member_to_json(member: Member) -> dict:
    if isinstance(member, PartialFn):
        return {"kind": "fn", "horizon": member.horizon, "entries": [list(p) for p in member.items()]}
    return {"kind": "set", "horizon": max(member, default=-1) + 1, "entries": sorted(member)}


def member_from_json(obj: Mapping) -> Member:
    if obj["kind"] == "fn":
        return PartialFn([(int(i), int(v)) for i, v in obj["entries"]], int(obj["horizon"]))
    if obj["kind"] == "set":
        return frozenset(int(x) for x in obj["entries"])
    raise ValueError(f"unknown member kind {obj['kind']!r}")


def family_to_json(fam: FamilySnapshot) -> dict:
    out = {"kind": fam.kind, "universe_horizon": fam.universe_horizon, "members": []}
    for idx, m in fam:
        if fam.kind == "fn":
            out["members"].append({"index": idx, "horizon": m.horizon, "entries": [list(p) for p in m.items()]})
        else:
            out["members"].append({"index": idx, "entries": sorted(m)})
    if fam.meta:
        out["meta"] = dict(fam.meta)
    return out


def family_from_json(obj: Mapping) -> FamilySnapshot:
    kind = obj["kind"]
    horizon = int(obj["universe_horizon"])
    members = []
    for rec in obj["members"]:
        if kind == "fn":
            members.append((rec["index"], PartialFn([(int(i), int(v)) for i, v in rec["entries"]], int(rec.get("horizon", horizon)))))
        elif kind == "set":
            members.append((rec["index"], frozenset(int(x) for x in rec["entries"])))
        else:
            raise ValueError(f"unknown family kind {kind!r}")
    return FamilySnapshot(tuple(members), horizon, kind, obj.get("meta", {}))


def dumps(obj) -> str:
    """Canonical JSON text used for every artifact file."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def tree_to_json(tree: TreeOrder) -> dict:
    return {"parent": [[n, tree.parent[n]] for n in sorted(tree.parent)]}


def tree_from_json(obj: Mapping) -> TreeOrder:
    return TreeOrder({int(n): (None if p is None else int(p)) for n, p in obj["parent"]})


def all_pairs(items: Sequence):
    return combinations(items, 2)
