"""Explicit builders for almost disjoint families at finite scale.

The central piece is ``extend_function_25``, a staged engine that produces one
new function meeting a list of fat target sets while steering clear of the
members it has marked as used up.  The family builders iterate it.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Mapping, Sequence

from .core import (
    TOP,
    ExtendedFn,
    FamilySnapshot,
    PartialFn,
    PlaneSet,
    SubsetAssignment,
    TreeOrder,
    _rank_combination,
    fat_width,
    is_fat,
    pi_restrict,
    sk_encode,
    tight_function,
)


class ConstructionExhausted(Exception):
    """A builder ran out of room at the current finite scale."""

    def __init__(self, message: str, stage: int | None = None, detail: Mapping | None = None):
        super().__init__(message if stage is None else f"stage {stage}: {message}")
        self.stage = stage
        self.detail = dict(detail or {})


class RegistryViolation(Exception):
    """A tracked fat set, or a set derived from one, failed its fat budget."""

    def __init__(self, message: str, cascade: Sequence[Mapping] = ()):
        super().__init__(message)
        self.cascade = list(cascade)


# ---------------------------------------------------------------------------
# fat registry


@dataclass
class FatEntry:
    tag: str
    plane: PlaneSet
    width: int
    start: int = 0
    registered_at: int = -1
    parent: str | None = None
    depth: int = 0
    target: bool = True

    def check(self) -> bool:
        return is_fat(self.plane, self.width, self.start)[0]

    def to_json(self) -> dict:
        return {
            "tag": self.tag,
            "width": self.width,
            "start": self.start,
            "registered_at": self.registered_at,
            "parent": self.parent,
            "depth": self.depth,
            "target": self.target,
            "horizon": self.plane.horizon,
            "points": sorted(list(p) for p in self.plane.points),
        }


@dataclass
class FatRegistry:
    """Fat plane sets tracked during a build, each with its budgets and provenance."""

    tracked: list[FatEntry] = field(default_factory=list)

    def register(self, entry: FatEntry) -> FatEntry:
        if any(e.tag == entry.tag for e in self.tracked):
            raise ValueError(f"tag {entry.tag!r} already registered")
        if not entry.check():
            raise RegistryViolation(f"{entry.tag} is not fat at width {entry.width}", [entry.to_json()])
        self.tracked.append(entry)
        return entry

    def get(self, tag: str) -> FatEntry:
        for e in self.tracked:
            if e.tag == tag:
                return e
        raise KeyError(tag)

    def before(self, stage: int) -> list[FatEntry]:
        return [e for e in self.tracked if e.registered_at < stage]

    def verify(self) -> list[str]:
        """Tags of entries that no longer pass their fat budget (empty when all is well)."""
        return [e.tag for e in self.tracked if not e.check()]

    def lineage(self, tag: str) -> list[FatEntry]:
        out = []
        while tag is not None:
            e = self.get(tag)
            out.append(e)
            tag = e.parent
        return out[::-1]

    def to_json(self) -> dict:
        return {"tracked": [e.to_json() for e in self.tracked]}


# ---------------------------------------------------------------------------
# the staged extension engine


@dataclass
class StageRecord:
    stage: int
    mark: int
    picks: list  # (target, column, value)
    tight: ExtendedFn | None
    avoiders: dict  # subfamily position -> member id, or None when none exists
    used_up: tuple


@dataclass
class StageTrace:
    stages: list = field(default_factory=list)
    policy: str = "strict"
    horizon: int = 0
    shortfalls: list = field(default_factory=list)
    entered: dict = field(default_factory=dict)  # member id -> stage it joined U

    @property
    def marks(self) -> list[int]:
        return [s.mark for s in self.stages]

    def picks(self) -> list[tuple[int, int, int, int]]:
        """All picks as (stage, target, column, value)."""
        return [(s.stage, k, r, t) for s in self.stages for k, r, t in s.picks]

    def to_json(self) -> dict:
        def tight(s):
            if s is None:
                return None
            return ["TOP" if v is TOP else v for v in s.values]

        return {
            "policy": self.policy,
            "horizon": self.horizon,
            "shortfalls": self.shortfalls,
            "entered": sorted([g, e] for g, e in self.entered.items()),
            "stages": [
                {
                    "stage": s.stage,
                    "mark": s.mark,
                    "picks": [list(p) for p in s.picks],
                    "tight": tight(s.tight),
                    "avoiders": sorted([k, g] for k, g in s.avoiders.items()),
                    "used_up": list(s.used_up),
                }
                for s in self.stages
            ],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "StageTrace":
        stages = []
        for s in obj["stages"]:
            tight = None
            if s["tight"] is not None:
                vals = tuple(TOP if v == "TOP" else int(v) for v in s["tight"])
                tight = ExtendedFn(vals, len(vals))
            stages.append(
                StageRecord(
                    s["stage"],
                    s["mark"],
                    [tuple(p) for p in s["picks"]],
                    tight,
                    {k: g for k, g in s["avoiders"]},
                    tuple(s["used_up"]),
                )
            )
        return cls(stages, obj["policy"], obj["horizon"], list(obj["shortfalls"]), {g: e for g, e in obj["entered"]})


def _fresh_value(i: int, members: Sequence[PartialFn], tights: Sequence[ExtendedFn], value_horizon: int | None) -> int:
    taken = {g[i] for g in members if i in g}
    taken.update(s[i] for s in tights if s[i] is not TOP)
    v = 0
    while v in taken:
        v += 1
    if value_horizon is not None and v >= value_horizon:
        raise ConstructionExhausted(f"no free value below {value_horizon} at column {i}")
    return v


def _targets_survive(targets, fibers, blocked: Sequence[PartialFn], mark: int, horizon: int) -> bool:
    """Does every target keep a point beyond ``mark`` that avoids the blocked graphs?"""
    for (F, _), fib in zip(targets, fibers):
        if not any(
            any(all(g.get(r) != t for g in blocked) for t in col)
            for r, col in fib.items()
            if mark < r < min(horizon, F.horizon)
        ):
            return False
    return True


def extend_function_25(
    C: Sequence[PartialFn],
    C_n: Sequence[Sequence[int]],
    F_n: Sequence[PlaneSet],
    stages: int,
    tau: int = 2,
    registry: FatRegistry | Sequence[FatEntry] | None = None,
    *,
    horizon: int | None = None,
    policy: str = "strict",
    block: int = 0,
    enumeration: Sequence[int] | None = None,
    value_horizon: int | None = None,
) -> tuple[PartialFn, StageTrace]:
    """Build f on [0, m_{J-1}] hitting every target J - n times while avoiding used-up members.

    ``C`` is the current family, ``C_n`` lists subfamilies as positions into
    ``C``, and ``F_n`` lists the target plane sets.  Registry entries are
    appended to the targets and carry the extra fiber requirement.

    policy "strict" runs the stages verbatim: the n-th member of ``C`` joins
    the used-up set at stage n and a missing avoider is an error.  policy
    "finite" only marks avoiders as used up and records a missing avoider as
    a shortfall; with finitely many picks per target this is enough for the
    output to meet every member of ``C`` finitely.
    """
    if policy not in ("strict", "finite"):
        raise ValueError(f"unknown policy {policy!r}")
    if stages < 0:
        raise ValueError("stage count must be a natural")
    C = list(C)
    entries = list(registry.tracked if isinstance(registry, FatRegistry) else registry or [])
    targets: list[tuple[PlaneSet, int | None]] = [(F, None) for F in F_n] + [(e.plane, e.width) for e in entries]
    if horizon is None:
        horizon = max([g.horizon for g in C] + [F.horizon for F, _ in targets] + [stages])
    enum = list(range(len(C))) if enumeration is None else list(enumeration)
    subfams = [[C[g] for g in sub] for sub in C_n]
    fibers = [F.fibers() for F, _ in targets]

    f: dict[int, int] = {}
    used: set[int] = set()
    trace = StageTrace(policy=policy, horizon=horizon)
    tights: list[ExtendedFn] = []
    prev = -1
    marks: list[int] = []
    spent: set[int] = set()  # members of C agreeing with f somewhere
    lookahead = len(C) + 1
    for j in range(stages):
        tight = None
        if j < len(subfams) and subfams[j]:
            tight = tight_function(subfams[j], horizon, tau)
            tights.append(tight)
        blocked = [C[g] for g in used]
        lo = max(prev + 1, j * block)
        last = lo - 1
        picks = []
        for k in range(min(j + 1, len(targets))):
            F, width = targets[k]
            need = 0 if width is None else min(j, width - 1)
            # among the first few eligible columns prefer a point whose carriers
            # already meet f: fresh carriers stop being usable as avoiders
            best = None
            seen = 0
            for r in range(last + 1, min(horizon, F.horizon)):
                col = fibers[k].get(r)
                if not col or len(col) <= need:
                    continue
                eligible = False
                for t in sorted(col):
                    if any(g.get(r) == t for g in blocked):
                        continue
                    if any(s[r] == t for s in tights):
                        continue
                    eligible = True
                    carriers = {g for g, h in enumerate(C) if h.get(r) == t}
                    key = (len(carriers - spent), seen, len(carriers), t, r)
                    if best is None or key < best:
                        best = key
                seen += eligible
                if seen > lookahead or (best is not None and best[0] == 0):
                    break
            found = None if best is None else (best[4], best[3])
            if found is None:
                raise ConstructionExhausted("no eligible target point below the horizon", j, {"target": k, "after": last})
            r, t = found
            f[r] = t
            spent.update(g for g, h in enumerate(C) if h.get(r) == t)
            picks.append((k, r, t))
            last = r
        mark = max(last, j, prev + 1)
        if mark >= horizon:
            raise ConstructionExhausted(f"stage mark {mark} reached the horizon {horizon}", j)
        for i in range(prev + 1, mark + 1):
            if i not in f:
                f[i] = _fresh_value(i, C, tights, value_horizon)
        marks.append(mark)

        avoiders = {}
        taken_now: set[int] = set()
        for k in range(min(j + 1, len(subfams))):
            lo_k = marks[k - 1] if k > 0 else -1
            window = [(i, f[i]) for i in range(lo_k + 1, mark + 1)]
            choice = None
            for g in C_n[k]:
                if g in used:
                    continue
                if any(C[g].get(i) == v for i, v in window):
                    continue
                if policy == "finite" and not _targets_survive(targets, fibers, [C[h] for h in used | taken_now | {g}], mark, horizon):
                    continue
                choice = g
                break
            if choice is None:
                if policy == "strict" and any(g not in used for g in C_n[k]):
                    raise ConstructionExhausted("no avoider in the subfamily at this scale", j, {"subfamily": k})
                if policy == "strict" and C_n[k]:
                    raise ConstructionExhausted("subfamily entirely used up", j, {"subfamily": k})
                trace.shortfalls.append({"stage": j, "subfamily": k})
            avoiders[k] = choice
            if choice is not None:
                taken_now.add(choice)
        joined = {g for g in avoiders.values() if g is not None}
        if policy == "strict" and j < len(enum):
            joined.add(enum[j])
        for g in sorted(joined - used):
            trace.entered[g] = j
        used |= joined
        trace.stages.append(StageRecord(j, mark, picks, tight, avoiders, tuple(sorted(used))))
        prev = mark
    return PartialFn(f, prev + 1), trace


def pad_fresh(f: PartialFn, C: Sequence[PartialFn], horizon: int, value_horizon: int | None = None) -> PartialFn:
    """Extend ``f`` to [0, horizon) with values off every member of ``C``."""
    more = {i: _fresh_value(i, C, (), value_horizon) for i in range(horizon) if i not in f}
    return f.extended(more, horizon)


def extension_properties(f: PartialFn, trace: StageTrace, C: Sequence[PartialFn], C_n: Sequence[Sequence[int]], F_n: Sequence[PlaneSet]) -> dict:
    """Measure the engine postconditions directly from (f, trace).

    Returns, per property, what was observed:
      "used_up": for each member that joined U, its agreement columns and the
        mark of the stage it joined (all agreement columns must lie at or below it);
      "hits": |f & F_n| for each target;
      "free": for each subfamily n, how many members meet f only inside
        m_n x {f(i): i < m_n}.
    """
    J = len(trace.stages)
    marks = trace.marks
    used_up = {}
    for g, e in sorted(trace.entered.items()):
        cols = sorted(i for i, v in f.items() if C[g].get(i) == v)
        used_up[g] = {"columns": cols, "mark": marks[e], "ok": all(i <= marks[e] for i in cols)}
    hits = [len(f.graph & F.points) for F in F_n]
    free = []
    for n, sub in enumerate(C_n):
        if n >= J:
            break
        m = marks[n]
        vals = {f[i] for i in range(m) if i in f}
        free.append(sum(1 for g in sub if all(i < m and v in vals for i, v in f.items() if C[g].get(i) == v)))
    return {"used_up": used_up, "hits": hits, "free": free, "stages": J}


# ---------------------------------------------------------------------------
# family builders driven by a subset assignment


def _enumerate(alpha: int, assign: SubsetAssignment, rng: random.Random | None) -> list[int]:
    betas = [b for b in range(alpha + 1) if assign[b]]
    if rng is not None:
        rng.shuffle(betas)
    return betas


def _box_witness(f: PartialFn, members: Sequence[PartialFn], count: int) -> int:
    """Least m such that at least ``count`` of the members meet f inside m x m."""
    boxes = []
    for g in members:
        common = [(i, v) for i, v in f.items() if g.get(i) == v]
        boxes.append(max((max(i, v) + 1 for i, v in common), default=0))
    boxes.sort()
    return boxes[count - 1] if 0 < count <= len(boxes) else 0


def _agreement_bound(f: PartialFn, earlier: Sequence[PartialFn]) -> int:
    return max((len(f.graph & g.graph) for g in earlier), default=0)


def _check_assign(count: int, assign: SubsetAssignment) -> None:
    if assign[0]:
        raise ValueError("S_0 must be empty")
    for b in assign.assign:
        if b >= count and assign[b]:
            raise ValueError(f"assignment mentions index {b} beyond the family size {count}")


def _default_horizon(targets: int, stages: int) -> int:
    return 4 * (targets + 1) * (stages + 1)


def build_family_07(
    count: int,
    assign: SubsetAssignment,
    stages: int,
    tau: int = 2,
    *,
    horizon: int | None = None,
    block: int | None = None,
    seed: int | None = None,
) -> FamilySnapshot:
    """Functions f_0, ..., f_{B-1}, each produced by the engine against its predecessors.

    f_alpha targets the unions of the assigned sets S_beta for beta <= alpha.
    The construction log lives in ``meta``: the enumeration, the picks and,
    per (beta, alpha), the hit counts and the box witnesses.
    """
    _check_assign(count, assign)
    rng = random.Random(seed) if seed is not None else None
    nonempty = sum(1 for b in range(count) if assign[b])
    if block is None:
        block = 0
    if horizon is None:
        horizon = _default_horizon(nonempty, stages)
    fns: list[PartialFn] = []
    log = []
    for alpha in range(count):
        betas = _enumerate(alpha, assign, rng)
        C_n = [sorted(assign[b]) for b in betas]
        F_n = [PlaneSet.from_graphs([fns[g] for g in sub], horizon) for sub in C_n]
        f, trace = extend_function_25(fns, C_n, F_n, stages, tau, horizon=horizon, policy="finite", block=block)
        f = pad_fresh(f, fns, horizon)
        avoided = {}
        for s in trace.stages:
            for k, g in s.avoiders.items():
                if g is not None:
                    avoided[k] = avoided.get(k, 0) + 1
        per_beta = []
        for n, b in enumerate(betas):
            hits = len(f.graph & F_n[n].points)
            free = max(1, avoided.get(n, 0))
            per_beta.append(
                {
                    "beta": b,
                    "position": n,
                    "hits": hits,
                    "required": max(0, stages - n),
                    "free": free,
                    "box": _box_witness(f, [fns[g] for g in C_n[n]], free),
                }
            )
        log.append(
            {
                "alpha": alpha,
                "enumeration": betas,
                "marks": trace.marks,
                "picks": [list(p) for p in trace.picks()],
                "shortfalls": trace.shortfalls,
                "targets": per_beta,
                "agreement_bound": _agreement_bound(f, fns),
            }
        )
        fns.append(f)
    meta = {
        "builder": "thm07",
        "stages": stages,
        "tau": tau,
        "block": block,
        "agreement_bound": max((e["agreement_bound"] for e in log), default=0),
        "log": log,
    }
    return FamilySnapshot.of_fns(fns, horizon, meta)


def _separated(betas: Sequence[int], assign: SubsetAssignment) -> bool:
    """Index-order separation: everything in S_{b_i} and b_i itself precede all of S_{b_{i+1}}."""
    for b, c in zip(betas, betas[1:]):
        if not assign[b] or not assign[c]:
            return False
        if max(max(assign[b]), b) >= min(assign[c]):
            return False
    return True


def build_family_32(
    count: int,
    assign: SubsetAssignment,
    tuple_depth: int,
    stages: int,
    tau: int = 2,
    *,
    horizon: int | None = None,
    block: int | None = None,
) -> tuple[FamilySnapshot, FatRegistry]:
    """Like build_family_07, with a registry of fat sets the new members must keep meeting.

    Registered sets: the union of each S_beta, and for separated tuples
    beta_0 < ... < beta_n (n < tuple_depth) the intersection of their unions.
    After each f_alpha, every tracked set C spawns pi_E C with
    E = {n: (n, f_alpha(n)) in C}; it must be fat one column narrower.
    tuple_depth 1 leaves the registry empty and reproduces build_family_07.
    """
    if tuple_depth < 1:
        raise ValueError("tuple_depth must be at least 1")
    if tuple_depth == 1:
        return build_family_07(count, assign, stages, tau, horizon=horizon, block=block), FatRegistry()
    _check_assign(count, assign)
    assigned = [b for b in range(count) if assign[b]]
    tuples = [t for L in range(2, tuple_depth + 1) for t in combinations(assigned, L) if _separated(t, assign)]
    if block is None:
        # a shared block width keeps every member's stage-j picks in [jW, (j+1)W),
        # so the columns where earlier members met a union line up with later stages
        block = len(assigned) + len(tuples) + 1
    if horizon is None:
        horizon = 4 * block * (stages + 1)
    registry = FatRegistry()
    fns: list[PartialFn] = []
    log = []

    def union_of(b):
        return PlaneSet.from_graphs([fns[g] for g in sorted(assign[b])], horizon)

    def register_ready(alpha):
        # everything computable from f_0..f_alpha and needed from f_{alpha+1} on
        for b in assigned:
            tag = f"S{b}"
            if max(assign[b]) <= alpha and not any(e.tag == tag for e in registry.tracked):
                plane = union_of(b)
                registry.register(FatEntry(tag, plane, fat_width(plane), 0, alpha, None, 0))
        for t in tuples:
            tag = "&".join(f"S{b}" for b in t)
            if max(max(assign[b]) for b in t) <= alpha and not any(e.tag == tag for e in registry.tracked):
                plane = union_of(t[0])
                for b in t[1:]:
                    plane = plane & union_of(b)
                w = fat_width(plane)
                if w >= 1:
                    registry.register(FatEntry(tag, plane, w, 0, alpha, None, 0))
                else:
                    log.append({"alpha": alpha, "unregistered": tag, "reason": "empty intersection"})

    for alpha in range(count):
        entries = registry.before(alpha)
        entries = sorted((e for e in entries if e.target), key=lambda e: (e.parent is None and "&" not in e.tag, e.registered_at))
        betas = _enumerate(alpha, assign, None)
        C_n = [sorted(assign[b]) for b in betas]
        f, trace = extend_function_25(fns, C_n, [], stages, tau, entries, horizon=horizon, policy="finite", block=block)
        f = pad_fresh(f, fns, horizon)
        # cascade: pi_E C for every tracked set, fat one column narrower
        cascade = []
        for e in list(registry.before(alpha)):
            E = sorted(n for n, v in f.items() if (n, v) in e.plane.points)
            child = pi_restrict(e.plane, E)
            ok = is_fat(child, e.width - 1, e.start)[0] if e.width - 1 > 0 else True
            rec = {"tag": e.tag, "E": E, "width": e.width - 1, "fat": ok}
            cascade.append(rec)
            if e.target and not E:
                raise RegistryViolation(f"f_{alpha} misses tracked set {e.tag}", [x.to_json() for x in registry.lineage(e.tag)])
            if not ok:
                raise RegistryViolation(
                    f"pi_E {e.tag} is not fat at width {e.width - 1} after f_{alpha}",
                    [x.to_json() for x in registry.lineage(e.tag)] + [rec],
                )
            if e.width - 1 >= 1 and e.depth + 1 < tuple_depth:
                registry.register(FatEntry(f"{e.tag}/f{alpha}", child, e.width - 1, e.start, alpha, e.tag, e.depth + 1, target=False))
        position = {e.tag: k for k, e in enumerate(entries)}
        hits = {e.tag: {"position": position[e.tag], "hits": len(f.graph & e.plane.points), "required": max(0, stages - position[e.tag])} for e in entries}
        boxes = []
        for n, b in enumerate(betas):
            free = max(1, sum(1 for s in trace.stages if s.avoiders.get(n) is not None))
            boxes.append({"beta": b, "free": free, "box": _box_witness(f, [fns[g] for g in C_n[n]], free)})
        log.append(
            {
                "alpha": alpha,
                "enumeration": betas,
                "targets": hits,
                "marks": trace.marks,
                "picks": [list(p) for p in trace.picks()],
                "shortfalls": trace.shortfalls,
                "cascade": cascade,
                "boxes": boxes,
                "agreement_bound": _agreement_bound(f, fns),
            }
        )
        fns.append(f)
        register_ready(alpha)
    meta = {
        "builder": "thm32",
        "stages": stages,
        "tau": tau,
        "block": block,
        "tuple_depth": tuple_depth,
        "tuples": ["&".join(f"S{b}" for b in t) for t in tuples],
        "agreement_bound": max((e["agreement_bound"] for e in log if "agreement_bound" in e), default=0),
        "log": log,
    }
    return FamilySnapshot.of_fns(fns, horizon, meta), registry


# ---------------------------------------------------------------------------
# k-linked sets of codes and the Luzin builder on them


def hajnal_member(k: int, f: str, depth: int) -> frozenset[int]:
    """Codes of the k-sets of level-n strings containing f|n, for n <= depth."""
    if k < 1:
        raise ValueError("k must be positive")
    if len(f) < depth:
        raise ValueError(f"string of length {len(f)} is shorter than depth {depth}")
    if set(f) - {"0", "1"}:
        raise ValueError("not a bit string")
    out = set()
    offset = 0
    for n in range(depth + 1):
        size = 2**n
        if size >= k:
            u = int(f[:n], 2) if n else 0
            others = [v for v in range(size) if v != u]
            for rest in combinations(others, k - 1):
                out.add(offset + _rank_combination(sorted((u,) + rest), size))
        offset += comb(size, k)
    return frozenset(out)


def hajnal_family(k: int, strings: Sequence[str], depth: int) -> list[frozenset[int]]:
    return [hajnal_member(k, s, depth) for s in strings]


def build_family_59(
    strings: Sequence[str], depth: int, value_horizon: int | None = None, *, seed: int | None = None, rounds: int = 1
) -> FamilySnapshot:
    """Partial functions with domains e_alpha (k = 2) meeting every predecessor at designated points.

    For alpha and the n-th earlier index beta_n, the designated point is the
    least p >= n in e_alpha & e_{beta_n} outside every e_{beta_m}, m < n,
    at which no other earlier member takes the value f_{beta_n}(p).  There
    f_alpha copies f_{beta_n}; every other point gets a value no earlier
    member takes there, so agreement happens exactly at designated points.

    ``rounds`` lists the earlier indices that many times, the finite stand-in
    for an enumeration of type omega; a repeated beta only excludes the
    domains of the other indices met so far.
    """
    if rounds < 1:
        raise ValueError("rounds must be positive")
    if len(set(strings)) != len(strings):
        raise ValueError("strings must be distinct")
    rng = random.Random(seed) if seed is not None else None
    domains = hajnal_family(2, strings, depth)
    universe = comb(2 ** (depth + 1), 2)  # codes of all levels <= depth lie below this
    fns: list[PartialFn] = []
    log = []
    for alpha, dom in enumerate(domains):
        order = list(range(alpha))
        if rng is not None:
            rng.shuffle(order)
        order = order * rounds
        vals: dict[int, int] = {}
        picks = []
        for n, beta in enumerate(order):
            prev = fns[beta]
            seen = frozenset().union(*(domains[b] for b in set(order[:n]) - {beta}))
            choice = None
            for p in sorted((dom & domains[beta]) - seen):
                if p < n or p in vals:
                    continue
                v = prev[p]
                if any(g is not prev and g.get(p) == v for g in fns):
                    continue
                choice = p
                break
            if choice is None:
                raise ConstructionExhausted(
                    "no eligible designated point below the depth",
                    detail={"alpha": alpha, "beta": beta, "n": n, "blocking": [alpha, beta] + order[:n]},
                )
            vals[choice] = prev[choice]
            picks.append([beta, choice])
        for p in sorted(dom - set(vals)):
            taken = {g[p] for g in fns if p in g}
            v = 0
            while v in taken:
                v += 1
            if value_horizon is not None and v >= value_horizon:
                raise ConstructionExhausted(f"no free value below {value_horizon}", detail={"alpha": alpha, "point": p})
            vals[p] = v
        fns.append(PartialFn(vals, universe))
        log.append({"alpha": alpha, "order": order, "picks": sorted(picks)})
    meta = {"builder": "thm59", "depth": depth, "rounds": rounds, "strings": list(strings), "log": log}
    return FamilySnapshot.of_fns(fns, universe, meta)


def prefix_parts(strings: Sequence[str], k: int) -> list[list[int]]:
    """Index classes of the k largest prefix classes at the least level with >= k classes."""
    if len(strings) < k:
        raise ValueError(f"need at least {k} strings")
    n = 0
    while True:
        classes: dict[str, list[int]] = {}
        for i, w in enumerate(strings):
            classes.setdefault(w[:n], []).append(i)
        if len(classes) >= k:
            break
        if n > max(len(w) for w in strings):
            raise ValueError("strings never split into enough classes")
        n += 1
    ranked = sorted(classes.items(), key=lambda kv: (-len(kv[1]), kv[0]))
    return [idx for _, idx in ranked[:k]]


def luzin_budget_59(box: int) -> int:
    """How many predecessors can meet a member inside box x box: designated points sit at p >= n."""
    return box


# ---------------------------------------------------------------------------
# the basic diagonal Luzin family


def build_luzin_basic(count: int, meet_budget: int, horizon: int) -> FamilySnapshot:
    """Each f_alpha copies every f_beta (beta < alpha) at meet_budget designated columns >= meet_budget.

    A column is designated for (beta, alpha) only when no other earlier
    member shares f_beta's value there, and values off designated columns are
    fresh, so agreement happens exactly at designated columns.  Inside any
    box of side <= meet_budget the members are pairwise disjoint.
    """
    if count < 0 or meet_budget < 0:
        raise ValueError("count and meet_budget must be naturals")
    if horizon < 2 * count * meet_budget:
        raise ValueError(f"horizon must be at least {2 * count * meet_budget}")
    fns: list[dict[int, int]] = []
    design = []
    for alpha in range(count):
        vals: dict[int, int] = {}
        for beta in range(alpha):
            got = 0
            for c in range(meet_budget, horizon):
                if got == meet_budget:
                    break
                if c in vals:
                    continue
                v = fns[beta][c]
                if any(g[c] == v for g in fns if g is not fns[beta]):
                    continue
                vals[c] = v
                design.append([beta, alpha, c])
                got += 1
            if got < meet_budget:
                raise ConstructionExhausted(f"only {got} designated columns for ({beta}, {alpha}) below {horizon}")
        for i in range(horizon):
            if i not in vals:
                taken = {g[i] for g in fns}
                v = 0
                while v in taken:
                    v += 1
                vals[i] = v
        fns.append(vals)
    meta = {"builder": "luzin-basic", "meet_budget": meet_budget, "designated": design}
    return FamilySnapshot.of_fns([PartialFn(v, horizon) for v in fns], horizon, meta)


# ---------------------------------------------------------------------------
# coherent sequences on a finite tree


def coherent_sequence(tree: TreeOrder, horizon: int) -> dict[int, frozenset[int]]:
    """Nested residue classes: c_s contains c_t when s precedes t, and incomparable nodes get disjoint sets.

    Roots split [0, horizon) among themselves; each node's children split its
    set by position modulo max(2, #children), so an only child is a proper subset.
    """
    out: dict[int, frozenset[int]] = {}

    def split(base: list[int], kids: Sequence[int]):
        mod = max(2, len(kids))
        for pos, kid in enumerate(kids):
            piece = base[pos::mod]
            if not piece:
                raise ConstructionExhausted(f"horizon {horizon} too small: node {kid} gets no element")
            out[kid] = frozenset(piece)
            split(piece, tree.children(kid))

    roots = tree.roots()
    if len(roots) == 1:
        r = roots[0]
        if horizon < 1:
            raise ConstructionExhausted("horizon too small for the root")
        out[r] = frozenset(range(horizon))
        split(list(range(horizon)), tree.children(r))
    else:
        split(list(range(horizon)), roots)
    return out
