"""Budgeted checkers and witness finders.

Each checker replaces "finite"/"infinite" by explicit numeric budgets and
reports the budgets it used together with concrete witnesses.
"""
from __future__ import annotations

import logging
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from itertools import combinations, product
from math import comb
from typing import Iterable, Mapping, Sequence

from .core import (
    FamilySnapshot,
    PartialFn,
    TreeOrder,
    intersect,
    points_of,
    sk_level,
    union_family,
)

log = logging.getLogger(__name__)

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"

# defaults for exhaustive searches
EXHAUSTIVE_MEMBERS = 12
EXHAUSTIVE_NODES = 12


class SearchExhausted(Exception):
    """A witness search ran out of candidates at this finite scale."""


def _jsonable(x):
    if isinstance(x, (set, frozenset)):
        return sorted((_jsonable(y) for y in x), key=lambda v: (str(type(v)), v))
    if isinstance(x, (list, tuple)):
        return [_jsonable(y) for y in x]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, PartialFn):
        return [list(p) for p in x.items()]
    return x


@dataclass
class CheckReport:
    verdict: str
    budgets: dict
    witnesses: list = field(default_factory=list)

    def __post_init__(self):
        if self.verdict not in (PASS, FAIL, INCONCLUSIVE):
            raise ValueError(f"bad verdict {self.verdict!r}")

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "budgets": _jsonable(self.budgets), "witnesses": _jsonable(self.witnesses)}


# ---------------------------------------------------------------------------
# intersection properties of families


def almost_disjoint_check(fam: FamilySnapshot, bound: int) -> CheckReport:
    budgets = {"bound": bound}
    worst = None
    for (i, a), (j, b) in combinations(fam.members, 2):
        size = len(intersect(a, b))
        if size > bound:
            return CheckReport(FAIL, budgets, [{"pair": [i, j], "size": size}])
        if worst is None or size > worst[2]:
            worst = (i, j, size)
    if worst is None:
        return CheckReport(PASS, budgets, [{"note": "fewer than two members; vacuous"}])
    return CheckReport(PASS, budgets, [{"note": "exhaustive over all pairs", "largest": {"pair": list(worst[:2]), "size": worst[2]}}])


def _inside_box(pts: Iterable, size: int, kind: str) -> bool:
    if kind == "fn":
        return all(n < size and v < size for n, v in pts)
    return all(x < size for x in pts)


def luzin_witness_check(fam: FamilySnapshot, box_sizes: Sequence[int], count_budget: int) -> CheckReport:
    """For each member and each test box w, count earlier members meeting it only inside w.

    Test sets are initial segments [0, m) for set families and squares m x m
    for function families.
    """
    if not len(fam):
        raise ValueError("empty family")
    budgets = {"box_sizes": list(box_sizes), "count_budget": count_budget}
    worst = (0, None, None)
    for pos, (alpha, a) in enumerate(fam.members):
        meets = [(beta, intersect(a, b)) for beta, b in fam.members[:pos]]
        for m in box_sizes:
            inside = [beta for beta, pts in meets if _inside_box(pts, m, fam.kind)]
            if len(inside) > count_budget:
                return CheckReport(FAIL, budgets, [{"alpha": alpha, "box": m, "earlier": inside}])
            if len(inside) >= worst[0]:
                worst = (len(inside), alpha, m)
    return CheckReport(PASS, budgets, [{"note": "exhaustive over members and boxes", "max_count": worst[0], "at": {"alpha": worst[1], "box": worst[2]}}])


def k_near_luzin_check(fam: FamilySnapshot, parts: Sequence[Iterable[int]], threshold: int) -> CheckReport:
    parts = [sorted(set(p)) for p in parts]
    if any(not p for p in parts):
        raise ValueError("parts must be nonempty")
    seen: set[int] = set()
    for p in parts:
        if seen & set(p):
            raise ValueError("parts overlap")
        seen |= set(p)
    common = None
    for p in parts:
        u = union_family(fam, p)
        pts = u.points if fam.kind == "fn" else u
        common = pts if common is None else common & pts
    budgets = {"k": len(parts), "threshold": threshold, "parts": parts}
    verdict = PASS if len(common) >= threshold else FAIL
    return CheckReport(verdict, budgets, [{"size": len(common), "intersection": sorted(common)}])


def _bitmasks(members: Sequence) -> list[int]:
    index: dict = {}
    masks = []
    for m in members:
        mask = 0
        for p in points_of(m):
            mask |= 1 << index.setdefault(p, len(index))
        masks.append(mask)
    return masks


def _bipartition_scan(masks: Sequence[int], min_part: int):
    """Yield (mask of C, |U C & U D|) for every bipartition with parts >= min_part.

    Member 0 is pinned into D so each split is visited once.
    """
    n = len(masks)
    full = (1 << n) - 1
    unions = [0] * (1 << n)
    for s in range(1, 1 << n):
        low = s & -s
        unions[s] = unions[s ^ low] | masks[low.bit_length() - 1]
    for c in range(2, 1 << n, 2):
        size_c = bin(c).count("1")
        if size_c < min_part or n - size_c < min_part:
            continue
        yield c, bin(unions[c] & unions[full ^ c]).count("1")


def bipartition_min_intersection(fam: FamilySnapshot, min_part: int = 1) -> tuple[int, list[int], list[int]] | None:
    """Smallest |U C & U D| over all bipartitions, exhaustively.  None if no split qualifies."""
    members = [m for _, m in fam]
    if len(members) > 20:
        raise ValueError("exhaustive bipartition scan is limited to 20 members")
    idx = fam.indices
    best = None
    for c, size in _bipartition_scan(_bitmasks(members), min_part):
        if best is None or size < best[0]:
            best = (size, c)
            if size == 0:
                break
    if best is None:
        return None
    c = best[1]
    C = [idx[i] for i in range(len(idx)) if c >> i & 1]
    D = [idx[i] for i in range(len(idx)) if not c >> i & 1]
    return best[0], C, D


def anti_luzin_search(fam: FamilySnapshot, bound: int, exhaustive_limit: int = EXHAUSTIVE_MEMBERS, min_part: int = 1) -> CheckReport:
    """Look for a split of the family into C, D with |U C & U D| <= bound."""
    budgets = {"bound": bound, "exhaustive_limit": exhaustive_limit, "min_part": min_part}
    n = len(fam)
    if n < 2 * max(min_part, 1):
        return CheckReport(INCONCLUSIVE, budgets, [{"note": "too few members for two nonempty groups"}])
    if n <= exhaustive_limit:
        best = bipartition_min_intersection(fam, min_part)
        if best is not None and best[0] <= bound:
            return CheckReport(PASS, budgets, [{"C": best[1], "D": best[2], "size": best[0]}])
        note = {"note": f"exhaustive over {2 ** (n - 1) - 1} bipartitions"}
        if best is not None:
            note["smallest"] = {"C": best[1], "D": best[2], "size": best[0]}
        return CheckReport(FAIL, budgets, [note])
    # heuristic: components of the meeting graph, then index-prefix splits
    idx = fam.indices
    members = [m for _, m in fam]
    pts = [points_of(m) for m in members]
    comp = list(range(n))

    def find(x):
        while comp[x] != x:
            comp[x] = comp[comp[x]]
            x = comp[x]
        return x

    for i, j in combinations(range(n), 2):
        if pts[i] & pts[j]:
            comp[find(i)] = find(j)
    roots = sorted({find(i) for i in range(n)})
    candidates = []
    if len(roots) > 1:
        first = [i for i in range(n) if find(i) == roots[0]]
        candidates.append(first)
    candidates.extend(list(range(cut)) for cut in range(min_part, n - min_part + 1))
    for C in candidates:
        if len(C) < min_part or n - len(C) < min_part:
            continue
        uc = frozenset().union(*(pts[i] for i in C))
        ud = frozenset().union(*(pts[i] for i in range(n) if i not in C))
        if len(uc & ud) <= bound:
            return CheckReport(PASS, budgets, [{"C": [idx[i] for i in C], "D": [idx[i] for i in range(n) if i not in C], "size": len(uc & ud)}])
    return CheckReport(INCONCLUSIVE, budgets, [{"note": "heuristic splits exhausted; family too large for exhaustive search"}])


# ---------------------------------------------------------------------------
# delta systems and the ccc witness machinery


def delta_system_refine(sets: Sequence[Iterable[int]], want: int, limit: int = 200_000) -> tuple[frozenset, list[int]]:
    """Find ``want`` of the sets whose pairwise intersections all equal one root.

    Returns (root, positions of the chosen sets).  Roots are tried in order of
    decreasing size, then lexicographically; within a root the earliest
    positions win.
    """
    sets = [frozenset(s) for s in sets]
    if want < 1 or want > len(sets):
        raise ValueError(f"cannot pick {want} of {len(sets)} sets")
    if want == 1:
        return sets[0], [0]
    roots = {a & b for a, b in combinations(sets, 2)}
    steps = 0
    for root in sorted(roots, key=lambda r: (-len(r), sorted(r))):
        cands = [i for i, s in enumerate(sets) if root <= s]
        if len(cands) < want:
            continue
        petals = {i: sets[i] - root for i in cands}
        chosen: list[int] = []

        def grow(start: int, used: frozenset) -> bool:
            nonlocal steps
            if len(chosen) == want:
                return True
            for pos in range(start, len(cands)):
                if len(chosen) + len(cands) - pos < want:
                    return False
                steps += 1
                if steps > limit:
                    raise SearchExhausted("delta-system search budget exceeded")
                i = cands[pos]
                if petals[i] & used:
                    continue
                chosen.append(i)
                if grow(pos + 1, used | petals[i]):
                    return True
                chosen.pop()
            return False

        if grow(0, frozenset()):
            got = list(chosen)
            assert all(sets[a] & sets[b] == root for a, b in combinations(got, 2))
            return root, got
    raise SearchExhausted(f"no delta-system of size {want}")


def _set_members(fam: FamilySnapshot) -> dict[int, frozenset]:
    return dict(fam.as_sets().members)


def intersection_booster(fam: FamilySnapshot, S: Iterable[int], T: Iterable[int], k: int, keep: int):
    """Find a point above ``k`` shared by at least ``keep`` members from each side.

    Scans every universe point above k and keeps the one maximizing the
    smaller of the two shares (ties: smallest point).  Returns
    (point, S', T') or None when no point qualifies.
    """
    S, T = sorted(set(S)), sorted(set(T))
    if set(S) & set(T):
        raise ValueError("S and T must be disjoint")
    sets = _set_members(fam)
    carriers: dict[int, tuple[list, list]] = defaultdict(lambda: ([], []))
    for a in S:
        for x in sets[a]:
            if x > k:
                carriers[x][0].append(a)
    for b in T:
        for x in sets[b]:
            if x > k and x in carriers:
                carriers[x][1].append(b)
    best = None
    for x in sorted(carriers):
        s_, t_ = carriers[x]
        score = min(len(s_), len(t_))
        if score >= keep and (best is None or score > best[0]):
            best = (score, x, s_, t_)
    if best is None:
        return None
    return best[1], best[2], best[3]


def cross_meeting_pair(fam: FamilySnapshot, tuples: Sequence[Sequence[int]], k: int, keep: int = 1):
    """Iterate the booster over all coordinate pairs of equal-length disjoint tuples.

    Splits ``tuples`` into a first and second half, then refines both halves
    once per (i, j) coordinate pair.  Returns (s, t, points) with
    a_s[i] and a_t[j] sharing points[(i, j)] > k for all i, j, or None.
    """
    tuples = [tuple(t) for t in tuples]
    n = len(tuples[0]) if tuples else 0
    if any(len(t) != n for t in tuples):
        raise ValueError("tuples must have equal length")
    flat = [x for t in tuples for x in t]
    if len(set(flat)) != len(flat):
        raise ValueError("tuples must be pairwise disjoint")
    half = len(tuples) // 2
    E, F = tuples[:half], tuples[half:]
    points = {}
    for i, j in product(range(n), repeat=2):
        if not E or not F:
            return None
        got = intersection_booster(fam, [s[i] for s in E], [t[j] for t in F], k, keep)
        if got is None:
            return None
        x, S2, T2 = got
        points[(i, j)] = x
        S2, T2 = set(S2), set(T2)
        E = [s for s in E if s[i] in S2]
        F = [t for t in F if t[j] in T2]
    if not E or not F:
        return None
    return E[0], F[0], points


# ---------------------------------------------------------------------------
# trees


def splitting_finder(tree: TreeOrder, branches: Sequence[Sequence[int]], keep: int):
    """Incomparable nodes s, t each lying on at least ``keep`` of the branches, or None."""
    for b in branches:
        if not tree.is_branch(b):
            raise ValueError(f"{tuple(b)} is not a maximal chain of the tree")
    load = Counter(x for b in branches for x in set(b))
    heavy = [x for x in tree.bfs_order() if load[x] >= keep]
    for s, t in combinations(heavy, 2):
        if not tree.comparable(s, t):
            return s, t
    return None


def _members_as_node_sets(fam: FamilySnapshot) -> list[tuple[int, frozenset]]:
    return list(fam.as_sets().members)


def tree_family_verify(fam: FamilySnapshot, tree: TreeOrder, exceptions: int) -> CheckReport:
    budgets = {"exceptions": exceptions}
    branches = tree.branches()
    witnesses = []
    for idx, a in _members_as_node_sets(fam):
        stray = a - tree.nodes
        if stray:
            return CheckReport(FAIL, budgets, [{"member": idx, "note": "points outside the tree", "points": sorted(stray)}])
        best = min(((len(a ^ frozenset(b)), b) for b in branches), default=(len(a), ()))
        if best[0] > exceptions:
            return CheckReport(FAIL, budgets, [{"member": idx, "closest_branch": list(best[1]), "difference": best[0]}])
        witnesses.append({"member": idx, "branch": list(best[1]), "difference": best[0]})
    return CheckReport(PASS, budgets, witnesses or [{"note": "empty family"}])


def _laminar_tree(trimmed: Sequence[frozenset], nodes: Iterable[int], rank: Mapping[int, int]) -> TreeOrder | None:
    """Tree on ``nodes`` whose branches include every trimmed member, if one exists."""
    carriers: dict[int, frozenset] = {x: frozenset(i for i, a in enumerate(trimmed) if x in a) for x in nodes}
    sigs = set(carriers.values()) - {frozenset()}
    for p, q in combinations(sigs, 2):
        if p & q and not (p <= q or q <= p):
            return None
    for a, b in combinations(trimmed, 2):
        if a != b and (a < b or b < a):
            return None

    def key(x):
        return (-len(carriers[x]), rank[x])

    parent = {}
    for y in nodes:
        my = carriers[y]
        if not my:
            parent[y] = None
            continue
        preds = [x for x in nodes if x != y and my <= carriers[x] and key(x) < key(y)]
        parent[y] = max(preds, key=key) if preds else None
    return TreeOrder(parent)


def tree_family_search(fam: FamilySnapshot, node_limit: int = EXHAUSTIVE_NODES, exceptions: int = 0, seed: int | None = None, max_steps: int = 1_000_000) -> TreeOrder | None:
    """Backtracking search for a tree order on the union making every member a branch.

    Up to ``exceptions`` points may be dropped from each member; dropped points
    that belong to no other member become isolated roots.  Returns None after
    an exhaustive refutation.  ``seed`` permutes the search order.
    """
    members = [a for _, a in _members_as_node_sets(fam)]
    nodes = sorted(frozenset().union(*members)) if members else []
    if len(nodes) > node_limit:
        raise ValueError(f"{len(nodes)} nodes exceed node_limit={node_limit}")
    order = list(range(len(members)))
    node_order = list(nodes)
    if seed is not None:
        rng = random.Random(seed)
        rng.shuffle(order)
        rng.shuffle(node_order)
    rank = {x: i for i, x in enumerate(node_order)}
    options = []
    for i in order:
        a = sorted(members[i], key=rank.__getitem__)
        opts = [frozenset(a) - frozenset(r) for e in range(min(exceptions, len(a) - 1) + 1) for r in combinations(a, e)]
        options.append((i, opts))
    trimmed: dict[int, frozenset] = {}
    steps = 0

    def consistent() -> bool:
        cur = list(trimmed.values())
        sig: dict[int, set] = defaultdict(set)
        for j, a in enumerate(cur):
            for x in a:
                sig[x].add(j)
        fs = {frozenset(v) for v in sig.values()}
        for p, q in combinations(fs, 2):
            if p & q and not (p <= q or q <= p):
                return False
        return not any(a != b and (a < b or b < a) for a, b in combinations(cur, 2))

    def search(pos: int) -> TreeOrder | None:
        nonlocal steps
        if pos == len(options):
            tree = _laminar_tree([trimmed[i] for i in sorted(trimmed)], nodes, rank)
            if tree is not None and tree_family_verify(fam, tree, exceptions).passed:
                return tree
            return None
        i, opts = options[pos]
        for a in opts:
            steps += 1
            if steps > max_steps:
                raise SearchExhausted("tree search step budget exceeded")
            trimmed[i] = a
            if consistent():
                got = search(pos + 1)
                if got is not None:
                    return got
            del trimmed[i]
        return None

    return search(0)


def weak_tree_verify(fam: FamilySnapshot, tree: TreeOrder, phi: Mapping[int, Sequence[int]], exceptions: int) -> CheckReport:
    budgets = {"exceptions": exceptions}
    for idx, b in phi.items():
        if not tree.is_branch(b):
            raise ValueError(f"phi({idx}) is not a branch of the tree")
    members = dict(_members_as_node_sets(fam))
    if set(members) - set(phi):
        raise ValueError("phi must be defined on every member")
    seen: dict[tuple, int] = {}
    for idx in sorted(members):
        b = tuple(phi[idx])
        if b in seen:
            return CheckReport(FAIL, budgets, [{"note": "phi not injective", "members": [seen[b], idx]}])
        seen[b] = idx
    for (b1, i1), (b2, i2) in combinations(sorted(seen.items(), key=lambda kv: kv[1]), 2):
        if set(b1) & set(b2):
            return CheckReport(FAIL, budgets, [{"note": "branches overlap", "members": [i1, i2]}])
    witnesses = []
    for idx, a in sorted(members.items()):
        off = a - frozenset(phi[idx])
        if len(off) > exceptions:
            return CheckReport(FAIL, budgets, [{"member": idx, "off_branch": sorted(off)}])
        witnesses.append({"member": idx, "off_branch": len(off)})
    return CheckReport(PASS, budgets, witnesses or [{"note": "empty family"}])


def very_weak_tree_verify(fam: FamilySnapshot, tree: TreeOrder, phi: Mapping[int, Sequence[Sequence[int]]], exceptions: int) -> CheckReport:
    """Like weak_tree_verify, but each member maps to a finite set of branches."""
    budgets = {"exceptions": exceptions}
    members = dict(_members_as_node_sets(fam))
    covers = {}
    for idx, bs in phi.items():
        if not all(tree.is_branch(b) for b in bs):
            raise ValueError(f"phi({idx}) contains a non-branch")
        covers[idx] = frozenset().union(*(frozenset(b) for b in bs)) if bs else frozenset()
    for i, j in combinations(sorted(covers), 2):
        if covers[i] & covers[j]:
            return CheckReport(FAIL, budgets, [{"note": "branch sets overlap", "members": [i, j]}])
    for idx, a in sorted(members.items()):
        off = a - covers.get(idx, frozenset())
        if len(off) > exceptions:
            return CheckReport(FAIL, budgets, [{"member": idx, "off_branches": sorted(off)}])
    return CheckReport(PASS, budgets, [{"note": "all members covered", "members": sorted(members)}])


def hidden_reduce(fam: FamilySnapshot, T: Iterable[int], min_size: int = 1) -> FamilySnapshot:
    """Traces a & T of the members, dropping traces smaller than ``min_size``."""
    T = frozenset(T)
    sets = fam.as_sets()
    kept = tuple((i, a & T) for i, a in sets if len(a & T) >= min_size)
    return FamilySnapshot(kept, sets.universe_horizon, "set", fam.meta)


# ---------------------------------------------------------------------------
# k-linked systems


def splitting_level(strings: Sequence[str]) -> int:
    """Least n at which the given strings have pairwise distinct restrictions to n."""
    if len(set(strings)) != len(strings):
        raise ValueError("strings must be distinct")
    n = 0
    while len({s[:n] for s in strings}) < len(strings):
        n += 1
    return n


def linkage_check(E: Sequence[frozenset], k: int, t_inf: int, t_fin: int) -> CheckReport:
    """Every k members share >= t_inf points and every k+1 share <= t_fin points."""
    E = [frozenset(e) for e in E]
    if len(set(E)) != len(E):
        raise ValueError("members must be distinct")
    if k + 1 > len(E):
        raise ValueError(f"need at least {k + 1} members")
    budgets = {"k": k, "t_inf": t_inf, "t_fin": t_fin}
    smallest = None
    for combo in combinations(range(len(E)), k):
        size = len(frozenset.intersection(*(E[i] for i in combo)))
        if size < t_inf:
            return CheckReport(FAIL, budgets, [{"subset": list(combo), "size": size, "note": f"{k}-wise intersection too small"}])
        if smallest is None or size < smallest[1]:
            smallest = (combo, size)
    largest = None
    for combo in combinations(range(len(E)), k + 1):
        size = len(frozenset.intersection(*(E[i] for i in combo)))
        if size > t_fin:
            return CheckReport(FAIL, budgets, [{"subset": list(combo), "size": size, "note": f"{k + 1}-wise intersection too large"}])
        if largest is None or size > largest[1]:
            largest = (combo, size)
    return CheckReport(PASS, budgets, [
        {"note": f"exhaustive over {k}- and {k + 1}-subsets"},
        {"smallest_k": {"subset": list(smallest[0]), "size": smallest[1]}},
        {"largest_k1": {"subset": list(largest[0]), "size": largest[1]}},
    ])


@dataclass
class AccumulationSplit:
    classes: list[list[int]]
    prefixes: list[str]
    level: int
    bound: int
    intersection: frozenset

    def to_json(self) -> dict:
        return {"classes": self.classes, "prefixes": self.prefixes, "level": self.level,
                "bound": self.bound, "size": len(self.intersection)}


def accumulation_split(E: Sequence[frozenset], strings: Sequence[str], k: int) -> AccumulationSplit:
    """Split members into k+1 prefix classes whose unions share only low-level codes.

    Uses the least level n with at least k+1 distinct prefixes and the k+1
    largest classes there.  The common part of the class unions is checked to
    consist of codes below level n and to have at most sum_{j<n} C(2^j, k)
    elements.
    """
    if len(E) != len(strings):
        raise ValueError("one source string per member")
    depth = min((len(s) for s in strings), default=0)
    for n in range(depth + 1):
        groups: dict[str, list[int]] = defaultdict(list)
        for i, s in enumerate(strings):
            groups[s[:n]].append(i)
        if len(groups) >= k + 1:
            break
    else:
        raise ValueError(f"fewer than {k + 1} distinct prefixes at every level up to {depth}")
    chosen = sorted(groups.items(), key=lambda kv: (-len(kv[1]), kv[0]))[: k + 1]
    chosen.sort(key=lambda kv: kv[0])
    unions = [frozenset().union(*(E[i] for i in idx)) for _, idx in chosen]
    common = frozenset.intersection(*unions)
    bound = sum(comb(2**j, k) for j in range(n))
    if len(common) > bound or any(sk_level(k, c) >= n for c in common):
        raise AssertionError(f"split at level {n} not certified: {len(common)} > {bound}")
    return AccumulationSplit([idx for _, idx in chosen], [p for p, _ in chosen], n, bound, common)
