"""Descending chains through finite posets, driven by dense-set extension rules.

A run starts from a condition and applies rules in a schedule; every step is
re-checked against the order and the rule's predicate.  Four posets are
provided: finite index sets ordered to make a subfamily Luzin, finite
hidden-tree approximations, finite-set/branch pairs for the branch-avoiding
set, and finite partial functions on the k-linked codes.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Any, Callable, Iterable, Mapping, Sequence

from .checkers import SearchExhausted, delta_system_refine
from .core import FamilySnapshot, PartialFn, TreeOrder


class RuleExhausted(Exception):
    """A dense rule found no extension at the current finite scale."""


@dataclass(frozen=True)
class PosetSpec:
    name: str
    leq: Callable[[Any, Any], bool]
    root: Any
    compat: Callable[[Any, Any], bool] | None = None
    serialize: Callable[[Any], Any] = repr


@dataclass(frozen=True)
class DenseRule:
    name: str
    predicate: Callable[[Any], bool]
    extend: Callable[[Any], Any]


@dataclass
class FilterChain:
    steps: list = field(default_factory=list)  # (condition, rule name or None for the start)
    failure: dict | None = None

    @property
    def conditions(self) -> list:
        return [c for c, _ in self.steps]

    @property
    def last(self):
        return self.steps[-1][0]

    @property
    def met(self) -> list[str]:
        return [r for _, r in self.steps if r is not None]

    def to_json(self, poset: PosetSpec) -> dict:
        return {
            "poset": poset.name,
            "steps": [{"rule": r, "condition": poset.serialize(c)} for c, r in self.steps],
            "failure": self.failure,
        }


def apply_rule(poset: PosetSpec, rule: DenseRule, p):
    """One checked application: q <= p with the rule's predicate holding at q."""
    q = p if rule.predicate(p) else rule.extend(p)
    if not poset.leq(q, p):
        raise AssertionError(f"rule {rule.name} produced a condition not below its input")
    if not rule.predicate(q):
        raise AssertionError(f"rule {rule.name} produced a condition outside its dense set")
    return q


def rs_run(poset: PosetSpec, rules: Sequence[DenseRule], start=None, schedule: str = "round-robin", rounds: int = 1, max_steps: int = 100_000) -> FilterChain:
    """Meet the rules along a descending chain.

    round-robin applies every rule in order, ``rounds`` times.  priority
    repeatedly applies the first rule whose predicate fails until all hold.
    On exhaustion the chain so far is returned with the failing rule named.
    """
    p = poset.root if start is None else start
    out = FilterChain([(p, None)])
    if schedule == "round-robin":
        plan: Iterable[DenseRule] = [r for _ in range(rounds) for r in rules]
    elif schedule == "priority":
        plan = None
    else:
        raise ValueError(f"unknown schedule {schedule!r}")
    if plan is not None:
        for rule in plan:
            try:
                p = apply_rule(poset, rule, p)
            except RuleExhausted as exc:
                out.failure = {"rule": rule.name, "step": len(out.steps), "reason": str(exc)}
                return out
            out.steps.append((p, rule.name))
        return out
    for _ in range(max_steps):
        pending = next((r for r in rules if not r.predicate(p)), None)
        if pending is None:
            for r in rules:
                out.steps.append((p, r.name))
            return out
        try:
            p = apply_rule(poset, pending, p)
        except RuleExhausted as exc:
            out.failure = {"rule": pending.name, "step": len(out.steps), "reason": str(exc)}
            return out
        out.steps.append((p, pending.name))
    raise RuleExhausted(f"priority schedule did not settle within {max_steps} steps")


def verify_chain(poset: PosetSpec, chain: FilterChain) -> bool:
    """Reflexivity at every condition and p_j <= p_i for every i < j."""
    conds = chain.conditions
    for c in conds:
        if not poset.leq(c, c):
            return False
    for i, j in combinations(range(len(conds)), 2):
        if not poset.leq(conds[j], conds[i]):
            return False
    return True


# ---------------------------------------------------------------------------
# finite index sets ordered to force Luzin subfamilies


@dataclass(frozen=True)
class LuzinPoset:
    spec: PosetSpec
    kq: Callable[[frozenset], int]
    compatible: Callable[[frozenset, frozenset], bool]
    rules: Callable[[Iterable[int]], list[DenseRule]]


def luzin_poset(fam: FamilySnapshot) -> LuzinPoset:
    """Conditions are finite index sets; p <= q when p grows q and every new alpha
    below an old beta meets it at or above kq(q)."""
    sets = dict(fam.as_sets())
    indices = sorted(sets)

    def check(p):
        bad = set(p) - set(sets)
        if bad:
            raise KeyError(f"indices outside the family: {sorted(bad)}")

    def kq(q) -> int:
        check(q)
        best = -1
        for a, b in combinations(sorted(q), 2):
            common = sets[a] & sets[b]
            if common:
                best = max(best, max(common))
        return best + 1

    def leq(p, q) -> bool:
        check(p)
        check(q)
        p, q = frozenset(p), frozenset(q)
        if not p >= q:
            return False
        k = kq(q)
        for a in p - q:
            for b in q:
                if a < b and not any(x >= k for x in sets[a] & sets[b]):
                    return False
        return True

    def compatible(p, q) -> bool:
        u = frozenset(p) | frozenset(q)
        return leq(u, p) and leq(u, q)

    def rules(deltas: Iterable[int]) -> list[DenseRule]:
        out = []
        for d in deltas:

            def pred(p, d=d):
                return any(g >= d for g in p)

            def ext(p, d=d):
                floor = max(d, max(p, default=-1) + 1)
                for g in indices:
                    if g >= floor:
                        return frozenset(p) | {g}
                raise RuleExhausted(f"no index >= {floor} in the family")

            out.append(DenseRule(f"D_{d}", pred, ext))
        return out

    spec = PosetSpec("luzin", leq, frozenset(), compatible, lambda p: sorted(p))
    return LuzinPoset(spec, kq, compatible, rules)


def cross_compatibility_case(fam: FamilySnapshot, r, s, t) -> dict:
    """Both sides of the compatibility criterion for p = r u s, q = r u t.

    "hypothesis" says whether r, s, t are disjoint, r lies below s u t and
    kq(p) = kq(q).  "compatible" is decided by brute force over every index
    set containing p u q; "cross" is the condition that every a_alpha
    (alpha in s) meets every a_beta (beta in t) at or above the common kq.
    """
    lp = luzin_poset(fam)
    sets = dict(fam.as_sets())
    r, s, t = frozenset(r), frozenset(s), frozenset(t)
    p, q = r | s, r | t
    disjoint = not (r & s or r & t or s & t)
    below = not r or not (s | t) or max(r) < min(s | t)
    k = lp.kq(p)
    hyp = disjoint and below and k == lp.kq(q)
    rest = sorted(set(sets) - (p | q))
    compatible = False
    for size in range(len(rest) + 1):
        for extra in combinations(rest, size):
            cand = p | q | frozenset(extra)
            if lp.spec.leq(cand, p) and lp.spec.leq(cand, q):
                compatible = True
                break
        if compatible:
            break
    cross = all(any(x >= k for x in sets[a] & sets[b]) for a in s for b in t)
    return {"hypothesis": hyp, "compatible": compatible, "cross": cross, "k": k}


def compat_probe(fam: FamilySnapshot, samples: int, size: int, seed: int = 0, want: int | None = None) -> dict:
    """Sample conditions, refine them to a Delta-system and count compatible pairs.  Reported only."""
    lp = luzin_poset(fam)
    rng = random.Random(seed)
    idx = fam.indices
    size = min(size, len(idx))
    conds = [frozenset(rng.sample(idx, size)) for _ in range(samples)]
    want = min(want if want is not None else max(2, samples // 2), len(conds))
    root, positions = frozenset(), []
    while want >= 2:
        try:
            root, positions = delta_system_refine(conds, want, limit=10_000)
            break
        except (SearchExhausted, ValueError):
            want -= 1
    chosen = [conds[i] for i in positions]
    pairs = list(combinations(range(len(chosen)), 2))
    good = sum(1 for i, j in pairs if lp.compatible(chosen[i], chosen[j]))
    return {
        "samples": samples,
        "size": size,
        "refined": len(chosen),
        "root": sorted(root),
        "pairs": len(pairs),
        "compatible_pairs": good,
        "seed": seed,
    }


# ---------------------------------------------------------------------------
# hidden tree approximations


@dataclass(frozen=True)
class HiddenCondition:
    parent: tuple  # sorted (node, parent or None) pairs: the finite tree on T
    h: tuple  # sorted (member index, h value) pairs: the members in play and their cut-offs

    @property
    def tree(self) -> TreeOrder:
        return TreeOrder(dict(self.parent))

    @property
    def nodes(self) -> frozenset:
        return frozenset(n for n, _ in self.parent)

    @property
    def members(self) -> frozenset:
        return frozenset(a for a, _ in self.h)

    @property
    def hmap(self) -> dict:
        return dict(self.h)


@dataclass(frozen=True)
class HiddenTreePoset:
    spec: PosetSpec
    is_condition: Callable[[HiddenCondition], bool]
    rules: Callable[[Iterable[int], int], list[DenseRule]]
    extract_tree: Callable[[FilterChain], tuple]
    tail_of_branch: Callable[[TreeOrder, Mapping[int, int]], dict]


def hidden_tree_poset(fam: FamilySnapshot) -> HiddenTreePoset:
    sets = dict(fam.as_sets())

    def chain_of(tree: TreeOrder, nodes, a, h):
        return sorted((x for x in nodes if x in sets[a] and x >= h), key=tree.depth)

    def is_condition(p: HiddenCondition) -> bool:
        tree = p.tree
        nodes = p.nodes
        for a, h in p.h:
            xs = chain_of(tree, nodes, a, h)
            if not tree.is_chain(xs):
                return False
            for n in xs:
                for k in tree.ancestors(n):
                    if k >= h and k not in sets[a]:
                        return False
        return True

    def leq(p: HiddenCondition, q: HiddenCondition) -> bool:
        pp, qp = dict(p.parent), dict(q.parent)
        # (a) every old node keeps its parent, so old nodes keep all their ancestors
        for n, par in qp.items():
            if n not in pp or pp[n] != par:
                return False
        # (b), (c)
        return p.members >= q.members and all(p.hmap.get(a) == h for a, h in q.h)

    def rules(members: Iterable[int], n_max: int) -> list[DenseRule]:
        out = []
        for a in members:
            if a not in sets:
                raise KeyError(f"no member {a}")

            def pred_a(p, a=a):
                return a in p.members

            def ext_a(p, a=a):
                h = max(p.nodes, default=-1) + 1
                return HiddenCondition(p.parent, tuple(sorted(p.h + ((a, h),))))

            out.append(DenseRule(f"D_{a}", pred_a, ext_a))
            for n in range(n_max):

                def pred_an(p, a=a, n=n):
                    return a in p.members and any(x in sets[a] and x >= n for x in p.nodes)

                def ext_an(p, a=a, n=n):
                    if a not in p.members:
                        p = ext_a(p)
                    others = set().union(*(sets[b] for b in p.members if b != a))
                    floor = max(max(p.nodes, default=-1) + 1, n, p.hmap[a])
                    k = next((x for x in sorted(sets[a]) if x >= floor and x not in others), None)
                    if k is None:
                        raise RuleExhausted(f"no point of member {a} at or above {floor} outside the others")
                    tree = p.tree
                    xs = chain_of(tree, p.nodes, a, p.hmap[a])
                    top = xs[-1] if xs else None
                    return HiddenCondition(tuple(sorted(p.parent + ((k, top),), key=lambda e: e[0])), p.h)

                out.append(DenseRule(f"D_{a},{n}", pred_an, ext_an))
        return out

    def extract_tree(ch: FilterChain):
        last = ch.last
        return last.tree, last.hmap

    def tail_of_branch(tree: TreeOrder, h: Mapping[int, int]) -> dict:
        """Per member: is (a & T) minus its first h points a final segment of a root-to-leaf path?"""
        report = {}
        for a, cut in sorted(h.items()):
            xs = sorted((x for x in tree.nodes if x in sets[a] and x >= cut), key=tree.depth)
            if not xs:
                report[a] = True
                continue
            top = xs[-1]
            path = tree.path_to(top)
            ok = tree.is_chain(xs) and not tree.children(top) and list(path[len(path) - len(xs):]) == xs
            report[a] = ok
        return report

    def serialize(p: HiddenCondition):
        return {"parent": [list(e) for e in p.parent], "h": [list(e) for e in p.h]}

    spec = PosetSpec("hidden-tree", leq, HiddenCondition((), ()), None, serialize)
    return HiddenTreePoset(spec, is_condition, rules, extract_tree, tail_of_branch)


# ---------------------------------------------------------------------------
# finite sets steered inside a coherent branch


@dataclass(frozen=True)
class BranchPoset:
    spec: PosetSpec
    rules: Callable[..., list[DenseRule]]
    extract_a: Callable[[FilterChain], frozenset]
    precondition: Callable[[], list[dict]]


def branch_poset(tree: TreeOrder, c: Mapping[int, frozenset], branch: Sequence[int], foes: Sequence[TreeOrder], horizon: int | None = None) -> BranchPoset:
    """Conditions (a, b): a finite set of naturals, b finite set of nodes of ``branch``.

    p <= q when a and b grow and everything added to a lies in c_t for all t in b_q.
    """
    branch = list(branch)
    if not tree.is_branch(branch) and not tree.is_chain(branch):
        raise ValueError("branch must be a chain of the tree")
    c = {t: frozenset(v) for t, v in c.items()}
    universe = frozenset().union(*c.values()) if c else frozenset()
    if horizon is not None:
        universe = frozenset(range(horizon))

    def meet(b) -> frozenset:
        out = universe
        for t in b:
            out = out & c[t]
        return out

    def leq(p, q) -> bool:
        ap, bp = p
        aq, bq = q
        return ap >= aq and bp >= bq and (ap - aq) <= meet(bq)

    def rules(sizes: int = 0, nodes: Iterable[int] = (), foe_levels: int = 0) -> list[DenseRule]:
        out = []
        for n in range(sizes):

            def pred_size(p, n=n):
                return len(p[0]) > n

            def ext_size(p, n=n):
                a, b = p
                room = sorted(meet(b) - a)
                if len(a) + len(room) <= n:
                    raise RuleExhausted(f"only {len(room)} points left in the current meet")
                return (a | frozenset(room[: n + 1 - len(a)]), b)

            out.append(DenseRule(f"size>{n}", pred_size, ext_size))
        for s in nodes:
            if s not in branch:
                raise ValueError(f"node {s} is not on the branch")

            def pred_node(p, s=s):
                return s in p[1]

            def ext_node(p, s=s):
                return (p[0], p[1] | {s})

            out.append(DenseRule(f"node_{s}", pred_node, ext_node))
        for fi, foe in enumerate(foes):
            T = foe.nodes
            for n in range(foe_levels):

                def pred_foe(p, foe=foe, T=T, n=n):
                    xs = [x for x in p[0] if x >= n and x in T]
                    return any(not foe.comparable(x, y) for x, y in combinations(xs, 2))

                def ext_foe(p, foe=foe, T=T, n=n, fi=fi):
                    a, b = p
                    pool = sorted(x for x in meet(b) if x in T and x >= n)
                    for x, y in combinations(pool, 2):
                        if not foe.comparable(x, y):
                            return (a | {x, y}, b)
                    raise RuleExhausted(f"c-meet above {n} lies on one branch of foe {fi}: {pool}")

                out.append(DenseRule(f"D(foe{fi},{n})", pred_foe, ext_foe))
        return out

    def extract_a(ch: FilterChain) -> frozenset:
        return ch.last[0]

    def precondition() -> list[dict]:
        """Advisory: for each foe and branch node, does c_t & T avoid lying on one foe branch?"""
        out = []
        for fi, foe in enumerate(foes):
            T = foe.nodes
            for t in branch:
                xs = sorted(c[t] & T)
                spread = any(not foe.comparable(x, y) for x, y in combinations(xs, 2))
                out.append({"foe": fi, "node": t, "ok": spread})
        return out

    def serialize(p):
        return {"a": sorted(p[0]), "b": sorted(p[1])}

    spec = PosetSpec("branch", leq, (frozenset(), frozenset()), None, serialize)
    return BranchPoset(spec, rules, extract_a, precondition)


# ---------------------------------------------------------------------------
# finite partial functions on k-linked sets


@dataclass(frozen=True)
class PkPoset:
    spec: PosetSpec
    rules: Callable[..., list[DenseRule]]
    extract_f: Callable[[FilterChain], FamilySnapshot]
    frozen_ok: Callable[[FilterChain], bool]


def _pk_cond(m: Mapping[int, Mapping[int, int]]) -> tuple:
    return tuple(sorted((e, tuple(sorted(s.items()))) for e, s in m.items()))


def pk_poset(E: Sequence[frozenset], k: int) -> PkPoset:
    """Conditions assign a finite function sigma_e with domain inside e to finitely many e.

    p <= q when p has every e of q, each sigma grows, and for e != e' of q the
    common part of sigma_e and sigma_e' is unchanged.
    """
    E = [frozenset(e) for e in E]
    if k < 1:
        raise ValueError("k must be positive")
    horizon = max((max(e, default=-1) for e in E), default=-1) + 1

    def as_map(p) -> dict[int, dict[int, int]]:
        return {e: dict(s) for e, s in p}

    def graphs(p) -> dict[int, frozenset]:
        return {e: frozenset(s) for e, s in p}

    def leq(p, q) -> bool:
        gp, gq = graphs(p), graphs(q)
        if not set(gp) >= set(gq):
            return False
        for e, g in gq.items():
            if not gp[e] >= g:
                return False
        for e, f in combinations(sorted(gq), 2):
            if gp[e] & gp[f] != gq[e] & gq[f]:
                return False
        return True

    def bound(p) -> int:
        return max((i for _, s in p for i, _ in s), default=-1)

    def rules(add: Iterable[int] = (), grow: Iterable[tuple[int, int]] = (), witness: Sequence[tuple[Sequence[Sequence[int]], int]] = ()) -> list[DenseRule]:
        out = []
        for e in add:

            def pred_add(p, e=e):
                return e in dict(p)

            def ext_add(p, e=e):
                m = as_map(p)
                m[e] = {}
                return _pk_cond(m)

            out.append(DenseRule(f"add_{e}", pred_add, ext_add))
        for e, x in grow:
            if x not in E[e]:
                raise ValueError(f"{x} is not in member {e}")

            def pred_grow(p, e=e, x=x):
                return e in dict(p) and x in dict(dict(p)[e])

            def ext_grow(p, e=e, x=x):
                m = as_map(p)
                m.setdefault(e, {})
                taken = {s[x] for f, s in m.items() if f != e and x in s}
                v = 0
                while v in taken:
                    v += 1
                m[e][x] = v
                return _pk_cond(m)

            out.append(DenseRule(f"grow_{e}@{x}", pred_grow, ext_grow))
        for r, (parts, n) in enumerate(witness):
            parts = [list(P) for P in parts]
            if len(parts) != k:
                raise ValueError(f"a witness rule needs {k} parts")

            def pred_w(p, parts=parts, n=n, r=r):
                # a fresh common point (m, 0) above n, one per round: count rounds met so far
                g = graphs(p)
                common = None
                for P in parts:
                    u = set().union(*(g.get(e, frozenset()) for e in P))
                    common = u if common is None else common & u
                return sum(1 for i, v in common if i > n and v == 0) > r

            def ext_w(p, parts=parts, n=n):
                m = as_map(p)
                present = set(m)
                floor = max(bound(p), n) + 1
                for picks in product(*parts):
                    if len(set(picks)) < k or sum(1 for d in picks if d in present) > 1:
                        continue
                    common = frozenset.intersection(*(E[d] for d in picks))
                    cands = sorted(x for x in common if x >= floor)
                    if not cands:
                        continue
                    x = cands[0]
                    for d in picks:
                        m.setdefault(d, {})[x] = 0
                    return _pk_cond(m)
                raise RuleExhausted(f"no choice of members with at most one already present meets beyond {floor - 1}")

            out.append(DenseRule(f"witness_{r}>{n}", pred_w, ext_w))
        return out

    def extract_f(ch: FilterChain) -> FamilySnapshot:
        m = as_map(ch.last)
        members = tuple((e, PartialFn(m[e], horizon)) for e in sorted(m))
        return FamilySnapshot(members, horizon, "fn", {"k": k})

    def frozen_ok(ch: FilterChain) -> bool:
        """Once e and e' are both present, their common graph never changes."""
        final = graphs(ch.last)
        for cond in ch.conditions:
            g = graphs(cond)
            for e, f in combinations(sorted(g), 2):
                if g[e] & g[f] != final[e] & final[f]:
                    return False
        return True

    def serialize(p):
        return [[e, [list(x) for x in s]] for e, s in p]

    spec = PosetSpec("pk", leq, (), None, serialize)
    return PkPoset(spec, rules, extract_f, frozen_ok)
