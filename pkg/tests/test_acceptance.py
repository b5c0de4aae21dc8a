"""Acceptance criteria, one test each.  Every test prints a single PASS/FAIL line.

Criterion 7 asks for ten witness rounds from six members, which the order on
the pk poset does not allow; it is run as stated and is expected to fail.
"""
import random
import time
from itertools import combinations
from math import comb
from pathlib import Path

import pytest

from adfam.checkers import (
    accumulation_split,
    almost_disjoint_check,
    bipartition_min_intersection,
    k_near_luzin_check,
    linkage_check,
    luzin_witness_check,
)
from adfam.cli import main
from adfam.constructions import (
    build_family_07,
    build_family_32,
    build_family_59,
    build_luzin_basic,
    coherent_sequence,
    extend_function_25,
    extension_properties,
    hajnal_family,
    luzin_budget_59,
    prefix_parts,
)
from adfam.core import FamilySnapshot, PartialFn, PlaneSet, SubsetAssignment, binary_tree, is_fat
from adfam.forcing import hidden_tree_poset, luzin_poset, pk_poset, cross_compatibility_case, rs_run, verify_chain


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, elapsed, limit, detail=""):
        ok = bool(ok) and elapsed < limit
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {title} ({elapsed:.2f}s, limit {limit}s){' ' + detail if detail else ''}"
        with capsys.disabled():
            print("\n" + line)
        return ok

    return emit


def random_strings(seed, count, depth):
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        s = "".join(rng.choice("01") for _ in range(depth))
        if s not in out:
            out.append(s)
    return out


def splitting(f, g):
    return next(i for i in range(len(f)) if f[i] != g[i]) + 1


# 1 -------------------------------------------------------------------------


def test_criterion_1_linked_codes(verdict):
    t0 = time.perf_counter()
    k, d = 2, 12
    strings = random_strings(7, 16, d)
    E = hajnal_family(k, strings, d)
    b = max(splitting(f, g) for f, g in combinations(strings, 2))
    t_fin = sum(comb(2**j, k) for j in range(b))
    linked = linkage_check(E, k, d - b, t_fin)
    split = accumulation_split(E, strings, k)
    unions = [frozenset().union(*(E[i] for i in cls)) for cls in split.classes]
    common = frozenset.intersection(*unions)
    ok = (
        linked.passed
        and len(split.classes) == k + 1
        and common == split.intersection
        and len(common) <= sum(comb(2**j, k) for j in range(split.level))
    )
    detail = f"t_inf={d - b} t_fin={t_fin} split_level={split.level} common={len(common)}"
    assert verdict(1, "linked code family and certified split", ok, time.perf_counter() - t0, 10, detail)


# 2 -------------------------------------------------------------------------


def engine_instance(seed):
    """A random a.d. family with subfamilies roomy enough for J - n avoiders plus spent members."""
    rng = random.Random(seed)
    J = rng.randint(3, 10)
    size = rng.randint(min(15, J + 3), 15)
    H = 32 * (J + 2)
    C = [PartialFn({i: rng.randrange(3 * size) for i in range(H)}, H) for _ in range(size)]
    C_n = [sorted(rng.sample(range(size), rng.randint(min(size, J - n + 3), size))) for n in range(rng.randint(1, min(4, J)))]
    F_n = [PlaneSet.from_graphs([C[g] for g in s], H) for s in C_n]
    return C, C_n, F_n, J


def test_criterion_2_extension_engine(verdict):
    t0 = time.perf_counter()
    failures = []
    for seed in range(20):
        C, C_n, F_n, J = engine_instance(seed)
        assert len(C) <= 15 and J <= 10
        assert all(is_fat(F, J + 1, 0)[0] for F in F_n)
        f, trace = extend_function_25(C, C_n, F_n, J, policy="finite")
        props = extension_properties(f, trace, C, C_n, F_n)
        marks = trace.marks
        for g, entry in props["used_up"].items():
            cols = [i for i, v in f.items() if C[g].get(i) == v]
            if not all(i <= marks[trace.entered[g]] for i in cols):
                failures.append((seed, "prop4", g))
        for n, F in enumerate(F_n):
            if len(f.graph & F.points) < J - n:
                failures.append((seed, "prop5", n))
            m = marks[n]
            vals = {f[i] for i in range(m)}
            free = [g for g in C_n[n] if all(i < m and v in vals for i, v in f.items() if C[g].get(i) == v)]
            if len(free) < J - n or len(free) != props["free"][n]:
                failures.append((seed, "prop6", n))
    ok = not failures
    assert verdict(2, "staged extension engine on 20 random instances", ok, time.perf_counter() - t0, 30, str(failures[:3]) if failures else "")


# 3 -------------------------------------------------------------------------


def boxes_hold(fns, alpha, members, box, free):
    inside = [g for g in members if all(i < box and v < box for i, v in fns[alpha].graph & fns[g].graph)]
    return len(inside) >= free


def test_criterion_3_assignment_builders(verdict):
    t0 = time.perf_counter()
    J, B = 8, 6
    problems = []

    assign = SubsetAssignment.initial_segments(B)
    fam = build_family_07(B, assign, J)
    fns = [f for _, f in fam]
    if not almost_disjoint_check(fam, fam.meta["agreement_bound"]).passed:
        problems.append("thm07 a.d.")
    for entry in fam.meta["log"]:
        alpha = entry["alpha"]
        for t in entry["targets"]:
            S = sorted(assign[t["beta"]])
            union = frozenset().union(*(fns[g].graph for g in S))
            if len(fns[alpha].graph & union) < J - t["position"]:
                problems.append(f"thm07 hits {alpha}/{t['beta']}")
            if not boxes_hold(fns, alpha, S, t["box"], t["free"]):
                problems.append(f"thm07 box {alpha}/{t['beta']}")

    assign = SubsetAssignment({2: {0, 1}, 5: {3, 4}})
    fam, registry = build_family_32(B, assign, 2, J)
    fns = [f for _, f in fam]
    if not almost_disjoint_check(fam, fam.meta["agreement_bound"]).passed:
        problems.append("thm32 a.d.")
    for entry in fam.meta["log"]:
        alpha = entry["alpha"]
        for tag, t in entry["targets"].items():
            plane = registry.get(tag).plane.points
            if len(fns[alpha].graph & plane) < J - t["position"]:
                problems.append(f"thm32 hits {alpha}/{tag}")
        for bx in entry["boxes"]:
            if not boxes_hold(fns, alpha, sorted(assign[bx["beta"]]), bx["box"], bx["free"]):
                problems.append(f"thm32 box {alpha}/{bx['beta']}")
    tuple_union = frozenset().union(fns[0].graph, fns[1].graph) & frozenset().union(fns[3].graph, fns[4].graph)
    if len(fns[5].graph & tuple_union) < J:
        problems.append("thm32 tuple")
    for e in registry.tracked:
        if not is_fat(PlaneSet(e.plane.points, e.plane.horizon), e.width, e.start)[0]:
            problems.append(f"registry {e.tag}")
    ok = not problems
    assert verdict(3, "assignment-driven builders and registry", ok, time.perf_counter() - t0, 60, str(problems[:3]) if problems else "")


# 4 and 5 -------------------------------------------------------------------


@pytest.fixture(scope="module")
def luzin_family():
    strings = random_strings(1, 10, 14)
    return strings, build_family_59(strings, 14)


def test_criterion_4_luzin_builder(verdict, luzin_family):
    t0 = time.perf_counter()
    strings, fam = luzin_family
    boxes = list(range(6))
    luzin = luzin_witness_check(fam, boxes, luzin_budget_59(max(boxes)))
    near = k_near_luzin_check(fam, prefix_parts(strings, 3), 14 // 2)
    ok = luzin.passed and near.verdict == "fail"
    detail = f"luzin={luzin.verdict} 3-near size={near.witnesses[0]['size']}"
    assert verdict(4, "Luzin builder is Luzin and not 3-near-Luzin", ok, time.perf_counter() - t0, 30, detail)


def test_criterion_5_luzin_implies_near_luzin(verdict, luzin_family):
    t0 = time.perf_counter()
    _, fam59 = luzin_family
    checked = []
    basic = build_luzin_basic(12, 4, 96)
    for fam in (fam59, basic):
        if not luzin_witness_check(fam, list(range(6)), 5).passed:
            continue
        for sub in combinations(fam.indices, 10):
            small = fam.sub(sub)
            got = bipartition_min_intersection(small)
            checked.append(got[0])
    ok = bool(checked) and min(checked) >= 1
    detail = f"subfamilies={len(checked)} smallest={min(checked) if checked else None}"
    assert verdict(5, "Luzin families are near-Luzin on every 10-member subfamily", ok, time.perf_counter() - t0, 30, detail)


# 6 -------------------------------------------------------------------------


def cross_instances(count, seed=0):
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        n = rng.randint(4, 8)
        sets = [frozenset(rng.sample(range(12), rng.randint(1, 5))) for _ in range(n)]
        fam = FamilySnapshot.of_sets(sets, 12)
        cut = rng.randint(0, n - 2)
        r = frozenset(rng.sample(range(cut), rng.randint(0, min(2, cut))))
        upper = list(range(cut, n))
        rng.shuffle(upper)
        s_size = rng.randint(1, len(upper) - 1)
        s = frozenset(upper[:s_size])
        t = frozenset(upper[s_size : s_size + rng.randint(1, len(upper) - s_size)])
        case = cross_compatibility_case(fam, r, s, t)
        if case["hypothesis"]:
            out.append(case)
    return out


def test_criterion_6_forcing_engine(verdict):
    t0 = time.perf_counter()
    fam = build_luzin_basic(10, 2, 40).as_sets()
    ht = hidden_tree_poset(fam)
    rules = ht.rules(range(10), 5)
    chain = rs_run(ht.spec, rules)
    tree, h = ht.extract_tree(chain)
    tails = ht.tail_of_branch(tree, h)
    hidden_ok = (
        chain.failure is None
        and verify_chain(ht.spec, chain)
        and all(rule.predicate(chain.last) for rule in rules)
        and set(tails) == set(range(10))
        and all(tails.values())
    )

    lp = luzin_poset(fam)
    n = len(fam)
    top_extends = all(
        lp.spec.leq(p | {beta}, p)
        for size in range(n)
        for p in map(frozenset, combinations(range(n), size))
        for beta in range(max(p, default=-1) + 1, n)
    )
    cases = cross_instances(100)
    cross_ok = all(c["compatible"] == c["cross"] for c in cases)
    both = {c["cross"] for c in cases}
    ok = hidden_ok and top_extends and cross_ok
    detail = f"hidden={hidden_ok} top_extends={top_extends} cross={cross_ok} cross_values={sorted(both)}"
    assert verdict(6, "hidden-tree run and Luzin-poset compatibility", ok, time.perf_counter() - t0, 30, detail)


# 7 -------------------------------------------------------------------------


def pk_run(count, parts, depth, rounds, seed=1):
    E = hajnal_family(2, random_strings(seed, count, depth), depth)
    pk = pk_poset(E, 2)
    chain = rs_run(pk.spec, pk.rules(witness=[(parts, 0)] * rounds))
    fam = pk.extract_f(chain)
    return pk, chain, fam


def test_criterion_7_pk_witness_rounds(verdict):
    t0 = time.perf_counter()
    parts = [[0, 1, 2], [3, 4, 5]]
    pk, chain, fam = pk_run(6, parts, 12, 10)
    near = k_near_luzin_check(fam, parts, 10)
    ok = (
        chain.failure is None
        and verify_chain(pk.spec, chain)
        and pk.frozen_ok(chain)  # intersections never grow once both members are present
        and near.passed
    )
    detail = f"failure={chain.failure['rule'] if chain.failure else None} common={near.witnesses[0]['size']}"
    assert verdict(7, "pk poset: 6 members, 10 witness rounds", ok, time.perf_counter() - t0, 10, detail)


def test_criterion_7_variant_eleven_members(verdict):
    t0 = time.perf_counter()
    parts = [[0], list(range(1, 11))]
    pk, chain, fam = pk_run(11, parts, 14, 10)
    near = k_near_luzin_check(fam, parts, 10)
    ok = chain.failure is None and verify_chain(pk.spec, chain) and pk.frozen_ok(chain) and near.passed
    detail = f"common={near.witnesses[0]['size']}"
    assert verdict("7 (variant)", "pk poset: 11 members, 10 witness rounds", ok, time.perf_counter() - t0, 10, detail)


# 8 -------------------------------------------------------------------------


def test_criterion_8_coherent_sequence(verdict):
    t0 = time.perf_counter()
    tree = binary_tree(4)
    c = coherent_sequence(tree, 64)
    bad = 0
    for s, t in combinations(sorted(tree.nodes), 2):
        if tree.precedes(s, t):
            bad += not c[s] > c[t]
        elif tree.precedes(t, s):
            bad += not c[t] > c[s]
        else:
            bad += bool(c[s] & c[t])
    assert verdict(8, "coherent sequence dichotomy", bad == 0, time.perf_counter() - t0, 1, f"exceptions={bad}")


# 9 -------------------------------------------------------------------------


PIPELINE = [
    ["construct", "hajnal", "--k", "2", "--strings", "16", "--depth", "12", "--out", "hajnal.json"],
    ["construct", "thm07", "--count", "6", "--stages", "8", "--out", "thm07.json"],
    ["construct", "thm32", "--count", "6", "--stages", "8", "--assign", '{"2": [0, 1], "5": [3, 4]}', "--out", "thm32.json"],
    ["construct", "thm59", "--strings", "10", "--depth", "14", "--out", "thm59.json"],
    ["construct", "luzin-basic", "--count", "10", "--meet-budget", "2", "--out", "basic.json"],
    ["construct", "coherent", "--depth", "4", "--horizon", "64", "--out", "coherent.json"],
    ["check", "linkage", "hajnal.json", "--k", "2", "--out", "linkage.json"],
    ["check", "ad", "thm07.json", "--budget.bound", "64", "--out", "ad.json"],
    ["check", "luzin", "thm59.json", "--budget.boxes", "[0, 1, 2, 3, 4, 5]", "--budget.count", "5", "--out", "luzin.json"],
    ["check", "knear", "thm59.json", "--prefix-parts", "3", "--budget.threshold", "7", "--out", "knear.txt", "--format", "text"],
    ["force", "hiddentree", "--family", "basic.json", "--out", "hidden.json"],
    ["force", "luzin", "--family", "basic.json", "--out", "lchain.json"],
    ["force", "pk", "--count", "11", "--depth", "14", "--rounds", "3", "--out", "pk.json"],
    ["force", "branch", "--foe", "binary", "--out", "branch.json"],
]


def run_pipeline(root: Path) -> dict:
    root.mkdir()
    codes = []
    for argv in PIPELINE:
        argv = [str(root / a) if a.endswith((".json", ".txt")) else a for a in argv]
        codes.append(main(argv + ["--seed", "1234"]))
    files = {p.name: p.read_bytes() for p in sorted(root.iterdir())}
    return {"codes": codes, "files": files}


def test_criterion_9_determinism(verdict, tmp_path):
    t0 = time.perf_counter()
    first = run_pipeline(tmp_path / "first")
    second = run_pipeline(tmp_path / "second")
    same = first["files"] == second["files"] and first["codes"] == second["codes"]
    ok = same and len(first["files"]) >= len(PIPELINE)
    detail = f"files={len(first['files'])} exit_codes={first['codes']}"
    assert verdict(9, "byte-identical replay with a fixed seed", ok, time.perf_counter() - t0, 60, detail)
