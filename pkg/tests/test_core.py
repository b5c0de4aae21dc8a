from itertools import combinations

import pytest
from hypothesis import given, strategies as st

from adfam.core import (
    TOP,
    FamilySnapshot,
    PartialFn,
    PlaneSet,
    SubsetAssignment,
    TreeOrder,
    binary_tree,
    chain_tree,
    decode_pair,
    dumps,
    encode_pair,
    family_from_json,
    family_to_json,
    fat_width,
    free_count,
    intersect,
    is_fat,
    pi_col,
    pi_restrict,
    sk_decode,
    sk_encode,
    tight_function,
    tree_from_json,
    tree_to_json,
    union_family,
)


def diagonal_order(limit):
    """Pairs listed anti-diagonal by anti-diagonal, first coordinate increasing."""
    out = []
    s = 0
    while len(out) < limit:
        for n in range(s + 1):
            out.append((n, s - n))
        s += 1
    return out[:limit]


def code_table(k, max_level):
    """All k-sets of level strings, in level order then lexicographic order of sorted tuples."""
    out = []
    for level in range(max_level + 1):
        strs = sorted(format(v, f"0{level}b") if level else "" for v in range(2**level))
        out.extend((level, c) for c in combinations(strs, k))
    return out


# --- pairing ---------------------------------------------------------------


def test_pairing_matches_diagonal_enumeration():
    for m, pair in enumerate(diagonal_order(300)):
        assert encode_pair(*pair) == m
        assert decode_pair(m) == pair


def test_pairing_examples():
    assert encode_pair(0, 0) == 0
    assert encode_pair(0, 1) == 1
    assert encode_pair(1, 0) == 2
    assert decode_pair(encode_pair(7, 5)) == (7, 5)


@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_pairing_round_trip(n, j):
    assert decode_pair(encode_pair(n, j)) == (n, j)


def test_pairing_rejects_negatives():
    with pytest.raises(ValueError):
        encode_pair(-1, 0)
    with pytest.raises(ValueError):
        decode_pair(-3)


# --- S_k codes -------------------------------------------------------------


@pytest.mark.parametrize("k", [1, 2, 3])
def test_sk_codes_match_enumeration(k):
    for code, (level, strs) in enumerate(code_table(k, 4)):
        assert sk_encode(k, level, strs) == code
        assert sk_decode(k, code) == (level, strs)


def test_sk_examples():
    assert sk_encode(2, 1, {"0", "1"}) == 0
    assert sk_encode(2, 2, {"00", "01"}) == 1
    level2 = [sk_encode(2, 2, c) for c in combinations(["00", "01", "10", "11"], 2)]
    assert sorted(level2) == [1, 2, 3, 4, 5, 6]


def test_sk_rejects_bad_input():
    with pytest.raises(ValueError):
        sk_encode(2, 2, ["00", "00"])
    with pytest.raises(ValueError):
        sk_encode(2, 2, ["00", "1"])
    with pytest.raises(ValueError):
        sk_encode(2, 2, ["00"])
    with pytest.raises(ValueError):
        sk_encode(3, 1, ["0", "1", "0"])


@given(st.integers(1, 3), st.integers(0, 400))
def test_sk_decode_encode_round_trip(k, code):
    level, strs = sk_decode(k, code)
    assert len(strs) == k and all(len(s) == level for s in strs)
    assert sk_encode(k, level, strs) == code


# --- members and plane sets ------------------------------------------------


def test_partial_fn_basics():
    f = PartialFn({0: 3, 2: 5}, 4)
    assert f[2] == 5 and 1 not in f and f.get(1) is None
    assert f.graph == {(0, 3), (2, 5)}
    assert f.restrict(1, 4).items() == [(2, 5)]
    assert not f.is_total_below(3)
    with pytest.raises(ValueError):
        PartialFn({5: 1}, 4)
    with pytest.raises(ValueError):
        f.extended({0: 4})


def test_intersect_examples():
    assert intersect(frozenset({1, 2, 3}), frozenset({3, 4})) == {3}
    a = frozenset({1, 5})
    assert intersect(a, a) == a
    ident = PartialFn({i: i for i in range(10)}, 10)
    shifted = PartialFn({i: i + 1 for i in range(10)}, 10)
    assert intersect(ident, shifted) == frozenset()


def test_union_family_examples():
    fam = FamilySnapshot.of_sets([{0}, {1}], 2)
    assert union_family(fam, [0]) == {0}
    assert union_family(fam, [0, 1]) == {0, 1}
    with pytest.raises(KeyError):
        union_family(fam, [5])


def test_union_of_ad_functions_has_tall_columns():
    H = 30
    fns = [PartialFn({i: (i * (a + 1)) % 97 if i >= 4 else 0 for i in range(H)}, H) for a in range(3)]
    fam = FamilySnapshot.of_fns(fns, H)
    U = union_family(fam, [0, 1, 2])
    tall = [n for n in range(H) if len(pi_col(U, n)) >= 3]
    # the members agree only at columns below 4 (and at 0 mod 97 coincidences)
    assert tall == [n for n in range(1, H) if len({(n * (a + 1)) % 97 for a in range(3)}) == 3 and n >= 4]
    assert is_fat(U, 3, 4)[0]


def test_pi_col_and_restrict():
    F = PlaneSet({(0, 1), (0, 2), (3, 5)}, 4)
    assert pi_col(F, 0) == {1, 2}
    assert pi_col(F, 1) == frozenset()
    assert pi_col(F, 3) == {5}
    assert pi_restrict(F, {0}).points == {(0, 1), (0, 2)}
    assert pi_restrict(F, set()).points == frozenset()
    assert pi_restrict(F, {0, 1, 2, 3}) == F
    with pytest.raises(ValueError):
        pi_col(F, 4)


def test_is_fat_examples():
    tri = PlaneSet({(n, j) for n in range(20) for j in range(n)}, 20)
    ok, col = is_fat(tri, 5, 10)
    assert ok and col == 10
    g = PlaneSet.from_graphs([PartialFn({i: i for i in range(10)}, 10)])
    assert not is_fat(g, 2, 0)[0]
    assert fat_width(g) == 1
    with pytest.raises(ValueError):
        is_fat(tri, 1, 20)


def test_plane_set_rejects_column_beyond_horizon():
    with pytest.raises(ValueError):
        PlaneSet({(5, 0)}, 5)


# --- tight functions and freeness ------------------------------------------


def test_tight_function_examples():
    sample = [PartialFn({0: 7, 1: i}, 2) for i in range(4)]
    s = tight_function(sample, 2, 2)
    assert s[0] == 7 and s[1] is TOP
    assert s[5] is TOP
    tie = [PartialFn({0: 5}, 1)] * 3 + [PartialFn({0: 9}, 1)] * 3
    assert tight_function(tie, 1, 3)[0] == 5
    with pytest.raises(ValueError):
        tight_function(sample, 2, 1)
    with pytest.raises(ValueError):
        tight_function(sample, 3, 2)


def test_free_count_examples():
    sample = [PartialFn({0: i}, 1) for i in range(10)]
    assert free_count(sample, PartialFn({}, 0)) == 10
    assert free_count(sample, PartialFn({0: 5}, 1)) == 9


fn_lists = st.lists(st.lists(st.integers(0, 3), min_size=4, max_size=4), min_size=2, max_size=8)


@given(fn_lists, st.integers(2, 4), st.dictionaries(st.integers(0, 3), st.integers(0, 3)))
def test_tight_function_and_freeness(rows, tau, sig):
    sample = [PartialFn(dict(enumerate(r)), 4) for r in rows]
    s = tight_function(sample, 4, tau)
    for i in range(4):
        counts = {}
        for r in rows:
            counts[r[i]] = counts.get(r[i], 0) + 1
        top = max(counts.values())
        if s[i] is TOP:
            assert top < tau
        else:
            assert counts[s[i]] == top >= tau
            assert s[i] == min(v for v, c in counts.items() if c == top)
    sigma = PartialFn(sig, 4)
    brute = sum(1 for g in sample if all(g[i] != v for i, v in sig.items()))
    assert free_count(sample, sigma) == brute


# --- families, trees, assignments -------------------------------------------


def test_family_invariants():
    with pytest.raises(ValueError):
        FamilySnapshot(((1, frozenset()), (0, frozenset())), 3, "set")
    with pytest.raises(ValueError):
        FamilySnapshot(((0, frozenset({5})),), 3, "set")
    with pytest.raises(TypeError):
        FamilySnapshot(((0, frozenset({1})),), 3, "fn")


def test_family_as_sets_uses_pairing():
    fam = FamilySnapshot.of_fns([PartialFn({0: 1, 1: 0}, 2)])
    assert fam.as_sets().member(0) == {encode_pair(0, 1), encode_pair(1, 0)}


@given(st.lists(st.dictionaries(st.integers(0, 9), st.integers(0, 20)), max_size=5))
def test_family_json_round_trip(rows):
    fam = FamilySnapshot.of_fns([PartialFn(r, 10) for r in rows], 10, {"note": "x"})
    text = dumps(family_to_json(fam))
    back = family_from_json(__import__("json").loads(text))
    assert back == fam and back.meta == fam.meta
    assert dumps(family_to_json(back)) == text


def test_tree_order_basics():
    t = binary_tree(2)
    assert t.roots() == [0]
    assert t.children(0) == (1, 2)
    assert t.precedes(0, 6) and not t.precedes(6, 0)
    assert t.comparable(1, 4) and not t.comparable(1, 2)
    assert t.branches() == [(0, 1, 3), (0, 1, 4), (0, 2, 5), (0, 2, 6)]
    assert t.is_branch([0, 2, 6]) and not t.is_branch([0, 2])
    assert tree_from_json(tree_to_json(t)) == t
    assert chain_tree([4, 2, 9]).path_to(9) == (4, 2, 9)
    with pytest.raises(ValueError):
        TreeOrder({0: 1, 1: 0})


def test_subset_assignment():
    a = SubsetAssignment({3: {0, 2}})
    assert a[3] == {0, 2} and a[1] == frozenset()
    with pytest.raises(ValueError):
        SubsetAssignment({2: {2}})
    assert SubsetAssignment.initial_segments(3)[2] == {0, 1}
