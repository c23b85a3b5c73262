import json

import pytest
from hypothesis import given, settings, strategies as st

from msearch.enumeration import (
    MODE_INT,
    MODE_RAT,
    Series,
    TreeCountTable,
    _conv_schoolbook,
    _tree_counts_lockstep,
    _tree_counts_newton,
    brute_force_count,
    convolve,
    convolve_int,
    float_mode,
    load_table,
    save_table,
    tree_counts,
)


def test_counts_m2():
    t = tree_counts(2, 4)
    assert t.counts == [1, 1, 2, 5, 14]

def test_counts_m3():
    t = tree_counts(3, 4)
    assert t.counts == [1, 1, 1, 3, 6]

def test_counts_m5_trivial_range():
    t = tree_counts(5, 3)
    assert t.counts == [1, 1, 1, 1]

@pytest.mark.parametrize("m", [2, 3, 4])
def test_brute_force_oracle(m):
    t = tree_counts(m, 8)
    for n in range(9):
        assert t.counts[n] == brute_force_count(m, n), (m, n)

def test_brute_force_anchors():
    assert brute_force_count(2, 3) == 5
    assert brute_force_count(3, 2) == 1
    assert brute_force_count(3, 4) == 6

def test_brute_force_rejects_large_n():
    with pytest.raises(ValueError):
        brute_force_count(2, 10)

@pytest.mark.parametrize("m", [2, 3, 5])
def test_newton_matches_lockstep(m):
    N = 300
    cl, pl = _tree_counts_lockstep(m, N)
    cn, pn = _tree_counts_newton(m, N)
    assert cl == cn
    for k in range(1, m + 1):
        assert pl[k] == pn[k]

def test_conv_cache_reproduces_counts():
    for m in (2, 3, 4):
        t = tree_counts(m, 40)
        for n in range(m - 1, 41):
            assert t.conv_cache[m][n - (m - 1)] == t.counts[n]

def test_split_law_normalizes():
    # sum over compositions of tau products equals tau_n (so the split
    # probabilities sum to 1)
    for m in (2, 3):
        t = tree_counts(m, 12)
        for n in range(m - 1, 13):
            R = n - (m - 1)
            total = 0
            def rec(slots, rem, acc):
                nonlocal total
                if slots == 1:
                    total += acc * t.counts[rem]
                    return
                for j in range(rem + 1):
                    rec(slots - 1, rem - j, acc * t.counts[j])
            rec(m, R, 1)
            assert total == t.counts[n]

def test_counts_monotone():
    for m in (2, 3, 4):
        t = tree_counts(m, 60)
        for n in range(60):
            assert t.counts[n + 1] >= t.counts[n]
        assert all(c > 0 for c in t.counts)

def test_convolve_examples():
    one_plus_z = Series([1, 1], MODE_INT)
    sq = convolve(one_plus_z, one_plus_z, 2)
    assert sq.coeffs == [1, 2, 1]

    t = tree_counts(2, 3)
    tau = Series(t.counts, MODE_INT)
    cat = convolve(tau, tau, 3)
    assert cat.coeffs == [1, 2, 5, 14]

    ident = Series([1, 0, 0], MODE_INT)
    s = Series([3, 1, 4, 1], MODE_INT)
    assert convolve(ident, s, 2).coeffs == [3, 1, 4]

def test_convolve_mode_mismatch():
    a = Series([1, 1], MODE_INT)
    b = Series([1, 1], MODE_RAT)
    with pytest.raises(ValueError):
        convolve(a, b, 2)

def test_convolve_float_mode():
    a = Series([0.5, 0.25], float_mode(128))
    b = Series([2.0, 4.0], float_mode(128))
    c = convolve(a, b, 2)
    got = [float(x) for x in c.coeffs]
    assert got == [1.0, 2.5, 1.0]

@settings(deadline=None, max_examples=60)
@given(
    st.lists(st.integers(min_value=-50, max_value=50), min_size=1, max_size=80),
    st.lists(st.integers(min_value=-50, max_value=50), min_size=1, max_size=80),
    st.integers(min_value=0, max_value=100),
)
def test_convolve_int_matches_schoolbook(a, b, n_max):
    assert convolve_int(a, b, n_max) == _conv_schoolbook(a, b, n_max)

def test_packed_path_matches_schoolbook_large():
    # force the packed path (product of lengths above the schoolbook cutoff)
    a = [i * 37 + 1 for i in range(120)]
    b = [(i * i) % 91 for i in range(120)]
    assert convolve_int(a, b, 150) == _conv_schoolbook(a, b, 150)
    a[17] = -a[17]
    b[3] = -12345
    assert convolve_int(a, b, 150) == _conv_schoolbook(a, b, 150)

def test_inverse_multiplier_certified():
    for m in (2, 3):
        t = tree_counts(m, 80)
        inv = t.inverse_multiplier()
        assert inv[0] == 1
        assert all(c >= 0 for c in inv)
        # I * (1 - m z^{m-1} tau^{m-1}) == 1
        g = [0] * 81
        g[0] = 1
        for n in range(m - 1, 81):
            g[n] -= m * t.conv_cache[m - 1][n - (m - 1)]
        chk = convolve_int(g, inv, 80)
        assert chk[0] == 1 and not any(chk[1:])

def test_inverse_multiplier_prefix_requests():
    t = tree_counts(2, 300)
    short = t.inverse_multiplier(12)
    assert len(short) == 13
    longer = t.inverse_multiplier(200)
    full = t.inverse_multiplier()
    assert short == full[:13]
    assert longer == full[:201]
    # asking short again after the full build must slice, not recompute
    assert t.inverse_multiplier(5) == full[:6]
    with pytest.raises(ValueError):
        t.inverse_multiplier(301)

def test_cache_roundtrip(tmp_path):
    t = tree_counts(3, 50)
    p = tmp_path / "tau-m3-n50.json"
    save_table(t, str(p))
    t2 = load_table(str(p))
    assert t2.m == 3 and t2.N == 50
    assert t2.counts == t.counts
    assert t2.conv_cache[3] == t.conv_cache[3]

def test_cache_survives_huge_digit_counts(tmp_path):
    # tau_n at m=2, N=600 has ~360 digits; N=8000 would have ~4800 digits,
    # past CPython's int<->str guard. Exercise the gmpy2 string path with a
    # value built to exceed the guard without paying for a full big table.
    t = tree_counts(2, 600)
    fat = TreeCountTable(m=2, N=0, counts=[1], conv_cache={1: [1], 2: [1]})
    p = tmp_path / "tau-m2-n600.json"
    save_table(t, str(p))
    assert load_table(str(p)).counts == t.counts
    from msearch.enumeration import _int_to_str, _str_to_int
    big = 10 ** 5000 + 7
    assert _str_to_int(_int_to_str(big)) == big
    assert fat.counts == [1]

def test_tree_counts_used_cache_dir(tmp_path):
    d = str(tmp_path)
    t1 = tree_counts(2, 30, cache_dir=d)
    assert (tmp_path / "tau-m2-n30.json").exists()
    t2 = tree_counts(2, 30, cache_dir=d)
    assert t2.counts == t1.counts

def test_bad_parameters():
    with pytest.raises(ValueError):
        tree_counts(1, 5)
    with pytest.raises(ValueError):
        tree_counts(2, -1)
