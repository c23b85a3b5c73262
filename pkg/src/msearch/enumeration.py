"""Exact counts of m-ary search trees and truncated power-series arithmetic.

The number tau_n of m-ary search trees on n keys satisfies tau_n = 1 for
n <= m-2 and, for n >= m-1,

    tau_n = sum over j_1 + ... + j_m = n-(m-1) of tau_{j_1} * ... * tau_{j_m},

which is coefficient extraction from tau(z) = 1 + z + ... + z^{m-2}
+ z^{m-1} tau(z)^m.  The degree shift by m-1 makes the recurrence
well-founded: tau_n only reads tau_0 .. tau_{n-1}.

Everything downstream consumes a TreeCountTable: the counts, the truncated
powers tau(z)^k for k = 1..m (split-law weights, moment recurrences), and on
demand the multiplier series I(z) = 1/(1 - m z^{m-1} tau(z)^{m-1}).

Two computation paths give identical output:

* lockstep: extend tau and every cached power together, one degree at a time
  (O(m N^2) big-integer products); reference path, default for N <= 512;
* Newton: double the truncation degree per step of a Newton iteration on
  F(t) = t - q(z) - z^{m-1} t^m, with every series product done by Kronecker
  substitution (pack the coefficients into one huge integer, multiply once
  with GMP, unpack).  The result is certified afterwards by checking the
  defining equation coefficientwise, so the speed costs no trust.
"""

import json
import os
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import permutations

import gmpy2
from gmpy2 import mpz

MODE_INT = "exact-integer"
MODE_RAT = "exact-rational"

LOCKSTEP_LIMIT = 512

# -- integer convolution -----------------------------------------------------


def _conv_schoolbook(a, b, n_max):
    """Plain O(len(a)*len(b)) convolution truncated at degree n_max."""
    out = [0] * (n_max + 1)
    for i, ai in enumerate(a):
        if i > n_max or ai == 0:
            continue
        top = min(len(b), n_max + 1 - i)
        for j in range(top):
            bj = b[j]
            if bj:
                out[i + j] += ai * bj
    return out

def _conv_packed_nonneg(a, b, n_max):
    # Kronecker substitution: every coefficient of a*b (all degrees, not just
    # <= n_max) must fit in one limb, else neighbours are corrupted.
    la = min(len(a), n_max + 1)
    lb = min(len(b), n_max + 1)
    a = a[:la]
    b = b[:lb]
    amax = max(a, default=0)
    bmax = max(b, default=0)
    if amax == 0 or bmax == 0:
        return [0] * (n_max + 1)
    nterms = min(la, lb)
    limb_bits = amax.bit_length() + bmax.bit_length() + nterms.bit_length() + 1
    limb_bytes = (limb_bits + 7) // 8
    pa = b"".join(x.to_bytes(limb_bytes, "little") for x in a)
    pb = b"".join(x.to_bytes(limb_bytes, "little") for x in b)
    prod = int(mpz(int.from_bytes(pa, "little")) * mpz(int.from_bytes(pb, "little")))
    need = limb_bytes * (n_max + 2)
    raw = prod.to_bytes(max(need, (prod.bit_length() + 7) // 8 + limb_bytes), "little")
    return [
        int.from_bytes(raw[k * limb_bytes : (k + 1) * limb_bytes], "little")
        for k in range(n_max + 1)
    ]

def convolve_int(a, b, n_max):
    """Exact truncated convolution of integer sequences, signs allowed."""
    if (len(a) * len(b)) <= 4096:
        return _conv_schoolbook(a, b, n_max)
    if min(a, default=0) >= 0 and min(b, default=0) >= 0:
        return _conv_packed_nonneg(a, b, n_max)
    ap = [x if x > 0 else 0 for x in a]
    an = [-x if x < 0 else 0 for x in a]
    bp = [x if x > 0 else 0 for x in b]
    bn = [-x if x < 0 else 0 for x in b]
    pos = _conv_packed_nonneg(ap, bp, n_max)
    neg = _conv_packed_nonneg(ap, bn, n_max)
    if any(an):
        nn = _conv_packed_nonneg(an, bn, n_max)
        pn = _conv_packed_nonneg(an, bp, n_max)
        pos = [u + v for u, v in zip(pos, nn)]
        neg = [u + v for u, v in zip(neg, pn)]
    return [u - v for u, v in zip(pos, neg)]


def _poly_inverse_schoolbook(g, n_max):
    # reciprocal of a power series with g[0] == 1, exact integers
    if not g or g[0] != 1:
        raise ValueError("series inverse needs constant term 1")
    inv = [0] * (n_max + 1)
    inv[0] = 1
    lg = len(g)
    for n in range(1, n_max + 1):
        s = 0
        for k in range(1, min(n, lg - 1) + 1):
            gk = g[k]
            if gk:
                s += gk * inv[n - k]
        inv[n] = -s
    return inv


# -- Series carrier ----------------------------------------------------------


def float_mode(bits):
    return f"big-float({int(bits)})"

def _mode_bits(mode):
    if mode.startswith("big-float(") and mode.endswith(")"):
        return int(mode[len("big-float(") : -1])
    return None

@dataclass
class Series:
    """Truncated power series: a coefficient list plus an arithmetic mode.

    Modes: "exact-integer", "exact-rational", "big-float(BITS)".  The length
    is fixed at construction and the mode never changes in place.
    """

    coeffs: list
    arithmetic_mode: str = MODE_INT

    def __post_init__(self):
        if self.arithmetic_mode not in (MODE_INT, MODE_RAT) and _mode_bits(self.arithmetic_mode) is None:
            raise ValueError(f"unknown arithmetic mode {self.arithmetic_mode!r}")

    def __len__(self):
        return len(self.coeffs)


def convolve(a, b, n_max):
    """Truncated product of two Series with matching arithmetic modes."""
    if a.arithmetic_mode != b.arithmetic_mode:
        raise ValueError(
            f"arithmetic mode mismatch: {a.arithmetic_mode!r} vs {b.arithmetic_mode!r}"
        )
    mode = a.arithmetic_mode
    if mode == MODE_INT:
        return Series(convolve_int(a.coeffs, b.coeffs, n_max), mode)
    if mode == MODE_RAT:
        ca = [Fraction(x) for x in a.coeffs]
        cb = [Fraction(x) for x in b.coeffs]
        out = [Fraction(0)] * (n_max + 1)
        for i, ai in enumerate(ca):
            if i > n_max or ai == 0:
                continue
            for j in range(min(len(cb), n_max + 1 - i)):
                out[i + j] += ai * cb[j]
        return Series(out, mode)
    bits = _mode_bits(mode)
    with gmpy2.context(precision=bits):
        ca = [gmpy2.mpfr(x) for x in a.coeffs]
        cb = [gmpy2.mpfr(x) for x in b.coeffs]
        out = [gmpy2.mpfr(0)] * (n_max + 1)
        for i, ai in enumerate(ca):
            if i > n_max:
                continue
            for j in range(min(len(cb), n_max + 1 - i)):
                out[i + j] += ai * cb[j]
    return Series(out, mode)


# -- the count table ---------------------------------------------------------


@dataclass
class TreeCountTable:
    """Exact tau_0..tau_N for one m, with cached truncated powers of tau(z).

    conv_cache[k][i] is the i-th coefficient of tau(z)^k, 1 <= k <= m.
    Immutable after construction; safe to share across threads.
    """

    m: int
    N: int
    counts: list
    conv_cache: dict
    _inv: list = field(default=None, repr=False, compare=False)

    def inverse_multiplier(self, n_max=None):
        """Coefficients of I(z) = 1/(1 - m z^{m-1} tau(z)^{m-1}), 0..n_max.

        This is 1/F'(tau) for F(t) = t - q - z^{m-1} t^m; multiplying by it
        solves the linearized count/moment recurrences in one pass.  The
        coefficients are nonnegative integers.  Certified by checking
        g * I == 1 exactly.  n_max defaults to N; the longest prefix
        computed so far is kept, so short requests against a large table
        stay cheap.
        """
        top = self.N if n_max is None else n_max
        if not 0 <= top <= self.N:
            raise ValueError("n_max out of table range")
        if self._inv is None or len(self._inv) <= top:
            g = _gpoly(self.m, self.conv_cache[self.m - 1], top)
            if top <= LOCKSTEP_LIMIT:
                inv = _poly_inverse_schoolbook(g, top)
            else:
                inv = _newton_inverse(g, top)
            _certify_unit(g, inv, top)
            object.__setattr__(self, "_inv", inv)
        return self._inv[: top + 1]


def _gpoly(m, tau_m1, n_max):
    # 1 - m z^{m-1} tau(z)^{m-1}
    g = [0] * (n_max + 1)
    g[0] = 1
    for n in range(m - 1, n_max + 1):
        g[n] -= m * tau_m1[n - (m - 1)]
    return g

def _certify_unit(g, inv, n_max):
    chk = convolve_int(g, inv, n_max)
    if chk[0] != 1 or any(chk[1:]):
        raise AssertionError("series inverse failed certification")

def _newton_inverse(g, n_max):
    size = n_max + 1
    d = min(size, 64)
    inv = _poly_inverse_schoolbook(g[:d], d - 1)
    while d < size:
        d = min(2 * d, size)
        gi = convolve_int(g[:d], inv, d - 1)
        corr = [-c for c in gi]
        corr[0] += 2
        inv = convolve_int(inv, corr, d - 1)
    return inv


def _tree_counts_lockstep(m, N):
    counts = [0] * (N + 1)
    powers = {k: [0] * (N + 1) for k in range(1, m + 1)}
    for n in range(N + 1):
        if n <= m - 2:
            counts[n] = 1
        else:
            counts[n] = powers[m][n - (m - 1)]
        powers[1][n] = counts[n]
        for k in range(2, m + 1):
            prev = powers[k - 1]
            s = 0
            for i in range(n + 1):
                c = counts[i]
                if c:
                    s += c * prev[n - i]
            powers[k][n] = s
    return counts, powers


def _tree_counts_newton(m, N):
    size = N + 1
    d = min(size, 128)
    counts0, powers0 = _tree_counts_lockstep(m, d - 1)
    if d == size:
        return counts0, powers0

    q = [1] * (m - 1)
    t = counts0
    inv = _poly_inverse_schoolbook(_gpoly(m, powers0[m - 1], d - 1), d - 1)
    while len(t) < size:
        newd = min(2 * len(t), size)
        cap = newd - 1
        t = t + [0] * (newd - len(t))
        tm1 = _pow_trunc(t, m - 1, cap)
        g = _gpoly(m, tm1, cap)
        # lift the reciprocal of F'(t) to the new degree first
        gi = convolve_int(g, inv, cap)
        corr = [-c for c in gi]
        corr[0] += 2
        inv = convolve_int(inv, corr, cap)
        # Newton step t <- t - F(t) / F'(t)
        tm = convolve_int(tm1, t, cap)
        F = list(t)
        for n in range(min(m - 1, newd)):
            F[n] -= q[n]
        for n in range(m - 1, newd):
            F[n] -= tm[n - (m - 1)]
        delta = convolve_int(F, inv, cap)
        t = [a - b for a, b in zip(t, delta)]

    powers = {1: t}
    for k in range(2, m + 1):
        powers[k] = convolve_int(powers[k - 1], t, N)
    # certify: the defining equation must hold exactly, coefficient by
    # coefficient, which also certifies every cached power down the chain
    for n in range(size):
        expect = (1 if n <= m - 2 else 0) + (powers[m][n - (m - 1)] if n >= m - 1 else 0)
        if t[n] != expect:
            raise AssertionError(f"Newton tau failed certification at degree {n}")
    return t, powers


def _pow_trunc(base, e, cap):
    if e == 0:
        out = [0] * (cap + 1)
        out[0] = 1
        return out
    acc = None
    sq = base
    while e:
        if e & 1:
            acc = sq if acc is None else convolve_int(acc, sq, cap)
        e >>= 1
        if e:
            sq = convolve_int(sq, sq, cap)
    return acc[: cap + 1] + [0] * max(0, cap + 1 - len(acc))


def tree_counts(m, N, cache_dir=None):
    """Count table for m-ary search trees on 0..N keys.

    Parameters
    ----------
    m : int >= 2
    N : int >= 0
    cache_dir : optional directory; if given, tau tables are read from /
        written to ``tau-m{m}-n{N}.json`` there.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    if N < 0:
        raise ValueError("N must be >= 0")
    if cache_dir is not None:
        path = os.path.join(cache_dir, f"tau-m{m}-n{N}.json")
        if os.path.exists(path):
            return load_table(path)
    if N <= LOCKSTEP_LIMIT:
        counts, powers = _tree_counts_lockstep(m, N)
    else:
        counts, powers = _tree_counts_newton(m, N)
    table = TreeCountTable(m=m, N=N, counts=counts, conv_cache=powers)
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        save_table(table, path)
    return table


# -- brute-force oracle ------------------------------------------------------


class _Node:
    __slots__ = ("keys", "children")

    def __init__(self):
        self.keys = []
        self.children = None

def _insert(root, key, m):
    cur = root
    while True:
        if cur.children is None and len(cur.keys) < m - 1:
            cur.keys.append(key)
            cur.keys.sort()
            return
        if cur.children is None:
            cur.children = [_Node() for _ in range(m)]
        # keys are distinct, so the child index is the count of smaller keys
        i = sum(1 for k in cur.keys if k < key)
        cur = cur.children[i]

def _shape(node):
    if node is None:
        return ()
    kids = () if node.children is None else tuple(_shape(c) for c in node.children)
    return (len(node.keys), kids)

def brute_force_count(m, n):
    """Distinct m-ary search tree shapes over all n! insertion orders.

    Independent oracle for tree_counts; n <= 9 only (n! enumeration).
    """
    if n > 9:
        raise ValueError("brute force limited to n <= 9")
    if n < 0:
        raise ValueError("n must be >= 0")
    shapes = set()
    for perm in permutations(range(n)):
        root = _Node()
        for key in perm:
            _insert(root, key, m)
        shapes.add(_shape(root))
    return len(shapes)


# -- persistence -------------------------------------------------------------

# Decimal strings via gmpy2: tau_n for N = 10^4 has thousands of digits and
# CPython's int<->str conversion limit (default 4300 digits) would trip.


def _int_to_str(v):
    return mpz(v).digits(10)

def _str_to_int(s):
    return int(mpz(s, 10))

def save_table(table, path):
    payload = {
        "m": table.m,
        "N": table.N,
        "counts": [_int_to_str(c) for c in table.counts],
    }
    atomic_write_text(path, json.dumps(payload))

def load_table(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    m = int(payload["m"])
    N = int(payload["N"])
    counts = [_str_to_int(s) for s in payload["counts"]]
    if len(counts) != N + 1:
        raise ValueError(f"corrupt count cache {path}: {len(counts)} entries for N={N}")
    powers = {1: counts}
    for k in range(2, m + 1):
        powers[k] = convolve_int(powers[k - 1], counts, N)
    for n in range(N + 1):
        expect = 1 if n <= m - 2 else powers[m][n - (m - 1)]
        if counts[n] != expect:
            raise ValueError(f"corrupt count cache {path}: recurrence fails at n={n}")
    return TreeCountTable(m=m, N=N, counts=counts, conv_cache=powers)

def atomic_write_text(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
