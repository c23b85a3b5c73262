"""Exact and high-precision moments of additive tree functionals.

A functional X on m-ary search trees is fixed by a toll b(n) (paid at every
internal node holding a subtree of size n >= m-1) and initial values
x_0..x_{m-2} for the trivial sizes.  Over the uniform model (all tau_n
shapes equally likely) the accumulated row nu[s][n] = tau_n E[X_n^s]
satisfies a closed convolution recurrence: with

    r[s][n] = sum over (s_0, s_1..s_m), s_i < s for i >= 1, of
              multinom(s; s_0..s_m) b(n)^{s_0} (nu[s_1] * ... * nu[s_m])[n-(m-1)]

the generating function of nu[s] equals (r[s] + sum_j x_j^s z^j) times the
inverse multiplier I(z) of the counting recurrence, so one convolution with
I closes each level.  Tuples (s_1..s_m) are grouped into partitions; the
subtree products reuse prefix convolutions and the cached count powers.

Three arithmetic lanes share that core: pure integers, rationals by
denominator scaling (run the integer core on q*b and divide nu[s] by q^s),
and a fixed-point lane for irrational tolls.  The fixed-point lane rescales
every sequence by c^n for a dyadic c near the singularity rho, which keeps
all entries polynomially sized; the scale cancels in the final ratio
nu[s][n] / nu[0][n].  Rounding noise stays ~2^-64 below the requested
precision (64 guard fraction bits, convolutions exact in integers).

A direct enumeration oracle (distribution over all shapes, n <= 9) is
included for cross-validation; it shares nothing with the recurrence path
but the toll values themselves.
"""

import numbers
from collections import Counter
from dataclasses import dataclass, replace
from fractions import Fraction
from math import factorial, lcm, prod

import gmpy2

from .enumeration import MODE_INT, MODE_RAT, _mode_bits, convolve_int

BRUTE_LIMIT = 9

_KINDS = ("power", "shape", "space", "leaves", "custom")


@dataclass(frozen=True)
class TollSpec:
    """Toll function plus initial values; immutable so it can key caches."""

    m: int
    kind: str
    initial: tuple
    alpha: object = None
    custom_values: tuple = ()
    custom_rule: str = "zero"

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if self.kind not in _KINDS:
            raise ValueError(f"unknown toll kind {self.kind!r}")
        if len(self.initial) != self.m - 1:
            raise ValueError(f"need {self.m - 1} initial values, got {len(self.initial)}")
        if self.kind == "power" and self.alpha is None:
            raise ValueError("power toll needs an exponent")
        if self.kind == "custom" and self.custom_rule not in ("zero", "constant"):
            raise ValueError("custom_rule must be 'zero' or 'constant'")

    @property
    def is_exact(self):
        if not all(isinstance(v, numbers.Rational) for v in self.initial):
            return False
        if self.kind == "shape":
            return False
        if self.kind == "power":
            a = self.alpha
            return isinstance(a, numbers.Rational) and a.denominator == 1 and a >= 0
        if self.kind == "custom":
            return all(isinstance(v, numbers.Rational) for v in self.custom_values)
        return True

    @property
    def is_integer(self):
        def ok(v):
            return isinstance(v, numbers.Rational) and v.denominator == 1

        if not all(ok(v) for v in self.initial):
            return False
        if self.kind in ("space", "leaves"):
            return True
        if self.kind == "power":
            return ok(self.alpha) and self.alpha >= 0
        if self.kind == "custom":
            return all(ok(v) for v in self.custom_values)
        return False

    def b(self, n):
        """Exact toll value at size n >= m-1; raises for irrational kinds."""
        if n < self.m - 1:
            raise ValueError("toll applies at sizes >= m-1; below that use initial")
        if self.kind == "power":
            if not self.is_exact:
                raise ValueError("irrational toll; use b_approx for a float value")
            return n ** int(self.alpha)
        if self.kind == "space":
            return 1
        if self.kind == "leaves":
            return 1 if n == self.m - 1 else 0
        if self.kind == "custom":
            i = n - (self.m - 1)
            if i < len(self.custom_values):
                return self.custom_values[i]
            if self.custom_rule == "constant" and self.custom_values:
                return self.custom_values[-1]
            return 0
        raise ValueError("irrational toll; use b_approx for a float value")

    def b_approx(self, n, bits):
        """Toll value at size n as an mpfr correct to ~bits precision."""
        with gmpy2.context(precision=bits):
            if self.kind == "shape":
                # ln binomial(n, m-1)
                v = gmpy2.lgamma(gmpy2.mpfr(n + 1))[0]
                v -= gmpy2.lgamma(gmpy2.mpfr(n - self.m + 2))[0]
                v -= gmpy2.lgamma(gmpy2.mpfr(self.m))[0]
                return +v
            if self.kind == "power":
                return gmpy2.mpfr(n) ** _to_mpfr(self.alpha)
            return gmpy2.mpfr(_as_fraction(self.b(n)))

    @property
    def label(self):
        if self.kind == "power":
            return f"power{self.alpha}"
        return self.kind


def _to_mpfr(v):
    if isinstance(v, numbers.Rational):
        return gmpy2.mpfr(v.numerator) / gmpy2.mpfr(v.denominator)
    t = getattr(v, "_mpf_", None)
    if t is not None:
        # mpmath value: sign, mantissa, exponent
        sign, man, exp, _ = t
        r = gmpy2.mul_2exp(gmpy2.mpfr(man), exp) if exp >= 0 else gmpy2.div_2exp(
            gmpy2.mpfr(man), -exp
        )
        return -r if sign else r
    return gmpy2.mpfr(v)

def _as_fraction(v):
    return Fraction(v.numerator, v.denominator) if isinstance(v, numbers.Rational) else v


def make_toll(m, kind, alpha=None, initial=None, values=None, rule="zero"):
    """Build a TollSpec with the conventional initial values for its kind.

    power/shape start from zero initial values; space and leaves from
    (0, 1, ..., 1).  An explicit `initial` overrides the convention.
    """
    if initial is None:
        if kind in ("space", "leaves"):
            initial = (0,) + (1,) * (m - 2)
        else:
            initial = (0,) * (m - 1)
    else:
        initial = tuple(initial)
    return TollSpec(
        m=m,
        kind=kind,
        initial=initial,
        alpha=alpha,
        custom_values=tuple(values) if values is not None else (),
        custom_rule=rule,
    )


def centered_spec(toll, c):
    """Toll of X_n - c (n+1).

    Subtracting a multiple of n+1 leaves b(n) untouched (the subtree sizes
    plus the m-1 keys at the root sum to n), so only the initial values move.
    """
    shifted = tuple(x - c * (j + 1) for j, x in enumerate(toll.initial))
    return replace(toll, initial=shifted)


# -- partition bookkeeping for the moment recurrence -------------------------


def _partitions(t, max_part, max_len):
    if t == 0:
        yield ()
        return
    if max_len == 0 or max_part <= 0:
        return
    for first in range(min(t, max_part), 0, -1):
        for rest in _partitions(t - first, first, max_len - 1):
            yield (first,) + rest

def _arrangements(m, lam):
    # distinct ways to place the parts of lam into m labeled slots
    denom = factorial(m - len(lam))
    for c in Counter(lam).values():
        denom *= factorial(c)
    return factorial(m) // denom

def _terms(s, m):
    # (s0, weight, partition) triples for level s
    out = []
    for t in range(s + 1):
        s0 = s - t
        for lam in _partitions(t, s - 1, m):
            w = factorial(s) // (factorial(s0) * prod(factorial(p) for p in lam))
            out.append((s0, w * _arrangements(m, lam), lam))
    return out


# -- integer core ------------------------------------------------------------


def _moments_int_core(bvals, xvals, table, s_max, N):
    """nu and r rows for an integer toll; bvals[n] is the toll at size n."""
    m = table.m
    shift = m - 1
    tau = table.counts
    nu = [list(tau[: N + 1])]
    r_rows = [None]
    if s_max == 0:
        return nu, r_rows
    inv = table.inverse_multiplier(N)
    cap = N - shift  # top slot of the subtree-product arrays

    echain = {(): None}  # prefix convolutions of nu rows, keyed by partition prefix

    def eprod(lam):
        if lam in echain:
            return echain[lam]
        head = eprod(lam[:-1])
        row = nu[lam[-1]][: cap + 1]
        out = row if head is None else convolve_int(head, row, cap)
        echain[lam] = out
        return out

    def dprod(lam):
        k = len(lam)
        if k == 0:
            return table.conv_cache[m]
        e = eprod(lam)
        if k == m:
            return e
        return convolve_int(e, table.conv_cache[m - k], cap)

    for s in range(1, s_max + 1):
        by_s0 = {}
        if cap >= 0:
            for s0, w, lam in _terms(s, m):
                d = dprod(lam)
                acc = by_s0.get(s0)
                if acc is None:
                    by_s0[s0] = [w * d[i] for i in range(cap + 1)]
                else:
                    for i in range(cap + 1):
                        acc[i] += w * d[i]
        r = [0] * (N + 1)
        for n in range(shift, N + 1):
            i = n - shift
            bn = bvals[n]
            bp = 1
            acc = 0
            for s0 in range(s + 1):
                row = by_s0.get(s0)
                if row is not None and bp != 0:
                    acc += bp * row[i]
                bp *= bn
            r[n] = acc
        g = list(r)
        for j, x in enumerate(xvals):
            if j <= N:
                g[j] += x ** s
        row = convolve_int(g, inv, N)
        for j in range(min(shift - 1, N) + 1):
            if row[j] != g[j]:
                raise AssertionError("low-order slots corrupted; inverse multiplier broken")
        nu.append(row)
        r_rows.append(r)
        # subsequent levels convolve this row, so reset nothing: echain keys
        # only mention completed levels
    return nu, r_rows


# -- fixed-point core for irrational tolls -----------------------------------


def _rround(v, F):
    return (v + (1 << (F - 1))) >> F

def _fconv(a, b, n_max, F):
    return [_rround(v, F) for v in convolve_int(a, b, n_max)]

def _fixed_inverse(g, N, F):
    unit = 1 << F
    inv = [unit * unit // g[0] if g[0] != unit else unit]
    d = 1
    while d <= N:
        d = min(2 * d, N + 1)
        e = _fconv(g[:d], inv, d - 1, F)
        t = [2 * unit - e[0]] + [-v for v in e[1:]]
        inv = _fconv(inv, t, d - 1, F)
    return inv

def _fix_rational(v, F):
    fr = _as_fraction(v)
    num, den = fr.numerator << F, fr.denominator
    q, rem = divmod(num, den)
    return q + (1 if 2 * rem >= den else 0)

def _fix_mpfr(v, F):
    return int(gmpy2.rint(gmpy2.mul_2exp(v, F)))

def _toll_fixed(toll, N, F, K):
    """Fixed-point toll values b(n) 2^F for n = 0..N (zeros below m-1)."""
    out = [0] * (N + 1)
    with gmpy2.context(precision=K):
        for n in range(toll.m - 1, N + 1):
            if toll.kind == "shape" or (toll.kind == "power" and not toll.is_exact):
                out[n] = _fix_mpfr(toll.b_approx(n, K), F)
            else:
                out[n] = _fix_rational(toll.b(n), F)
    return out

def _moments_fixed_core(toll, table, s_max, N, bits):
    from .singular_constants import dominant_singularity

    m = table.m
    shift = m - 1
    F = bits + 64
    K = F + 64
    unit = 1 << F

    import mpmath as mp

    with mp.workprec(K + 8):
        R = int(mp.floor(mp.ldexp(dominant_singularity(m, K), K)))

    # scaled counts tau_n c^n 2^F for the dyadic c = R / 2^K; mpfr carries
    # the power so c^n never underflows before meeting tau_n
    tau_fix = [0] * (N + 1)
    rpow_fix = [0] * (shift + 1)
    with gmpy2.context(precision=K):
        c = gmpy2.mpfr(R) / (gmpy2.mpz(1) << K)
        p = gmpy2.mpfr(1)
        for n in range(N + 1):
            if n <= shift:
                rpow_fix[n] = _fix_mpfr(p, F)
            tau_fix[n] = int(gmpy2.rint(gmpy2.mpfr(table.counts[n]) * p * (gmpy2.mpz(1) << F)))
            p *= c
    pshift = rpow_fix[shift] if N >= shift else 0

    nu = [tau_fix]
    r_rows = [None]
    if s_max == 0 or N < shift:
        for s in range(1, s_max + 1):
            row = [0] * (N + 1)
            for j, x in enumerate(toll.initial[: N + 1]):
                xf = _fix_rational(x, F) if isinstance(x, numbers.Rational) else _fix_mpfr(_to_mpfr(x), F)
                xp = unit
                for _ in range(s):
                    xp = _rround(xp * xf, F)
                row[j] = _rround(xp * rpow_fix[j], F)
            nu.append(row)
            r_rows.append([0] * (N + 1))
        return nu, r_rows, tau_fix, F

    cap = N - shift

    # scaled count powers and the inverse multiplier, all fixed-point
    tpow = {1: tau_fix[: cap + 1]}
    for pw in range(2, m + 1):
        tpow[pw] = _fconv(tpow[pw - 1], tau_fix[: cap + 1], cap, F)
    g0 = [0] * (N + 1)
    g0[0] = unit
    for n in range(shift, N + 1):
        g0[n] = -_rround(m * pshift * tpow[m - 1][n - shift], F)
    inv = _fixed_inverse(g0, N, F)
    resid = _fconv(g0, inv, N, F)
    resid[0] -= unit
    if max(abs(v) for v in resid) > (1 << max(F - 40, 8)):
        raise AssertionError("fixed-point inverse failed certification")

    bfix = _toll_fixed(toll, N, F, K)
    with gmpy2.context(precision=K):
        xfix = [
            _fix_rational(x, F) if isinstance(x, numbers.Rational) else _fix_mpfr(_to_mpfr(x), F)
            for x in toll.initial
        ]

    echain = {(): None}

    def eprod(lam):
        if lam in echain:
            return echain[lam]
        head = eprod(lam[:-1])
        row = nu[lam[-1]][: cap + 1]
        out = row if head is None else _fconv(head, row, cap, F)
        echain[lam] = out
        return out

    def dprod(lam):
        k = len(lam)
        if k == 0:
            return tpow[m]
        e = eprod(lam)
        if k == m:
            return e
        return _fconv(e, tpow[m - k], cap, F)

    for s in range(1, s_max + 1):
        by_s0 = {}
        for s0, w, lam in _terms(s, m):
            d = dprod(lam)
            acc = by_s0.get(s0)
            if acc is None:
                by_s0[s0] = [w * d[i] for i in range(cap + 1)]
            else:
                for i in range(cap + 1):
                    acc[i] += w * d[i]
        r = [0] * (N + 1)
        for n in range(shift, N + 1):
            i = n - shift
            bn = bfix[n]
            bp = unit
            acc = 0
            for s0 in range(s + 1):
                row = by_s0.get(s0)
                if row is not None and bp != 0:
                    acc += _rround(bp * row[i], F)
                bp = _rround(bp * bn, F)
            r[n] = _rround(pshift * acc, F)
        g = list(r)
        for j, xf in enumerate(xfix):
            if j <= N:
                xp = unit
                for _ in range(s):
                    xp = _rround(xp * xf, F)
                g[j] += _rround(xp * rpow_fix[j], F)
        nu.append(_fconv(g, inv, N, F))
        r_rows.append(r)
    return nu, r_rows, tau_fix, F


# -- public driver -----------------------------------------------------------


@dataclass
class MomentTable:
    toll: TollSpec
    N: int
    s_max: int
    arithmetic_mode: str
    counts: object
    _nu: list = None
    _r: list = None
    _tau_fix: list = None
    _frac_bits: int = None

    @property
    def is_float(self):
        return self.arithmetic_mode.startswith("big-float")

    def moment(self, s, n):
        """E[X_n^s]: a Fraction in the exact modes, an mpfr in float mode."""
        if not (0 <= s <= self.s_max and 0 <= n <= self.N):
            raise ValueError("moment index out of range")
        if self.is_float:
            bits = _mode_bits(self.arithmetic_mode)
            with gmpy2.context(precision=bits):
                return gmpy2.mpfr(self._nu[s][n]) / gmpy2.mpfr(self._tau_fix[n])
        v = self._nu[s][n]
        tau = self.counts.counts[n]
        return Fraction(v, tau) if isinstance(v, int) else v / tau

    def nu_value(self, s, n):
        """tau_n E[X_n^s] (integer, Fraction, or mpfr by mode)."""
        if self.is_float:
            bits = _mode_bits(self.arithmetic_mode)
            with gmpy2.context(precision=bits):
                scale = gmpy2.mpfr(self._tau_fix[n]) / gmpy2.mpfr(self.counts.counts[n])
                return gmpy2.mpfr(self._nu[s][n]) / scale
        return self._nu[s][n]

    def r_value(self, s, n):
        if not (1 <= s <= self.s_max):
            raise ValueError("r rows exist for 1 <= s <= s_max")
        if self.is_float:
            bits = _mode_bits(self.arithmetic_mode)
            with gmpy2.context(precision=bits):
                scale = gmpy2.mpfr(self._tau_fix[n]) / gmpy2.mpfr(self.counts.counts[n])
                return gmpy2.mpfr(self._r[s][n]) / scale
        return self._r[s][n]


def exact_moments(toll, table, s_max, N=None, mode="exact"):
    """Moment table for a toll over trees of sizes up to N.

    mode: 'exact' picks integers or rationals from the toll and refuses
    irrational tolls; 'exact-integer' and 'exact-rational' force a lane;
    'big-float(BITS)' runs the fixed-point lane at that precision.
    """
    if toll.m != table.m:
        raise ValueError("toll and table disagree on m")
    N = table.N if N is None else N
    if not (0 <= N <= table.N):
        raise ValueError("N out of table range")
    if s_max < 0:
        raise ValueError("s_max must be >= 0")

    if mode == "exact":
        if not toll.is_exact:
            raise ValueError(
                "toll takes irrational values; request a float mode such as 'big-float(256)'"
            )
        mode = MODE_INT if toll.is_integer else MODE_RAT

    if mode == MODE_INT:
        if not toll.is_integer:
            raise ValueError("toll is not integer-valued; use exact-rational or a float mode")
        bvals = [0] * (N + 1)
        for n in range(toll.m - 1, N + 1):
            bvals[n] = int(toll.b(n))
        xvals = tuple(int(v) for v in toll.initial)
        nu, r = _moments_int_core(bvals, xvals, table, s_max, N)
        return MomentTable(toll, N, s_max, MODE_INT, table, _nu=nu, _r=r)

    if mode == MODE_RAT:
        if not toll.is_exact:
            raise ValueError("toll takes irrational values; use a float mode")
        q = lcm(
            *(
                [_as_fraction(v).denominator for v in toll.initial]
                + [_as_fraction(v).denominator for v in toll.custom_values]
                + [1]
            )
        )
        bvals = [0] * (N + 1)
        for n in range(toll.m - 1, N + 1):
            bvals[n] = int(q * _as_fraction(toll.b(n)))
        xvals = tuple(int(q * _as_fraction(v)) for v in toll.initial)
        nu_i, r_i = _moments_int_core(bvals, xvals, table, s_max, N)
        nu = [nu_i[0]] + [
            [Fraction(v, q ** s) for v in nu_i[s]] for s in range(1, s_max + 1)
        ]
        r = [None] + [
            [Fraction(v, q ** s) for v in r_i[s]] for s in range(1, s_max + 1)
        ]
        return MomentTable(toll, N, s_max, MODE_RAT, table, _nu=nu, _r=r)

    bits = _mode_bits(mode)
    if bits is None:
        raise ValueError(f"unknown mode {mode!r}; expected 'exact', 'exact-integer', 'exact-rational', or 'big-float(BITS)'")
    nu, r, tau_fix, F = _moments_fixed_core(toll, table, s_max, N, bits)
    mt = MomentTable(toll, N, s_max, mode, table, _nu=nu, _r=r)
    mt._tau_fix = tau_fix
    mt._frac_bits = F
    return mt


# -- central statistics ------------------------------------------------------


@dataclass
class CentralRow:
    n: int
    mean: object
    variance: object = None
    third_central: object = None
    fourth_central: object = None
    skewness: object = None
    excess_kurtosis: object = None
    degenerate: bool = None


def central_stats(mt, n):
    """Central moments at size n from the raw rows; no clamping is applied.

    In float mode a tiny negative variance is reported as computed so
    cancellation stays visible.
    """
    if mt.s_max < 1:
        raise ValueError("need s_max >= 1 for central statistics")
    mu = [mt.moment(s, n) for s in range(min(mt.s_max, 4) + 1)]
    row = CentralRow(n=n, mean=mu[1])
    if len(mu) > 2:
        row.variance = mu[2] - mu[1] ** 2
        if not mt.is_float:
            row.degenerate = row.variance == 0
    if len(mu) > 3:
        row.third_central = mu[3] - 3 * mu[2] * mu[1] + 2 * mu[1] ** 3
    if len(mu) > 4:
        row.fourth_central = (
            mu[4] - 4 * mu[3] * mu[1] + 6 * mu[2] * mu[1] ** 2 - 3 * mu[1] ** 4
        )
    var = row.variance
    if var is not None and var > 0:
        bits = _mode_bits(mt.arithmetic_mode) if mt.is_float else 64
        with gmpy2.context(precision=bits):
            sd = gmpy2.sqrt(_to_mpfr(var) if not mt.is_float else var)
            if row.third_central is not None:
                row.skewness = _to_mpfr(row.third_central) / sd ** 3 if not mt.is_float else row.third_central / sd ** 3
            if row.fourth_central is not None:
                v2 = sd ** 2
                row.excess_kurtosis = (
                    _to_mpfr(row.fourth_central) if not mt.is_float else row.fourth_central
                ) / v2 ** 2 - 3
    return row


# -- direct enumeration oracle ----------------------------------------------


def enumerate_distribution(toll, n, bits=None):
    """Distribution of X_n over the uniform model as {value: shape count}.

    Walks every composition of subtree sizes, so n is capped at BRUTE_LIMIT.
    Exact tolls give exact values; irrational tolls need bits and give mpfr
    values.
    """
    if n > BRUTE_LIMIT:
        raise ValueError(f"direct enumeration capped at n = {BRUTE_LIMIT}")
    m = toll.m
    exact = toll.is_exact and bits is None
    if not exact and bits is None:
        raise ValueError("irrational toll: pass bits for the value precision")

    def toll_at(k):
        if exact:
            return _as_fraction(toll.b(k)) if toll.is_exact else toll.b(k)
        return toll.b_approx(k, bits)

    def init_at(j):
        v = toll.initial[j]
        return _as_fraction(v) if exact else _to_mpfr(v)

    memo = {}

    def dist(k):
        if k in memo:
            return memo[k]
        if k <= m - 2:
            out = {init_at(k): 1}
        else:
            rest = k - (m - 1)

            # layer[t]: sum distribution over the children added so far,
            # holding t keys total
            def add_child(layer):
                out = {}
                for t, d in layer.items():
                    for j in range(rest - t + 1):
                        dj = dist(j)
                        tgt = out.setdefault(t + j, {})
                        for v1, c1 in d.items():
                            for v2, c2 in dj.items():
                                key = v1 + v2
                                tgt[key] = tgt.get(key, 0) + c1 * c2
                return out

            layer = {0: {(0 if exact else gmpy2.mpfr(0)): 1}}
            for _ in range(m):
                layer = add_child(layer)
            b = toll_at(k)
            out = {}
            for v, c in layer.get(rest, {}).items():
                out[v + b] = out.get(v + b, 0) + c
        memo[k] = out
        return out

    if bits is not None:
        with gmpy2.context(precision=bits):
            return dist(n)
    return dist(n)


def brute_force_moments(toll, n, s_max, bits=None):
    """E[X_n^s] for s = 0..s_max straight from the enumerated distribution."""
    d = enumerate_distribution(toll, n, bits=bits)
    total = sum(d.values())
    if bits is None:
        return [
            Fraction(sum(c * v ** s for v, c in d.items()), total)
            for s in range(s_max + 1)
        ]
    with gmpy2.context(precision=bits):
        out = []
        for s in range(s_max + 1):
            acc = gmpy2.mpfr(0)
            for v, c in d.items():
                acc += c * v ** s
            out.append(acc / total)
        return out


# -- degeneracy --------------------------------------------------------------


@dataclass
class DegeneracyReport:
    degenerate: bool
    b0: object
    b1: object
    first_violation_n: int = None
    variance_checked_to: int = None
    variance_agrees: bool = None
    variance_witness_n: int = None

    @property
    def witness(self):
        """The forced linear value at size n when degenerate."""
        if not self.degenerate:
            return None
        b0, b1 = self.b0, self.b1
        return lambda n: n * b1 - (n - 1) * b0


def degeneracy_check(toll, n_max, table=None):
    """Decide whether X_n is deterministic for every n, two independent ways.

    The functional collapses exactly when the values fall on a line: with
    v0 = X_0 and v1 = X_1, every x_j must equal j v1 - (j-1) v0 and the toll
    must freeze at (m-1)(v1 - 2 v0) from size m-1 on.  For m = 2 size 1 is
    already internal, so v1 = b(1) + 2 x_0 there (reading v1 as the raw
    second sequence entry breaks the equivalence: any constant toll is
    deterministic regardless of x_0).  The criterion is checked
    symbolically, then cross-checked against exact variances up to n_max; a
    disagreement is reported, not patched.
    """
    if not toll.is_exact:
        raise ValueError("degeneracy is an exact property; provide an exact toll")
    m = toll.m
    b0 = _as_fraction(toll.initial[0])
    b1 = _as_fraction(toll.initial[1]) if m >= 3 else _as_fraction(toll.b(1)) + 2 * b0
    first_bad = None
    for j in range(2, min(m - 2, n_max) + 1):
        if _as_fraction(toll.initial[j]) != j * b1 - (j - 1) * b0:
            first_bad = j
            break
    if first_bad is None:
        const = (m - 1) * (b1 - 2 * b0)
        for n in range(m - 1, n_max + 1):
            if _as_fraction(toll.b(n)) != const:
                first_bad = n
                break
    degenerate = first_bad is None

    report = DegeneracyReport(degenerate=degenerate, b0=b0, b1=b1, first_violation_n=first_bad)
    if table is not None:
        top = min(n_max, table.N)
        mt = exact_moments(toll, table, 2, N=top, mode="exact")
        witness = None
        for n in range(top + 1):
            if central_stats(mt, n).variance != 0:
                witness = n
                break
        report.variance_checked_to = top
        report.variance_witness_n = witness
        report.variance_agrees = (witness is None) == degenerate
    return report
