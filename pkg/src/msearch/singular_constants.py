"""Dominant singularity, expansion coefficients, and theorem constants.

The counting series tau(z) has a square-root singularity at the unique
rho in (0,1) solving

    m^m (rho + rho^2 + ... + rho^{m-1})^{m-1} = (m-1)^{m-1}.

Everything else here is algebra on top of that root: the expansion
coefficients a0, a1, a2 of tau(z) in powers of (1 - z/rho)^{1/2}, the
constant alpha* controlling all limit scalings, and the toll-dependent
constants (series values, centering slopes, limit variances) that the limit
theorems consume.

Slowly convergent series over rho^n tau_n are accelerated with a two-term
tail model rho^n tau_n ~ A n^{-3/2} + B n^{-5/2}: A = -a1/(2 sqrt(pi)) is
exact, B is fitted by Richardson extrapolation from the count table (no
closed form is available for it; transfer mixes the higher singular
coefficients into the same order, so a fitted effective coefficient is the
honest choice).  Tails are then Hurwitz zeta values; the reported
tail_error_bound combines the next-order residual (empirical constant times
a zeta tail) with the fit uncertainty.  The bound is validated empirically
(doubling the cutoff moves the value by less than the bound), it is not a
proof-grade enclosure.

All arithmetic is mpmath at precision_bits plus guard bits.
"""

from dataclasses import dataclass
from fractions import Fraction

import mpmath as mp

GUARD_BITS = 32

# fitted-coefficient window: residuals are maximized over this many of the
# last table entries to calibrate the next-order tail constant
_WINDOW = 160


def _work(bits):
    return mp.workprec(bits + GUARD_BITS)


@dataclass
class SingularData:
    m: int
    precision_bits: int
    rho: object
    w_rho: object
    a0: object
    a1: object
    a2: object
    alpha_star: object
    c0: object
    sigma_m: object
    rho_bracket: tuple = None
    rho_residual: object = None


@dataclass
class TheoremConstants:
    toll_kind: str
    m: int
    precision_bits: int
    C: object = None
    d1: object = None
    d0: object = None
    eta_half: object = None
    delta1: object = None
    B2: object = None
    sigma2: object = None
    tail_error_bound: object = None


@dataclass
class SeriesConstant:
    kind: str
    value: object
    tail_error_bound: object
    cutoff: int


def _defect(z, m):
    s = mp.mpf(0)
    p = mp.mpf(1)
    for _ in range(1, m):
        p *= z
        s += p
    return mp.mpf(m) ** m * s ** (m - 1) - mp.mpf(m - 1) ** (m - 1)

def _defect_prime(z, m):
    s = mp.mpf(0)
    ds = mp.mpf(0)
    p = mp.mpf(1)
    for j in range(1, m):
        ds += j * p
        p *= z
        s += p
    return mp.mpf(m) ** m * (m - 1) * s ** (m - 2) * ds


def dominant_singularity_certified(m, precision_bits):
    """Root rho plus the certified bisection bracket and the residual."""
    if m < 2:
        raise ValueError("m must be >= 2")
    with _work(precision_bits):
        lo, hi = mp.mpf(0), mp.mpf(1)
        flo, fhi = _defect(lo, m), _defect(hi, m)
        if not (flo < 0 < fhi):
            raise AssertionError("sign change on (0,1) lost; cannot bracket")
        for _ in range(precision_bits + 8):
            mid = (lo + hi) / 2
            fm = _defect(mid, m)
            if fm == 0:
                lo = hi = mid
                break
            if fm < 0:
                lo = mid
            else:
                hi = mid
        rho = (lo + hi) / 2
        for _ in range(6):
            step = _defect(rho, m) / _defect_prime(rho, m)
            nxt = rho - step
            if nxt <= lo or nxt >= hi:
                break
            rho = nxt
        residual = abs(_defect(rho, m))
        return rho, lo, hi, residual

def dominant_singularity(m, precision_bits):
    """The unique rho in (0,1) where the counting series turns singular."""
    return dominant_singularity_certified(m, precision_bits)[0]


def expansion_coefficients(m, precision_bits):
    """SingularData for branching factor m at the requested precision."""
    rho, lo, hi, residual = dominant_singularity_certified(m, precision_bits)
    with _work(precision_bits):
        mm = mp.mpf(m)
        a0 = mm ** (mp.mpf(-1) / (m - 1)) / rho
        # w_rho has a second expression; the two must agree to precision
        w2 = (mm / (m - 1)) * sum(rho ** j for j in range(m - 1))
        tol = mp.ldexp(1, -(precision_bits - 8))
        if abs(a0 - w2) > tol * a0:
            raise RuntimeError(
                f"precision starvation: w_rho forms disagree by {mp.nstr(abs(a0 - w2))}"
            )
        alpha_star = mm - (mm ** (mm / (m - 1)) - 1) / (1 / rho - 1)
        a1 = -mp.sqrt(2 * mm * alpha_star) * mm ** (-mm / (m - 1)) / rho
        a2 = a0 - (m - 2) * a1 ** 2 / (6 * a0)
        c0 = mp.mpf(m - 2) / (3 * (m - 1))
        sigma = -a1 * (m - 1) / (mp.sqrt(2) * a0)
        sigma_b = (m - 1) * mp.sqrt(alpha_star / mm)
        if abs(sigma - sigma_b) > tol * sigma:
            raise RuntimeError(
                f"precision starvation: sigma_m forms disagree by {mp.nstr(abs(sigma - sigma_b))}"
            )
        return SingularData(
            m=m,
            precision_bits=precision_bits,
            rho=rho,
            w_rho=w2,
            a0=a0,
            a1=a1,
            a2=a2,
            alpha_star=alpha_star,
            c0=c0,
            sigma_m=sigma,
            rho_bracket=(lo, hi),
            rho_residual=residual,
        )


# -- scaled counts and the fitted tail model ---------------------------------

_scaled_cache = {}

def scaled_counts(table, sd):
    """rho^n tau_n for n = 0..table.N as mpf at sd's working precision."""
    key = (table.m, table.N, sd.precision_bits)
    hit = _scaled_cache.get(key)
    if hit is not None:
        return hit
    with _work(sd.precision_bits):
        out = [mp.mpf(0)] * (table.N + 1)
        p = mp.mpf(1)
        for n, c in enumerate(table.counts):
            out[n] = p * c
            p *= sd.rho
    _scaled_cache[key] = out
    return out

def transfer_ratio(table, sd, n):
    """tau_n rho^n n^{3/2} divided by its limit -a1/(2 sqrt(pi))."""
    with _work(sd.precision_bits):
        pt = scaled_counts(table, sd)
        lead = -sd.a1 / (2 * mp.sqrt(mp.pi))
        return pt[n] * mp.mpf(n) ** mp.mpf("1.5") / lead

def fitted_tail_coefficient(table, sd, cutoff=None):
    """Effective n^{-5/2} coefficient B of rho^n tau_n, with an uncertainty.

    Richardson extrapolation of r(n) = n (n^{3/2} rho^n tau_n - A); the
    uncertainty is the change under halving the anchor.
    """
    with _work(sd.precision_bits):
        pt = scaled_counts(table, sd)
        N = cutoff if cutoff is not None else table.N
        if N < 64:
            raise ValueError("table too short to fit the tail coefficient")
        A = -sd.a1 / (2 * mp.sqrt(mp.pi))

        def r(n):
            return n * (mp.mpf(n) ** mp.mpf("1.5") * pt[n] - A)

        def b_at(n):
            return 2 * r(n) - r(n // 2)

        B = b_at(N)
        B_unc = abs(b_at(N) - b_at(N // 2))
        return A, B, B_unc


def _residual_window_max(pt, model, N, power):
    # max of |residual| * n^power over the last _WINDOW entries
    lo = max(4, N - _WINDOW)
    best = mp.mpf(0)
    for n in range(lo, N + 1):
        v = abs(pt[n] - model(n)) * mp.mpf(n) ** power
        if v > best:
            best = v
    return best


def _xpart(toll, rho):
    s = mp.mpf(0)
    for j, x in enumerate(toll.initial):
        s += _to_mpf(x) * rho ** j
    return s

def _to_mpf(x):
    num = getattr(x, "numerator", None)
    if num is not None and not isinstance(x, int):
        return mp.mpf(x.numerator) / mp.mpf(x.denominator)
    return mp.mpf(x)


def toll_series_constant(toll, table, sd, target_error=None, cutoff=None):
    """Convergent toll series over rho^n tau_n with a tail error bound.

    Covered tolls: power alpha < 1/2 (includes the initial-value part),
    power alpha = 1/2 (the regularized series; the initial-value part belongs
    to the derived constant and is added by theorem_constants), shape, space,
    leaves, and custom tolls that vanish beyond their table.  Power tolls
    with alpha > 1/2 diverge and are rejected.
    """
    kind = toll.kind
    m = toll.m
    if m != table.m:
        raise ValueError("toll and table disagree on m")
    bits = sd.precision_bits
    with _work(bits):
        rho = sd.rho
        if kind == "leaves":
            pt = scaled_counts(table, sd)
            value = pt[m - 1] + _xpart(toll, rho)
            return SeriesConstant("leaves", value, mp.mpf(0), m - 1)
        if kind == "custom":
            if toll.custom_rule != "zero":
                raise ValueError("no tail model for non-vanishing custom tolls")
            pt = scaled_counts(table, sd)
            value = _xpart(toll, rho)
            top = min(table.N, m - 1 + len(toll.custom_values) - 1)
            for n in range(m - 1, top + 1):
                value += _to_mpf(toll.b(n)) * pt[n]
            return SeriesConstant("custom", value, mp.mpf(0), top)
        if kind == "power":
            alpha = _to_mpf(toll.alpha)
            if alpha > mp.mpf("0.5"):
                raise ValueError(
                    f"series diverges for power toll with alpha={toll.alpha} > 1/2"
                )
            if alpha == mp.mpf("0.5"):
                return _chalf_series(toll, table, sd, target_error, cutoff)
            return _power_series(toll, table, sd, alpha, target_error, cutoff)
        if kind == "space":
            return _power_series(toll, table, sd, mp.mpf(0), target_error, cutoff)
        if kind == "shape":
            return _shape_series(toll, table, sd, target_error, cutoff)
        raise ValueError(f"unknown toll kind {kind!r}")


def _cutoff_schedule(table):
    N = min(table.N, 1000)
    sched = [N]
    while N < table.N:
        N = min(2 * N, table.N)
        sched.append(N)
    return sched

def _finish(kind, table, target_error, cutoff, evaluate):
    # evaluate(N) -> (value, bound); an explicit cutoff pins the truncation,
    # a target error walks the doubling schedule to the cheapest adequate
    # cutoff, and neither means best effort on the whole table
    if cutoff is not None:
        if cutoff > table.N:
            raise ValueError("cutoff beyond table")
        value, bound = evaluate(cutoff)
        return SeriesConstant(kind, value, bound, cutoff)
    if target_error is None:
        value, bound = evaluate(table.N)
        return SeriesConstant(kind, value, bound, table.N)
    last = None
    for N in _cutoff_schedule(table):
        value, bound = evaluate(N)
        last = SeriesConstant(kind, value, bound, N)
        if bound <= target_error:
            return last
    raise RuntimeError(
        f"target error {mp.nstr(mp.mpf(target_error))} unreachable at table size "
        f"{table.N} (best bound {mp.nstr(last.tail_error_bound)})"
    )

def _power_series(toll, table, sd, alpha, target_error, cutoff):
    m = toll.m
    pt = scaled_counts(table, sd)
    A, B, B_unc = fitted_tail_coefficient(table, sd)

    def model(n):
        nn = mp.mpf(n)
        return A * nn ** mp.mpf("-1.5") + B * nn ** mp.mpf("-2.5")

    D = _residual_window_max(pt, model, table.N, mp.mpf("3.5"))

    def evaluate(N):
        s = _xpart(toll, sd.rho)
        for n in range(m - 1, N + 1):
            s += mp.mpf(n) ** alpha * pt[n]
        a = N + 1
        tail = A * mp.zeta(mp.mpf("1.5") - alpha, a) + B * mp.zeta(mp.mpf("2.5") - alpha, a)
        bound = D * mp.zeta(mp.mpf("3.5") - alpha, a) + B_unc * mp.zeta(mp.mpf("2.5") - alpha, a)
        return s + tail, bound

    name = "space" if toll.kind == "space" else f"power:{toll.alpha}"
    return _finish(name, table, target_error, cutoff, evaluate)

def _chalf_series(toll, table, sd, target_error, cutoff):
    # regularized series: n^{1/2} rho^n tau_n + a1/(2 sqrt(pi) n); the A-part
    # of the tail cancels the regularizer exactly, leaving B zeta(2, N+1)
    m = toll.m
    pt = scaled_counts(table, sd)
    A, B, B_unc = fitted_tail_coefficient(table, sd)
    reg = sd.a1 / (2 * mp.sqrt(mp.pi))

    def model(n):
        nn = mp.mpf(n)
        return B * nn ** mp.mpf(-2)

    def regularized(n):
        nn = mp.mpf(n)
        return mp.sqrt(nn) * pt[n] + reg / nn

    # residual of the regularized terms against B n^{-2}
    lo = max(4, table.N - _WINDOW)
    D = mp.mpf(0)
    for n in range(lo, table.N + 1):
        v = abs(regularized(n) - model(n)) * mp.mpf(n) ** 3
        if v > D:
            D = v

    def evaluate(N):
        s = mp.mpf(0)
        for n in range(m - 1, N + 1):
            s += regularized(n)
        a = N + 1
        tail = B * mp.zeta(2, a)
        bound = D * mp.zeta(3, a) + B_unc * mp.zeta(2, a)
        return s + tail, bound

    return _finish("chalf", table, target_error, cutoff, evaluate)

def _shape_series(toll, table, sd, target_error, cutoff):
    m = toll.m
    pt = scaled_counts(table, sd)
    A, B, B_unc = fitted_tail_coefficient(table, sd)
    lnfact = mp.loggamma(m)  # ln((m-1)!)
    c1 = mp.mpf((m - 1) * (m - 2)) / 2

    lg_cache = [mp.mpf(0)] * (table.N + 1)
    for n in range(m - 1, table.N + 1):
        lg_cache[n] = mp.loggamma(n + 1) - mp.loggamma(n - m + 2) - lnfact

    def model(n):
        nn = mp.mpf(n)
        base = A * nn ** mp.mpf("-1.5") + B * nn ** mp.mpf("-2.5")
        return ((m - 1) * mp.log(nn) - lnfact) * base - c1 / nn * A * nn ** mp.mpf("-1.5")

    # the residual is the count-model residual times the log factor, so its
    # envelope is D ln(n) n^{-7/2} with D converging from below; a plain
    # power envelope decreases through the fit window and under-covers
    lo = max(4, table.N - _WINDOW)
    D = mp.mpf(0)
    for n in range(lo, table.N + 1):
        v = abs(lg_cache[n] * pt[n] - model(n)) * mp.mpf(n) ** mp.mpf("3.5") / mp.log(n)
        if v > D:
            D = v

    def evaluate(N):
        s = _xpart(toll, sd.rho)
        for n in range(m - 1, N + 1):
            s += lg_cache[n] * pt[n]
        a = N + 1
        L = lambda sexp: -mp.zeta(sexp, a, 1)  # sum_{n > N} ln(n) n^{-sexp}
        tail = (
            A * ((m - 1) * L(mp.mpf("1.5")) - lnfact * mp.zeta(mp.mpf("1.5"), a))
            + B * ((m - 1) * L(mp.mpf("2.5")) - lnfact * mp.zeta(mp.mpf("2.5"), a))
            - c1 * A * mp.zeta(mp.mpf("2.5"), a)
        )
        bound = D * L(mp.mpf("3.5")) + B_unc * (
            (m - 1) * L(mp.mpf("2.5")) + abs(lnfact) * mp.zeta(mp.mpf("2.5"), a)
        )
        return s + tail, bound

    return _finish("shape", table, target_error, cutoff, evaluate)


# -- theorem constants -------------------------------------------------------


def _normalize_kind(toll_kind):
    if isinstance(toll_kind, tuple):
        return "power", toll_kind[1]
    if hasattr(toll_kind, "kind"):
        return toll_kind.kind, getattr(toll_kind, "alpha", None)
    s = str(toll_kind)
    if s.startswith("power:"):
        text = s.split(":", 1)[1]
        try:
            return "power", Fraction(text)
        except (ValueError, ZeroDivisionError):
            raise ValueError(
                f"cannot parse exponent {text!r}; use forms like 1, 1/4, 0.25"
            ) from None
    if s == "power":
        raise ValueError("power toll needs an exponent, e.g. 'power:0.25'")
    return s, None

def _kind_label(kind, alpha):
    return f"power:{alpha}" if kind == "power" else kind

def theorem_constants(toll_kind, m, precision_bits, table=None, cache_dir=None):
    """Limit-theorem constants for one toll kind at branching factor m.

    space and leaves need no count table (closed forms in the singular data);
    shape and power alpha <= 1/2 embed a series and build or accept a table.
    """
    from .moment_engine import make_toll  # deferred: engine imports this module

    kind, alpha = _normalize_kind(toll_kind)
    sd = expansion_coefficients(m, precision_bits)
    bits = precision_bits
    with _work(bits):
        rho, a0, a1, astar = sd.rho, sd.a0, sd.a1, sd.alpha_star
        mm = mp.mpf(m)
        tol = mp.ldexp(1, -(bits // 2))
        out = TheoremConstants(
            toll_kind=_kind_label(kind, alpha), m=m, precision_bits=bits
        )

        def need_table():
            nonlocal table
            if table is None:
                from .enumeration import tree_counts

                table = tree_counts(m, 4000, cache_dir=cache_dir)
            return table

        if kind == "space":
            d1 = mm * (1 - rho * mm ** (1 / (mm - 1))) / ((m - 1) * astar)
            d1b = 2 * a0 * (a0 - 1) / (a1 ** 2 * (m - 1))
            if abs(d1 - d1b) > tol * abs(d1):
                raise RuntimeError("space centering-slope forms disagree")
            delta1 = _delta1(d1, rho, m)
            B1 = -a0 / (m - 1)
            B2_full = (a0 / (-a1 * (m - 1))) * (
                ((m - 1) / a0) * B1 ** 2 + 2 * B1 + a0 / mm + delta1
            )
            B2 = (a0 / (-a1 * (m - 1))) * (delta1 - a0 / (mm * (m - 1)))
            if abs(B2 - B2_full) > tol * max(abs(B2), mp.mpf(1)):
                raise RuntimeError("space variance-constant forms disagree")
            out.d1, out.delta1, out.B2 = d1, delta1, B2
            out.sigma2 = 2 * B2 / (-a1)
            out.tail_error_bound = mp.mpf(0)
            return out

        if kind == "leaves":
            d1 = rho / astar
            delta1 = _delta1(d1, rho, m)
            # the toll-cross contribution of the second-moment row localizes
            # at size m-1 with centered value -d1, adding -2m d1 rho^{m-1} to
            # the numerator alongside the toll square and the initial squares
            numer = rho ** (m - 1) * (1 - 2 * mm * d1) + delta1
            B2 = a0 * numer / (-a1 * (m - 1))
            sigma2 = rho * mm ** (mm / (m - 1)) * numer / (astar * (m - 1))
            if abs(sigma2 - 2 * B2 / (-a1)) > tol * abs(sigma2):
                raise RuntimeError("leaves limit-variance forms disagree")
            out.d1, out.delta1, out.B2, out.sigma2 = d1, delta1, B2, sigma2
            out.tail_error_bound = mp.mpf(0)
            return out

        if kind == "shape":
            sc = toll_series_constant(make_toll(m, "shape"), need_table(), sd)
            d1 = 2 * a0 * sc.value / ((m - 1) * a1 ** 2)
            out.C = sc.value
            out.d1 = d1
            out.sigma2 = 8 * (a0 / a1) ** 2 * (1 - mp.log(2))
            out.tail_error_bound = sc.tail_error_bound * abs(
                2 * a0 / ((m - 1) * a1 ** 2)
            )
            return out

        if kind == "power":
            a = _to_mpf(alpha)
            toll = make_toll(m, "power", alpha=alpha)
            if a < mp.mpf("0.5"):
                sc = toll_series_constant(toll, need_table(), sd)
                C = sc.value
                d1 = rho * mm ** (mm / (m - 1)) * C / ((m - 1) * astar)
                d1b = 2 * a0 * C / ((m - 1) * a1 ** 2)
                if abs(d1 - d1b) > tol * max(abs(d1), mp.mpf(1)):
                    raise RuntimeError("power centering-slope forms disagree")
                out.C, out.d1 = C, d1
                out.tail_error_bound = sc.tail_error_bound
                return out
            if a == mp.mpf("0.5"):
                sc = toll_series_constant(toll, need_table(), sd)
                C = sc.value + _xpart(toll, rho)
                d0 = rho * mm ** (mm / (m - 1)) * C / ((m - 1) * astar)
                eta = (2 * mp.sqrt(mp.pi) / (-a1)) * (
                    a0 * (mp.euler + 2 * mp.log(2)) / (2 * mp.pi * (m - 1))
                    + a0 * C / (-a1 * mp.sqrt(mp.pi) * (m - 1))
                )
                out.C, out.d0, out.eta_half = C, d0, eta
                out.tail_error_bound = sc.tail_error_bound
                return out
            # alpha > 1/2: no centering constant, no series
            out.tail_error_bound = mp.mpf(0)
            return out

        raise ValueError(f"unknown toll kind {kind!r}")


def _delta1(d1, rho, m):
    s = d1 ** 2
    for j in range(1, m - 1):
        s += (1 - (j + 1) * d1) ** 2 * rho ** j
    return s
