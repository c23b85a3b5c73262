"""Moment sequences of the limit laws for additive tree functionals.

Tolls growing faster than n^{1/2} lead to a non-normal limit whose moments
satisfy a two-term recurrence in gamma-function weights; the critical
n^{1/2} toll has its own law with moments driven by a family of singular
integrals; the structural functionals (node count, leaf count, log-shape)
are asymptotically normal and their singular-expansion coefficients obey
convolution recurrences whose closed-form solutions are exactly Gaussian
moments.  Everything here is pure big-float computation; the exact moment
engine is touched only by the executable sign check at the bottom.
"""

import json
import numbers
import os
from dataclasses import dataclass, field
from math import comb

import mpmath as mp

from .enumeration import atomic_write_text
from .singular_constants import _work, expansion_coefficients, theorem_constants

_HALF = mp.mpf("0.5")

# stored decimals carry 80 digits, enough for any precision up to this;
# higher-precision requests bypass the disk cache and recompute
_CACHE_BITS_LIMIT = 240


def _load_cached(cache_dir, name, precision_bits):
    if cache_dir is None or precision_bits > _CACHE_BITS_LIMIT:
        return None
    path = os.path.join(cache_dir, name + ".json")
    if os.path.exists(path):
        return load_sequence(path)
    return None


def _store_cached(cache_dir, name, precision_bits, seq):
    if cache_dir is not None and precision_bits <= _CACHE_BITS_LIMIT:
        os.makedirs(cache_dir, exist_ok=True)
        save_sequence(os.path.join(cache_dir, name + ".json"), seq)
    return seq


@dataclass
class LimitMomentSequence:
    """Moments of one limit law, with how they were produced.

    moments[s] = E[L^s] for s = 0..s_max.  For the normal kinds the stored
    moments are the closed-form Gaussian ones and aux carries the
    recurrence route plus their maximal disagreement; for the n^{1/2} law
    aux carries the integral cache that fed the recurrence.
    """

    kind: str
    params: dict
    moments: list
    aux: dict = field(default_factory=dict)
    provenance: str = ""

    @property
    def s_max(self):
        return len(self.moments) - 1


def _to_mpf(x):
    if isinstance(x, numbers.Rational) and not isinstance(x, int):
        return mp.mpf(x.numerator) / mp.mpf(x.denominator)
    return mp.mpf(x)


# -- tolls growing like n^alpha, alpha != 1/2 --------------------------------


def moments_Y_alpha(alpha, s_max, precision_bits=160, cache_dir=None):
    """Limit-law moments M_s for a toll growing like n^alpha, alpha != 1/2.

    M_1 is a gamma-function closed form; higher moments follow the
    quadratic-plus-linear recurrence with weights built from alpha' =
    alpha + 1/2.  The sequence takes no branching factor: the law is the
    same for every m.
    """
    if s_max < 1:
        raise ValueError("s_max must be >= 1")
    with _work(precision_bits):
        a = _to_mpf(alpha)
        if a <= 0:
            raise ValueError("growth exponent must be positive")
        if a == _HALF:
            raise ValueError(
                "exponent 1/2 is the critical case; use moments_Y_half"
            )
    token = str(alpha).replace("/", "_").replace(" ", "")
    name = f"limits-yalpha-{token}-s{s_max}-b{precision_bits}"
    cached = _load_cached(cache_dir, name, precision_bits)
    if cached is not None:
        return cached
    with _work(precision_bits):
        a = _to_mpf(alpha)
        ap = a + _HALF
        M = [mp.mpf(1), mp.gamma(a - _HALF) / (mp.sqrt(2) * mp.gamma(a))]
        for s in range(2, s_max + 1):
            quad = mp.mpf(0)
            for j in range(1, s):
                quad += (
                    mp.binomial(s, j)
                    * mp.gamma(j * ap - _HALF)
                    * mp.gamma((s - j) * ap - _HALF)
                    / mp.gamma(s * ap - _HALF)
                    * M[j]
                    * M[s - j]
                )
            lin = (
                s * mp.gamma(s * ap - 1) / (mp.sqrt(2) * mp.gamma(s * ap - _HALF))
            ) * M[s - 1]
            M.append(quad / (4 * mp.sqrt(mp.pi)) + lin)
        if a > _HALF:
            for s in range(1, s_max + 1):
                if not M[s] > 0:
                    raise RuntimeError(
                        f"M_{s} = {mp.nstr(M[s])} not positive; the law for "
                        "alpha > 1/2 lives on the nonnegative axis"
                    )
    seq = LimitMomentSequence(
        kind="yalpha",
        params={"alpha": alpha, "precision_bits": precision_bits},
        moments=M,
        provenance="gamma-weight recurrence in s from the closed-form first moment",
    )
    return _store_cached(cache_dir, name, precision_bits, seq)


def D_sequence(alpha, m, s_max, precision_bits=160):
    """Leading singular-expansion coefficients D_s of the raw moment series.

    Internal to the M_s derivation but exposed so the m-independence of the
    law can be checked: D_s depends on m, yet sigma_m^s D_s 2 sqrt(pi) /
    ((-a_1) Gamma(s alpha' - 1/2)) must not.  Index 0 is unused.
    """
    if s_max < 1:
        raise ValueError("s_max must be >= 1")
    sd = expansion_coefficients(m, precision_bits)
    with _work(precision_bits):
        a = _to_mpf(alpha)
        if a <= 0 or a == _HALF:
            raise ValueError("need a positive growth exponent other than 1/2")
        ap = a + _HALF
        a0, a1 = sd.a0, sd.a1
        D = [None, a0 * mp.gamma(a - _HALF) / (2 * (m - 1) * mp.sqrt(mp.pi))]
        for s in range(2, s_max + 1):
            quad = mp.mpf(0)
            for j in range(1, s):
                quad += mp.binomial(s, j) * D[j] * D[s - j]
            D.append(
                a0
                / ((m - 1) * (-a1))
                * (
                    (m - 1) / (2 * a0) * quad
                    + mp.gamma(s * ap - 1)
                    / mp.gamma((s - 1) * ap - _HALF)
                    * s
                    * D[s - 1]
                )
            )
    return D


def moments_Y_alpha_from_expansion(alpha, m, s_max, precision_bits=160):
    """M_s rebuilt from the m-dependent D_s route; must match moments_Y_alpha.

    The composition sigma_m^s D_s 2 sqrt(pi) / ((-a_1) Gamma(s alpha'-1/2))
    cancels every m-dependent factor; computing it for two different m and
    comparing against the direct recurrence is the executable form of the
    m-invariance of the law.
    """
    sd = expansion_coefficients(m, precision_bits)
    D = D_sequence(alpha, m, s_max, precision_bits)
    with _work(precision_bits):
        ap = _to_mpf(alpha) + _HALF
        M = [mp.mpf(1)]
        for s in range(1, s_max + 1):
            M.append(
                sd.sigma_m ** s
                * D[s]
                * 2
                * mp.sqrt(mp.pi)
                / ((-sd.a1) * mp.gamma(s * ap - _HALF))
            )
    return M


# -- the critical n^{1/2} toll -----------------------------------------------

_J_CACHE = {}


def J_integral(k1, k2, k3, precision_bits=160, return_error=False):
    """Singular moment integral over (0,1) with entropy-bracket weight.

    Computes the integral of x^{k1-3/2} (1-x)^{k2-3/2} [x ln x +
    (1-x) ln(1-x)]^{k3}.  The endpoint exponent -3/2 is integrable only
    when the bracket factor tempers it, which needs k1+k3 >= 1 at x = 0
    and k2+k3 >= 1 at x = 1; other triples are rejected.  Substituting
    x = sin^2(theta) turns every admissible case into, at worst, a
    logarithmic endpoint singularity, split at x = 1/2 and integrated by
    doubly-exponential quadrature with an error estimate.
    """
    for k in (k1, k2, k3):
        if not isinstance(k, numbers.Integral) or k < 0:
            raise ValueError("indices must be nonnegative integers")
    if (k1 == 0 and k3 == 0) or (k2 == 0 and k3 == 0):
        raise ValueError(
            f"J({k1},{k2},{k3}) diverges: an endpoint carries x^{{-3/2}} with "
            "no bracket factor to temper it (need k1+k3 >= 1 and k2+k3 >= 1)"
        )
    key = (min(k1, k2), max(k1, k2), k3, precision_bits)
    if key not in _J_CACHE:
        _J_CACHE[key] = _compute_J(key[0], key[1], k3, precision_bits)
    value, err = _J_CACHE[key]
    return (value, err) if return_error else value


def _compute_J(k1, k2, k3, bits):
    with _work(bits + 32):

        def f(t):
            # only even powers appear, so work with the squares: the rounded
            # upper endpoint can sit a hair past pi/2, where cos goes
            # negative and its log would turn complex.  The log of whichever
            # square sits near 1 must go through log1p of the other, or deep
            # quadrature nodes round it to ln 1 = 0 and break the error
            # estimate at the working precision.
            s, c = mp.sin(t), mp.cos(t)
            s2, c2 = s * s, c * c
            if s2 <= c2:
                ln_s2, ln_c2 = mp.log(s2), mp.log1p(-s2)
            else:
                ln_s2, ln_c2 = mp.log1p(-c2), mp.log(c2)
            # x ln x + (1-x) ln(1-x) at x = sin^2 t
            g = s2 * ln_s2 + c2 * ln_c2
            return 2 * s2 ** (k1 - 1) * c2 ** (k2 - 1) * g ** k3

        value, err = mp.quad(
            f, [0, mp.pi / 4, mp.pi / 2], error=True, maxdegree=10
        )
        if err > mp.ldexp(1, -(bits - 8)) * max(1, abs(value)):
            raise RuntimeError(
                f"quadrature for J({k1},{k2},{k3}) did not converge: "
                f"estimate {mp.nstr(err)}"
            )
    return value, err


def moments_Y_half(k_max, precision_bits=160, cache_dir=None):
    """Moments m_k of the limit law for the critical n^{1/2} toll.

    m_0 = 1, m_1 = 0, and each higher moment mixes the lower ones through
    multinomially-weighted J integrals plus a linear term.  Symmetric
    index pairs share one quadrature; the J values used are kept in aux,
    keyed "k1,k2,k3" as value-error pairs.
    """
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    name = f"limits-yhalf-k{k_max}-b{precision_bits}"
    cached = _load_cached(cache_dir, name, precision_bits)
    if cached is not None:
        return cached
    with _work(precision_bits):
        mvals = [mp.mpf(1), mp.mpf(0)]
        used = {}
        inv_sqrt_2pi = 1 / mp.sqrt(2 * mp.pi)
        for k in range(2, k_max + 1):
            tot = mp.mpf(0)
            for k1 in range(k):
                if mvals[k1] == 0 and k1 != 0:
                    continue
                for k2 in range(min(k - k1, k - 1) + 1):
                    if mvals[k2] == 0 and k2 != 0:
                        continue
                    k3 = k - k1 - k2
                    J, err = J_integral(
                        k1, k2, k3, precision_bits, return_error=True
                    )
                    used[f"{k1},{k2},{k3}"] = [J, err]
                    weight = comb(k, k1) * comb(k - k1, k2)
                    tot += (
                        weight
                        * mvals[k1]
                        * mvals[k2]
                        * inv_sqrt_2pi ** k3
                        * J
                    )
            pref = mp.gamma(k - 1) / (4 * mp.sqrt(mp.pi) * mp.gamma(k - _HALF))
            mvals.append(
                pref * (tot + 4 * mp.sqrt(mp.pi / 2) * k * mvals[k - 1])
            )
    seq = LimitMomentSequence(
        kind="yhalf",
        params={"precision_bits": precision_bits},
        moments=mvals,
        aux={"J": used},
        provenance="multinomial J-integral recurrence from m_0 = 1, m_1 = 0",
    )
    return _store_cached(cache_dir, name, precision_bits, seq)


# -- asymptotically normal functionals ---------------------------------------


def _gaussian_moments(sigma2, s_max):
    # E[N(0, sigma2)^s]: odd vanish, even are sigma^{2l} (2l-1)!!
    out = [mp.mpf(1)]
    for s in range(1, s_max + 1):
        if s % 2:
            out.append(mp.mpf(0))
        else:
            l = s // 2
            df = mp.mpf(1)
            for i in range(1, s, 2):
                df *= i
            out.append(sigma2 ** l * df)
    return out


def normal_limit_moments(
    kind, m, s_max, precision_bits=160, table=None, cache_dir=None
):
    """Standardized limit moments for a structural functional, two ways.

    Runs the coefficient recurrence for the singular expansion of the
    centered moment series (quadratic convolution, plus a linear term for
    the node count), transfers each even coefficient to a standardized
    moment, and pins it against the closed-form Gaussian moments with the
    theorem variance.  Both routes are stored; a disagreement raises
    instead of averaging, since it can only mean a derivation bug.
    """
    if kind not in ("shape", "space", "leaves"):
        raise ValueError("kind must be one of shape, space, leaves")
    if s_max < 2:
        raise ValueError("s_max must be >= 2")
    name = f"limits-{kind}_normal-m{m}-s{s_max}-b{precision_bits}"
    if table is None:
        # a caller-supplied table may be of unusual quality; only the
        # default construction is safe to memoize on disk
        cached = _load_cached(cache_dir, name, precision_bits)
        if cached is not None:
            return cached
    tc = theorem_constants(kind, m, precision_bits, table=table, cache_dir=cache_dir)
    sd = expansion_coefficients(m, precision_bits)
    with _work(precision_bits):
        a0, a1 = sd.a0, sd.a1
        sigma2 = tc.sigma2
        tol = mp.ldexp(1, -(precision_bits // 2))

        if kind == "shape":
            # even-only convolution recurrence; odd standardized moments
            # vanish at this order
            C = {2: 4 * a0 ** 2 / (-a1) * (1 - mp.log(2))}
            if abs(2 * C[2] / (-a1) - sigma2) > tol * sigma2:
                raise RuntimeError("shape variance forms disagree")
            for l in range(2, s_max // 2 + 1):
                acc = mp.mpf(0)
                for j in range(1, l):
                    acc += mp.binomial(2 * l, 2 * j) * C[2 * j] * C[2 * l - 2 * j]
                C[2 * l] = acc / (-2 * a1)
            closed = {}
            for l in range(1, s_max // 2 + 1):
                closed[2 * l] = (
                    (-a1)
                    * mp.gamma(l - _HALF)
                    / (2 * mp.sqrt(mp.pi))
                    * mp.factorial(2 * l)
                    / (2 ** l * mp.factorial(l))
                    * sigma2 ** l
                )
            coeffs = C
            coeff_closed = closed
            scaling = "sqrt(n ln n)"
        else:
            B = [None, mp.mpf(0) if kind == "leaves" else -a0 / (m - 1), tc.B2]
            for s in range(3, s_max + 1):
                acc = mp.mpf(0)
                for j in range(1, s):
                    acc += mp.binomial(s, j) * B[j] * B[s - j]
                if kind == "space":
                    B.append(
                        a0
                        / (-a1 * (m - 1))
                        * ((m - 1) / (2 * a0) * acc + s * B[s - 1])
                    )
                else:
                    # leaf-count recurrence is purely quadratic; the sign
                    # here is the one consistent with a Gaussian limit,
                    # checked executably by resolve_leaves_sign
                    B.append(acc / (-2 * a1))
            coeffs = {s: B[s] for s in range(1, s_max + 1)}
            coeff_closed = None
            scaling = "sqrt(n)"

        # transfer each coefficient to a standardized limit moment; the
        # first coefficient feeds the mean at a lower order (the gamma
        # factor has a pole there), so the standardized first moment is 0
        rec = [mp.mpf(1)]
        for s in range(1, s_max + 1):
            if s == 1 or s not in coeffs:
                rec.append(mp.mpf(0))
            else:
                rec.append(
                    2
                    * mp.sqrt(mp.pi)
                    * coeffs[s]
                    / ((-a1) * mp.gamma(mp.mpf(s) / 2 - _HALF))
                )
        cf = _gaussian_moments(sigma2, s_max)

        sigma = mp.sqrt(sigma2)
        worst = mp.mpf(0)
        for s in range(1, s_max + 1):
            scale = max(abs(cf[s]), sigma ** s, mp.ldexp(1, -precision_bits))
            d = abs(rec[s] - cf[s]) / scale
            if d > worst:
                worst = d
        if worst > tol:
            raise RuntimeError(
                f"{kind} recurrence and closed-form moments disagree by "
                f"{mp.nstr(worst)}: derivation bug"
            )
        if kind == "shape":
            for l in range(1, s_max // 2 + 1):
                d = abs(coeffs[2 * l] - coeff_closed[2 * l])
                if d > tol * max(abs(coeff_closed[2 * l]), mp.ldexp(1, -precision_bits)):
                    raise RuntimeError(
                        "shape coefficient recurrence disagrees with its closed form"
                    )

    def as_list(d):
        out = [None] * (s_max + 1)
        for k, v in d.items():
            out[k] = v
        return out

    aux = {
        "recurrence_moments": rec,
        "coefficients": as_list(coeffs),
        "sigma2": sigma2,
        "max_relative_disagreement": worst,
        "scaling": scaling,
        "degenerate": bool(sigma2 == 0),
    }
    if coeff_closed is not None:
        aux["coefficients_closed_form"] = as_list(coeff_closed)
    seq = LimitMomentSequence(
        kind=f"{kind}_normal",
        params={"m": m, "precision_bits": precision_bits},
        moments=cf,
        aux=aux,
        provenance="coefficient recurrence transferred to moments, "
        "cross-checked against closed-form Gaussian moments",
    )
    if table is None:
        return _store_cached(cache_dir, name, precision_bits, seq)
    return seq


def resolve_leaves_sign(m=2, n=800, precision_bits=160, table=None, cache_dir=None):
    """Decide the sign of the leaf-law quadratic recurrence executably.

    The printed recurrence carries a leading minus that would force a
    negative fourth moment.  This check computes the exact standardized
    fourth central moment of the leaf count at size n and compares it with
    the two candidate limits +3 sigma^4 and -3 sigma^4.  Returns (sign,
    report); sign +1 means the plain quadratic form without the extra
    minus.
    """
    from .enumeration import tree_counts
    from .moment_engine import central_stats, exact_moments, make_toll

    if table is None:
        table = tree_counts(m, n, cache_dir=cache_dir)
    tc = theorem_constants("leaves", m, precision_bits)
    mt = exact_moments(make_toll(m, "leaves"), table, 4, N=n)
    row = central_stats(mt, n)
    with _work(precision_bits):
        obs = _to_mpf(row.fourth_central) / mp.mpf(n) ** 2
        plus = 3 * tc.sigma2 ** 2
        minus = -plus
        sign = 1 if abs(obs - plus) <= abs(obs - minus) else -1
        report = {
            "m": m,
            "n": n,
            "observed_fourth_over_n2": obs,
            "candidate_plus": plus,
            "candidate_minus": minus,
            "relative_error_to_plus": abs(obs - plus) / abs(plus),
        }
    return sign, report


# -- disk round-trip ---------------------------------------------------------


def _encode(x):
    if isinstance(x, mp.mpf):
        return {"$mpf": mp.nstr(x, 80)}
    if isinstance(x, numbers.Rational) and not isinstance(x, int):
        return {"$frac": f"{x.numerator}/{x.denominator}"}
    if isinstance(x, dict):
        return {
            (",".join(map(str, k)) if isinstance(k, tuple) else str(k)): _encode(v)
            for k, v in x.items()
        }
    if isinstance(x, (list, tuple)):
        return [_encode(v) for v in x]
    return x


def _decode(x):
    if isinstance(x, dict):
        if set(x) == {"$mpf"}:
            # parse well above the 80 stored digits so a re-save reproduces
            # the same string; decoding at ambient precision would make
            # save -> load -> save drift by one rounding
            with mp.workprec(340):
                return mp.mpf(x["$mpf"])
        if set(x) == {"$frac"}:
            from fractions import Fraction

            return Fraction(x["$frac"])
        return {k: _decode(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_decode(v) for v in x]
    return x


def save_sequence(path, seq):
    """Write a moment sequence as JSON with decimal-string floats."""
    payload = {
        "kind": seq.kind,
        "params": _encode(seq.params),
        "moments": _encode(seq.moments),
        "aux": _encode(seq.aux),
        "provenance": seq.provenance,
    }
    atomic_write_text(path, json.dumps(payload, indent=1))


def load_sequence(path):
    with open(path) as fh:
        payload = json.load(fh)
    return LimitMomentSequence(
        kind=payload["kind"],
        params=_decode(payload["params"]),
        moments=_decode(payload["moments"]),
        aux=_decode(payload["aux"]),
        provenance=payload["provenance"],
    )
