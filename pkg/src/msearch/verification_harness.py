"""Orchestrated cross-checks tying the modules to the limit theorems.

Each check compares an executable quantity against an independent
prediction and reports observed value, expected value, and tolerance.
Where the finite-size corrections decay too slowly for an absolute
tolerance to be defensible (logarithmic terms especially), the check
asserts a trend instead: the value at the larger size must sit closer
to the target.  Budgeted runs skip any check whose cost estimate
exceeds the budget; a skipped check is never reported as passing.

Checks are independent and deterministic given their configuration.
The default runner executes them in catalog order in one process,
because two numeric backends keep working precision in process-global
state; ``run_suite(workers=...)`` distributes whole checks across
processes instead, which is safe.  Simulation checks parallelize
internally at the replication level via ``config.threads``.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from fractions import Fraction
from time import perf_counter

import gmpy2
import numpy as np
from mpmath import mp
from scipy import stats as _st

from .enumeration import brute_force_count, tree_counts
from .limit_distributions import J_integral, moments_Y_alpha, normal_limit_moments
from .moment_engine import (
    brute_force_moments,
    central_stats,
    degeneracy_check,
    exact_moments,
    make_toll,
)
from .singular_constants import expansion_coefficients, theorem_constants, transfer_ratio
from .tree_sampler import SplitSampler, monte_carlo, sample_tree, split_sample, tree_to_string


@dataclass
class HarnessConfig:
    cache_dir: str = None
    budget_seconds: float = None
    rng_seed: int = 0
    threads: int = 1


@dataclass
class CheckReport:
    check_id: str
    theorem_ref: str
    inputs: dict
    observed: object
    expected: object
    tolerance: object
    passed: bool
    runtime: float
    status: str
    detail: str = ""

    def to_dict(self, include_runtime=True):
        out = {
            "check_id": self.check_id,
            "theorem_ref": self.theorem_ref,
            "inputs": self.inputs,
            "observed": self.observed,
            "expected": self.expected,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "status": self.status,
            "detail": self.detail,
        }
        if include_runtime:
            out["runtime"] = self.runtime
        return out


@dataclass(frozen=True)
class _CheckDef:
    check_id: str
    theorem_ref: str
    fast: bool
    estimate_seconds: float
    fn: object


_CHECKS = {}


def _register(check_id, theorem_ref, fast, estimate_seconds):
    def deco(fn):
        _CHECKS[check_id] = _CheckDef(check_id, theorem_ref, fast, estimate_seconds, fn)
        return fn

    return deco


# tables are reused across checks within a process; sizes snap to a small
# schedule so a later check needing n=2000 can share the n=2100 build
_tables = {}
_SIZES = (64, 2100, 4000, 10000)


def _table(m, n_needed, cache_dir=None):
    size = next(s for s in _SIZES if s >= n_needed)
    have = _tables.get(m)
    if have is None or have.N < size:
        have = tree_counts(m, size, cache_dir=cache_dir)
        _tables[m] = have
    return have


def _f(x):
    """mpf/Fraction/int to float for reporting."""
    if isinstance(x, Fraction):
        return x.numerator / x.denominator
    return float(x)


def _frac_mpf(x):
    return mp.mpf(x.numerator) / x.denominator if isinstance(x, Fraction) else mp.mpf(x)


# -- catalog ------------------------------------------------------------------


@_register(
    "count-oracle",
    "recurrence for the number of distinct trees on n keys",
    fast=True,
    estimate_seconds=10,
)
def _check_count_oracle(cfg):
    mism = []
    for m in (2, 3, 4):
        table = _table(m, 8, cfg.cache_dir)
        for n in range(9):
            if brute_force_count(m, n) != table.counts[n]:
                mism.append({"m": m, "n": n})
    return (
        not mism,
        {"m": [2, 3, 4], "n_max": 8},
        {"mismatches": mism},
        {"mismatches": []},
        "exact equality",
        "",
    )


@_register(
    "closed-constants-m2",
    "closed forms of the singular expansion at branching factor two",
    fast=True,
    estimate_seconds=2,
)
def _check_closed_constants(cfg):
    sd = expansion_coefficients(2, 160)
    with mp.workprec(160):
        targets = {
            "rho": mp.mpf(1) / 4,
            "a0": mp.mpf(2),
            "a1": mp.mpf(-2),
            "a2": mp.mpf(2),
            "alpha_star": mp.mpf(1),
            "sigma_2": 1 / mp.sqrt(2),
        }
        got = {
            "rho": sd.rho,
            "a0": sd.a0,
            "a1": sd.a1,
            "a2": sd.a2,
            "alpha_star": sd.alpha_star,
            "sigma_2": sd.sigma_m,
        }
        worst = max(abs(got[k] - v) for k, v in targets.items())
        ok = worst < mp.mpf("1e-12")
        observed = {k: mp.nstr(v, 24) for k, v in got.items()}
        expected = {k: mp.nstr(v, 24) for k, v in targets.items()}
    return ok, {"m": 2}, observed, expected, 1e-12, f"worst |diff| = {mp.nstr(worst, 4)}"


@_register(
    "tau-asymptotics",
    "coefficient asymptotics transferred from the square-root singularity",
    fast=False,
    estimate_seconds=90,
)
def _check_tau_asymptotics(cfg):
    obs = {}
    ok = True
    for m in (2, 3):
        table = _table(m, 10_000, cfg.cache_dir)
        sd = expansion_coefficients(m, 192)
        with mp.workprec(192):
            e3 = abs(transfer_ratio(table, sd, 1_000) - 1)
            e4 = abs(transfer_ratio(table, sd, 10_000) - 1)
            obs[f"m{m}"] = {"rel_err_1e3": _f(e3), "rel_err_1e4": _f(e4)}
            ok = ok and e4 < mp.mpf("0.01") and e4 < e3
    return (
        ok,
        {"m": [2, 3], "n": [1_000, 10_000]},
        obs,
        {"rel_err_1e4": "< 0.01 and < rel_err_1e3"},
        "1% plus decreasing error",
        "",
    )


@_register(
    "moment-oracle",
    "additive-functional moment recurrence under the uniform model",
    fast=True,
    estimate_seconds=5,
)
def _check_moment_oracle(cfg):
    bad = []
    worst_float = 0.0
    for m in (2, 3):
        table = _table(m, 9, cfg.cache_dir)
        for kind in ("space", "leaves", "power", "shape"):
            toll = make_toll(m, kind, alpha=1 if kind == "power" else None)
            if kind == "shape":
                mt = exact_moments(toll, table, 3, N=9, mode="big-float(192)")
                with gmpy2.context(precision=192):
                    for n in range(m - 1, 10):
                        ref = brute_force_moments(toll, n, 3, bits=192)
                        for s in range(4):
                            d = abs(mt.moment(s, n) - ref[s]) / max(abs(ref[s]), 1)
                            worst_float = max(worst_float, float(d))
                            if d > gmpy2.mpfr("1e-20"):
                                bad.append({"m": m, "kind": kind, "n": n, "s": s})
            else:
                mt = exact_moments(toll, table, 3, N=9, mode="exact")
                for n in range(10):
                    ref = brute_force_moments(toll, n, 3)
                    for s in range(4):
                        if mt.moment(s, n) != ref[s]:
                            bad.append({"m": m, "kind": kind, "n": n, "s": s})
    return (
        not bad,
        {"m": [2, 3], "n_max": 9, "s_max": 3},
        {"mismatches": bad, "worst_float_rel": worst_float},
        {"mismatches": []},
        "exact / 1e-20 relative",
        "",
    )


@_register(
    "space-degenerate-m2",
    "deterministic space requirement at branching factor two",
    fast=True,
    estimate_seconds=3,
)
def _check_space_degenerate(cfg):
    table = _table(2, 100, cfg.cache_dir)
    toll = make_toll(2, "space")
    mt = exact_moments(toll, table, 2, N=100)
    nonzero = [n for n in range(101) if central_stats(mt, n).variance != 0]
    rep = degeneracy_check(toll, 100, table=table)
    witness_ok = rep.degenerate and all(rep.witness(n) == n for n in (1, 7, 50, 100))
    ok = not nonzero and rep.variance_agrees and witness_ok
    return (
        ok,
        {"m": 2, "n_max": 100},
        {
            "nonzero_variance_at": nonzero,
            "symbolically_degenerate": rep.degenerate,
            "witness_is_n": witness_ok,
        },
        {"nonzero_variance_at": [], "symbolically_degenerate": True, "witness_is_n": True},
        "exact",
        "",
    )


@_register(
    "leaves-mean-flat",
    "linear centering of the leaf-count mean",
    fast=True,
    estimate_seconds=15,
)
def _check_leaves_mean(cfg):
    obs = {}
    ok = True
    for m in (2, 3):
        table = _table(m, 2000, cfg.cache_dir)
        sd = expansion_coefficients(m, 192)
        mt = exact_moments(make_toll(m, "leaves"), table, 1, N=2000)
        with mp.workprec(192):
            c = sd.rho / sd.alpha_star
            d1 = abs(_frac_mpf(mt.moment(1, 1000)) - c * 1001)
            d2 = abs(_frac_mpf(mt.moment(1, 2000)) - c * 2001)
            drift = abs(d2 - d1)
            obs[f"m{m}"] = {"offset_1000": _f(d1), "offset_2000": _f(d2), "drift": _f(drift)}
            ok = ok and drift < mp.mpf("0.01")
    return ok, {"m": [2, 3]}, obs, {"drift": "< 0.01"}, 1e-2, ""


@_register(
    "space-variance-slope-m3",
    "linear variance growth of the space requirement",
    fast=True,
    estimate_seconds=15,
)
def _check_space_variance(cfg):
    table = _table(3, 2000, cfg.cache_dir)
    mt = exact_moments(make_toll(3, "space"), table, 2, N=2000)
    tc = theorem_constants("space", 3, 192, table=table, cache_dir=cfg.cache_dir)
    sd = expansion_coefficients(3, 192)
    with mp.workprec(192):
        target = 2 * tc.B2 / (-sd.a1)
        errs = {}
        for n in (500, 2000):
            v = _frac_mpf(central_stats(mt, n).variance) / n
            errs[n] = abs(v - target) / target
        ok = errs[2000] < mp.mpf("0.02") and errs[2000] < errs[500]
        observed = {
            "target": mp.nstr(target, 12),
            "rel_err_500": _f(errs[500]),
            "rel_err_2000": _f(errs[2000]),
        }
    return (
        ok,
        {"m": 3, "n": [500, 2000]},
        observed,
        {"rel_err_2000": "< 0.02 and < rel_err_500"},
        "2% plus decreasing error",
        "",
    )


@_register(
    "clt-exact-m3",
    "central limit regime for space and leaf counts",
    fast=False,
    estimate_seconds=60,
)
def _check_clt(cfg):
    table = _table(3, 4000, cfg.cache_dir)
    obs = {}
    ok = True
    for kind in ("space", "leaves"):
        mt = exact_moments(make_toll(3, kind), table, 4, N=4000)
        skews, kurts = [], []
        with mp.workprec(200):
            for n in (1000, 2000, 4000):
                row = central_stats(mt, n)
                skews.append(abs(float(row.skewness)))
                kurts.append(float(row.excess_kurtosis) + 3)
        obs[kind] = {"abs_skew": skews, "kurtosis": kurts}
        ok = ok and skews[-1] < 0.15 and skews[0] > skews[1] > skews[2]
        ok = ok and abs(kurts[-1] - 3) < 0.15
    return (
        ok,
        {"m": 3, "n": [1000, 2000, 4000], "kinds": ["space", "leaves"]},
        obs,
        {"abs_skew_4000": "< 0.15, decreasing", "kurtosis_4000": "within 0.15 of 3"},
        0.15,
        "",
    )


@_register(
    "shape-variance-trend-m2",
    "variance of the shape functional at order n log n",
    fast=False,
    estimate_seconds=30,
)
def _check_shape_trend(cfg):
    table = _table(2, 4000, cfg.cache_dir)
    mt = exact_moments(make_toll(2, "shape"), table, 2, N=4000, mode="big-float(192)")
    sd = expansion_coefficients(2, 192)
    with mp.workprec(192):
        target = 8 * (sd.a0 / sd.a1) ** 2 * (1 - mp.log(2))
        dists = []
        for n in (500, 1000, 2000, 4000):
            v = mp.mpf(str(central_stats(mt, n).variance)) / (n * mp.log(n))
            dists.append(_f(abs(v - target)))
        ok = all(b < a for a, b in zip(dists, dists[1:]))
        observed = {"target": mp.nstr(target, 12), "distance": dists}
    return (
        ok,
        {"m": 2, "n": [500, 1000, 2000, 4000]},
        observed,
        {"distance": "strictly decreasing"},
        "trend only; corrections decay logarithmically",
        "",
    )


@_register(
    "sampler-gof",
    "split law of the uniform model",
    fast=False,
    estimate_seconds=15,
)
def _check_sampler_gof(cfg):
    table = _table(2, 64, cfg.cache_dir)
    s = SplitSampler(2, table, rng_seed=cfg.rng_seed)
    reps = 100_000
    counts = {}
    for _ in range(reps):
        key = tree_to_string(sample_tree(s, 6))
        counts[key] = counts.get(key, 0) + 1
    exp = reps / 132
    stat = sum((c - exp) ** 2 / exp for c in counts.values()) + (132 - len(counts)) * exp
    p_shapes = float(_st.chi2.sf(stat, 131))

    s2 = SplitSampler(2, table, rng_seed=cfg.rng_seed + 1)
    reps2 = 30_000
    marg = [0] * 6
    for _ in range(reps2):
        marg[split_sample(s2, 6)[0]] += 1
    weights = [42, 14, 10, 10, 14, 42]
    stat2 = sum((c - reps2 * w / 132) ** 2 / (reps2 * w / 132) for c, w in zip(marg, weights))
    p_marginal = float(_st.chi2.sf(stat2, 5))

    ok = p_shapes > 1e-3 and p_marginal > 1e-3
    return (
        ok,
        {"m": 2, "n": 6, "reps": [reps, reps2], "seed": cfg.rng_seed},
        {"p_shapes": p_shapes, "p_marginal": p_marginal, "shapes_seen": len(counts)},
        {"p": "> 0.001"},
        1e-3,
        "",
    )


@_register(
    "mc-vs-engine",
    "agreement of simulation with the exact moment recurrence",
    fast=False,
    estimate_seconds=40,
)
def _check_mc_vs_engine(cfg):
    results = {}
    ok = True
    for m in (2, 3):
        table = _table(m, 2000, cfg.cache_dir)
        for kind in ("leaves", "shape"):
            toll = make_toll(m, kind)
            mode = "exact" if kind == "leaves" else "big-float(192)"
            row = central_stats(exact_moments(toll, table, 2, N=200, mode=mode), 200)
            summ = monte_carlo(
                SplitSampler(m, table, rng_seed=cfg.rng_seed),
                200,
                toll,
                100_000,
                threads=cfg.threads,
            )
            dm = abs(summ.mean - _f(row.mean)) / summ.se_mean
            dv = abs(summ.variance - _f(row.variance)) / summ.se_variance
            results[f"{kind}-m{m}"] = {"mean_dev_se": dm, "var_dev_se": dv}
            ok = ok and dm <= 4 and dv <= 4
    return (
        ok,
        {"m": [2, 3], "n": 200, "reps": 100_000, "seed": cfg.rng_seed},
        results,
        {"deviation": "<= 4 jackknife SEs"},
        "4 SE",
        "",
    )


@_register(
    "limit-anchors",
    "limit-law moments across the three scaling regimes",
    fast=True,
    estimate_seconds=15,
)
def _check_limit_anchors(cfg):
    items = {}
    with mp.workprec(200):
        j110 = J_integral(1, 1, 0, precision_bits=160)
        j220 = J_integral(2, 2, 0, precision_bits=160)
        items["J_110_vs_pi"] = _f(abs(j110 - mp.pi))
        items["J_220_vs_pi_8"] = _f(abs(j220 - mp.pi / 8))
        seq = moments_Y_alpha(1, 2, precision_bits=160, cache_dir=cfg.cache_dir)
        items["M1_vs_sqrt_pi_2"] = _f(abs(seq.moments[1] - mp.sqrt(mp.pi / 2)))
        items["M2_vs_5_3"] = _f(abs(seq.moments[2] - mp.mpf(5) / 3))
    shape = normal_limit_moments("shape", 2, 16, cache_dir=cfg.cache_dir)
    items["shape_recurrence_vs_closed"] = float(shape.aux["max_relative_disagreement"])
    ok = (
        items["J_110_vs_pi"] < 1e-8
        and items["J_220_vs_pi_8"] < 1e-8
        and items["M1_vs_sqrt_pi_2"] < 1e-10
        and items["M2_vs_5_3"] < 1e-10
        and items["shape_recurrence_vs_closed"] < 1e-10
    )
    return (
        ok,
        {"alpha": 1, "shape_pairs_to": 8},
        items,
        {"J": "< 1e-8", "M": "< 1e-10", "shape": "< 1e-10"},
        "per-item",
        "",
    )


@_register(
    "m-invariance",
    "branching-factor invariance of the scaled limit law",
    fast=False,
    estimate_seconds=30,
)
def _check_m_invariance(cfg):
    R = {}
    for m in (2, 3):
        table = _table(m, 2000, cfg.cache_dir)
        sd = expansion_coefficients(m, 192)
        mt = exact_moments(make_toll(m, "power", alpha=1), table, 4, N=2000, mode="big-float(192)")
        with mp.workprec(192):
            for n in (500, 2000):
                scale = sd.sigma_m / mp.mpf(n) ** mp.mpf("1.5")
                R[(m, n)] = [mp.mpf(str(mt.moment(s, n))) * scale ** s for s in range(5)]
    with mp.workprec(192):
        disc = {
            n: _f(max(abs(R[(2, n)][s] - R[(3, n)][s]) for s in range(1, 5)))
            for n in (500, 2000)
        }
    ok = disc[2000] < disc[500]
    return (
        ok,
        {"alpha": 1, "s_max": 4, "n": [500, 2000]},
        {"discrepancy_500": disc[500], "discrepancy_2000": disc[2000]},
        {"discrepancy_2000": "< discrepancy_500"},
        "trend",
        "",
    )


@_register(
    "model-contrast-slopes",
    "mean growth contrast between the uniform and permutation models",
    fast=False,
    estimate_seconds=90,
)
def _check_model_contrast(cfg):
    table = _table(2, 2000, cfg.cache_dir)
    toll = make_toll(2, "power", alpha=1)
    sizes = (250, 500, 1000, 2000)
    slopes = {}
    for model in ("uniform", "random_permutation"):
        means = []
        for n in sizes:
            summ = monte_carlo(
                SplitSampler(2, table, rng_seed=cfg.rng_seed + n, model=model),
                n,
                toll,
                20_000,
                threads=cfg.threads,
            )
            means.append(summ.mean)
        slopes[model] = float(np.polyfit(np.log(sizes), np.log(means), 1)[0])
    ok_u = abs(slopes["uniform"] - 1.5) <= 0.1
    ok_r = abs(slopes["random_permutation"] - 1.0) <= 0.1
    detail = ""
    if not ok_r:
        detail = (
            "the permutation-model mean grows like n ln n, so a finite-size "
            "log-log fit sits above 1; the fitted slope here is "
            f"{slopes['random_permutation']:.3f}"
        )
    return (
        ok_u and ok_r,
        {"m": 2, "sizes": list(sizes), "reps": 20_000, "seed": cfg.rng_seed},
        slopes,
        {"uniform": 1.5, "random_permutation": 1.0},
        0.1,
        detail,
    )


@_register(
    "degeneracy-dichotomy",
    "dichotomy between deterministic and spreading functionals",
    fast=True,
    estimate_seconds=10,
)
def _check_degeneracy_dichotomy(cfg):
    disagreements = []
    degenerate = 0
    for m in (2, 3):
        table = _table(m, 64, cfg.cache_dir)
        for b0 in range(-2, 3):
            for b1 in range(-2, 3):
                toll = make_toll(m, "custom", values=(b0, b1), rule="constant")
                rep = degeneracy_check(toll, 40, table=table)
                degenerate += rep.degenerate
                if not rep.variance_agrees:
                    disagreements.append({"m": m, "b0": b0, "b1": b1})
    return (
        not disagreements,
        {"m": [2, 3], "grid": "b0, b1 in -2..2", "n_max": 40},
        {"disagreements": disagreements, "degenerate_points": degenerate},
        {"disagreements": []},
        "exact equivalence",
        "",
    )


# -- runners ------------------------------------------------------------------


def check_ids(suite="full"):
    """Catalog order; 'fast' restricts to the cheap exact checks."""
    if suite not in ("fast", "full"):
        raise ValueError("suite must be 'fast' or 'full'")
    return [
        c.check_id for c in _CHECKS.values() if suite == "full" or c.fast
    ]


def _coerce(config):
    if config is None:
        return HarnessConfig()
    if isinstance(config, HarnessConfig):
        return config
    return HarnessConfig(**config)


def run_check(check_id, config=None):
    cfg = _coerce(config)
    cd = _CHECKS.get(check_id)
    if cd is None:
        raise ValueError(f"unknown check {check_id!r}; known: {', '.join(_CHECKS)}")
    if cfg.budget_seconds is not None and cd.estimate_seconds > cfg.budget_seconds:
        return CheckReport(
            check_id=check_id,
            theorem_ref=cd.theorem_ref,
            inputs={},
            observed=None,
            expected=None,
            tolerance=None,
            passed=False,
            runtime=0.0,
            status="skipped",
            detail=(
                f"estimated {cd.estimate_seconds:.0f}s exceeds the "
                f"{cfg.budget_seconds:.0f}s budget"
            ),
        )
    t0 = perf_counter()
    try:
        passed, inputs, observed, expected, tolerance, detail = cd.fn(cfg)
    except Exception as exc:
        return CheckReport(
            check_id=check_id,
            theorem_ref=cd.theorem_ref,
            inputs={},
            observed=None,
            expected=None,
            tolerance=None,
            passed=False,
            runtime=perf_counter() - t0,
            status="failed",
            detail=f"{type(exc).__name__}: {exc}",
        )
    return CheckReport(
        check_id=check_id,
        theorem_ref=cd.theorem_ref,
        inputs=inputs,
        observed=observed,
        expected=expected,
        tolerance=tolerance,
        passed=bool(passed),
        runtime=perf_counter() - t0,
        status="passed" if passed else "failed",
        detail=detail,
    )


def _run_one(args):
    check_id, cfg_dict = args
    return run_check(check_id, cfg_dict)


def run_suite(suite="full", only=None, config=None, workers=1):
    """Reports for the selected checks, in catalog order.

    only: a check id or list of ids, overriding the suite selection.
    workers > 1 runs whole checks in separate processes.
    """
    cfg = _coerce(config)
    if only is not None:
        ids = [only] if isinstance(only, str) else list(only)
        for cid in ids:
            if cid not in _CHECKS:
                raise ValueError(f"unknown check {cid!r}")
    else:
        ids = check_ids(suite)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_run_one, [(cid, asdict(cfg)) for cid in ids]))
    return [run_check(cid, cfg) for cid in ids]
