"""Command-line front end: enumeration, constants, moments, limits,
simulation, and the check suite, with persistent caches and plot-ready
CSV output.

Every command is reproducible: given the same flags and a warm cache the
output is byte-identical, so wall-clock fields never reach stdout or
output files.  High-precision values are rendered as decimal strings at
a digit count matching the working precision; plain double-precision
statistics are emitted as JSON numbers, which are already exact decimal
renderings of their values.
"""

import argparse
import io
import json
import os
import sys
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
from mpmath import mp

from .enumeration import atomic_write_text, tree_counts
from .limit_distributions import (
    moments_Y_alpha,
    moments_Y_half,
    normal_limit_moments,
)
from .moment_engine import central_stats, exact_moments, make_toll
from .singular_constants import expansion_coefficients, theorem_constants
from .tree_sampler import SplitSampler, monte_carlo
from .verification_harness import HarnessConfig, run_suite


@dataclass
class RunConfig:
    """One command invocation; serializing it captures the whole run."""

    command: str
    options: dict

    @classmethod
    def from_args(cls, args):
        skip = {"func", "command"}
        options = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
        return cls(command=args.command, options=options)

    def to_dict(self):
        return {"command": self.command, "options": self.options}


def _digits(bits):
    # decimal digits actually carried by the binary precision
    return max(6, int(bits * 0.30103))


def _dstr(x, digits):
    """Decimal-string rendering for exact and multiprecision values."""
    if x is None:
        return None
    if isinstance(x, int):
        return str(x)
    with mp.workprec(int(digits * 3.33) + 16):
        if isinstance(x, Fraction):
            return mp.nstr(mp.mpf(x.numerator) / x.denominator, digits)
        if isinstance(x, (gmpy2.mpfr, float)):
            return mp.nstr(mp.mpf(str(x)), digits)
        return mp.nstr(+x, digits)


def _alpha_of(text):
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"cannot parse exponent {text!r}; use forms like 1, 1/4, 0.25")


def _parse_toll(token, m):
    if token in ("space", "leaves", "shape"):
        return make_toll(m, token)
    if token.startswith("power:"):
        return make_toll(m, "power", alpha=_alpha_of(token[len("power:"):]))
    raise ValueError(
        f"unknown toll {token!r}; expected space, leaves, shape, or power:ALPHA"
    )


def _resolve_cache(flag_value):
    if flag_value is not None:
        return flag_value or None
    return os.environ.get("MSEARCH_CACHE") or "cache"


def _emit(text, out_path):
    if out_path:
        atomic_write_text(out_path, text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


# -- commands -----------------------------------------------------------------


def _cmd_enumerate(args):
    table = tree_counts(args.m, args.n, cache_dir=_resolve_cache(args.cache))
    if args.format == "json":
        _emit(json.dumps(table.counts, separators=(",", ":")), args.out)
    else:
        buf = io.StringIO()
        buf.write("n,tau\n")
        for n, c in enumerate(table.counts):
            buf.write(f"{n},{c}\n")
        _emit(buf.getvalue(), args.out)
    return 0


def _cmd_constants(args):
    bits = args.bits
    digits = _digits(bits)
    sd = expansion_coefficients(args.m, bits)
    tc = theorem_constants(args.toll, args.m, bits, cache_dir=_resolve_cache(args.cache))
    with mp.workprec(bits):
        payload = {
            "m": args.m,
            "toll": tc.toll_kind,
            "precision_bits": bits,
            "singular": {
                "rho": _dstr(sd.rho, digits),
                "w_rho": _dstr(sd.w_rho, digits),
                "a0": _dstr(sd.a0, digits),
                "a1": _dstr(sd.a1, digits),
                "a2": _dstr(sd.a2, digits),
                "alpha_star": _dstr(sd.alpha_star, digits),
                "c0": _dstr(sd.c0, digits),
                "sigma_m": _dstr(sd.sigma_m, digits),
                "rho_bracket": [_dstr(b, digits) for b in sd.rho_bracket],
                "rho_residual": _dstr(sd.rho_residual, 6),
            },
            "constants": {
                "C": _dstr(tc.C, digits),
                "d1": _dstr(tc.d1, digits),
                "d0": _dstr(tc.d0, digits),
                "eta_half": _dstr(tc.eta_half, digits),
                "delta1": _dstr(tc.delta1, digits),
                "B2": _dstr(tc.B2, digits),
                "sigma2": _dstr(tc.sigma2, digits),
                "tail_error_bound": _dstr(tc.tail_error_bound, 6),
            },
        }
    _emit(json.dumps(payload, indent=2), args.out)
    return 0


def _cmd_moments(args):
    if args.mode == "exact":
        mode = "exact"
    elif args.mode.startswith("float:"):
        mode = f"big-float({int(args.mode[len('float:'):])})"
    else:
        raise ValueError(f"unknown mode {args.mode!r}; use exact or float:BITS")
    toll = _parse_toll(args.toll, args.m)
    table = tree_counts(args.m, args.n, cache_dir=_resolve_cache(args.cache))
    mt = exact_moments(toll, table, args.smax, N=args.n, mode=mode)
    digits = args.digits

    buf = io.StringIO()
    buf.write("n,s,mu_exact,mean,var,skew,kurt\n")
    for n in range(args.n + 1):
        row = central_stats(mt, n) if args.smax >= 1 else None
        stats = ["", "", "", ""]
        if row is not None:
            stats[0] = _dstr(row.mean, digits)
            if row.variance is not None:
                stats[1] = _dstr(row.variance, digits)
            if row.skewness is not None:
                stats[2] = _dstr(row.skewness, digits)
            if row.excess_kurtosis is not None:
                stats[3] = _dstr(row.excess_kurtosis + 3, digits)
        for s in range(1, args.smax + 1):
            mu = _dstr(mt.moment(s, n), digits)
            buf.write(f"{n},{s},{mu},{stats[0]},{stats[1]},{stats[2]},{stats[3]}\n")
    _emit(buf.getvalue(), args.out)
    return 0


def _cmd_limits(args):
    law = args.law
    bits = args.bits
    cache = _resolve_cache(args.cache)
    if law.startswith("yalpha:"):
        seq = moments_Y_alpha(
            _alpha_of(law[len("yalpha:"):]), args.smax, precision_bits=bits, cache_dir=cache
        )
    elif law == "yhalf":
        seq = moments_Y_half(args.smax, precision_bits=bits, cache_dir=cache)
    elif law in ("shape", "space", "leaves"):
        seq = normal_limit_moments(law, args.m, args.smax, precision_bits=bits, cache_dir=cache)
    else:
        raise ValueError(
            f"unknown law {law!r}; expected yalpha:A, yhalf, shape, space, or leaves"
        )
    digits = _digits(bits)
    with mp.workprec(bits):
        payload = {
            "law": law,
            "params": {
                k: (str(v) if isinstance(v, Fraction) else v)
                for k, v in seq.params.items()
            },
            "moments": [_dstr(v, digits) for v in seq.moments],
            "provenance": seq.provenance,
        }
        scaling = seq.aux.get("scaling")
        if scaling:
            payload["scaling"] = scaling
    _emit(json.dumps(payload, indent=2), args.out)
    return 0


def _cmd_simulate(args):
    toll = _parse_toll(args.toll, args.m)
    table = tree_counts(args.m, args.n, cache_dir=_resolve_cache(args.cache))
    sampler = SplitSampler(args.m, table, rng_seed=args.seed, model=args.model)
    summary = monte_carlo(
        sampler, args.n, toll, args.reps, threads=args.threads, bins=args.bins
    )
    payload = {
        "config": RunConfig.from_args(args).to_dict(),
        # wall-clock time stays off the record so reruns are byte-identical
        "summary": summary.to_dict(include_elapsed=False),
    }
    _emit(json.dumps(payload, indent=2), args.out)
    if args.histogram:
        buf = io.StringIO()
        buf.write("bin_left,bin_right,count\n")
        edges = summary.histogram_edges
        for i, c in enumerate(summary.histogram_counts):
            buf.write(f"{edges[i]!r},{edges[i + 1]!r},{c}\n")
        atomic_write_text(args.histogram, buf.getvalue())
    return 0


def _cmd_verify(args):
    cfg = HarnessConfig(
        cache_dir=_resolve_cache(args.cache),
        budget_seconds=args.budget,
        rng_seed=args.seed,
        threads=args.threads,
    )
    reports = run_suite(
        args.suite, only=args.only or None, config=cfg, workers=args.workers
    )
    lines = []
    for r in reports:
        tag = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[r.status]
        line = f"{tag} {r.check_id}"
        if r.status != "passed" and r.detail:
            line += f"  ({r.detail})"
        lines.append(line)
    n_pass = sum(r.status == "passed" for r in reports)
    n_fail = sum(r.status == "failed" for r in reports)
    n_skip = sum(r.status == "skipped" for r in reports)
    lines.append(f"{n_pass} passed, {n_fail} failed, {n_skip} skipped")
    sys.stdout.write("\n".join(lines) + "\n")
    if args.report:
        payload = {
            "suite": args.suite,
            "config": RunConfig.from_args(args).to_dict(),
            "checks": [r.to_dict(include_runtime=False) for r in reports],
        }
        atomic_write_text(args.report, json.dumps(payload, indent=2))
    return 1 if n_fail else 0


# -- parser -------------------------------------------------------------------


def _add_cache(p):
    p.add_argument(
        "--cache",
        default=None,
        metavar="DIR",
        help="cache directory (default: $MSEARCH_CACHE, else ./cache)",
    )


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="msearch",
        description="Exact and asymptotic analysis of additive functionals "
        "on random m-ary search trees.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", help="exact tree counts tau_0..tau_N")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", default=None, metavar="FILE")
    _add_cache(p)
    p.set_defaults(func=_cmd_enumerate)

    p = sub.add_parser("constants", help="singularity and limit-theorem constants")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--toll", required=True, help="power:ALPHA, shape, space, or leaves")
    p.add_argument("--bits", type=int, default=160)
    p.add_argument("--format", choices=("json",), default="json")
    p.add_argument("--out", default=None, metavar="FILE")
    _add_cache(p)
    p.set_defaults(func=_cmd_constants)

    p = sub.add_parser("moments", help="exact moment tables as CSV")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--toll", required=True)
    p.add_argument("--smax", type=int, default=2)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--mode", default="exact", help="exact or float:BITS")
    p.add_argument("--digits", type=int, default=20)
    p.add_argument("--out", default=None, metavar="FILE.csv")
    _add_cache(p)
    p.set_defaults(func=_cmd_moments)

    p = sub.add_parser("limits", help="limit-law moment sequences")
    p.add_argument(
        "--law", required=True, help="yalpha:A, yhalf, shape, space, or leaves"
    )
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--smax", type=int, default=8)
    p.add_argument("--bits", type=int, default=160)
    p.add_argument("--format", choices=("json",), default="json")
    p.add_argument("--out", default=None, metavar="FILE")
    _add_cache(p)
    p.set_defaults(func=_cmd_limits)

    p = sub.add_parser("simulate", help="Monte Carlo summary for one toll")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--toll", required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument(
        "--model", choices=("uniform", "rp", "random_permutation"), default="uniform"
    )
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--out", default=None, metavar="FILE.json")
    p.add_argument("--histogram", default=None, metavar="FILE.csv")
    _add_cache(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("verify", help="run the cross-check suite")
    p.add_argument("--suite", choices=("fast", "full"), default="fast")
    p.add_argument("--only", nargs="*", default=None, metavar="ID")
    p.add_argument("--report", default=None, metavar="FILE.json")
    p.add_argument("--budget", type=float, default=None, metavar="SECONDS")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    _add_cache(p)
    p.set_defaults(func=_cmd_verify)

    return parser


def dispatch(argv):
    """Route argv to a command; exit code 2 for flag errors, 1 for module errors."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
