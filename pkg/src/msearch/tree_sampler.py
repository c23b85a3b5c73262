"""Exact sampling of uniformly random m-ary search trees.

The split law at the root factorizes through partial convolution powers
of the count series, so a tree is drawn root-down: the first subtree
size from its exact marginal, the rest conditionally, each by
big-integer inverse CDF on a word stream.  Functionals accumulate along
an explicit stack (uniform trees are of depth order sqrt(n), deep
enough to kill the call stack).  Bulk summaries run a size-major
batched simulation on counter-based per-block streams, so the numbers
never depend on thread count.

The random-permutation model replaces the split law by the uniform
distribution on compositions; it exists as a contrast baseline for the
toll-growth table, not as an object of study.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

_BLOCK = 4096
# exact-path draws get a stream index far above any block index
_EXACT_STREAM = 1 << 62
_MODELS = {
    "uniform": "uniform",
    "rp": "random_permutation",
    "random_permutation": "random_permutation",
}


@dataclass
class SplitSampler:
    """Source of exact split draws for one branching factor and table."""

    m: int
    table: object
    rng_seed: int = 0
    model: str = "uniform"

    def __post_init__(self):
        if self.m != self.table.m:
            raise ValueError("sampler and table disagree on the branching factor")
        if self.model not in _MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        self.model = _MODELS[self.model]
        if not 0 <= self.rng_seed < 1 << 64:
            raise ValueError("seed must fit in 64 bits")
        self._words = iter(())
        self._word_blocks = 0
        self._cdf_cache = {}
        self._log_tables = None

    # -- exact word stream ----------------------------------------------------

    def _next_word(self):
        for w in self._words:
            return int(w)
        gen = np.random.Generator(
            np.random.Philox(key=(self.rng_seed << 64) | (_EXACT_STREAM + self._word_blocks))
        )
        self._word_blocks += 1
        buf = gen.integers(0, 1 << 64, size=256, dtype=np.uint64)
        self._words = iter(buf)
        return int(next(self._words))

    def _draw_below(self, total):
        # uniform integer in [0, total) by rejection on whole bit windows,
        # so the huge weights never suffer modulo bias
        k = total.bit_length()
        words = (k + 63) // 64
        shift = 64 * words - k
        while True:
            u = 0
            for _ in range(words):
                u = (u << 64) | self._next_word()
            u >>= shift
            if u < total:
                return u


def _stage_total(sampler, slots, rem):
    if sampler.model == "uniform":
        return sampler.table.conv_cache[slots][rem]
    return math.comb(rem + slots - 1, slots - 1)


def _stage_weight(sampler, slots, rem, j):
    if sampler.model == "uniform":
        return sampler.table.counts[j] * sampler.table.conv_cache[slots - 1][rem - j]
    return math.comb(rem - j + slots - 2, slots - 2)


def split_sample(sampler, n):
    """One draw of the subtree-size vector at the root of an n-key tree."""
    m = sampler.m
    if n > sampler.table.N:
        raise ValueError("table too short for the requested size")
    if n < m - 1:
        raise ValueError("splits exist only at sizes >= m-1")
    rem = n - (m - 1)
    parts = []
    for i in range(m - 1):
        slots = m - i
        if rem == 0:
            parts.append(0)
            continue
        total = _stage_total(sampler, slots, rem)
        u = sampler._draw_below(total)
        cum = 0
        j = 0
        while True:
            cum += _stage_weight(sampler, slots, rem, j)
            if u < cum:
                break
            j += 1
        parts.append(j)
        rem -= j
    parts.append(rem)
    return tuple(parts)


def sample_tree(sampler, n):
    """One uniformly random tree as nested {size, children} nodes."""
    if n < 0 or n > sampler.table.N:
        raise ValueError("size outside the table")
    m = sampler.m
    root = {"size": n, "children": []}
    stack = [root]
    while stack:
        node = stack.pop()
        if node["size"] <= m - 2:
            continue
        for j in split_sample(sampler, node["size"]):
            child = {"size": j, "children": []}
            node["children"].append(child)
            stack.append(child)
    return root


def tree_to_string(root):
    """Canonical serialization: leaf sizes verbatim, children in order."""
    out = []
    stack = [("node", root)]
    while stack:
        what, payload = stack.pop()
        if what == "text":
            out.append(payload)
        elif not payload["children"]:
            out.append(str(payload["size"]))
        else:
            out.append("(")
            stack.append(("text", ")"))
            children = payload["children"]
            for i in range(len(children) - 1, -1, -1):
                stack.append(("node", children[i]))
                if i:
                    stack.append(("text", ","))
    return "".join(out)


def sample_functional(sampler, n, toll):
    """One draw of the additive functional with the given toll.

    Exact tolls accumulate in exact arithmetic; the log-shape toll in
    double precision, where statistical error dominates rounding.
    """
    if toll.m != sampler.m:
        raise ValueError("toll and sampler disagree on the branching factor")
    if n > sampler.table.N:
        raise ValueError("table too short for the requested size")
    m = sampler.m
    exact = toll.kind != "shape" and toll.is_exact
    memo = {}

    def toll_at(s):
        if s not in memo:
            if s <= m - 2:
                memo[s] = toll.initial[s]
            elif exact:
                memo[s] = toll.b(s)
            else:
                memo[s] = float(toll.b_approx(s, 53))
        return memo[s]

    total = 0 if exact else 0.0
    stack = [n]
    while stack:
        s = stack.pop()
        total += toll_at(s)
        if s >= m - 1:
            stack.extend(split_sample(sampler, s))
    return total


# -- batched Monte Carlo ------------------------------------------------------


def _toll_vector(toll, n, m):
    vec = np.empty(n + 1)
    for s in range(n + 1):
        if s <= m - 2:
            vec[s] = float(toll.initial[s])
        elif toll.kind != "shape" and toll.is_exact:
            vec[s] = float(toll.b(s))
        else:
            vec[s] = float(toll.b_approx(s, 53))
    return vec


def _ensure_log_tables(sampler, n):
    if sampler._log_tables is not None and sampler._log_tables[0] >= n:
        return
    counts = sampler.table.counts
    logs = {
        k: np.array([math.log(v) for v in sampler.table.conv_cache[k][: n + 1]])
        for k in range(1, sampler.m)
    }
    sampler._log_tables = (n, np.array([math.log(v) for v in counts[: n + 1]]), logs)


def _stage_cdf(sampler, slots, rem):
    key = (sampler.model, slots, rem)
    cdf = sampler._cdf_cache.get(key)
    if cdf is None:
        if sampler.model == "uniform":
            _, ltau, lconv = sampler._log_tables
            logw = ltau[: rem + 1] + lconv[slots - 1][rem::-1]
        else:
            t = np.arange(rem, -1, -1, dtype=np.float64)
            logw = gammaln(t + slots - 1) - gammaln(t + 1)
        p = np.exp(logw - logw.max())
        cdf = np.cumsum(p)
        cdf /= cdf[-1]
        cdf[-1] = 1.0
        sampler._cdf_cache[key] = cdf
    return cdf


def _block_values(sampler, n, tvec, block):
    """Functional values for one block of replications, batched by size."""
    m = sampler.m
    rng = np.random.Generator(np.random.Philox(key=(sampler.rng_seed << 64) | block))
    totals = np.full(_BLOCK, tvec[n])
    if n <= m - 2:
        return totals
    buckets = [[] for _ in range(n + 1)]
    # the root contribution is already in totals; queue the root splits
    buckets[n].append(np.arange(_BLOCK, dtype=np.int64))
    for s in range(n, m - 2, -1):
        if not buckets[s]:
            continue
        idx = np.concatenate(buckets[s])
        buckets[s] = None
        if s < n:
            np.add.at(totals, idx, tvec[s])
        R = s - (m - 1)
        if R == 0:
            # every child is an empty boundary slot; no randomness to spend
            np.add.at(totals, idx, m * tvec[0])
            continue
        rem = np.full(idx.shape, R, dtype=np.int64)
        cols = []
        for stage in range(m - 1):
            slots = m - stage
            u = rng.random(rem.shape[0])
            j = np.zeros_like(rem)
            order = np.argsort(rem, kind="stable")
            rs = rem[order]
            cuts = np.flatnonzero(np.r_[True, rs[1:] != rs[:-1]])
            ends = np.r_[cuts[1:], rs.size]
            for a, b in zip(cuts, ends):
                r = int(rs[a])
                if r == 0:
                    continue
                sel = order[a:b]
                cdf = _stage_cdf(sampler, slots, r)
                j[sel] = np.searchsorted(cdf, u[sel], side="right")
            cols.append(j)
            rem = rem - j
        cols.append(rem)
        for c in cols:
            small = c <= m - 2
            if small.any():
                np.add.at(totals, idx[small], tvec[c[small]])
            big = ~small
            if big.any():
                cb, ib = c[big], idx[big]
                for sz in np.unique(cb):
                    buckets[sz].append(ib[cb == sz])
    return totals


@dataclass
class SimulationSummary:
    """Moment summary of one Monte Carlo run with jackknife error bars."""

    m: int
    n: int
    reps: int
    seed: int
    model: str
    toll_kind: str
    mean: float
    variance: float
    skewness: float
    kurtosis: float
    se_mean: float
    se_variance: float
    se_skewness: float
    se_kurtosis: float
    histogram_edges: list
    histogram_counts: list
    elapsed_seconds: float

    def to_dict(self, include_elapsed=True):
        out = {
            "m": self.m,
            "n": self.n,
            "reps": self.reps,
            "seed": self.seed,
            "model": self.model,
            "toll_kind": self.toll_kind,
            "mean": self.mean,
            "variance": self.variance,
            "skewness": self.skewness,
            "kurtosis": self.kurtosis,
            "se_mean": self.se_mean,
            "se_variance": self.se_variance,
            "se_skewness": self.se_skewness,
            "se_kurtosis": self.se_kurtosis,
            "histogram_edges": self.histogram_edges,
            "histogram_counts": self.histogram_counts,
        }
        if include_elapsed:
            out["elapsed_seconds"] = self.elapsed_seconds
        return out


def _central(raw1, raw2, raw3, raw4):
    m2 = raw2 - raw1 ** 2
    m3 = raw3 - 3 * raw1 * raw2 + 2 * raw1 ** 3
    m4 = raw4 - 4 * raw1 * raw3 + 6 * raw1 ** 2 * raw2 - 3 * raw1 ** 4
    return m2, m3, m4


def _standardized(m2, m3, m4):
    with np.errstate(divide="ignore", invalid="ignore"):
        skew = m3 / np.where(m2 > 0, m2, np.nan) ** 1.5
        kurt = m4 / np.where(m2 > 0, m2, np.nan) ** 2
    return skew, kurt


def monte_carlo(sampler, n, toll, reps, threads=1, bins=64):
    """Summary over independent replications, reproducible at any thread count."""
    if reps < 2:
        raise ValueError("need at least two replications")
    if toll.m != sampler.m:
        raise ValueError("toll and sampler disagree on the branching factor")
    if n > sampler.table.N:
        raise ValueError("table too short for the requested size")
    t0 = time.perf_counter()
    _ensure_log_tables(sampler, n)
    tvec = _toll_vector(toll, n, sampler.m)
    blocks = (reps + _BLOCK - 1) // _BLOCK
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(
                pool.map(lambda b: _block_values(sampler, n, tvec, b), range(blocks))
            )
    else:
        parts = [_block_values(sampler, n, tvec, b) for b in range(blocks)]
    values = np.concatenate(parts)[:reps]

    raw = [float(np.mean(values ** p)) for p in (1, 2, 3, 4)]
    m2, m3, m4 = _central(*raw)
    variance = m2 * reps / (reps - 1)
    skew, kurt = _standardized(m2, m3, m4)

    # delete-a-group jackknife on contiguous groups
    G = max(2, min(50, reps // 2))
    bounds = np.linspace(0, reps, G + 1).astype(np.int64)
    lens = np.diff(bounds)
    gs = [np.add.reduceat(values ** p, bounds[:-1]) for p in (1, 2, 3, 4)]
    tot = [float(np.sum(values ** p)) for p in (1, 2, 3, 4)]
    kept = reps - lens
    d1, d2, d3, d4 = ((tot[p] - gs[p]) / kept for p in range(4))
    jm2, jm3, jm4 = _central(d1, d2, d3, d4)
    jvar = jm2 * kept / np.maximum(kept - 1, 1)
    jskew, jkurt = _standardized(jm2, jm3, jm4)

    def se(th):
        th = np.asarray(th, dtype=np.float64)
        if not np.all(np.isfinite(th)):
            return float("nan")
        return float(np.sqrt((G - 1) / G * np.sum((th - th.mean()) ** 2)))

    counts, edges = np.histogram(values, bins=bins)
    summary = SimulationSummary(
        m=sampler.m,
        n=n,
        reps=reps,
        seed=sampler.rng_seed,
        model=sampler.model,
        toll_kind=toll.label,
        mean=raw[0],
        variance=float(variance),
        skewness=float(skew),
        kurtosis=float(kurt),
        se_mean=se(d1),
        se_variance=se(jvar),
        se_skewness=se(jskew),
        se_kurtosis=se(jkurt),
        histogram_edges=[float(e) for e in edges],
        histogram_counts=[int(c) for c in counts],
        elapsed_seconds=time.perf_counter() - t0,
    )
    assert sum(summary.histogram_counts) == reps
    assert summary.variance >= 0
    return summary
