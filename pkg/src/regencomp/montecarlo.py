"""Monte Carlo sampling of regenerative compositions.

The sampler draws the first part of a composition of n by inverting the
cumulative first-part weights against a single uniform, then recurses on
the remainder.  The first-part law concentrates on small parts, so the
weight prefix is extended lazily in doubling blocks and cached per
remainder; block boundaries are fixed in advance, which keeps every cached
value independent of the order in which replicates happen to run.

Replicate streams come from a small counter-based generator, so any
replicate can be reproduced in isolation and partial summaries merge into
the same totals regardless of chunking or scheduling.
"""

import bisect
import math
import weakref
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import asymptotics, specfun

__all__ = [
    "CompositionSample",
    "CounterRng",
    "SimulationSummary",
    "ks_statistic",
    "sample_composition",
    "simulate",
]


# -- counter-based uniforms -------------------------------------------------

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_REP_SALT = 0xD2B74407B1CE6E93
_INV53 = 2.0**-53


def _mix64(x):
    """splitmix64 finalizer, bijective on 64-bit words."""
    x &= _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


class CounterRng:
    """Deterministic uniform stream for one replicate.

    Draw i of replicate rep is a pure function of (seed, rep, i), so a
    replicate can be regenerated without running any of the others.
    """

    def __init__(self, seed, rep=0):
        rep = int(rep)
        if rep < 0:
            raise ValueError("rep must be >= 0")
        self._base = _mix64(_mix64(int(seed)) ^ ((rep * _REP_SALT) & _MASK))
        self._i = 0

    def uniform(self):
        """Next value, uniform on [0, 1) with 53-bit resolution."""
        x = _mix64((self._base + self._i * _GOLDEN) & _MASK)
        self._i += 1
        return (x >> 11) * _INV53


# -- lazy prefix tables -----------------------------------------------------

_BLOCK = 2048  # first ladder rung; also the cutoff below which rows are full
_JUMP_PAD = 1.05  # headroom over the calibrated landing prediction
_CACHE_ELEMENTS = 1 << 28  # element budget for the big-remainder cache

# interleaved doubling gives rungs in ratio ~2^(1/4); the ladder is fixed at
# module level so cached block boundaries never depend on execution history
_RUNGS = [2048, 2435, 2896, 3444]


class _PrefixTable:
    """Per-model cache of cumulative first-part weights."""

    __slots__ = ("small", "big", "full", "elements", "cal")

    def __init__(self):
        self.small = {}  # m -> (cumulative sums as a list, phi_int(m))
        self.big = OrderedDict()  # m -> ndarray of cumulative sums, LRU
        self.full = {}  # m -> ndarray, one-shot reference route
        self.elements = 0
        # running ratio of landed index to exponent-table prediction; only
        # build sizes depend on it, draws are invariant to the ladder extent
        self.cal = 1.0


_TABLES = weakref.WeakKeyDictionary()


def _table_for(model):
    tab = _TABLES.get(model)
    if tab is None:
        tab = _PrefixTable()
        _TABLES[model] = tab
    return tab


def _weights(model, m, lo, hi, fast=False):
    if fast:
        w = model.binomial_moment_prefix_fast(m, lo, hi)
    else:
        w = model.binomial_moment_prefix(m, lo, hi)
    if not model.prefix_nonnegative:
        # rounding can push incomplete-beta differences a hair below zero
        w = np.maximum(w, 0.0)
    return w


def _canonical_end(k, m):
    """Smallest ladder rung at or above k, capped at m."""
    while _RUNGS[-1] < k:
        _RUNGS.append(_RUNGS[-4] << 1)
    e = _RUNGS[bisect.bisect_left(_RUNGS, k)]
    return e if e < m else m


def _extend_big(model, table, m, goal):
    """Grow the cached prefix for remainder m to at least goal entries.

    Blocks always cover canonical rungs and each block's values depend only
    on (model, m, rung), so the array contents never depend on which draws
    forced the growth.
    """
    cs = table.big.get(m)
    length = 0 if cs is None else len(cs)
    base = float(cs[-1]) if length else 0.0
    segs = []
    if length < goal:
        # one weights call for the whole span, then accumulate rung by rung;
        # the values match a rung-at-a-time build bit for bit because the
        # entries are bounds-independent and each rung restarts from a scalar
        w = _weights(model, m, length + 1, goal, fast=True)
        start = length
        while length < goal:
            end = _canonical_end(length + 1, m)
            seg = base + np.cumsum(w[length - start : end - start])
            base = float(seg[-1])
            segs.append(seg)
            length = end
    if segs:
        pieces = ([cs] if cs is not None else []) + segs
        cs = np.concatenate(pieces) if len(pieces) > 1 else pieces[0]
        table.elements += sum(len(s) for s in segs)
        table.big[m] = cs
    table.big.move_to_end(m)
    while table.elements > _CACHE_ELEMENTS and len(table.big) > 1:
        _, old = table.big.popitem(last=False)
        table.elements -= len(old)
    return cs


def _draw_first_big(model, table, m, target):
    cs = table.big.get(m)
    if cs is not None:
        table.big.move_to_end(m)
        if target <= cs[-1]:
            return min(int(np.searchsorted(cs, target, side="left")) + 1, m)
    # the hint runs through a per-model running calibration so a model with
    # only the crude default still gets tight builds after a few draws
    pred = model.prefix_crossing_hint(target, m)
    goal = _canonical_end(max(_BLOCK, int(pred * table.cal * _JUMP_PAD) + 1), m)
    while True:
        cs = _extend_big(model, table, m, goal)
        if target <= cs[-1] or len(cs) == m:
            r = min(int(np.searchsorted(cs, target, side="left")) + 1, m)
            if pred > _BLOCK:
                ratio = r / pred
                if ratio > 2.0:
                    ratio = 2.0
                table.cal += 0.05 * (ratio - table.cal)
            return r
        goal = _canonical_end(_undershoot_jump(cs, target, m), m)


def _undershoot_jump(cs, target, m):
    """Next build goal after the ladder stopped short of target.

    Weights decay roughly like 1/k locally, so integrating the last step
    height forward gives the crossing distance; the estimate only sizes the
    next block and is clamped so each retry still makes real progress."""
    k = len(cs)
    last = float(cs[-1] - cs[-2])
    gap = float(target - cs[-1])
    if last > 0.0:
        z = gap / (last * k)
        dist = k * math.expm1(z) if z < 40.0 else float(m)
    else:
        # flat spot (clamped weight); fall back to doubling
        dist = float(k)
    dist = min(dist * 1.05 + 1.0, float(m))
    return max(k + int(dist), k + (k >> 3) + 1)


def _draw_first(model, table, m, u, lazy):
    if m <= _BLOCK:
        entry = table.small.get(m)
        if entry is None:
            cs = np.cumsum(_weights(model, m, 1, m)).tolist()
            entry = (cs, model.phi_int(m))
            table.small[m] = entry
        cs, phi = entry
        return min(bisect.bisect_left(cs, u * phi) + 1, m)
    if lazy:
        return _draw_first_big(model, table, m, u * model.phi_int(m))
    cs = table.full.get(m)
    if cs is None:
        cs = np.cumsum(_weights(model, m, 1, m))
        table.full[m] = cs
    target = u * model.phi_int(m)
    return min(int(np.searchsorted(cs, target, side="left")) + 1, m)


def _sample_parts(model, table, n, rng, lazy):
    parts = []
    m = n
    while m > 0:
        r = _draw_first(model, table, m, rng.uniform(), lazy)
        parts.append(r)
        m -= r
    return parts


# -- public sampling API ----------------------------------------------------


@dataclass(frozen=True)
class CompositionSample:
    """Ordered parts of one sampled composition, first block first."""

    parts: tuple

    @property
    def n(self):
        return sum(self.parts)

    @property
    def num_parts(self):
        return len(self.parts)


def sample_composition(model, n, rng_stream, lazy=True):
    """Draw one composition of n part by part from the first-part law.

    One uniform is consumed per part.  With lazy=False the first part is
    inverted against the full weight vector; the lazy route must produce
    identical draws, it only avoids computing weights past the landing
    point.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    parts = _sample_parts(model, _table_for(model), n, rng_stream, bool(lazy))
    return CompositionSample(tuple(parts))


# -- replicate summaries ----------------------------------------------------


@dataclass(eq=False)
class SimulationSummary:
    """Merged statistics over independent composition replicates."""

    reps: int
    n: int
    seed: int
    r_max: int
    mean_K: float
    var_K: float
    skewness: float
    ks_statistic: float
    small_part_means: np.ndarray
    small_part_cov: np.ndarray
    z_scores: np.ndarray
    weight_failures: int
    k_min: int
    k_max: int


_CHUNK = 2048

_WORKER_MODEL = None


def _init_worker(model):
    global _WORKER_MODEL
    _WORKER_MODEL = model


def _chunk_stats(model, n, seed, start, count, r_max, z_cap):
    """Accumulate one chunk of replicates with exact integer sums."""
    table = _table_for(model)
    s1 = s2 = s3 = 0
    wf = 0
    k_min = n + 1
    k_max = 0
    psums = [0] * r_max
    cross = [[0] * r_max for _ in range(r_max)]
    zs = []
    for rep in range(start, start + count):
        rng = CounterRng(seed, rep)
        parts = _sample_parts(model, table, n, rng, True)
        k = len(parts)
        s1 += k
        s2 += k * k
        s3 += k * k * k
        if k < k_min:
            k_min = k
        if k > k_max:
            k_max = k
        total = 0
        c = [0] * r_max
        for p in parts:
            total += p
            if p <= r_max:
                c[p - 1] += 1
        if total != n:
            wf += 1
        for a in range(r_max):
            ca = c[a]
            if ca:
                psums[a] += ca
                row = cross[a]
                for b in range(r_max):
                    cb = c[b]
                    if cb:
                        row[b] += ca * cb
        if rep < z_cap:
            zs.append(asymptotics.clt_normalize(model, n, k))
    return s1, s2, s3, psums, cross, wf, k_min, k_max, zs


def _chunk_worker(args):
    return _chunk_stats(_WORKER_MODEL, *args)


def _skewness(reps, s1, s2, s3):
    # central moments from the exact power sums; the z-scores are an affine
    # map of k with positive scale, so this equals their skewness
    m1 = s1 / reps
    mu2 = s2 / reps - m1 * m1
    mu3 = s3 / reps - 3.0 * m1 * (s2 / reps) + 2.0 * m1**3
    if mu2 <= 0.0:
        return 0.0
    return mu3 / mu2**1.5


def simulate(model, n, reps, seed, r_max=5, threads=None, z_cap=20000):
    """Summaries over reps independent compositions of n.

    Replicate i always uses the counter stream (seed, i) and chunk sums are
    exact integers, so the result is bit-identical however the replicates
    are chunked or spread across workers.  z-scores keep the first z_cap
    replicates in index order.
    """
    n = int(n)
    reps = int(reps)
    seed = int(seed)
    r_max = int(r_max)
    z_cap = int(z_cap)
    if reps < 100:
        raise ValueError("reps must be >= 100")
    if n < 2:
        raise ValueError("n must be >= 2")
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    if z_cap < 20:
        raise ValueError("z_cap must be >= 20")

    chunks = [
        (n, seed, start, min(_CHUNK, reps - start), r_max, z_cap)
        for start in range(0, reps, _CHUNK)
    ]
    if threads is not None and int(threads) > 1:
        with ProcessPoolExecutor(
            max_workers=int(threads),
            initializer=_init_worker,
            initargs=(model,),
        ) as pool:
            results = list(pool.map(_chunk_worker, chunks))
    else:
        results = [_chunk_stats(model, *c) for c in chunks]

    s1 = s2 = s3 = 0
    wf = 0
    k_min = n + 1
    k_max = 0
    psums = [0] * r_max
    cross = [[0] * r_max for _ in range(r_max)]
    zs = []
    for c1, c2, c3, cp, cc, cwf, cmin, cmax, czs in results:
        s1 += c1
        s2 += c2
        s3 += c3
        wf += cwf
        k_min = min(k_min, cmin)
        k_max = max(k_max, cmax)
        for a in range(r_max):
            psums[a] += cp[a]
            row = cross[a]
            crow = cc[a]
            for b in range(r_max):
                row[b] += crow[b]
        zs.extend(czs)

    mean_k = s1 / reps
    var_k = (s2 * reps - s1 * s1) / reps / (reps - 1)
    if var_k < 0.0:
        var_k = 0.0
    means = np.array([p / reps for p in psums])
    cov = np.empty((r_max, r_max))
    for a in range(r_max):
        for b in range(r_max):
            cov[a, b] = (cross[a][b] * reps - psums[a] * psums[b]) / reps / (reps - 1)
    z_arr = np.array(zs, dtype=float)
    return SimulationSummary(
        reps=reps,
        n=n,
        seed=seed,
        r_max=r_max,
        mean_K=mean_k,
        var_K=var_k,
        skewness=_skewness(reps, s1, s2, s3),
        ks_statistic=ks_statistic(z_arr),
        small_part_means=means,
        small_part_cov=cov,
        z_scores=z_arr,
        weight_failures=wf,
        k_min=k_min,
        k_max=k_max,
    )


def ks_statistic(zs):
    """Sup distance between the empirical law of zs and the standard normal."""
    xs = np.sort(np.asarray(zs, dtype=float))
    nv = len(xs)
    if nv < 20:
        raise ValueError("need at least 20 values")
    cdf = specfun.normal_cdf(xs)
    idx = np.arange(1, nv + 1, dtype=float)
    d_plus = float(np.max(idx / nv - cdf))
    d_minus = float(np.max(cdf - (idx - 1.0) / nv))
    return max(d_plus, d_minus)
