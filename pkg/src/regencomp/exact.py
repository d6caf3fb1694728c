"""Exact finite-n laws of the composition built from the first-part recursion.

Everything rests on one fact: conditionally on the first part having size r,
the rest of a composition of n is a fresh composition of n - r.  All tables
here are therefore a single forward pass over n, consuming one first-part
row per step and reusing previously computed entries.
"""

from dataclasses import dataclass

import numpy as np

from .errors import TableRangeError

# Ceiling for the pmf DP working set (bytes); the full (n+1) x (n+1)
# triangle of intermediate rows is kept, 8 bytes per entry.
PMF_MEMORY_BUDGET = 800_000_000


class PatternSpec:
    """A set of part sizes to count, given by a membership predicate.

    The predicate must be decidable for every part size up to the n in use.
    """

    def __init__(self, membership, description):
        self.membership = membership
        self.description = description

    @classmethod
    def all_parts(cls):
        return cls(lambda r: True, "all parts")

    @classmethod
    def single(cls, r):
        r = int(r)
        if r < 1:
            raise ValueError("part size must be a positive integer")
        return cls(lambda s, _r=r: s == _r, "{%d}" % r)

    @classmethod
    def up_to(cls, r):
        r = int(r)
        if r < 1:
            raise ValueError("part size must be a positive integer")
        return cls(lambda s, _r=r: s <= _r, "{1..%d}" % r)

    @classmethod
    def from_set(cls, parts):
        fixed = frozenset(int(p) for p in parts)
        if not fixed:
            raise ValueError("pattern set must be nonempty")
        if min(fixed) < 1:
            raise ValueError("part sizes must be positive integers")
        desc = "{" + ",".join(str(p) for p in sorted(fixed)) + "}"
        return cls(lambda s, _f=fixed: s in _f, desc)

    def indicator(self, n_max):
        """0/1 vector over part sizes 1..n_max, aligned with weight rows."""
        return np.array(
            [1.0 if self.membership(r) else 0.0 for r in range(1, int(n_max) + 1)]
        )

    def __repr__(self):
        return "PatternSpec(%s)" % self.description


@dataclass
class FirstPartLaw:
    """Distribution of the first part; weights[r] indexes by part size,
    entry 0 is unused and zero."""

    n: int
    weights: np.ndarray


@dataclass
class PartsPMF:
    n: int
    probs: np.ndarray  # probs[k] = P(number of parts = k), k = 0..n


@dataclass
class MomentTable:
    """First and second moments of a pattern count, indexed by n = 0..n_max."""

    n_max: int
    mean: np.ndarray
    second_moment: np.ndarray
    target: PatternSpec

    def variance(self):
        return self.second_moment - self.mean**2

    def factorial_moment(self, order):
        """E K(K-1)...(K-order+1); only orders 1 and 2 are derivable from
        the stored power moments."""
        if order == 1:
            return self.mean.copy()
        if order == 2:
            return self.second_moment - self.mean
        raise ValueError("only factorial moments of order 1 and 2 are available")


def first_part_law(model, n):
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    weights = np.zeros(n + 1)
    weights[1:] = model.first_part_row(n)
    return FirstPartLaw(n, weights)


def parts_pmf(model, n, memory_budget=PMF_MEMORY_BUDGET):
    """Exact distribution of the number of parts.

    q[m, k] = sum_r w[m, r] q[m-r, k-1] with q[0, 0] = 1; the full triangle
    of rows 0..n is kept so the recursion is one matrix-vector product per m.
    """
    n = int(n)
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return PartsPMF(0, np.ones(1))
    need = 8 * (n + 1) * (n + 1)
    if need > memory_budget:
        raise TableRangeError(
            "pmf table for n=%d needs %d bytes, budget is %d" % (n, need, memory_budget)
        )
    q = np.zeros((n + 1, n + 1))
    q[0, 0] = 1.0
    for m in range(1, n + 1):
        # reversed weights align row m-r of the triangle with part size r
        wrev = model.first_part_row(m)[::-1]
        q[m, 1 : m + 1] = wrev @ q[:m, :m]
    return PartsPMF(n, q[n].copy())


def _pattern_dp(model, n_max, ind):
    """Forward recursion for the mean and second moment of a pattern count.

    e[n] = sum_r w[n,r] (1(r in E) + e[n-r])
    s[n] = sum_r w[n,r] (s[n-r] + 2 1(r in E) e[n-r] + 1(r in E))
    """
    e = np.zeros(n_max + 1)
    s = np.zeros(n_max + 1)
    for n in range(1, n_max + 1):
        w = model.first_part_row(n)
        wrev = w[::-1]
        hit = float(np.dot(w, ind[:n]))
        wirev = (w * ind[:n])[::-1]
        ecross = float(np.dot(wirev, e[:n]))
        e[n] = hit + float(np.dot(wrev, e[:n]))
        s[n] = float(np.dot(wrev, s[:n])) + 2.0 * ecross + hit
    return e, s


def moments_pattern(model, n_max, pattern):
    n_max = int(n_max)
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    e, s = _pattern_dp(model, n_max, pattern.indicator(n_max))
    return MomentTable(n_max, e, s, pattern)


def moments_all_parts(model, n_max):
    return moments_pattern(model, n_max, PatternSpec.all_parts())


def cross_moment(model, n_max, i, j):
    """E[K_{n,i} K_{n,j}] for n = 0..n_max, from the joint recursion

    m[n] = sum_s w[n,s] (1(s=i)1(s=j) + 1(s=i) e_j[n-s] + 1(s=j) e_i[n-s] + m[n-s])

    where e_i, e_j are the single-part mean tables.
    """
    n_max = int(n_max)
    i, j = int(i), int(j)
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if i < 1 or j < 1:
        raise ValueError("part sizes must be positive integers")
    ei = moments_pattern(model, n_max, PatternSpec.single(i)).mean
    ej = ei if j == i else moments_pattern(model, n_max, PatternSpec.single(j)).mean
    m = np.zeros(n_max + 1)
    for n in range(1, n_max + 1):
        w = model.first_part_row(n)
        acc = float(np.dot(w[::-1], m[:n]))
        if i <= n:
            acc += w[i - 1] * ej[n - i]
        if j <= n:
            acc += w[j - 1] * ei[n - j]
        if i == j and i <= n:
            acc += w[i - 1]
        m[n] = acc
    return m


def sweep(model, n_max, patterns, cross_pairs=()):
    """Build several targets in one forward pass over shared weight rows.

    Row construction dominates the cost at large n_max, so independent
    targets against the same model should go through here rather than
    through repeated single-target calls.  Returns (tables, cross) with
    tables[k] the MomentTable of patterns[k] and cross[(i, j)] the array
    of E[K_{n,i} K_{n,j}].
    """
    n_max = int(n_max)
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    patterns = list(patterns)
    pairs = [(int(i), int(j)) for i, j in cross_pairs]
    for i, j in pairs:
        if i < 1 or j < 1:
            raise ValueError("part sizes must be positive integers")
    inds = [p.indicator(n_max) for p in patterns]
    singles = sorted({r for pair in pairs for r in pair})
    e_list = [np.zeros(n_max + 1) for _ in patterns]
    s_list = [np.zeros(n_max + 1) for _ in patterns]
    se = {r: np.zeros(n_max + 1) for r in singles}
    cm = {pair: np.zeros(n_max + 1) for pair in pairs}
    for n in range(1, n_max + 1):
        w = model.first_part_row(n)
        wrev = np.ascontiguousarray(w[::-1])
        for k, ind in enumerate(inds):
            indn = ind[:n]
            hit = float(np.dot(w, indn))
            wirev = (w * indn)[::-1]
            ecross = float(np.dot(wirev, e_list[k][:n]))
            e_list[k][n] = hit + float(np.dot(wrev, e_list[k][:n]))
            s_list[k][n] = float(np.dot(wrev, s_list[k][:n])) + 2.0 * ecross + hit
        for r in singles:
            v = float(np.dot(wrev, se[r][:n]))
            if r <= n:
                v += w[r - 1]
            se[r][n] = v
        for pair in pairs:
            i, j = pair
            v = float(np.dot(wrev, cm[pair][:n]))
            if i <= n:
                v += w[i - 1] * se[j][n - i]
            if j <= n:
                v += w[j - 1] * se[i][n - j]
            if i == j and i <= n:
                v += w[i - 1]
            cm[pair][n] = v
    tables = [
        MomentTable(n_max, e_list[k], s_list[k], patterns[k])
        for k in range(len(patterns))
    ]
    return tables, cm
