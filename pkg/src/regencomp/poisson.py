"""Poissonised moment curves.

Two independent routes to the same objects.  poissonise mixes an exact
table with Poisson(rho) weights.  solve_recursion marches the integral
recursion directly on a geometric rho-grid, writing everything in
y-space where a jump of the driving process shifts log rho by -y:

    lam f(rho) + int (f(rho) - f(rho e^-y)) nu(dy) = g(rho)

The unknown enters linearly at each grid point: the band [0, y_min] uses
a first-order surrogate with a one-sided derivative stencil, the aligned
bands [jh, (j+1)h] interpolate f quadratically through the three grid
points below the shifted argument, and the far tail contributes
f(rho) * nu[Y, inf).  Integrals carrying the occupancy factor pi_E use a
separate fixed set of geometrically refined bands with moment-matched
three-node rules, because pi_E(rho(1 - e^-y)) varies on the scale
y ~ 1/rho which the aligned bands cannot resolve at large rho.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import AccuracyError, StabilityError, TableRangeError
from .exact import PatternSpec, moments_pattern
from .specfun import poisson_tail_bound

Y_MIN = 1e-4
SEED_N = 120
RHO_SEED = 8.0
RHO_SEED_SPLIT = 0.01
TAIL_MASS_TOL = 1e-12


@dataclass
class RhoGrid:
    """Geometric grid rho_k = rho_0 * ratio^k, k = 0..count-1."""

    rho_0: float = 1e-3
    ratio: float = 1.05
    count: int = 2

    def __post_init__(self):
        if not self.rho_0 > 0.0:
            raise ValueError("rho_0 must be positive")
        if not self.ratio > 1.0:
            raise ValueError("ratio must exceed 1")
        if self.count < 2:
            raise ValueError("count must be >= 2")

    def points(self):
        return self.rho_0 * self.ratio ** np.arange(self.count)

    @property
    def log_step(self):
        return math.log(self.ratio)

    @classmethod
    def spanning(cls, rho_hi, rho_0=1e-3, ratio=1.05):
        """Smallest grid of this spacing whose last point reaches rho_hi."""
        count = int(math.ceil(math.log(rho_hi / rho_0) / math.log(ratio))) + 1
        return cls(rho_0, ratio, max(count, 2))


@dataclass
class PoissonMomentCurve:
    grid: RhoGrid
    values: np.ndarray
    order: int
    pattern: PatternSpec
    lam: float = 0.0
    meander: bool = False
    _padded: np.ndarray = field(default=None, repr=False)
    _virtual: int = field(default=0, repr=False)
    _k_start: int = field(default=0, repr=False)

    def value_at(self, rho):
        """Quadratic log-space interpolation over the padded range."""
        rho = float(rho)
        if rho <= 0.0:
            raise TableRangeError("rho must be positive")
        h = self.grid.log_step
        u0 = math.log(self.grid.rho_0) - self._virtual * h
        pos = (math.log(rho) - u0) / h
        top = len(self._padded) - 1
        if pos < 0.0 or pos > top + 1e-9:
            raise TableRangeError("rho outside the solved range")
        i = min(max(int(pos) - 1, 0), top - 2)
        t = pos - i
        v = self._padded
        return float(
            v[i] * (t - 1.0) * (t - 2.0) / 2.0
            - v[i + 1] * t * (t - 2.0)
            + v[i + 2] * t * (t - 1.0) / 2.0
        )


@dataclass
class PartsDistribution:
    grid: RhoGrid
    pattern: PatternSpec
    j_max: int
    probs: np.ndarray  # shape (j_max + 1, grid.count)


def _is_all_parts(pattern):
    return pattern.description == "all parts"


def _pattern_poisson(pattern, z):
    """P(Poisson(z) in the pattern), vectorized over z >= 0."""
    z = np.asarray(z, dtype=float)
    if _is_all_parts(pattern):
        return -np.expm1(-z)
    zmax = float(z.max()) if z.size else 0.0
    cap = int(zmax + 12.0 * math.sqrt(zmax) + 30.0)
    out = np.zeros_like(z)
    pos = z > 0.0
    zp = z[pos]
    lz = np.log(zp)
    for r in range(1, cap + 1):
        if pattern.membership(r):
            out[pos] += np.exp(r * lz - zp - gammaln(r + 1.0))
    return out


def _pattern_poisson_scalar(pattern, z):
    return float(_pattern_poisson(pattern, np.array([z]))[0])


def _pattern_min(pattern, cap=10000):
    for r in range(1, cap + 1):
        if pattern.membership(r):
            return r
    raise ValueError("pattern has no member below %d" % cap)


def poissonise(table, rho, order=1, return_bound=False):
    """Poisson(rho) mixture of an exact moment table.

    Sums e^-rho rho^n/n! times the order-th factorial moment over the
    window rho +- 12 sqrt(rho).  The reported truncation bound multiplies
    the two-sided Chernoff tail by four times the larger edge value,
    which covers every table whose entries grow slower than any power.
    """
    rho = float(rho)
    if rho <= 0.0:
        raise ValueError("rho must be positive")
    n_max = table.n_max
    if rho > n_max - 10.0 * math.sqrt(n_max):
        raise TableRangeError(
            "rho=%g too close to the table end n_max=%d" % (rho, n_max)
        )
    values = table.factorial_moment(order)
    half = 12.0 * math.sqrt(rho)
    lo = max(0, int(math.floor(rho - half)))
    hi = min(n_max, int(math.ceil(rho + half)))
    ns = np.arange(lo, hi + 1, dtype=float)
    logw = ns * math.log(rho) - rho - gammaln(ns + 1.0)
    total = float(np.dot(np.exp(logw), values[lo : hi + 1]))
    if not return_bound:
        return total
    tail = poisson_tail_bound(rho, hi)
    if lo > 0:
        tail += poisson_tail_bound(rho, lo)
    edge = max(abs(float(values[lo])), abs(float(values[hi])), 1.0)
    return total, tail * 4.0 * edge


def _support_cutoff(model, h):
    """Smallest y (up to bisection) past which the measure holds less
    than TAIL_MASS_TOL, capped at 300."""
    lo, hi = 2.0 * h, 300.0
    if model.levy_tail_mass(hi) > TAIL_MASS_TOL:
        return hi
    if model.levy_tail_mass(lo) <= TAIL_MASS_TOL:
        return lo
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if model.levy_tail_mass(mid) > TAIL_MASS_TOL:
            lo = mid
        else:
            hi = mid
    return hi


class _Frame:
    """Geometry and quadrature data shared by the marching solves."""

    def __init__(self, model, grid, rho_max):
        self.model = model
        self.grid = grid
        h = grid.log_step
        self.h = h
        y_cut = _support_cutoff(model, h)
        self.J = max(int(math.ceil(y_cut / h)), 2)
        self.Y = (self.J + 1) * h
        self.tail_mass = model.levy_tail_mass(self.Y)

        edges = np.concatenate([[0.0, Y_MIN], np.arange(1, self.J + 2) * h])
        m0, m1, m2 = model.levy_band_table(edges)
        self.stub_m1 = float(m1[0])
        # Band 1 spans [y_min, h] at grid offset 0, where raw moments are
        # safe.  Higher bands are first centered on their left edge jh,
        # which avoids the j^2 cancellation of raw y powers.
        T0 = m0[1:].copy()
        T1 = np.empty_like(T0)
        T2 = np.empty_like(T0)
        T1[0] = m1[1] / h
        T2[0] = m2[1] / h**2
        a = edges[2:-1]  # left edges jh of the bands at offsets j >= 1
        c1 = m1[2:] - a * m0[2:]
        c2 = m2[2:] - 2.0 * a * m1[2:] + a * a * m0[2:]
        T1[1:] = c1 / h
        T2[1:] = c2 / h**2
        # ell integrals in the local parameter t = (y - jh)/h over [0, 1]
        L0 = T0 - 1.5 * T1 + 0.5 * T2
        L1 = 2.0 * T1 - T2
        L2 = 0.5 * (T2 - T1)
        c = self.stub_m1 / (2.0 * h)
        self.A_base = float(np.sum(T0) + self.tail_mass + 3.0 * c - L0[0])
        w = np.zeros(self.J + 4)
        w[1 : self.J + 1] += L0[1:]
        w[2 : self.J + 2] += L1[1:]
        w[3 : self.J + 3] += L2[1:]
        w[1] += L1[0] + 4.0 * c
        w[2] += L2[0] - c
        self.w_rev = np.ascontiguousarray(w[1:][::-1])
        self.depth = len(w) - 1

        # geometric bands for the pi-carrying integrals
        y_lo = min(Y_MIN, 0.02 / max(rho_max, 1.0))
        self.y_lo = y_lo
        pe = [0.0, y_lo]
        while pe[-1] < self.Y:
            pe.append(min(pe[-1] * 2.0 ** 0.25, self.Y))
        pe = np.array(pe)
        p0, p1, p2 = model.levy_band_table(pe)
        self.pi_stub_m1 = float(p1[0])
        self.pi_stub_m2 = float(p2[0])
        aa, bb = pe[1:-1], pe[2:]
        width = bb - aa
        n0 = p0[1:]
        n1 = (p1[1:] - aa * p0[1:]) / width
        n2 = (p2[1:] - 2.0 * aa * p1[1:] + aa * aa * p0[1:]) / width**2
        # three nodes per band at xi = 0, 1/2, 1 matched to the moments
        q0 = n0 - 3.0 * n1 + 2.0 * n2
        qm = 4.0 * (n1 - n2)
        q1 = 2.0 * n2 - n1
        nodes = np.stack([aa, 0.5 * (aa + bb), bb], axis=1)
        qw = np.stack([q0, qm, q1], axis=1)
        keep = n0 > 0.0
        self.pi_nodes = nodes[keep]
        self.pi_qw = qw[keep]
        jn = np.floor(self.pi_nodes / h).astype(int)
        t = self.pi_nodes / h - jn
        self.pi_off = np.stack([jn, jn + 1, jn + 2], axis=2)
        self.pi_ell = np.stack(
            [(t - 1.0) * (t - 2.0) / 2.0, t * (2.0 - t), t * (t - 1.0) / 2.0],
            axis=2,
        )
        self.virtual = self.J + 5

    def pi_stub_coef(self, rho, e1, e2):
        """int_0^{y_lo} pi_E(rho(1-e^-y)) nu(dy), second order in rho*y.

        Valid because the band set keeps rho_max * y_lo <= 0.02."""
        return e1 * rho * self.pi_stub_m1 + (
            (0.5 * e2 - e1) * rho * rho - 0.5 * e1 * rho
        ) * self.pi_stub_m2

    def pi_transform(self, rho, pattern, e1, e2, tail_weight):
        """int pi_E(rho(1-e^-y)) nu(dy) with the y > Y factor supplied."""
        z = rho * (-np.expm1(-self.pi_nodes))
        piv = _pattern_poisson(pattern, z)
        out = float(np.sum(self.pi_qw * piv))
        out += self.pi_stub_coef(rho, e1, e2)
        out += self.tail_mass * tail_weight
        return out

    def band_normalizer(self, rho, pattern, e1, e2):
        """Scalar that rescales the band weights so the rule integrates
        the constant one to the exact occupancy transform.  Only the
        all-parts pattern has that transform in closed form; any other
        pattern keeps the raw rule (the curve route uses the same rule
        for its right side, so the two stay consistent as they are)."""
        if not _is_all_parts(pattern):
            return 1.0
        z = rho * (-np.expm1(-self.pi_nodes))
        band = float(np.sum(self.pi_qw * _pattern_poisson(pattern, z)))
        target = (
            self.model.poisson_laplace(rho)
            - self.pi_stub_coef(rho, e1, e2)
            - self.tail_mass * _pattern_poisson_scalar(pattern, rho)
        )
        return target / band

    def pi_quadrature(
        self, padded, pos, rho, pattern, e1, e2, unknown=False, band_scale=1.0
    ):
        """int over [0, Y] of pi_E(rho(1-e^-y)) F(rho e^-y) nu(dy) with F
        interpolated quadratically from padded values at and below pos.

        Returns (known, unknown_coef).  With unknown=True the stencil
        weight multiplying padded[pos] is split off into unknown_coef
        (including the stub, which evaluates F at rho itself); otherwise
        the stub term uses the stored padded[pos].  The y > Y tail is the
        caller's business since it needs F(0+).
        """
        z = rho * (-np.expm1(-self.pi_nodes))
        piv = _pattern_poisson(pattern, z) * band_scale
        gathered = padded[pos - self.pi_off]
        stub = self.pi_stub_coef(rho, e1, e2)
        coef_unknown = 0.0
        if unknown:
            mask = self.pi_off == 0
            coef_unknown = float(
                np.sum((self.pi_qw * piv)[:, :, None] * self.pi_ell * mask)
            ) + stub
            gathered = np.where(mask, 0.0, gathered)
        vals = np.sum(self.pi_ell * gathered, axis=2)
        known = float(np.sum(self.pi_qw * piv * vals))
        if not unknown:
            known += stub * float(padded[pos])
        return known, coef_unknown


def _exact_seed_values(model, pattern, order, rhos):
    """Poisson mixture of the DP factorial moments, exact to rounding
    wherever Poisson(rho) mass beyond SEED_N is negligible (rho <= 1)."""
    fm = moments_pattern(model, SEED_N, pattern).factorial_moment(order)
    rhos = np.asarray(rhos, dtype=float)
    ns = np.arange(1, SEED_N + 1, dtype=float)
    logw = ns[:, None] * np.log(rhos[None, :]) - gammaln(ns + 1.0)[:, None]
    with np.errstate(under="ignore"):
        w = np.exp(logw - rhos[None, :])
    return fm[1:] @ w


def _split_seed_values(model, pattern, order, rhos, lam, meander):
    """Leading-power balance of the split equation near rho = 0."""
    r0 = _pattern_min(pattern)
    rhos = np.asarray(rhos, dtype=float)
    mu = model.binomial_moment(r0, r0)  # int x^r0 against the measure
    c1 = mu / math.factorial(r0) / (lam + model.phi_int(r0))
    if order == 1:
        out = c1 * rhos**r0
        if meander:
            out = out + lam * _pattern_poisson(pattern, rhos) / (
                lam + model.phi_int(r0)
            )
        return out
    # order 2: the right side opens at power 2 r0 with the cross moment
    # int x^r0 (1-x)^r0, recoverable from the binomial moment
    if meander:
        c1 += lam / math.factorial(r0) / (lam + model.phi_int(r0))
    bmix = model.binomial_moment(2 * r0, r0) / math.comb(2 * r0, r0)
    scale = 2.0 * c1 * bmix / math.factorial(r0) / (lam + model.phi_int(2 * r0))
    return scale * rhos ** (2 * r0)


def solve_recursion(model, pattern, order, grid, lam=0.0, meander=False, prev=None):
    """March the compensated integral recursion upward along the grid.

    order 1 stands alone; order 2 consumes the order-1 curve solved on
    the same grid with the same lam and meander flag.  lam = 0 seeds the
    small-rho region with the exact Poisson mixture of the DP tables;
    lam > 0 uses the leading-power balance, whose seed region ends at
    rho = 0.01 instead of 0.5.
    """
    order = int(order)
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if lam < 0.0:
        raise ValueError("lam must be >= 0")
    if grid.rho_0 > 1e-3:
        raise ValueError("grid must start at rho_0 <= 1e-3 for the seed region")
    prev_padded = None
    if order == 2:
        if prev is None or prev.order != 1:
            raise ValueError("order 2 needs the order-1 curve as prev")
        if prev.grid != grid or prev.lam != lam or prev.meander != meander:
            raise ValueError("prev was solved with different grid parameters")
        if prev.pattern.description != pattern.description:
            raise ValueError("prev was solved for a different pattern")
        prev_padded = prev._padded

    frame = _Frame(model, grid, float(grid.points()[-1]))
    if frame.A_base <= 0.0:
        raise StabilityError("non-positive marching coefficient")
    I = frame.virtual
    count = grid.count
    total = I + count
    h = frame.h
    rhos_padded = np.exp(math.log(grid.rho_0) + (np.arange(total) - I) * h)
    rho_seed = RHO_SEED if lam == 0.0 else RHO_SEED_SPLIT
    k_start = int(np.searchsorted(rhos_padded[I:], rho_seed, side="right"))
    seed_hi = I + k_start
    padded = np.zeros(total)
    if lam == 0.0:
        padded[:seed_hi] = _exact_seed_values(
            model, pattern, order, rhos_padded[:seed_hi]
        )
    else:
        padded[:seed_hi] = _split_seed_values(
            model, pattern, order, rhos_padded[:seed_hi], lam, meander
        )
    all_parts = _is_all_parts(pattern)
    e1 = 1.0 if pattern.membership(1) else 0.0
    e2 = 1.0 if pattern.membership(2) else 0.0
    depth = frame.depth
    w_rev = frame.w_rev
    denom = lam + frame.A_base
    for k in range(k_start, count):
        pos = I + k
        rho = float(rhos_padded[pos])
        if order == 1:
            if all_parts:
                g = model.poisson_laplace(rho)
            else:
                # f^(0) is identically one, including below the grid
                g = frame.pi_transform(
                    rho, pattern, e1, e2, _pattern_poisson_scalar(pattern, rho)
                )
            if meander and lam > 0.0:
                g += lam * _pattern_poisson_scalar(pattern, rho)
        else:
            known, _ = frame.pi_quadrature(prev_padded, pos, rho, pattern, e1, e2)
            g = order * known  # prev vanishes at 0+, so no tail term
        hist = float(np.dot(w_rev, padded[pos - depth : pos]))
        padded[pos] = (g + hist) / denom
    # Deferred correction: the march carries the h^3 truncation of its
    # quadratic stencils.  Measure the equation defect with the finer
    # evaluation, march the error equation (its seeds vanish, the seed
    # region being exact), and subtract.  Two sweeps leave the curve
    # consistent with the finer rule to well below the residual gate.
    for _ in range(2):
        if k_start >= count:
            break
        res, _ = _equation_residuals(
            model, frame, pattern, order, lam, meander, padded, prev_padded, k_start
        )
        delta = np.zeros(total)
        for k in range(k_start, count):
            pos = I + k
            hist = float(np.dot(w_rev, delta[pos - depth : pos]))
            delta[pos] = (hist - res[k - k_start]) / denom
        padded = padded + delta
    return PoissonMomentCurve(
        grid=grid,
        values=padded[I:].copy(),
        order=order,
        pattern=pattern,
        lam=lam,
        meander=meander,
        _padded=padded,
        _virtual=I,
        _k_start=k_start,
    )


def _cubic_stencil(frame):
    """Four-point one-sided Lagrange weights at the pi-band nodes.

    The residual evaluation reads the curve through these instead of the
    marching stencils, so its own error sits an order below the gate.
    """
    h = frame.h
    jn = np.floor(frame.pi_nodes / h).astype(int)
    t = frame.pi_nodes / h - jn
    off = np.stack([jn, jn + 1, jn + 2, jn + 3], axis=2)
    l0 = -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0
    l1 = t * (t - 2.0) * (t - 3.0) / 2.0
    l2 = -t * (t - 1.0) * (t - 3.0) / 2.0
    l3 = t * (t - 1.0) * (t - 2.0) / 6.0
    ell = np.stack([l0, l1, l2, l3], axis=2)
    return off, ell


def _equation_residuals(
    model, frame, pattern, order, lam, meander, padded, prev_padded, k_lo
):
    """Residual and right side of the equation at grid points k >= k_lo,
    evaluated with the geometric-band rule and cubic curve reading."""
    h = frame.h
    I = frame.virtual
    count = frame.grid.count
    rhos = frame.grid.points()
    e1 = 1.0 if pattern.membership(1) else 0.0
    e2 = 1.0 if pattern.membership(2) else 0.0
    all_parts = _is_all_parts(pattern)
    qw = frame.pi_qw
    off, ell = _cubic_stencil(frame)
    m0_total = float(np.sum(qw))
    res = np.empty(count - k_lo)
    gs = np.empty(count - k_lo)
    for k in range(k_lo, count):
        pos = I + k
        rho = float(rhos[k])
        f_k = padded[pos]
        vals = np.sum(ell * padded[pos - off], axis=2)
        kernel = m0_total * f_k - float(np.sum(qw * vals))
        d1 = (
            11.0 * padded[pos]
            - 18.0 * padded[pos - 1]
            + 9.0 * padded[pos - 2]
            - 2.0 * padded[pos - 3]
        ) / (6.0 * h)
        kernel += frame.pi_stub_m1 * d1
        kernel += frame.tail_mass * f_k  # curves of order >= 1 vanish at 0+
        if order == 1:
            if all_parts:
                g = model.poisson_laplace(rho)
            else:
                g = frame.pi_transform(
                    rho, pattern, e1, e2, _pattern_poisson_scalar(pattern, rho)
                )
            if meander and lam > 0.0:
                g += lam * _pattern_poisson_scalar(pattern, rho)
        else:
            piv = _pattern_poisson(pattern, rho * (-np.expm1(-frame.pi_nodes)))
            prev_vals = np.sum(ell * prev_padded[pos - off], axis=2)
            g = float(np.sum(qw * piv * prev_vals))
            g += frame.pi_stub_coef(rho, e1, e2) * float(prev_padded[pos])
            g *= order
        res[k - k_lo] = lam * f_k + kernel - g
        gs[k - k_lo] = g
    return res, gs


def residual_check(model, curve, prev=None, tol=1e-6, raise_failure=True):
    """Plug a solved curve back into its equation with an independent
    quadrature: geometric bands with moment-matched three-node rules
    over the whole kernel, reading the curve through cubic stencils,
    instead of the aligned-band quadratic rule the march used.

    Returns (rhos, residuals, scales) over the marched points with the
    first two skipped; scales are 1 + |g(rho)|.  Raises AccuracyError
    when some |residual| exceeds tol * scale, unless raise_failure is
    False.
    """
    if curve.order == 2 and prev is None:
        raise ValueError("order 2 residual needs the order-1 curve as prev")
    grid = curve.grid
    frame = _Frame(model, grid, float(grid.points()[-1]))
    if len(curve._padded) != frame.virtual + grid.count:
        raise ValueError("curve padding does not match its grid")
    k_lo = curve._k_start + 2
    res, gs = _equation_residuals(
        model,
        frame,
        curve.pattern,
        curve.order,
        curve.lam,
        curve.meander,
        curve._padded,
        prev._padded if prev is not None else None,
        k_lo,
    )
    rr = grid.points()[k_lo:]
    sc = 1.0 + np.abs(gs)
    if raise_failure and res.size and np.max(np.abs(res) / sc) > tol:
        worst = int(np.argmax(np.abs(res) / sc))
        raise AccuracyError(
            "residual %.3e at rho=%.6g exceeds %g * (1+|g|)"
            % (res[worst], rr[worst], tol)
        )
    return rr, res, sc


def _distribution_residuals(frame, pattern, pj, prev_j, j, k_lo):
    """Checker-grade residual of the count equation for the row j.

    Same geometric-band cubic-read evaluation as _equation_residuals,
    with the occupancy factor kept inside both kernel and right side."""
    h = frame.h
    I = frame.virtual
    count = frame.grid.count
    rhos = frame.grid.points()
    e1 = 1.0 if pattern.membership(1) else 0.0
    e2 = 1.0 if pattern.membership(2) else 0.0
    qw = frame.pi_qw
    off, ell = _cubic_stencil(frame)
    m0_total = float(np.sum(qw))
    res = np.empty(count - k_lo)
    gs = np.empty(count - k_lo)
    for k in range(k_lo, count):
        pos = I + k
        rho = float(rhos[k])
        scale = frame.band_normalizer(rho, pattern, e1, e2)
        piv = scale * _pattern_poisson(pattern, rho * (-np.expm1(-frame.pi_nodes)))
        p_k = pj[pos]
        vals = np.sum(ell * pj[pos - off], axis=2)
        kernel = m0_total * p_k - float(np.sum(qw * vals))
        d1 = (
            11.0 * pj[pos]
            - 18.0 * pj[pos - 1]
            + 9.0 * pj[pos - 2]
            - 2.0 * pj[pos - 3]
        ) / (6.0 * h)
        kernel += frame.pi_stub_m1 * d1
        kernel += frame.tail_mass * p_k
        stub = frame.pi_stub_coef(rho, e1, e2)
        kernel += float(np.sum(qw * piv * vals)) + stub * p_k
        pi_rho = _pattern_poisson_scalar(pattern, rho)
        if j > 0:
            prev_vals = np.sum(ell * prev_j[pos - off], axis=2)
            rhs = float(np.sum(qw * piv * prev_vals)) + stub * float(prev_j[pos])
            if j == 1:
                rhs += frame.tail_mass * pi_rho  # p_0(0+) = 1
        else:
            rhs = (1.0 - pi_rho) * frame.tail_mass
        res[k - k_lo] = kernel - rhs
        gs[k - k_lo] = rhs
    return res, gs


def _pattern_pmf_rows(model, n_cap, pattern):
    """P(count = j) rows for n = 0..n_cap by the first-part recursion."""
    q = np.zeros((n_cap + 1, n_cap + 2))
    q[0, 0] = 1.0
    for m in range(1, n_cap + 1):
        w = model.first_part_row(m)
        for r in range(1, m + 1):
            if pattern.membership(r):
                q[m, 1 : m + 1] += w[r - 1] * q[m - r, :m]
            else:
                q[m, : m + 1] += w[r - 1] * q[m - r, : m + 1]
    return q


def distribution_recursion(model, pattern, grid, j_max):
    """March the count probabilities p_j(rho) upward in rho, j by j.

    For the all-parts pattern p_0 = e^-rho is imposed analytically;
    every other curve is solved, consuming p_{j-1} on the right side.
    """
    j_max = int(j_max)
    if not 0 <= j_max <= 50:
        raise ValueError("j_max must be between 0 and 50")
    if grid.rho_0 > 1e-3:
        raise ValueError("grid must start at rho_0 <= 1e-3 for the seed region")
    frame = _Frame(model, grid, float(grid.points()[-1]))
    if frame.A_base <= 0.0:
        raise StabilityError("non-positive marching coefficient")
    I = frame.virtual
    count = grid.count
    total = I + count
    h = frame.h
    rhos_padded = np.exp(math.log(grid.rho_0) + (np.arange(total) - I) * h)
    k_start = int(np.searchsorted(rhos_padded[I:], RHO_SEED, side="right"))
    seed_hi = I + k_start
    all_parts = _is_all_parts(pattern)
    e1 = 1.0 if pattern.membership(1) else 0.0
    e2 = 1.0 if pattern.membership(2) else 0.0
    rows = _pattern_pmf_rows(model, SEED_N, pattern)
    ns = np.arange(1, SEED_N + 1, dtype=float)
    logw = ns[:, None] * np.log(rhos_padded[None, :seed_hi]) - gammaln(ns + 1.0)[
        :, None
    ]
    with np.errstate(under="ignore"):
        seed_w = np.exp(logw - rhos_padded[None, :seed_hi])
    seed_base = np.exp(-rhos_padded[:seed_hi])  # the n = 0 term
    depth = frame.depth
    w_rev = frame.w_rev
    scales = np.array(
        [
            frame.band_normalizer(float(rhos_padded[I + k]), pattern, e1, e2)
            for k in range(k_start, count)
        ]
    )
    P = np.zeros((j_max + 1, total))
    for j in range(j_max + 1):
        if all_parts and j == 0:
            P[0] = np.exp(-rhos_padded)
            continue
        pj = P[j]
        if j < rows.shape[1]:
            pj[:seed_hi] = rows[1:, j] @ seed_w
        if j == 0:
            pj[:seed_hi] += seed_base
        prev_j = P[j - 1] if j > 0 else None
        for k in range(k_start, count):
            pos = I + k
            rho = float(rhos_padded[pos])
            sc = float(scales[k - k_start])
            pi_rho = _pattern_poisson_scalar(pattern, rho)
            known, a_pi = frame.pi_quadrature(
                pj, pos, rho, pattern, e1, e2, unknown=True, band_scale=sc
            )
            if j > 0:
                rhs, _ = frame.pi_quadrature(
                    prev_j, pos, rho, pattern, e1, e2, band_scale=sc
                )
                if j == 1:
                    rhs += frame.tail_mass * pi_rho  # p_0(0+) = 1
            else:
                # the kernel tail sees p_0 below the grid at its limit 1
                rhs = (1.0 - pi_rho) * frame.tail_mass
            denom = frame.A_base + a_pi
            if denom <= 0.0:
                raise StabilityError("non-positive marching coefficient")
            hist = float(np.dot(w_rev, pj[pos - depth : pos]))
            pj[pos] = (rhs + hist - known) / denom
        # Deferred correction, row by row so the next right side already
        # consumes the improved curve.  Keeping the occupancy-weighted
        # reads at checker grade on both sides preserves the telescoping
        # that pins the column sums to one.
        for _ in range(2):
            if k_start >= count:
                break
            res, _ = _distribution_residuals(frame, pattern, pj, prev_j, j, k_start)
            delta = np.zeros(total)
            for k in range(k_start, count):
                pos = I + k
                rho = float(rhos_padded[pos])
                known, a_pi = frame.pi_quadrature(
                    delta,
                    pos,
                    rho,
                    pattern,
                    e1,
                    e2,
                    unknown=True,
                    band_scale=float(scales[k - k_start]),
                )
                hist = float(np.dot(w_rev, delta[pos - depth : pos]))
                delta[pos] = (hist - known - res[k - k_start]) / (
                    frame.A_base + a_pi
                )
            pj += delta
    return PartsDistribution(grid, pattern, j_max, P[:, I:].copy())
