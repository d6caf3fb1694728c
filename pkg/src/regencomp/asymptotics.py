"""Closed-form asymptotic coefficients, CLT normalizers, and the lattice
oscillation series.

All quantities are simple arithmetic in the log-moments m1, m2 and the
tail constant c of the model; nothing here touches tables or quadrature.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import StabilityError
from .specfun import EULER_GAMMA, complex_gamma, digamma


@dataclass
class ExpansionCoefficients:
    """Polynomial in L = log of the size variable: powers maps k to the
    coefficient of L^k."""

    powers: dict
    remainder_order: str

    def leading(self):
        k = max(self.powers)
        return self.powers[k]

    def evaluate(self, L):
        return sum(coef * L**k for k, coef in self.powers.items())


class SmallPartExpansion(NamedTuple):
    mean: ExpansionCoefficients
    var_leading: float
    d1: float


def _tail_constant(model):
    # Oscillating exponents have no limiting constant; their centered value
    # stands in for c, and callers see the weaker remainder tag.
    c = model.constant
    if c is not None:
        return c, False
    c = getattr(model, "effective_constant", None)
    if c is not None:
        return c, True
    raise StabilityError(
        "model has neither a tail constant nor a centered substitute; "
        "the logarithmic expansion does not apply"
    )


def mean_expansion(model):
    """L^2 and L^1 coefficients of the expected number of parts.

    The constant term is defined through integrals the theory leaves
    unevaluated, so it is deliberately absent; fits treat it as free.
    """
    m1 = model.log_moment(1)
    m2 = model.log_moment(2)
    c, oscillating = _tail_constant(model)
    powers = {2: 1.0 / (2.0 * m1), 1: m2 / (2.0 * m1**2) + c / m1}
    tag = "O(L) oscillatory" if oscillating else "O(rho^-eps)"
    return ExpansionCoefficients(powers, tag)


def variance_leading(model):
    m1 = model.log_moment(1)
    m2 = model.log_moment(2)
    return m2 / (3.0 * m1**3)


def clt_normalize(model, n, k):
    """Center and scale a part count at size n to the limiting normal."""
    n = int(n)
    if n < 2:
        raise ValueError("n must be >= 2")
    m1 = model.log_moment(1)
    L = math.log(n)
    center = L * L / (2.0 * m1)
    scale = math.sqrt(variance_leading(model)) * L**1.5
    return (k - center) / scale


def small_part_expansion(model, r):
    """Mean and variance growth of the count of parts of one fixed size r."""
    r = int(r)
    if r < 1:
        raise ValueError("r must be >= 1")
    m1 = model.log_moment(1)
    m2 = model.log_moment(2)
    c, oscillating = _tail_constant(model)
    d1 = (2.0 * c * m1 - 2.0 * EULER_GAMMA * m1 + m2 - 2.0 * m1 * digamma(r)) / (
        2.0 * m1**2 * r
    )
    tag = "O(L^{1/2}) oscillatory" if oscillating else "O(rho^-eps)"
    mean = ExpansionCoefficients({1: 1.0 / (m1 * r), 0: d1}, tag)
    var_leading = m2 / (r**2 * m1**3) + 1.0 / (r * m1)
    return SmallPartExpansion(mean, var_leading, d1)


def covariance_prediction(model, r_max):
    """Per-log-n covariance matrix of the counts of parts 1..r_max.

    Rank-one outer product in 1/i plus a positive diagonal, hence positive
    definite for every r_max.
    """
    r_max = int(r_max)
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    m1 = model.log_moment(1)
    m2 = model.log_moment(2)
    inv = 1.0 / np.arange(1.0, r_max + 1.0)
    out = (m2 / m1**3) * np.outer(inv, inv)
    out[np.diag_indices(r_max)] += inv / m1
    return out


def cumulative_small_parts(model, r):
    """(mean, variance) leading coefficients for the count of parts <= r."""
    r = int(r)
    if r < 1:
        raise ValueError("r must be >= 1")
    m1 = model.log_moment(1)
    m2 = model.log_moment(2)
    h_r = sum(1.0 / j for j in range(1, r + 1))
    return h_r / m1, m2 * h_r**2 / m1**3 + h_r / m1


def oscillation_phi(u, k_max=5):
    """Mean-zero period-one oscillation of the unit-atom lattice exponent.

    Sum of the conjugate residue pairs at +-2 pi i k:

        phi(u) = -2 sum_{k=1}^{k_max} Re(Gamma(2 pi i k) exp(-2 pi i k u))

    The amplitude of term k decays like exp(-pi^2 k), so the truncation
    error is below 3 |Gamma(2 pi i (k_max+1))|; k_max = 5 leaves ~1e-21.
    """
    k_max = int(k_max)
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    total = 0.0
    for k in range(1, k_max + 1):
        g = complex_gamma(2.0j * math.pi * k)
        w = 2.0 * math.pi * k * u
        total -= 2.0 * (g * complex(math.cos(w), -math.sin(w))).real
    return total
