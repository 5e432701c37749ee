"""Offspring laws for discrete-time branching processes.

A law is a finite probability vector (p_0, ..., p_K) with p_0 > 0 and
p_0 + p_1 < 1, so the generating function F is strictly convex on [0, 1]
and the process is nontrivial. Infinite-support families are materialized
to a long finite vector; the geometric tail dropped that way sits far
below every tolerance used downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "OffspringLaw",
    "LinearFractionalLaw",
    "ModelConstants",
    "model_constants",
]

_SUM_TOL = 1e-12


class OffspringLaw:
    """Finite-support offspring distribution with generating-function helpers."""

    def __init__(self, pmf, name=None):
        p = np.asarray(pmf, dtype=float)
        if p.ndim != 1 or p.size < 3:
            raise ValueError("pmf must be a 1-d vector with at least 3 entries")
        if np.any(p < 0):
            raise ValueError("pmf entries must be nonnegative")
        if abs(float(p.sum()) - 1.0) > _SUM_TOL:
            raise ValueError("pmf must sum to 1, got %r" % float(p.sum()))
        if p[0] <= 0.0:
            raise ValueError("p_0 > 0 is required")
        if p[0] + p[1] >= 1.0 - 1e-15:
            raise ValueError("p_0 + p_1 < 1 is required")
        nz = np.nonzero(p)[0]
        k_max = max(int(nz[-1]), 2)  # keep at least degree 2
        self.pmf = p[: k_max + 1].copy()
        self.pmf.setflags(write=False)
        self.name = name or "law-deg%d" % k_max

    # -- generating function -------------------------------------------------

    def gf(self, s):
        """F(s) by Horner evaluation.

        Works on floats, numpy arrays and mpmath scalars alike, which is why
        the loop stays in plain Python instead of np.polynomial.
        """
        acc = 0.0 * s
        for c in self.pmf[::-1]:
            acc = acc * s + float(c)
        return acc

    def gf_deriv(self, s, order=1):
        """order-th derivative of F at s."""
        c = self.pmf
        if order >= c.size:
            return 0.0 * s
        # falling-factorial weights (k)_order on the shifted coefficients
        w = [float(c[j + order]) * math.perm(j + order, order) for j in range(c.size - order)]
        acc = 0.0 * s
        for coef in reversed(w):
            acc = acc * s + coef
        return acc

    def taylor_at(self, x0):
        """Coefficients t_m = F^(m)(x0)/m! for m = 0..degree.

        Binomial expansion of each monomial; all terms are nonnegative for
        x0 >= 0 so there is no cancellation.
        """
        c = self.pmf
        K = self.degree
        x0 = float(x0)
        pow_ = x0 ** np.arange(K + 1)
        t = np.zeros(K + 1)
        for m in range(K + 1):
            comb = np.array([math.comb(k, m) for k in range(m, K + 1)], dtype=float)
            t[m] = float(comb @ (c[m:] * pow_[: K + 1 - m]))
        return t

    # -- structural constants ------------------------------------------------

    @property
    def degree(self):
        return self.pmf.size - 1

    @cached_property
    def mean(self):
        return float(np.arange(self.pmf.size) @ self.pmf)

    @cached_property
    def extinction_prob(self):
        """Least fixed point of F on [0, 1].

        For mean <= 1 this is 1 exactly. Otherwise F(s) - s changes sign on
        (0, 1); brentq brackets it and two Newton steps polish the root to
        machine precision.
        """
        if self.mean <= 1.0:
            return 1.0
        g = lambda s: self.gf(s) - s
        q = brentq(g, 0.0, 1.0 - 1e-9, xtol=1e-15, rtol=8.9e-16)
        for _ in range(2):
            q -= (self.gf(q) - q) / (self.gf_deriv(q) - 1.0)
        return float(q)

    def conjugate(self):
        """Dual law p_k q^(k-1). Identity when q = 1."""
        q = self.extinction_prob
        if q >= 1.0:
            return self
        k = np.arange(self.pmf.size, dtype=float)
        return OffspringLaw(self.pmf * q ** (k - 1.0), name=self.name + "-dual")

    def __repr__(self):
        return "OffspringLaw(%s, mean=%.6g)" % (self.name, self.mean)


@dataclass(frozen=True)
class ModelConstants:
    """Derived scalars of a law.

    q        extinction probability
    beta     F'(q), the geometric decay rate of the surviving mass
    mean     offspring mean
    b2       F''(1)/2, the decay constant in the critical regime
    alpha    1 + q F''(q)/beta
    gamma    (alpha - 1)/(1 - beta), None when beta = 1
    psi      gamma (1 + beta (1 + gamma))/(1 - beta), None when beta = 1
    decay_rate  |ln beta|, None when beta = 1
    """

    q: float
    beta: float
    mean: float
    b2: float
    alpha: float
    gamma: float | None
    psi: float | None
    decay_rate: float | None

    @property
    def is_critical(self):
        return self.gamma is None


def model_constants(law: OffspringLaw) -> ModelConstants:
    q = law.extinction_prob
    beta = float(law.gf_deriv(q))
    b2 = float(law.gf_deriv(1.0, 2)) / 2.0
    alpha = 1.0 + q * float(law.gf_deriv(q, 2)) / beta
    if abs(beta - 1.0) < 1e-12:
        return ModelConstants(q, beta, law.mean, b2, alpha, None, None, None)
    gamma = (alpha - 1.0) / (1.0 - beta)
    psi = gamma * (1.0 + beta * (1.0 + gamma)) / (1.0 - beta)
    return ModelConstants(q, beta, law.mean, b2, alpha, gamma, psi, abs(math.log(beta)))


class LinearFractionalLaw(OffspringLaw):
    """Geometric-tail family p_k = b c^(k-1) for k >= 1, p_0 = 1 - b/(1-c).

    Generating-function iterates stay inside the family, so F_n has a closed
    form. That makes these laws the exact oracle for the series engine.
    """

    TRUNC = 320  # dropped tail is b c^TRUNC/(1-c), < 1e-90 for c <= 0.6

    def __init__(self, b, c, name=None):
        if not 0.0 < c < 1.0:
            raise ValueError("need 0 < c < 1")
        if not 0.0 < b < 1.0 - c:
            raise ValueError("need 0 < b < 1 - c so that p_0 > 0")
        p = np.empty(self.TRUNC + 1)
        p[0] = 1.0 - b / (1.0 - c)
        p[1:] = b * c ** np.arange(self.TRUNC, dtype=float)
        super().__init__(p, name=name or "lf(b=%g,c=%g)" % (b, c))
        self.b = float(b)
        self.c = float(c)

    @property
    def mean_exact(self):
        return self.b / (1.0 - self.c) ** 2

    @property
    def is_critical(self):
        return abs(self.b - (1.0 - self.c) ** 2) < 1e-14

    @property
    def b2_exact(self):
        # F''(1)/2 = b c/(1-c)^3
        return self.b * self.c / (1.0 - self.c) ** 3

    def iterate_gf(self, n, s):
        """Closed-form F_n(s)."""
        if self.is_critical:
            r = 1.0 - s
            return 1.0 - r / (r * self.b2_exact * n + 1.0)
        s_star = self.pmf[0] / self.c  # second fixed point of F
        if s == s_star:
            return s_star
        r = self.mean_exact ** n * (s - 1.0) / (s - s_star)
        return (1.0 - s_star * r) / (1.0 - r)
