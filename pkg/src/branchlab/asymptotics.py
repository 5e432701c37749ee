"""Decay asymptotics of the iterated generating function.

Everything here is built on top of the series engine: residual decay
constants, the Koenigs normalization, local limit values, the invariant
measure of the process restricted to survival, and the conjugation
(Schroeder) consistency checks.

Bracket objects carry a [lo, hi] certificate plus an optional measured
point. Construction never raises when the point escapes the bracket; the
violation is data, and the test suite is where claims get enforced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .offspring import model_constants
from .series import SeriesEngine, conv_trunc

__all__ = [
    "IntervalConstant",
    "BasicLemmaConstants",
    "basic_lemma_constants",
    "critical_decay",
    "critical_decay_ratio",
    "KFunctionResult",
    "k_function",
    "LocalLimit",
    "local_limit",
    "InvariantMeasure",
    "invariant_measure",
    "conditioned_transition",
    "conditioned_row",
    "yaglom_gf",
    "DecayClass",
    "decay_classification",
    "SchroederReport",
    "schroeder_check",
]


@dataclass(frozen=True)
class IntervalConstant:
    """A certified interval, optionally with a measured point estimate.

    Intended reading: lo <= point <= hi where the point is present. The
    point is allowed to escape the interval (that is a finding, not a
    programming error), so only lo <= hi is enforced here.
    """

    lo: float
    hi: float
    point: float | None = None
    note: str = ""

    def __post_init__(self):
        if self.lo > self.hi + 1e-15:
            raise ValueError("interval endpoints out of order")

    @property
    def contains(self):
        if self.point is None:
            return None
        return self.lo - 1e-12 <= self.point <= self.hi + 1e-12

    @property
    def violation(self):
        if self.point is None:
            return 0.0
        return max(self.lo - self.point, self.point - self.hi, 0.0)

    @property
    def midpoint(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self):
        return self.hi - self.lo


def _delta_sums(law, tol=1e-16, k_max=100000):
    c = model_constants(law)
    q, beta = c.q, c.beta
    d1 = 0.0
    d2 = 0.0
    f2_q = float(law.gf_deriv(q, 2))
    bpow = 1.0
    for _ in range(k_max):
        x = q * (1.0 - bpow)
        t1 = float(law.gf_deriv(x, 2)) * bpow / beta
        t2 = f2_q * bpow / float(law.gf_deriv(x))
        d1 += t1
        d2 += t2
        bpow *= beta
        if max(t1, t2) < tol * max(d1, d2):
            break
    return d1, d2


@dataclass
class BasicLemmaConstants:
    """Residual decay constants and the derived pointwise functions.

    delta_of_s is measured pointwise from A(s); it is not assumed constant
    in s. k_of_s is the closed-form exp(-delta(s) A(s)) field; the product
    route lives in k_function and does not in general agree with it.
    """

    q: float
    beta: float
    delta1: float
    delta2: float
    a_of_s: Callable[[float], float]
    delta_of_s: Callable[[float], float]
    k_of_s: Callable[[float], float]
    a_bracket: Callable[[float], IntervalConstant]


def basic_lemma_constants(law, engine=None, tol=1e-16):
    c = model_constants(law)
    if c.is_critical:
        raise ValueError("decay constants are defined for noncritical laws only")
    engine = engine or SeriesEngine(law)
    d1, d2 = _delta_sums(law, tol=tol)
    q = c.q

    def a_of_s(s):
        return engine.a_value(s)

    def delta_of_s(s):
        a = a_of_s(s)
        return 2.0 * (1.0 / a - 1.0 / (q - s))

    def k_of_s(s):
        return math.exp(-delta_of_s(s) * a_of_s(s))

    def a_bracket(s):
        lo = 1.0 / (1.0 / (q - s) + d2 / 2.0)
        hi = 1.0 / (1.0 / (q - s) + d1 / 2.0)
        return IntervalConstant(lo=lo, hi=hi, point=a_of_s(s))

    return BasicLemmaConstants(
        q=q,
        beta=c.beta,
        delta1=d1,
        delta2=d2,
        a_of_s=a_of_s,
        delta_of_s=delta_of_s,
        k_of_s=k_of_s,
        a_bracket=a_bracket,
    )


def critical_decay(law, s, n):
    """Asymptote (1 - s)/((1 - s) B n + 1) of the critical residual."""
    c = model_constants(law)
    if not c.is_critical:
        raise ValueError("critical_decay requires a critical law")
    r = 1.0 - s
    return r / (r * c.b2 * n + 1.0)


def critical_decay_ratio(law, engine, s, n):
    """Exact residual over the asymptote; tends to 1 from either side."""
    exact = engine.residuals_scalar(s, n)[n]
    return float(exact) / critical_decay(law, s, n)


@dataclass
class KFunctionResult:
    s: float
    closed_form: float          # exp(-delta(s) A(s))
    product_limit: float        # prod_k F'(F_k(s))/beta, the measured limit
    bracket: IntervalConstant   # [exp(-delta2 A), exp(-delta1 A)], pointed at the product
    series_check: float | None  # beta^(-n) P_11(n) at the diagnostic horizon (s = 0 only)


def k_function(law, engine=None, s=0.0, n_diag=200):
    engine = engine or SeriesEngine(law)
    blc = basic_lemma_constants(law, engine=engine)
    a = blc.a_of_s(s)
    closed = blc.k_of_s(s)
    product = engine.k_value(s)
    lo = math.exp(-blc.delta2 * a)
    hi = math.exp(-blc.delta1 * a)
    if lo > hi:  # a < 0 flips the exponential ordering
        lo, hi = hi, lo
    series_check = None
    if s == 0.0:
        series_check = -float(engine.scaled_residual_coeffs(n_diag)[1])
    return KFunctionResult(
        s=s,
        closed_form=closed,
        product_limit=product,
        bracket=IntervalConstant(lo=lo, hi=hi, point=product),
        series_check=series_check,
    )


@dataclass
class LocalLimit:
    values: dict            # n -> n^2 P_11(n)
    bracket: IntervalConstant
    p11_at_zero: float


def local_limit(law, engine=None, n_list=(200, 400)):
    c = model_constants(law)
    if not c.is_critical:
        raise ValueError("local_limit requires a critical law")
    engine = engine or SeriesEngine(law)
    p0 = float(law.pmf[0])
    p1 = float(law.pmf[1])
    vals = {}
    for n in n_list:
        p11 = -float(engine.scaled_residual_coeffs(n)[1])  # beta = 1 here
        vals[int(n)] = n * n * p11
    bracket = IntervalConstant(lo=p1 / (p0 * c.b2), hi=1.0 / (p0 * c.b2))
    return LocalLimit(values=vals, bracket=bracket, p11_at_zero=float(engine.fn_coeffs(0)[1]))


@dataclass
class InvariantMeasure:
    """Invariant measure mu (mu_1 = 1) and its normalized companion nu.

    For noncritical laws mu_j comes from the limit series of R_n/beta^n and
    nu_j = mu_j q^j / M(q) is a probability vector whose GF is v_gf. For
    critical laws only mu is defined (Richardson extrapolated transition
    ratios); nu, m_at_q and v_gf are None.
    """

    mu: np.ndarray
    k0: float | None
    m_at_q: float | None
    nu: np.ndarray | None
    v_gf: Callable[[float], float] | None
    a0: float | None
    tail: float


def invariant_measure(law, engine=None, j_max=None, n_critical=200):
    if float(law.pmf[1]) == 0.0:
        raise ValueError("invariant measure requires p_1 > 0")
    c = model_constants(law)
    engine = engine or SeriesEngine(law)
    j_max = engine.order if j_max is None else int(j_max)

    if c.is_critical:
        s_n = engine.scaled_residual_coeffs(n_critical)
        s_2n = engine.scaled_residual_coeffs(2 * n_critical)
        r_n = s_n[: j_max + 1] / s_n[1]
        r_2n = s_2n[: j_max + 1] / s_2n[1]
        mu = 2.0 * r_2n - r_n  # Richardson in 1/n
        mu[0] = 0.0
        return InvariantMeasure(mu=mu, k0=None, m_at_q=None, nu=None, v_gf=None,
                                a0=None, tail=0.0)

    a, _n_used = engine.a_series()
    a = a[: j_max + 1]
    k0 = -float(a[1])
    mu = a / a[1]
    mu[0] = 0.0
    qpow = c.q ** np.arange(mu.size)
    weighted = mu * qpow
    m_at_q = float(weighted.sum())
    # geometric tail estimate from the last two retained terms
    tail = 0.0
    if abs(weighted[-2]) > 0:
        ratio = abs(weighted[-1] / weighted[-2])
        if ratio < 1.0:
            tail = abs(weighted[-1]) * ratio / (1.0 - ratio)
    nu = weighted / m_at_q

    def v_gf(s):
        acc = 0.0 * s
        for w in nu[::-1]:
            acc = acc * s + float(w)
        return acc

    return InvariantMeasure(mu=mu, k0=k0, m_at_q=m_at_q, nu=nu, v_gf=v_gf,
                            a0=float(a[0]), tail=tail)


def _scaled_parts(law, engine, n, i, j_max):
    """(w, d) with w[j] = beta^(-n) P_ij(n) for j >= 1 (w[0] = 0) and
    d = beta^(-n) (q^i - F_n(0)^i), the surviving dual mass.

    F_n^i = (q - beta^n S_n)^i expands into binomial terms whose m-th piece
    carries beta^(n(m-1)); only m = 1 survives at large n and the rest decay
    through exp of logs, so everything stays O(1) at any horizon. The j = 0
    slot of the expansion is q^i - F_n(0)^i built directly from powers of
    the residual, with no q^i cancellation.
    """
    c = model_constants(law)
    q, beta = c.q, c.beta
    S = engine.scaled_residual_coeffs(n)
    acc = np.zeros(j_max + 1)
    Sp = None
    log_beta = math.log(beta) if beta < 1.0 else 0.0
    for m in range(1, i + 1):
        Sp = S if Sp is None else conv_trunc(Sp, S, j_max + 1)
        coef = math.comb(i, m) * q ** (i - m) * (-1.0) ** m
        scale = math.exp((m - 1) * n * log_beta)
        acc += coef * scale * Sp[: j_max + 1]
    w = acc
    d = float(-acc[0])
    w[0] = 0.0
    return w, d


def scaled_transition_row(law, engine, n, i=1, j_max=None):
    """beta^(-n) P_ij(n) over j >= 1, with w[0] = 0."""
    j_max = engine.order if j_max is None else int(j_max)
    w, _d = _scaled_parts(law, engine, n, i, j_max)
    return w


def conditioned_row(law, engine, n, i=1, j_max=None):
    """Distribution of the state at time n conditioned on eventual
    extinction and on survival at n, started from i individuals:

        row_j = q^j P_ij(n) / (q^i - F_n(0)^i),  j >= 1.

    Rows sum to 1 exactly up to series truncation.
    """
    j_max = engine.order if j_max is None else int(j_max)
    q = model_constants(law).q
    w, d = _scaled_parts(law, engine, n, i, j_max)
    j = np.arange(j_max + 1, dtype=float)
    return (q ** j) * w / d


def conditioned_transition(law, engine=None, n=200, i_max=3, j_max=None):
    """Conditioned state distributions, rows 1..i_max (row 0 stays zero)."""
    engine = engine or SeriesEngine(law)
    j_max = engine.order if j_max is None else int(j_max)
    rows = np.zeros((i_max + 1, j_max + 1))
    for i in range(1, i_max + 1):
        rows[i] = conditioned_row(law, engine, n, i=i, j_max=j_max)
    return rows


def yaglom_gf(law, engine, n, s, i=1):
    """V_n^(i)(s) = 1 - (1 - F_n^i(s))/(1 - F_n^i(0)), the conditional GF
    of the population at n given survival, started from i individuals."""
    q = law.extinction_prob
    r_s = engine.residuals_scalar(s, n)[n]
    r_0 = engine.residuals_scalar(0.0, n)[n]
    if q == 1.0:
        num = -math.expm1(i * math.log1p(-r_s))
        den = -math.expm1(i * math.log1p(-r_0))
    else:
        num = 1.0 - (q - r_s) ** i
        den = 1.0 - (q - r_0) ** i
    return 1.0 - num / den


@dataclass(frozen=True)
class DecayClass:
    regime: str          # "subcritical" | "critical" | "supercritical"
    rate: float          # |ln beta|; 0 in the critical (polynomial) regime
    polynomial: bool


def decay_classification(law):
    c = model_constants(law)
    if c.is_critical:
        return DecayClass(regime="critical", rate=0.0, polynomial=True)
    regime = "subcritical" if c.mean < 1.0 else "supercritical"
    return DecayClass(regime=regime, rate=c.decay_rate, polynomial=False)


@dataclass
class SchroederReport:
    max_v_residual: float   # sup |1 - V(F^(s)) - beta (1 - V(s))| on the grid
    max_a_residual: float   # sup |A(F_n(q s)) - beta^n A(q s)|, relative
    grid: np.ndarray
    order: int


def schroeder_check(law, order=512, grid=None, n_max=3):
    """Conjugation consistency of the invariant-measure GF.

    V is built from the measured mu series; the functional equation
    1 - V(F^(s)) = beta (1 - V(s)) with F^(s) = F(q s)/q then holds up to
    series truncation, which is the quantity reported.
    """
    c = model_constants(law)
    if c.is_critical:
        raise ValueError("schroeder_check requires a noncritical law")
    engine = SeriesEngine(law, order=order)
    meas = invariant_measure(law, engine=engine)
    q, beta = c.q, c.beta
    if grid is None:
        grid = np.linspace(0.0, 0.9, 10)
    v_res = 0.0
    for s in grid:
        fhat = float(law.gf(q * s)) / q
        lhs = 1.0 - meas.v_gf(fhat)
        rhs = beta * (1.0 - meas.v_gf(float(s)))
        v_res = max(v_res, abs(lhs - rhs))
    a_res = 0.0
    for s in (0.0, 0.3, 0.6):
        base = engine.a_value(q * s)
        for n in range(1, n_max + 1):
            image = engine.a_value(engine.fn_scalar(q * s, n))
            a_res = max(a_res, abs(image - beta ** n * base) / max(abs(base), 1e-300))
    return SchroederReport(max_v_residual=v_res, max_a_residual=a_res,
                           grid=np.asarray(grid), order=order)
