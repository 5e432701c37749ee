"""Series engine: truncated power-series iteration of an offspring GF.

Two complementary representations are kept in sync:

* scalar iteration of F_n(s) and of the extinction residual
  R_n(s) = q - F_n(s),
* coefficient vectors of F_n and of the scaled residual R_n/beta^n up to a
  fixed order N.

Composing a finite-support outer polynomial with a truncated inner series
is exact in the first N + 1 coefficients (convolution powers of the inner
series never push low-order terms upward), so transition probabilities
P_1j(n) with j <= N carry no truncation error.

The residual is always advanced through its own recurrence

    R_{k+1} = t_1 R_k - t_2 R_k^2 + t_3 R_k^3 - ...,   t_m = F^(m)(q)/m!,

never formed as q - F_n(s): that subtraction loses half the mantissa once
F_n is within ~1e-8 of q, while the recurrence keeps every term on the
scale of R itself. The scaled variant S_n = R_n/beta^n obeys

    S_{n+1} = S_n + sum_{m>=2} (-1)^(m+1) (t_m/beta) beta^((m-1)n) S_n^m,

whose correction factors decay geometrically, so S_n converges in place
without ever touching beta^n magnitudes.

Point evaluations at machine precision assume the fixed point q is resolved
to working precision (exact for the bundled models). The extended-precision
path recomputes q with mpmath at twice the working digits, which suppresses
the spurious beta^(-n) contamination mode that an inexact fixed point
injects into R_n/beta^n.
"""

from __future__ import annotations

import math

import mpmath as mp
import numpy as np

__all__ = ["SeriesEngine", "conv_trunc"]


def conv_trunc(a, b, n_keep):
    return np.convolve(a, b)[:n_keep]


class SeriesEngine:
    def __init__(self, law, order=256):
        self.law = law
        self.order = int(order)
        if self.order < 2:
            raise ValueError("order must be at least 2")
        self.q = law.extinction_prob
        self.beta = float(law.gf_deriv(self.q))
        self._taylor_q = law.taylor_at(self.q)
        ident = np.zeros(self.order + 1)
        ident[1] = 1.0
        self._fn = [ident]  # F_0(s) = s
        self._mp_cache = None

    # -- iterated GF coefficients ---------------------------------------------

    def fn_coeffs(self, n):
        """Coefficients of F_n, exact for j <= order."""
        while len(self._fn) <= n:
            self._fn.append(self._compose_law(self._fn[-1]))
        return self._fn[n]

    def _compose_law(self, inner):
        # Horner in the series ring: F(x) = c_0 + x (c_1 + x (...))
        c = self.law.pmf
        N = self.order
        out = np.zeros(N + 1)
        out[0] = c[-1]
        for k in range(c.size - 2, -1, -1):
            out = np.convolve(out, inner)[: N + 1]
            out[0] += c[k]
        return out

    def fn_scalar(self, s, n):
        """F_n(s) by direct iteration. Accepts floats and mpmath scalars."""
        x = s
        for _ in range(n):
            x = self.law.gf(x)
        return x

    def transition_row(self, n, i=1):
        """Coefficients of F_n(s)^i, i.e. P_ij(n) over j <= order."""
        if i < 1:
            raise ValueError("i >= 1 required")
        fn = self.fn_coeffs(n)
        row = fn
        for _ in range(i - 1):
            row = conv_trunc(row, fn, self.order + 1)
        return row

    def one_step_rows(self, i_max, j_max=None):
        """Matrix P_kj(1) for k = 0..i_max, j <= j_max (row 0 is delta_0)."""
        j_max = self.order if j_max is None else int(j_max)
        rows = np.zeros((i_max + 1, j_max + 1))
        rows[0, 0] = 1.0
        r = np.ones(1)
        for k in range(1, i_max + 1):
            r = conv_trunc(r, self.law.pmf, j_max + 1)
            rows[k, : r.size] = r
        return rows

    # -- extinction residual, scalar ------------------------------------------

    def _residual_map(self, r):
        t = self._taylor_q
        acc = 0.0
        rp = 1.0
        for m in range(1, t.size):
            rp = rp * r
            acc += (-1.0) ** (m + 1) * t[m] * rp
        return acc

    def residuals_scalar(self, s, n_max):
        """R_k(s) = q - F_k(s) for k = 0..n_max."""
        out = np.empty(n_max + 1)
        r = self.q - s
        out[0] = r
        for k in range(n_max):
            r = self._residual_map(r)
            out[k + 1] = r
        return out

    def residual_pair(self, s, n_max):
        """(R_k(s), R_k'(s)) for k = 0..n_max.

        The derivative rides along for free: R_{k+1}' = F'(F_k(s)) R_k'
        where F_k(s) = q - R_k(s).
        """
        rr = np.empty(n_max + 1)
        dd = np.empty(n_max + 1)
        r, d = self.q - s, -1.0
        rr[0], dd[0] = r, d
        for k in range(n_max):
            d = float(self.law.gf_deriv(self.q - r)) * d
            r = self._residual_map(r)
            rr[k + 1], dd[k + 1] = r, d
        return rr, dd

    # -- scaled residual series -----------------------------------------------

    def scaled_residual_coeffs(self, n):
        """Coefficients of S_n = (q - F_n(s))/beta^n, exact for j <= order.

        All coefficients stay O(1), so this is the safe route to
        P_1j(n)/beta^n = -S_n[j] at any horizon.
        """
        t = self._taylor_q
        N = self.order
        S = np.zeros(N + 1)
        S[0] = self.q
        S[1] = -1.0
        f = 1.0  # beta^k
        for _ in range(n):
            Sp = S
            acc = S.copy()
            fac = f
            for m in range(2, t.size):
                Sp = conv_trunc(Sp, S, N + 1)
                if t[m] != 0.0:
                    acc = acc + ((-1.0) ** (m + 1) * t[m] / self.beta * fac) * Sp
                fac *= f
            S = acc
            f *= self.beta
        return S

    def a_series(self, tol=1e-13, n_max=2000):
        """Limit coefficients of R_n/beta^n, converged to relative tol.

        Returns (coeffs, n_used). For beta = 1 there is no limit; callers in
        the critical regime should use scaled_residual_coeffs at a horizon.
        """
        if abs(self.beta - 1.0) < 1e-12:
            raise ValueError("a_series requires a noncritical law")
        t = self._taylor_q
        N = self.order
        S = np.zeros(N + 1)
        S[0] = self.q
        S[1] = -1.0
        f = 1.0
        for n in range(1, n_max + 1):
            Sp = S
            acc = S.copy()
            fac = f
            for m in range(2, t.size):
                Sp = conv_trunc(Sp, S, N + 1)
                if t[m] != 0.0:
                    acc = acc + ((-1.0) ** (m + 1) * t[m] / self.beta * fac) * Sp
                fac *= f
            delta = float(np.max(np.abs(acc - S) / (np.abs(acc) + 1e-300)))
            S = acc
            f *= self.beta
            if delta < tol:
                return S, n
        raise RuntimeError("a_series did not converge within n_max=%d" % n_max)

    # -- point limits -----------------------------------------------------------

    def a_value(self, s, tol=1e-10, n_max=400):
        """lim R_n(s)/beta^n by geometric-difference extrapolation.

        a_n converges geometrically at rate beta; with d_n = a_n - a_{n-1}
        and rho = d_n/d_{n-1} the tail sums to d_n rho/(1 - rho), which is
        both the correction and the stopping estimate.
        """
        if abs(self.beta - 1.0) < 1e-12:
            raise ValueError("a_value requires a noncritical law")
        r = self.q - s
        bpow = 1.0
        a_prev = r
        d_prev = None
        for _ in range(n_max):
            r = self._residual_map(r)
            bpow *= self.beta
            a = r / bpow
            d = a - a_prev
            if d == 0.0:
                return a
            if d_prev is not None:
                rho = d / d_prev
                if 0.0 < rho < 1.0:
                    corr = d * rho / (1.0 - rho)
                    if abs(corr) < tol:
                        return a + corr
            a_prev, d_prev = a, d
        return a_prev

    def k_value(self, s, tol=1e-15, n_max=20000):
        """K(s) = prod_k F'(F_k(s))/beta, the Koenigs normalization.

        Factors tend to 1 geometrically; truncation error after stopping is
        below tol/(1 - beta) in relative terms.
        """
        prod = 1.0
        x = s
        for _ in range(n_max):
            fac = float(self.law.gf_deriv(x)) / self.beta
            prod *= fac
            x = self.law.gf(x)
            if abs(fac - 1.0) < tol:
                return prod
        return prod

    # -- extended precision -----------------------------------------------------

    def _mp_setup(self, dps):
        if self._mp_cache is not None and self._mp_cache[0] >= dps:
            return self._mp_cache[1:]
        with mp.workdps(2 * dps):
            if self.law.mean <= 1.0:
                q = mp.mpf(1)
            else:
                q = mp.findroot(lambda x: self.law.gf(x) - x, mp.mpf(self.q))
            beta = self.law.gf_deriv(q)
            c = self.law.pmf
            K = c.size - 1
            taylor = []
            for m in range(K + 1):
                acc = mp.mpf(0)
                for k in range(m, K + 1):
                    acc += mp.mpf(float(c[k])) * mp.binomial(k, m) * q ** (k - m)
                taylor.append(acc)
        self._mp_cache = (dps, q, beta, taylor)
        return q, beta, taylor

    def residuals_scalar_mp(self, s, n_list, dps=50):
        """R_n(s) at the requested horizons, computed at dps digits.

        The fixed point is re-solved at 2*dps digits so the recurrence is not
        contaminated by a q error amplified like beta^(-n).
        """
        q, _beta, taylor = self._mp_setup(dps)
        n_list = sorted(int(n) for n in n_list)
        out = {}
        with mp.workdps(2 * dps):
            r = q - mp.mpf(s)
            n_cur = 0
            for n in n_list:
                while n_cur < n:
                    acc = mp.mpf(0)
                    rp = mp.mpf(1)
                    for m in range(1, len(taylor)):
                        rp = rp * r
                        acc += (-1) ** (m + 1) * taylor[m] * rp
                    r = acc
                    n_cur += 1
                out[n] = r
        return out

    def a_value_mp(self, s, n, dps=50):
        """R_n(s)/beta^n at dps digits."""
        q, beta, _ = self._mp_setup(dps)
        del q
        r = self.residuals_scalar_mp(s, [n], dps=dps)[n]
        with mp.workdps(2 * dps):
            return r / beta ** n
