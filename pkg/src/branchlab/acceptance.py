"""Acceptance suite: eleven numbered checks over three bundled laws.

Each check pins its tolerances in code and reports measured values in a
deterministic text block with no timestamps, so a repeated run with the
same seed must reproduce the report byte for byte (that reproduction is
itself the final check). Checks 6, 7 and 10 compare against published
closed-form constants that the exact computations contradict; they are
implemented exactly as stated and are expected to fail. The README's
"documented failures" section carries the analysis.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from . import __version__
from .asymptotics import (basic_lemma_constants, conditioned_row,
                          invariant_measure, yaglom_gf)
from .cumulative import expected_s, limit_cdf_w, limit_transforms
from .montecarlo import empirical_transform, ks_distance, simulate_q
from .offspring import LinearFractionalLaw, OffspringLaw, model_constants
from .qprocess import (QKernel, expected_w, mu_critical, pi_distribution,
                       q_transition)
from .series import SeriesEngine

__all__ = ["CheckResult", "AcceptanceReport", "run_all", "standard_laws",
           "model_hash", "DEFAULT_SEED", "SERIES_ORDER", "MC_REPS"]

DEFAULT_SEED = 20260816
SERIES_ORDER = 256
MC_REPS = 100_000


def standard_laws():
    return {
        "sub": OffspringLaw([0.5, 0.25, 0.25]),
        "critical": OffspringLaw([0.25, 0.5, 0.25]),
        "super": OffspringLaw([0.25, 0.25, 0.5]),
    }


def model_hash(law):
    payload = json.dumps(list(map(float, law.pmf)), separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _g(x):
    return "%.10g" % float(x)


@dataclass
class CheckResult:
    num: int
    name: str
    passed: bool
    detail: str

    def line(self):
        return "check %02d %-22s %s  %s" % (
            self.num, self.name, "PASS" if self.passed else "FAIL", self.detail)


def _check01_lf_oracle(_):
    cases = [(0.25, 0.5), (0.2, 0.5), (0.2, 0.6)]
    worst = 0.0
    for b, c in cases:
        law = LinearFractionalLaw(b, c)
        eng = SeriesEngine(law, order=SERIES_ORDER)
        for n in (1, 2, 5, 10, 20, 30):
            for s in (0.0, 0.3, 0.7, 0.9):
                diff = abs(eng.fn_scalar(s, n) - law.iterate_gf(n, s))
                worst = max(worst, diff)
    return CheckResult(1, "lf-oracle", worst < 1e-12,
                       "max |series - closed form| = %s over 3 laws, "
                       "n <= 30, s in {0,0.3,0.7,0.9} (tol 1e-12)" % _g(worst))


def _check02_residual_bracket(ctx):
    law = ctx["laws"]["super"]
    eng = ctx["eng"]["super"]
    blc = basic_lemma_constants(law, eng)
    worst_rel = 0.0
    out = []
    ok = True
    for s in (0.0, 0.1, 0.2, 0.3, 0.4):
        a300_mp = eng.a_value_mp(s, 300, dps=50)
        a400_mp = eng.a_value_mp(s, 400, dps=50)
        # the comparison itself stays in extended precision
        rel = float(abs(a400_mp - a300_mp) / abs(a400_mp))
        a400 = float(a400_mp)
        worst_rel = max(worst_rel, rel)
        br = blc.a_bracket(s)
        inside = br.lo - 1e-12 <= a400 <= br.hi + 1e-12
        ok = ok and inside and rel < 1e-8
        out.append("s=%s: limit=%s in [%s, %s] %s" %
                   (_g(s), _g(a400), _g(br.lo), _g(br.hi),
                    "yes" if inside else "NO"))
    return CheckResult(2, "residual-bracket", ok,
                       "max rel change(300->400) = %s (tol 1e-8); %s" %
                       (_g(worst_rel), "; ".join(out)))


def _check03_critical_decay(ctx):
    eng = ctx["eng"]["critical"]
    law = ctx["laws"]["critical"]
    b2 = model_constants(law).b2
    r = eng.residuals_scalar(0.0, 400)[400]
    val = r * (b2 * 400 + 1.0)
    ok = 0.95 <= val <= 1.05
    return CheckResult(3, "critical-decay", ok,
                       "R_400(0)*(B*400+1) = %s, window [0.95, 1.05]" % _g(val))


def _check04_local_limit(ctx):
    eng_c = ctx["eng"]["critical"]
    vals = []
    ok = True
    for n in (200, 300, 400):
        v = n * n * eng_c.fn_coeffs(n)[1]
        vals.append("n=%d: %s" % (n, _g(v)))
        ok = ok and 8.0 <= v <= 16.0
    eng_s = ctx["eng"]["super"]
    ref = -eng_s.scaled_residual_coeffs(400)[1]
    drift = 0.0
    for n in (40, 80, 160, 320):
        v = -eng_s.scaled_residual_coeffs(n)[1]
        drift = max(drift, abs(v / ref - 1.0))
    ok = ok and drift < 1e-4
    return CheckResult(4, "local-limit", ok,
                       "critical n^2 P_11 in [8,16]: %s; supercritical "
                       "beta^-n P_11 drift over [40,400] = %s (tol 1e-4)" %
                       ("; ".join(vals), _g(drift)))


def _check05_invariant_measure(ctx):
    parts = []
    ok = True
    for name in ("sub", "super"):
        law = ctx["laws"][name]
        eng = ctx["eng"][name]
        inv = invariant_measure(law, eng)
        mu = inv.mu
        beta = model_constants(law).beta
        rows = ctx["rows"].setdefault(
            name, eng.one_step_rows(i_max=len(mu) - 1, j_max=20))
        lhs = beta * mu[1:21]
        rhs = mu @ rows[:, :21]
        resid = float(np.max(np.abs(lhs - rhs[1:21])))
        ok = ok and resid < 1e-6

        def m_of(x, mu=mu):
            acc = 0.0
            for c in mu[::-1]:
                acc = acc * x + c
            return acc

        m_p0 = m_of(law.pmf[0])
        fe = max(abs(m_of(float(law.gf(s))) - beta * m_of(s) - m_p0)
                 for s in np.linspace(0.0, 0.9, 7))
        ok = ok and fe < 1e-8
        parts.append("%s: kernel resid=%s (tol 1e-6), functional resid=%s "
                     "(tol 1e-8)" % (name, _g(resid), _g(fe)))
    return CheckResult(5, "invariant-measure", ok, "; ".join(parts))


def _check06_conditional_limit(ctx):
    law = ctx["laws"]["critical"]
    eng = ctx["eng"]["critical"]
    nv = 400 * yaglom_gf(law, eng, 400, 0.5)
    rel1 = abs(nv - 4.0) / 4.0
    row = conditioned_row(law, eng, 400, i=1, j_max=2)
    npt = 400 * row[1]
    rel2 = abs(npt - 4.0) / 4.0
    ok = rel1 < 0.1 and rel2 < 0.1
    return CheckResult(6, "conditional-limit", ok,
                       "n V_n(0.5) = %s vs claimed 4 (rel err %s, tol 0.1); "
                       "n Ptilde_11 = %s vs claimed 4 (rel err %s, tol 0.1)" %
                       (_g(nv), _g(rel1), _g(npt), _g(rel2)))


def _check07_q_stationarity(ctx):
    law = ctx["laws"]["sub"]
    kern = QKernel(law, cap=256)
    v, leak = kern.distribution_from(1, 60)
    target = math.exp(-8.0 / 7.0)
    d1 = abs(v[1] - target)
    ok1 = d1 < 0.01 * target
    pi = pi_distribution(law, j_max=64)
    q = kern.matrix
    j_hi = 20
    act = pi.pi[1:65] @ q[1:65, 1:j_hi + 1]
    resid = float(np.max(np.abs(pi.pi[1:j_hi + 1] - act)))
    ok2 = resid < 1e-6
    gamma = model_constants(law).gamma
    d3 = abs(pi.pi_prime_at_1 - 11.0 / 3.0)
    ok3 = d3 < 1e-9
    return CheckResult(7, "q-stationarity", ok1 and ok2 and ok3,
                       "Q_11(60) = %s vs closed-form pi_1 = %s (diff %s, tol "
                       "%s, kernel leak %s); pi fixed-point resid = %s (tol "
                       "1e-6); pi'(1) = %s vs 11/3 (diff %s, tol 1e-9)" %
                       (_g(v[1]), _g(target), _g(d1), _g(0.01 * target),
                        _g(leak), _g(resid), _g(1.0 + gamma), _g(d3)))


def _check08_critical_q_growth(ctx):
    law = ctx["laws"]["critical"]
    eng = ctx["eng"]["critical"]
    vals = []
    ok = True
    for n in (200, 300, 400):
        v = n * n * q_transition(law, n, 1, 1, engine=eng)
        vals.append("n=%d: %s" % (n, _g(v)))
        ok = ok and 8.0 <= v <= 16.0
    mu = mu_critical(law, eng)
    ces = mu.cesaro(j_sum=20, n=400)
    rel = abs(ces - 8.0) / 8.0
    ok = ok and rel <= 0.15
    return CheckResult(8, "critical-q-growth", ok,
                       "n^2 Q_11 in [8,16]: %s; Cesaro sum/n^2 = %s vs 8 "
                       "(rel %s, tol 0.15)" % ("; ".join(vals), _g(ces), _g(rel)))


def _check09_joint_limit_mc(ctx):
    law = ctx["laws"]["critical"]
    sim = simulate_q(law, n=400, reps=MC_REPS, seed=ctx["seed"])
    ew = expected_w(law, 400)
    es = expected_s(law, 400)
    ks = ks_distance(sim.w / ew, limit_cdf_w, min_n=1000)
    ok = ks < 0.02
    parts = ["KS(W/EW) = %s (tol 0.02)" % _g(ks)]
    u = sim.s / es
    for th in (0.5, 1.0, 2.0):
        m, se = empirical_transform(u, th)
        tgt = limit_transforms(th, 0.0)
        z = abs(m - tgt) / se
        ok = ok and z < 3.0
        parts.append("laplace(%s): %s vs %s (%s se)" % (_g(th), _g(m), _g(tgt), _g(z)))
    joint = np.exp(-sim.w / ew - u)
    jm = float(joint.mean())
    jse = float(joint.std(ddof=1) / math.sqrt(len(joint)))
    jt = limit_transforms(1.0, 1.0)
    jz = abs(jm - jt) / jse
    ok = ok and jz < 3.0
    parts.append("joint(1,1): %s vs %s (%s se)" % (_g(jm), _g(jt), _g(jz)))
    rho = float(np.corrcoef(sim.w, sim.s)[0, 1])
    tgt_rho = math.sqrt(6.0) / 3.0
    rrel = abs(rho - tgt_rho) / tgt_rho
    ok = ok and rrel < 0.05
    parts.append("rho = %s vs %s (rel %s, tol 0.05)" % (_g(rho), _g(tgt_rho), _g(rrel)))
    if bool(sim.truncated.any()):
        ok = False
        parts.append("TRUNCATED replicas present")
    return CheckResult(9, "joint-limit-mc", ok, "; ".join(parts))


def _check10_lln_clt_mc(ctx):
    law = ctx["laws"]["sub"]
    sim = simulate_q(law, n=3000, reps=MC_REPS, seed=ctx["seed"],
                     checkpoints=(2000,))
    m = float(np.mean(sim.s_at[2000] / 2000.0))
    tgt = 11.0 / 3.0
    rel = abs(m - tgt) / tgt
    ok1 = rel < 0.01
    es = expected_s(law, 3000)
    z = (sim.s - es) / math.sqrt(80.0 * 3000.0)
    ks = ks_distance(z, norm.cdf, min_n=1000)
    ok2 = ks < 0.02
    return CheckResult(10, "lln-clt-mc", ok1 and ok2,
                       "mean(S_2000/2000) = %s vs 11/3 (rel %s, tol 0.01); "
                       "KS((S_3000 - ES)/sqrt(80n), Phi) = %s (tol 0.02, "
                       "claimed variance rate 80)" % (_g(m), _g(rel), _g(ks)))


_CHECKS = [
    _check01_lf_oracle,
    _check02_residual_bracket,
    _check03_critical_decay,
    _check04_local_limit,
    _check05_invariant_measure,
    _check06_conditional_limit,
    _check07_q_stationarity,
    _check08_critical_q_growth,
    _check09_joint_limit_mc,
    _check10_lln_clt_mc,
]


def _run_pass(seed, selected=None):
    laws = standard_laws()
    ctx = {
        "laws": laws,
        "eng": {k: SeriesEngine(v, order=SERIES_ORDER) for k, v in laws.items()},
        "rows": {},
        "seed": seed,
    }
    fns = (_CHECKS if selected is None
           else [fn for i, fn in enumerate(_CHECKS, 1) if i in selected])
    return [fn(ctx) for fn in fns]


def _render(results, seed):
    laws = standard_laws()
    lines = [
        "branchlab acceptance report",
        "version %s  seed %d  series order %d  mc replicas %d" %
        (__version__, seed, SERIES_ORDER, MC_REPS),
    ]
    for name in ("sub", "critical", "super"):
        lines.append("model %-8s pmf %s  sha256 %s" %
                     (name, list(map(float, laws[name].pmf)), model_hash(laws[name])))
    lines.extend(r.line() for r in results)
    npass = sum(r.passed for r in results)
    lines.append("result: %d/%d checks pass" % (npass, len(results)))
    return "\n".join(lines) + "\n"


@dataclass
class AcceptanceReport:
    seed: int
    results: list
    text: str

    @property
    def all_passed(self):
        return all(r.passed for r in self.results)

    @property
    def passed_count(self):
        return sum(r.passed for r in self.results)


def run_all(seed=DEFAULT_SEED, skip_determinism=False, checks=None):
    """Run the suite. The determinism check (number 11) repeats the other
    checks from scratch and compares the rendered partial reports byte for
    byte, so a full run costs two passes.

    checks: optional iterable of check numbers in 1..10 restricting the run
    (the CLI's --suite). A restricted run skips the determinism check.
    """
    selected = None if checks is None else set(int(k) for k in checks)
    results = _run_pass(seed, selected)
    if selected is not None:
        return AcceptanceReport(seed=seed, results=results,
                                text=_render(results, seed))
    if skip_determinism:
        det = CheckResult(11, "determinism", False, "skipped")
        return AcceptanceReport(seed=seed, results=results + [det],
                                text=_render(results + [det], seed))
    text_a = _render(results, seed)
    results_b = _run_pass(seed)
    text_b = _render(results_b, seed)
    same = text_a == text_b
    det = CheckResult(11, "determinism", same,
                      "two full passes at seed %d: %s (%d bytes)" %
                      (seed, "byte-identical" if same else "DIFFER", len(text_a)))
    full = results + [det]
    return AcceptanceReport(seed=seed, results=full, text=_render(full, seed))
