"""Command line front end.

Exit codes: 0 success (and all checks pass under `verify`), 1 functional
failure (a failed verify run, a regime error such as asking for the
stationary law of a critical model), 2 usage errors (argparse).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .acceptance import DEFAULT_SEED, model_hash, run_all
from .asymptotics import (basic_lemma_constants, decay_classification,
                          invariant_measure, k_function, local_limit,
                          yaglom_gf)
from .cumulative import (expansion_oracles, expected_s, lln_clt_constants,
                         moment_asymptotics)
from .montecarlo import SimulationConfig, simulate_gw, simulate_q
from .offspring import LinearFractionalLaw, OffspringLaw, model_constants
from .qprocess import (QKernel, expected_w, mu_critical, pi_distribution,
                       q_transition, stationary_from_kernel)
from .series import SeriesEngine

BUILTIN = {
    "sub": [0.5, 0.25, 0.25],
    "critical": [0.25, 0.5, 0.25],
    "super": [0.25, 0.25, 0.5],
}

SUITES = {
    "all": None,
    "oracle": (1,),
    "series": (1, 2, 3, 4, 5),
    "limits": (6, 7, 8),
    "mc": (9, 10),
    "lln": (10,),
}


class ModelInputError(Exception):
    """Bad model reference or file; maps to exit code 2."""


def load_law(spec):
    """Builtin name, or a JSON file with {"pmf": [...]} or
    {"linear_fractional": {"b": ..., "c": ...}}."""
    if spec in BUILTIN:
        return OffspringLaw(BUILTIN[spec])
    if spec == "lf-critical":
        return LinearFractionalLaw(0.25, 0.5)
    try:
        with open(spec) as fh:
            doc = json.load(fh)
        if "linear_fractional" in doc:
            lf = doc["linear_fractional"]
            return LinearFractionalLaw(float(lf["b"]), float(lf["c"]))
        return OffspringLaw(doc["pmf"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ModelInputError("cannot load model %r: %s" % (spec, exc))


def _header(law, order=None, seed=None):
    bits = ["branchlab %s" % __version__, "model sha256 %s" % model_hash(law)]
    if order is not None:
        bits.append("order %d" % order)
    if seed is not None:
        bits.append("seed %d" % seed)
    return "  ".join(bits)


def _emit(args, text):
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


def cmd_analyze(args):
    law = load_law(args.model)
    c = model_constants(law)
    eng = SeriesEngine(law, order=args.order)
    lines = [_header(law, order=args.order),
             "model pmf: %s" % list(map(float, law.pmf))]
    regime = ("critical" if c.is_critical
              else ("subcritical" if c.mean < 1.0 else "supercritical"))
    lines.append("mean %.12g  q %.12g  beta %.12g  regime %s"
                 % (c.mean, c.q, c.beta, regime))
    lines.append("alpha %.12g  gamma %s  b2 %.12g"
                 % (c.alpha, "n/a" if c.gamma is None else "%.12g" % c.gamma,
                    c.b2))
    dc = decay_classification(law)
    lines.append("decay: %s, rate %.12g%s"
                 % (dc.regime, dc.rate, " (polynomial)" if dc.polynomial else ""))
    for n in (10, 50, 100):
        r = eng.residuals_scalar(0.0, n)[n]
        lines.append("R_%d(0) = %.12g" % (n, r))
    if c.is_critical:
        n = args.n or 200
        r = eng.residuals_scalar(0.0, n)[n]
        lines.append("critical decay: R_%d(0)*(B*%d+1) = %.12g"
                     % (n, n, r * (c.b2 * n + 1.0)))
        ll = local_limit(law, eng)
        for n_, v in ll.values.items():
            lines.append("n^2 P_11(%d) = %.12g  bracket [%.12g, %.12g]"
                         % (n_, v, ll.bracket.lo, ll.bracket.hi))
    else:
        blc = basic_lemma_constants(law, eng)
        lines.append("A(0) = %.12g  delta bounds [%.12g, %.12g]"
                     % (blc.a_of_s(0.0), blc.delta1, blc.delta2))
        kf = k_function(law, eng, s=0.0)
        lines.append("K(0): product %.12g, series %.12g, exp(-delta*A) "
                     "bracket [%.12g, %.12g] (closed form fails; see README)"
                     % (kf.product_limit, kf.series_check,
                        kf.bracket.lo, kf.bracket.hi))
        inv = invariant_measure(law, eng)
        mu = " ".join("%.8g" % v for v in inv.mu[1:9])
        lines.append("invariant mu_1..8: %s" % mu)
    if args.n and not c.is_critical:
        nv = yaglom_gf(law, eng, args.n, 0.5)
        lines.append("V_%d(0.5) = %.12g" % (args.n, nv))
    _emit(args, "\n".join(lines) + "\n")
    return 0


def cmd_qprocess(args):
    law = load_law(args.model)
    c = model_constants(law)
    if args.pi and c.is_critical:
        raise ValueError("the stationary law requires beta < 1; "
                         "this model is critical")
    eng = SeriesEngine(law, order=args.order)
    n = args.n or (400 if c.is_critical else 60)
    lines = [_header(law, order=args.order),
             "model pmf: %s" % list(map(float, law.pmf))]
    lines.append("E W_%d from state %d = %.12g" % (n, args.i, expected_w(law, n, args.i)))
    lines.append("Q_%d%d(%d) = %.12g" % (args.i, 1, n, q_transition(law, n, args.i, 1, eng)))
    if c.is_critical:
        mc = mu_critical(law, eng)
        for n_ in (200, 400):
            lines.append("n^2 Q_11(%d) = %.12g  bracket [%.12g, %.12g]"
                         % (n_, n_ ** 2 * q_transition(law, n_, 1, 1, eng),
                            mc.local_bracket().lo, mc.local_bracket().hi))
        lines.append("cesaro(j<=20, n=400)/n^2 = %.12g vs 2/(alpha-1)^2 = %.12g"
                     % (mc.cesaro(20, 400), 2.0 / (c.alpha - 1.0) ** 2))
    else:
        pi = pi_distribution(law)
        v, quality = stationary_from_kernel(law, cap=256, n=n)
        lines.append("closed-form pi_1..6: %s"
                     % " ".join("%.8g" % x for x in pi.pi[1:7]))
        lines.append("measured stationary pi_1..6: %s  (quality %.3g)"
                     % (" ".join("%.8g" % x for x in v[1:7]), quality))
        lines.append("note: closed form and measured law disagree beyond the "
                     "mean; see README documented failures")
        lines.append("pi'(1) = %.12g (exact mean 1+gamma)" % pi.pi_prime_at_1)
        kern = QKernel(law, cap=256)
        m, err = kern.expected_state(args.i, n)
        lines.append("kernel E W_%d = %.12g (+/- %.3g truncation)" % (n, m, err))
    _emit(args, "\n".join(lines) + "\n")
    return 0


def cmd_joint(args):
    law = load_law(args.model)
    c = model_constants(law)
    n = args.n or 200
    lines = [_header(law),
             "model pmf: %s" % list(map(float, law.pmf))]
    lines.append("E W_%d = %.12g  E S_%d = %.12g"
                 % (n, expected_w(law, n), n, expected_s(law, n)))
    mom = moment_asymptotics(law, n)
    lines.append("finite-difference cumulants at n=%d:" % n)
    lines.append("  EW %.10g  ES %.10g" % (mom.ew, mom.es))
    lines.append("  VarW %.10g  VarS %.10g  cov %.10g  rho %.10g"
                 % (mom.var_w, mom.var_s, mom.cov, mom.rho))
    if c.is_critical:
        lines.append("critical scaled targets: VarW/n^2 -> %.10g, "
                     "VarS/n^4 -> %.10g, rho -> %.10g"
                     % ((c.alpha - 1.0) ** 2 / 2.0,
                        (c.alpha - 1.0) ** 2 / 12.0, np.sqrt(6.0) / 3.0))
    else:
        lc = lln_clt_constants(law)
        lines.append("LLN slope 1+gamma = %.12g; stated CLT constant 2*Psi = %.12g "
                     "(empirically wrong; see README)" % (lc.one_plus_gamma, 2 * lc.psi))
        rep = expansion_oracles(law)
        lines.append("expansion oracles (theta: lhs rhs resid):")
        for label, rel in (("h", rep.h_relation), ("u", rep.u_relation),
                           ("ratio", rep.ratio_relation)):
            for th, (lhs, rhs, resid) in sorted(rel.items()):
                lines.append("  %-6s %.1e: %.10g %.10g %.3g" % (label, th, lhs, rhs, resid))
        lines.append("u-relation residual halving ratio = %.4g "
                     "(8 would mean a theta^3 error term)" % rep.u_halving_ratio)
    _emit(args, "\n".join(lines) + "\n")
    return 0


def cmd_simulate(args):
    law = load_law(args.model)
    cfg = SimulationConfig(n=args.n, reps=args.reps, seed=args.seed,
                           i0=args.i, checkpoints=tuple(args.checkpoint or ()),
                           replica_offset=args.replica_offset)
    cfg.validate(law, kind=args.kind)
    lines = [_header(law, seed=cfg.seed),
             "model pmf: %s" % list(map(float, law.pmf)),
             "kind %s  n %d  reps %d  seed %d  i0 %d  offset %d"
             % (args.kind, cfg.n, cfg.reps, cfg.seed, cfg.i0, cfg.replica_offset)]
    if args.kind == "gw":
        res = simulate_gw(law, cfg.n, cfg.reps, cfg.seed, i0=cfg.i0,
                          checkpoints=cfg.checkpoints,
                          replica_offset=cfg.replica_offset)
        q = model_constants(law).q
        lines.append("extinct fraction %.6g (q = %.6g)" % (res.extinct_fraction(), q))
        lines.append("mean Z_n %.6g  truncated %d" % (res.z.mean(), int(res.truncated.sum())))
        for g, arr in sorted(res.z_at.items()):
            lines.append("Z_%d: mean %.6g  survival %.6g"
                         % (g, arr.mean(), float(np.mean(arr > 0))))
    else:
        res = simulate_q(law, cfg.n, cfg.reps, cfg.seed, i0=cfg.i0,
                         checkpoints=cfg.checkpoints,
                         replica_offset=cfg.replica_offset)
        lines.append("mean W_n %.6g (exact %.6g)" %
                     (res.w.mean(), expected_w(law, cfg.n, cfg.i0)))
        lines.append("mean S_n %.6g (exact %.6g from i0=1)" %
                     (res.s.mean(), expected_s(law, cfg.n)))
        lines.append("truncated %d  row trim leak %.3g"
                     % (int(res.truncated.sum()), res.trim_leak))
        for g in sorted(res.w_at):
            lines.append("W_%d mean %.6g  S_%d mean %.6g"
                         % (g, res.w_at[g].mean(), g, res.s_at[g].mean()))
    _emit(args, "\n".join(lines) + "\n")
    return 0


def cmd_verify(args):
    report = run_all(seed=args.seed, checks=SUITES[args.suite])
    _emit(args, report.text)
    return 0 if report.all_passed else 1


def build_parser():
    p = argparse.ArgumentParser(
        prog="branchlab",
        description="series and simulation tools for discrete branching models")
    p.add_argument("--version", action="version", version="branchlab " + __version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True):
        if model:
            sp.add_argument("-m", "--model", default="sub",
                            help="builtin name (sub|critical|super|lf-critical) "
                                 "or JSON file path")
        sp.add_argument("-o", "--out", help="also write output to this file")

    sp = sub.add_parser("analyze", help="constants, residuals, invariant measure")
    common(sp)
    sp.add_argument("-n", type=int, default=None)
    sp.add_argument("--order", type=int, default=256)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("qprocess", help="conditioned never-extinct chain")
    common(sp)
    sp.add_argument("-n", type=int, default=None)
    sp.add_argument("-i", type=int, default=1, help="initial state")
    sp.add_argument("--order", type=int, default=256)
    sp.add_argument("--pi", action="store_true",
                    help="require the stationary table (errors on critical "
                         "models, which have none)")
    sp.set_defaults(func=cmd_qprocess)

    sp = sub.add_parser("joint", help="cumulative-state moments and expansions")
    common(sp)
    sp.add_argument("-n", type=int, default=None)
    sp.set_defaults(func=cmd_joint)

    sp = sub.add_parser("simulate", help="Monte Carlo runs")
    common(sp)
    sp.add_argument("--kind", choices=("gw", "q"), default="q")
    sp.add_argument("-n", type=int, required=True)
    sp.add_argument("-N", "--reps", type=int, default=10000)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("-i", type=int, default=1)
    sp.add_argument("--checkpoint", type=int, action="append")
    sp.add_argument("--replica-offset", type=int, default=0)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify", help="run the acceptance suite")
    common(sp, model=False)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--suite", choices=sorted(SUITES), default="all",
                    help="named subset of the numbered checks")
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ModelInputError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
