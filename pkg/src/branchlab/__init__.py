"""Exact series tools and conditioned-process simulation for discrete
branching models: extinction residual asymptotics, invariant measures,
the never-extinct chain and its cumulative state, and a deterministic
counter-based Monte Carlo layer."""

import os


def _setup_threads():
    # honored only if numpy has not been imported yet in this process
    v = os.environ.get("BRANCHLAB_THREADS")
    if v:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, v)


_setup_threads()

__version__ = "0.1.0"

from .offspring import (LinearFractionalLaw, ModelConstants, OffspringLaw,  # noqa: E402
                        model_constants)
from .series import SeriesEngine  # noqa: E402
from .asymptotics import (basic_lemma_constants, conditioned_transition,  # noqa: E402
                          critical_decay, invariant_measure, k_function,
                          local_limit, schroeder_check, yaglom_gf)
from .qprocess import (QKernel, expected_w, mu_critical, pi_distribution,  # noqa: E402
                       q_row, q_transition, stationary_from_kernel)
from .cumulative import (expected_s, joint_gf, limit_cdf_w, limit_transforms,  # noqa: E402
                         lln_clt_constants, moment_asymptotics)
from .montecarlo import (merge_results, simulate_gw, simulate_q)  # noqa: E402
from .acceptance import DEFAULT_SEED, run_all  # noqa: E402

__all__ = [
    "__version__",
    "OffspringLaw", "LinearFractionalLaw", "ModelConstants", "model_constants",
    "SeriesEngine",
    "basic_lemma_constants", "critical_decay", "k_function", "local_limit",
    "invariant_measure", "conditioned_transition", "yaglom_gf", "schroeder_check",
    "QKernel", "q_transition", "q_row", "expected_w", "pi_distribution",
    "stationary_from_kernel", "mu_critical",
    "joint_gf", "expected_s", "moment_asymptotics", "limit_transforms",
    "limit_cdf_w", "lln_clt_constants",
    "simulate_gw", "simulate_q", "merge_results",
    "run_all", "DEFAULT_SEED",
]
