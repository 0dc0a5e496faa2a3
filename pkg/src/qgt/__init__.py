"""Optimal number-measurement tests for quantum Gaussian states.

Submodules
----------
distributions
    Photon-number law of ``rho_{theta,N}`` and related count laws.
optimal_tests
    chi-square, mean, t and F tests and their composition with passive
    networks.
fock
    Truncated Fock-space simulator used to cross-check the reductions.
heterodyne
    Classical heterodyne baselines.
estimation
    Unbiased estimation of the number parameter.
verify
    Named verification suites.
"""

__version__ = "0.1.0"

from .distributions import GaussianParams, NChiSqParams, number_pmf, nchisq_cdf  # noqa: E402
from .optimal_tests import (  # noqa: E402
    build_chi2_test,
    build_mean_test,
    compose_test,
    f_thresholds,
    t_thresholds,
)

__all__ = [
    "GaussianParams",
    "NChiSqParams",
    "number_pmf",
    "nchisq_cdf",
    "build_chi2_test",
    "build_mean_test",
    "compose_test",
    "f_thresholds",
    "t_thresholds",
]
