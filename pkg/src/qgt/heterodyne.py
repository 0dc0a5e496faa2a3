"""Classical tests on heterodyne outcomes, used as a baseline.

A heterodyne measurement on ``rho_{theta,N}`` returns a complex number
``z`` whose real and imaginary parts are independent normals with means
``Re theta``, ``Im theta`` and common variance ``(N+1)/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import _check_alpha
from .optimal_tests import build_chi2_test, build_mean_test, chi2_power, mean_test_power

__all__ = [
    "HeterodyneModel",
    "ErrorCurve",
    "DominanceError",
    "marcum_q1",
    "ncx2_2_cdf",
    "het_mean_test_beta",
    "het_number_test_beta",
    "comparison_curve",
    "FIGURE_SETTINGS",
]

FIGURE_SETTINGS = {
    "fig1": {"n_param": 1.0 / 9.0, "alpha": 0.1},
    "fig2": {"n_param": 1.0 / 9.0, "alpha": 0.1},
}


@dataclass(frozen=True)
class HeterodyneModel:
    """Outcome law of heterodyne detection on one Gaussian mode."""

    mean: complex
    n_param: float

    @property
    def per_quadrature_variance(self) -> float:
        return (self.n_param + 1.0) / 2.0

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        sd = math.sqrt(self.per_quadrature_variance)
        return (self.mean.real + sd * rng.standard_normal(size)
                + 1j * (self.mean.imag + sd * rng.standard_normal(size)))


class DominanceError(AssertionError):
    """The number-measurement curve lies above the heterodyne curve."""


def ncx2_2_cdf(x: float, lam: float, tol: float = 1e-10) -> float:
    """CDF of the noncentral chi-square law with two degrees of freedom.

    Poisson mixture ``sum_j Pois(j; lam/2) P(j + 1, x/2)`` where ``P`` is
    the regularized lower incomplete gamma function.  Terms are added
    until the remaining Poisson mass is below ``tol``; since ``P <= 1``
    that bounds the truncation error.
    """
    if x <= 0:
        return 0.0
    h, y = lam / 2.0, x / 2.0
    gam = -math.expm1(-y)  # P(1, y)
    total = mass = 0.0
    j = 0
    while True:
        w = math.exp(-h + j * math.log(h) - math.lgamma(j + 1)) if h > 0 else float(j == 0)
        total += w * gam
        mass += w
        if j >= h and 1.0 - mass <= tol:
            break
        j += 1
        # P(j + 1, y) = P(j, y) - e^{-y} y^j / j!
        gam = max(0.0, gam - math.exp(-y + j * math.log(y) - math.lgamma(j + 1)))
    return min(1.0, total)


def marcum_q1(a: float, b: float) -> float:
    """First-order Marcum Q function ``Q_1(a, b)``."""
    return 1.0 - ncx2_2_cdf(b * b, a * a)


def het_mean_test_beta(N: float, alpha: float, r: float) -> float:
    """Type II error of the rotation-invariant heterodyne test of ``theta = 0``.

    The test rejects when ``|z|**2 > -(N + 1) log(alpha)``.  With
    ``sigma**2 = (N+1)/2`` the statistic ``|z|**2 / sigma**2`` is
    noncentral chi-square with two degrees of freedom and noncentrality
    ``r**2 / sigma**2``.
    """
    _check_alpha(alpha)
    if r < 0 or N < 0:
        raise ValueError("need r >= 0 and N >= 0")
    sigma2 = (N + 1.0) / 2.0
    return ncx2_2_cdf(-2.0 * math.log(alpha), r * r / sigma2)


def het_number_test_beta(N0: float, alpha: float, N: float) -> float:
    """Type II error ``1 - alpha**((N0+1)/(N+1))`` of the heterodyne test of ``N <= N0``."""
    _check_alpha(alpha)
    if N < 0 or N0 < 0:
        raise ValueError("need N, N0 >= 0")
    return -math.expm1((N0 + 1.0) / (N + 1.0) * math.log(alpha))


@dataclass(frozen=True)
class ErrorCurve:
    """Type II errors of the number and heterodyne tests on a grid."""

    problem: str
    grid: tuple
    beta_number: tuple
    beta_heterodyne: tuple

    @property
    def dominates(self) -> bool:
        return all(b <= h + 1e-9 for b, h in zip(self.beta_number, self.beta_heterodyne))

    def rows(self):
        return list(zip(self.grid, self.beta_number, self.beta_heterodyne))


def comparison_curve(problem: str, grid, n_param: float | None = None,
                     alpha: float | None = None, strict: bool = True) -> ErrorCurve:
    """Paired type II error curves for one of the two comparison settings.

    ``"fig1"`` tests ``theta = 0`` against ``|theta| = r`` at known
    ``N = n_param`` (grid over ``r``).  ``"fig2"`` tests ``N <= N0`` with
    ``N0 = n_param`` at ``theta = 0`` (grid over ``N``).  Defaults are
    ``n_param = 1/9`` and ``alpha = 0.1``.  With ``strict`` a
    :class:`DominanceError` is raised if the number-measurement error is
    above the heterodyne error anywhere.
    """
    if problem not in FIGURE_SETTINGS:
        raise ValueError(f"problem must be one of {sorted(FIGURE_SETTINGS)}")
    cfg = dict(FIGURE_SETTINGS[problem])
    if n_param is not None:
        cfg["n_param"] = n_param
    if alpha is not None:
        cfg["alpha"] = alpha
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("grid must be nonempty")
    N, a = cfg["n_param"], cfg["alpha"]
    if problem == "fig1":
        if min(grid) < 0:
            raise ValueError("fig1 grid values are radii and must be >= 0")
        test = build_mean_test(0.0, N, a)
        num = [1.0 - mean_test_power(test, r, N) for r in grid]
        het = [het_mean_test_beta(N, a, r) for r in grid]
    else:
        if min(grid) < N:
            raise ValueError(f"fig2 grid values must be >= N0={N}")
        test = build_chi2_test(1, N, a)
        num = [1.0 - chi2_power(test, 1, x) for x in grid]
        het = [het_number_test_beta(N, a, x) for x in grid]
    curve = ErrorCurve(problem, tuple(grid), tuple(num), tuple(het))
    if strict and not curve.dominates:
        bad = [g for g, b, h in curve.rows() if b > h + 1e-9]
        raise DominanceError(f"number-measurement error exceeds heterodyne error at {bad[:5]}")
    return curve
