"""Unbiased estimation of the number parameter after concentration.

After the concentrating operator the ``n - 1`` ancilla modes are in the
thermal state ``rho_{0,N}`` whatever ``theta`` is, so their total count
divided by ``n - 1`` is an unbiased estimator of ``N`` whose variance
``N(N+1)/(n-1)`` equals the inverse SLD Fisher information.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import concentrator_steps

__all__ = ["UmvueResult", "sld_fisher", "umvue_mse", "umvue_samples", "umvue_simulate"]


@dataclass(frozen=True)
class UmvueResult:
    """Monte Carlo summary of the estimator ``K / (n - 1)``."""

    mean: float
    mse: float
    mean_stderr: float
    mse_stderr: float
    draws: int


def sld_fisher(n: int, N: float) -> float:
    """SLD Fisher information ``(n-1)/(N(N+1))`` of the ancilla modes."""
    if int(n) != n or n < 2:
        raise ValueError("need n >= 2 copies (at least one ancilla mode)")
    if N <= 0:
        raise ValueError("N must be positive")
    return (n - 1) / (N * (N + 1))


def umvue_mse(n: int, N: float) -> float:
    """Exact mean squared error ``N(N+1)/(n-1)`` of the estimator."""
    return 1.0 / sld_fisher(n, N)


def _mode_matrix(n: int) -> np.ndarray:
    M = np.eye(n)
    for i, j, t in concentrator_steps(range(n)):
        R = np.eye(n)
        c, s = math.cos(t), math.sin(t)
        R[i, i], R[i, j], R[j, i], R[j, j] = c, s, -s, c
        M = R @ M
    return M


def umvue_samples(n: int, N: float, theta: complex, draws: int, rng: np.random.Generator,
                  method: str = "mixture") -> np.ndarray:
    """Draw estimates ``K / (n - 1)``.

    ``method="marginal"`` draws the ancilla counts as independent
    geometric variables.  ``method="mixture"`` samples the whole
    experiment: each input mode is a Gaussian mixture of coherent states
    ``|xi_j)`` with ``xi_j ~ CN(theta, N)``, the concentrator maps the
    amplitudes linearly, and each output mode is counted with a Poisson
    law of mean ``|xi'_j|**2``.  Only in the second method does ``theta``
    enter the simulation.
    """
    if int(n) != n or n < 2:
        raise ValueError("need n >= 2")
    if method == "marginal":
        p = 1.0 / (N + 1.0)
        return rng.negative_binomial(n - 1, p, size=draws) / (n - 1)
    if method != "mixture":
        raise ValueError("method must be 'mixture' or 'marginal'")
    M = _mode_matrix(n)[1:]  # rows of the ancilla modes
    sd = math.sqrt(N / 2.0)
    xi = (complex(theta) + sd * (rng.standard_normal((draws, n))
                                 + 1j * rng.standard_normal((draws, n))))
    out = xi @ M.T
    counts = rng.poisson(np.abs(out) ** 2)
    return counts.sum(axis=1) / (n - 1)


def umvue_simulate(n: int, N: float, theta: complex = 0.0, draws: int = 10 ** 6,
                   seed: int = 0, method: str = "mixture", chunk: int = 200_000) -> UmvueResult:
    """Monte Carlo mean and MSE of the estimator with standard errors."""
    if draws < 2:
        raise ValueError("draws must be at least 2")
    rng = np.random.default_rng(seed)
    s1 = s2 = e1 = e2 = 0.0
    done = 0
    while done < draws:
        size = min(chunk, draws - done)
        est = umvue_samples(n, N, theta, size, rng, method)
        sq = (est - N) ** 2
        s1 += est.sum()
        s2 += (est * est).sum()
        e1 += sq.sum()
        e2 += (sq * sq).sum()
        done += size
    mean = s1 / draws
    var = max(s2 / draws - mean * mean, 0.0)
    mse = e1 / draws
    mse_var = max(e2 / draws - mse * mse, 0.0)
    return UmvueResult(mean, mse, math.sqrt(var / draws), math.sqrt(mse_var / draws), draws)
