"""Photon-count distributions of single-mode Gaussian states.

The number measurement on a displaced thermal state with mean parameter
``theta`` and number parameter ``N`` produces the law

    P(k) = 1/(N+1) * (N/(N+1))**k * exp(-|theta|**2/(N+1))
           * L_k(-|theta|**2 / (N (N+1)))

where ``L_k`` is the Laguerre polynomial.  Everything here works in
log-space; the Laguerre factor is evaluated with a rescaled three-term
recurrence so that arguments up to a few hundred do not overflow.

Tail masses are bounded with a Chernoff argument on the probability
generating function, which is available in closed form for every law in
this module.  These bounds decide where finite sums are cut.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

__all__ = [
    "GaussianParams",
    "NChiSqParams",
    "CountPmf",
    "NumberPmf",
    "NegBinomialPmf",
    "laguerre",
    "log_laguerre_neg",
    "number_pmf",
    "number_pmf_array",
    "number_survival",
    "gaussian_moments",
    "negbin_pmf",
    "total_count_cutoff",
    "nchisq_upper_point",
    "nchisq_cdf",
    "chi2_cdf",
    "regularized_lower_gamma",
]

# Relative slack used when a level alpha coincides with a lattice atom of
# a cumulative sum.  Survival values within this distance of alpha are
# treated as equal to it.
TIE_TOL = 1e-12


@dataclass(frozen=True)
class GaussianParams:
    """Parameters of one mode of a quantum Gaussian state.

    Parameters
    ----------
    theta : complex
        Mean parameter (coherent amplitude).
    n_param : float
        Number parameter ``N >= 0``, the mean photon number of the
        thermal part.
    """

    theta: complex = 0.0
    n_param: float = 0.0

    def __post_init__(self):
        theta = complex(self.theta)
        n_param = float(self.n_param)
        if not (math.isfinite(theta.real) and math.isfinite(theta.imag)):
            raise ValueError(f"theta must be finite, got {self.theta!r}")
        if not math.isfinite(n_param) or n_param < 0:
            raise ValueError(f"n_param must be a finite number >= 0, got {self.n_param!r}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "n_param", n_param)

    @property
    def intensity(self) -> float:
        """Return ``|theta|**2``, the only function of theta that enters."""
        return abs(self.theta) ** 2


@dataclass(frozen=True)
class NChiSqParams:
    """Parameters of the law of ``2 K / N`` with ``K ~ negbin(dof, N)``."""

    dof: int
    n_param: float

    def __post_init__(self):
        if int(self.dof) != self.dof or self.dof < 1:
            raise ValueError(f"dof must be a positive integer, got {self.dof!r}")
        if not math.isfinite(self.n_param) or self.n_param <= 0:
            raise ValueError(f"n_param must be positive, got {self.n_param!r}")
        object.__setattr__(self, "dof", int(self.dof))
        object.__setattr__(self, "n_param", float(self.n_param))


def _check_alpha(alpha):
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")


# ---------------------------------------------------------------------------
# Laguerre polynomials
# ---------------------------------------------------------------------------


def laguerre(k: int, x: float) -> float:
    """Evaluate the Laguerre polynomial ``L_k(x)`` by forward recurrence.

    Uses ``L_{j+1} = ((2j + 1 - x) L_j - j L_{j-1}) / (j + 1)``, which is
    O(k).  For ``x <= 0`` every term is positive and the recurrence is
    well conditioned; for very negative ``x`` prefer
    :func:`log_laguerre_neg`, which cannot overflow.
    """
    if k < 0 or int(k) != k:
        raise ValueError(f"k must be a nonnegative integer, got {k!r}")
    prev, cur = 1.0, 1.0 - x
    if k == 0:
        return prev
    for j in range(1, int(k)):
        prev, cur = cur, ((2 * j + 1 - x) * cur - j * prev) / (j + 1)
    return cur


def log_laguerre_neg(kmax: int, x: float) -> np.ndarray:
    """Return ``log L_k(-x)`` for ``k = 0..kmax`` and ``x >= 0``.

    The recurrence is run on rescaled values: whenever the current term
    grows large, both carried terms are divided by it and the logarithm
    of the factor is added to a running offset.  Since ``L_k(-x) >= 1``
    for ``x >= 0`` no term can underflow either.
    """
    if x < 0:
        raise ValueError("log_laguerre_neg needs x >= 0")
    kmax = int(kmax)
    out = np.zeros(kmax + 1)
    if kmax == 0:
        return out
    offset = 0.0
    prev, cur = 1.0, 1.0 + x
    out[1] = math.log(cur)
    for j in range(1, kmax):
        nxt = ((2 * j + 1 + x) * cur - j * prev) / (j + 1)
        prev, cur = cur, nxt
        if cur > 1e200:
            scale = math.log(cur)
            prev /= cur
            cur = 1.0
            offset += scale
        out[j + 1] = offset + math.log(cur)
    return out


# ---------------------------------------------------------------------------
# Count distributions
# ---------------------------------------------------------------------------


class CountPmf:
    """Base class for laws on the nonnegative integers.

    Subclasses provide ``logpmf_array`` and ``log_pgf`` together with the
    radius ``z_max`` of convergence of the generating function.  The
    tail bound is the Chernoff bound ``P(K > k) <= G(z) / z**(k+1)``
    minimized over ``1 < z < z_max``.
    """

    z_max = math.inf

    def logpmf_array(self, kmax: int) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def log_pgf(self, z: float) -> float:  # pragma: no cover - abstract
        raise NotImplementedError

    @property
    def mean(self) -> float:  # pragma: no cover - abstract
        raise NotImplementedError

    def pmf_array(self, kmax: int) -> np.ndarray:
        """Probabilities of ``0..kmax``."""
        return np.exp(self.logpmf_array(kmax))

    def pmf(self, k: int) -> float:
        if k < 0:
            return 0.0
        return float(self.pmf_array(int(k))[-1])

    def survival(self, k0: int) -> float:
        """``P(K > k0)`` as one minus the exact finite head sum."""
        if k0 < 0:
            return 1.0
        head = math.fsum(self.pmf_array(int(k0)))
        return max(0.0, 1.0 - head)

    def tail_bound(self, k: int) -> float:
        """Rigorous upper bound on ``P(K > k)``."""
        k = int(k)
        if k < 0:
            return 1.0
        if self.mean == 0.0:
            return 0.0
        if k + 1 <= self.mean:
            return 1.0
        hi = math.log(self.z_max) if math.isfinite(self.z_max) else math.log((k + 1) / self.mean) + 1.0
        hi = min(hi, 700.0)

        def objective(u):
            return self.log_pgf(math.exp(u)) - (k + 1) * u

        res = minimize_scalar(objective, bounds=(0.0, hi * (1 - 1e-12)), method="bounded",
                              options={"xatol": 1e-10})
        return min(1.0, math.exp(min(res.fun, 0.0)))

    def cutoff(self, tol: float) -> int:
        """Smallest ``k`` with ``tail_bound(k) <= tol``."""
        if self.mean == 0.0:
            return 0
        lo = 0
        hi = max(1, int(math.ceil(self.mean)))
        while self.tail_bound(hi) > tol:
            lo = hi
            hi *= 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.tail_bound(mid) > tol:
                lo = mid
            else:
                hi = mid
        return hi if self.tail_bound(lo) > tol else lo


class NumberPmf(CountPmf):
    """Number-measurement outcome law of one Gaussian mode."""

    def __init__(self, params: GaussianParams):
        self.params = params
        self.x = params.intensity
        self.N = params.n_param
        self.z_max = math.inf if self.N == 0 else 1.0 + 1.0 / self.N

    @property
    def mean(self) -> float:
        return self.x + self.N

    def log_pgf(self, z: float) -> float:
        # G(z) = exp(x (z-1) / (1 - N (z-1))) / (1 - N (z-1))
        d = 1.0 - self.N * (z - 1.0)
        return self.x * (z - 1.0) / d - math.log(d)

    def logpmf_array(self, kmax: int) -> np.ndarray:
        kmax = int(kmax)
        k = np.arange(kmax + 1)
        x, N = self.x, self.N
        if N == 0.0:
            if x == 0.0:
                out = np.full(kmax + 1, -np.inf)
                out[0] = 0.0
                return out
            return k * math.log(x) - x - gammaln(k + 1)
        # log(N/(N+1)) = -log1p(1/N), log(1/(N+1)) = -log1p(N)
        base = -math.log1p(N) - k * math.log1p(1.0 / N) - x / (N + 1.0)
        if x == 0.0:
            return base
        return base + log_laguerre_neg(kmax, x / (N * (N + 1.0)))


class NegBinomialPmf(CountPmf):
    """Negative binomial law: total count of ``n`` geometric(N) modes."""

    def __init__(self, n: int, N: float):
        if int(n) != n or n < 1:
            raise ValueError(f"n must be a positive integer, got {n!r}")
        if not math.isfinite(N) or N <= 0:
            raise ValueError(f"N must be positive, got {N!r}")
        self.n = int(n)
        self.N = float(N)
        self.z_max = 1.0 + 1.0 / self.N

    @property
    def mean(self) -> float:
        return self.n * self.N

    def log_pgf(self, z: float) -> float:
        return -self.n * math.log(1.0 - self.N * (z - 1.0))

    def logpmf_array(self, kmax: int) -> np.ndarray:
        k = np.arange(int(kmax) + 1)
        n, N = self.n, self.N
        return (gammaln(k + n) - gammaln(n) - gammaln(k + 1)
                - n * math.log1p(N) - k * math.log1p(1.0 / N))


class _ProductPgf(CountPmf):
    """Sum of independent counts; only the tail bound is needed."""

    def __init__(self, parts):
        self.parts = list(parts)
        self.z_max = min(p.z_max for p in self.parts)

    @property
    def mean(self) -> float:
        return sum(p.mean for p in self.parts)

    def log_pgf(self, z: float) -> float:
        return sum(p.log_pgf(z) for p in self.parts)


def total_count_cutoff(params, tol: float = 1e-10) -> int:
    """Smallest ``S`` with a certified bound ``P(K_1 + ... + K_n > S) <= tol``.

    ``params`` is a sequence of :class:`GaussianParams`, one per mode, with
    independent number-measurement counts.
    """
    return _ProductPgf(NumberPmf(p) for p in params).cutoff(tol)


def number_pmf(p: GaussianParams, k: int) -> float:
    """Probability of observing ``k`` photons on the state ``p``."""
    if k < 0 or int(k) != k:
        raise ValueError(f"k must be a nonnegative integer, got {k!r}")
    return NumberPmf(p).pmf(int(k))


def number_pmf_array(p: GaussianParams, kmax: int) -> np.ndarray:
    """Probabilities of ``0..kmax`` photons on the state ``p``."""
    return NumberPmf(p).pmf_array(kmax)


def number_survival(p: GaussianParams, k0: int) -> float:
    """``P(K > k0)`` for the number measurement on ``p``."""
    if k0 < 0 or int(k0) != k0:
        raise ValueError(f"k0 must be a nonnegative integer, got {k0!r}")
    return NumberPmf(p).survival(int(k0))


def gaussian_moments(p: GaussianParams) -> tuple[float, float]:
    """Mean and variance of the photon count of ``p``."""
    x, N = p.intensity, p.n_param
    return x + N, N * (N + 1) + x * (2 * N + 1)


def negbin_pmf(n: int, N: float, k: int) -> float:
    """``C(k+n-1, n-1) (1/(N+1))**n (N/(N+1))**k``."""
    if k < 0:
        return 0.0
    n = int(n)
    k = int(k)
    if n < 1 or N <= 0:
        raise ValueError("negbin_pmf needs n >= 1 and N > 0")
    logp = (math.lgamma(k + n) - math.lgamma(n) - math.lgamma(k + 1)
            - n * math.log1p(N) - k * math.log1p(1.0 / N))
    return math.exp(logp)


# ---------------------------------------------------------------------------
# N-chi-square law
# ---------------------------------------------------------------------------


def nchisq_upper_point(q: NChiSqParams, alpha: float) -> float:
    """Upper alpha point of the law of ``2K/N``, ``K ~ negbin(dof, N)``.

    Returns ``(2/N) k*`` where ``k*`` is the largest lattice index with
    ``P(K >= k*) >= alpha``.  The rejection region ``{K > k*}`` then has
    mass below alpha, which is the randomization cutoff of the chi-square
    test.  Levels within a relative ``1e-12`` of an atom are treated as
    hitting it.
    """
    _check_alpha(alpha)
    law = NegBinomialPmf(q.dof, q.n_param)
    kmax = law.cutoff(alpha * 1e-3)
    pmf = law.pmf_array(kmax)
    # upper[k] = P(K >= k) = 1 - sum_{j<k} pmf[j]
    upper = 1.0 - np.concatenate(([0.0], np.cumsum(pmf)[:-1]))
    ok = np.nonzero(upper >= alpha * (1 - TIE_TOL))[0]
    return 2.0 * int(ok[-1]) / q.n_param


def nchisq_cdf(q: NChiSqParams, x: float) -> float:
    """``P(2K/N <= x)`` by finite summation over the lattice."""
    if x < 0:
        return 0.0
    t = x * q.n_param / 2.0
    # guard lattice points that were produced as 2k/N in floating point
    k = int(math.floor(t * (1 + 1e-12) + 1e-12))
    law = NegBinomialPmf(q.dof, q.n_param)
    return min(1.0, math.fsum(law.pmf_array(k)))


def regularized_lower_gamma(a: float, x: float) -> float:
    """Regularized lower incomplete gamma function ``P(a, x)``.

    Integer orders use the finite closed form
    ``1 - exp(-x) sum_{j<a} x**j / j!``; other orders fall back to
    :func:`scipy.special.gammainc`.
    """
    if x <= 0:
        return 0.0
    if float(a).is_integer() and a >= 1:
        a = int(a)
        term = math.exp(-x)
        total = 0.0
        for j in range(a):
            total += term
            term *= x / (j + 1)
        return max(0.0, 1.0 - total)
    from scipy.special import gammainc
    return float(gammainc(a, x))


def chi2_cdf(x: float, dof: int) -> float:
    """CDF of the classical chi-square law with ``dof`` degrees of freedom."""
    if x <= 0:
        return 0.0
    return regularized_lower_gamma(dof / 2.0, x / 2.0)
