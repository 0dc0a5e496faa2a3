"""Cross-checks of the analytic formulas against the Fock simulator.

Each ``check_*`` function returns :class:`Check` records; :func:`run_suite`
groups them by name for the command line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .distributions import (
    GaussianParams,
    NumberPmf,
    gaussian_moments,
    number_pmf_array,
    total_count_cutoff,
)
from .fock import (
    FockOperator,
    FockSpace,
    concentrator_network,
    gaussian_block,
    gaussian_state,
    pair_rotation,
    product_state,
    trace_against,
    trace_norm,
)

__all__ = [
    "Check",
    "IdentityResult",
    "check_number_law",
    "check_moments",
    "pair_step",
    "concentrator_identity",
    "splitter_identity",
    "appendix_tests",
    "appendix_difference",
    "appendix_closed_form",
    "appendix_printed_formula",
    "run_suite",
    "SUITES",
]

DEFAULT_GRID = [(th, N) for th in (0.0, 0.5, 1.0, 1 + 1j) for N in (0.1, 0.5, 1.0)]


@dataclass
class Check:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Number law and moments
# ---------------------------------------------------------------------------


def check_number_law(grid=DEFAULT_GRID, leak=1e-8, tol=1e-8, dim=None) -> list[Check]:
    """Compare the Fock diagonal of each Gaussian state with the number law."""
    out = []
    for theta, N in grid:
        p = GaussianParams(theta, N)
        D = dim or total_count_cutoff([p], leak / 10) + 1
        rho, rep = gaussian_state(p, D, max_leakage=leak)
        diag = np.real(np.diag(rho.data))
        err = float(np.abs(diag - number_pmf_array(p, D - 1)).max())
        out.append(Check(f"number-law theta={theta} N={N}", err < tol and rep.leakage < leak,
                         {"max_abs_err": err, "dim": D, "leakage": rep.leakage}))
    return out


def check_moments(grid=DEFAULT_GRID, tol=1e-6) -> list[Check]:
    """Truncated first two moments of the number law against closed forms."""
    out = []
    for theta, N in grid:
        p = GaussianParams(theta, N)
        law = NumberPmf(p)
        K = law.cutoff(1e-18)
        pk = law.pmf_array(K)
        k = np.arange(K + 1)
        mean = float(np.dot(k, pk))
        var = float(np.dot((k - mean) ** 2, pk))
        m0, v0 = gaussian_moments(p)
        rel = max(abs(mean - m0) / m0, abs(var - v0) / v0)
        out.append(Check(f"moments theta={theta} N={N}", rel < tol,
                         {"mean": mean, "var": var, "rel_err": rel}))
    return out


# ---------------------------------------------------------------------------
# Concentrating identities
# ---------------------------------------------------------------------------


@dataclass
class IdentityResult:
    """Trace-norm distance between a transformed state and its target.

    ``distance`` is exact when ``exact`` is true and otherwise an upper
    bound.  ``leakage`` is the largest probability lost to truncation in
    any of the pieces.
    """

    distance: float
    exact: bool
    leakage: float
    pieces: list = field(default_factory=list)


@lru_cache(maxsize=256)
def _pair_step(first, second, t, out_first, out_second, leak):
    inputs = [GaussianParams(*first), GaussianParams(*second)]
    targets = [GaussianParams(*out_first), GaussianParams(*out_second)]
    S = max(total_count_cutoff(inputs, leak / 10), 1)
    space = FockSpace.capped(2, S)
    rho = product_state([gaussian_block(p, S + 1) for p in inputs], space)
    sigma = product_state([gaussian_block(p, S + 1) for p in targets], space)
    U = pair_rotation(space, 0, 1, t)
    out = U.conjugate(rho).data
    dist, exact = trace_norm(out - sigma.data)
    leakage = max(0.0, 1.0 - float(np.trace(rho.data).real))
    return dist, exact, leakage, S


def pair_step(first, second, t, out_first, out_second, leak=1e-8) -> IdentityResult:
    """Check ``B(t) (rho_1 x rho_2) B(t)^H = sigma_1 x sigma_2`` on two modes.

    All four states are :class:`GaussianParams`.
    """
    key = lambda p: (complex(p.theta), float(p.n_param))
    dist, exact, leakage, S = _pair_step(key(first), key(second), float(t),
                                         key(out_first), key(out_second), float(leak))
    return IdentityResult(dist, exact, leakage, [("pair", S, dist)])


def _chain(n, theta, N, leak):
    pieces = []
    for j in range(1, n):
        r = pair_step(GaussianParams(theta, N), GaussianParams(math.sqrt(j) * theta, N),
                      math.atan(math.sqrt(j)),
                      GaussianParams(math.sqrt(j + 1) * theta, N), GaussianParams(0.0, N), leak)
        pieces.append(r)
    return pieces


def _combine(pieces) -> IdentityResult:
    if not pieces:
        return IdentityResult(0.0, True, 0.0)
    return IdentityResult(sum(p.distance for p in pieces), False,
                          max(p.leakage for p in pieces),
                          [x for p in pieces for x in p.pieces])


def concentrator_identity(n: int, theta: complex, N: float, method: str = "chain",
                          leak: float = 1e-8, cutoff: int | None = None) -> IdentityResult:
    """Distance of ``U_n rho^{(x)n} U_n^H`` from ``rho_{sqrt(n) theta} x rho_0^{(x)(n-1)}``.

    ``method="chain"`` bounds the distance by the sum over the ``n - 1``
    beam-splitter steps.  Each step maps ``rho_theta x rho_{sqrt(j) theta}``
    to ``rho_{sqrt(j+1) theta} x rho_0`` on two modes, and the trace norm
    is invariant under the remaining unitaries and under tensoring with
    states, so the triangle inequality gives a rigorous bound.
    ``method="direct"`` builds the full ``n``-mode state instead.
    """
    if method == "chain":
        return _combine(_chain(n, theta, N, leak))
    if method != "direct":
        raise ValueError("method must be 'chain' or 'direct'")
    p = GaussianParams(theta, N)
    S = cutoff or total_count_cutoff([p] * n, leak)
    space = FockSpace.capped(n, S)
    rho = product_state([gaussian_block(p, S + 1)] * n, space)
    targets = [GaussianParams(math.sqrt(n) * theta, N)] + [GaussianParams(0.0, N)] * (n - 1)
    sigma = product_state([gaussian_block(q, S + 1) for q in targets], space)
    out = concentrator_network(space).conjugate(rho).data
    leakage = max(0.0, 1.0 - float(np.trace(rho.data).real))
    del rho
    diff = out - sigma.data
    del out, sigma
    dist, exact = trace_norm(diff)
    return IdentityResult(dist, exact, leakage, [("direct", S, dist)])


def splitter_identity(m: int, n: int, theta: complex, eta: complex, M: float, N: float,
                      variant: str, leak: float = 1e-8) -> IdentityResult:
    """Chain bound for the two-sample splitters.

    ``U3`` concentrates the two samples separately, so its distance is at
    most the sum of the two concentrator chains.  ``U2`` adds one more
    beam splitter which maps ``rho_{sqrt(n) eta} x rho_{sqrt(m) theta}`` to
    ``rho_{(m theta + n eta)/sqrt(m+n)} x rho_{c0 (theta - eta)}`` with
    ``c0 = sqrt(mn/(m+n))``; it needs a common number parameter.
    """
    pieces = _chain(m, theta, M, leak) + _chain(n, eta, N, leak)
    if variant == "U2":
        if abs(M - N) > 1e-12:
            raise ValueError("U2 maps to Gaussian states only for a common N")
        s = m + n
        pieces.append(pair_step(
            GaussianParams(math.sqrt(n) * eta, N), GaussianParams(math.sqrt(m) * theta, N),
            math.atan(math.sqrt(m / n)),
            GaussianParams((m * theta + n * eta) / math.sqrt(s), N),
            GaussianParams(math.sqrt(m * n / s) * (theta - eta), N), leak))
    elif variant != "U3":
        raise ValueError("variant must be 'U2' or 'U3'")
    return _combine(pieces)


# ---------------------------------------------------------------------------
# Two tests on one mode with a common boundary size
# ---------------------------------------------------------------------------


def appendix_tests(dim: int) -> tuple[FockOperator, FockOperator]:
    """``T1 = sum_{k>=1} |k><k|`` and ``T2 = (|0>+|1>)(<0|+<1|)/4 + sum_{k>=2} |k><k|``."""
    space = FockSpace.single(dim)
    t1 = np.eye(dim, dtype=complex)
    t1[0, 0] = 0.0
    t2 = np.eye(dim, dtype=complex)
    t2[:2, :2] = 0.25
    return FockOperator(space, t1, "test"), FockOperator(space, t2, "test")


def appendix_difference(r: float, N: float = 1.0, leak: float = 1e-12) -> float:
    """``Tr(rho_{r,N} T1) - Tr(rho_{r,N} T2)`` from the Fock simulator."""
    p = GaussianParams(r, N)
    dim = max(total_count_cutoff([p], leak / 10) + 1, 4)
    rho, _ = gaussian_state(p, dim, max_leakage=leak)
    T1, T2 = appendix_tests(dim)
    return trace_against(rho, T1) - trace_against(rho, T2)


def appendix_closed_form(r: float, N: float = 1.0) -> float:
    """Closed form of :func:`appendix_difference` for real ``r >= 0``.

    With ``rho_00 = e^{-r^2/(N+1)}/(N+1)``,
    ``rho_11 = e^{-r^2/(N+1)} (N + r^2/(N+1))/(N+1)^2`` and
    ``rho_01 = r e^{-r^2/(N+1)}/(N+1)^2`` the difference is
    ``3/4 rho_11 - 1/4 rho_00 - 1/2 rho_01``.  At ``N = 1`` this is
    ``(3/32) e^{-r^2/2} (r^2 - (4/3) r + 2/3)``.
    """
    e = math.exp(-r * r / (N + 1)) / (N + 1) ** 2
    return e * (0.75 * (N + r * r / (N + 1)) - 0.25 * (N + 1) - 0.5 * r)


def appendix_printed_formula(r: float) -> float:
    """``(3/32) e^{-r^2/2} (r^2 - (32/3) r + 2/3)``."""
    return 3.0 / 32.0 * math.exp(-r * r / 2) * (r * r - 32.0 / 3.0 * r + 2.0 / 3.0)


def appendix_roots(N: float) -> tuple[float, float] | None:
    """Positive roots of the closed-form difference in ``r``, if any.

    The bracket ``3 r^2/(4(N+1)) - r/2 + (2N - 1)/4`` has two positive
    roots exactly when ``1/2 < N < 4/5``.
    """
    a, b, c = 0.75 / (N + 1), -0.5, 0.5 * N - 0.25
    disc = b * b - 4 * a * c
    if disc <= 0 or c <= 0:
        return None
    sq = math.sqrt(disc)
    return (-b - sq) / (2 * a), (-b + sq) / (2 * a)


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


def _suite_lemma_prob(opts):
    return check_number_law(dim=opts.get("dim"))


def _suite_moments(opts):
    return check_moments()


def _suite_concentrator(opts):
    n = opts.get("n") or 3
    out = []
    for theta in (0.8, 1.5, 1.5j, 1 - 1j):
        for N in (0.25, 1.0):
            if abs(theta) > 1.5 + 1e-12:
                continue
            r = concentrator_identity(n, theta, N)
            out.append(Check(f"concentrator n={n} theta={theta} N={N}",
                             r.distance < 1e-5 and r.leakage < 1e-8,
                             {"trace_norm_bound": r.distance, "leakage": r.leakage}))
    return out


def _suite_splitter(opts):
    out = []
    for m, n in ((1, 1), (2, 1), (2, 3), (3, 3)):
        for variant in ("U2", "U3"):
            r = splitter_identity(m, n, 1.2, -0.5j, 0.5, 0.5, variant)
            out.append(Check(f"{variant} m={m} n={n}", r.distance < 1e-5 and r.leakage < 1e-8,
                             {"trace_norm_bound": r.distance, "leakage": r.leakage}))
    return out


def _suite_appendix(opts):
    grid = np.linspace(0.0, 12.0, 121)
    diffs = [appendix_difference(r) for r in grid]
    err = max(abs(d - appendix_closed_form(r)) for r, d in zip(grid, diffs))
    printed = max(abs(d - appendix_printed_formula(r)) for r, d in zip(grid, diffs))
    out = [Check("appendix difference vs closed form (N=1)", err < 1e-10,
                 {"max_abs_err": err, "max_dev_printed_formula": printed})]
    roots = appendix_roots(0.6)
    inside = 0.5 * (roots[0] + roots[1])
    d_in, d_out = appendix_difference(inside, 0.6), appendix_difference(roots[1] + 0.5, 0.6)
    out.append(Check("T2 beats T1 between the roots at N=0.6", d_in < 0 < d_out,
                     {"roots": list(roots), "diff_inside": d_in, "diff_outside": d_out}))
    return out


SUITES = {
    "lemma-prob": _suite_lemma_prob,
    "moments": _suite_moments,
    "concentrator": _suite_concentrator,
    "splitter": _suite_splitter,
    "appendix-a2": _suite_appendix,
}


def run_suite(name: str, **opts) -> list[Check]:
    """Run one named suite, or every suite for ``name="all"``."""
    if name == "all":
        return [c for key in SUITES for c in SUITES[key](opts)]
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)} or all")
    return SUITES[name](opts)
