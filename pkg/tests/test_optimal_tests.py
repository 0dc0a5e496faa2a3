import itertools
import math
import threading

import mpmath
import numpy as np
import pytest

from qgt.distributions import GaussianParams, NegBinomialPmf, NumberPmf
from qgt.optimal_tests import (
    ConditionalTest,
    ThresholdTest,
    UnsupportedProblemError,
    build_chi2_test,
    build_mean_test,
    chi2_power,
    compose_test,
    f_test_type2,
    f_thresholds,
    mean_test_power,
    reduced_power,
    t_test_accept_prob,
    t_test_type2,
    t_thresholds,
)


def sample_counts(theta, N, size, rng):
    """Photon counts of rho_{theta,N}: Poisson counts of a complex Gaussian amplitude."""
    xi = theta + math.sqrt(N / 2) * (rng.standard_normal(size) + 1j * rng.standard_normal(size))
    return rng.poisson(np.abs(xi) ** 2)


def mp_pmf(r, N, k):
    mpmath.mp.dps = 30
    x = mpmath.mpf(r) ** 2
    N = mpmath.mpf(N)
    lag = mpmath.laguerre(k, 0, -x / (N * (N + 1)))
    return float(N ** k / (N + 1) ** (k + 1) * mpmath.exp(-x / (N + 1)) * lag)


def test_chi2_example():
    t = build_chi2_test(1, 1.0, 0.1)
    assert (t.cutoff, t.gamma) == (3, pytest.approx(0.6, abs=1e-12))
    assert chi2_power(t, 1, 1.0) == pytest.approx(0.1, abs=1e-14)


def test_chi2_level_on_an_atom():
    # P(K >= 3) = 1/8 for the geometric law with N = 1, so the test is
    # "reject iff K >= 3" with size exactly 0.125
    t = build_chi2_test(1, 1.0, 0.125)
    assert t.phi(np.arange(6)).tolist() == [0, 0, 0, 1, 1, 1]
    assert chi2_power(t, 1, 1.0) == pytest.approx(0.125, abs=1e-15)


@pytest.mark.parametrize("n,N0,alpha", [(1, 0.5, 0.05), (2, 1.0, 0.1), (4, 0.2, 0.01), (3, 3.0, 0.3)])
def test_chi2_power_monotone_and_sized(n, N0, alpha):
    t = build_chi2_test(n, N0, alpha)
    assert 0 < t.gamma <= 1
    assert chi2_power(t, n, N0) == pytest.approx(alpha, abs=1e-12)
    powers = [chi2_power(t, n, N) for N in np.linspace(0.01, 5 * N0, 30)]
    assert np.all(np.diff(powers) > 0)


def test_chi2_power_limits_and_monte_carlo():
    t = build_chi2_test(1, 1.0, 0.1)
    assert chi2_power(t, 1, 1e6) == pytest.approx(1.0, abs=1e-5)
    rng = np.random.default_rng(3)
    size = 10 ** 6
    k = rng.geometric(1 / 4, size) - 1  # P(k) = (1/4)(3/4)^k, the thermal law at N = 3
    mc = t.phi(k)
    assert abs(mc.mean() - chi2_power(t, 1, 3.0)) < 3 * mc.std() / math.sqrt(size)


def test_chi2_brute_force_size():
    # enumerate all count vectors of n = 2 modes directly
    n, N0, a = 2, 0.8, 0.1
    t = build_chi2_test(n, N0, a)
    q = N0 / (N0 + 1)
    size = math.fsum((1 - q) ** 2 * q ** (i + j) * t.phi(i + j)
                     for i, j in itertools.product(range(400), repeat=2))
    assert size == pytest.approx(a, abs=1e-12)


def test_mean_test_size_and_power():
    t = build_mean_test(0.5, 1.0, 0.1)
    assert mean_test_power(t, 0.5, 1.0) == pytest.approx(0.1, abs=1e-13)
    powers = [mean_test_power(t, r, 1.0) for r in np.linspace(0, 4, 20)]
    assert np.all(np.diff(powers) > 0)
    t2 = build_mean_test(1.0, 0.5, 0.1)
    direct = math.fsum(t2.phi(k) * mp_pmf(2.0, 0.5, k) for k in range(80))
    assert mean_test_power(t2, 2.0, 0.5) == pytest.approx(direct, abs=1e-12)
    assert direct > 0.1
    with pytest.raises(ValueError):
        mean_test_power(t, 1.0, 0.5)
    with pytest.raises(ValueError):
        build_mean_test(-1.0, 1.0, 0.1)


def test_mean_test_monte_carlo():
    rng = np.random.default_rng(7)
    t = build_mean_test(0.3, 0.4, 0.1)
    k = sample_counts(1.1j, 0.4, 400_000, rng)
    mc = t.phi(k).mean()
    assert mc == pytest.approx(mean_test_power(t, 1.1, 0.4), abs=4 * 0.5 / math.sqrt(4e5))


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
def test_level_validation(alpha):
    with pytest.raises(ValueError):
        build_chi2_test(1, 1.0, alpha)
    with pytest.raises(ValueError):
        t_thresholds(3, 1, alpha)


def test_threshold_phi_shapes():
    t = ThresholdTest(2, 0.5, 0.1, "chi2", 1.0, dof=1)
    assert t.phi(2) == 0.5
    assert t.phi([1, 2, 3]).tolist() == [0.0, 0.5, 1.0]


def test_t_threshold_examples():
    assert t_thresholds(0, 3, 0.1) == (0, pytest.approx(0.1))
    assert t_thresholds(1, 1, 0.1) == (1, pytest.approx(0.2))


def test_t_thresholds_are_exact_rationals():
    # alpha = 0.1 read as 1/10: s = 9, n = 1 gives a uniform law on 10 points
    c, g = t_thresholds(9, 1, 0.1)
    assert (c, g) == (9, 1.0)


@pytest.mark.parametrize("n", [1, 2, 4])
def test_t_conditional_size_by_enumeration(n):
    a = 0.07
    ct = ConditionalTest("t", (1, n), a)
    for s in range(10):
        occ = [v for v in itertools.product(range(s + 1), repeat=n + 1) if sum(v) == s]
        occ = np.array(occ)
        assert ct.phi(occ[:, 0], s).mean() == pytest.approx(a, abs=1e-12)


def test_t_type2_at_null_and_monotone():
    assert t_test_type2(2, 0.1, 0.0, 0.7) == pytest.approx(0.9, abs=1e-9)
    betas = [t_test_type2(2, 0.1, r, 0.5) for r in np.arange(0.5, 4.01, 0.5)]
    assert np.all(np.diff(betas) < 0)


@pytest.mark.parametrize("r,N", [(2.0, 0.5), (1.2, 0.6)])
def test_t_type2_monte_carlo(r, N):
    rng = np.random.default_rng(11)
    n, a, size = 2, 0.1, 10 ** 6
    k0 = sample_counts(r, N, size, rng)
    anc = (rng.geometric(1 / (N + 1), (size, n)) - 1).sum(axis=1)
    phi = ConditionalTest("t", (1, n), a).phi(k0, k0 + anc)
    assert abs(1 - phi.mean() - t_test_type2(n, a, r, N)) < 3 * phi.std() / math.sqrt(size)


def test_t_accept_prob_is_rejection_probability():
    # at theta = 0 the rejection probability must be alpha whatever N is
    for N in (0.2, 1.0, 3.0):
        law = NumberPmf(GaussianParams(0, N))
        assert 1 - t_test_type2(3, 0.05, 0.0, N) == pytest.approx(0.05, abs=1e-9)
        assert law.pmf(0) > 0
    assert t_test_accept_prob([0, 0, 0], 2, 0.1) == pytest.approx(0.1)
    c, g = t_thresholds(6, 2, 0.1)
    assert t_test_accept_prob([c + 1, 5 - c, 0], 2, 0.1) == 1.0
    if c > 0:
        assert t_test_accept_prob([c - 1, 7 - c, 0], 2, 0.1) == 0.0
    with pytest.raises(ValueError):
        t_test_accept_prob([0, 1], 2, 0.1)


def test_f_threshold_example_and_symmetry():
    th = f_thresholds(5, 2, 2, 0.1)
    assert (th.c1, th.c2) == (0, 5)
    assert th.g1 == pytest.approx(0.4667, abs=1e-4)
    assert th.gamma == pytest.approx(th.g1)
    for s in range(20):
        th = f_thresholds(s, 3, 3, 0.05)
        assert th.c1 + th.c2 == s
        assert th.g1 == pytest.approx(th.g2, abs=1e-9)


def test_f_two_weights_when_asymmetric():
    th = f_thresholds(7, 1, 3, 0.05)
    assert th.g1 != pytest.approx(th.g2, abs=1e-3)
    assert th.gamma is None


@pytest.mark.parametrize("m,n", [(1, 1), (1, 2), (2, 3), (3, 1)])
def test_f_unbiasedness_by_enumeration(m, n):
    a = 0.1
    ct = ConditionalTest("F", (m, n), a)
    for s in range(9):
        occ = np.array([v for v in itertools.product(range(s + 1), repeat=m + n) if sum(v) == s])
        x1 = occ[:, :m].sum(axis=1)
        phi = ct.phi(x1, s)
        assert phi.mean() == pytest.approx(a, abs=1e-10)
        assert (x1 * phi).mean() == pytest.approx(a * x1.mean(), abs=1e-10)


def test_f_type2_properties():
    assert f_test_type2(2, 2, 0.1, 1.0, 1.0) == pytest.approx(0.9, abs=1e-9)
    a = f_test_type2(2, 3, 0.1, 0.4, 1.5)
    b = f_test_type2(3, 2, 0.1, 1.5, 0.4)
    assert a == pytest.approx(b, abs=1e-9)
    assert f_test_type2(2, 2, 0.1, 3.0, 0.5) < 0.9


def test_f_type2_monte_carlo():
    rng = np.random.default_rng(5)
    m, n, a, M, N, size = 2, 1, 0.1, 2.0, 0.5, 300_000
    x1 = sample_counts(0.0, M, (size, m), rng).sum(axis=1)
    x2 = sample_counts(0.0, N, (size, n), rng).sum(axis=1)
    mc = ConditionalTest("F", (m, n), a).phi(x1, x1 + x2).mean()
    assert 1 - mc == pytest.approx(f_test_type2(m, n, a, M, N), abs=4 * 0.5 / math.sqrt(size))


def test_conditional_table_is_thread_safe():
    ct = ConditionalTest("F", (2, 3), 0.05)
    results = {}

    def work(i):
        results[i] = [ct.thresholds(s) for s in range(25)]

    threads = [threading.Thread(target=work, args=(i,)) for i in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    serial = [f_thresholds(s, 2, 3, 0.05) for s in range(25)]
    assert all(r == serial for r in results.values())


def test_compose_records():
    ct = compose_test("h1", n=3, R0=0.5, N=1.0, alpha=0.1)
    assert ct.pre_unitary.name == "concentrator"
    assert ct.core.radius == pytest.approx(math.sqrt(3) * 0.5)
    assert ct.core_modes == (0,) and ct.passthrough_modes == (1, 2)
    ct = compose_test("H2", n=3, R0=0, alpha=0.1)
    assert ct.core.mode == "t" and ct.core.dims == (1, 2)
    ct = compose_test("H4", m=2, n=3, alpha=0.1)
    assert ct.core.dims == (1, 3) and ct.core_modes == (1, 2, 3, 4)
    ct = compose_test("H5", n=2, N0=0.5, theta=1j, alpha=0.1)
    assert ct.pre_unitary.shifts == (-1j, -1j)
    ct = compose_test("H6", n=4, N0=0.5, alpha=0.1)
    assert ct.core.dof == 3 and ct.core_modes == (1, 2, 3)
    ct = compose_test("H7", m=1, n=2, theta=0.5, eta=1.0, alpha=0.1)
    assert ct.core.dims == (1, 2) and ct.pre_unitary.shifts == (-0.5, -1.0, -1.0)
    ct = compose_test("H8", m=2, n=3, alpha=0.1)
    assert ct.core.dims == (1, 2) and ct.passthrough_modes == (0, 1)


def test_compose_errors():
    with pytest.raises(UnsupportedProblemError, match="open problem"):
        compose_test("H2", n=2, R0=0.5, alpha=0.1)
    with pytest.raises(ValueError):
        compose_test("H9", n=2, alpha=0.1)
    with pytest.raises(ValueError):
        compose_test("H1", n=2, alpha=0.1)
    with pytest.raises(ValueError):
        compose_test("H3", m=0, n=2, N=1.0, alpha=0.1)


def test_reduced_power_h6_does_not_depend_on_theta():
    ct = compose_test("H6", n=3, N0=0.5, alpha=0.1)
    vals = [reduced_power(ct, [GaussianParams(th, 0.5)] * 3) for th in (0, 1.0, 2 - 1j)]
    assert np.allclose(vals, 0.1, atol=1e-12)


def test_reduced_power_rejects_mixed_parameters():
    ct = compose_test("H1", n=2, R0=0.0, N=0.5, alpha=0.1)
    with pytest.raises(ValueError):
        reduced_power(ct, [GaussianParams(0.0, 0.5), GaussianParams(1.0, 0.5)])


def test_composed_phi_reads_core_modes():
    ct = compose_test("H6", n=3, N0=1.0, alpha=0.1)
    occ = np.array([[50, 0, 0], [0, 3, 1], [0, 1, 2]])
    expect = ct.core.phi(occ[:, 1:].sum(axis=1))
    assert np.array_equal(ct.phi(occ), expect)
    assert ct.phi(occ)[0] == 0.0
    law = NegBinomialPmf(2, 1.0)
    assert ct.core.power_from_pmf(law) == pytest.approx(0.1)
