import math

import numpy as np
import pytest
from scipy import stats

from qgt.heterodyne import (
    DominanceError,
    HeterodyneModel,
    comparison_curve,
    het_mean_test_beta,
    het_number_test_beta,
    marcum_q1,
    ncx2_2_cdf,
)


@pytest.mark.parametrize("x", [0.01, 0.5, 3.0, 12.0, 60.0])
@pytest.mark.parametrize("lam", [0.0, 0.3, 4.0, 25.0, 120.0])
def test_ncx2_against_scipy(x, lam):
    ref = stats.chi2.cdf(x, 2) if lam == 0 else stats.ncx2.cdf(x, 2, lam)
    assert ncx2_2_cdf(x, lam) == pytest.approx(ref, abs=1e-9)


def test_ncx2_edges():
    assert ncx2_2_cdf(0.0, 3.0) == 0.0
    assert ncx2_2_cdf(-1.0, 3.0) == 0.0
    assert ncx2_2_cdf(2.0, 0.0) == pytest.approx(1 - math.exp(-1.0), abs=1e-15)


def test_marcum_q1_special_values():
    # Q_1(0, b) = exp(-b^2/2)
    for b in (0.2, 1.0, 3.0):
        assert marcum_q1(0.0, b) == pytest.approx(math.exp(-b * b / 2), abs=1e-12)


def test_heterodyne_model_variance():
    model = HeterodyneModel(1 - 2j, 0.5)
    z = model.sample(200_000, np.random.default_rng(0))
    assert model.per_quadrature_variance == 0.75
    assert np.var(z.real) == pytest.approx(0.75, rel=0.02)
    assert np.mean(z) == pytest.approx(1 - 2j, abs=0.01)


def test_mean_test_beta_monte_carlo():
    rng = np.random.default_rng(1)
    N, a, r, size = 1 / 9, 0.1, 1.0, 10 ** 7
    z = HeterodyneModel(r * np.exp(0.4j), N).sample(size, rng)
    reject = np.abs(z) ** 2 > -(N + 1) * math.log(a)
    beta = 1 - reject.mean()
    se = math.sqrt(beta * (1 - beta) / size)
    assert abs(beta - het_mean_test_beta(N, a, r)) < 4 * se


def test_number_test_beta_closed_form_and_monte_carlo():
    N0, a = 1 / 9, 0.1
    assert het_number_test_beta(N0, a, N0) == pytest.approx(1 - a)
    rng = np.random.default_rng(2)
    N, size = 1.5, 10 ** 6
    z = HeterodyneModel(0, N).sample(size, rng)
    reject = np.abs(z) ** 2 > -(N0 + 1) * math.log(a)
    beta = 1 - reject.mean()
    assert abs(beta - het_number_test_beta(N0, a, N)) < 4 * math.sqrt(beta * (1 - beta) / size)


def test_betas_reject_bad_input():
    with pytest.raises(ValueError):
        het_mean_test_beta(0.1, 1.2, 1.0)
    with pytest.raises(ValueError):
        het_mean_test_beta(0.1, 0.1, -1.0)
    with pytest.raises(ValueError):
        het_number_test_beta(-0.1, 0.1, 1.0)


def test_figure_curves():
    c1 = comparison_curve("fig1", np.arange(0, 3.01, 0.25))
    assert c1.dominates
    assert c1.beta_number[0] == pytest.approx(0.9) and c1.beta_heterodyne[0] == pytest.approx(0.9)
    c2 = comparison_curve("fig2", np.linspace(1 / 9, 3, 15))
    assert c2.dominates
    assert c2.rows()[0][1] == pytest.approx(0.9)


def test_curve_errors():
    with pytest.raises(ValueError):
        comparison_curve("fig3", [0.0])
    with pytest.raises(ValueError):
        comparison_curve("fig1", [])
    with pytest.raises(ValueError):
        comparison_curve("fig2", [0.05])
    with pytest.raises(ValueError):
        comparison_curve("fig1", [-0.5])


def test_dominance_error_is_raised_when_violated(monkeypatch):
    import qgt.heterodyne as het

    # a baseline that never errs cannot be dominated
    monkeypatch.setattr(het, "het_mean_test_beta", lambda N, a, r: 0.0)
    curve = het.comparison_curve("fig1", [0.0, 1.0], strict=False)
    assert not curve.dominates
    with pytest.raises(DominanceError, match="exceeds"):
        het.comparison_curve("fig1", [0.0, 1.0])
