import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from hypercal.errors import ConvergenceError, InsufficientDataError
from hypercal.optimize import golden_max_batch, nelder_mead_batch
from hypercal.skewnorm import fit_skew_normal, fit_skew_normal_batch, moment_start, skewnorm_logpdf


def test_logpdf_matches_scipy():
    x = np.linspace(80, 120, 41)
    assert np.allclose(skewnorm_logpdf(x, 100, 5, -4), stats.skewnorm.logpdf(x, -4, 100, 5))


def test_moment_start_symmetric():
    xi, om, al = moment_start(np.array([0.0]))
    assert al[0] == 0 and om[0] == pytest.approx(1.0) and xi[0] == pytest.approx(0.0)


def test_recovers_skewed_parameters():
    rng = np.random.default_rng(0)
    x = stats.skewnorm.rvs(-4, loc=100, scale=5, size=100_000, random_state=rng)
    f = fit_skew_normal(x)
    assert f.xi == pytest.approx(100, rel=0.05)
    assert f.omega == pytest.approx(5, rel=0.05)
    assert f.alpha == pytest.approx(-4, rel=0.05)
    assert x.min() <= f.mode <= x.max()
    # the true density mode of SN(100, 5, -4)
    grid = np.linspace(90, 105, 150001)
    true_mode = grid[np.argmax(stats.skewnorm.pdf(grid, -4, 100, 5))]
    assert f.mode == pytest.approx(true_mode, abs=0.1)


def test_gaussian_sample_matches_independent_mle():
    x = np.random.default_rng(0).normal(100, 5, 100_000)
    f = fit_skew_normal(x)
    a, loc, scale = stats.skewnorm.fit(x, 0.0, loc=x.mean(), scale=x.std())
    ll_ref = stats.skewnorm.logpdf(x, a, loc, scale).sum()
    assert f.log_likelihood >= ll_ref - 1e-3
    assert abs(f.mode - 100) < 0.2
    assert abs(f.mean - x.mean()) < 0.05


@pytest.mark.xfail(reason="shape MLE converges only at the n^-1/6 rate near alpha = 0; "
                          "|alpha| at n = 1e5 routinely exceeds 0.2 even for the exact maximizer",
                   strict=False)
def test_gaussian_sample_alpha_near_zero():
    x = np.random.default_rng(0).normal(100, 5, 100_000)
    assert abs(fit_skew_normal(x).alpha) < 0.2


def test_constant_sample_is_degenerate():
    f = fit_skew_normal(np.full(50, 42.0))
    assert f.degenerate and f.mode == 42 and f.alpha == 0 and f.omega > 0


def test_too_few_samples():
    with pytest.raises(InsufficientDataError):
        fit_skew_normal(np.arange(19.0))


def test_convergence_error_carries_best():
    x = np.random.default_rng(1).gamma(2.0, size=500)
    with pytest.raises(ConvergenceError) as info:
        fit_skew_normal(x, max_iter=3)
    assert info.value.best is not None and np.isfinite(info.value.best.xi)


def test_batch_equals_single_and_independent_of_workers():
    rng = np.random.default_rng(5)
    x = stats.skewnorm.rvs(3, size=(300, 40), random_state=rng)
    a = fit_skew_normal_batch(x, block=64, workers=1)
    b = fit_skew_normal_batch(x, block=64, workers=4)
    for k in ("xi", "omega", "alpha", "mode", "log_likelihood"):
        assert np.array_equal(getattr(a, k), getattr(b, k))
    single = fit_skew_normal(x[7])
    assert single.mode == pytest.approx(a.mode[7], rel=1e-3, abs=1e-3)


def test_location_scale_equivariance():
    x = stats.skewnorm.rvs(2, size=400, random_state=np.random.default_rng(3))
    f = fit_skew_normal(x)
    g = fit_skew_normal(1000 + 25 * x)
    assert g.mode == pytest.approx(1000 + 25 * f.mode, rel=1e-6)
    assert g.alpha == pytest.approx(f.alpha, abs=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-6, 6))
def test_mode_within_sample_range(seed, alpha):
    x = stats.skewnorm.rvs(alpha, size=60, random_state=np.random.default_rng(seed))
    f = fit_skew_normal_batch(x[None, :])[0]
    assert x.min() <= f.mode <= x.max()
    assert f.omega > 0


def test_nelder_mead_batch_quadratics():
    centers = np.array([[1.0, -2.0], [3.0, 0.5], [-1.0, 4.0]])

    def f(X, idx):
        return ((X - centers[idx]) ** 2).sum(axis=1)

    res = nelder_mead_batch(f, np.zeros((3, 2)), step=0.5, xatol=1e-8, fatol=1e-14)
    assert res.converged.all()
    assert np.allclose(res.x, centers, atol=1e-6)


def test_golden_max_batch():
    peaks = np.array([0.3, -1.2, 2.5])
    x = golden_max_batch(lambda v, idx: -(v - peaks[idx]) ** 2, np.full(3, -5.0), np.full(3, 5.0), 1e-9)
    assert np.allclose(x, peaks, atol=1e-7)
