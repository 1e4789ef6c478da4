import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import norm

from taskpls.errors import (
    DegenerateVarianceError,
    IllConditionedCovarianceError,
    InsufficientDataError,
    InvalidParameterError,
    ShapeError,
)
from taskpls.objects import (
    LabeledEnsemble,
    NoiseSpec,
    SignalSpec,
    render_signal,
)
from taskpls.observer import (
    ObserverTemplate,
    estimate_hotelling,
    nll_test_statistic,
    npw_template,
    test_statistic as tstat,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def white_noise_ensemble(signal, sigma, n_per_class, seed):
    """g = -s/2 + n under H0 and +s/2 + n under H1."""
    rng = np.random.default_rng(seed)
    shape = signal.shape
    x0 = -0.5 * signal + sigma * rng.standard_normal((n_per_class,) + shape)
    x1 = 0.5 * signal + sigma * rng.standard_normal((n_per_class,) + shape)
    noisy = np.concatenate([x0, x1])
    labels = [0] * n_per_class + [1] * n_per_class
    return LabeledEnsemble(noisy, noisy.copy(), labels)


def angle_deg(a, b):
    c = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
    return np.degrees(np.arccos(np.clip(c, -1, 1)))


class TestHotelling:
    def test_white_noise_oracle(self):
        sigma, rho = 1.0, 1e-3
        s = render_signal(SignalSpec("gaussian", None, 3.0, 1.0), 16, 16)
        ens = white_noise_ensemble(s, sigma, 20_000, 0)
        tpl = estimate_hotelling(ens, rho)
        # analytic template (sigma^2 I + rho' I)^-1 s with rho' = rho * tr(K)/N
        expected = s.ravel() / (sigma**2 + rho * sigma**2)
        assert angle_deg(tpl.w, expected) <= 5.0
        assert tpl.kind == "hotelling"
        assert tpl.shape == (16, 16)

    def test_two_samples_with_shrinkage(self):
        s = render_signal(SignalSpec("disk", None, 2.0, 1.0), 8, 8)
        ens = white_noise_ensemble(s, 1.0, 2, 1)
        tpl = estimate_hotelling(ens, 0.1)
        assert np.all(np.isfinite(tpl.w))
        assert np.any(tpl.w)

    def test_singular_without_shrinkage(self):
        s = render_signal(SignalSpec("disk", None, 2.0, 1.0), 8, 8)
        ens = white_noise_ensemble(s, 1.0, 3, 1)
        with pytest.raises(IllConditionedCovarianceError, match="shrinkage"):
            estimate_hotelling(ens, 0.0)

    def test_identical_means(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((50, 4, 4))
        ens = LabeledEnsemble(np.concatenate([x, x]), np.concatenate([x, x]), [0] * 50 + [1] * 50)
        tpl = estimate_hotelling(ens, 1e-3)
        assert np.linalg.norm(tpl.w) <= 1e-10

    def test_needs_two_per_class(self):
        x = np.zeros((3, 4, 4))
        ens = LabeledEnsemble(x, x, [0, 0, 1])
        with pytest.raises(InsufficientDataError):
            estimate_hotelling(ens)

    def test_negative_shrinkage(self):
        s = np.ones((4, 4))
        with pytest.raises(InvalidParameterError):
            estimate_hotelling(white_noise_ensemble(s, 1.0, 10, 0), -1.0)

    def test_permutation_invariant(self):
        s = render_signal(SignalSpec("disk", None, 1.5, 1.0), 6, 6)
        ens = white_noise_ensemble(s, 1.0, 200, 4)
        perm = np.random.default_rng(0).permutation(len(ens))
        shuffled = LabeledEnsemble(ens.noisy[perm], ens.truth[perm], ens.labels[perm])
        a = estimate_hotelling(ens, 1e-3).w
        b = estimate_hotelling(shuffled, 1e-3).w
        np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-12 * np.abs(a).max())

    def test_solve_residual(self):
        s = render_signal(SignalSpec("gaussian", None, 2.0, 1.0), 8, 8)
        ens = white_noise_ensemble(s, 0.5, 300, 5)
        rho = 1e-2
        tpl = estimate_hotelling(ens, rho)
        x0 = ens.noisy[ens.labels == 0].reshape(300, -1)
        x1 = ens.noisy[ens.labels == 1].reshape(300, -1)
        k = 0.5 * (np.cov(x0, rowvar=False) + np.cov(x1, rowvar=False))
        a = k + rho * np.trace(k) / k.shape[0] * np.eye(k.shape[0])
        b = x1.mean(0) - x0.mean(0)
        assert np.linalg.norm(a @ tpl.w - b) <= 1e-8 * np.linalg.norm(b)

    def test_iterative_path_matches_direct(self, monkeypatch):
        from taskpls import observer

        s = render_signal(SignalSpec("gaussian", None, 2.0, 1.0), 8, 8)
        ens = white_noise_ensemble(s, 0.5, 300, 6)
        direct = estimate_hotelling(ens, 1e-2).w
        monkeypatch.setattr(observer, "DIRECT_SOLVE_MAX_PIXELS", 10)
        iterative = estimate_hotelling(ens, 1e-2).w
        np.testing.assert_allclose(iterative, direct, rtol=1e-6, atol=1e-8 * np.abs(direct).max())


class TestNpw:
    def test_support(self):
        s = render_signal(SignalSpec("disk", None, 2.0, 0.07), 16, 16)
        tpl = npw_template(s)
        assert np.array_equal(tpl.w != 0, s.ravel() != 0)
        assert tpl.kind == "npw"

    def test_self_statistic(self):
        s = render_signal(SignalSpec("gaussian", None, 2.0, 0.5), 8, 8)
        assert tstat(npw_template(s), s) == pytest.approx(np.sum(s**2))

    def test_linear(self):
        s = render_signal(SignalSpec("gaussian", None, 2.0, 0.5), 8, 8)
        np.testing.assert_array_equal(npw_template(2 * s).w, 2 * npw_template(s).w)

    def test_zero_signal(self):
        with pytest.raises(InvalidParameterError):
            npw_template(np.zeros((4, 4)))


class TestStatistic:
    def test_unit_vector(self):
        rng = np.random.default_rng(0)
        img = rng.random((5, 7))
        w = np.zeros(35)
        w[12] = 1.0
        assert tstat(ObserverTemplate(w, shape=(5, 7)), img) == img.ravel()[12]

    def test_shape_mismatch(self):
        tpl = ObserverTemplate(np.ones(16), shape=(4, 4))
        with pytest.raises(ShapeError):
            tstat(tpl, np.ones((5, 4)))
        with pytest.raises(ShapeError):
            tstat(tpl, np.ones((2, 8)))

    def test_stack(self):
        rng = np.random.default_rng(1)
        imgs = rng.random((6, 4, 4))
        tpl = ObserverTemplate(rng.random(16), shape=(4, 4))
        np.testing.assert_array_equal(tstat(tpl, imgs), [tstat(tpl, x) for x in imgs])

    @settings(max_examples=50, deadline=None)
    @given(
        w=arrays(np.float64, 16, elements=finite),
        g1=arrays(np.float64, (4, 4), elements=finite),
        g2=arrays(np.float64, (4, 4), elements=finite),
        a=finite,
    )
    def test_linearity(self, w, g1, g2, a):
        tpl = ObserverTemplate(w, shape=(4, 4))
        scale = np.abs(w).sum() * (np.abs(g1).max() + np.abs(g2).max() + 1) * (abs(a) + 1)
        assert tstat(tpl, a * g1) == pytest.approx(a * tstat(tpl, g1), abs=1e-12 * scale)
        assert tstat(tpl, g1 + g2) == pytest.approx(tstat(tpl, g1) + tstat(tpl, g2), abs=1e-12 * scale)

    def test_template_validation(self):
        with pytest.raises(InvalidParameterError):
            ObserverTemplate(np.array([1.0, np.nan]))
        with pytest.raises(InvalidParameterError):
            ObserverTemplate(np.ones(4), kind="cho")
        with pytest.raises(ShapeError):
            ObserverTemplate(np.ones(4), shape=(3, 3))


class TestLikelihood:
    def test_scalar_density(self):
        tpl = ObserverTemplate(np.array([1.0]), shape=(1, 1))
        nll = nll_test_statistic(tpl, np.zeros((1, 1)), 2.0, NoiseSpec(1.0))
        assert nll == pytest.approx(-norm.logpdf(2.0, loc=0.0, scale=1.0), rel=1e-14)
        assert nll == pytest.approx(2 + 0.5 * np.log(2 * np.pi), rel=1e-14)

    def test_at_mean(self):
        rng = np.random.default_rng(2)
        w = rng.standard_normal(16)
        f = rng.random((4, 4))
        tpl = ObserverTemplate(w, shape=(4, 4))
        std = 0.1
        nll = nll_test_statistic(tpl, f, tstat(tpl, f), NoiseSpec(std))
        assert nll == pytest.approx(0.5 * np.log(2 * np.pi * std**2 * (w @ w)), rel=1e-14)

    def test_against_density(self):
        rng = np.random.default_rng(3)
        w = rng.standard_normal(9)
        f = rng.random((3, 3))
        tpl = ObserverTemplate(w, shape=(3, 3))
        sd = 0.3 * np.linalg.norm(w)
        t = 1.7
        got = nll_test_statistic(tpl, f, t, NoiseSpec(0.3))
        assert got == pytest.approx(-norm.logpdf(t, loc=w @ f.ravel(), scale=sd), rel=1e-12)

    def test_degenerate(self):
        tpl = ObserverTemplate(np.ones(4), shape=(2, 2))
        with pytest.raises(DegenerateVarianceError):
            nll_test_statistic(tpl, np.zeros((2, 2)), 0.0, NoiseSpec(0.0))
        with pytest.raises(DegenerateVarianceError):
            nll_test_statistic(ObserverTemplate(np.zeros(4), shape=(2, 2)), np.zeros((2, 2)), 0.0, NoiseSpec(1.0))
