import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from taskpls.denoiser import DenoiseConfig, denoise_batch
from taskpls.errors import InsufficientDataError, InvalidParameterError, ShapeError
from taskpls.evaluation import (
    ScoreSet,
    difference_map,
    evaluate_pipeline,
    hanley_mcneil_se,
    mann_whitney_auc,
    rmse,
    roc_curve,
    score_ensemble,
    trapezoid_auc,
)
from taskpls.objects import BinaryTextureParams, LabeledEnsemble, NoiseSpec, SignalSpec, make_ensemble
from taskpls.observer import estimate_hotelling
from taskpls.observer import test_statistic as tstat

scores = st.lists(st.integers(-20, 20).map(float), min_size=1, max_size=30)


def pairwise_auc(a, p):
    a = np.asarray(a)[:, None]
    p = np.asarray(p)[None, :]
    return float(np.mean((p > a) + 0.5 * (p == a)))


class TestAuc:
    def test_perfect(self):
        roc = roc_curve(ScoreSet([0, 1, 2], [3, 4]))
        assert roc.auc == 1.0
        assert roc_curve(ScoreSet([3, 4], [0, 1, 2])).auc == 0.0

    def test_all_tied(self):
        assert roc_curve(ScoreSet([1, 1, 1], [1, 1])).auc == 0.5

    def test_hand_count(self):
        # pairs: (1,2)>, (1,0)<, (3,2)<, (3,0)<, (2,2)= and (2,0)<
        assert mann_whitney_auc([1, 3, 2], [2, 0]) == pytest.approx(1.5 / 6)

    def test_gaussian_shift(self):
        rng = np.random.default_rng(0)
        n = 100_000
        auc = mann_whitney_auc(rng.standard_normal(n), 1.0 + rng.standard_normal(n))
        assert abs(auc - norm.cdf(1 / np.sqrt(2))) <= 0.005

    def test_hanley_mcneil(self):
        q1, q2 = 0.8 / 1.2, 2 * 0.64 / 1.8
        var = (0.16 + 49 * (q1 - 0.64) + 49 * (q2 - 0.64)) / 2500
        assert hanley_mcneil_se(0.8, 50, 50) == pytest.approx(np.sqrt(var), rel=1e-12)
        assert hanley_mcneil_se(1.0, 10, 10) == 0.0

    def test_hanley_mcneil_monte_carlo(self):
        # exponential scores are the model the formula is exact for; mean 4 gives AUC 0.8
        rng = np.random.default_rng(1)
        aucs = [
            mann_whitney_auc(rng.exponential(1.0, 50), rng.exponential(4.0, 50))
            for _ in range(4000)
        ]
        assert np.std(aucs) == pytest.approx(hanley_mcneil_se(0.8, 50, 50), rel=0.05)

    def test_se_shrinks_with_n(self):
        assert hanley_mcneil_se(0.7, 400, 400) < hanley_mcneil_se(0.7, 100, 100)

    def test_empty_class(self):
        with pytest.raises(InsufficientDataError):
            ScoreSet([], [1.0])

    def test_non_finite(self):
        with pytest.raises(InvalidParameterError):
            ScoreSet([np.nan], [1.0])

    @settings(max_examples=100, deadline=None)
    @given(scores, scores)
    def test_matches_pairwise(self, a, p):
        assert mann_whitney_auc(a, p) == pytest.approx(pairwise_auc(a, p), abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(scores, scores)
    def test_swap_symmetry(self, a, p):
        assert mann_whitney_auc(a, p) + mann_whitney_auc(p, a) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(scores, scores, st.floats(0.1, 10), st.floats(-5, 5))
    def test_monotone_transform_invariant(self, a, p, scale, shift):
        a, p = np.array(a), np.array(p)
        base = mann_whitney_auc(a, p)
        assert mann_whitney_auc(scale * a + shift, scale * p + shift) == pytest.approx(base, abs=1e-12)
        assert mann_whitney_auc(np.exp(a / 10), np.exp(p / 10)) == pytest.approx(base, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(scores, scores)
    def test_trapezoid_equals_mann_whitney(self, a, p):
        roc = roc_curve(ScoreSet(a, p))
        assert abs(trapezoid_auc(roc) - roc.auc) <= 1e-10

    @settings(max_examples=100, deadline=None)
    @given(scores, scores)
    def test_operating_points_monotone(self, a, p):
        roc = roc_curve(ScoreSet(a, p))
        pts = np.array(roc.operating_points)
        assert tuple(pts[0]) == (0.0, 0.0)
        assert tuple(pts[-1]) == (1.0, 1.0)
        assert np.all(np.diff(pts[:, 0]) >= 0)
        assert np.all(np.diff(pts[:, 1]) >= 0)
        assert np.all(np.diff(roc.thresholds) < 0)


class TestRocIo:
    def test_csv(self, tmp_path):
        roc = roc_curve(ScoreSet([0.0, 1.0], [2.0]))
        path = tmp_path / "roc.csv"
        roc.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "threshold,fpr,tpr"
        assert lines[1] == "inf,0.0,0.0"
        assert len(lines) == 1 + 4

    def test_json(self, tmp_path):
        import json

        roc = roc_curve(ScoreSet([0.0, 1.0], [2.0, 0.5]))
        roc.to_json(tmp_path / "roc.json")
        d = json.loads((tmp_path / "roc.json").read_text())
        assert d["auc"] == roc.auc
        assert d["n_absent"] == 2 and d["n_present"] == 2


class TestImageMetrics:
    def test_rmse_known(self):
        a = np.zeros((2, 2))
        b = np.array([[1.0, 1.0], [1.0, 1.0]])
        assert rmse(a, b) == 1.0
        assert rmse(a, a) == 0.0
        assert rmse(a, np.array([[3.0, 0], [0, 0]])) == 1.5

    def test_rmse_shape(self):
        with pytest.raises(ShapeError):
            rmse(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_difference_map(self):
        rng = np.random.default_rng(0)
        a = rng.random((4, 4))
        b = rng.random((4, 4))
        np.testing.assert_array_equal(difference_map(a, b), a - b)
        assert not np.any(difference_map(a, a))
        with pytest.raises(ShapeError):
            difference_map(a, np.zeros((4, 5)))


@pytest.fixture(scope="module")
def small_task():
    bg = BinaryTextureParams(spectral_exponent=2.0)
    sig = SignalSpec("disk", None, 2.0, 0.07)
    noise = NoiseSpec(0.1)
    train = make_ensemble(bg, sig, noise, 800, 800, 1)
    test = make_ensemble(bg, sig, noise, 20, 20, 2)
    return estimate_hotelling(train, 1e-3), test


class TestPipeline:
    def test_identity_path(self, small_task):
        template, test = small_task
        roc = evaluate_pipeline(test, template)
        t = tstat(template, test.noisy)
        assert roc.auc == mann_whitney_auc(t[test.labels == 0], t[test.labels == 1])
        assert roc.n_absent == 20 and roc.n_present == 20

    def test_beta_zero_reproduces_raw(self, small_task):
        template, test = small_task
        raw = evaluate_pipeline(test, template)
        cfg = DenoiseConfig(alpha=1.0, beta=0.0, gamma=0.0, iterations=200)
        assert evaluate_pipeline(test, template, cfg).auc == raw.auc

    def test_permutation_invariant(self, small_task):
        template, test = small_task
        cfg = DenoiseConfig(alpha=1.0, beta=0.14, gamma=0.1, iterations=100)
        perm = np.random.default_rng(0).permutation(len(test))
        shuffled = LabeledEnsemble(test.noisy[perm], test.truth[perm], test.labels[perm])
        a = evaluate_pipeline(test, template, cfg, batch_size=7)
        b = evaluate_pipeline(shuffled, template, cfg, batch_size=16)
        assert a.auc == b.auc
        assert a.auc_std_err == b.auc_std_err

    def test_score_ensemble_split(self, small_task):
        template, test = small_task
        s = score_ensemble(test, template)
        assert s.absent_scores.size == 20 and s.present_scores.size == 20

    def test_difference_map_tracks_statistic_gap(self, small_task):
        # the task term pulls w.f toward w.g, so w.(f_task - f_plain) follows w.g - w.f_plain
        template, test = small_task
        g = test.noisy
        plain = denoise_batch(g, template, DenoiseConfig(beta=0.14, gamma=0.0, iterations=1000))[0]
        task = denoise_batch(g, template, DenoiseConfig(beta=0.14, gamma=1.0, iterations=1000))[0]
        shift = tstat(template, np.stack([difference_map(a, b) for a, b in zip(task, plain)]))
        gap = tstat(template, g) - tstat(template, plain)
        assert np.corrcoef(shift, gap)[0, 1] > 0.9
