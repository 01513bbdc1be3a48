import itertools
import math

import numpy as np
import pytest

from lutaug.errors import EmptyForegroundError, NonIdentifiableError
from lutaug.metrics import (
    bt_log_likelihood,
    bt_rank,
    dataset_diversity,
    diversity,
    evaluate_images,
    fmse,
    fssim,
    mse,
    ssim,
    ssim_map,
)


def brute_force_mse(pred, target):
    total = 0.0
    for a, b in zip(pred.ravel(), target.ravel()):
        total += ((a - b) * 255.0) ** 2
    return total / pred.size


def brute_force_fmse(pred, target, mask):
    vals = []
    for y in range(pred.shape[0]):
        for x in range(pred.shape[1]):
            if mask[y, x]:
                for c in range(3):
                    vals.append(((pred[y, x, c] - target[y, x, c]) * 255.0) ** 2)
    return sum(vals) / len(vals)


def brute_force_ssim_map(pred, target):
    """Direct per-pixel windowed SSIM with explicit reflect padding."""
    size, sigma = 11, 1.5
    x1 = np.arange(size) - 5
    k1 = np.exp(-(x1**2) / (2 * sigma**2))
    k1 /= k1.sum()
    kernel = np.outer(k1, k1)
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    h, w = pred.shape[:2]
    out = np.zeros((h, w))
    for c in range(pred.shape[2]):
        a = np.pad(pred[..., c] * 255.0, 5, mode="reflect")
        b = np.pad(target[..., c] * 255.0, 5, mode="reflect")
        for y in range(h):
            for x in range(w):
                wa = a[y : y + size, x : x + size]
                wb = b[y : y + size, x : x + size]
                mu_a = (kernel * wa).sum()
                mu_b = (kernel * wb).sum()
                var_a = (kernel * wa * wa).sum() - mu_a**2
                var_b = (kernel * wb * wb).sum() - mu_b**2
                cov = (kernel * wa * wb).sum() - mu_a * mu_b
                out[y, x] += (
                    (2 * mu_a * mu_b + c1)
                    * (2 * cov + c2)
                    / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
                )
    return out / pred.shape[2]


@pytest.fixture(scope="module")
def images():
    rng = np.random.default_rng(0)
    pred = rng.random((16, 16, 3))
    target = rng.random((16, 16, 3))
    mask = rng.random((16, 16)) > 0.5
    return pred, target, mask


class TestMse:
    def test_identical_zero(self, images):
        pred, _, _ = images
        assert mse(pred, pred.copy()) == 0.0

    def test_constant_offset(self):
        a = np.zeros((4, 4, 3))
        assert mse(a, a + 0.1) == pytest.approx(25.5**2, rel=1e-12)

    def test_matches_brute_force(self, images):
        pred, target, _ = images
        assert mse(pred, target) == pytest.approx(
            brute_force_mse(pred, target), abs=1e-6
        )

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))


class TestFmse:
    def test_matches_brute_force(self, images):
        pred, target, mask = images
        assert fmse(pred, target, mask) == pytest.approx(
            brute_force_fmse(pred, target, mask), abs=1e-6
        )

    def test_full_foreground_equals_mse(self, images):
        pred, target, _ = images
        full = np.ones(pred.shape[:2], dtype=bool)
        assert abs(fmse(pred, target, full) - mse(pred, target)) <= 1e-12

    def test_single_pixel(self):
        pred = np.zeros((3, 3, 3))
        target = np.zeros((3, 3, 3))
        target[1, 1] = [0.1, 0.2, 0.3]
        mask = np.zeros((3, 3), bool)
        mask[1, 1] = True
        expected = ((25.5) ** 2 + 51.0**2 + 76.5**2) / 3
        assert fmse(pred, target, mask) == pytest.approx(expected, rel=1e-12)

    def test_empty_foreground(self, images):
        pred, target, _ = images
        with pytest.raises(EmptyForegroundError):
            fmse(pred, target, np.zeros(pred.shape[:2], bool))


class TestSsim:
    def test_identical_is_one(self, images):
        pred, _, _ = images
        np.testing.assert_allclose(ssim_map(pred, pred.copy()), 1.0, atol=1e-12)
        assert ssim(pred, pred.copy()) == pytest.approx(1.0, abs=1e-12)

    def test_matches_brute_force(self, images):
        pred, target, _ = images
        np.testing.assert_allclose(
            ssim_map(pred, target), brute_force_ssim_map(pred, target), atol=1e-6
        )

    def test_fssim_matches_masked_brute_force(self, images):
        pred, target, mask = images
        oracle = brute_force_ssim_map(pred, target)[mask].mean()
        assert fssim(pred, target, mask) == pytest.approx(oracle, abs=1e-6)

    def test_range(self, images):
        pred, target, _ = images
        m = ssim_map(pred, target)
        assert np.all(m <= 1.0 + 1e-12) and np.all(m >= -1.0)

    def test_too_small_image(self):
        with pytest.raises(ValueError):
            ssim_map(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))

    def test_fssim_empty_foreground(self, images):
        pred, target, _ = images
        with pytest.raises(EmptyForegroundError):
            fssim(pred, target, np.zeros(pred.shape[:2], bool))


class TestDiversity:
    def test_identical_samples_zero(self, images):
        pred, _, mask = images
        assert diversity([pred, pred.copy(), pred.copy()], mask) == 0.0

    def test_two_samples_equals_fmse(self, images):
        pred, target, mask = images
        assert diversity([pred, target], mask) == pytest.approx(
            fmse(pred, target, mask)
        )

    def test_mean_over_pairs(self, images):
        rng = np.random.default_rng(1)
        mask = images[2]
        samples = [rng.random((16, 16, 3)) for _ in range(4)]
        oracle = np.mean(
            [
                fmse(samples[i], samples[j], mask)
                for i, j in itertools.combinations(range(4), 2)
            ]
        )
        assert diversity(samples, mask) == pytest.approx(oracle, rel=1e-12)

    def test_needs_two(self, images):
        with pytest.raises(ValueError):
            diversity([images[0]], images[2])

    def test_dataset_level(self, images):
        pred, target, mask = images
        d = diversity([pred, target], mask)
        assert dataset_diversity([([pred, target], mask)] * 3) == pytest.approx(d)


class TestEvaluateImages:
    def test_report_means(self, images):
        pred, target, mask = images
        report = evaluate_images([(pred, target, mask), (pred, pred, mask)])
        assert report.mse_values[0] == pytest.approx(mse(pred, target))
        assert report.fmse_values[1] == 0.0
        assert report.fssim == pytest.approx(
            (fssim(pred, target, mask) + 1.0) / 2
        )


class TestBradleyTerry:
    def test_two_model_closed_form(self):
        # 3:1 win ratio -> score gap log(3), zero-mean -> +-0.5*log 3 = +-0.5493
        wins = np.array([[0.0, 3.0], [1.0, 0.0]])
        scores = bt_rank(wins)
        assert scores[0] == pytest.approx(0.5 * math.log(3), abs=1e-3)
        assert scores[1] == pytest.approx(-0.5 * math.log(3), abs=1e-3)
        assert abs(scores.sum()) < 1e-12

    def test_symmetric_wins_all_zero(self):
        wins = np.full((4, 4), 5.0)
        np.fill_diagonal(wins, 0.0)
        np.testing.assert_allclose(bt_rank(wins), 0.0, atol=1e-9)

    def test_loglik_monotone(self):
        rng = np.random.default_rng(2)
        wins = rng.integers(1, 20, size=(5, 5)).astype(float)
        np.fill_diagonal(wins, 0.0)
        scores, history = bt_rank(wins, return_history=True)
        diffs = np.diff(history)
        assert np.all(diffs >= -1e-9)
        assert len(scores) == 5

    def test_order_matches_win_rates(self):
        # round-robin with a clear strength ladder
        wins = np.array(
            [
                [0.0, 8.0, 9.0],
                [2.0, 0.0, 7.0],
                [1.0, 3.0, 0.0],
            ]
        )
        scores = bt_rank(wins)
        assert scores[0] > scores[1] > scores[2]

    def test_loglik_beats_uniform(self):
        wins = np.array([[0.0, 7.0], [3.0, 0.0]])
        scores = bt_rank(wins)
        assert bt_log_likelihood(wins, scores) > bt_log_likelihood(
            wins, np.zeros(2)
        )

    def test_validation_errors(self):
        with pytest.raises(ValueError):
            bt_rank(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            bt_rank(np.array([[0.0, -1.0], [1.0, 0.0]]))
        with pytest.raises(ValueError):
            bt_rank(np.array([[1.0, 2.0], [1.0, 0.0]]))

    def test_undefeated_model_non_identifiable(self):
        wins = np.array([[0.0, 4.0], [0.0, 0.0]])
        with pytest.raises(NonIdentifiableError) as err:
            bt_rank(wins)
        assert 1 in err.value.models or 0 in err.value.models

    def test_disconnected_graph_non_identifiable(self):
        wins = np.zeros((4, 4))
        wins[0, 1] = wins[1, 0] = 2.0
        wins[2, 3] = wins[3, 2] = 2.0
        with pytest.raises(NonIdentifiableError) as err:
            bt_rank(wins)
        assert set(err.value.models) == {2, 3}
