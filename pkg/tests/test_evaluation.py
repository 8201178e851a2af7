import math

import numpy as np
import pytest

from hallucinate.evaluation import (bt_probability, bt_scores, degrade, psnr,
                                    reconstruction_error)
from hallucinate.imgcore import downsample, upsample_bilinear
from tests.conftest import synth_photo


class TestPsnr:
    def test_identical_is_infinite(self):
        img = synth_photo(16, 16)
        assert psnr(img, img) == math.inf

    def test_full_scale_error_is_zero_db(self):
        a = np.zeros((8, 8, 3))
        b = np.full((8, 8, 3), 255.0)
        assert psnr(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_uniform_error_sixteen(self):
        a = np.full((8, 8, 3), 100.0)
        assert psnr(a, a + 16.0) == pytest.approx(
            10 * math.log10(255 ** 2 / 256), abs=1e-9)

    def test_symmetric(self):
        a, b = synth_photo(12, 12, seed=1), synth_photo(12, 12, seed=2)
        assert psnr(a, b) == psnr(b, a)

    def test_decreasing_in_mse(self):
        a = synth_photo(12, 12, seed=3)
        assert psnr(a, a + 1.0) > psnr(a, a + 2.0) > psnr(a, a + 4.0)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4, 3)), np.zeros((5, 4, 3)))


class TestReconstructionError:
    def test_bilinear_round_trip_small(self):
        from scipy.ndimage import gaussian_filter
        base = gaussian_filter(synth_photo(32, 32, seed=4), (1.5, 1.5, 0))
        out = upsample_bilinear(base, 2.0)
        assert reconstruction_error(out, base, 2.0) <= 2.0

    def test_nearest_block_upsample_near_exact(self):
        base = synth_photo(16, 16, seed=5)
        out = np.repeat(np.repeat(base, 2, axis=0), 2, axis=1)
        assert reconstruction_error(out, base, 2.0) <= 0.5

    def test_unrelated_noise_is_large(self):
        base = synth_photo(16, 16, seed=6)
        rng = np.random.default_rng(7)
        out = rng.uniform(0, 255, (32, 32, 3))
        assert reconstruction_error(out, base, 2.0) > 20.0

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            reconstruction_error(np.zeros((30, 32, 3)),
                                 np.zeros((16, 16, 3)), 2.0)


class TestDegrade:
    def test_vanishing_noise(self):
        img = synth_photo(20, 20, seed=8)
        out = degrade(img, "noise", sigma=0.0001, seed=1)
        assert float(np.sqrt(np.mean((out - img) ** 2))) < 0.01

    def test_unit_blur_is_identity(self):
        img = synth_photo(20, 20, seed=9)
        assert np.allclose(degrade(img, "blur", length=1), img, atol=1e-9)

    def test_noise_std_statistics(self):
        img = np.full((128, 128, 3), 128.0)
        out = degrade(img, "noise", sigma=10.0, seed=2)
        assert 9.0 <= float(np.std(out - img)) <= 11.0

    def test_deterministic_under_seed(self):
        img = synth_photo(16, 16, seed=10)
        a = degrade(img, "noise", sigma=5.0, seed=3)
        b = degrade(img, "noise", sigma=5.0, seed=3)
        assert np.array_equal(a, b)

    def test_blur_smooths(self):
        img = synth_photo(32, 32, seed=11)
        out = degrade(img, "blur", length=7, angle=0.3)
        assert out.var() < img.var()

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            degrade(synth_photo(8, 8), "sharpen")


class TestBtScores:
    def test_even_split_equal_scores(self):
        counts = np.array([[0.0, 50.0], [50.0, 0.0]])
        scores = bt_scores(counts)
        assert scores[1] == pytest.approx(0.0, abs=1e-6)
        assert bt_probability(scores, 0, 1) == pytest.approx(0.5, abs=1e-6)

    def test_recovers_observed_preference_rate(self):
        counts = np.array([[0.0, 8559.0], [1441.0, 0.0]])
        scores = bt_scores(counts, baseline=1)
        assert bt_probability(scores, 0, 1) == pytest.approx(0.8559,
                                                             abs=0.01)

    def test_known_scores_recovered(self):
        true = np.array([0.0, 1.0, 2.0])
        rng = np.random.default_rng(12)
        n = 10000
        counts = np.zeros((3, 3))
        for i in range(3):
            for j in range(i + 1, 3):
                p = math.exp(true[i]) / (math.exp(true[i]) + math.exp(true[j]))
                wins = rng.binomial(n, p)
                counts[i, j] = wins
                counts[j, i] = n - wins
        scores = bt_scores(counts, baseline=0)
        assert np.argsort(scores).tolist() == [0, 1, 2]
        assert np.max(np.abs(scores - true)) < 0.1

    def test_probabilities_invariant_to_score_shift(self):
        counts = np.array([[0.0, 30.0, 10.0],
                           [20.0, 0.0, 25.0],
                           [40.0, 25.0, 0.0]])
        s0 = bt_scores(counts, baseline=0)
        s1 = bt_scores(counts, baseline=1)
        for i in range(3):
            for j in range(3):
                if i != j:
                    assert bt_probability(s0, i, j) == pytest.approx(
                        bt_probability(s1, i, j), abs=1e-6)

    def test_stationarity_of_fit(self):
        counts = np.array([[0.0, 30.0, 10.0],
                           [20.0, 0.0, 25.0],
                           [40.0, 25.0, 0.0]])
        scores = bt_scores(counts)
        p = np.exp(scores)
        games = counts + counts.T
        for i in range(3):
            expected_wins = sum(
                games[i, j] * p[i] / (p[i] + p[j])
                for j in range(3) if j != i)
            assert counts[i].sum() == pytest.approx(expected_wins, abs=1e-6)

    def test_disconnected_graph_errors(self):
        counts = np.zeros((4, 4))
        counts[0, 1] = counts[1, 0] = 5.0
        counts[2, 3] = counts[3, 2] = 5.0
        with pytest.raises(ValueError, match="disconnected"):
            bt_scores(counts)
