"""Mechanism transform tests: smoothing, distillation targets, noise, crops."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import linear_net
from leakaudit.nn import one_hot
from leakaudit.regularizers import (
    HYPERPARAMETER_RANGES,
    RegularizerSpec,
    distill_targets,
    pad_and_crop,
    perturb_gaussian,
    random_crop,
    smooth_labels,
)


class TestRegularizerSpec:
    @pytest.mark.parametrize("mechanism,lo,hi", [(m, lo, hi) for m, (lo, hi) in HYPERPARAMETER_RANGES.items()])
    def test_range_endpoints_accepted(self, mechanism, lo, hi):
        RegularizerSpec(mechanism, lo)
        RegularizerSpec(mechanism, hi)

    @pytest.mark.parametrize(
        "mechanism,value",
        [
            ("distillation", 0.5),
            ("distillation", 101),
            ("label_smoothing", 0.999),
            ("gaussian_noise", 0.3),
            ("random_crop", 25),
            ("dropout", 0.96),
            ("spatial_dropout", 0.01),
            ("weight_decay", 0.6),
            ("early_stop", 0),
        ],
    )
    def test_out_of_range_rejected(self, mechanism, value):
        with pytest.raises(ValueError):
            RegularizerSpec(mechanism, value)

    @pytest.mark.parametrize("mechanism,value", [("random_crop", 2.5), ("early_stop", 3.7)])
    def test_integer_mechanisms_reject_fractions(self, mechanism, value):
        with pytest.raises(ValueError):
            RegularizerSpec(mechanism, value)

    def test_unknown_mechanism(self):
        with pytest.raises(ValueError, match="unknown mechanism"):
            RegularizerSpec("shake_shake", 0.5)


class TestSmoothLabels:
    def test_alpha_zero_is_identity(self):
        targets = one_hot(np.array([2, 0]), 4, np.float64)
        assert np.array_equal(smooth_labels(targets, 0.0, 4), targets)

    def test_alpha_one_is_uniform(self):
        targets = one_hot(np.array([3]), 10, np.float64)
        assert np.allclose(smooth_labels(targets, 1.0, 10), 0.1)

    def test_formula_values(self):
        smoothed = smooth_labels(one_hot(np.array([0]), 10, np.float64), 0.1, 10)
        assert smoothed[0, 0] == pytest.approx(0.91, abs=1e-12)
        assert np.allclose(smoothed[0, 1:], 0.01, atol=1e-12)

    def test_rows_still_sum_to_one(self):
        smoothed = smooth_labels(one_hot(np.array([1, 2, 3]), 5, np.float64), 0.37, 5)
        assert np.allclose(smoothed.sum(axis=1), 1.0, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 9), st.floats(0.0, 0.89))
    def test_true_class_stays_argmax_below_limit(self, label, alpha):
        # argmax preserved whenever alpha < (K-1)/K
        smoothed = smooth_labels(one_hot(np.array([label]), 10, np.float64), alpha, 10)
        assert smoothed[0].argmax() == label

    def test_alpha_out_of_unit_interval(self):
        with pytest.raises(ValueError):
            smooth_labels(one_hot(np.array([0]), 3), 1.2, 3)


class TestDistillTargets:
    def _teacher_with_logits(self, logits):
        """Dense teacher on 1-d input [1.0] producing exactly ``logits``."""
        net = linear_net(seed=0, in_features=1, num_classes=len(logits))
        net.set_parameter(0, "weight", np.array([logits], dtype=np.float64))
        net.set_parameter(0, "bias", np.zeros(len(logits)))
        return net.eval()

    def test_temperature_one_is_teacher_posterior(self):
        teacher = self._teacher_with_logits([2.0, 0.0])
        x = np.ones((1, 1))
        assert np.allclose(distill_targets(teacher, x, 1.0), teacher.forward(x), atol=1e-12)

    def test_temperature_two_on_known_logits(self):
        teacher = self._teacher_with_logits([2.0, 0.0])
        targets = distill_targets(teacher, np.ones((1, 1)), 2.0)
        # softmax([1, 0]) evaluated independently
        assert targets[0, 0] == pytest.approx(0.7310585786300049, abs=1e-9)
        assert targets[0, 1] == pytest.approx(0.2689414213699951, abs=1e-9)

    def test_high_temperature_flattens_to_near_uniform(self):
        teacher = self._teacher_with_logits([2.0, 0.0])
        targets = distill_targets(teacher, np.ones((1, 1)), 100.0)
        assert np.all(np.abs(targets - 0.5) <= 0.006)  # softmax([0.02, 0])

    def test_rows_are_distributions(self):
        teacher = self._teacher_with_logits([1.0, -2.0, 0.5])
        targets = distill_targets(teacher, np.ones((4, 1)), 7.0)
        assert np.allclose(targets.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(targets >= 0)

    def test_non_positive_temperature_rejected(self):
        teacher = self._teacher_with_logits([1.0, 0.0])
        with pytest.raises(ValueError):
            distill_targets(teacher, np.ones((1, 1)), 0.0)

    def test_training_mode_teacher_rejected(self):
        teacher = self._teacher_with_logits([1.0, 0.0]).train()
        with pytest.raises(ValueError):
            distill_targets(teacher, np.ones((1, 1)), 2.0)


class TestGaussianNoise:
    def test_sigma_zero_is_identity(self):
        batch = np.random.default_rng(0).random((4, 1, 6, 6)).astype(np.float32)
        out = perturb_gaussian(batch, 0.0, np.random.default_rng(1))
        assert np.array_equal(out, batch)

    def test_empirical_std_matches_sigma(self):
        # 10k draws of one interior pixel at 0.5: far from the clamp
        batch = np.full((10_000, 1, 1, 1), 0.5, dtype=np.float64)
        out = perturb_gaussian(batch, 0.1, np.random.default_rng(2))
        std = float((out - 0.5).std())
        assert 0.095 <= std <= 0.105

    def test_output_clamped_to_unit_range(self):
        batch = np.random.default_rng(3).random((8, 1, 5, 5)).astype(np.float32)
        out = perturb_gaussian(batch, 0.25, np.random.default_rng(4))
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_fresh_noise_each_call(self):
        batch = np.full((2, 1, 3, 3), 0.5, dtype=np.float32)
        gen = np.random.default_rng(5)
        assert not np.array_equal(perturb_gaussian(batch, 0.1, gen), perturb_gaussian(batch, 0.1, gen))

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            perturb_gaussian(np.zeros((1, 1, 2, 2)), -0.1, np.random.default_rng(0))


class TestRandomCrop:
    def test_centered_offset_is_identity(self):
        batch = np.random.default_rng(6).random((3, 1, 8, 8)).astype(np.float32)
        out = pad_and_crop(batch, np.full((3, 2), 4), crop=4)
        assert np.array_equal(out, batch)

    def test_output_shape_preserved(self):
        batch = np.random.default_rng(7).random((5, 1, 28, 28)).astype(np.float32)
        out = random_crop(batch, 4, np.random.default_rng(8))
        assert out.shape == batch.shape

    def test_offsets_cover_the_padded_window(self):
        # a hot pixel at the center reveals each draw's (row, col) offset
        c, size = 4, 28
        batch = np.zeros((600, 1, size, size), dtype=np.float32)
        batch[:, 0, size // 2, size // 2] = 1.0
        out = random_crop(batch, c, np.random.default_rng(9))
        shifts = set()
        for img in out[:, 0]:
            pos = np.argwhere(img == 1.0)
            if len(pos) == 1:  # pixel may be cropped out only if |shift| > c... catch that too
                shifts.add(tuple(pos[0] - size // 2))
        rows = {r for r, _ in shifts}
        cols = {c_ for _, c_ in shifts}
        assert min(rows) == -c and max(rows) == c  # both extremes occur over 600 draws
        assert min(cols) == -c and max(cols) == c
        assert len(shifts) == (2 * c + 1) ** 2  # every offset in {-c..c}^2 seen

    def test_large_crop_padding_allowed(self):
        # padding may exceed half the image; output can be all zeros
        batch = np.random.default_rng(10).random((2, 1, 28, 28)).astype(np.float32)
        out = pad_and_crop(batch, np.zeros((2, 2), dtype=int), crop=24)
        assert out.shape == batch.shape
        assert np.all(out[:, :, :10, :10] == 0)  # window fully inside the zero pad

    def test_bad_crop_rejected(self):
        with pytest.raises(ValueError):
            random_crop(np.zeros((1, 1, 8, 8), dtype=np.float32), 0, np.random.default_rng(0))

    def test_offsets_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            pad_and_crop(np.zeros((1, 1, 8, 8), dtype=np.float32), np.array([[9, 0]]), crop=4)
