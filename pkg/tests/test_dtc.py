"""Distance-to-confident tests, anchored by an analytic linear-logit model
whose stopping step can be computed in closed form."""

import math

import numpy as np
import pytest

from conftest import assemble_net
from leakaudit.data import make_synthetic
from leakaudit.dtc import DtcConfig, dtc_gap, dtc_report, dtc_score, dtc_scores
from leakaudit.nn import Dense, Flatten
from leakaudit.regularizers import RegularizerSpec
from leakaudit.training import LossStats, TrainConfig, loss_stats, train_model


def linear_walker(gain=0.5, pixels=16):
    """Two-class net with logits (gain * sum(x), 0) on a (1, 4, 4) input.

    The true class is 0, every pixel's loss gradient is -p1 * gain, so each
    descent step adds exactly +0.001 to every pixel and the loss decreases
    on a closed-form schedule.
    """
    net = assemble_net([Flatten(), Dense(2)], (1, 4, 4), 2, dtype=np.float32)
    weight = np.zeros((pixels, 2), dtype=np.float32)
    weight[:, 0] = gain
    net.set_parameter(1, "weight", weight)
    net.set_parameter(1, "bias", np.zeros(2, dtype=np.float32))
    return net.eval()


def analytic_steps(gain, pixels, start_sum, threshold, max_steps=100):
    """Independent schedule of the walk: first t with loss(x^t) < threshold."""
    for t in range(max_steps + 1):
        margin = gain * (start_sum + 0.001 * pixels * t)
        if math.log1p(math.exp(-margin)) < threshold:
            return t
    return None


class TestDtcScore:
    def test_already_confident_scores_zero(self):
        net = linear_walker()
        x = np.full((1, 4, 4), 0.5, dtype=np.float32)
        score, steps = dtc_score(net, x, 0, threshold=10.0)
        assert score == 0.0 and steps == 0

    def test_never_confident_caps_at_max_score(self):
        net = linear_walker()
        x = np.full((1, 4, 4), 0.5, dtype=np.float32)
        score, steps = dtc_score(net, x, 0, threshold=0.0)  # losses are positive
        assert steps == 100
        # 100 float32 adds of 0.001 round to ~99.9987
        assert score == pytest.approx(100.0, abs=0.01)

    def test_step_count_matches_analytic_schedule(self):
        gain, pixels, threshold = 0.5, 16, 0.012
        net = linear_walker(gain, pixels)
        x = np.full((1, 4, 4), 0.5, dtype=np.float32)
        expected = analytic_steps(gain, pixels, start_sum=8.0, threshold=threshold)
        assert expected is not None and 0 < expected < 100
        score, steps = dtc_score(net, x, 0, threshold=threshold)
        assert steps == expected
        # interior walk, no clamping: the scaled score is the step count
        assert score == pytest.approx(float(expected), abs=1e-3)

    def test_score_is_integer_multiple_without_clamping(self):
        net = linear_walker()
        x = np.full((1, 4, 4), 0.5, dtype=np.float32)
        score, steps = dtc_score(net, x, 0, threshold=0.012)
        assert score == pytest.approx(round(score), abs=1e-3)
        assert 0 <= score <= 100

    def test_walk_is_deterministic(self):
        net = linear_walker()
        x = np.full((1, 4, 4), 0.5, dtype=np.float32)
        assert dtc_score(net, x, 0, threshold=0.012) == dtc_score(net, x, 0, threshold=0.012)

    def test_final_loss_below_threshold_for_finished_samples(self):
        ds = make_synthetic(80, 5, margin=1.0, seed=50)
        cfg = TrainConfig(depth=4, epochs=6, batch_size=16, lr=1e-3, seed=0)
        victim = train_model(ds, RegularizerSpec("none"), cfg).network
        stats = loss_stats(victim, ds)
        out = dtc_scores(victim, ds.images, ds.labels, stats.median, keep_finals=True)
        from leakaudit.attacks import victim_losses

        final_losses = victim_losses(victim, out.finals, ds.labels)
        walked = ~out.already_confident & ~out.capped
        assert out.n_failed == 0
        assert np.all(final_losses[walked] < stats.median)


class TestDtcReport:
    def _stats(self, median):
        return LossStats(per_sample=np.array([median]), mean=median, median=median)

    def test_gap_formula_reference_points(self):
        assert dtc_gap(8.0, 1.1) == pytest.approx(0.862, abs=1e-3)
        assert dtc_gap(5.2, 2.8) == pytest.approx(0.461, abs=1e-3)
        assert dtc_gap(2.2, 1.0) == pytest.approx(0.545, abs=1e-3)

    def test_equal_means_give_zero_gap(self):
        assert dtc_gap(3.3, 3.3) == 0.0

    def test_zero_unseen_mean_is_flagged_undefined(self):
        net = linear_walker()
        x = np.full((4, 1, 4, 4), 0.5, dtype=np.float32)
        y = np.zeros(4, dtype=np.int64)
        report = dtc_report(net, x, y, x, y, self._stats(10.0))
        assert report.gap is None
        assert report.mean_d == 0.0

    def test_overfit_victim_has_smaller_training_distance(self):
        pool = make_synthetic(600, 10, margin=1.0, seed=51)
        train = pool.take(np.arange(300))
        unseen = pool.take(np.arange(300, 600))
        cfg = TrainConfig(depth=4, epochs=20, batch_size=16, lr=1e-3, seed=0)
        result = train_model(train, RegularizerSpec("none"), cfg)
        report = dtc_report(
            result.network,
            train.images[:200],
            train.labels[:200],
            unseen.images[:200],
            unseen.labels[:200],
            result.loss_stats,
        )
        assert report.mean_s < report.mean_d
        assert report.gap is not None and report.gap > 0

    def test_report_fields_consistent(self):
        net = linear_walker()
        x = np.full((6, 1, 4, 4), 0.5, dtype=np.float32)
        y = np.zeros(6, dtype=np.int64)
        report = dtc_report(net, x, y, x, y, self._stats(0.012))
        assert report.n_s == report.n_d == 6
        assert report.frac_capped_s == 0.0
        assert report.gap == pytest.approx(0.0, abs=1e-12)
        assert 0 <= report.mean_s <= 100

    def test_empty_population_rejected(self):
        net = linear_walker()
        x = np.full((2, 1, 4, 4), 0.5, dtype=np.float32)
        with pytest.raises(ValueError):
            dtc_report(net, x[:0], np.zeros(0, np.int64), x, np.zeros(2, np.int64), self._stats(1.0))


class TestScoreScale:
    def test_scores_bounded_by_scale(self):
        ds = make_synthetic(40, 5, margin=1.0, seed=52)
        cfg = TrainConfig(depth=4, epochs=2, batch_size=16, lr=1e-3, seed=1)
        victim = train_model(ds, RegularizerSpec("none"), cfg).network
        stats = loss_stats(victim, ds)
        out = dtc_scores(victim, ds.images, ds.labels, stats.median)
        assert np.all(out.scores >= 0) and np.all(out.scores <= 100)

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError):
            DtcConfig(step_size=0.0)
