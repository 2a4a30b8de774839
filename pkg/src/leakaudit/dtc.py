"""Distance-to-confident: PGD walks from a sample toward low-loss regions.

A sample already scoring below the confidence threshold (the model's
median training loss) has distance zero. Otherwise the input descends the
loss by signed 0.001-sized L-infinity steps, clamped to [0, 1], for at
most 100 steps; the score is 1000 times the L-infinity distance between
the start and stop points. Population means use compensated summation so
aggregation order cannot matter.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .nn import one_hot

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DtcConfig:
    max_steps: int = 100
    step_size: float = 0.001  # per-step L-infinity budget
    report_scale: float = 1000.0
    batch_size: int = 256

    def __post_init__(self):
        if self.step_size <= 0 or self.max_steps < 1:
            raise ValueError("step size must be positive and max_steps >= 1")

    @property
    def max_score(self):
        return self.report_scale * self.step_size * self.max_steps


@dataclass
class DtcScores:
    """Per-sample outcome of the walk over one population."""

    scores: np.ndarray  # scaled; excludes failed samples
    steps: np.ndarray
    already_confident: np.ndarray  # bool, aligned with scores
    capped: np.ndarray  # bool, still above threshold at max_steps
    n_failed: int  # samples dropped for non-finite gradients
    finals: np.ndarray | None = None  # stop points, when requested


@dataclass
class DtcReport:
    mean_s: float
    mean_d: float
    gap: float | None  # (mean_d - mean_s) / mean_d; None when mean_d == 0
    mean_s_excl: float  # means over not-already-confident samples only
    mean_d_excl: float
    frac_confident_s: float
    frac_confident_d: float
    frac_capped_s: float
    frac_capped_d: float
    n_s: int
    n_d: int
    n_failed_s: int
    n_failed_d: int
    scores_s: np.ndarray
    scores_d: np.ndarray


def _fmean(values):
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return float("nan")
    return math.fsum(values.tolist()) / values.size


def dtc_scores(net, images, labels, threshold, cfg=DtcConfig(), keep_finals=False) -> DtcScores:
    """Run the PGD walk for a population; deterministic, inference mode."""
    was_training = net.train_mode
    net.eval()
    images = np.asarray(images, dtype=net.dtype)
    labels = np.asarray(labels)
    all_scores, all_steps, all_conf, all_capped, all_finals = [], [], [], [], []
    failed = 0
    for start in range(0, len(images), cfg.batch_size):
        out = _walk_batch(net, images[start : start + cfg.batch_size], labels[start : start + cfg.batch_size], threshold, cfg)
        scores, steps, conf, capped, n_bad, finals = out
        all_scores.append(scores)
        all_steps.append(steps)
        all_conf.append(conf)
        all_capped.append(capped)
        all_finals.append(finals)
        failed += n_bad
    if was_training:
        net.train()
    return DtcScores(
        scores=np.concatenate(all_scores) if all_scores else np.empty(0),
        steps=np.concatenate(all_steps) if all_steps else np.empty(0, dtype=int),
        already_confident=np.concatenate(all_conf) if all_conf else np.empty(0, dtype=bool),
        capped=np.concatenate(all_capped) if all_capped else np.empty(0, dtype=bool),
        n_failed=failed,
        finals=np.concatenate(all_finals) if keep_finals else None,
    )


def _walk_batch(net, x0, labels, threshold, cfg):
    n = len(x0)
    targets = one_hot(labels, net.num_classes, net.dtype)
    current = x0.copy()
    scores = np.zeros(n)
    steps = np.zeros(n, dtype=int)
    done = np.zeros(n, dtype=bool)
    capped = np.zeros(n, dtype=bool)
    bad = np.zeros(n, dtype=bool)
    already_confident = np.zeros(n, dtype=bool)
    step = net.dtype.type(cfg.step_size)
    for t in range(cfg.max_steps + 1):
        active = np.flatnonzero(~done & ~bad)
        if active.size == 0:
            break
        result = net.backward(current[active], targets[active], reduction="sum", want_input_grad=True)
        grad_ok = np.isfinite(result.input_grad.reshape(active.size, -1)).all(axis=1)
        if not grad_ok.all():
            newly_bad = active[~grad_ok]
            bad[newly_bad] = True
            log.warning("distance-to-confident: dropping %d sample(s) with non-finite gradients", newly_bad.size)
            active = active[grad_ok]
            result_losses = result.losses[grad_ok]
            grads = result.input_grad[grad_ok]
        else:
            result_losses = result.losses
            grads = result.input_grad
        reached = result_losses < threshold
        hit = active[reached]
        dist = np.abs(current[hit] - x0[hit]).reshape(hit.size, -1).max(axis=1) if hit.size else np.empty(0)
        scores[hit] = np.minimum(dist * cfg.report_scale, cfg.max_score)
        steps[hit] = t
        done[hit] = True
        if t == 0:
            already_confident = done.copy()  # confident before any perturbation
        if t == cfg.max_steps:
            break
        still = active[~reached]
        if still.size == 0:
            continue
        g = grads[~reached]
        current[still] = np.clip(current[still] - step * np.sign(g), 0.0, 1.0)
    remaining = np.flatnonzero(~done & ~bad)
    if remaining.size:
        dist = np.abs(current[remaining] - x0[remaining]).reshape(remaining.size, -1).max(axis=1)
        scores[remaining] = np.minimum(dist * cfg.report_scale, cfg.max_score)
        steps[remaining] = cfg.max_steps
        capped[remaining] = True
    keep = ~bad
    # rows of finished samples are never stepped again, so `current` holds
    # each sample's stop point
    return scores[keep], steps[keep], already_confident[keep], capped[keep], int(bad.sum()), current[keep]


def dtc_score(net, x, y, threshold, cfg=DtcConfig()):
    """Single-sample walk; returns (scaled score, steps taken)."""
    out = dtc_scores(net, np.asarray(x)[None], np.asarray([y]), threshold, cfg=cfg)
    if out.n_failed:
        raise ArithmeticError("non-finite gradient during the walk")
    return float(out.scores[0]), int(out.steps[0])


def dtc_report(net, s_images, s_labels, d_images, d_labels, stats, cfg=DtcConfig()) -> DtcReport:
    """Population walk for training (S) and unseen (D) samples.

    The threshold is ``stats.median``, the victim's median training loss.
    Already-confident samples score 0 and are included in the headline
    means; means excluding them are reported alongside.
    """
    if len(s_images) == 0 or len(d_images) == 0:
        raise ValueError("both populations must be non-empty")
    s = dtc_scores(net, s_images, s_labels, stats.median, cfg)
    d = dtc_scores(net, d_images, d_labels, stats.median, cfg)
    mean_s = _fmean(s.scores)
    mean_d = _fmean(d.scores)
    gap = None if mean_d == 0.0 else (mean_d - mean_s) / mean_d
    if gap is None:
        log.warning("distance-to-confident gap undefined: mean over unseen samples is zero")
    return DtcReport(
        mean_s=mean_s,
        mean_d=mean_d,
        gap=gap,
        mean_s_excl=_fmean(s.scores[~s.already_confident]),
        mean_d_excl=_fmean(d.scores[~d.already_confident]),
        frac_confident_s=float(s.already_confident.mean()) if s.scores.size else float("nan"),
        frac_confident_d=float(d.already_confident.mean()) if d.scores.size else float("nan"),
        frac_capped_s=float(s.capped.mean()) if s.scores.size else float("nan"),
        frac_capped_d=float(d.capped.mean()) if d.scores.size else float("nan"),
        n_s=int(s.scores.size),
        n_d=int(d.scores.size),
        n_failed_s=s.n_failed,
        n_failed_d=d.n_failed,
        scores_s=s.scores,
        scores_d=d.scores,
    )


def dtc_gap(mean_d, mean_s):
    """Relative gap (mean_d - mean_s) / mean_d."""
    if mean_d == 0:
        raise ZeroDivisionError("gap undefined when the unseen-population mean is zero")
    return (mean_d - mean_s) / mean_d
