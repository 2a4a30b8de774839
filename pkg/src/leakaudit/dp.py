"""Differentially private training and an RDP privacy accountant.

DP-SGD: every example's gradient (computed by a microbatch-of-1 backward
pass, correctness over speed) is clipped to a global L2 bound, the batch
sum is perturbed with Gaussian noise of scale noise_multiplier * clip, and
the noisy mean feeds the regular optimizer.

Accountant: Renyi DP of the subsampled Gaussian mechanism, composed over
steps and converted to (epsilon, delta). For sampling rate q = 1 the exact
Gaussian-mechanism RDP alpha / (2 sigma^2) applies at every order. For
q < 1 and integer order alpha the standard binomial expansion is used:

  rdp(alpha) = logsumexp_i [ log C(alpha, i) + i log q
               + (alpha - i) log(1 - q) + i (i - 1) / (2 sigma^2) ] / (alpha - 1)

Fractional orders are upper-bounded by the value at the next integer
order (Renyi divergence is non-decreasing in the order, so the bound and
the resulting epsilon stay valid).
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaln, logsumexp

from . import rng as rngmod
from .data import Dataset
from .nn import AmsGrad, TaskSpec, build_network, one_hot
from .training import EpochStats, TrainConfig, TrainResult, TrainingDiverged, accuracy, loss_stats

DEFAULT_ORDERS = (1.25, 1.5) + tuple(float(a) for a in range(2, 65))


@dataclass(frozen=True)
class DpConfig:
    noise_multiplier: float
    clip_norm: float = 1.0
    delta: float = 1e-5
    sample_rate: float | None = None  # batch / |S|; filled in by the trainer
    steps: int | None = None

    def __post_init__(self):
        if self.noise_multiplier <= 0:
            raise ValueError("noise multiplier must be positive")
        if self.clip_norm <= 0:
            raise ValueError("clip norm must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.sample_rate is not None and not 0.0 < self.sample_rate <= 1.0:
            raise ValueError("sample rate must lie in (0, 1]")
        if self.steps is not None and self.steps < 0:
            raise ValueError("steps must be non-negative")


@dataclass
class PrivacyReport:
    epsilon: float
    delta: float
    alpha_star: float | None
    rdp_curve: list  # (order, total rdp) pairs over the order grid
    noise_multiplier: float
    clip_norm: float
    sample_rate: float
    steps: int


def flatten_norm(grads_by_layer):
    """Global L2 norm across every parameter gradient of one example."""
    total = 0.0
    for layer_grads in grads_by_layer:
        if layer_grads is None:
            continue
        for g in layer_grads.values():
            total += float(np.square(g, dtype=np.float64).sum())
    return math.sqrt(total)


def clip_gradient(grads_by_layer, clip_norm):
    """Scale the whole gradient down to L2 norm clip_norm when it exceeds it.

    The scale carries a 1e-6 relative safety margin so the bound still
    holds after float32 rounding of the scaled entries.
    """
    if clip_norm <= 0:
        raise ValueError("clip norm must be positive")
    norm = flatten_norm(grads_by_layer)
    if not math.isfinite(norm):
        raise ArithmeticError("non-finite per-example gradient")
    if norm <= clip_norm:
        return grads_by_layer, norm
    scale = clip_norm * (1.0 - 1e-6) / norm
    clipped = [
        None if lg is None else {name: g * scale for name, g in lg.items()} for lg in grads_by_layer
    ]
    return clipped, norm


def privatize_gradients(summed, batch_size, dp: DpConfig, gen):
    """Noise the summed clipped gradients and divide by the batch size.

    The injected noise is N(0, (noise_multiplier * clip_norm)^2) per
    coordinate, so the returned mean gradient carries noise of standard
    deviation noise_multiplier * clip_norm / batch_size.
    """
    scale = dp.noise_multiplier * dp.clip_norm
    out = []
    for layer_grads in summed:
        if layer_grads is None:
            out.append(None)
            continue
        noised = {}
        for name, g in layer_grads.items():
            noise = gen.standard_normal(g.shape).astype(g.dtype)
            noised[name] = (g + scale * noise) / batch_size
        out.append(noised)
    return out


def _accumulate(total, grads):
    if total is None:
        return [None if lg is None else {k: v.copy() for k, v in lg.items()} for lg in grads]
    for acc, lg in zip(total, grads):
        if lg is None:
            continue
        for name, g in lg.items():
            acc[name] += g
    return total


def dp_sgd_train(train_set: Dataset, cfg: TrainConfig, dp: DpConfig, val_set: Dataset | None = None):
    """Train under DP-SGD; returns (TrainResult, PrivacyReport)."""
    spec = TaskSpec(input_shape=train_set.image_shape, num_classes=train_set.num_classes, depth=cfg.depth)
    net = build_network(spec, cfg.seed, dtype=cfg.np_dtype)
    opt = AmsGrad(net, lr=cfg.lr, weight_decay=cfg.weight_decay)
    shuffle_rng = rngmod.spawn(cfg.seed, rngmod.SHUFFLE)
    noise_rng = rngmod.spawn(cfg.seed, rngmod.DP_NOISE)

    n = len(train_set)
    num_classes = train_set.num_classes
    steps = 0
    history = []
    net.train()
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        correct = 0
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            summed = None
            for i in idx:
                x = train_set.images[i : i + 1].astype(cfg.np_dtype)
                targets = one_hot(train_set.labels[i : i + 1], num_classes, cfg.np_dtype)
                result = net.backward(x, targets, reduction="sum")
                if not math.isfinite(float(result.losses[0])):
                    raise TrainingDiverged(f"non-finite loss at epoch {epoch + 1}")
                clipped, _ = clip_gradient(result.param_grads, dp.clip_norm)
                assert flatten_norm(clipped) <= dp.clip_norm + 1e-9
                summed = _accumulate(summed, clipped)
                correct += int(result.posteriors.argmax(axis=1)[0] == train_set.labels[i])
                loss_sum += float(result.losses[0])
            noisy = privatize_gradients(summed, len(idx), dp, noise_rng)
            opt.step(net, noisy)
            steps += 1
        val_acc = accuracy(net, val_set) if val_set is not None else float("nan")
        history.append(EpochStats(train_acc=correct / n, val_acc=val_acc, mean_loss=loss_sum / n))
    net.eval()
    stats = loss_stats(net, train_set)
    dp_full = replace(dp, sample_rate=min(cfg.batch_size / n, 1.0), steps=steps)
    result = TrainResult(
        network=net,
        history=history,
        loss_stats=stats,
        train_acc=accuracy(net, train_set),
        val_acc=accuracy(net, val_set) if val_set is not None else float("nan"),
        epochs_run=cfg.epochs,
        mechanisms=[("dp_sgd", dp.noise_multiplier)],
    )
    return result, rdp_epsilon(dp_full)


def rdp_subsampled_gaussian(q, sigma, order):
    """Per-step RDP of the subsampled Gaussian mechanism at one order.

    Fractional orders are bounded by the next integer in both branches;
    keeping the bound uniform preserves monotonicity of epsilon in q.
    """
    if sigma <= 0:
        return math.inf
    alpha = int(math.ceil(order))
    if q == 1.0:
        return alpha / (2.0 * sigma**2)
    i = np.arange(alpha + 1, dtype=np.float64)
    log_binom = gammaln(alpha + 1) - gammaln(i + 1) - gammaln(alpha - i + 1)
    log_terms = log_binom + i * math.log(q) + (alpha - i) * math.log1p(-q) + i * (i - 1) / (2.0 * sigma**2)
    log_a = float(logsumexp(log_terms))
    return max(log_a / (alpha - 1), 0.0) if alpha > 1 else math.inf


def rdp_epsilon(dp: DpConfig, orders=DEFAULT_ORDERS) -> PrivacyReport:
    """Compose per-step RDP over the executed steps; convert at the best order."""
    if dp.sample_rate is None or dp.steps is None:
        raise ValueError("sample_rate and steps are required for accounting")
    curve = []
    best_eps = math.inf
    best_order = None
    for order in orders:
        if order <= 1:
            continue
        total = dp.steps * rdp_subsampled_gaussian(dp.sample_rate, dp.noise_multiplier, order)
        curve.append((order, total))
        if math.isfinite(total):
            eps = total + math.log(1.0 / dp.delta) / (order - 1)
            if eps < best_eps:
                best_eps, best_order = eps, order
    if best_order is None:
        # every order diverged; report +inf rather than guessing
        return PrivacyReport(
            epsilon=math.inf,
            delta=dp.delta,
            alpha_star=None,
            rdp_curve=curve,
            noise_multiplier=dp.noise_multiplier,
            clip_norm=dp.clip_norm,
            sample_rate=dp.sample_rate,
            steps=dp.steps,
        )
    return PrivacyReport(
        epsilon=best_eps,
        delta=dp.delta,
        alpha_star=best_order,
        rdp_curve=curve,
        noise_multiplier=dp.noise_multiplier,
        clip_norm=dp.clip_norm,
        sample_rate=dp.sample_rate,
        steps=dp.steps,
    )
