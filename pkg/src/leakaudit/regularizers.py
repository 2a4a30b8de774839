"""The eight regularization mechanisms and their input/label transforms.

Mechanism names and hyperparameter ranges:

  distillation     T      1      .. 100
  label_smoothing  alpha  0.01   .. 0.99
  gaussian_noise   sigma  0.01   .. 0.25
  random_crop      c      1      .. 24   (integer)
  dropout          p      0.05   .. 0.95
  spatial_dropout  q      0.05   .. 0.95
  weight_decay     lambda 1e-6   .. 0.5
  early_stop       E      1      .. 30   (integer)

`none` is the unregularized baseline. Architectural mechanisms (dropout,
spatial_dropout) are consumed when the network is built; optimization
mechanisms (weight_decay, early_stop) parameterise the training loop; the
rest transform labels or inputs per batch.
"""

from dataclasses import dataclass

import numpy as np

HYPERPARAMETER_RANGES = {
    "distillation": (1.0, 100.0),
    "label_smoothing": (0.01, 0.99),
    "gaussian_noise": (0.01, 0.25),
    "random_crop": (1, 24),
    "dropout": (0.05, 0.95),
    "spatial_dropout": (0.05, 0.95),
    "weight_decay": (1e-6, 0.5),
    "early_stop": (1, 30),
}
INTEGER_VALUED = {"random_crop", "early_stop"}
MECHANISMS = ("none",) + tuple(HYPERPARAMETER_RANGES)


@dataclass(frozen=True)
class RegularizerSpec:
    """One mechanism choice with its single hyperparameter."""

    mechanism: str
    value: float = 0.0

    def __post_init__(self):
        if self.mechanism == "none":
            return
        if self.mechanism not in HYPERPARAMETER_RANGES:
            raise ValueError(f"unknown mechanism {self.mechanism!r}; known: {', '.join(MECHANISMS)}")
        lo, hi = HYPERPARAMETER_RANGES[self.mechanism]
        if not lo <= self.value <= hi:
            raise ValueError(f"{self.mechanism} value {self.value} outside [{lo}, {hi}]")
        if self.mechanism in INTEGER_VALUED and self.value != int(self.value):
            raise ValueError(f"{self.mechanism} takes an integer value, got {self.value}")

    def describe(self):
        return "none" if self.mechanism == "none" else f"{self.mechanism}={self.value:g}"


def smooth_labels(targets, alpha, num_classes):
    """Szegedy smoothing: (1 - alpha) * targets + alpha / K on every class."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"smoothing alpha must be in [0, 1], got {alpha}")
    targets = np.asarray(targets)
    return (1.0 - alpha) * targets + alpha / num_classes


def distill_targets(teacher, x, temperature):
    """Teacher posteriors softened at ``temperature`` (softmax of logits / T)."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if teacher.train_mode:
        raise ValueError("teacher must be in inference mode")
    from .nn.network import softmax

    return softmax(teacher.forward_logits(x) / teacher.dtype.type(temperature))


def perturb_gaussian(batch, sigma, gen):
    """Fresh iid pixel noise N(0, sigma^2), clamped back to [0, 1]."""
    if sigma < 0:
        raise ValueError(f"noise sigma must be non-negative, got {sigma}")
    noise = gen.standard_normal(batch.shape).astype(batch.dtype)
    return np.clip(batch + batch.dtype.type(sigma) * noise, 0.0, 1.0)


def pad_and_crop(batch, offsets, crop):
    """Zero-pad ``crop`` pixels per side, then cut one HxW window per image.

    ``offsets`` are (row, col) window origins in the padded image, each in
    [0, 2*crop].
    """
    b, c, h, w = batch.shape
    offsets = np.asarray(offsets)
    if offsets.shape != (b, 2):
        raise ValueError(f"need one (row, col) offset per image, got {offsets.shape}")
    if offsets.min() < 0 or offsets.max() > 2 * crop:
        raise ValueError(f"offsets must lie in [0, {2 * crop}]")
    padded = np.pad(batch, ((0, 0), (0, 0), (crop, crop), (crop, crop)))
    out = np.empty_like(batch)
    for i, (r, col) in enumerate(offsets):
        out[i] = padded[i, :, r : r + h, col : col + w]
    return out


def random_crop(batch, crop, gen):
    """Pad-then-crop augmentation with per-image uniform offsets."""
    crop = int(crop)
    if crop < 1:
        raise ValueError(f"crop padding must be >= 1, got {crop}")
    offsets = gen.integers(0, 2 * crop + 1, size=(batch.shape[0], 2))
    return pad_and_crop(batch, offsets, crop)
