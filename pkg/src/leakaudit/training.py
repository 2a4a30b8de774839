"""The training loop, mechanism application, and post-training loss stats."""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngmod
from .data import Dataset
from .nn import AmsGrad, Network, NonFiniteError, TaskSpec, build_network, cross_entropy, one_hot
from .regularizers import RegularizerSpec, distill_targets, perturb_gaussian, random_crop, smooth_labels


class TrainingDiverged(RuntimeError):
    """Training hit a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    depth: int = 4
    epochs: int = 30
    lr: float = 2e-4
    batch_size: int = 128
    weight_decay: float = 1e-6  # default coupled-L2 coefficient
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be 'float32' or 'float64'")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)


@dataclass
class LossStats:
    per_sample: np.ndarray
    mean: float
    median: float  # lower middle for even counts


@dataclass
class EpochStats:
    train_acc: float  # running accuracy over the epoch's (transformed) batches
    val_acc: float
    mean_loss: float


@dataclass
class TrainResult:
    network: Network
    history: list
    loss_stats: LossStats
    train_acc: float  # clean training accuracy, inference mode, after training
    val_acc: float
    epochs_run: int
    mechanisms: list = field(default_factory=list)


def lower_median(values):
    """Exact median; the lower of the two middles for even counts."""
    ordered = np.sort(np.asarray(values))
    if len(ordered) == 0:
        raise ValueError("median of empty sequence")
    return float(ordered[(len(ordered) - 1) // 2])


def evaluate_losses(net, dataset, batch_size=256):
    """Per-sample cross-entropy on ``dataset`` in inference mode."""
    was_training = net.train_mode
    net.eval()
    losses = []
    for start in range(0, len(dataset), batch_size):
        x = dataset.images[start : start + batch_size].astype(net.dtype)
        probs = net.forward(x)
        targets = one_hot(dataset.labels[start : start + batch_size], net.num_classes, net.dtype)
        per_sample, _ = cross_entropy(probs, targets)
        losses.append(per_sample)
    if was_training:
        net.train()
    return np.concatenate(losses)


def loss_stats(net, dataset, batch_size=256):
    per_sample = evaluate_losses(net, dataset, batch_size)
    return LossStats(per_sample=per_sample, mean=float(per_sample.mean()), median=lower_median(per_sample))


def accuracy(net, dataset, batch_size=256):
    was_training = net.train_mode
    net.eval()
    correct = 0
    for start in range(0, len(dataset), batch_size):
        x = dataset.images[start : start + batch_size].astype(net.dtype)
        correct += int((net.predict(x) == dataset.labels[start : start + batch_size]).sum())
    if was_training:
        net.train()
    return correct / len(dataset)


def _normalize_mechanisms(reg):
    if isinstance(reg, RegularizerSpec):
        regs = [reg]
    else:
        regs = list(reg)
    regs = [r for r in regs if r.mechanism != "none"] or [RegularizerSpec("none")]
    names = [r.mechanism for r in regs if r.mechanism != "none"]
    if len(names) != len(set(names)):
        raise ValueError(f"duplicate mechanisms in {names}")
    return regs


def train_model(train_set: Dataset, reg, cfg: TrainConfig, val_set: Dataset | None = None, teacher=None) -> TrainResult:
    """Train a classifier on ``train_set`` under the given mechanism(s).

    ``reg`` is one RegularizerSpec or a sequence of them (mechanism pairs
    are applied simultaneously in the one loop). Distillation first trains
    a teacher of the same architecture without regularization, on a seed
    derived from ``cfg.seed`` (pass ``teacher`` to supply one instead);
    the student then learns from the teacher's temperature-softened
    posteriors only. Data perturbations apply noise before cropping, and
    teacher targets are computed on the perturbed inputs; label smoothing
    applies to whatever target the other rules produced.
    """
    regs = _normalize_mechanisms(reg)
    by_name = {r.mechanism: r.value for r in regs if r.mechanism != "none"}

    temperature = by_name.get("distillation")
    alpha = by_name.get("label_smoothing")
    sigma = by_name.get("gaussian_noise")
    crop = by_name.get("random_crop")
    dropout = by_name.get("dropout", 0.0)
    spatial = by_name.get("spatial_dropout", 0.0)
    decay = by_name.get("weight_decay", cfg.weight_decay)
    stop_epoch = by_name.get("early_stop")
    epochs_run = min(cfg.epochs, int(stop_epoch)) if stop_epoch else cfg.epochs

    if temperature is None:
        teacher = None
    elif teacher is None:
        teacher_cfg = replace(cfg, seed=rngmod.derive_seed(cfg.seed, rngmod.TEACHER))
        teacher = train_model(train_set, RegularizerSpec("none"), teacher_cfg, val_set=None).network
        teacher.eval()
    else:
        teacher.eval()

    spec = TaskSpec(
        input_shape=train_set.image_shape,
        num_classes=train_set.num_classes,
        depth=cfg.depth,
        dropout=dropout,
        spatial_dropout=spatial,
    )
    net = build_network(spec, cfg.seed, dtype=cfg.np_dtype)
    opt = AmsGrad(net, lr=cfg.lr, weight_decay=decay)

    shuffle_rng = rngmod.spawn(cfg.seed, rngmod.SHUFFLE)
    dropout_rng = rngmod.spawn(cfg.seed, rngmod.DROPOUT)
    noise_rng = rngmod.spawn(cfg.seed, rngmod.NOISE)
    crop_rng = rngmod.spawn(cfg.seed, rngmod.CROP)

    n = len(train_set)
    num_classes = train_set.num_classes
    history = []
    net.train()
    for epoch in range(epochs_run):
        order = shuffle_rng.permutation(n)
        correct = 0
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x = train_set.images[idx].astype(cfg.np_dtype)
            y = train_set.labels[idx]
            if sigma is not None:
                x = perturb_gaussian(x, sigma, noise_rng)
            if crop is not None:
                x = random_crop(x, crop, crop_rng)
            if teacher is not None:
                targets = distill_targets(teacher, x, temperature)
            else:
                targets = one_hot(y, num_classes, cfg.np_dtype)
            if alpha is not None:
                targets = smooth_labels(targets, alpha, num_classes)
            try:
                result = net.backward(x, targets, temperature=temperature or 1.0, rng=dropout_rng)
            except NonFiniteError as exc:
                raise TrainingDiverged(f"epoch {epoch + 1}, batch {start // cfg.batch_size}: {exc}") from exc
            if not math.isfinite(float(result.losses.sum())):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch + 1}, batch {start // cfg.batch_size}")
            opt.step(net, result.param_grads)
            correct += int((result.posteriors.argmax(axis=1) == y).sum())
            loss_sum += float(result.losses.sum())
        val_acc = accuracy(net, val_set) if val_set is not None else float("nan")
        history.append(EpochStats(train_acc=correct / n, val_acc=val_acc, mean_loss=loss_sum / n))
    net.eval()
    stats = loss_stats(net, train_set)
    return TrainResult(
        network=net,
        history=history,
        loss_stats=stats,
        train_acc=accuracy(net, train_set),
        val_acc=accuracy(net, val_set) if val_set is not None else float("nan"),
        epochs_run=epochs_run,
        mechanisms=[(r.mechanism, r.value) for r in regs],
    )
