"""Dataset ingestion, synthetic data, and membership-evaluation sets.

Real data comes from the two standard binary containers (IDX for
Fashion-MNIST-style files, the CIFAR-10/100 record format). Pixels are
scaled to [0, 1] by /255 and are otherwise untouched. Synthetic datasets
are Gaussian class blobs, quantized onto the same 1/255 pixel grid so an
IDX round trip is bit-exact.
"""

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataFormatError(ValueError):
    """A data file violates its declared binary format."""


@dataclass
class Dataset:
    images: np.ndarray  # (n, channels, h, w) float32 in [0, 1]
    labels: np.ndarray  # (n,) class ids in [0, num_classes)
    name: str
    num_classes: int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ValueError(f"images must be (n, c, h, w), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images vs {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels out of range")
        if len(self.images) and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")

    def __len__(self):
        return len(self.images)

    @property
    def image_shape(self):
        return tuple(self.images.shape[1:])

    def take(self, indices):
        return Dataset(self.images[indices], self.labels[indices], self.name, self.num_classes)

    def subset(self, n, seed):
        """Class-stratified deterministic subset of size ``n``."""
        if n <= 0 or n > len(self):
            raise ValueError(f"subset size {n} not in [1, {len(self)}]")
        gen = rngmod.spawn(seed, rngmod.SUBSET)
        chosen = []
        per_class = [np.flatnonzero(self.labels == k) for k in range(self.num_classes)]
        quota, extra = divmod(n, self.num_classes)
        # classes with smallest id absorb the remainder, then spill over
        wanted = [quota + (1 if k < extra else 0) for k in range(self.num_classes)]
        shortfall = 0
        pools = []
        for k, idx in enumerate(per_class):
            idx = idx[gen.permutation(len(idx))]
            take = min(wanted[k], len(idx))
            shortfall += wanted[k] - take
            chosen.append(idx[:take])
            pools.append(idx[take:])
        if shortfall:
            leftovers = np.concatenate([p for p in pools if len(p)])
            leftovers = leftovers[gen.permutation(len(leftovers))]
            chosen.append(leftovers[:shortfall])
        indices = np.sort(np.concatenate(chosen))
        return self.take(indices)


def _open_binary(path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(f, count, path, what):
    data = f.read(count)
    if len(data) != count:
        raise DataFormatError(f"{path}: truncated {what}: expected {count} bytes, got {len(data)}")
    return data


def load_idx(images_path, labels_path, name="idx", num_classes=None):
    """Load an IDX image/label file pair into a Dataset."""
    with _open_binary(images_path) as f:
        magic, n, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, images_path, "header"))
        if magic != IDX_IMAGES_MAGIC:
            raise DataFormatError(f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
        raw = _read_exact(f, n * rows * cols, images_path, "pixel payload")
        if f.read(1):
            raise DataFormatError(f"{images_path}: trailing bytes after {n * rows * cols}-byte payload")
    with _open_binary(labels_path) as f:
        magic, n_labels = struct.unpack(">II", _read_exact(f, 8, labels_path, "header"))
        if magic != IDX_LABELS_MAGIC:
            raise DataFormatError(f"{labels_path}: bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
        labels = np.frombuffer(_read_exact(f, n_labels, labels_path, "label payload"), dtype=np.uint8)
    if n != n_labels:
        raise DataFormatError(f"count mismatch: {n} images vs {n_labels} labels")
    images = np.frombuffer(raw, dtype=np.uint8).reshape(n, 1, rows, cols).astype(np.float32) / 255.0
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if n else 10
    return Dataset(images, labels.astype(np.int64), name, num_classes)


def write_idx(dataset, images_path, labels_path):
    """Write a single-channel dataset as an IDX pair (pixels as round(x*255))."""
    n, c, rows, cols = dataset.images.shape
    if c != 1:
        raise ValueError("IDX files hold single-channel images")
    pixels = np.round(dataset.images * 255.0).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def load_cifar(bin_paths, num_classes, name=None):
    """Load CIFAR-10/100 batch files (label byte(s) + 3072 pixel bytes per record)."""
    if num_classes not in (10, 100):
        raise ValueError("CIFAR class count must be 10 or 100")
    label_bytes = 1 if num_classes == 10 else 2  # CIFAR-100: coarse then fine
    record = label_bytes + 3072
    images, labels = [], []
    for path in bin_paths:
        with _open_binary(path) as f:
            raw = f.read()
        if len(raw) % record:
            raise DataFormatError(f"{path}: length {len(raw)} is not a multiple of record size {record}")
        arr = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record)
        labels.append(arr[:, label_bytes - 1].astype(np.int64))  # fine label is the last label byte
        images.append(arr[:, label_bytes:].reshape(-1, 3, 32, 32))
    images = np.concatenate(images).astype(np.float32) / 255.0
    labels = np.concatenate(labels)
    if name is None:
        name = f"cifar{num_classes}"
    return Dataset(images, labels, name, num_classes)


def make_synthetic(n, num_classes, margin, seed, image_shape=(1, 8, 8), name="synthetic"):
    """Gaussian class blobs shaped as images.

    Class means sit ``margin`` standard deviations apart along random
    directions, so margin=10 is linearly separable and margin=0 carries no
    label signal. Classes are balanced within one sample; values land on
    the 1/255 grid so IDX round trips are exact.
    """
    if n < num_classes:
        raise ValueError(f"need at least one sample per class ({n} < {num_classes})")
    if margin < 0:
        raise ValueError("separability margin must be non-negative")
    gen = rngmod.spawn(seed, rngmod.SYNTH)
    dim = int(np.prod(image_shape))
    directions = gen.standard_normal((num_classes, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = directions * margin
    labels = np.arange(n) % num_classes
    flat = means[labels] + gen.standard_normal((n, dim))
    lo, hi = flat.min(), flat.max()
    flat = (flat - lo) / (hi - lo) if hi > lo else np.full_like(flat, 0.5)
    flat = np.round(flat * 255.0) / 255.0
    order = gen.permutation(n)
    images = flat[order].reshape(n, *image_shape).astype(np.float32)
    return Dataset(images, labels[order], name, num_classes)


@dataclass
class MiaEvalSet:
    """Membership-labelled samples split into attacker-train and eval parts.

    ``eval_idx`` indexes an exactly balanced member/non-member set;
    ``attacker_idx`` is disjoint from it and holds the samples the
    adversary may train on (balanced across membership as well).
    """

    images: np.ndarray
    labels: np.ndarray
    membership: np.ndarray  # 1 = was in the victim's training set
    attacker_idx: np.ndarray
    eval_idx: np.ndarray

    def __post_init__(self):
        ev = self.membership[self.eval_idx]
        if ev.sum() * 2 != len(ev):
            raise ValueError("eval set must hold equally many members and non-members")
        if np.intersect1d(self.attacker_idx, self.eval_idx).size:
            raise ValueError("attacker-train and eval sets must be disjoint")

    @property
    def eval_samples(self):
        return self.images[self.eval_idx], self.labels[self.eval_idx], self.membership[self.eval_idx]

    @property
    def attacker_samples(self):
        return self.images[self.attacker_idx], self.labels[self.attacker_idx], self.membership[self.attacker_idx]


def build_mia_eval_set(members, non_members, n_eval, attacker_fraction, seed):
    """Draw a balanced eval set plus a disjoint attacker-train set.

    ``attacker_fraction`` of the smaller pool is drawn from each side (so
    the attacker set is balanced too); ``n_eval`` per side comes from the
    remainder.
    """
    if not 0.0 <= attacker_fraction < 1.0:
        raise ValueError("attacker_fraction must be in [0, 1)")
    gen = rngmod.spawn(seed, rngmod.EVAL_SET)
    perm_s = gen.permutation(len(members))
    perm_d = gen.permutation(len(non_members))
    n_att = int(attacker_fraction * min(len(members), len(non_members)))
    for side, pool in (("member", perm_s), ("non-member", perm_d)):
        if n_att + n_eval > len(pool):
            raise ValueError(
                f"insufficient {side} samples: need {n_att} attacker + {n_eval} eval, have {len(pool)}"
            )
    att_s, eval_s = perm_s[:n_att], perm_s[n_att : n_att + n_eval]
    att_d, eval_d = perm_d[:n_att], perm_d[n_att : n_att + n_eval]
    images = np.concatenate(
        [members.images[att_s], non_members.images[att_d], members.images[eval_s], non_members.images[eval_d]]
    )
    labels = np.concatenate(
        [members.labels[att_s], non_members.labels[att_d], members.labels[eval_s], non_members.labels[eval_d]]
    )
    membership = np.concatenate(
        [np.ones(n_att, np.int64), np.zeros(n_att, np.int64), np.ones(n_eval, np.int64), np.zeros(n_eval, np.int64)]
    )
    return MiaEvalSet(
        images=images,
        labels=labels,
        membership=membership,
        attacker_idx=np.arange(2 * n_att),
        eval_idx=np.arange(2 * n_att, 2 * n_att + 2 * n_eval),
    )
