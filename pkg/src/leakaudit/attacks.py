"""Membership-inference attacks and the adversary-advantage metric.

Yeom: a sample is called a member when its loss is strictly below the
victim's mean training loss (ties are non-members). Salem: a small binary
classifier learns membership from the victim's sorted posterior vector.
Both report inference accuracy Inf on a balanced eval set and the
advantage Adv = 2 * (Inf - 0.5).
"""

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .data import MiaEvalSet
from .nn import AmsGrad, Dense, Network, Relu, cross_entropy, one_hot


@dataclass
class AttackReport:
    attack: str
    inf: float
    adv: float
    n_eval: int
    decisions: np.ndarray

    def __post_init__(self):
        if abs(self.adv - (2.0 * self.inf - 1.0)) > 1e-12:
            raise ValueError("advantage must equal 2*Inf - 1")


def advantage(decisions, truths, attack="") -> AttackReport:
    """Score membership decisions against a balanced truth vector."""
    decisions = np.asarray(decisions).astype(bool)
    truths = np.asarray(truths).astype(bool)
    if decisions.shape != truths.shape:
        raise ValueError("decisions and truths differ in length")
    if truths.sum() * 2 != truths.size:
        raise ValueError("eval set is unbalanced; this signals a harness bug")
    inf = float((decisions == truths).mean())
    return AttackReport(attack=attack, inf=inf, adv=2.0 * inf - 1.0, n_eval=truths.size, decisions=decisions)


def victim_losses(victim, images, labels, batch_size=256):
    """Per-sample cross-entropy of the victim on original labels, inference mode."""
    was_training = victim.train_mode
    victim.eval()
    out = []
    for start in range(0, len(images), batch_size):
        x = images[start : start + batch_size].astype(victim.dtype)
        probs = victim.forward(x)
        targets = one_hot(labels[start : start + batch_size], victim.num_classes, victim.dtype)
        per_sample, _ = cross_entropy(probs, targets)
        out.append(per_sample)
    if was_training:
        victim.train()
    return np.concatenate(out)


def yeom_decisions(losses, mean_train_loss):
    """Member iff loss < mean training loss (strict; equality is non-member)."""
    return np.asarray(losses) < mean_train_loss


def yeom_infer(victim, stats, x, y) -> bool:
    """Single-sample membership decision from the loss-threshold rule."""
    loss = victim_losses(victim, x[None], np.asarray([y]))[0]
    return bool(loss < stats.mean)


def yeom_attack(victim, stats, eval_set: MiaEvalSet) -> AttackReport:
    images, labels, membership = eval_set.eval_samples
    decisions = yeom_decisions(victim_losses(victim, images, labels), stats.mean)
    return advantage(decisions, membership, attack="yeom")


def sorted_posterior_features(posteriors, k=3):
    """Rows sorted descending, truncated or zero-padded to length k."""
    posteriors = np.asarray(posteriors)
    ordered = -np.sort(-posteriors, axis=1)
    if ordered.shape[1] >= k:
        return ordered[:, :k]
    padded = np.zeros((ordered.shape[0], k), dtype=ordered.dtype)
    padded[:, : ordered.shape[1]] = ordered
    return padded


class SalemAttacker:
    """One-hidden-layer (64 unit) binary net over sorted top-k posteriors.

    Trained 50 epochs at lr 1e-3 (AMSGrad, batch 32). The two-way softmax
    output is thresholded at 0.5; the boundary counts as a member.
    """

    def __init__(self, k=3, seed=0, hidden=64, epochs=50, lr=1e-3, batch_size=32):
        self.k = k
        self.seed = seed
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.net = Network(
            layers=[Dense(hidden), Relu(), Dense(2)],
            input_shape=(k,),
            num_classes=2,
            dtype=np.float32,
        )
        gen = rngmod.spawn(seed, rngmod.ATTACK)
        shape = (k,)
        for layer in self.net.layers:
            shape = layer.build(shape, gen, self.net.dtype)
        self.history = []

    def fit(self, features, membership):
        features = np.asarray(features, dtype=np.float32)
        membership = np.asarray(membership).astype(np.int64)
        if features.ndim != 2 or features.shape[1] != self.k:
            raise ValueError(f"features must be (n, {self.k}), got {features.shape}")
        classes = np.unique(membership)
        if len(classes) < 2:
            raise ValueError("attacker training set holds a single membership class")
        opt = AmsGrad(self.net, lr=self.lr, weight_decay=0.0)
        shuffle = rngmod.spawn(self.seed, rngmod.SHUFFLE)
        targets_all = one_hot(membership, 2, np.float32)
        self.net.train()
        for _ in range(self.epochs):
            order = shuffle.permutation(len(features))
            correct = 0
            for start in range(0, len(features), self.batch_size):
                idx = order[start : start + self.batch_size]
                result = self.net.backward(features[idx], targets_all[idx])
                opt.step(self.net, result.param_grads)
                correct += int((result.posteriors.argmax(axis=1) == membership[idx]).sum())
            self.history.append(correct / len(features))
        self.net.eval()
        return self

    def predict(self, features):
        """Membership decisions for sorted-posterior feature rows."""
        probs = self.net.forward(np.asarray(features, dtype=np.float32))
        return probs[:, 1] >= 0.5

    def training_accuracy(self, features, membership):
        return float((self.predict(features) == np.asarray(membership).astype(bool)).mean())


def salem_train(victim, eval_set: MiaEvalSet, k=3, seed=0) -> SalemAttacker:
    """Fit the Salem attacker on the eval set's attacker-train partition."""
    images, labels, membership = eval_set.attacker_samples
    if len(images) == 0:
        raise ValueError("attacker training set is empty")
    features = sorted_posterior_features(_eval_posteriors(victim, images), k)
    return SalemAttacker(k=k, seed=seed).fit(features, membership)


def _eval_posteriors(victim, images, batch_size=256):
    was_training = victim.train_mode
    victim.eval()
    probs = np.concatenate(
        [victim.forward(images[s : s + batch_size].astype(victim.dtype)) for s in range(0, len(images), batch_size)]
    )
    if was_training:
        victim.train()
    return probs


def salem_infer(attacker: SalemAttacker, victim, x):
    """Membership decision(s) for raw input sample(s)."""
    x = np.asarray(x)
    if x.ndim == len(victim.input_shape):
        x = x[None]
    features = sorted_posterior_features(_eval_posteriors(victim, x), attacker.k)
    return attacker.predict(features)


def salem_attack(attacker: SalemAttacker, victim, eval_set: MiaEvalSet) -> AttackReport:
    images, _, membership = eval_set.eval_samples
    features = sorted_posterior_features(_eval_posteriors(victim, images), attacker.k)
    return advantage(attacker.predict(features), membership, attack="salem")
