"""Finite-difference verification of backpropagated gradients."""

import numpy as np

from .network import cross_entropy, softmax


def _mean_loss(net, x, targets):
    probs = softmax(net.forward_logits(x))
    _, mean = cross_entropy(probs, targets)
    return mean


def gradient_check(net, x, targets, step=1e-5):
    """Worst relative error between backprop and central differences.

    Perturbs every parameter entry by +-step. Requires a float64 network;
    reports the error (never raises on mismatch). The denominator is
    floored at 1 so near-zero gradients compare absolutely.
    """
    if net.dtype != np.dtype(np.float64):
        raise ValueError("gradient_check requires a float64 network")
    x = np.asarray(x, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    result = net.backward(x, targets, reduction="mean")
    worst = 0.0
    for i, name, arr in net.parameters():
        analytic = result.param_grads[i][name]
        flat = arr.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            up = _mean_loss(net, x, targets)
            flat[idx] = orig - step
            down = _mean_loss(net, x, targets)
            flat[idx] = orig
            numeric = (up - down) / (2.0 * step)
            a = analytic.reshape(-1)[idx]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if err > worst:
                worst = err
    return worst
