"""Shared fixtures: micro networks, synthetic datasets, optional real data."""

import os

import numpy as np
import pytest

from leakaudit import rng as rngmod
from leakaudit.data import make_synthetic
from leakaudit.nn import Conv, Dense, Dropout, Flatten, MaxPool, Network, Relu, SpatialDropout


def assemble_net(layers, input_shape, num_classes, seed=0, dtype=np.float64):
    """Build a hand-assembled network (used for micro-net tests)."""
    net = Network(layers=list(layers), input_shape=tuple(input_shape), num_classes=num_classes, dtype=np.dtype(dtype))
    gen = rngmod.spawn(seed, rngmod.INIT)
    shape = tuple(input_shape)
    for layer in net.layers:
        shape = layer.build(shape, gen, net.dtype)
    assert shape == (num_classes,), f"net ends at {shape}"
    return net


def micro_conv_net(seed=0, dtype=np.float64, dropout=None, spatial=None):
    """Small conv/pool/fc stack, well under 5k parameters."""
    layers = [Conv(3), Relu()]
    if dropout is not None:
        layers.append(Dropout(dropout))
    if spatial is not None:
        layers.append(SpatialDropout(spatial))
    layers += [MaxPool(), Conv(4), Relu(), MaxPool(), Flatten(), Dense(8), Relu(), Dense(3)]
    return assemble_net(layers, (1, 8, 8), 3, seed=seed, dtype=dtype)


def linear_net(seed=0, dtype=np.float64, in_features=12, num_classes=4):
    return assemble_net([Dense(num_classes)], (in_features,), num_classes, seed=seed, dtype=dtype)


@pytest.fixture(scope="session")
def blobs():
    """Separable synthetic dataset shared by attack/metric tests."""
    return make_synthetic(400, 5, margin=4.0, seed=11)


@pytest.fixture(scope="session")
def blobs_val():
    return make_synthetic(400, 5, margin=4.0, seed=12)


def fashion_mnist_dir():
    """Directory holding the Fashion-MNIST IDX files, or None."""
    candidates = [os.environ.get("FASHION_MNIST_DIR"), os.environ.get("LEAKAUDIT_DATA"), "data"]
    names = ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"]
    for base in candidates:
        if not base:
            continue
        for root in (os.path.join(base, "fashion-mnist"), base):
            if all(os.path.exists(os.path.join(root, n)) or os.path.exists(os.path.join(root, n + ".gz")) for n in names):
                return base
    return None


def require_fashion_mnist():
    base = fashion_mnist_dir()
    if base is None:
        pytest.skip(
            "Fashion-MNIST IDX files not found: place train-images-idx3-ubyte, train-labels-idx1-ubyte, "
            "t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte (optionally .gz) under $FASHION_MNIST_DIR, "
            "$LEAKAUDIT_DATA, or ./data[/fashion-mnist]"
        )
    return base
