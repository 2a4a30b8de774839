"""VGG-style classifier builders.

The depth of a task names its weight-layer count (convolutions plus
fully-connected layers). The concrete plans:

  depth 4:  conv32, pool, conv64, pool, fc128, fcK
  depth 7:  conv32, conv32, pool, conv64, conv64, pool, fc512, fc128, fcK
  depth 9:  conv32, conv32, pool, conv64, conv64, pool, conv128, conv128,
            pool, fc512, fc128, fcK

ReLU follows every conv and hidden fc; optional (spatial) dropout follows
each conv activation. Parameters are Kaiming-uniform, deterministic per
seed.
"""

from dataclasses import dataclass

import numpy as np

from .. import rng as rngmod
from .layers import Conv, Dense, Dropout, Flatten, MaxPool, Relu, SpatialDropout
from .network import Network

_PLANS = {
    4: ([("conv", 32), ("pool",), ("conv", 64), ("pool",)], [128]),
    7: ([("conv", 32), ("conv", 32), ("pool",), ("conv", 64), ("conv", 64), ("pool",)], [512, 128]),
    9: (
        [
            ("conv", 32),
            ("conv", 32),
            ("pool",),
            ("conv", 64),
            ("conv", 64),
            ("pool",),
            ("conv", 128),
            ("conv", 128),
            ("pool",),
        ],
        [512, 128],
    ),
}


@dataclass(frozen=True)
class TaskSpec:
    """Architecture request: input geometry, class count, and depth."""

    input_shape: tuple  # (channels, height, width)
    num_classes: int
    depth: int
    dropout: float = 0.0
    spatial_dropout: float = 0.0

    def __post_init__(self):
        if self.depth not in _PLANS:
            raise ValueError(f"unsupported depth {self.depth}; choose one of {sorted(_PLANS)}")
        if len(self.input_shape) != 3 or any(d <= 0 for d in self.input_shape):
            raise ValueError(f"input shape must be (channels, h, w) positive, got {self.input_shape}")
        for name, rate in (("dropout", self.dropout), ("spatial_dropout", self.spatial_dropout)):
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {rate}")
        if self.num_classes < 2:
            raise ValueError("need at least two classes")


def build_network(spec: TaskSpec, seed: int, dtype=np.float32) -> Network:
    """Instantiate and deterministically initialize the network for ``spec``."""
    feature_plan, hidden_fc = _PLANS[spec.depth]
    layers = []
    for op in feature_plan:
        if op[0] == "conv":
            layers.append(Conv(op[1]))
            layers.append(Relu())
            if spec.dropout > 0:
                layers.append(Dropout(spec.dropout))
            if spec.spatial_dropout > 0:
                layers.append(SpatialDropout(spec.spatial_dropout))
        else:
            layers.append(MaxPool())
    layers.append(Flatten())
    for width in hidden_fc:
        layers.append(Dense(width))
        layers.append(Relu())
    layers.append(Dense(spec.num_classes))

    net = Network(layers=layers, input_shape=tuple(spec.input_shape), num_classes=spec.num_classes, dtype=dtype)
    init_rng = rngmod.spawn(seed, rngmod.INIT)
    shape = tuple(spec.input_shape)
    shapes = [shape]
    for layer in layers:
        shape = layer.build(shape, init_rng, net.dtype)
        shapes.append(shape)
    net.layer_shapes = shapes
    if shape != (spec.num_classes,):
        raise AssertionError(f"plan ended with shape {shape}, expected ({spec.num_classes},)")
    if net.weight_layer_count != spec.depth:
        raise AssertionError(f"plan has {net.weight_layer_count} weight layers, declared depth {spec.depth}")
    return net
