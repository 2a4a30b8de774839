from .build import TaskSpec, build_network
from .gradcheck import gradient_check
from .layers import Conv, Dense, Dropout, Flatten, MaxPool, Relu, SpatialDropout
from .network import BackwardResult, Network, NonFiniteError, cross_entropy, one_hot, softmax
from .optim import AmsGrad

__all__ = [
    "AmsGrad",
    "BackwardResult",
    "Conv",
    "Dense",
    "Dropout",
    "Flatten",
    "MaxPool",
    "Network",
    "NonFiniteError",
    "Relu",
    "SpatialDropout",
    "TaskSpec",
    "build_network",
    "cross_entropy",
    "gradient_check",
    "one_hot",
    "softmax",
]
