"""AMSGrad optimizer with coupled L2 weight decay.

The max-of-second-moment variant of ADAM, with bias correction. The decay
term ``weight_decay * w`` is added to each raw gradient before the moment
updates, matching an L2 penalty on the loss.
"""

import numpy as np


class AmsGrad:
    def __init__(self, network, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=1e-6):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {}
        self.v = {}
        self.v_max = {}
        for key, _, arr in self._iter(network):
            self.m[key] = np.zeros_like(arr)
            self.v[key] = np.zeros_like(arr)
            self.v_max[key] = np.zeros_like(arr)

    @staticmethod
    def _iter(network):
        for i, name, arr in network.parameters():
            yield (i, name), name, arr

    def step(self, network, param_grads):
        """Apply one update in place; ``param_grads`` as returned by backward."""
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for (i, name), _, arr in self._iter(network):
            grads = param_grads[i]
            if grads is None:
                raise ValueError(f"missing gradient for layer {i}")
            g = grads[name]
            if g.shape != arr.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {arr.shape}")
            if not np.all(np.isfinite(g)):
                raise ArithmeticError(f"non-finite gradient for layer {i} {name}")
            if self.weight_decay:
                g = g + arr * arr.dtype.type(self.weight_decay)
            key = (i, name)
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * np.square(g)
            np.maximum(self.v_max[key], self.v[key], out=self.v_max[key])
            m_hat = self.m[key] / bc1
            v_hat = self.v_max[key] / bc2
            arr -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(arr.dtype)
