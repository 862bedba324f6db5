"""SGD and Adam with the conventional update rules.

The learning rate is a plain mutable attribute: rescaling it between
epochs is the only lever the training controller pulls.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError


class Optimizer:
    """Parameter updater for a Model; kind is "sgd" or "adam".

    SGD follows the momentum-buffer convention (buf = m*buf + g;
    p -= lr*buf) and Adam the bias-corrected moment estimates with
    defaults beta=(0.9, 0.999), eps=1e-8. Weight decay is plain L2
    added to the gradient. Moment buffers are allocated lazily and
    always match parameter shapes.
    """

    def __init__(self, kind: str = "sgd", lr: float = 0.1, momentum: float = 0.0,
                 weight_decay: float = 0.0, betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8):
        if kind not in ("sgd", "adam"):
            raise ConfigError(f"optimizer kind must be 'sgd' or 'adam', got {kind!r}")
        if lr < 0:
            raise ConfigError(f"learning rate must be non-negative, got {lr}")
        self.kind = kind
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.betas = (float(betas[0]), float(betas[1]))
        self.eps = float(eps)
        self._buffers: dict = {}
        self._t = 0

    def step(self, model) -> None:
        self._t += 1
        for idx, params, grads in model.trainable():
            for name, p in params.items():
                g = grads[name]
                if g.shape != p.shape:
                    raise ConfigError(
                        f"gradient shape {g.shape} != parameter shape {p.shape} "
                        f"at layer {idx}/{name}"
                    )
                if self.weight_decay:
                    g = g + self.weight_decay * p
                key = (idx, name)
                if self.kind == "sgd":
                    if self.momentum:
                        buf = self._buffers.get(key)
                        if buf is None:
                            buf = np.zeros_like(p)
                        buf = self.momentum * buf + g
                        self._buffers[key] = buf
                        g = buf
                    p -= self.lr * g
                else:
                    m, v = self._buffers.get(key, (np.zeros_like(p), np.zeros_like(p)))
                    b1, b2 = self.betas
                    m = b1 * m + (1.0 - b1) * g
                    v = b2 * v + (1.0 - b2) * g * g
                    self._buffers[key] = (m, v)
                    m_hat = m / (1.0 - b1 ** self._t)
                    v_hat = v / (1.0 - b2 ** self._t)
                    p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
