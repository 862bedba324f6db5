"""Model assembly, probed forward passes, training steps and evaluation.

A model is an ordered stack of layers ending in a dense classification
head whose logits feed a softmax cross-entropy loss. Probe points are
registered automatically on every ReLU output and on the head's softmax
output; a probed "neuron" is one output unit of a flat layer or one
output channel of a convolutional layer (spatial positions are folded
into the sample axis).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NumericError
from .layers import Conv2d, Dense, Flatten, ReLU, cross_entropy, softmax


@dataclass(frozen=True)
class ProbePoint:
    """One capture site: ``n_neurons`` rows are recorded at layer ``layer_index``."""

    layer_index: int      # index into Model.layers; -1 marks the softmax head
    kind: str             # "relu" or "softmax"
    n_neurons: int
    per_channel: bool     # True when the site sees (b, c, h, w) activations


@dataclass(frozen=True)
class ProbeCapture:
    """Post-activation outputs for every probed neuron over one batch.

    ``outputs[k]`` has shape (n_neurons, vector_len) for probe point k;
    row order follows the model's probe registry and is stable across
    epochs for a fixed architecture and a fixed batch size.
    """

    outputs: tuple[np.ndarray, ...]

    @property
    def n_neurons(self) -> int:
        return sum(o.shape[0] for o in self.outputs)


def _capture_site(act: np.ndarray, per_channel: bool) -> np.ndarray:
    if per_channel:
        b, c = act.shape[0], act.shape[1]
        # (b, c, h, w) -> (c, b*h*w): spatial positions join the sample axis
        return act.reshape(b, c, -1).transpose(1, 0, 2).reshape(c, -1).copy()
    return act.T.copy()


class Model:
    """Layer stack with deterministic parameters and a probe registry."""

    def __init__(self, layers: list, input_shape: tuple[int, ...], seed: int):
        self.layers = layers
        self.input_shape = tuple(int(d) for d in input_shape)
        self.seed = int(seed)

        shape = self.input_shape
        shapes = [shape]
        for idx, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except ConfigError as exc:
                prev = self.layers[idx - 1].name if idx else "input"
                raise ConfigError(f"layer {idx} ({layer.name}) after {prev}: {exc}") from exc
            shapes.append(shape)
        if not isinstance(self.layers[-1], Dense):
            raise ConfigError("architecture must end in a dense classification head")
        if len(shape) != 1:
            raise ConfigError(f"head output must be flat, got shape {shape}")
        self.n_classes = shape[0]
        self._shapes = shapes

        probes = []
        for idx, layer in enumerate(self.layers):
            if isinstance(layer, ReLU):
                out = shapes[idx + 1]
                per_channel = len(out) == 3
                probes.append(ProbePoint(idx, "relu", out[0], per_channel))
        probes.append(ProbePoint(-1, "softmax", self.n_classes, False))
        self.probe_points = tuple(probes)

        rng = np.random.default_rng(self.seed)
        for layer in self.layers:
            layer.init_params(rng)

    @property
    def n_probed_neurons(self) -> int:
        return sum(p.n_neurons for p in self.probe_points)

    def n_parameters(self) -> int:
        return sum(p.size for layer in self.layers for p in layer.params.values())

    def trainable(self):
        """Yield (key, params, grads) per trainable layer, in stack order."""
        for idx, layer in enumerate(self.layers):
            if layer.params:
                yield idx, layer.params, layer.grads

    def forward(self, batch: np.ndarray, capture_probes: bool = False):
        """Run the stack on ``batch``.

        Returns (logits, probabilities, capture) where ``capture`` is a
        ProbeCapture when requested and None otherwise. Raises
        NumericError on the first non-finite activation.
        """
        x = np.asarray(batch, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ConfigError(
                f"batch shape {x.shape[1:]} does not match input shape {self.input_shape}"
            )
        captured = [] if capture_probes else None
        probe_iter = iter(p for p in self.probe_points if p.kind == "relu")
        next_probe = next(probe_iter, None)
        for idx, layer in enumerate(self.layers):
            x = layer.forward(x)
            if not np.isfinite(x).all():
                raise NumericError(f"non-finite activation at layer {idx} ({layer.name})")
            if captured is not None and next_probe is not None and next_probe.layer_index == idx:
                captured.append(_capture_site(x, next_probe.per_channel))
                next_probe = next(probe_iter, None)
        logits = x
        probs = softmax(logits)
        if captured is not None:
            captured.append(_capture_site(probs, False))
            return logits, probs, ProbeCapture(tuple(captured))
        return logits, probs, None


def _parse_mlp_spec(spec: str) -> tuple[list, tuple[int, ...]]:
    body = spec.split(":", 1)[1]
    try:
        widths = [int(w) for w in body.replace(",", "-").split("-") if w]
    except ValueError:
        raise ConfigError(f"cannot parse mlp widths from {spec!r}") from None
    if len(widths) < 2:
        raise ConfigError(f"mlp spec needs at least input and output widths: {spec!r}")
    layers: list = []
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        layers.append(Dense(a, b))
        if i < len(widths) - 2:
            layers.append(ReLU())
    return layers, (widths[0],)


def _layers_from_dicts(descs: list[dict], input_shape: tuple[int, ...]) -> list:
    layers: list = []
    shape = tuple(input_shape)
    for i, desc in enumerate(descs):
        kind = desc.get("kind")
        if kind == "dense":
            if len(shape) != 1:
                raise ConfigError(
                    f"layer {i}: dense after non-flat shape {shape}; insert a flatten layer"
                )
            layers.append(Dense(shape[0], int(desc["out"])))
        elif kind == "conv":
            if len(shape) != 3:
                raise ConfigError(f"layer {i}: conv needs (c, h, w) input, has {shape}")
            layers.append(Conv2d(shape[0], int(desc["out_channels"]), int(desc["kernel"]),
                                 int(desc.get("stride", 1)), int(desc.get("pad", 0))))
        elif kind == "relu":
            layers.append(ReLU())
        elif kind == "flatten":
            layers.append(Flatten())
        else:
            raise ConfigError(f"layer {i}: unknown layer kind {kind!r}")
        shape = layers[-1].output_shape(shape)
    return layers


def build_model(arch_spec, seed: int = 0, input_shape: tuple[int, ...] | None = None) -> Model:
    """Build a model from an architecture description.

    ``arch_spec`` is either the string shorthand ``"mlp:IN-H1-...-OUT"``
    (dense/ReLU chain, all widths listed) or a list of layer dicts
    ({"kind": "dense"|"conv"|"relu"|"flatten", ...}), in which case
    ``input_shape`` is required. Parameters are a pure function of
    (architecture, seed).
    """
    if isinstance(arch_spec, str):
        if not arch_spec.startswith("mlp:"):
            raise ConfigError(f"unknown architecture shorthand {arch_spec!r}")
        layers, inferred = _parse_mlp_spec(arch_spec)
        if input_shape is not None and tuple(input_shape) != inferred:
            if int(np.prod(input_shape)) != inferred[0]:
                raise ConfigError(
                    f"mlp input width {inferred[0]} does not match input shape {input_shape}"
                )
            layers.insert(0, Flatten())
            inferred = tuple(input_shape)
        return Model(layers, inferred, seed)
    if input_shape is None:
        raise ConfigError("input_shape is required for a structured architecture spec")
    return Model(_layers_from_dicts(list(arch_spec), tuple(input_shape)), tuple(input_shape), seed)


def compute_gradients(model: Model, batch: np.ndarray, labels: np.ndarray) -> float:
    """Forward plus backward pass: fills every layer's ``grads`` with the
    mean cross-entropy gradient and returns the loss. No parameter update."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= model.n_classes:
        raise ConfigError(
            f"labels must lie in [0, {model.n_classes}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    logits, probs, _ = model.forward(batch)
    loss = cross_entropy(logits, labels)
    if not np.isfinite(loss):
        raise NumericError("non-finite training loss; halting the run")
    n = len(labels)
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    for layer in reversed(model.layers):
        grad = layer.backward(grad)
    return loss


def backward_and_step(model: Model, batch: np.ndarray, labels: np.ndarray, opt) -> float:
    """One optimizer step on a batch; returns the mean cross-entropy loss."""
    loss = compute_gradients(model, batch, labels)
    opt.step(model)
    return loss


def evaluate(model: Model, samples: np.ndarray, labels: np.ndarray,
             batch_size: int = 512) -> tuple[float, float]:
    """Mean loss and accuracy over a dataset; never mutates parameters."""
    if len(samples) == 0:
        raise ConfigError("evaluate needs a non-empty dataset")
    labels = np.asarray(labels)
    losses = []
    correct = 0
    for start in range(0, len(samples), batch_size):
        xb = samples[start:start + batch_size]
        yb = labels[start:start + batch_size]
        logits, _, _ = model.forward(xb)
        losses.append(cross_entropy(logits, yb) * len(yb))
        correct += int((logits.argmax(axis=1) == yb).sum())
    return float(np.sum(losses) / len(samples)), correct / len(samples)
