"""Layer stack, LeakyReLU forward pass and a small SGD trainer."""

import copy
from dataclasses import dataclass, field

import numpy as np

from . import tensor
from .errors import CompositionError, DimensionError, TrainingDivergedError


@dataclass
class Dense:
    weights: np.ndarray
    bias: np.ndarray = None

    def __post_init__(self):
        self.weights = tensor.as_tensor(self.weights)
        if self.weights.ndim != 2:
            raise DimensionError(f"Dense weights must be 2-D, got shape {self.weights.shape}")
        if self.bias is None:
            self.bias = np.zeros(self.weights.shape[0])
        self.bias = tensor.as_tensor(self.bias)

    @property
    def out_features(self):
        return self.weights.shape[0]


@dataclass
class Conv:
    kernels: np.ndarray
    bias: np.ndarray = None
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        self.kernels = tensor.as_tensor(self.kernels)
        if self.kernels.ndim != 4 or self.kernels.shape[2] != self.kernels.shape[3]:
            raise DimensionError(f"Conv kernels must be F x C x k x k, got {self.kernels.shape}")
        if self.bias is None:
            self.bias = np.zeros(self.kernels.shape[0])
        self.bias = tensor.as_tensor(self.bias)
        self.stride = int(self.stride)
        self.padding = int(self.padding)

    @property
    def weights(self):
        return self.kernels


@dataclass
class AvgPool:
    window: int
    stride: int = None

    def __post_init__(self):
        self.window = int(self.window)
        self.stride = self.window if self.stride is None else int(self.stride)


@dataclass
class Activation:
    """LeakyReLU with separate slopes for positive and negative inputs."""

    alpha_pos: float = 1.0
    alpha_neg: float = 0.01

    def __post_init__(self):
        if not self.alpha_pos > 0:
            raise ValueError(f"alpha_pos must be > 0, got {self.alpha_pos}")
        if not self.alpha_neg >= 0:
            raise ValueError(f"alpha_neg must be >= 0, got {self.alpha_neg}")


WEIGHTED = (Dense, Conv)


def is_weighted(layer):
    return isinstance(layer, WEIGHTED)


def leaky_relu(x, alpha_pos=1.0, alpha_neg=0.01):
    """``alpha_pos * x`` for ``x > 0``, ``alpha_neg * x`` otherwise (elementwise)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x > 0, alpha_pos * x, alpha_neg * x)
    return out[()] if out.ndim == 0 else out


def layer_output_shape(layer, in_shape, index=None):
    """Shape produced by ``layer`` on a single sample of shape ``in_shape``."""
    if isinstance(layer, Dense):
        n_in = int(np.prod(in_shape))
        if layer.weights.shape[1] != n_in:
            raise CompositionError(
                f"layer {index}: Dense expects {layer.weights.shape[1]} inputs, "
                f"previous layer produces shape {tuple(in_shape)}",
                index,
            )
        if layer.bias.shape != (layer.out_features,):
            raise CompositionError(f"layer {index}: bias shape {layer.bias.shape} != ({layer.out_features},)", index)
        return (layer.out_features,)
    if isinstance(layer, Conv):
        f, c, k, _ = layer.kernels.shape
        if len(in_shape) != 3 or in_shape[0] != c:
            raise CompositionError(
                f"layer {index}: Conv expects {c} x H x W input, got shape {tuple(in_shape)}", index
            )
        if layer.bias.shape != (f,):
            raise CompositionError(f"layer {index}: bias shape {layer.bias.shape} != ({f},)", index)
        h, w = in_shape[1:]
        ho = tensor.conv_output_size(h, k, layer.stride, layer.padding)
        wo = tensor.conv_output_size(w, k, layer.stride, layer.padding)
        if ho < 1 or wo < 1:
            raise CompositionError(f"layer {index}: kernel {k} larger than padded input {tuple(in_shape)}", index)
        return (f, ho, wo)
    if isinstance(layer, AvgPool):
        if len(in_shape) < 2 or in_shape[-1] < layer.window or in_shape[-2] < layer.window:
            raise CompositionError(f"layer {index}: pool window {layer.window} exceeds input {tuple(in_shape)}", index)
        ho = tensor.conv_output_size(in_shape[-2], layer.window, layer.stride, 0)
        wo = tensor.conv_output_size(in_shape[-1], layer.window, layer.stride, 0)
        return tuple(in_shape[:-2]) + (ho, wo)
    if isinstance(layer, Activation):
        return tuple(in_shape)
    raise TypeError(f"unknown layer type {type(layer).__name__}")


def apply_layer(layer, x):
    """Forward one layer on a batch ``x[B, ...]``."""
    if isinstance(layer, Dense):
        return tensor.matvec(layer.weights, x.reshape(x.shape[0], -1), layer.bias)
    if isinstance(layer, Conv):
        return tensor.conv2d(x, layer.kernels, layer.bias, layer.stride, layer.padding)
    if isinstance(layer, AvgPool):
        return tensor.avg_pool2d(x, layer.window, layer.stride)
    if isinstance(layer, Activation):
        return leaky_relu(x, layer.alpha_pos, layer.alpha_neg)
    raise TypeError(f"unknown layer type {type(layer).__name__}")


@dataclass
class AnnNetwork:
    input_shape: tuple
    layers: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        self.layers = list(self.layers)
        self.validate()

    def validate(self):
        if not self.layers:
            raise CompositionError("network has no layers")
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            shape = layer_output_shape(layer, shape, i)
        if not isinstance(self.layers[-1], Dense):
            raise CompositionError("the final layer must be Dense (logit layer)", len(self.layers) - 1)

    def shapes(self):
        """Output shape of every layer, in order."""
        out, shape = [], self.input_shape
        for i, layer in enumerate(self.layers):
            shape = layer_output_shape(layer, shape, i)
            out.append(shape)
        return out

    def weighted_indices(self):
        return [i for i, layer in enumerate(self.layers) if is_weighted(layer)]

    def activation_for(self, index):
        """The Activation applied to weighted layer ``index``'s output, if any.

        This is the first Activation after ``index`` and before the next
        weighted layer.
        """
        for layer in self.layers[index + 1:]:
            if isinstance(layer, Activation):
                return layer
            if is_weighted(layer):
                return None
        return None

    @property
    def n_classes(self):
        return self.layers[-1].out_features

    def copy(self):
        return copy.deepcopy(self)


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def mlp(sizes, alpha_pos=1.0, alpha_neg=0.01, seed=0, input_shape=None):
    """Fully connected net ``sizes[0] -> ... -> sizes[-1]`` with LeakyReLU between layers."""
    rng = np.random.default_rng(seed)
    layers = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        layers.append(Dense(_glorot(rng, (n_out, n_in), n_in, n_out), np.zeros(n_out)))
        if i < len(sizes) - 2:
            layers.append(Activation(alpha_pos, alpha_neg))
    return AnnNetwork(input_shape or (sizes[0],), layers)


def from_topology(input_shape, topology, alpha_pos=1.0, alpha_neg=0.01, seed=0):
    """Build a net from a topology string such as ``"12c5-p2-64c5-p2-10"``.

    ``Nc<k>`` is a convolution with N maps of size k, ``p<w>`` average
    pooling and a bare integer a fully connected layer.  Every weighted
    layer except the last is followed by LeakyReLU.
    """
    rng = np.random.default_rng(seed)
    tokens = [t for t in topology.split("-") if t]
    layers, shape = [], tuple(input_shape)
    for pos, tok in enumerate(tokens):
        last = pos == len(tokens) - 1
        if tok.startswith("p"):
            layer = AvgPool(int(tok[1:]))
        elif "c" in tok:
            n, k = (int(p) for p in tok.split("c"))
            c = shape[0]
            layer = Conv(_glorot(rng, (n, c, k, k), c * k * k, n * k * k), np.zeros(n))
        else:
            n = int(tok)
            n_in = int(np.prod(shape))
            layer = Dense(_glorot(rng, (n, n_in), n_in, n), np.zeros(n))
        layers.append(layer)
        shape = layer_output_shape(layer, shape, len(layers) - 1)
        if is_weighted(layer) and not last:
            layers.append(Activation(alpha_pos, alpha_neg))
    return AnnNetwork(input_shape, layers)


def _as_batch(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape == net.input_shape:
        return x[None], True
    if x.shape[1:] == net.input_shape:
        return x, False
    raise DimensionError(f"input shape {x.shape} does not match network input {net.input_shape}")


@dataclass
class ActivationRecord:
    """Per weighted layer: post-activation outputs and running maxima."""

    layer_indices: list
    max_output: list
    max_weight: list
    outputs: list = None

    def __len__(self):
        return len(self.layer_indices)


def _weight_maxima(net):
    return [float(np.max(np.abs(net.layers[i].weights))) for i in net.weighted_indices()]


def forward(net, x, record=False):
    """Logits for ``x`` (single sample or batch); optionally the activation record.

    The recorded ``z`` of a weighted layer is the output of its LeakyReLU when
    one follows it, otherwise its raw output (e.g. the logits).
    """
    batch, single = _as_batch(net, x)
    weighted = net.weighted_indices()
    outputs = {}
    current = batch
    pending = None  # weighted layer whose activation has not been applied yet
    for i, layer in enumerate(net.layers):
        current = apply_layer(layer, current)
        if is_weighted(layer):
            pending = i
            outputs[i] = current
        elif isinstance(layer, Activation) and pending is not None:
            outputs[pending] = current
            pending = None
    logits = current[0] if single else current
    if not record:
        return logits, None
    zs = [outputs[i][0] if single else outputs[i] for i in weighted]
    rec = ActivationRecord(
        layer_indices=weighted,
        max_output=[float(np.max(np.abs(z))) for z in zs],
        max_weight=_weight_maxima(net),
        outputs=zs,
    )
    return logits, rec


def record_dataset_stats(net, dataset, batch_size=256):
    """Max |z| per weighted layer over the whole dataset, and max |w| per layer."""
    images = getattr(dataset, "images", dataset)
    images = np.asarray(images, dtype=np.float64)
    if images.shape == net.input_shape:
        images = images[None]
    if len(images) == 0:
        raise ValueError("record_dataset_stats: dataset is empty")
    maxima = None
    for start in range(0, len(images), batch_size):
        _, rec = forward(net, images[start:start + batch_size], record=True)
        maxima = rec.max_output if maxima is None else [max(a, b) for a, b in zip(maxima, rec.max_output)]
    return ActivationRecord(net.weighted_indices(), maxima, _weight_maxima(net))


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    n = len(labels)
    loss = -log_probs[np.arange(n), labels].mean()
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def _backward_layer(layer, x, grad_out):
    """Return (grad_input, {param_name: grad}) for one layer given its input batch ``x``."""
    if isinstance(layer, Dense):
        flat = x.reshape(x.shape[0], -1)
        grads = {"weights": np.einsum("bi,bj->ij", grad_out, flat), "bias": grad_out.sum(axis=0)}
        grad_in = np.einsum("bi,ij->bj", grad_out, layer.weights).reshape(x.shape)
        return grad_in, grads
    if isinstance(layer, Conv):
        s, p = layer.stride, layer.padding
        k = layer.kernels.shape[2]
        xp = tensor._pad(x, p)
        ho, wo = grad_out.shape[-2:]
        dk = np.zeros_like(layer.kernels)
        dxp = np.zeros_like(xp)
        for u in range(k):
            for v in range(k):
                rows = slice(u, u + s * (ho - 1) + 1, s)
                cols = slice(v, v + s * (wo - 1) + 1, s)
                dk[:, :, u, v] = np.einsum("bfhw,bchw->fc", grad_out, xp[:, :, rows, cols])
                dxp[:, :, rows, cols] += np.einsum("bfhw,fc->bchw", grad_out, layer.kernels[:, :, u, v])
        grad_in = dxp[:, :, p:p + x.shape[2], p:p + x.shape[3]] if p else dxp
        return grad_in, {"kernels": dk, "bias": grad_out.sum(axis=(0, 2, 3))}
    if isinstance(layer, AvgPool):
        w, s = layer.window, layer.stride
        ho, wo = grad_out.shape[-2:]
        grad_in = np.zeros_like(x)
        share = grad_out / (w * w)
        for u in range(w):
            for v in range(w):
                grad_in[..., u:u + s * (ho - 1) + 1:s, v:v + s * (wo - 1) + 1:s] += share
        return grad_in, {}
    if isinstance(layer, Activation):
        return grad_out * np.where(x > 0, layer.alpha_pos, layer.alpha_neg), {}
    raise TypeError(f"unknown layer type {type(layer).__name__}")


def loss_and_gradients(net, x, labels):
    """Softmax cross-entropy on a batch and per-layer parameter gradients.

    Returns ``(loss, grads)`` where ``grads[i]`` is a dict keyed by parameter
    name (empty for parameter-free layers).
    """
    batch, _ = _as_batch(net, x)
    labels = np.asarray(labels, dtype=np.int64)
    inputs = []
    current = batch
    for layer in net.layers:
        inputs.append(current)
        current = apply_layer(layer, current)
    loss, grad = softmax_cross_entropy(current, labels)
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        grad, grads[i] = _backward_layer(net.layers[i], inputs[i], grad)
    return loss, grads


def dataset_loss(net, images, labels, batch_size=512):
    total = 0.0
    for start in range(0, len(images), batch_size):
        logits, _ = forward(net, images[start:start + batch_size])
        loss, _ = softmax_cross_entropy(logits, labels[start:start + batch_size])
        total += loss * len(logits)
    return total / len(images)


def accuracy(net, images, labels, batch_size=512):
    preds = predict(net, images, batch_size)
    return float(np.mean(preds == np.asarray(labels)))


def predict(net, images, batch_size=512):
    images = np.asarray(images, dtype=np.float64)
    preds = [np.argmax(forward(net, images[s:s + batch_size])[0], axis=1) for s in range(0, len(images), batch_size)]
    return np.concatenate(preds)


def train(net, dataset, epochs, lr, seed=0, batch_size=32, zero_bias=False):
    """Minibatch SGD on softmax cross-entropy; returns a trained copy of ``net``.

    With ``zero_bias`` all biases are set to zero and kept frozen.
    """
    images = np.asarray(dataset.images, dtype=np.float64)
    labels = np.asarray(dataset.labels, dtype=np.int64)
    if len(images) == 0:
        raise ValueError("train: dataset is empty")
    n_classes = net.n_classes
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"train: labels must lie in [0, {n_classes})")
    net = net.copy()
    if epochs == 0:
        return net
    if zero_bias:
        for i in net.weighted_indices():
            net.layers[i].bias[:] = 0.0
    rng = np.random.default_rng(seed)
    for epoch in range(epochs):
        order = rng.permutation(len(images))
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            loss, grads = loss_and_gradients(net, images[idx], labels[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            for layer, g in zip(net.layers, grads):
                for name, value in g.items():
                    if name == "bias" and zero_bias:
                        continue
                    param = getattr(layer, name)
                    param -= lr * value
        epoch_loss = dataset_loss(net, images, labels)
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(epoch, epoch_loss)
    net.metadata.update({"seed": seed, "epochs": epochs, "lr": lr, "zero_bias": zero_bias})
    return net
