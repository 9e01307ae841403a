"""ANN-to-SNN conversion: TerMapping (data-driven thresholds) and AugMapping (analytic thresholds)."""

import copy
import enum
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .ann import AvgPool, Conv, Dense, is_weighted
from .errors import DegenerateLayerError, StructureError

UNBOUNDED = None


class NeuronKind(str, enum.Enum):
    BINARY = "binary"        # double-threshold IF neuron, spikes in {-1, 0, 1}
    AUGMENTED = "augmented"  # spikes carry a signed integer coefficient


@dataclass(frozen=True)
class ScalingFactors:
    lambdas: tuple

    def __post_init__(self):
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))
        for i, lam in enumerate(self.lambdas):
            if not lam > 0:
                raise ValueError(f"scaling factor {i} must be positive, got {lam}")

    def __len__(self):
        return len(self.lambdas)

    def __iter__(self):
        return iter(self.lambdas)


@dataclass
class SpikingLayer:
    """A weighted layer of spiking neurons with its firing thresholds."""

    source: object  # Dense or Conv with the copied weights/bias
    theta_pos: float
    theta_neg: float
    neuron_kind: NeuronKind
    m_aug: int = UNBOUNDED

    def __post_init__(self):
        if not self.theta_pos > 0:
            raise ValueError(f"theta_pos must be > 0, got {self.theta_pos}")
        if not self.theta_neg < 0:
            raise ValueError(f"theta_neg must be < 0, got {self.theta_neg}")
        self.neuron_kind = NeuronKind(self.neuron_kind)

    @property
    def weights(self):
        return self.source.weights

    @property
    def bias(self):
        return self.source.bias


@dataclass
class SpikingNetwork:
    """Converted network: spiking layers in place of weighted ones, pools kept, activations folded away."""

    input_shape: tuple
    layers: list
    method: str = ""
    metadata: dict = field(default_factory=dict)

    def spiking_layers(self):
        return [layer for layer in self.layers if isinstance(layer, SpikingLayer)]

    @property
    def thresholds(self):
        return [(layer.theta_pos, layer.theta_neg) for layer in self.spiking_layers()]

    @property
    def n_classes(self):
        return self.layers[-1].source.out_features

    def copy(self):
        return copy.deepcopy(self)


def compute_scaling_factors(record):
    """Per-layer factors from the recorded maxima of |w| and |z|.

    ``post = max(max|w|, max|z|)``; ``lambda = post / pre``; ``pre`` starts at
    1 and becomes ``post`` after each layer.
    """
    if len(record.max_weight) != len(record.max_output):
        raise StructureError("record must hold one weight maximum and one output maximum per layer")
    lambdas = []
    pre_factor = 1.0
    for i, (max_weight, max_output) in enumerate(zip(record.max_weight, record.max_output)):
        post_factor = max(max_weight, max_output)
        if post_factor == 0:
            raise DegenerateLayerError(i)
        lambdas.append(post_factor / pre_factor)
        pre_factor = post_factor
    return ScalingFactors(lambdas)


def _copy_layer(layer):
    if isinstance(layer, Dense):
        return Dense(layer.weights.copy(), layer.bias.copy())
    if isinstance(layer, Conv):
        return Conv(layer.kernels.copy(), layer.bias.copy(), layer.stride, layer.padding)
    return AvgPool(layer.window, layer.stride)


def _build(net, thresholds, kind, method):
    """Mirror ``net`` with one ``(theta_pos, theta_neg)`` pair per weighted layer."""
    layers = []
    pairs = iter(thresholds)
    for layer in net.layers:
        if is_weighted(layer):
            pos, neg = next(pairs)
            layers.append(SpikingLayer(_copy_layer(layer), pos, neg, kind))
        elif isinstance(layer, AvgPool):
            layers.append(_copy_layer(layer))
    return SpikingNetwork(net.input_shape, layers, method, {"source": dict(net.metadata)})


def ter_map(net, factors, slope_aware=True):
    """Double-threshold binary SNN with thresholds rescaled by the scaling factors; weights untouched.

    With ``slope_aware`` each threshold is divided by the slope of its
    polarity, ``(+lambda/alpha_pos, -lambda/alpha_neg)``, so that spike rates
    track ``z / post_factor`` on both branches of a LeakyReLU.  Without it
    the thresholds are the symmetric ``(+lambda, -lambda)``.  Both agree
    when the two slopes are 1, and the logit layer always gets
    ``(+lambda, -lambda)``.
    """
    weighted = net.weighted_indices()
    if len(factors) != len(weighted):
        raise StructureError(f"{len(factors)} scaling factors for {len(weighted)} weighted layers")
    thresholds = []
    for i, lam in zip(weighted, factors):
        act = None if i == weighted[-1] else net.activation_for(i)
        if not slope_aware or act is None:
            thresholds.append((lam, -lam))
        elif act.alpha_neg == 0:
            thresholds.append((lam / act.alpha_pos, -math.inf))
        else:
            thresholds.append((lam / act.alpha_pos, -lam / act.alpha_neg))
    snn = _build(net, thresholds, NeuronKind.BINARY, "ter")
    snn.metadata["scaling_factors"] = list(factors.lambdas)
    return snn


def aug_map(net):
    """Augmented SNN with ``theta_pos = 1/alpha_pos`` and ``theta_neg = -1/alpha_neg``.

    The logit layer and any weighted layer without a following activation
    get unit thresholds.  ``alpha_neg == 0`` yields ``theta_neg = -inf``
    (the negative branch never fires) and a warning.
    """
    weighted = net.weighted_indices()
    thresholds = []
    for i in weighted:
        act = None if i == weighted[-1] else net.activation_for(i)
        if act is None:
            thresholds.append((1.0, -1.0))
            continue
        if act.alpha_neg == 0:
            warnings.warn(
                f"layer {i}: alpha_neg = 0 (ReLU); negative threshold set to -inf",
                RuntimeWarning,
                stacklevel=2,
            )
            theta_neg = -math.inf
        else:
            theta_neg = -1.0 / act.alpha_neg
        thresholds.append((1.0 / act.alpha_pos, theta_neg))
    return _build(net, thresholds, NeuronKind.AUGMENTED, "aug")


def set_aug_bound(snn, m_aug):
    """Copy of ``snn`` whose augmented spikes are clamped to ``|o| <= m_aug`` (``None`` = unbounded)."""
    if m_aug is not UNBOUNDED:
        if isinstance(m_aug, float) and m_aug.is_integer():
            m_aug = int(m_aug)
        if not isinstance(m_aug, (int, np.integer)) or m_aug < 1:
            raise ValueError(f"m_aug must be a positive integer, got {m_aug!r}")
        m_aug = int(m_aug)
    layers = snn.spiking_layers()
    if any(layer.neuron_kind is not NeuronKind.AUGMENTED for layer in layers):
        raise StructureError("set_aug_bound requires an augmented network")
    out = snn.copy()
    for layer in out.spiking_layers():
        layer.m_aug = m_aug
    return out


def without_negative_threshold(snn):
    """Ablation: every spiking layer loses its negative threshold (set to -inf)."""
    out = snn.copy()
    for layer in out.spiking_layers():
        layer.theta_neg = -math.inf
    return out


def with_zero_bias(snn):
    """Copy of ``snn`` with every bias set to zero."""
    out = snn.copy()
    for layer in out.spiking_layers():
        layer.source.bias[:] = 0.0
    return out


def with_thresholds(snn, thresholds):
    """Copy of ``snn`` with explicit ``(theta_pos, theta_neg)`` per spiking layer."""
    out = snn.copy()
    layers = out.spiking_layers()
    if len(thresholds) != len(layers):
        raise StructureError(f"{len(thresholds)} threshold pairs for {len(layers)} spiking layers")
    for layer, (pos, neg) in zip(layers, thresholds):
        updated = replace(layer, theta_pos=pos, theta_neg=neg)
        layer.theta_pos, layer.theta_neg = updated.theta_pos, updated.theta_neg
    return out
