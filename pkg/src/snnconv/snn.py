"""Time-stepped simulation of converted networks.

Each global step feeds the constant analog input to the first layer and
propagates spikes through every layer in feedforward order, so a spike
emitted at step ``t`` reaches the output within the same step.  Neurons
integrate ``V += W.o + b`` every step and reset by subtraction.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor
from .ann import Conv, Dense
from .converter import NeuronKind, SpikingLayer
from .errors import DimensionError, NumericOverflowError


def fire_double_threshold(V, theta_pos, theta_neg):
    """Binary polarized firing with reset by subtraction.

    Returns ``(o, V_after)`` with ``o`` in {-1, 0, 1}; works elementwise on arrays.
    """
    V = np.asarray(V, dtype=np.float64)
    pos = V >= theta_pos
    neg = ~pos & (V <= theta_neg)
    o = pos.astype(np.int64) - neg.astype(np.int64)
    with np.errstate(invalid="ignore", over="ignore"):
        V_after = np.where(pos, V - theta_pos, np.where(neg, V - theta_neg, V))
    return _unwrap(o), _unwrap(V_after)


def fire_augmented(V, theta_pos, theta_neg, m_aug=None):
    """Augmented firing: ``o`` counts the whole thresholds contained in ``V``.

    ``o = floor(V/theta_pos)`` above the positive threshold and
    ``-floor(V/theta_neg)`` below the negative one, clamped to
    ``[-m_aug, m_aug]`` when ``m_aug`` is given.  The reset removes exactly
    ``|o|`` thresholds.  ``theta_neg = -inf`` disables negative firing.
    """
    V = np.asarray(V, dtype=np.float64)
    pos = V >= theta_pos
    neg = ~pos & (V <= theta_neg)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        q_pos = _whole_multiples(V, theta_pos, pos)
        q_neg = _whole_multiples(V, theta_neg, neg)
    if m_aug is not None:
        q_pos = np.minimum(q_pos, m_aug)
        q_neg = np.minimum(q_neg, m_aug)
    o = np.where(pos, q_pos, np.where(neg, -q_neg, 0.0))
    with np.errstate(invalid="ignore"):
        V_after = np.where(pos, V - q_pos * theta_pos, np.where(neg, V - q_neg * theta_neg, V))
    return _unwrap(o.astype(np.int64)), _unwrap(V_after)


def _whole_multiples(V, theta, mask):
    """``floor(V/theta)`` corrected so that ``V - q*theta`` lies in ``[0, theta)`` (sign-aware)."""
    q = np.where(mask, np.floor(V / theta), 0.0)
    rem = V - q * theta
    # quotient rounding can be off by one near exact multiples
    if theta > 0:
        q = np.where(mask & (rem < 0), q - 1, q)
        rem = V - q * theta
        q = np.where(mask & (rem >= theta), q + 1, q)
    else:
        q = np.where(mask & (rem > 0), q - 1, q)
        rem = V - q * theta
        q = np.where(mask & (rem <= theta), q + 1, q)
    return q


def _unwrap(a):
    return a[()] if a.ndim == 0 else a


def fire(layer, V):
    if layer.neuron_kind is NeuronKind.BINARY:
        return fire_double_threshold(V, layer.theta_pos, layer.theta_neg)
    return fire_augmented(V, layer.theta_pos, layer.theta_neg, layer.m_aug)


def layer_drive(layer, layer_input):
    """``W.x + b`` of a spiking layer for a batch ``layer_input[B, ...]``."""
    src = layer.source
    if isinstance(src, Dense):
        return tensor.matvec(src.weights, layer_input.reshape(layer_input.shape[0], -1), src.bias)
    if isinstance(src, Conv):
        return tensor.conv2d(layer_input, src.kernels, src.bias, src.stride, src.padding)
    raise TypeError(f"unsupported spiking layer source {type(src).__name__}")


@dataclass
class NeuronState:
    """Membrane potentials ``V``, cumulative signed spike sums ``N`` and event counters per spiking layer."""

    V: list
    N: list
    events: list
    step: int = 0

    @classmethod
    def zeros(cls, snn, batch_size):
        shapes = _spiking_shapes(snn)
        return cls(
            V=[np.zeros((batch_size,) + s) for s in shapes],
            N=[np.zeros((batch_size,) + s, dtype=np.int64) for s in shapes],
            events=[np.zeros(batch_size, dtype=np.int64) for _ in shapes],
        )


def _spiking_shapes(snn):
    shapes, shape = [], tuple(snn.input_shape)
    for layer in snn.layers:
        if isinstance(layer, SpikingLayer):
            src = layer.source
            if isinstance(src, Dense):
                shape = (src.out_features,)
            else:
                k = src.kernels.shape[2]
                shape = (
                    src.kernels.shape[0],
                    tensor.conv_output_size(shape[1], k, src.stride, src.padding),
                    tensor.conv_output_size(shape[2], k, src.stride, src.padding),
                )
            shapes.append(shape)
        else:
            shape = shape[:-2] + tuple(
                tensor.conv_output_size(s, layer.window, layer.stride, 0) for s in shape[-2:]
            )
    return shapes


def integrate_step(state, index, layer_input, layer):
    """Integrate ``V <- V + W.x + b`` for spiking layer ``index``; returns the updated ``V``."""
    return _integrate(state, index, layer_drive(layer, layer_input))


def _integrate(state, index, drive):
    V = state.V[index]
    with np.errstate(over="ignore", invalid="ignore"):
        V += drive
    if not np.all(np.isfinite(V)):
        raise NumericOverflowError(index, state.step)
    return V


@dataclass
class SimulationTrace:
    """Recorded quantities at the checkpoint steps of one simulation.

    All arrays carry a leading checkpoint axis ``K`` and a batch axis ``B``.
    """

    steps: np.ndarray            # (K,) recorded time steps
    output_counts: np.ndarray    # (K, B, n_out) cumulative signed coefficients N(t)
    output_frames: np.ndarray    # (K, B, n_out) output SpikeFrame at t
    events: np.ndarray           # (K, B, L) cumulative events per spiking layer
    final_state: NeuronState
    rates: list = None           # per layer (K, B, *shape) cumulative rates N/t
    frames: list = None          # per layer (K, B, *shape) SpikeFrames

    def output_rates(self):
        return self.output_counts / self.steps[:, None, None]

    def at(self, t):
        """Checkpoint index of step ``t``."""
        hits = np.flatnonzero(self.steps == t)
        if len(hits) == 0:
            raise KeyError(f"step {t} was not recorded")
        return int(hits[0])


def _prepare_input(snn, x):
    x = np.asarray(x, dtype=np.float64)
    shape = tuple(snn.input_shape)
    if x.shape == shape:
        return x[None]
    if x.shape[1:] == shape:
        return x
    raise DimensionError(f"input shape {x.shape} does not match network input {shape}")


def simulate(snn, x, T, record_rates=False, checkpoints=None, record_frames=False):
    """Run ``snn`` for ``T`` steps on the analog input ``x`` (single sample or batch).

    ``checkpoints`` selects the recorded steps (default: every step).  The
    spike emitted at step ``T`` is included in ``N(T)``.
    """
    if int(T) != T or T < 1:
        raise ValueError(f"T must be a positive integer, got {T!r}")
    T = int(T)
    steps = np.arange(1, T + 1) if checkpoints is None else np.unique(np.asarray(checkpoints, dtype=np.int64))
    if len(steps) == 0 or steps[0] < 1 or steps[-1] > T:
        raise ValueError(f"checkpoints must lie in [1, {T}]")
    batch = _prepare_input(snn, x)
    B = len(batch)
    state = NeuronState.zeros(snn, B)
    spiking = snn.spiking_layers()
    n_layers = len(spiking)
    n_out = spiking[-1].source.out_features

    K = len(steps)
    out_counts = np.zeros((K, B, n_out), dtype=np.int64)
    out_frames = np.zeros((K, B, n_out), dtype=np.int64)
    events = np.zeros((K, B, n_layers), dtype=np.int64)
    shapes = [v.shape[1:] for v in state.V]
    rates = [np.zeros((K, B) + s) for s in shapes] if record_rates else None
    frames = [np.zeros((K, B) + s, dtype=np.int64) for s in shapes] if record_frames else None

    # everything up to the first spiking layer's drive sees the constant input
    first = snn.layers.index(spiking[0])
    signal = batch
    for layer in snn.layers[:first]:
        signal = tensor.avg_pool2d(signal, layer.window, layer.stride)
    first_drive = layer_drive(spiking[0], signal)

    k = 0
    for t in range(1, T + 1):
        state.step = t
        li = 0
        o = None
        signal = None
        for layer in snn.layers[first:]:
            if not isinstance(layer, SpikingLayer):
                signal = tensor.avg_pool2d(signal, layer.window, layer.stride)
                continue
            drive = first_drive if li == 0 else layer_drive(layer, signal)
            V = _integrate(state, li, drive)
            o, V_after = fire(layer, V)
            o = np.asarray(o)
            state.V[li] = np.asarray(V_after, dtype=np.float64).reshape(V.shape)
            state.N[li] += o
            state.events[li] += np.count_nonzero(o.reshape(B, -1), axis=1)
            if frames is not None and t == steps[k]:
                frames[li][k] = o
            signal = o.astype(np.float64)
            li += 1
        if t == steps[k]:
            out_counts[k] = state.N[-1]
            out_frames[k] = o
            events[k] = np.stack(state.events, axis=1)
            if rates is not None:
                for j in range(n_layers):
                    rates[j][k] = state.N[j] / t
            k += 1
            if k == K:
                break
    return SimulationTrace(steps, out_counts, out_frames, events, state, rates, frames)


@dataclass
class EventCounts:
    per_layer: np.ndarray   # (L,) summed over the batch
    per_sample: np.ndarray  # (B,) summed over layers
    total: int


def count_events(trace, checkpoint=-1):
    """Events (neuron/step pairs with ``o != 0``) up to a recorded checkpoint (default: the last)."""
    ev = trace.events[checkpoint]
    return EventCounts(ev.sum(axis=0), ev.sum(axis=1), int(ev.sum()))


def integrate_sequence(drives, theta_pos, theta_neg, neuron_kind=NeuronKind.AUGMENTED, m_aug=None):
    """Drive one population with an explicit per-step input sequence ``drives[T, ...]``.

    Returns ``(spikes, potentials)``, both shaped like ``drives``, holding the
    spike output and the post-reset potential after every step.
    """
    drives = np.asarray(drives, dtype=np.float64)
    V = np.zeros(drives.shape[1:])
    spikes = np.zeros(drives.shape, dtype=np.int64)
    potentials = np.zeros(drives.shape)
    kind = NeuronKind(neuron_kind)
    for t, d in enumerate(drives):
        with np.errstate(over="ignore", invalid="ignore"):
            V = V + d
        if not np.all(np.isfinite(V)):
            raise NumericOverflowError(0, t + 1)
        if kind is NeuronKind.BINARY:
            o, V = fire_double_threshold(V, theta_pos, theta_neg)
        else:
            o, V = fire_augmented(V, theta_pos, theta_neg, m_aug)
        spikes[t] = o
        potentials[t] = V
    return spikes, potentials
