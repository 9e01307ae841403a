"""Measurements on converted networks: rates, decisions, sweeps, latency, similarity, approximation gaps."""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import ann as ann_model
from .errors import UndefinedSimilarityError
from .snn import simulate


def firing_rate(N, T):
    """Signed firing rate ``N / T``."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    return N / T


def classify(rates):
    """Index of the largest (signed) rate; ties go to the lowest index.

    Accepts a single rate vector or a batch ``[B, classes]``.
    """
    rates = np.asarray(rates)
    if rates.shape[-1] < 2:
        raise ValueError("classify needs at least two classes")
    label = np.argmax(rates, axis=-1)
    return int(label) if label.ndim == 0 else label


def cosine_similarity(x, y):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise UndefinedSimilarityError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))


def default_checkpoints(t_max):
    """Geometric grid {1, 2, 5} x 10^k up to ``t_max`` (``t_max`` always included)."""
    points = []
    scale = 1
    while scale <= t_max:
        points.extend(m * scale for m in (1, 2, 5) if m * scale <= t_max)
        scale *= 10
    if not points or points[-1] != t_max:
        points.append(t_max)
    return points


@dataclass
class SweepResult:
    checkpoints: list
    error_rates: list
    events: list
    method: str = ""
    network_id: str = ""
    dataset_id: str = ""
    m_aug: int = None
    n_samples: int = 0

    @property
    def accuracies(self):
        return [1.0 - e for e in self.error_rates]

    def rows(self):
        return list(zip(self.checkpoints, self.error_rates, self.events))


def _batches(n, batch_size):
    for start in range(0, n, batch_size):
        yield slice(start, min(start + batch_size, n))


def error_vs_steps(snn, dataset, T_max=None, checkpoints=None, batch_size=256, network_id=""):
    """Error rate and cumulative events at each checkpoint, one simulation pass per sample."""
    if checkpoints is None:
        checkpoints = default_checkpoints(T_max)
    checkpoints = sorted(int(c) for c in checkpoints)
    T_max = checkpoints[-1] if T_max is None else T_max
    if checkpoints[0] < 1 or checkpoints[-1] > T_max:
        raise ValueError(f"checkpoints must lie in [1, {T_max}]")
    wrong = np.zeros(len(checkpoints), dtype=np.int64)
    events = np.zeros(len(checkpoints), dtype=np.int64)
    for sl in _batches(len(dataset), batch_size):
        trace = simulate(snn, dataset.images[sl], checkpoints[-1], checkpoints=checkpoints)
        preds = classify(trace.output_counts)  # argmax of N equals argmax of N/t
        wrong += (preds != dataset.labels[sl][None, :]).sum(axis=1)
        events += trace.events.sum(axis=(1, 2))
    n = len(dataset)
    m_aug = {layer.m_aug for layer in snn.spiking_layers()}
    return SweepResult(
        checkpoints=checkpoints,
        error_rates=[float(w) / n for w in wrong],
        events=[int(e) for e in events],
        method=snn.method,
        network_id=network_id,
        dataset_id=getattr(dataset, "name", ""),
        m_aug=m_aug.pop() if len(m_aug) == 1 else None,
        n_samples=n,
    )


class Latency(NamedTuple):
    steps: int    # None when the criterion is never reached
    events: int


def latency_to_criterion(sweep, ann_accuracy, loss_tolerance):
    """First checkpoint whose accuracy is within ``loss_tolerance`` of the ANN's."""
    if not 0 <= loss_tolerance < 1:
        raise ValueError(f"loss_tolerance must lie in [0, 1), got {loss_tolerance}")
    target = ann_accuracy - loss_tolerance
    for t, acc, ev in zip(sweep.checkpoints, sweep.accuracies, sweep.events):
        # tiny slack absorbs the rounding in 1 - error and ann - tolerance
        if acc >= target - 1e-12:
            return Latency(t, ev)
    return Latency(None, None)


def converged_latency(sweep):
    """First checkpoint at which the sweep reaches its best accuracy."""
    best = max(sweep.accuracies)
    return next(t for t, a in zip(sweep.checkpoints, sweep.accuracies) if a == best)


def _scaled_targets(ann, snn, x):
    """ANN activations per spiking layer divided by the cumulative ``(alpha*theta_P)`` product."""
    _, rec = ann_model.forward(ann, x, record=True)
    targets = []
    scale = 1.0
    weighted = ann.weighted_indices()
    for idx, layer, z in zip(weighted, snn.spiking_layers(), rec.outputs):
        act = ann.activation_for(idx) if idx != weighted[-1] else None
        alpha = act.alpha_pos if act is not None else 1.0
        scale *= alpha * layer.theta_pos
        targets.append(z / scale)
    return targets


@dataclass
class ApproximationReport:
    """Per spiking layer: gap between scaled ANN activation and SNN rate after ``T`` steps."""

    T: int
    targets: list       # z^l / (alpha*theta_P)^l
    rates: list         # r^l(T)
    gaps: list          # targets - rates
    residuals: list     # sigma = frac(V / theta) from the final potentials
    accumulation: list  # per layer worst-case sigma/T multiplier
    extra: dict = field(default_factory=dict)

    @property
    def max_abs_gap(self):
        return [float(np.max(np.abs(g))) for g in self.gaps]

    def first_layer_bound_holds(self):
        """``0 <= gap < 1/T`` on positive-branch neurons and ``-1/T < gap <= 0`` on negative ones."""
        return not _bound_violations(self.targets[0], self.gaps[0], self.T).any()


def _bound_violations(z, gap, T):
    """Mask of neurons whose gap leaves ``[0, 1/T)`` (mirrored for ``z < 0``, exactly 0 for ``z == 0``)."""
    bound = 1.0 / T
    ok = np.where(z > 0, (gap >= 0) & (gap < bound),
                  np.where(z < 0, (gap <= 0) & (gap > -bound), gap == 0))
    return ~ok


def _residual(V, layer):
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(V >= 0, V / layer.theta_pos, V / layer.theta_neg)
    ratio = np.nan_to_num(ratio, nan=0.0)
    return ratio - np.floor(ratio)


def _accumulation_factors(snn):
    """Worst-case residual accumulation per layer: ``1 + sum_n prod_{l'=n..l} s_l'``.

    ``s_l = max_i |sum_j w_ij| / theta_P`` of layer ``l``; layer 0 gives 1.
    """
    s = [float(np.max(np.abs(layer.weights.reshape(layer.weights.shape[0], -1).sum(axis=1)))) / layer.theta_pos
         for layer in snn.spiking_layers()]
    factors = []
    for l in range(len(s)):
        total = 1.0
        for n in range(1, l + 1):
            total += float(np.prod(s[n:l + 1]))
        factors.append(total)
    return factors


def approximation_gap(ann, snn, x, T):
    """Layer-wise gaps ``z^l/(alpha*theta_P)^l - r^l(T)`` for one input."""
    trace = simulate(snn, x, T, record_rates=True, checkpoints=[T])
    rates = [r[0, 0] for r in trace.rates]
    targets = _scaled_targets(ann, snn, x)
    targets = [t.reshape(r.shape) for t, r in zip(targets, rates)]
    gaps = [t - r for t, r in zip(targets, rates)]
    residuals = [_residual(V[0], layer) for V, layer in zip(trace.final_state.V, snn.spiking_layers())]
    return ApproximationReport(T, targets, rates, gaps, residuals, _accumulation_factors(snn))


def first_layer_bound_violations(ann, snn, images, checkpoints):
    """Count first-layer neurons breaking the ``1/T`` rate bound at each checkpoint.

    One batched simulation covers every input and checkpoint; returns
    ``{T: number of (sample, neuron) pairs out of bounds}``.
    """
    images = np.asarray(images, dtype=np.float64)
    checkpoints = sorted(int(c) for c in checkpoints)
    trace = simulate(snn, images, checkpoints[-1], record_rates=True, checkpoints=checkpoints)
    z = _scaled_targets(ann, snn, images)[0].reshape(trace.rates[0].shape[1:])
    return {t: int(_bound_violations(z, z - trace.rates[0][k], t).sum()) for k, t in enumerate(checkpoints)}


class SimilarityPoint(NamedTuple):
    steps: int
    mean_similarity: float
    skipped: int  # samples whose SNN rate vector was all zero


def similarity_curve(ann, snn, dataset, checkpoints, batch_size=256):
    """Mean cosine similarity between output-layer rates and ANN logits at each checkpoint."""
    images = getattr(dataset, "images", dataset)
    checkpoints = sorted(int(c) for c in checkpoints)
    sums = np.zeros(len(checkpoints))
    counts = np.zeros(len(checkpoints), dtype=np.int64)
    skipped = np.zeros(len(checkpoints), dtype=np.int64)
    for sl in _batches(len(images), batch_size):
        logits, _ = ann_model.forward(ann, images[sl])
        trace = simulate(snn, images[sl], checkpoints[-1], checkpoints=checkpoints)
        rates = trace.output_rates()
        for k in range(len(checkpoints)):
            for b in range(len(logits)):
                try:
                    sums[k] += cosine_similarity(rates[k, b], logits[b])
                    counts[k] += 1
                except UndefinedSimilarityError:
                    skipped[k] += 1
    return [
        SimilarityPoint(t, float(s / c) if c else float("nan"), int(sk))
        for t, s, c, sk in zip(checkpoints, sums, counts, skipped)
    ]


def fraction_normalized_rates(trace, checkpoint=-1):
    """Fraction of recorded hidden+output rates with ``|r| <= 1`` (needs ``record_rates``)."""
    values = np.concatenate([r[checkpoint].ravel() for r in trace.rates])
    return float(np.mean(np.abs(values) <= 1.0))


def negative_activation_fraction(ann, images):
    """Fraction of inputs producing at least one negative hidden activation."""
    _, rec = ann_model.forward(ann, images, record=True)
    hidden = rec.outputs[:-1]
    if not hidden:
        return 0.0
    neg = np.zeros(len(images), dtype=bool)
    for z in hidden:
        neg |= (z.reshape(len(images), -1) < 0).any(axis=1)
    return float(neg.mean())


def clamp_negative_forward(ann, x):
    """ANN logits with every hidden activation clamped to ``max(z, 0)``."""
    batch = np.asarray(x, dtype=np.float64)
    single = batch.shape == ann.input_shape
    if single:
        batch = batch[None]
    current = batch
    for layer in ann.layers:
        current = ann_model.apply_layer(layer, current)
        if isinstance(layer, ann_model.Activation):
            current = np.maximum(current, 0.0)
    return current[0] if single else current
