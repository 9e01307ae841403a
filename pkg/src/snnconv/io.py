"""Dataset ingestion (IDX, CSV) and versioned text weight files."""

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from .ann import Activation, AnnNetwork, AvgPool, Conv, Dense
from .converter import NeuronKind, SpikingLayer, SpikingNetwork
from .data import LabeledDataset
from .errors import (
    CompositionError,
    ConsistencyError,
    FormatError,
    TruncatedFileError,
    UnsupportedVersionError,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

WEIGHTS_FORMAT = "snnconv-ann"
SNN_FORMAT = "snnconv-snn"
FORMAT_VERSION = 1


# -- IDX ---------------------------------------------------------------------

def _read_header(path, raw, magic, n_dims):
    size = 4 * (1 + n_dims)
    if len(raw) < 4:
        raise TruncatedFileError(path, len(raw), 4 - len(raw))
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise FormatError(f"{path}: bad magic 0x{found:08x} (expected 0x{magic:08x})")
    if len(raw) < size:
        raise TruncatedFileError(path, len(raw), size - len(raw))
    dims = struct.unpack(f">{n_dims}I", raw[4:size])
    return dims, size


def read_idx_images(path):
    """uint8 array ``(N, rows, cols)`` from an IDX image file."""
    raw = Path(path).read_bytes()
    (count, rows, cols), offset = _read_header(path, raw, IDX_IMAGES_MAGIC, 3)
    needed = count * rows * cols
    if len(raw) - offset < needed:
        raise TruncatedFileError(path, len(raw), offset + needed - len(raw))
    return np.frombuffer(raw, dtype=np.uint8, count=needed, offset=offset).reshape(count, rows, cols)


def read_idx_labels(path):
    raw = Path(path).read_bytes()
    (count,), offset = _read_header(path, raw, IDX_LABELS_MAGIC, 1)
    if len(raw) - offset < count:
        raise TruncatedFileError(path, len(raw), offset + count - len(raw))
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=offset)


def load_idx_dataset(images_path, labels_path, name=None):
    """MNIST-style IDX pair as a dataset of ``1 x H x W`` images scaled to [0, 1]."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise ConsistencyError(f"{images_path} holds {len(images)} images but {labels_path} holds {len(labels)} labels")
    return LabeledDataset(images[:, None, :, :] / 255.0, labels.astype(np.int64), name or Path(images_path).stem)


def write_idx_images(path, images):
    images = np.asarray(images, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">2I", IDX_LABELS_MAGIC, len(labels)))
        f.write(labels.tobytes())


# -- CSV fallback --------------------------------------------------------------

def load_csv_dataset(path, sample_shape=None, name=None):
    """One row per sample: flattened pixel values followed by the integer label."""
    rows = []
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), 1):
            if not row or row[0].startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        return LabeledDataset(np.zeros((0,) + tuple(sample_shape or (0,))), np.zeros(0), name or Path(path).stem)
    if len({len(r) for r in rows}) != 1:
        raise ConsistencyError(f"{path}: rows have differing numbers of columns")
    table = np.asarray(rows)
    images = table[:, :-1]
    if sample_shape is not None:
        images = images.reshape((len(images),) + tuple(sample_shape))
    labels = table[:, -1]
    if not np.all(labels == np.round(labels)):
        raise FormatError(f"{path}: labels must be integers")
    return LabeledDataset(images, labels.astype(np.int64), name or Path(path).stem)


def save_csv_dataset(path, dataset):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        for image, label in zip(dataset.images.reshape(len(dataset), -1), dataset.labels):
            writer.writerow([repr(float(v)) for v in image] + [int(label)])


def load_dataset(images, labels=None, sample_shape=None, name=None):
    """IDX pair when ``labels`` is given, otherwise a CSV file."""
    if labels is not None:
        return load_idx_dataset(images, labels, name)
    return load_csv_dataset(images, sample_shape, name)


# -- weight files ------------------------------------------------------------

def _flat(a):
    return [float(v) for v in np.asarray(a).ravel()]


def _layer_to_dict(layer):
    if isinstance(layer, Dense):
        return {"kind": "dense", "shape": list(layer.weights.shape),
                "weights": _flat(layer.weights), "bias": _flat(layer.bias)}
    if isinstance(layer, Conv):
        return {"kind": "conv", "shape": list(layer.kernels.shape), "stride": layer.stride,
                "padding": layer.padding, "weights": _flat(layer.kernels), "bias": _flat(layer.bias)}
    if isinstance(layer, AvgPool):
        return {"kind": "avgpool", "window": layer.window, "stride": layer.stride}
    if isinstance(layer, Activation):
        return {"kind": "activation", "alpha_pos": float(layer.alpha_pos), "alpha_neg": float(layer.alpha_neg)}
    if isinstance(layer, SpikingLayer):
        return {
            "kind": "spiking",
            "source": _layer_to_dict(layer.source),
            "theta_pos": float(layer.theta_pos),
            "theta_neg": None if math.isinf(layer.theta_neg) else float(layer.theta_neg),
            "neuron_kind": layer.neuron_kind.value,
            "m_aug": layer.m_aug,
        }
    raise TypeError(f"cannot serialize {type(layer).__name__}")


def _array(entry, index):
    shape = tuple(int(s) for s in entry["shape"])
    values = np.asarray(entry["weights"], dtype=np.float64)
    if any(s <= 0 for s in shape) or int(np.prod(shape)) != values.size:
        raise CompositionError(
            f"layer {index}: shape field {list(shape)} does not match {values.size} stored weights", index
        )
    return values.reshape(shape)


def _bias(entry, n, index):
    if entry.get("bias") is None:
        return np.zeros(n)
    bias = np.asarray(entry["bias"], dtype=np.float64)
    if bias.shape != (n,):
        raise CompositionError(f"layer {index}: bias has {bias.size} values, expected {n}", index)
    return bias


def _layer_from_dict(entry, index):
    kind = entry.get("kind")
    try:
        if kind == "dense":
            w = _array(entry, index)
            return Dense(w, _bias(entry, w.shape[0], index))
        if kind == "conv":
            k = _array(entry, index)
            return Conv(k, _bias(entry, k.shape[0], index), entry.get("stride", 1), entry.get("padding", 0))
        if kind == "avgpool":
            return AvgPool(entry["window"], entry.get("stride"))
        if kind == "activation":
            return Activation(entry["alpha_pos"], entry["alpha_neg"])
        if kind == "spiking":
            theta_neg = entry.get("theta_neg")
            return SpikingLayer(
                _layer_from_dict(entry["source"], index),
                entry["theta_pos"],
                -math.inf if theta_neg is None else theta_neg,
                NeuronKind(entry["neuron_kind"]),
                entry.get("m_aug"),
            )
    except KeyError as exc:
        raise FormatError(f"layer {index}: missing field {exc}") from None
    raise FormatError(f"layer {index}: unknown layer kind {kind!r}")


def _dumps(doc):
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _load_doc(path, expected_format):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a valid weight file ({exc})") from None
    if doc.get("format") != expected_format:
        raise FormatError(f"{path}: expected format {expected_format!r}, found {doc.get('format')!r}")
    if doc.get("version") != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{path}: unsupported format version {doc.get('version')!r} (this build reads version {FORMAT_VERSION})"
        )
    return doc


def network_to_text(net):
    return _dumps({
        "format": WEIGHTS_FORMAT,
        "version": FORMAT_VERSION,
        "input_shape": list(net.input_shape),
        "layers": [_layer_to_dict(layer) for layer in net.layers],
        "metadata": net.metadata,
    })


def save_network(net, path):
    Path(path).write_text(network_to_text(net))


def load_network(path):
    doc = _load_doc(path, WEIGHTS_FORMAT)
    layers = [_layer_from_dict(entry, i) for i, entry in enumerate(doc["layers"])]
    return AnnNetwork(doc["input_shape"], layers, doc.get("metadata", {}))


def save_snn(snn, path):
    Path(path).write_text(_dumps({
        "format": SNN_FORMAT,
        "version": FORMAT_VERSION,
        "input_shape": list(snn.input_shape),
        "method": snn.method,
        "layers": [_layer_to_dict(layer) for layer in snn.layers],
        "metadata": snn.metadata,
    }))


def load_snn(path):
    doc = _load_doc(path, SNN_FORMAT)
    layers = [_layer_from_dict(entry, i) for i, entry in enumerate(doc["layers"])]
    return SpikingNetwork(tuple(doc["input_shape"]), layers, doc.get("method", ""), doc.get("metadata", {}))
