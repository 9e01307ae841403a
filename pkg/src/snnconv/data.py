"""Dataset containers and a synthetic desk-scale generator."""

from dataclasses import dataclass

import numpy as np


@dataclass
class LabeledDataset:
    images: np.ndarray  # (N, *sample_shape), float64
    labels: np.ndarray  # (N,), int64
    name: str = "unnamed"

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    @property
    def sample_shape(self):
        return self.images.shape[1:]

    def subset(self, idx):
        return LabeledDataset(self.images[idx], self.labels[idx], self.name)


def make_prototype_images(n_classes, n_samples, side=8, noise=0.15, seed=0, complementary=False, name=None):
    """Noisy copies of per-class prototype images with pixels in [0, 1].

    Prototype pixels are 0.1 or 0.9 at random.  With ``complementary`` every
    odd class is the photographic negative of the class before it, so the
    two are told apart by the sign of a single projection.  Samples add
    Gaussian pixel noise and are clipped to [0, 1]; images are flattened to
    ``side*side`` features.
    """
    rng = np.random.default_rng(seed)
    n_pixels = side * side
    protos = (rng.random((n_classes, n_pixels)) < 0.5) * 0.8 + 0.1
    if complementary:
        protos[1::2] = 1.0 - protos[0:n_classes - n_classes % 2:2][: len(protos[1::2])]
    labels = np.arange(n_samples) % n_classes
    rng.shuffle(labels)
    images = np.clip(protos[labels] + noise * rng.standard_normal((n_samples, n_pixels)), 0.0, 1.0)
    tag = "comp-" if complementary else ""
    return LabeledDataset(images, labels, name or f"prototypes-{tag}{n_classes}c-{side}x{side}-n{noise:g}-s{seed}")


def make_blobs(n_per_class, centers, sigma, seed=0, name=None):
    """Isotropic Gaussian blobs around ``centers`` (one row per class)."""
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=np.float64)
    labels = np.repeat(np.arange(len(centers)), n_per_class)
    images = centers[labels] + sigma * rng.standard_normal((len(labels), centers.shape[1]))
    order = rng.permutation(len(labels))
    return LabeledDataset(images[order], labels[order], name or f"blobs-{len(centers)}c-s{seed}")


def train_test_split(ds, n_train, seed=0):
    order = np.random.default_rng(seed).permutation(len(ds))
    return ds.subset(order[:n_train]), ds.subset(order[n_train:])
