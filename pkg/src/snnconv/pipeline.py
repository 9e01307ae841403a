"""End-to-end experiment: load data and weights, convert, sweep, and write CSV/JSON artifacts."""

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, ann, converter, io
from .errors import ConfigError, PipelineError

log = logging.getLogger(__name__)

METHODS = ("ter", "aug")
BIAS_MODES = ("as-trained", "zero")


@dataclass
class ExperimentConfig:
    method: str
    t_max: int
    test_images: str
    test_labels: str = None          # None: test_images is a CSV file
    weights: str = None              # trained weight file; required unless train_first
    train_images: str = None         # needed by ter (activation statistics) and train_first
    train_labels: str = None
    checkpoints: list = None         # default: {1,2,5} x 10^k grid up to t_max
    m_aug: int = None
    bias_mode: str = "as-trained"
    tolerances: list = field(default_factory=lambda: [0.01, 0.001, 0.0])
    seed: int = 0
    slope_aware: bool = True
    train_first: bool = False
    topology: str = "16"             # hidden layers; the class count is appended
    epochs: int = 30
    lr: float = 0.05
    alpha_pos: float = 1.0
    alpha_neg: float = 0.01
    zero_bias_training: bool = False
    gap_sample: int = 0
    batch_size: int = 256

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if not isinstance(self.t_max, int) or self.t_max < 1:
            raise ConfigError(f"t_max must be a positive integer, got {self.t_max!r}")
        if self.checkpoints is not None:
            if not self.checkpoints or any(c < 1 or c > self.t_max for c in self.checkpoints):
                raise ConfigError(f"checkpoints must be non-empty and lie in [1, {self.t_max}]")
        if self.m_aug is not None:
            if self.method != "aug":
                raise ConfigError("m_aug only applies to the aug method")
            if self.m_aug < 1:
                raise ConfigError(f"m_aug must be >= 1, got {self.m_aug}")
        if self.bias_mode not in BIAS_MODES:
            raise ConfigError(f"bias_mode must be one of {BIAS_MODES}, got {self.bias_mode!r}")
        if any(not 0 <= t < 1 for t in self.tolerances):
            raise ConfigError("tolerances must lie in [0, 1)")
        if self.weights is None and not self.train_first:
            raise ConfigError("either a weight file or train_first is required")
        if (self.method == "ter" or self.train_first) and self.train_images is None:
            raise ConfigError("training data is required for ter conversion and for train_first")

    @property
    def checkpoint_list(self):
        if self.checkpoints is None:
            return analysis.default_checkpoints(self.t_max)
        return sorted(set(int(c) for c in self.checkpoints))

    def to_dict(self):
        return dataclasses.asdict(self)

    def digest(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path):
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header, rows, provenance):
    lines = [f"# {k}={v}" for k, v in provenance.items()]
    lines.append(",".join(header))
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(path, doc):
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def full_topology(hidden, dataset):
    """Hidden-layer topology string plus the output layer sized to the dataset's classes."""
    n_classes = int(dataset.labels.max()) + 1
    return f"{hidden}-{n_classes}" if hidden else str(n_classes)


class _Stages:
    """Tracks the current stage and the artifacts written so far."""

    def __init__(self):
        self.name = None
        self.written = []

    def __call__(self, name):
        self.name = name
        log.info("stage %s", name)


def run_pipeline(config, out_dir):
    """Run the configured experiment and return ``{artifact name: path}``.

    On failure every artifact written so far is removed and a
    ``PipelineError`` naming the failing stage is raised.
    """
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stage = _Stages()
    provenance = {"config_hash": config.digest(), "seed": config.seed, "method": config.method}
    try:
        stage("load-data")
        test = io.load_dataset(config.test_images, config.test_labels)
        train = None
        if config.train_images is not None:
            train = io.load_dataset(config.train_images, config.train_labels)

        if config.train_first:
            stage("train")
            net = ann.from_topology(train.sample_shape, full_topology(config.topology, train),
                                    config.alpha_pos, config.alpha_neg, seed=config.seed)
            net = ann.train(net, train, config.epochs, config.lr, seed=config.seed,
                            zero_bias=config.zero_bias_training)
            net.metadata["dataset"] = train.name
        else:
            stage("load-weights")
            net = io.load_network(config.weights)
        if test.sample_shape != net.input_shape:
            test = type(test)(test.images.reshape((len(test),) + net.input_shape), test.labels, test.name)
        if train is not None and train.sample_shape != net.input_shape:
            train = type(train)(train.images.reshape((len(train),) + net.input_shape), train.labels, train.name)
        ann_accuracy = ann.accuracy(net, test.images, test.labels)

        stage("convert")
        if config.method == "ter":
            factors = converter.compute_scaling_factors(ann.record_dataset_stats(net, train))
            snn = converter.ter_map(net, factors, slope_aware=config.slope_aware)
        else:
            snn = converter.aug_map(net)
            if config.m_aug is not None:
                snn = converter.set_aug_bound(snn, config.m_aug)
        if config.bias_mode == "zero":
            snn = converter.with_zero_bias(snn)

        checkpoints = config.checkpoint_list
        stage("sweep")
        sweep = analysis.error_vs_steps(snn, test, config.t_max, checkpoints, config.batch_size,
                                        network_id=provenance["config_hash"])
        path = out_dir / "error_vs_steps.csv"
        stage.written.append(path)
        write_csv(path, ["T", "error", "events"], sweep.rows(), provenance)

        stage("latency")
        latency = []
        for tol in config.tolerances:
            hit = analysis.latency_to_criterion(sweep, ann_accuracy, tol)
            latency.append({"tolerance": tol, "T_star": hit.steps, "events": hit.events})
        path = out_dir / "latency.json"
        stage.written.append(path)
        write_json(path, {**provenance, "ann_accuracy": ann_accuracy, "criteria": latency})

        stage("similarity")
        curve = analysis.similarity_curve(net, snn, test, checkpoints, config.batch_size)
        path = out_dir / "similarity.csv"
        stage.written.append(path)
        write_csv(path, ["T", "mean_similarity", "skipped"], curve, provenance)

        stage("gap")
        report = analysis.approximation_gap(net, snn, test.images[config.gap_sample], config.t_max)
        path = out_dir / "gap.json"
        stage.written.append(path)
        write_json(path, {
            **provenance,
            "T": config.t_max,
            "sample": config.gap_sample,
            "max_abs_gap": report.max_abs_gap,
            "accumulation_factor": report.accumulation,
            "max_residual": [float(np.max(r)) for r in report.residuals],
            "first_layer_bound_holds": report.first_layer_bound_holds(),
        })
    except Exception as exc:
        for path in stage.written:
            path.unlink(missing_ok=True)
        raise PipelineError(stage.name, exc) from exc
    return {p.stem: p for p in stage.written}
