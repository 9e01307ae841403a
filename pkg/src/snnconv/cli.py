"""Command-line driver: train -> convert -> infer / sweep / similarity / gap, plus a one-shot ``run``.

Exit codes: 0 success, 2 configuration/usage error, 3 I/O or file-format
error, 4 numeric failure (divergence, overflow, dead layer).
"""

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import analysis, ann, converter, io
from .snn import simulate
from .errors import (
    CompositionError,
    ConfigError,
    ConsistencyError,
    DegenerateLayerError,
    FormatError,
    NumericOverflowError,
    PipelineError,
    TrainingDivergedError,
    UnsupportedVersionError,
)
from .pipeline import ExperimentConfig, full_topology, run_pipeline, write_csv, write_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

_IO_ERRORS = (OSError, FormatError, ConsistencyError, UnsupportedVersionError, CompositionError)
_NUMERIC_ERRORS = (TrainingDivergedError, NumericOverflowError, DegenerateLayerError, ArithmeticError)


def exit_code_for(exc):
    if isinstance(exc, PipelineError):
        exc = exc.cause
    if isinstance(exc, (ConfigError, click.UsageError)):
        return EXIT_CONFIG
    if isinstance(exc, _IO_ERRORS):
        return EXIT_IO
    if isinstance(exc, _NUMERIC_ERRORS):
        return EXIT_NUMERIC
    return 1


def _parse_ints(text):
    if text is None:
        return None
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _parse_floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _dataset(images, labels, net_shape=None):
    ds = io.load_dataset(images, labels)
    if net_shape is not None and ds.sample_shape != tuple(net_shape):
        ds = type(ds)(ds.images.reshape((len(ds),) + tuple(net_shape)), ds.labels, ds.name)
    return ds


def _data_options(prefix, required=True):
    def wrap(f):
        f = click.option(f"--{prefix}-labels", type=click.Path(dir_okay=False),
                         help="IDX labels file (omit when the images file is CSV).")(f)
        f = click.option(f"--{prefix}", f"{prefix}_images", required=required,
                         type=click.Path(dir_okay=False),
                         help="IDX images file or CSV (pixels..., label).")(f)
        return f
    return wrap


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def cli(verbose):
    """Convert LeakyReLU ANNs to spiking networks and measure them."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@cli.command()
@_data_options("train")
@click.option("--topology", default="16", show_default=True,
              help="Hidden layers, e.g. '12c5-p2-64c5-p2' or '16'; the output layer is added.")
@click.option("--epochs", default=30, show_default=True)
@click.option("--lr", default=0.05, show_default=True)
@click.option("--alpha-pos", default=1.0, show_default=True)
@click.option("--alpha-neg", default=0.01, show_default=True)
@click.option("--bias-mode", type=click.Choice(["as-trained", "zero"]), default="as-trained", show_default=True,
              help="'zero' trains with biases fixed at zero.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def train(train_images, train_labels, topology, epochs, lr, alpha_pos, alpha_neg, bias_mode, seed, out):
    """Train an ANN with SGD and save its weight file."""
    data = _dataset(train_images, train_labels)
    net = ann.from_topology(data.sample_shape, full_topology(topology, data), alpha_pos, alpha_neg, seed=seed)
    net = ann.train(net, data, epochs, lr, seed=seed, zero_bias=bias_mode == "zero")
    net.metadata["dataset"] = data.name
    io.save_network(net, out)
    click.echo(f"train accuracy {ann.accuracy(net, data.images, data.labels):.4f} -> {out}")


@cli.command()
@click.argument("weights", type=click.Path(dir_okay=False))
@click.option("--method", type=click.Choice(["ter", "aug"]), required=True)
@_data_options("train", required=False)
@click.option("--maug", type=int, default=None, help="Bound on augmented spike coefficients.")
@click.option("--bias-mode", type=click.Choice(["as-trained", "zero"]), default="as-trained", show_default=True)
@click.option("--symmetric", is_flag=True, help="ter only: use +/-lambda regardless of the activation slopes.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def convert(weights, method, train_images, train_labels, maug, bias_mode, symmetric, out):
    """Convert a weight file into a spiking network file."""
    net = io.load_network(weights)
    if method == "ter":
        if train_images is None:
            raise ConfigError("ter conversion needs --train data for activation statistics")
        data = _dataset(train_images, train_labels, net.input_shape)
        snn = converter.ter_map(net, converter.compute_scaling_factors(ann.record_dataset_stats(net, data)),
                                slope_aware=not symmetric)
    else:
        snn = converter.aug_map(net)
    if maug is not None:
        if method != "aug":
            raise ConfigError("--maug only applies to --method aug")
        snn = converter.set_aug_bound(snn, maug)
    if bias_mode == "zero":
        snn = converter.with_zero_bias(snn)
    io.save_snn(snn, out)
    for i, (pos, neg) in enumerate(snn.thresholds):
        click.echo(f"layer {i}: theta_pos={pos:.6g} theta_neg={neg:.6g}")


@cli.command()
@click.argument("snn_file", type=click.Path(dir_okay=False))
@_data_options("test")
@click.option("--steps", type=int, required=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def infer(snn_file, test_images, test_labels, steps, out):
    """Per-sample predictions after STEPS time steps (CSV: index, label, prediction, events)."""
    snn = io.load_snn(snn_file)
    data = _dataset(test_images, test_labels, snn.input_shape)
    rows = []
    for start in range(0, len(data), 256):
        trace = simulate(snn, data.images[start:start + 256], steps, checkpoints=[steps])
        preds = analysis.classify(trace.output_counts[0])
        events = trace.events[0].sum(axis=1)
        for k, (p, e) in enumerate(zip(preds, events)):
            rows.append((start + k, int(data.labels[start + k]), int(p), int(e)))
    write_csv(out, ["index", "label", "prediction", "events"], rows, {"steps": steps})
    acc = np.mean([r[1] == r[2] for r in rows])
    click.echo(f"accuracy {acc:.4f} at T={steps}")


@cli.command()
@click.argument("snn_file", type=click.Path(dir_okay=False))
@_data_options("test")
@click.option("--ann", "ann_file", type=click.Path(dir_okay=False),
              help="Source weight file; enables latency-to-criterion output.")
@click.option("--steps", type=int, required=True, help="T_max")
@click.option("--checkpoints", default=None, help="Comma-separated steps (default {1,2,5}x10^k grid).")
@click.option("--tolerance", default="0.01,0.001,0", show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
def sweep(snn_file, test_images, test_labels, ann_file, steps, checkpoints, tolerance, out):
    """Error and events versus time steps (error_vs_steps.csv, latency.json)."""
    snn = io.load_snn(snn_file)
    data = _dataset(test_images, test_labels, snn.input_shape)
    cps = _parse_ints(checkpoints) or analysis.default_checkpoints(steps)
    result = analysis.error_vs_steps(snn, data, steps, cps)
    Path(out).mkdir(parents=True, exist_ok=True)
    write_csv(Path(out) / "error_vs_steps.csv", ["T", "error", "events"], result.rows(), {"method": snn.method})
    if ann_file:
        net = io.load_network(ann_file)
        acc = ann.accuracy(net, data.images, data.labels)
        crit = []
        for tol in _parse_floats(tolerance):
            hit = analysis.latency_to_criterion(result, acc, tol)
            crit.append({"tolerance": tol, "T_star": hit.steps, "events": hit.events})
        write_json(Path(out) / "latency.json", {"ann_accuracy": acc, "criteria": crit, "method": snn.method})
    for t, err, ev in result.rows():
        click.echo(f"T={t:<7d} error={err:.4f} events={ev}")


@cli.command()
@click.argument("snn_file", type=click.Path(dir_okay=False))
@click.option("--ann", "ann_file", required=True, type=click.Path(dir_okay=False))
@_data_options("test")
@click.option("--checkpoints", default="10,100,1000", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def similarity(snn_file, ann_file, test_images, test_labels, checkpoints, out):
    """Mean cosine similarity of output rates to ANN logits per checkpoint."""
    snn = io.load_snn(snn_file)
    net = io.load_network(ann_file)
    data = _dataset(test_images, test_labels, snn.input_shape)
    curve = analysis.similarity_curve(net, snn, data, _parse_ints(checkpoints))
    write_csv(out, ["T", "mean_similarity", "skipped"], curve, {"method": snn.method})
    for point in curve:
        click.echo(f"T={point.steps:<7d} S={point.mean_similarity:.6f} skipped={point.skipped}")


@cli.command()
@click.argument("snn_file", type=click.Path(dir_okay=False))
@click.option("--ann", "ann_file", required=True, type=click.Path(dir_okay=False))
@_data_options("test")
@click.option("--steps", type=int, required=True)
@click.option("--sample", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def gap(snn_file, ann_file, test_images, test_labels, steps, sample, out):
    """Layer-wise gap between scaled ANN activations and SNN rates for one sample."""
    snn = io.load_snn(snn_file)
    net = io.load_network(ann_file)
    data = _dataset(test_images, test_labels, snn.input_shape)
    report = analysis.approximation_gap(net, snn, data.images[sample], steps)
    doc = {
        "T": steps,
        "sample": sample,
        "max_abs_gap": report.max_abs_gap,
        "accumulation_factor": report.accumulation,
        "first_layer_bound_holds": report.first_layer_bound_holds(),
    }
    write_json(out, doc)
    click.echo(json.dumps(doc, indent=1))


@cli.command()
@click.argument("config_file", type=click.Path(dir_okay=False))
@click.option("--method", type=click.Choice(["ter", "aug"]), default=None, help="Override the config's method.")
@click.option("--steps", type=int, default=None, help="Override t_max.")
@click.option("--checkpoints", default=None)
@click.option("--maug", type=int, default=None)
@click.option("--bias-mode", type=click.Choice(["as-trained", "zero"]), default=None)
@click.option("--tolerance", default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path(file_okay=False))
def run(config_file, method, steps, checkpoints, maug, bias_mode, tolerance, seed, out):
    """Run the whole pipeline from a JSON ExperimentConfig."""
    raw = json.loads(Path(config_file).read_text())
    overrides = {"method": method, "t_max": steps, "checkpoints": _parse_ints(checkpoints), "m_aug": maug,
                 "bias_mode": bias_mode, "seed": seed,
                 "tolerances": _parse_floats(tolerance) if tolerance else None}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    config = ExperimentConfig.from_dict(raw)
    artifacts = run_pipeline(config, out)
    for name, path in artifacts.items():
        click.echo(f"{name}: {path}")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG if isinstance(exc, click.UsageError) else 1
    except Exception as exc:  # map package errors onto the exit-code contract
        code = exit_code_for(exc)
        if code == 1:
            raise
        click.echo(f"error: {exc}", err=True)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
