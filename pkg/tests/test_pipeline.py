import json

import numpy as np
import pytest

from snnconv import ann, io
from snnconv.ann import AnnNetwork, Dense
from snnconv.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main
from snnconv.data import make_prototype_images, train_test_split
from snnconv.errors import ConfigError, PipelineError
from snnconv.pipeline import ExperimentConfig, run_pipeline


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    ds = make_prototype_images(3, 240, side=6, noise=0.4, seed=5)
    train, test = train_test_split(ds, 180, seed=5)
    io.save_csv_dataset(root / "train.csv", train)
    io.save_csv_dataset(root / "test.csv", test)
    net = ann.train(ann.mlp([36, 10, 3], 1.0, 0.2, seed=5), train, 10, 0.05, seed=5)
    io.save_network(net, root / "net.json")
    quiet = AnnNetwork((36,), [Dense(np.zeros((4, 36)), np.zeros(4)), ann.Activation(1.0, 0.2),
                                Dense(np.zeros((3, 4)), np.zeros(3))])
    io.save_network(quiet, root / "quiet.json")
    return root, test


def config(root, **overrides):
    base = {"method": "aug", "t_max": 100, "test_images": str(root / "test.csv"), "weights": str(root / "net.json"),
            "train_images": str(root / "train.csv")}
    base.update(overrides)
    return ExperimentConfig(**base)


def read_rows(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return lines[0].split(","), [l.split(",") for l in lines[1:]]


class TestConfig:
    @pytest.mark.parametrize("overrides", [
        {"method": "rate"},
        {"t_max": 0},
        {"checkpoints": [0, 10]},
        {"checkpoints": [200]},
        {"m_aug": 0},
        {"method": "ter", "m_aug": 4},
        {"bias_mode": "scaled"},
        {"tolerances": [1.0]},
        {"weights": None},
        {"method": "ter", "train_images": None},
    ])
    def test_rejected(self, tmp_path, overrides):
        with pytest.raises(ConfigError):
            config(tmp_path, **overrides).validate()

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"method": "aug", "t_max": 1, "test_images": "x", "speed": 3})

    def test_digest_tracks_content(self, tmp_path):
        assert config(tmp_path).digest() == config(tmp_path).digest()
        assert config(tmp_path).digest() != config(tmp_path, seed=1).digest()

    def test_load(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps(config(tmp_path).to_dict()))
        assert ExperimentConfig.load(tmp_path / "c.json") == config(tmp_path)
        (tmp_path / "bad.json").write_text("{")
        with pytest.raises(ConfigError):
            ExperimentConfig.load(tmp_path / "bad.json")


class TestRunPipeline:
    def test_artifacts(self, workspace, tmp_path):
        root, _ = workspace
        out = run_pipeline(config(root, checkpoints=[1, 10, 100]), tmp_path)
        assert set(out) == {"error_vs_steps", "latency", "similarity", "gap"}
        header, rows = read_rows(out["error_vs_steps"])
        assert header == ["T", "error", "events"]
        assert [r[0] for r in rows] == ["1", "10", "100"]
        text = out["error_vs_steps"].read_text()
        assert f"# config_hash={config(root, checkpoints=[1, 10, 100]).digest()}" in text
        assert "# seed=0" in text
        latency = json.loads(out["latency"].read_text())
        assert [c["tolerance"] for c in latency["criteria"]] == [0.01, 0.001, 0.0]
        assert latency["seed"] == 0 and "config_hash" in latency
        header, _ = read_rows(out["similarity"])
        assert header == ["T", "mean_similarity", "skipped"]
        gap = json.loads(out["gap"].read_text())
        assert len(gap["max_abs_gap"]) == 2

    def test_quiescent_net(self, workspace, tmp_path):
        root, test = workspace
        out = run_pipeline(config(root, weights=str(root / "quiet.json"), checkpoints=[10]), tmp_path)
        _, rows = read_rows(out["error_vs_steps"])
        expected = 1 - np.mean(test.labels == 0)
        assert float(rows[0][1]) == pytest.approx(expected, abs=1e-15)
        assert rows[0][2] == "0"

    def test_byte_identical_reruns(self, workspace, tmp_path):
        root, _ = workspace
        cfg = config(root, method="ter", t_max=200)
        a = run_pipeline(cfg, tmp_path / "a")
        b = run_pipeline(cfg, tmp_path / "b")
        for name in a:
            assert a[name].read_bytes() == b[name].read_bytes()

    def test_ter_vs_aug_share_order(self, workspace, tmp_path):
        root, test = workspace
        ter = run_pipeline(config(root, method="ter", t_max=500), tmp_path / "ter")
        aug = run_pipeline(config(root, method="aug", t_max=500), tmp_path / "aug")
        _, ter_rows = read_rows(ter["error_vs_steps"])
        _, aug_rows = read_rows(aug["error_vs_steps"])
        assert [r[0] for r in ter_rows] == [r[0] for r in aug_rows]
        # augmented spikes carry more per event, so early errors are never worse here
        assert float(aug_rows[0][1]) <= float(ter_rows[0][1])

    def test_train_first_and_zero_bias(self, workspace, tmp_path):
        root, _ = workspace
        cfg = config(root, weights=None, train_first=True, topology="8", epochs=2, zero_bias_training=True,
                     bias_mode="zero", t_max=20)
        out = run_pipeline(cfg, tmp_path)
        assert out["error_vs_steps"].exists()

    def test_failure_removes_partial_artifacts(self, workspace, tmp_path):
        root, _ = workspace
        cfg = config(root, gap_sample=10_000, t_max=10)
        with pytest.raises(PipelineError) as info:
            run_pipeline(cfg, tmp_path)
        assert info.value.stage == "gap"
        assert list(tmp_path.iterdir()) == []

    def test_dead_layer_fails_in_convert(self, workspace, tmp_path):
        root, _ = workspace
        with pytest.raises(PipelineError) as info:
            run_pipeline(config(root, method="ter", weights=str(root / "quiet.json"), t_max=5), tmp_path)
        assert info.value.stage == "convert"


class TestCli:
    def test_end_to_end(self, workspace, tmp_path):
        root, _ = workspace
        net = str(tmp_path / "net.json")
        assert main(["train", "--train", str(root / "train.csv"), "--epochs", "3", "--alpha-neg", "0.2",
                     "--seed", "1", "--out", net]) == EXIT_OK
        assert main(["convert", net, "--method", "ter", "--train", str(root / "train.csv"),
                     "--out", str(tmp_path / "ter.json")]) == EXIT_OK
        assert main(["convert", net, "--method", "aug", "--maug", "4", "--bias-mode", "zero",
                     "--out", str(tmp_path / "aug.json")]) == EXIT_OK
        assert main(["infer", str(tmp_path / "ter.json"), "--test", str(root / "test.csv"), "--steps", "50",
                     "--out", str(tmp_path / "inf.csv")]) == EXIT_OK
        assert main(["sweep", str(tmp_path / "aug.json"), "--test", str(root / "test.csv"), "--ann", net,
                     "--steps", "100", "--checkpoints", "1,10,100", "--tolerance", "0.01",
                     "--out", str(tmp_path / "sweep")]) == EXIT_OK
        assert main(["similarity", str(tmp_path / "aug.json"), "--ann", net, "--test", str(root / "test.csv"),
                     "--checkpoints", "10,100", "--out", str(tmp_path / "sim.csv")]) == EXIT_OK
        assert main(["gap", str(tmp_path / "aug.json"), "--ann", net, "--test", str(root / "test.csv"),
                     "--steps", "100", "--out", str(tmp_path / "gap.json")]) == EXIT_OK
        _, rows = read_rows(tmp_path / "sweep" / "error_vs_steps.csv")
        assert [r[0] for r in rows] == ["1", "10", "100"]
        assert json.loads((tmp_path / "sweep" / "latency.json").read_text())["criteria"][0]["tolerance"] == 0.01

    def test_run_with_overrides(self, workspace, tmp_path):
        root, _ = workspace
        (tmp_path / "cfg.json").write_text(json.dumps({"method": "ter", "t_max": 10,
                                                       "test_images": str(root / "test.csv"),
                                                       "weights": str(root / "net.json")}))
        code = main(["run", str(tmp_path / "cfg.json"), "--method", "aug", "--steps", "20", "--maug", "2",
                     "--bias-mode", "zero", "--tolerance", "0.05", "--seed", "3", "--out", str(tmp_path / "o")])
        assert code == EXIT_OK
        assert json.loads((tmp_path / "o" / "latency.json").read_text())["seed"] == 3

    def test_config_errors(self, workspace, tmp_path):
        root, _ = workspace
        assert main(["sweep", "x.json", "--test", "t.csv", "--out", str(tmp_path)]) == EXIT_CONFIG
        assert main(["convert", str(root / "net.json"), "--method", "ter", "--out", str(tmp_path / "x")]) == EXIT_CONFIG
        (tmp_path / "cfg.json").write_text(json.dumps({"method": "aug", "t_max": 0, "test_images": "t",
                                                       "weights": "w"}))
        assert main(["run", str(tmp_path / "cfg.json"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG

    def test_io_errors(self, workspace, tmp_path):
        root, _ = workspace
        assert main(["infer", str(tmp_path / "missing.json"), "--test", str(root / "test.csv"), "--steps", "3",
                     "--out", str(tmp_path / "i.csv")]) == EXIT_IO
        (tmp_path / "bad.json").write_text("not json")
        assert main(["infer", str(tmp_path / "bad.json"), "--test", str(root / "test.csv"), "--steps", "3",
                     "--out", str(tmp_path / "i.csv")]) == EXIT_IO

    def test_numeric_errors(self, workspace, tmp_path):
        root, _ = workspace
        assert main(["convert", str(root / "quiet.json"), "--method", "ter", "--train", str(root / "train.csv"),
                     "--out", str(tmp_path / "x.json")]) == EXIT_NUMERIC
        assert main(["train", "--train", str(root / "train.csv"), "--epochs", "2", "--lr", "1e200",
                     "--out", str(tmp_path / "n.json")]) == EXIT_NUMERIC

    def test_codes_distinct(self):
        assert len({EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC}) == 4
