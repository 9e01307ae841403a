import json
import math

import numpy as np
import pytest

from snnconv import ann, converter, io
from snnconv.ann import AnnNetwork, Dense
from snnconv.data import LabeledDataset
from snnconv.errors import CompositionError, ConsistencyError, FormatError, TruncatedFileError, UnsupportedVersionError


def idx_pair(tmp_path, images, labels):
    img, lab = tmp_path / "images.idx", tmp_path / "labels.idx"
    io.write_idx_images(img, images)
    io.write_idx_labels(lab, labels)
    return img, lab


class TestIdx:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        images = rng.integers(0, 256, size=(2, 28, 28), dtype=np.uint8)
        ds = io.load_idx_dataset(*idx_pair(tmp_path, images, [3, 7]))
        assert len(ds) == 2
        assert ds.sample_shape == (1, 28, 28)
        np.testing.assert_array_equal(ds.images[:, 0], images / 255.0)
        np.testing.assert_array_equal(ds.labels, [3, 7])

    def test_big_endian_header(self, tmp_path):
        img, lab = idx_pair(tmp_path, np.zeros((2, 3, 4), dtype=np.uint8), [0, 1])
        assert img.read_bytes()[:16] == bytes.fromhex("00000803 00000002 00000003 00000004".replace(" ", ""))
        assert lab.read_bytes()[:8] == bytes.fromhex("0000080100000002")

    def test_all_zero_image(self, tmp_path):
        ds = io.load_idx_dataset(*idx_pair(tmp_path, np.zeros((1, 5, 5), dtype=np.uint8), [0]))
        assert not ds.images.any()

    def test_count_mismatch(self, tmp_path):
        with pytest.raises(ConsistencyError):
            io.load_idx_dataset(*idx_pair(tmp_path, np.zeros((2, 4, 4), dtype=np.uint8), [0, 1, 2]))

    def test_bad_magic(self, tmp_path):
        img, lab = idx_pair(tmp_path, np.zeros((2, 4, 4), dtype=np.uint8), [0, 1])
        with pytest.raises(FormatError):
            io.load_idx_dataset(lab, img)

    def test_truncated_reports_offset(self, tmp_path):
        img, lab = idx_pair(tmp_path, np.zeros((2, 4, 4), dtype=np.uint8), [0, 1])
        img.write_bytes(img.read_bytes()[:-5])
        with pytest.raises(TruncatedFileError) as info:
            io.load_idx_dataset(img, lab)
        assert info.value.offset == 16 + 32 - 5
        assert isinstance(info.value, OSError)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "short.idx"
        path.write_bytes(b"\x00\x00\x08")
        with pytest.raises(TruncatedFileError):
            io.read_idx_labels(path)


class TestCsv:
    def test_round_trip(self, tmp_path):
        ds = LabeledDataset(np.random.default_rng(1).random((5, 6)), [0, 1, 2, 1, 0], "x")
        io.save_csv_dataset(tmp_path / "d.csv", ds)
        back = io.load_dataset(tmp_path / "d.csv", sample_shape=(2, 3))
        assert back.sample_shape == (2, 3)
        np.testing.assert_array_equal(back.images.reshape(5, 6), ds.images)
        np.testing.assert_array_equal(back.labels, ds.labels)

    def test_ragged(self, tmp_path):
        (tmp_path / "r.csv").write_text("0.1,0.2,1\n0.3,0\n")
        with pytest.raises(ConsistencyError):
            io.load_csv_dataset(tmp_path / "r.csv")

    def test_bad_values(self, tmp_path):
        (tmp_path / "b.csv").write_text("0.1,abc,1\n")
        with pytest.raises(FormatError):
            io.load_csv_dataset(tmp_path / "b.csv")
        (tmp_path / "l.csv").write_text("0.1,0.2,1.5\n")
        with pytest.raises(FormatError):
            io.load_csv_dataset(tmp_path / "l.csv")


def random_two_layer(seed):
    rng = np.random.default_rng(seed)
    net = ann.mlp([4, 6, 3], 1.0, 0.05, seed=seed)
    for i in net.weighted_indices():
        net.layers[i].bias[:] = rng.normal(size=net.layers[i].bias.shape)
    net.metadata.update({"seed": seed, "epochs": 3, "dataset": "synthetic"})
    return net


class TestWeightFile:
    def test_round_trip_logits(self, tmp_path):
        net = random_two_layer(0)
        io.save_network(net, tmp_path / "w.json")
        back = io.load_network(tmp_path / "w.json")
        x = np.random.default_rng(1).normal(size=(10, 4))
        assert np.array_equal(ann.forward(net, x)[0], ann.forward(back, x)[0])
        assert back.metadata == net.metadata

    def test_byte_identical_resave(self, tmp_path):
        net = ann.from_topology((1, 8, 8), "2c3-p2-5", 1.0, 0.1, seed=2)
        io.save_network(net, tmp_path / "a.json")
        io.save_network(io.load_network(tmp_path / "a.json"), tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_corrupted_shape_names_layer(self, tmp_path):
        net = random_two_layer(3)
        doc = json.loads(io.network_to_text(net))
        doc["layers"][2]["shape"] = [3, 5]
        (tmp_path / "bad.json").write_text(json.dumps(doc))
        with pytest.raises(CompositionError) as info:
            io.load_network(tmp_path / "bad.json")
        assert info.value.layer_index == 2
        assert "layer 2" in str(info.value)

    def test_inconsistent_layers(self, tmp_path):
        net = random_two_layer(3)
        doc = json.loads(io.network_to_text(net))
        doc["layers"][2]["shape"] = [2, 9]
        doc["layers"][2]["weights"] = [0.0] * 18
        doc["layers"][2]["bias"] = [0.0, 0.0]
        (tmp_path / "bad.json").write_text(json.dumps(doc))
        with pytest.raises(CompositionError):
            io.load_network(tmp_path / "bad.json")

    def test_absent_bias_loads_zero(self, tmp_path):
        doc = json.loads(io.network_to_text(random_two_layer(4)))
        for layer in doc["layers"]:
            layer.pop("bias", None)
        (tmp_path / "nb.json").write_text(json.dumps(doc))
        back = io.load_network(tmp_path / "nb.json")
        assert all(not back.layers[i].bias.any() for i in back.weighted_indices())

    def test_version_mismatch(self, tmp_path):
        doc = json.loads(io.network_to_text(random_two_layer(5)))
        doc["version"] = 99
        (tmp_path / "v.json").write_text(json.dumps(doc))
        with pytest.raises(UnsupportedVersionError):
            io.load_network(tmp_path / "v.json")

    def test_not_json(self, tmp_path):
        (tmp_path / "x.json").write_text("weights: 1, 2, 3")
        with pytest.raises(FormatError):
            io.load_network(tmp_path / "x.json")

    def test_wrong_format_tag(self, tmp_path):
        io.save_snn(converter.aug_map(random_two_layer(6)), tmp_path / "s.json")
        with pytest.raises(FormatError):
            io.load_network(tmp_path / "s.json")


class TestSpikingFile:
    def test_round_trip(self, tmp_path):
        net = AnnNetwork((2,), [Dense(np.eye(2), np.zeros(2)), ann.Activation(1.0, 0.0), Dense(np.ones((2, 2)), np.zeros(2))])
        with pytest.warns(RuntimeWarning):
            snn = converter.set_aug_bound(converter.aug_map(net), 3)
        io.save_snn(snn, tmp_path / "s.json")
        back = io.load_snn(tmp_path / "s.json")
        assert back.thresholds == snn.thresholds
        assert back.thresholds[0][1] == -math.inf
        assert [layer.m_aug for layer in back.spiking_layers()] == [3, 3]
        io.save_snn(back, tmp_path / "t.json")
        assert (tmp_path / "s.json").read_bytes() == (tmp_path / "t.json").read_bytes()

    def test_ter_metadata(self, tmp_path):
        net = random_two_layer(7)
        snn = converter.ter_map(net, converter.ScalingFactors([1.5, 2.5]))
        io.save_snn(snn, tmp_path / "t.json")
        back = io.load_snn(tmp_path / "t.json")
        assert back.method == "ter"
        assert back.metadata["scaling_factors"] == [1.5, 2.5]
