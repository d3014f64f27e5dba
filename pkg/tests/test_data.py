import struct

import numpy as np
import pytest

from rapnet.data import (
    BadMagicError,
    ConfigError,
    CountMismatchError,
    Dataset,
    ExperimentConfig,
    TruncatedError,
    disjoint_subsets,
    experiment_datasets,
    load_config,
    load_idx_pair,
    parse_config,
    parse_grid,
    parse_idx_images,
    parse_idx_labels,
    subset,
    synthetic_dataset,
    write_config,
    write_idx_pair,
    write_results,
)


def idx_images(pixels, rows, cols, magic=2051, count=None):
    n = len(pixels) // (rows * cols) if count is None else count
    return struct.pack(">4i", magic, n, rows, cols) + bytes(pixels)


def idx_labels(labels, magic=2049, count=None):
    return struct.pack(">2i", magic, len(labels) if count is None else count) + bytes(labels)


class TestIdx:
    def test_two_by_two(self, tmp_path):
        (tmp_path / "img").write_bytes(idx_images([0, 255, 128, 64], 2, 2))
        (tmp_path / "lab").write_bytes(idx_labels([7]))
        ds = load_idx_pair(tmp_path / "img", tmp_path / "lab")
        np.testing.assert_allclose(ds.inputs, [[0.0, 1.0, 128 / 255, 64 / 255]], rtol=1e-15)
        assert ds.inputs[0, 2] == pytest.approx(0.50196, abs=5e-6)
        assert ds.inputs[0, 3] == pytest.approx(0.25098, abs=5e-6)
        assert ds.labels.tolist() == [7]

    def test_bad_magic(self):
        with pytest.raises(BadMagicError):
            parse_idx_images(idx_images([0] * 4, 2, 2, magic=2049))
        with pytest.raises(BadMagicError):
            parse_idx_labels(idx_labels([1], magic=2051))

    def test_truncated(self):
        with pytest.raises(TruncatedError):
            parse_idx_images(idx_images([0] * 3, 2, 2, count=1))
        with pytest.raises(TruncatedError):
            parse_idx_labels(idx_labels([], count=2))
        with pytest.raises(TruncatedError):
            parse_idx_images(b"\x00\x00\x08")

    def test_count_mismatch(self, tmp_path):
        (tmp_path / "img").write_bytes(idx_images([0] * 8, 2, 2))
        (tmp_path / "lab").write_bytes(idx_labels([1]))
        with pytest.raises(CountMismatchError):
            load_idx_pair(tmp_path / "img", tmp_path / "lab")

    def test_round_trip(self, tmp_path):
        ds = synthetic_dataset(3, 12, 9, 0.3, seed=4)
        write_idx_pair(ds, tmp_path / "i", tmp_path / "l", shape=(3, 4))
        back = load_idx_pair(tmp_path / "i", tmp_path / "l")
        np.testing.assert_array_equal(back.labels, ds.labels)
        assert np.abs(back.inputs - ds.inputs).max() <= 0.5 / 255 + 1e-15


class TestDataset:
    def test_validation(self):
        with pytest.raises(ValueError):
            Dataset(np.full((2, 3), 1.5), [0, 1])
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 3)), [0])

    def test_one_hot(self):
        ds = Dataset(np.zeros((3, 2)), [2, 0, 1])
        np.testing.assert_array_equal(ds.one_hot(), np.eye(3)[[2, 0, 1]])

    def test_subset(self):
        ds = synthetic_dataset(5, 4, 100, 0.1, seed=0)
        a = subset(ds, 30, seed=1)
        assert len(a) == 30
        assert np.array_equal(a.inputs, subset(ds, 30, seed=1).inputs)
        with pytest.raises(ValueError):
            subset(ds, 101)

    def test_disjoint(self):
        ds = Dataset(np.linspace(0, 1, 50)[:, None], np.zeros(50))
        a, b = disjoint_subsets(ds, (30, 20), seed=3)
        assert not set(a.inputs[:, 0]) & set(b.inputs[:, 0])
        with pytest.raises(ValueError):
            disjoint_subsets(ds, (30, 21))


class TestSynthetic:
    def test_noise_free_equals_prototypes(self):
        ds = synthetic_dataset(10, 16, 1000, 0.0, seed=5, prototype_seed=2)
        assert np.bincount(ds.labels).tolist() == [100] * 10
        protos = np.array([ds.inputs[ds.labels == k][0] for k in range(10)])
        np.testing.assert_array_equal(ds.inputs, protos[ds.labels])

    def test_nearest_prototype(self):
        protos = synthetic_dataset(10, 784, 10, 0.0, prototype_seed=0)
        order = np.argsort(protos.labels)
        centres = protos.inputs[order]
        ds = synthetic_dataset(10, 784, 500, 0.05, seed=1, prototype_seed=0)
        d = ((ds.inputs[:, None, :] - centres[None]) ** 2).sum(axis=2)
        assert np.mean(d.argmin(axis=1) != ds.labels) < 0.05

    def test_shared_prototypes(self):
        a = synthetic_dataset(3, 5, 3, 0.0, seed=1, prototype_seed=9)
        b = synthetic_dataset(3, 5, 3, 0.0, seed=2, prototype_seed=9)
        assert sorted(map(tuple, a.inputs)) == sorted(map(tuple, b.inputs))

    def test_range(self):
        ds = synthetic_dataset(4, 30, 200, 2.0, seed=0)
        assert ds.inputs.min() >= 0.0 and ds.inputs.max() <= 1.0


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = ExperimentConfig(
            arch="20-8-6-4", seed=3, lr_schedule=((5, 0.1), (2, 0.01)), dropconnect={3: 0.5},
            fa_layers=(3,), synthetic=True, synthetic_noise=0.3, num_classes=4,
        )
        write_config(cfg, tmp_path / "c.txt")
        assert load_config(tmp_path / "c.txt") == cfg

    def test_comments_and_overrides(self):
        cfg = parse_config("# comment\narch = 6-4-3  # inline\nseed=2\n", {"seed": 5})
        assert cfg.widths == [6, 4, 3] and cfg.seed == 5

    @pytest.mark.parametrize("text", [
        "dropconnect = 1:1.5",
        "dropconnect = 9:0.5",
        "fa_layers = 1",
        "bogus = 1",
        "seed = x",
        "arch",
        "lr_schedule = 10:-0.1",
    ])
    def test_errors(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_synthetic_datasets(self):
        cfg = ExperimentConfig(arch="16-5-4", synthetic=True, num_classes=4, train_size=40, test_size=20)
        tr, te = experiment_datasets(cfg)
        assert (len(tr), len(te), tr.dim) == (40, 20, 16)
        assert not np.array_equal(tr.inputs[:20], te.inputs)

    def test_missing_data(self):
        with pytest.raises(ConfigError):
            experiment_datasets(ExperimentConfig())


class TestResults:
    def test_header_only(self, tmp_path):
        write_results(["a", "b"], [], tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_bytes() == b"a,b\n"

    def test_formatting(self, tmp_path):
        write_results(["x", "ok", "n"], [(0.1, True, 3)], tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_bytes() == b"x,ok,n\n0.1,1,3\n"

    def test_width_mismatch(self, tmp_path):
        with pytest.raises(ValueError):
            write_results(["a"], [(1, 2)], tmp_path / "r.csv")


class TestGrid:
    def test_lambda_grid(self):
        g = parse_grid("0:9:0.25")
        assert len(g) == 37 and g[0] == 0.0 and g[-1] == 9.0

    def test_unit_grid(self):
        g = parse_grid("0:1:0.05")
        assert len(g) == 21 and g[6] == 0.3

    def test_single_and_errors(self):
        assert parse_grid("6.336") == [6.336]
        for bad in ("1:0:0.1", "0:1:0", "0:1"):
            with pytest.raises(ValueError):
                parse_grid(bad)
