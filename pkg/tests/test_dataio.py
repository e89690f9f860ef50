import struct
from pathlib import Path

import numpy as np
import pytest

from src.dataio import (
    SynthSpec,
    generate_synthetic,
    load_dataset,
    load_features,
    load_groups,
    load_labels,
    load_model,
    parse_groups,
    save_features,
    save_groups,
    save_labels,
    save_model,
)
from src.errors import DataError, FormatError
from src.model import GroupPartition, LatentModel

DATA_DIR = Path(__file__).resolve().parents[1] / "data"

CLOTHING = [
    "black", "blue", "brown", "cyan", "gray", "green", "many", "red", "purple", "white", "yellow",
    "floral", "graphics", "plaid", "solid", "stripe", "spot",
    "necktie", "scarf", "placket", "collar",
    "skin-exposure", "gender",
]


class TestFeatures:
    def test_binary_round_trip_is_bit_identical(self, tmp_path, rng):
        x = rng.standard_normal((7, 4)).astype(np.float32).astype(np.float64)
        first = save_features(tmp_path / "a.mtlf", x)
        loaded = load_features(first)
        np.testing.assert_array_equal(loaded, x)
        second = save_features(tmp_path / "b.mtlf", loaded)
        assert first.read_bytes() == second.read_bytes()

    def test_header_layout(self, tmp_path):
        path = save_features(tmp_path / "f.mtlf", np.ones((2, 3)))
        raw = path.read_bytes()
        assert struct.unpack_from("<4sHII", raw, 0) == (b"MTLF", 1, 2, 3)
        assert len(raw) == 14 + 4 * 6

    def test_truncated_payload(self, tmp_path):
        path = save_features(tmp_path / "f.mtlf", np.ones((2, 3)))
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(FormatError, match="expected 38 bytes, got 34"):
            load_features(path)

    def test_wrong_magic_and_version(self, tmp_path):
        path = tmp_path / "f.mtlf"
        path.write_bytes(struct.pack("<4sHII", b"XXXX", 1, 0, 0))
        with pytest.raises(FormatError, match="magic"):
            load_features(path)
        path.write_bytes(struct.pack("<4sHII", b"MTLF", 2, 0, 0))
        with pytest.raises(FormatError, match="version"):
            load_features(path)

    def test_nan_reported_with_byte_offset(self, tmp_path):
        path = tmp_path / "f.mtlf"
        payload = np.array([1.0, 2.0, 3.0, np.nan], dtype="<f4").tobytes()
        path.write_bytes(struct.pack("<4sHII", b"MTLF", 1, 2, 2) + payload)
        with pytest.raises(FormatError, match="byte offset 26"):
            load_features(path)

    def test_value_beyond_float32_rejected_before_writing(self, tmp_path):
        path = tmp_path / "f.mtlf"
        x = np.zeros((2, 3))
        x[1, 2] = 1e39
        with pytest.raises(DataError, match="row 1 col 2"):
            save_features(path, x)
        assert not path.exists()

    def test_large_value_allowed_in_csv(self, tmp_path):
        path = tmp_path / "f.csv"
        save_features(path, np.array([[1e39]]))
        assert load_features(path)[0, 0] == 1e39

    def test_csv_fallback(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("1.5,2\n-3,4e-1\n")
        np.testing.assert_array_equal(load_features(path), [[1.5, 2.0], [-3.0, 0.4]])

    def test_csv_errors_carry_line_number(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("1,2\n3,abc\n")
        with pytest.raises(FormatError, match="line 2"):
            load_features(path)
        path.write_text("1,2\n3\n")
        with pytest.raises(FormatError, match="line 2"):
            load_features(path)
        path.write_text("1,nan\n")
        with pytest.raises(FormatError, match="line 1"):
            load_features(path)


class TestLabels:
    def test_round_trip(self, tmp_path):
        labels = np.array([[1, -1], [-1, -1], [1, 1]], dtype=float)
        path = save_labels(tmp_path / "y.csv", ["a", "b"], labels)
        names, loaded = load_labels(path)
        assert names == ["a", "b"]
        np.testing.assert_array_equal(loaded, labels)

    def test_invalid_label_position(self, tmp_path):
        path = tmp_path / "y.csv"
        path.write_text("a,b\n2,1\n")
        with pytest.raises(FormatError, match="invalid label 2 at row 1 col 1"):
            load_labels(path)

    def test_zero_one_mode(self, tmp_path):
        path = tmp_path / "y.csv"
        path.write_text("a\n0\n1\n")
        with pytest.raises(FormatError):
            load_labels(path)
        _, labels = load_labels(path, zero_one=True)
        np.testing.assert_array_equal(labels[:, 0], [-1.0, 1.0])

    def test_ragged_row(self, tmp_path):
        path = tmp_path / "y.csv"
        path.write_text("a,b\n1,1\n1\n")
        with pytest.raises(FormatError, match="row 2"):
            load_labels(path)

    def test_duplicate_header(self, tmp_path):
        path = tmp_path / "y.csv"
        path.write_text("a,a\n1,1\n")
        with pytest.raises(FormatError, match="duplicate"):
            load_labels(path)


class TestGroups:
    def test_two_groups(self):
        part = parse_groups("Colors: black, white\nPatterns: striped\n", ["black", "white", "striped"])
        assert part.n_groups == 2
        assert part.groups[0] == ("Colors", (0, 1))

    def test_unknown_attribute(self):
        with pytest.raises(FormatError, match="unknown attribute 'blak'"):
            parse_groups("Colors: blak, white\nPatterns: striped\n", ["black", "white", "striped"])

    def test_duplicate_and_uncovered(self):
        with pytest.raises(FormatError) as err:
            parse_groups("A: x, y\nB: y\n", ["x", "y", "z"])
        text = " ".join(err.value.issues)
        assert "listed in both" in text
        assert "'z' is not in any group" in text

    def test_clothing_fixture(self):
        part = load_groups(DATA_DIR / "clothing_groups.txt", CLOTHING)
        assert part.n_groups == 4
        assert part.names == ["Colors", "Patterns", "Cloth-parts", "Appearance"]
        assert part.sizes() == [11, 6, 4, 2]

    def test_round_trip(self, tmp_path):
        names = ["a", "b", "c"]
        part = GroupPartition((("g1", (0, 2)), ("g2", (1,))))
        path = save_groups(tmp_path / "g.txt", part, names)
        assert load_groups(path, names) == part


class TestModel:
    def test_round_trip_is_bit_identical(self, tmp_path, rng):
        model = LatentModel(rng.standard_normal((6, 3)), rng.standard_normal((3, 4)), ("a", "bé", "c", "d"))
        first = save_model(tmp_path / "m.mtlm", model)
        loaded = load_model(first)
        assert loaded.names == model.names
        assert loaded.k == loaded.s.shape[0] == 3
        np.testing.assert_array_equal(loaded.l, model.l)
        second = save_model(tmp_path / "n.mtlm", loaded)
        assert first.read_bytes() == second.read_bytes()

    def test_wrong_magic(self, tmp_path, rng):
        path = save_model(tmp_path / "m.mtlm", LatentModel(np.ones((2, 1)), np.ones((1, 1)), ("a",)))
        path.write_bytes(b"MTLF" + path.read_bytes()[4:])
        with pytest.raises(FormatError, match="magic"):
            load_model(path)

    def test_version_mismatch(self, tmp_path):
        path = save_model(tmp_path / "m.mtlm", LatentModel(np.ones((2, 1)), np.ones((1, 1)), ("a",)))
        raw = bytearray(path.read_bytes())
        raw[4:6] = struct.pack("<H", 7)
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version mismatch"):
            load_model(path)

    def test_truncation(self, tmp_path):
        path = save_model(tmp_path / "m.mtlm", LatentModel(np.ones((2, 1)), np.ones((1, 1)), ("a",)))
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(FormatError, match="truncated"):
            load_model(path)


class TestLoadDataset:
    def test_pairs_pools_with_label_files(self, tmp_path, rng):
        save_features(tmp_path / "a.mtlf", np.ones((3, 2)))
        save_labels(tmp_path / "a.csv", ["x", "y"], np.ones((3, 2)))
        save_features(tmp_path / "b.csv", np.ones((5, 2)))
        save_labels(tmp_path / "b.csv.labels.csv", ["z"], -np.ones((5, 1)))
        ds = load_dataset(
            [tmp_path / "a.mtlf", tmp_path / "b.csv"], [tmp_path / "a.csv", tmp_path / "b.csv.labels.csv"]
        )
        assert ds.names == ["x", "y", "z"]
        assert ds.sizes == [3, 3, 5]

    def test_row_count_mismatch(self, tmp_path):
        save_features(tmp_path / "a.mtlf", np.ones((3, 2)))
        save_labels(tmp_path / "a.csv", ["x"], np.ones((4, 1)))
        with pytest.raises(DataError, match="4 label rows"):
            load_dataset([tmp_path / "a.mtlf"], [tmp_path / "a.csv"])


def _spec(**kwargs):
    base = dict(d=10, k_true=6, m=6, partition=GroupPartition.contiguous(6, 3), n_per_task=50, n_test=400)
    base.update(kwargs)
    return SynthSpec(**base)


class TestSynthetic:
    def test_noiseless_pools_are_separable(self):
        data = generate_synthetic(_spec(), seed=7)
        for m, task in enumerate(data.train.tasks):
            scores = task.x @ data.w_true[:, m]
            assert np.all(np.where(scores >= 0, 1.0, -1.0) == task.y)

    def test_same_seed_same_data(self):
        a = generate_synthetic(_spec(), seed=3)
        b = generate_synthetic(_spec(), seed=3)
        np.testing.assert_array_equal(a.l_true, b.l_true)
        for ta, tb in zip(a.train.tasks, b.train.tasks):
            np.testing.assert_array_equal(ta.x, tb.x)
            np.testing.assert_array_equal(ta.y, tb.y)

    def test_flip_rate(self):
        spec = _spec(d=5, k_true=3, m=2, partition=GroupPartition.contiguous(2, 1), n_per_task=50000, noise=0.1)
        data = generate_synthetic(spec, seed=11)
        flips = 0
        total = 0
        for m, task in enumerate(data.train.tasks):
            clean = np.where(task.x @ data.w_true[:, m] >= 0, 1.0, -1.0)
            flips += int(np.sum(clean != task.y))
            total += task.n
        assert total == 100000
        assert abs(flips / total - 0.1) <= 0.01

    def test_group_support(self):
        spec = _spec()
        data = generate_synthetic(spec, seed=5)
        bounds = [0, 2, 4, 6]
        group_of = spec.partition.group_of(spec.m)
        for m in range(spec.m):
            g = group_of[m]
            outside = np.ones(spec.k_true, dtype=bool)
            outside[bounds[g]:bounds[g + 1]] = False
            assert np.all(data.s_true[outside, m] == 0.0)

    def test_median_margin_scaled(self):
        data = generate_synthetic(_spec(margin_scale=2.0), seed=1)
        x_test = data.test.tasks[0].x
        medians = np.median(np.abs(x_test @ data.w_true), axis=0)
        np.testing.assert_allclose(medians, 2.0, rtol=1e-10)

    def test_undersampled_sizes(self):
        data = generate_synthetic(_spec(n_per_task=(15, 15, 50, 50, 50, 50)), seed=1)
        assert data.train.sizes == [15, 15, 50, 50, 50, 50]
        assert data.train.names[0] == "attr00"

    def test_infeasible_band(self):
        with pytest.raises(DataError, match="infeasible"):
            generate_synthetic(_spec(k_true=2), seed=0)

    def test_invalid_spec(self):
        with pytest.raises(DataError):
            _spec(noise=0.7)
