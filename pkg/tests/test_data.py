import numpy as np
import pytest

from spmlab.data import (
    MultiLabelDataset,
    SyntheticSpec,
    generate_synthetic,
    ingest_csv,
    load_split_csv,
    write_split_csv,
)


class TestGenerator:
    def test_split_sizes_follow_ratio(self):
        splits = generate_synthetic(SyntheticSpec(n_samples=4000, seed=0))
        assert splits["train"].n_samples == 2000
        assert splits["val"].n_samples == 1000
        assert splits["test"].n_samples == 1000

    def test_every_row_has_a_positive(self):
        splits = generate_synthetic(SyntheticSpec(n_samples=800, seed=1))
        for ds in splits.values():
            assert np.all(ds.y_true.sum(axis=1) >= 1)

    def test_extent_support_matches_labels(self):
        ds = generate_synthetic(SyntheticSpec(n_samples=500, seed=2))["train"]
        assert np.all((ds.extents > 0) == (ds.y_true == 1))
        np.testing.assert_allclose(ds.extents.sum(axis=1), 1.0, atol=1e-9)

    def test_mean_cardinality_near_target(self):
        ds = generate_synthetic(SyntheticSpec(n_samples=4000, seed=3))["train"]
        assert abs(ds.y_true.sum(axis=1).mean() - 2.9) < 0.15

    def test_forced_full_cardinality(self):
        splits = generate_synthetic(
            SyntheticSpec(n_samples=100, n_classes=2, mean_positives=2.0, seed=4)
        )
        for ds in splits.values():
            assert np.all(ds.y_true == 1.0)

    def test_same_seed_same_data(self):
        a = generate_synthetic(SyntheticSpec(n_samples=300, seed=5))["train"]
        b = generate_synthetic(SyntheticSpec(n_samples=300, seed=5))["train"]
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.y_true, b.y_true)
        assert np.array_equal(a.extents, b.extents)

    def test_infeasible_cardinality_rejected(self):
        with pytest.raises(ValueError, match="mean_positives"):
            generate_synthetic(SyntheticSpec(n_classes=4, mean_positives=9.0))


class TestCsvRoundTrip:
    def test_byte_identical_regeneration(self, tmp_path):
        spec = SyntheticSpec(n_samples=200, n_classes=5, n_features=6, seed=6)
        for sub in ("a", "b"):
            splits = generate_synthetic(spec)
            write_split_csv(splits["train"], tmp_path / sub, "train")
        for name in ("train_features.csv", "train_labels.csv", "train_extents.csv"):
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b

    def test_round_trip_preserves_values(self, tmp_path):
        splits = generate_synthetic(
            SyntheticSpec(n_samples=120, n_classes=4, n_features=5, seed=7)
        )
        ds = splits["val"]
        write_split_csv(ds, tmp_path, "val")
        back = load_split_csv(tmp_path, "val")
        assert np.array_equal(back.features, ds.features)
        assert np.array_equal(back.y_true, ds.y_true)
        assert np.array_equal(back.extents, ds.extents)

    def test_tiny_hand_files(self, tmp_path):
        (tmp_path / "features.csv").write_text("1.0,2.0\n3.0,4.0\n5.0,6.0\n")
        (tmp_path / "labels.csv").write_text("1,0\n0,1\n1,1\n")
        ds = ingest_csv(tmp_path / "features.csv", tmp_path / "labels.csv")
        assert ds.n_samples == 3 and ds.n_classes == 2
        write_split_csv(ds, tmp_path, "copy")
        back = load_split_csv(tmp_path, "copy")
        assert np.array_equal(back.features, ds.features)


class TestIngestValidation:
    def write(self, tmp_path, features, labels, extents=None):
        (tmp_path / "f.csv").write_text(features)
        (tmp_path / "l.csv").write_text(labels)
        paths = [tmp_path / "f.csv", tmp_path / "l.csv"]
        if extents is not None:
            (tmp_path / "e.csv").write_text(extents)
            paths.append(tmp_path / "e.csv")
        return paths

    def test_all_zero_label_row_rejected_with_line(self, tmp_path):
        paths = self.write(tmp_path, "1.0\n2.0\n", "1\n0\n")
        with pytest.raises(ValueError, match="line 2 has no positive"):
            ingest_csv(*paths)

    def test_non_binary_label_rejected(self, tmp_path):
        paths = self.write(tmp_path, "1.0\n", "0.5\n")
        with pytest.raises(ValueError, match="non-binary"):
            ingest_csv(*paths)

    def test_row_count_mismatch(self, tmp_path):
        paths = self.write(tmp_path, "1.0\n2.0\n", "1\n")
        with pytest.raises(ValueError, match="rows"):
            ingest_csv(*paths)

    def test_extent_on_negative_label_rejected(self, tmp_path):
        paths = self.write(
            tmp_path, "1.0,0.0\n", "1,0\n", "0.5,0.5\n"
        )
        with pytest.raises(ValueError, match="line 1, column 2"):
            ingest_csv(*paths)

    def test_negative_extent_rejected(self, tmp_path):
        paths = self.write(tmp_path, "1.0,0.0\n", "1,1\n", "1.5,-0.5\n")
        with pytest.raises(ValueError, match="negative extent"):
            ingest_csv(*paths)

    def test_malformed_cell_names_position(self, tmp_path):
        paths = self.write(tmp_path, "1.0,oops\n", "1,0\n")
        with pytest.raises(ValueError, match="line 1, column 2"):
            ingest_csv(*paths)


class TestDatasetInvariants:
    def test_rejects_row_without_positive(self):
        with pytest.raises(ValueError, match="no positive"):
            MultiLabelDataset(np.zeros((1, 2)), np.zeros((1, 2)))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError, match="rows"):
            MultiLabelDataset(np.zeros((2, 2)), np.ones((3, 2)))

    def test_with_observed_keeps_arrays(self):
        ds = MultiLabelDataset(np.zeros((2, 2)), np.ones((2, 2)))
        obs = np.array([[1.0, 0.0], [0.0, 1.0]])
        ds2 = ds.with_observed(obs)
        assert np.array_equal(ds2.y_observed, obs)
        assert ds.y_observed is None
