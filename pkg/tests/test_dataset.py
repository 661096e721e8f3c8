from datetime import datetime

import numpy as np
import pytest

from condmon import dataset, features
from condmon.dataset import (
    BearingSelector,
    DataFormatError,
    DatasetManifest,
    DatasetSpec,
    LooFold,
    RawSnapshot,
    SyntheticConfig,
    make_loo_folds,
    parse_snapshot,
    parse_timestamp,
    scan_snapshots,
    snapshot_to_text,
    synth_bearing,
)


def make_text(matrix):
    return "\n".join("\t".join(format(v, ".17g") for v in row) for row in matrix)


class TestParsing:
    def test_full_size_snapshot(self):
        rng = np.random.default_rng(0)
        mat = rng.normal(scale=0.1, size=(20480, 8)).round(4)
        snap = parse_snapshot(make_text(mat), expected_channels=8)
        assert snap.channels.shape == (20480, 8)
        np.testing.assert_array_equal(snap.channels, mat)

    def test_short_file_rejected(self):
        mat = np.zeros((20479, 8))
        with pytest.raises(DataFormatError, match="short file"):
            parse_snapshot(make_text(mat), expected_channels=8)

    def test_relaxed_rows_for_fixtures(self):
        mat = np.arange(40.0).reshape(10, 4)
        snap = parse_snapshot(make_text(mat), expected_channels=4, expected_rows=None)
        assert snap.channels.shape == (10, 4)

    def test_wrong_column_count(self):
        with pytest.raises(DataFormatError, match="columns"):
            parse_snapshot("1 2 3\n4 5 6\n", expected_channels=4, expected_rows=None)

    def test_non_numeric_token(self):
        with pytest.raises(DataFormatError, match="non-numeric"):
            parse_snapshot("1 2\n3 oops\n", expected_channels=2, expected_rows=None)

    def test_round_trip_identical(self):
        rng = np.random.default_rng(1)
        mat = rng.normal(size=(50, 4))
        snap = RawSnapshot(datetime(2004, 2, 12), mat)
        again = parse_snapshot(snapshot_to_text(snap), expected_channels=4, expected_rows=None)
        np.testing.assert_array_equal(again.channels, mat)

    def test_timestamp_parsing(self):
        assert parse_timestamp("2004.02.12.10.32.39") == datetime(2004, 2, 12, 10, 32, 39)
        with pytest.raises(DataFormatError):
            parse_timestamp("notes.txt")


class TestScan:
    def test_sorted_by_timestamp(self, tmp_path):
        names = ["2004.02.13.01.02.03", "2004.02.12.10.32.39", "2004.02.12.10.42.39"]
        for n in names:
            (tmp_path / n).write_text("0\n")
        entries = scan_snapshots(tmp_path)
        assert [p.name for _, p in entries] == sorted(names)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(DataFormatError, match="does not exist"):
            scan_snapshots(tmp_path / "nope")

    def test_zero_files(self, tmp_path):
        with pytest.raises(DataFormatError, match="zero files"):
            scan_snapshots(tmp_path)

    def test_bad_filenames_listed(self, tmp_path):
        (tmp_path / "2004.02.12.10.32.39").write_text("0\n")
        (tmp_path / "readme.md").write_text("x")
        with pytest.raises(DataFormatError, match="readme.md"):
            scan_snapshots(tmp_path)


class TestSelectors:
    def test_column_mapping(self):
        assert BearingSelector(2, 3).column == 2
        assert BearingSelector(1, 1).column == 0
        assert BearingSelector(1, 4).column == 6
        assert BearingSelector(3, 1).column == 0

    def test_parse_forms(self):
        assert BearingSelector.parse("d1b3") == BearingSelector(1, 3)
        assert BearingSelector.parse("2.4") == BearingSelector(2, 4)
        with pytest.raises(ValueError):
            BearingSelector.parse("bearing7")

    def test_extract_series(self):
        mat = np.arange(32.0).reshape(4, 8)
        snap = RawSnapshot(datetime(2004, 1, 1), mat)
        series = dataset.extract_bearing_series(snap, BearingSelector(1, 4))
        np.testing.assert_array_equal(series, mat[:, 6])

    def test_extract_mismatch(self):
        snap = RawSnapshot(datetime(2004, 1, 1), np.zeros((4, 4)))
        with pytest.raises(DataFormatError, match="channels"):
            dataset.extract_bearing_series(snap, BearingSelector(1, 4))


class TestManifest:
    def test_file_round_trip(self, small_synth_dir, small_manifest):
        text = small_manifest.to_text()
        (small_synth_dir / "copy.cfg").write_text(text)
        again = DatasetManifest.from_file(small_synth_dir / "copy.cfg")
        assert again.conditions == small_manifest.conditions
        assert again.datasets[2].snapshot_len == small_manifest.datasets[2].snapshot_len

    def test_ground_truth_positions(self, small_manifest):
        faulty = [s.label for s in small_manifest.selectors if small_manifest.is_faulty(s)]
        assert faulty == ["d1b3", "d1b4", "d2b1", "d3b3"]

    def test_missing_dataset_rejected(self, tmp_path):
        (tmp_path / "bad.cfg").write_text("dataset1.root = x\n")
        with pytest.raises(DataFormatError, match="dataset2.root"):
            DatasetManifest.from_file(tmp_path / "bad.cfg")

    def test_condition_disagreeing_with_record_rejected(self, tmp_path, small_manifest):
        text = small_manifest.to_text().replace(
            "bearing.d1b1 = healthy", "bearing.d1b1 = outer-race"
        )
        (tmp_path / "bad.cfg").write_text(text)
        with pytest.raises(DataFormatError, match="ground truth"):
            DatasetManifest.from_file(tmp_path / "bad.cfg")

    def test_duplicate_entries_rejected(self):
        specs = {
            d: DatasetSpec(d, f"/x/{d}", dataset.DATASET_CHANNELS[d]) for d in (1, 2, 3)
        }
        entries = [(s, dataset.TABLE1_CONDITIONS[(s.dataset_id, s.bearing_id)])
                   for s in dataset.all_selectors()]
        entries[1] = entries[0]
        with pytest.raises(DataFormatError, match="duplicate"):
            DatasetManifest.from_entries(entries, specs)

    def test_table1_counts_documented(self):
        assert dataset.TABLE1_SAMPLE_COUNTS == {1: 2156, 2: 984, 3: 6324}


class TestFolds:
    def test_twelve_folds_each_with_eleven_train(self, small_manifest):
        folds = make_loo_folds(small_manifest)
        assert len(folds) == 12
        for fold in folds:
            assert len(fold.train) == 11
            assert fold.test not in fold.train
            assert set(fold.train) | {fold.test} == set(small_manifest.selectors)

    def test_first_fold_membership(self, small_manifest):
        fold = make_loo_folds(small_manifest)[0]
        assert fold.test == BearingSelector(1, 1)
        assert BearingSelector(3, 4) in fold.train

    def test_invalid_fold_rejected(self):
        sels = dataset.all_selectors()
        with pytest.raises(ValueError):
            LooFold(test=sels[0], train=tuple(sels[:11]))


class TestSynthetic:
    def test_healthy_rms_near_sigma(self):
        cfg = SyntheticConfig(n_snapshots=20, noise_sigma=2.0, snapshot_len=4000, rng_seed=5)
        snaps = synth_bearing(cfg)
        for snap in snaps:
            assert features.rms(snap) == pytest.approx(2.0, rel=0.10)

    def test_deterministic_per_seed(self):
        cfg = SyntheticConfig(n_snapshots=6, fault_onset=3, snapshot_len=1000, rng_seed=9)
        np.testing.assert_array_equal(synth_bearing(cfg), synth_bearing(cfg))

    def test_constant_amplitude_when_growth_zero(self):
        cfg = SyntheticConfig(
            n_snapshots=8, fault_onset=0, impulse_growth=0.0, impulse_base=5.0,
            noise_sigma=0.01, snapshot_len=1000, rng_seed=2,
        )
        snaps = synth_bearing(cfg)
        peaks = snaps.max(axis=1)
        assert peaks.std() < 0.1 * peaks.mean()
        assert peaks.mean() == pytest.approx(5.0, rel=0.1)

    def test_kurtosis_separates_at_three_sigma(self):
        n = 60
        healthy = synth_bearing(
            SyntheticConfig(n_snapshots=n, snapshot_len=2045, rng_seed=21)
        )
        faulty = synth_bearing(
            SyntheticConfig(n_snapshots=n, fault_onset=0, impulse_growth=0.0,
                            snapshot_len=2045, rng_seed=21)  # amp = default 3 sigma
        )
        k_h = np.mean([features.kurtosis(s) for s in healthy])
        k_f = np.mean([features.kurtosis(s) for s in faulty])
        assert k_f > k_h

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SyntheticConfig(n_snapshots=5, fault_onset=9)
        with pytest.raises(ValueError):
            SyntheticConfig(n_snapshots=5, noise_sigma=0.0)

    def test_generated_dataset_layout(self, small_synth_dir, small_manifest):
        for d in (1, 2, 3):
            entries = scan_snapshots(small_manifest.datasets[d].root)
            assert len(entries) == 120
            snap = dataset.read_snapshot(
                entries[0][1],
                small_manifest.datasets[d].channels,
                expected_rows=small_manifest.datasets[d].snapshot_len,
            )
            assert snap.channels.shape == (2045, dataset.DATASET_CHANNELS[d])
