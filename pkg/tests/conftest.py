import json

import pytest

from condmon import dataset


@pytest.fixture(scope="session")
def small_synth_dir(tmp_path_factory):
    """120-snapshot 12-bearing synthetic dataset (cheap, converges quickly)."""
    root = tmp_path_factory.mktemp("synth-small")
    dataset.generate_synthetic_dataset(
        root, n_snapshots=120, onset_frac=(0.6, 0.7), seed=3
    )
    return root


@pytest.fixture(scope="session")
def small_manifest(small_synth_dir):
    return dataset.DatasetManifest.from_file(small_synth_dir / "manifest.cfg")


@pytest.fixture(scope="session")
def small_truth(small_synth_dir):
    return json.loads((small_synth_dir / "synthetic_truth.json").read_text())
