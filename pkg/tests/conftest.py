from __future__ import annotations

import numpy as np
import pytest

from gazepipe import geometry as geo
from gazepipe.dataset_io import build_normalized_dataset
from gazepipe.synth import generate_persons


@pytest.fixture(scope="session")
def small_synth():
    """3 synthetic persons x 30 frames (180 eye samples) plus the generator state."""
    ds = generate_persons(n_persons=3, samples_each=30, seed=11)
    res = build_normalized_dataset(
        ds.records, ds.calibration, ds.spec, geo.GENERIC_FACE_MODEL, ds.load_image
    )
    return ds, res


@pytest.fixture(scope="session")
def small_samples(small_synth):
    return small_synth[1].samples


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
