import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from breathlens.io import split_dataset
from breathlens.model import XcmConfig, XcmModel, train
from breathlens.synth import RecordProfile, generate_record


def tiny_config(**overrides) -> XcmConfig:
    """Small-but-real config for fast unit tests."""
    base = dict(
        window_samples=16,
        kernel_samples=5,
        filters_2d=3,
        filters_1d=2,
        filters_final=4,
        batch_size=4,
        epochs=1,
        folds=2,
        seed=0,
    )
    base.update(overrides)
    return XcmConfig(**base)


@pytest.fixture(scope="session")
def small_corpus():
    """Six 45 s synthetic records with annotations."""
    return [generate_record(RecordProfile(seed=500 + i), 45.0) for i in range(6)]


@pytest.fixture(scope="session")
def small_split(small_corpus):
    return split_dataset(small_corpus, seed=5, n_validation_records=1, n_test_records=2)


@pytest.fixture(scope="session")
def small_model(small_split) -> XcmModel:
    """A quickly trained full-size-window model (reduced filters/epochs)."""
    config = XcmConfig(
        filters_2d=4, filters_1d=4, filters_final=8, epochs=1, folds=2, seed=11
    )
    model, _ = train(small_split, config)
    return model


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
