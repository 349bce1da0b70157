import time
from types import SimpleNamespace

import numpy as np
import pytest

from igsc.data import SyntheticSpec, make_synthetic
from igsc.model import ClassifierForm
from igsc.training import TrainConfig, train

# Desk-scale planted benchmark used across the suite (and by the
# acceptance gate): 20 seen / 5 unseen classes, 30 samples per class.
SYNTH_SPEC = SyntheticSpec(
    seen_count=20, unseen_count=5, d=16, v=32, samples_per_class=30,
    noise_sigma=0.01, seed=7,
)

TRAIN_CONFIG = dict(
    form=ClassifierForm("nonlinear", d=16, h=30),
    h1=64, h2=64, learning_rate=1e-5, batch_size=16, epochs=300, seed=1,
)


@pytest.fixture(scope="session")
def synth_data():
    dataset, mixing = make_synthetic(SYNTH_SPEC, return_mixing=True)
    return SimpleNamespace(dataset=dataset, mixing=mixing, spec=SYNTH_SPEC)


@pytest.fixture(scope="session")
def trained_synth(synth_data):
    config = TrainConfig(**TRAIN_CONFIG)
    started = time.perf_counter()
    params, history = train(synth_data.dataset, config)
    seconds = time.perf_counter() - started
    return SimpleNamespace(
        dataset=synth_data.dataset,
        mixing=synth_data.mixing,
        params=params,
        history=history,
        config=config,
        train_seconds=seconds,
    )


def nearest_prototype_predictions(dataset, mixing, candidate_classes):
    """Independent oracle: classify a feature by the closest planted class
    center (mixing @ prototype) in feature space."""
    candidates = np.asarray(sorted(int(c) for c in candidate_classes))
    centers = (mixing @ dataset.prototypes[candidates].T).T
    X = dataset.features[dataset.splits.test_unseen_idx]
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return candidates[np.argmin(d2, axis=1)]
