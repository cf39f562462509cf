import numpy as np
import pytest

from src.data.dataset import SpikeDataset
from src.data.events import Geometry, Modality
from src.data.synth import synth_dataset
from src.models.architectures import build_model

TINY_DIMS = {
    "conv_channels": (2, 3),
    "kernel_size": 3,
    "hidden": (8, 8),
    "feature_dim": 6,
    "n_patterns": 4,
    "visual_bins": 3,
    "visual_size": 8,
    "polarities": 2,
    "audio_bins": 4,
    "audio_channels": 10,
}

SMALL_DIMS = {
    "conv_channels": (4, 8),
    "kernel_size": 3,
    "hidden": (64, 64),
    "feature_dim": 32,
    "n_patterns": 16,
    "visual_bins": 8,
    "visual_size": 16,
    "polarities": 2,
    "audio_bins": 20,
    "audio_channels": 40,
}


def make_spec(modality, memory="none", dims=None, **overrides):
    spec = {"modality": modality, "memory": memory, "num_classes": 4, "dims": dict(dims or TINY_DIMS)}
    spec.update(overrides)
    return spec


@pytest.fixture
def tiny_spec():
    return make_spec


@pytest.fixture
def tiny_model():
    def build(modality="visual", memory="none", seed=0, **overrides):
        return build_model(make_spec(modality, memory, **overrides), seed=seed)

    return build


def random_input(modality, batch, seed=0, dims=None, density=0.5):
    d = dims or TINY_DIMS
    rng = np.random.default_rng(seed)
    if Modality(modality) is Modality.VISUAL:
        shape = (d["visual_bins"], batch, d["polarities"], d["visual_size"], d["visual_size"])
    else:
        shape = (d["audio_bins"], batch, d["audio_channels"])
    return (rng.random(shape) < density).astype(np.float64)


@pytest.fixture
def spike_batch():
    return random_input


def synth_split(modality, classes=4, samples_per_class=20, seed=0, dims=None):
    d = dims or TINY_DIMS
    if Modality(modality) is Modality.VISUAL:
        streams = synth_dataset("spatial", classes, samples_per_class, seed, Geometry(d["visual_size"], d["visual_size"], 2))
        bins = d["visual_bins"]
    else:
        streams = synth_dataset("temporal", classes, samples_per_class, seed, Geometry(d["audio_channels"], 1, 1))
        bins = d["audio_bins"]
    return SpikeDataset.from_streams(streams, bins, num_unified=10)


@pytest.fixture
def synth_data():
    return synth_split
