from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from src.data.dataset import SpikeDataset
from src.data.events import Modality
from src.kernel.tensor import no_grad
from src.models.architectures import Model, forward
from src.utils.errors import MissingClassError, ShapeError
from src.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class FeatureMatrix:
    """
    Rate-encoded feature rows, one per sample.

    Each entry is the fraction of timesteps a feature neuron fired, so every
    value lies in [0, 1].
    """

    rows: np.ndarray
    labels: np.ndarray
    modality: Modality
    flags: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.rows = np.asarray(self.rows, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.modality = Modality(self.modality)
        if self.rows.ndim != 2 or len(self.rows) != len(self.labels):
            raise ShapeError(f"FeatureMatrix needs (n, d) rows and n labels, got {self.rows.shape} / {self.labels.shape}")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.rows, columns=[str(i) for i in range(self.dim)])
        df["label"] = self.labels
        df["modality"] = self.modality.value
        return df

    def to_csv(self, path: str) -> None:
        """Header row: neuron indices, then ``label`` and ``modality``."""
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.6f")

    @classmethod
    def from_csv(cls, path: str) -> FeatureMatrix:
        df = pd.read_csv(path)
        neurons = [c for c in df.columns if c not in ("label", "modality")]
        return cls(df[neurons].to_numpy(), df["label"].to_numpy(), df["modality"].iloc[0])


def balanced_indices(
    labels: np.ndarray,
    per_class: int,
    seed: int = 0,
    classes: list[int] | np.ndarray | None = None,
) -> tuple[np.ndarray, list[str]]:
    """
    Draws ``per_class`` samples of every requested class without replacement.

    A class with fewer samples contributes all of them and is flagged.
    An absent class raises MissingClassError.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels) if classes is None else np.asarray(classes)
    rng = np.random.default_rng(seed)
    picked, flags = [], []
    for c in classes:
        idx = np.flatnonzero(labels == c)
        if len(idx) == 0:
            raise MissingClassError(f"Class {int(c)} is absent from the dataset")
        if len(idx) < per_class:
            flags.append(f"class {int(c)}: {len(idx)} < {per_class} samples, took all")
            picked.append(idx)
        else:
            picked.append(np.sort(rng.choice(idx, per_class, replace=False)))
    return np.concatenate(picked), flags


def rate_features(
    model: Model,
    dataset: SpikeDataset,
    per_class: int = 100,
    seed: int = 0,
    classes: list[int] | np.ndarray | None = None,
    batch_size: int = 64,
) -> FeatureMatrix:
    """
    Balanced-sample rate features of the model's feature LIF layer.

    Args:
        model (Model): Trained model (dual models are run on the dataset's modality).
        dataset (SpikeDataset): Samples with unified labels.
        per_class (int): Samples drawn per class.
        seed (int): Sampling seed.
        classes: Classes to require; defaults to 0..num_classes-1.

    Returns:
        FeatureMatrix: rows in class order, values in [0, 1].
    """
    if classes is None:
        classes = np.arange(model.spec.num_classes)
    index, flags = balanced_indices(dataset.labels, per_class, seed, classes)
    for msg in flags:
        logger.warning(f"⚠️ {msg}")

    rates = []
    with no_grad():
        for start in range(0, len(index), batch_size):
            x, _ = dataset.batch(index[start : start + batch_size], dtype=model.spec.dtype)
            result = forward(model, x, dataset.modality)
            rates.append(result.spikes.mean(axis=1))
    features = FeatureMatrix(np.concatenate(rates), dataset.labels[index], dataset.modality, flags)
    logger.info(f"🧠 Rate features [{features.modality.value}] {features.rows.shape}")
    return features
