from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.model_selection import train_test_split

from src.data.events import EventStream, Modality
from src.data.preprocess import bin_events, remap_label
from src.utils.errors import ConfigError


@dataclass
class SpikeDataset:
    """
    Binned samples ready for the network.

    ``inputs`` holds uint8 spikes shaped (N, T, ...) and ``labels`` the unified
    class of each sample.
    """

    inputs: np.ndarray
    labels: np.ndarray
    modality: Modality

    def __post_init__(self) -> None:
        self.modality = Modality(self.modality)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.inputs) != len(self.labels):
            raise ConfigError(f"{len(self.inputs)} inputs but {len(self.labels)} labels")

    @classmethod
    def from_streams(
        cls,
        streams: list[EventStream],
        bins: int,
        num_unified: int = 10,
    ) -> SpikeDataset:
        if not streams:
            raise ConfigError("Cannot build a dataset from zero streams")
        modality = streams[0].modality
        inputs = np.stack([bin_events(s, bins).data for s in streams])
        labels = np.array([remap_label(s.label, num_unified) for s in streams], dtype=np.int64)
        return cls(inputs, labels, modality)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def sample_shape(self) -> tuple[int, ...]:
        return self.inputs.shape[1:]

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def subset(self, index: np.ndarray) -> SpikeDataset:
        return SpikeDataset(self.inputs[index], self.labels[index], self.modality)

    def batch(self, index: np.ndarray, dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
        """Time-major float batch (T, B, ...) and its labels."""
        x = np.moveaxis(self.inputs[index], 1, 0).astype(dtype)
        return x, self.labels[index]

    def split(self, test_fraction: float, seed: int) -> tuple[SpikeDataset, SpikeDataset]:
        """
        Stratified train/test split, both halves kept in sample order.

        Raises:
            ConfigError: A class has fewer than two samples, or the test share
                is too small to hold one sample of every class.
        """
        try:
            train_idx, test_idx = train_test_split(
                np.arange(len(self)), test_size=test_fraction, stratify=self.labels, random_state=seed
            )
        except ValueError as exc:
            raise ConfigError(f"Cannot split {len(self)} {self.modality.value} samples: {exc}") from exc
        return self.subset(np.sort(train_idx)), self.subset(np.sort(test_idx))
