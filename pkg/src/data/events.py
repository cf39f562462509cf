"""
Event-stream and spike-tensor types shared by every data stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np

from src.utils.errors import GeometryError, MalformedFileError

VISUAL_SHAPE = (25, 2, 34, 34)
AUDIO_SHAPE = (100, 700)


class Modality(str, Enum):
    VISUAL = "visual"
    AUDIO = "audio"
    DUAL = "dual"


@dataclass(frozen=True)
class Geometry:
    width: int
    height: int
    polarities: int

    @classmethod
    def nmnist(cls) -> Geometry:
        return cls(34, 34, 2)

    @classmethod
    def shd(cls) -> Geometry:
        return cls(700, 1, 1)

    @classmethod
    def for_modality(cls, modality: Modality | str) -> Geometry:
        return cls.nmnist() if Modality(modality) is Modality.VISUAL else cls.shd()


@dataclass(frozen=True)
class Event:
    t: int
    x: int
    y: int
    p: int


@dataclass(eq=False)
class EventStream:
    """
    One sample's events in column form, sorted by timestamp.

    Args:
        t, x, y, p (np.ndarray): Timestamp (µs), column/channel, row and polarity.
        label (int): Raw class label.
        modality (Modality): visual or audio.
        geometry (Geometry): Sensor extent used to validate coordinates.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    label: int
    modality: Modality
    geometry: Geometry
    duration: int | None = None
    source: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=np.int64).reshape(-1)
        self.x = np.asarray(self.x, dtype=np.int64).reshape(-1)
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        self.p = np.asarray(self.p, dtype=np.int64).reshape(-1)
        self.modality = Modality(self.modality)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise MalformedFileError("Event columns have different lengths")
        if n and np.any(np.diff(self.t) < 0):
            raise MalformedFileError("Event timestamps are not sorted")
        if n and self.t[0] < 0:
            raise MalformedFileError("Negative event timestamp")
        if self.label < 0:
            raise MalformedFileError(f"Negative label {self.label}")
        self.check_geometry()

    def check_geometry(self) -> None:
        g = self.geometry
        if len(self.t) == 0:
            return
        if self.x.min() < 0 or self.x.max() >= g.width:
            raise GeometryError(f"x outside [0, {g.width}) in {self.source or 'stream'}")
        if self.y.min() < 0 or self.y.max() >= g.height:
            raise GeometryError(f"y outside [0, {g.height}) in {self.source or 'stream'}")
        if self.p.min() < 0 or self.p.max() >= max(g.polarities, 2):
            raise GeometryError(f"polarity outside {{0,1}} in {self.source or 'stream'}")

    @classmethod
    def from_events(
        cls,
        events: list[Event],
        label: int,
        modality: Modality | str,
        geometry: Geometry | None = None,
    ) -> EventStream:
        modality = Modality(modality)
        cols = np.array([(e.t, e.x, e.y, e.p) for e in events], dtype=np.int64).reshape(-1, 4)
        return cls(
            cols[:, 0], cols[:, 1], cols[:, 2], cols[:, 3],
            label=label,
            modality=modality,
            geometry=geometry or Geometry.for_modality(modality),
        )

    @property
    def events(self) -> list[Event]:
        return [Event(int(t), int(x), int(y), int(p)) for t, x, y, p in zip(self.t, self.x, self.y, self.p)]

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.t)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.label == other.label
            and self.modality == other.modality
            and self.geometry == other.geometry
            and all(np.array_equal(getattr(self, c), getattr(other, c)) for c in "txyp")
        )

    def __repr__(self) -> str:
        return f"EventStream(n={len(self)}, label={self.label}, modality={self.modality.value})"


@dataclass
class SpikeTensor:
    """Dense binary spike tensor, time-major."""

    data: np.ndarray
    modality: Modality

    def __post_init__(self) -> None:
        self.modality = Modality(self.modality)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def bins(self) -> int:
        return self.data.shape[0]

    def total_spikes(self) -> int:
        return int(self.data.sum())
