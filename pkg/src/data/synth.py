"""
Synthetic stand-ins for N-MNIST (spatial) and SHD (temporal) statistics.

Spatial samples are Poisson-count blobs of DVS events whose centre sits on a
circle around the sensor centre, one angle per class. Temporal samples put
events on a class-specific band of cochlear channels, with the rate rising
over time for even classes and falling for odd ones.
"""

from enum import Enum

import numpy as np

from src.data.events import EventStream, Geometry, Modality
from src.utils.logger import get_logger

logger = get_logger(__name__)

SPATIAL_DURATION_US = 300_000
TEMPORAL_DURATION_US = 1_000_000


class SynthKind(str, Enum):
    SPATIAL = "spatial"
    TEMPORAL = "temporal"


def _spatial_sample(rng, c, classes, g: Geometry, n_mean, duration, label):
    cx, cy = (g.width - 1) / 2.0, (g.height - 1) / 2.0
    radius = 0.3 * min(g.width, g.height)
    angle = 2.0 * np.pi * c / classes
    centre = np.array([cx + radius * np.cos(angle), cy + radius * np.sin(angle)])
    centre = centre + rng.normal(0.0, 0.03 * g.width, size=2)
    sigma = 0.08 * min(g.width, g.height)

    n = rng.poisson(n_mean)
    xy = np.rint(rng.normal(centre, sigma, size=(n, 2))).astype(np.int64)
    keep = (xy[:, 0] >= 0) & (xy[:, 0] < g.width) & (xy[:, 1] >= 0) & (xy[:, 1] < g.height)
    xy = xy[keep]
    t = rng.integers(0, duration, size=len(xy))
    p = rng.integers(0, 2, size=len(xy))
    order = np.argsort(t, kind="stable")
    return EventStream(
        t[order], xy[order, 0], xy[order, 1], p[order],
        label=label, modality=Modality.VISUAL, geometry=g, duration=duration,
    )


def _temporal_sample(rng, c, classes, g: Geometry, n_mean, duration, label):
    channels = g.width
    band = (c + 0.5) * channels / classes
    sigma = channels / (4.0 * classes)
    band = band + rng.normal(0.0, sigma / 4.0)

    n = rng.poisson(n_mean)
    ch = np.clip(np.rint(rng.normal(band, sigma, size=n)), 0, channels - 1).astype(np.int64)
    ramp = np.sqrt(rng.random(n))
    frac = ramp if c % 2 == 0 else 1.0 - ramp
    t = np.minimum((frac * duration).astype(np.int64), duration - 1)

    # sparse uniform background
    n_bg = rng.poisson(0.05 * n_mean)
    ch = np.concatenate([ch, rng.integers(0, channels, size=n_bg)])
    t = np.concatenate([t, rng.integers(0, duration, size=n_bg)])

    order = np.argsort(t, kind="stable")
    zeros = np.zeros(len(t), dtype=np.int64)
    return EventStream(
        t[order], ch[order], zeros, zeros,
        label=label, modality=Modality.AUDIO, geometry=g, duration=duration,
    )


def synth_dataset(
    kind: SynthKind | str,
    classes: int,
    samples_per_class: int,
    seed: int,
    geometry: Geometry | None = None,
    events_per_sample: int | None = None,
) -> list[EventStream]:
    """
    Generates a deterministic, class-balanced synthetic event dataset.

    Args:
        kind (SynthKind | str): "spatial" (visual) or "temporal" (audio).
        classes (int): Number of classes, at least 2.
        samples_per_class (int): Streams per class.
        seed (int): Generator seed; the same seed gives identical streams.
        geometry (Geometry | None): Sensor extent; 34x34x2 or 700 channels by default.
        events_per_sample (int | None): Mean Poisson event count per stream.

    Returns:
        list[EventStream]: Streams interleaved by class (0, 1, ..., 0, 1, ...).
    """
    kind = SynthKind(kind)
    if classes < 2:
        raise ValueError(f"synth_dataset needs at least 2 classes, got {classes}")
    rng = np.random.default_rng(seed)
    if kind is SynthKind.SPATIAL:
        g = geometry or Geometry.nmnist()
        n_mean = events_per_sample or 300
        make, duration = _spatial_sample, SPATIAL_DURATION_US
    else:
        g = geometry or Geometry.shd()
        n_mean = events_per_sample or 600
        make, duration = _temporal_sample, TEMPORAL_DURATION_US

    streams = [
        make(rng, c, classes, g, n_mean, duration, label=c)
        for _ in range(samples_per_class)
        for c in range(classes)
    ]
    logger.debug(f"🧪 Generated {len(streams)} {kind.value} streams ({classes} classes, seed {seed})")
    return streams
