import numpy as np

from src.data.events import EventStream, Modality, SpikeTensor
from src.utils.errors import DegenerateDurationError


def stream_duration(stream: EventStream) -> int:
    """Declared duration, else last timestamp + 1 µs (0 for an empty stream)."""
    if stream.duration is not None:
        return int(stream.duration)
    return int(stream.t[-1]) + 1 if len(stream) else 0


def binned_shape(stream: EventStream, bins: int) -> tuple[int, ...]:
    g = stream.geometry
    if stream.modality is Modality.AUDIO:
        return (bins, g.width)
    return (bins, max(g.polarities, 2), g.height, g.width)


def bin_events(stream: EventStream, bins: int, duration: int | None = None) -> SpikeTensor:
    """
    Bins an event stream into a dense binary spike tensor.

    An event at time t lands in bin floor(t * bins / duration), clamped to the
    last bin. Cells are OR-reduced, so repeated events still give 1. Visual
    streams fill (time, polarity, y, x); audio streams fill (time, channel)
    and ignore y.

    Args:
        stream (EventStream): Source events.
        bins (int): Number of time bins.
        duration (int | None): Overrides the stream duration (µs).

    Returns:
        SpikeTensor: uint8 tensor of shape ``binned_shape(stream, bins)``.
    """
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    data = np.zeros(binned_shape(stream, bins), dtype=np.uint8)
    if len(stream) == 0:
        return SpikeTensor(data, stream.modality)

    span = stream_duration(stream) if duration is None else int(duration)
    if span <= 0:
        raise DegenerateDurationError(f"Zero duration with {len(stream)} events")

    b = np.minimum((stream.t * bins) // span, bins - 1)
    if stream.modality is Modality.AUDIO:
        data[b, stream.x] = 1
    else:
        data[b, stream.p, stream.y, stream.x] = 1
    return SpikeTensor(data, stream.modality)


def remap_label(raw: int, num_unified: int = 10) -> int:
    """Folds a raw label into the unified class space (SHD 20 → 10)."""
    if raw < 0 or num_unified < 1:
        raise ValueError(f"remap_label needs raw >= 0 and num_unified >= 1, got {raw}, {num_unified}")
    return raw % num_unified
