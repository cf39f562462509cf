import glob
import os
import zlib

import numpy as np

from src.data.events import EventStream, Geometry, Modality
from src.utils.errors import CorruptContainerError, DataIOError, MalformedFileError
from src.utils.logger import get_logger

logger = get_logger(__name__)

NMNIST_RECORD = 5
MAX_NMNIST_T = (1 << 23) - 1

EVT_MAGIC = b"EVT1"
EVT_VERSION = 1
EVT_HEADER = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u2"),
        ("modality", "u1"),
        ("reserved0", "u1"),
        ("width", "<u2"),
        ("height", "<u2"),
        ("label", "<u2"),
        ("reserved1", "<u2"),
        ("count", "<u4"),
    ]
)
EVT_RECORD = np.dtype([("t", "<u4"), ("x", "<u2"), ("y", "<u2"), ("p", "u1"), ("pad", "u1")])
_MODALITY_CODES = {Modality.VISUAL: 0, Modality.AUDIO: 1}


def parse_nmnist_bin(raw: bytes, geometry: Geometry | None = None, label: int = 0) -> EventStream:
    """
    Decodes the N-MNIST 40-bit event records.

    Each record is x (byte 0), y (byte 1), polarity (bit 7 of byte 2) and a
    23-bit big-endian timestamp in µs (bits 6-0 of byte 2, then bytes 3-4).

    Args:
        raw (bytes): File contents.
        geometry (Geometry | None): Sensor extent, 34x34 by default.
        label (int): Class label attached to the stream.

    Returns:
        EventStream: Events in timestamp order. A file whose timestamps go backwards
        is stably sorted by timestamp, with a warning, so events sharing a
        timestamp keep their file order.
    """
    if len(raw) % NMNIST_RECORD:
        raise MalformedFileError(f"N-MNIST payload length {len(raw)} is not a multiple of 5")
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, NMNIST_RECORD).astype(np.int64)
    t = ((rec[:, 2] & 0x7F) << 16) | (rec[:, 3] << 8) | rec[:, 4]
    if len(t) and np.any(np.diff(t) < 0):
        logger.warning(f"⚠️ N-MNIST payload for label {label} is out of timestamp order; sorting {len(t)} events")
        order = np.argsort(t, kind="stable")
        rec, t = rec[order], t[order]
    return EventStream(
        t=t,
        x=rec[:, 0],
        y=rec[:, 1],
        p=rec[:, 2] >> 7,
        label=label,
        modality=Modality.VISUAL,
        geometry=geometry or Geometry.nmnist(),
    )


def encode_nmnist_bin(stream: EventStream) -> bytes:
    if len(stream) and stream.t.max() > MAX_NMNIST_T:
        raise MalformedFileError("Timestamp does not fit the 23-bit N-MNIST field")
    if len(stream) and max(stream.x.max(), stream.y.max()) > 0xFF:
        raise MalformedFileError("Coordinate does not fit one N-MNIST byte")
    rec = np.empty((len(stream), NMNIST_RECORD), dtype=np.uint8)
    rec[:, 0] = stream.x
    rec[:, 1] = stream.y
    rec[:, 2] = (stream.p << 7) | ((stream.t >> 16) & 0x7F)
    rec[:, 3] = (stream.t >> 8) & 0xFF
    rec[:, 4] = stream.t & 0xFF
    return rec.tobytes()


def write_evt(stream: EventStream) -> bytes:
    """
    Serializes a stream into the portable EVT container.

    Returns:
        bytes: 20-byte header, 10-byte records, CRC-32 trailer over both.
    """
    if len(stream) and stream.t.max() > np.iinfo(EVT_RECORD["t"]).max:
        raise MalformedFileError(f"Timestamp {int(stream.t.max())} does not fit the 32-bit EVT field")
    u16_max = np.iinfo(EVT_HEADER["label"]).max
    if stream.label > u16_max or max(stream.geometry.width, stream.geometry.height) > u16_max:
        raise MalformedFileError(f"Label or geometry of {stream.source or 'stream'} does not fit the 16-bit EVT header")
    header = np.zeros(1, dtype=EVT_HEADER)
    header["magic"] = EVT_MAGIC
    header["version"] = EVT_VERSION
    header["modality"] = _MODALITY_CODES[stream.modality]
    header["width"] = stream.geometry.width
    header["height"] = stream.geometry.height
    header["label"] = stream.label
    header["count"] = len(stream)

    records = np.zeros(len(stream), dtype=EVT_RECORD)
    records["t"] = stream.t
    records["x"] = stream.x
    records["y"] = stream.y
    records["p"] = stream.p

    payload = header.tobytes() + records.tobytes()
    return payload + np.array([zlib.crc32(payload)], dtype="<u4").tobytes()


def read_evt(raw: bytes, source: str | None = None) -> EventStream:
    where = source or "EVT blob"
    if len(raw) < EVT_HEADER.itemsize + 4:
        raise CorruptContainerError(f"{where}: truncated header")
    header = np.frombuffer(raw, dtype=EVT_HEADER, count=1)[0]
    if bytes(header["magic"]) != EVT_MAGIC:
        raise CorruptContainerError(f"{where}: bad magic {bytes(header['magic'])!r}")
    if int(header["version"]) != EVT_VERSION:
        raise CorruptContainerError(f"{where}: unsupported version {int(header['version'])}")
    count = int(header["count"])
    expected = EVT_HEADER.itemsize + count * EVT_RECORD.itemsize + 4
    if len(raw) != expected:
        raise CorruptContainerError(f"{where}: expected {expected} bytes, found {len(raw)}")
    payload = raw[:-4]
    (stored_crc,) = np.frombuffer(raw[-4:], dtype="<u4")
    if zlib.crc32(payload) != int(stored_crc):
        raise CorruptContainerError(f"{where}: checksum mismatch")
    codes = {v: k for k, v in _MODALITY_CODES.items()}
    if int(header["modality"]) not in codes:
        raise CorruptContainerError(f"{where}: unknown modality code {int(header['modality'])}")
    modality = codes[int(header["modality"])]

    records = np.frombuffer(raw, dtype=EVT_RECORD, count=count, offset=EVT_HEADER.itemsize)
    return EventStream(
        t=records["t"],
        x=records["x"],
        y=records["y"],
        p=records["p"],
        label=int(header["label"]),
        modality=modality,
        geometry=Geometry(int(header["width"]), int(header["height"]), 2 if modality is Modality.VISUAL else 1),
        source=source,
    )


def _require_dir(path: str) -> None:
    if not os.path.isdir(path):
        raise DataIOError(f"Data directory not found: {path}")


def write_evt_file(stream: EventStream, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(write_evt(stream))


def read_evt_file(path: str) -> EventStream:
    if not os.path.exists(path):
        raise DataIOError(f"File not found: {path}")
    with open(path, "rb") as fh:
        return read_evt(fh.read(), source=path)


def list_event_files(path: str, kind: str) -> list[str]:
    """Sorted event files under ``path`` for ``kind`` ("evt" or "nmnist")."""
    _require_dir(path)
    pattern = "*.evt" if kind == "evt" else "*.bin"
    return sorted(glob.glob(os.path.join(path, "**", pattern), recursive=True))


def load_evt_dir(path: str) -> list[EventStream]:
    files = list_event_files(path, "evt")
    logger.info(f"🔄 Loading {len(files)} EVT files from {path}")
    return [read_evt_file(f) for f in files]


def load_nmnist_dir(path: str) -> list[EventStream]:
    """
    Loads an N-MNIST split laid out as ``<path>/<digit>/<sample>.bin``.

    Args:
        path (str): Split directory (e.g. ``Train``).

    Returns:
        list[EventStream]: One stream per file, labeled by its parent directory.
    """
    files = list_event_files(path, "nmnist")
    logger.info(f"🔄 Loading {len(files)} N-MNIST files from {path}")
    streams = []
    for f in files:
        label_dir = os.path.basename(os.path.dirname(f))
        if not label_dir.isdigit():
            raise MalformedFileError(f"Cannot infer label from directory of {f}")
        with open(f, "rb") as fh:
            stream = parse_nmnist_bin(fh.read(), label=int(label_dir))
        stream.source = f
        streams.append(stream)
    return streams


def load_streams(kind: str, path: str) -> list[EventStream]:
    if kind == "evt":
        return load_evt_dir(path)
    if kind == "nmnist":
        return load_nmnist_dir(path)
    raise ValueError(f"Unknown event source kind: {kind}")
