import os
import sys

# Make sure Python can find the src package
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from src.data.dataset import SpikeDataset  # noqa: E402
from src.data.events import Geometry  # noqa: E402
from src.data.load_data import read_evt, write_evt  # noqa: E402
from src.data.preprocess import bin_events  # noqa: E402
from src.data.synth import synth_dataset  # noqa: E402
from src.utils.validate_dataset import validate_event_streams  # noqa: E402

# === CONFIG ===
CLASSES = 4
SAMPLES_PER_CLASS = 5
VISUAL_BINS = 25
AUDIO_BINS = 100


def main():
    print("=== Testing Phase 1: Synthesize -> Encode -> Bin -> Dataset ===")

    # 1. Synthesize
    print("\n[1] Synthesizing event streams...")
    visual = synth_dataset("spatial", CLASSES, SAMPLES_PER_CLASS, seed=0)
    audio = synth_dataset("temporal", CLASSES, SAMPLES_PER_CLASS, seed=1, geometry=Geometry.shd())
    print(f"Visual streams: {len(visual)}, events in first: {len(visual[0])}")
    print(f"Audio streams: {len(audio)}, events in first: {len(audio[0])}")

    # 2. Container round trip
    print("\n[2] Writing and reading EVT containers...")
    back = read_evt(write_evt(visual[0]))
    print(f"Round trip equal: {back == visual[0]}")

    # 3. Validate
    print("\n[3] Validating events...")
    ok, failed = validate_event_streams(visual)
    print(f"Validation passed: {ok} {failed}")

    # 4. Bin
    print("\n[4] Binning...")
    spikes = bin_events(visual[0], VISUAL_BINS)
    print(f"Spike tensor shape: {spikes.data.shape}, spikes: {spikes.total_spikes()}")

    # 5. Datasets
    print("\n[5] Building datasets...")
    for name, streams, bins in (("visual", visual, VISUAL_BINS), ("audio", audio, AUDIO_BINS)):
        train, test = SpikeDataset.from_streams(streams, bins).split(0.25, seed=0)
        print(f"{name}: train {len(train)} / test {len(test)}, sample shape {train.sample_shape}")

    print("\n✅ Phase 1 pipeline completed successfully!")


if __name__ == "__main__":
    main()
