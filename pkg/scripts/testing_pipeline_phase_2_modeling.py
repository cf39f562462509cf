import os
import sys

# Make sure Python can find the src package
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from src.data.dataset import SpikeDataset  # noqa: E402
from src.data.events import Geometry  # noqa: E402
from src.data.synth import synth_dataset  # noqa: E402
from src.features.build_features import rate_features  # noqa: E402
from src.features.engram import engram_report  # noqa: E402
from src.models.architectures import build_model  # noqa: E402
from src.models.energy import efficiency_report  # noqa: E402
from src.models.evaluate import evaluate  # noqa: E402
from src.models.train import TrainConfig, train_epoch  # noqa: E402

# === CONFIG ===
DIMS = {
    "conv_channels": (4, 8),
    "hidden": (64, 64),
    "feature_dim": 32,
    "n_patterns": 16,
    "audio_bins": 20,
    "audio_channels": 40,
}
CLASSES = 4
EPOCHS = 3


def main():
    print("=== Testing Phase 2: Train -> Evaluate -> Energy -> Engram ===")

    # 1. Data
    print("\n[1] Building a synthetic audio task...")
    streams = synth_dataset("temporal", CLASSES, 30, seed=0, geometry=Geometry(DIMS["audio_channels"], 1, 1))
    train, test = SpikeDataset.from_streams(streams, DIMS["audio_bins"], CLASSES).split(0.25, seed=0)
    print(f"Train {len(train)} / test {len(test)}")

    # 2. Model
    print("\n[2] Building M5 (hybrid memory)...")
    model = build_model({"modality": "audio", "memory": "hybrid", "num_classes": CLASSES, "dims": DIMS}, seed=0)
    print(f"Parameters: {model.num_parameters():,}")

    # 3. Train
    print("\n[3] Training...")
    cfg = TrainConfig(batch_size=16, lr=0.005, seed=0)
    st = cfg.optim_state()
    for epoch in range(EPOCHS):
        m = train_epoch(model, train, cfg, st, epoch)
        print(f"epoch {epoch}: loss {m['loss']:.4f} acc {m['accuracy']:.3f} sparsity {m['sparsity']:.3f}")

    # 4. Evaluate
    print("\n[4] Evaluating...")
    ev = evaluate(model, test)
    print(f"Test accuracy: {ev['accuracy']:.3f}")
    print(ev["confusion_matrix"])

    # 5. Energy
    print("\n[5] Operation counts...")
    ops = efficiency_report(model, test)
    print(f"ANN MACs {ops.ann_macs:,}  SNN synops {ops.snn_synops:,.1f}  ratio {ops.efficiency_ratio:.2f}")

    # 6. Engram
    print("\n[6] Engram quality...")
    features = rate_features(model, test, per_class=5)
    report = engram_report("M5", {features.modality: features})
    for row in report.table_rows():
        print(row)

    print("\n✅ Phase 2 pipeline completed successfully!")


if __name__ == "__main__":
    main()
