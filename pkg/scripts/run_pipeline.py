import os
import sys

# === Fix import path for local modules ===
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from src.app.main import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())

"""
# Run the full ablation on the desk-scale synthetic config, then analyse it:

python scripts/run_pipeline.py ablate --config configs/synthetic.json
python scripts/run_pipeline.py joint  --config configs/synthetic.json
python scripts/run_pipeline.py engram --config configs/synthetic.json --checkpoints outputs/synthetic/checkpoints

"""
