import json
import os

from src.kernel.checkpoint import load_checkpoint, save_checkpoint
from src.models.architectures import Model, build_model
from src.utils.errors import DataIOError
from src.utils.logger import get_logger

logger = get_logger(__name__)


def spec_path(weights_path: str) -> str:
    root, _ = os.path.splitext(weights_path)
    return f"{root}.json"


def save_model(model: Model, path: str) -> None:
    """
    Writes the SNNW weight blob to ``path`` and the spec to ``<name>.json`` beside it.

    Args:
        model (Model): Model to persist.
        path (str): Target ``.snnw`` path.
    """
    save_checkpoint(model.state_dict(), path)
    with open(spec_path(path), "w") as fh:
        json.dump({"seed": model.seed, "spec": model.spec.model_dump(mode="json")}, fh, indent=2, sort_keys=True)
    logger.info(f"💾 Model saved to {path}")


def load_model(path: str) -> Model:
    meta = spec_path(path)
    if not os.path.exists(path) or not os.path.exists(meta):
        raise DataIOError(f"Checkpoint not found: {path} (needs {os.path.basename(meta)} beside it)")
    with open(meta) as fh:
        header = json.load(fh)
    model = build_model(header["spec"], seed=int(header.get("seed", 0)))
    model.load_state_dict(load_checkpoint(path))
    return model
