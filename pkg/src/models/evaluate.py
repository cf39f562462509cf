import numpy as np
from sklearn.metrics import confusion_matrix

import src.kernel.functional as F
from src.data.dataset import SpikeDataset
from src.data.events import Modality
from src.kernel.tensor import Tensor, no_grad
from src.models.architectures import Model, forward, forward_dual
from src.models.neurons import sparsity
from src.utils.errors import ConfigError
from src.utils.logger import get_logger

logger = get_logger(__name__)


def predict(model: Model, dataset: SpikeDataset, batch_size: int = 64):
    """
    Runs the model over a dataset without recording gradients.

    Returns:
        tuple: (logits (N, C), merged SpikeActivity)
    """
    logits, activity = [], None
    with no_grad():
        for start in range(0, len(dataset), batch_size):
            index = np.arange(start, min(start + batch_size, len(dataset)))
            x, _ = dataset.batch(index, dtype=model.spec.dtype)
            if model.spec.modality is Modality.DUAL:
                result = forward_dual(model, x, dataset.modality)
            else:
                result = forward(model, x, dataset.modality)
            logits.append(result.logits.data)
            activity = result.activity if activity is None else activity.merge(result.activity)
    return np.concatenate(logits), activity


def evaluate(model: Model, dataset: SpikeDataset, batch_size: int = 64) -> dict:
    """
    Evaluates a model on a dataset.

    Args:
        model (Model): Trained (or untrained) model.
        dataset (SpikeDataset): Samples with unified labels.
        batch_size (int): Evaluation batch size.

    Returns:
        dict: ``accuracy``, ``loss``, ``confusion_matrix`` (rows = true class),
        ``sparsity`` and ``predictions``.
    """
    if len(dataset) == 0:
        raise ConfigError("Cannot evaluate on an empty dataset")
    logits, activity = predict(model, dataset, batch_size)
    preds = logits.argmax(axis=1)
    labels = dataset.labels
    with no_grad():
        loss = F.cross_entropy(Tensor(logits), labels).item()
    cm = confusion_matrix(labels, preds, labels=np.arange(model.spec.num_classes))
    metrics = {
        "accuracy": float((preds == labels).mean()),
        "loss": float(loss),
        "confusion_matrix": cm,
        "sparsity": sparsity(activity),
        "predictions": preds,
    }
    modality = Modality(dataset.modality).value
    logger.info(f"📊 Eval [{modality}] acc={metrics['accuracy']:.4f} sparsity={metrics['sparsity']:.4f}")
    return metrics
