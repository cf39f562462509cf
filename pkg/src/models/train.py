"""
Training loops: single-modality epochs and alternating-batch joint training.

Batches are drawn from a permutation seeded by (seed, epoch, stream, cycle),
so runs are reproducible and the visual stream of a joint run sees exactly
the batches a visual-only run would.
"""

from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.data.dataset import SpikeDataset
from src.data.events import Modality
from src.models.architectures import Model, forward, forward_dual, total_loss
from src.models.memory import SCLConfig
from src.models.neurons import SpikeActivity, sparsity
from src.models.optim import OptimState, adamw_step
from src.utils.errors import ConfigError, NumericFault
from src.utils.logger import get_logger

logger = get_logger(__name__)

VISUAL_STREAM = 0
AUDIO_STREAM = 1


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(5, ge=0)
    batch_size: int = Field(32, ge=1)
    seed: int = 0
    lr: float = Field(1e-3, ge=0)
    weight_decay: float = Field(1e-4, ge=0)
    scl_weight: float = Field(0.5, ge=0)
    scl_tau: float = Field(0.1, gt=0)
    grad_clip: float | None = Field(5.0, gt=0)
    eval_every: int = Field(1, ge=1)

    @property
    def scl(self) -> SCLConfig:
        return SCLConfig(self.scl_tau, self.scl_weight)

    def optim_state(self) -> OptimState:
        return OptimState(lr=self.lr, weight_decay=self.weight_decay)


def batch_plan(n: int, batch_size: int, seed: int, epoch: int, stream: int, cycle: int = 0) -> list[np.ndarray]:
    """Shuffled index batches for one pass over ``n`` samples; a trailing singleton joins the previous batch."""
    perm = np.random.default_rng([seed, epoch, stream, cycle]).permutation(n)
    batches = [perm[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2] = np.concatenate([batches[-2], batches.pop()])
    return batches


def recycled_plan(n: int, steps: int, batch_size: int, seed: int, epoch: int, stream: int) -> list[np.ndarray]:
    """``steps`` batches, reshuffling a fresh cycle each time the data runs out."""
    plan: list[np.ndarray] = []
    cycle = 0
    while len(plan) < steps:
        plan.extend(batch_plan(n, batch_size, seed, epoch, stream, cycle))
        cycle += 1
    return plan[:steps]


def clip_gradients(grads: dict[str, np.ndarray | None], max_norm: float | None) -> float:
    """Scales finite gradients in place to a global l2 norm of at most ``max_norm``; returns the pre-clip norm."""
    finite = [g for g in grads.values() if g is not None and np.all(np.isfinite(g))]
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in finite))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for name, g in grads.items():
            if g is not None and np.all(np.isfinite(g)):
                grads[name] = g * scale
    return norm


def _update(model: Model, x: np.ndarray, y: np.ndarray, modality: Modality, cfg: TrainConfig, st: OptimState):
    if model.spec.memory.uses_scl and cfg.scl_weight > 0 and len(y) < 2:
        raise ConfigError("SCL needs batches of at least 2 samples")
    model.zero_grad()
    if model.spec.modality is Modality.DUAL:
        result = forward_dual(model, x, modality)
    else:
        result = forward(model, x, modality)
    loss = total_loss(model, result, y, cfg.scl)
    value = loss.item()
    if not np.isfinite(value):
        raise NumericFault(f"❌ Non-finite training loss at step {st.step + 1}")
    loss.backward()

    params = model.params()
    grads = {name: p.grad for name, p in params.items()}
    clip_gradients(grads, cfg.grad_clip)
    adamw_step(params, grads, st)

    correct = int((result.logits.data.argmax(axis=1) == y).sum())
    return value, correct, result.activity


def _summary(losses: list[tuple[float, int]], correct: int, activity: SpikeActivity | None) -> dict:
    n = sum(size for _, size in losses)
    return {
        "loss": sum(v * size for v, size in losses) / n,
        "accuracy": correct / n,
        "sparsity": sparsity(activity) if activity is not None and activity.total_neuron_timesteps else float("nan"),
        "samples": n,
    }


def train_epoch(
    model: Model,
    dataset: SpikeDataset,
    cfg: TrainConfig,
    st: OptimState,
    epoch: int = 0,
    stream: int = VISUAL_STREAM,
) -> dict:
    """
    One pass of shuffled mini-batch training.

    Args:
        model (Model): Model to update in place.
        dataset (SpikeDataset): Training samples.
        cfg (TrainConfig): Batch size, seed and loss weights.
        st (OptimState): Optimizer state, advanced once per batch.
        epoch (int): Epoch index, part of the shuffle seed.
        stream (int): Stream index, part of the shuffle seed.

    Returns:
        dict: Sample-weighted ``loss`` and ``accuracy``, spike ``sparsity``, ``steps``.
    """
    if len(dataset) == 0:
        raise ConfigError("Cannot train on an empty dataset")
    losses, correct, activity = [], 0, None
    plan = batch_plan(len(dataset), cfg.batch_size, cfg.seed, epoch, stream)
    for step, index in enumerate(plan):
        x, y = dataset.batch(index, dtype=model.spec.dtype)
        value, hits, act = _update(model, x, y, dataset.modality, cfg, st)
        losses.append((value, len(index)))
        correct += hits
        activity = act if activity is None else activity.merge(act)
        logger.debug(f"step {step + 1}/{len(plan)} loss={value:.4f}")
    metrics = _summary(losses, correct, activity)
    metrics["steps"] = len(plan)
    logger.info(
        f"📈 Epoch {epoch + 1} [{dataset.modality.value}] loss={metrics['loss']:.4f} "
        f"acc={metrics['accuracy']:.4f} sparsity={metrics['sparsity']:.4f}"
    )
    return metrics


def joint_train_step(
    dual_model: Model,
    visual_batch: tuple[np.ndarray, np.ndarray],
    audio_batch: tuple[np.ndarray, np.ndarray],
    cfg: TrainConfig,
    st: OptimState,
) -> dict:
    """
    Two optimizer updates: the visual batch first, then the audio batch.

    Each batch is a time-major (x, labels) pair as returned by ``SpikeDataset.batch``.
    """
    (v_x, v_y), (a_x, a_y) = visual_batch, audio_batch
    if len(v_y) == 0 or len(a_y) == 0:
        raise ConfigError("joint_train_step needs a non-empty visual and audio batch")
    v_loss, v_hits, v_act = _update(dual_model, v_x, v_y, Modality.VISUAL, cfg, st)
    a_loss, a_hits, a_act = _update(dual_model, a_x, a_y, Modality.AUDIO, cfg, st)
    return {
        "visual_loss": v_loss,
        "visual_correct": v_hits,
        "visual_samples": len(v_y),
        "visual_activity": v_act,
        "audio_loss": a_loss,
        "audio_correct": a_hits,
        "audio_samples": len(a_y),
        "audio_activity": a_act,
    }


def train_joint_epoch(
    dual_model: Model,
    visual_ds: SpikeDataset,
    audio_ds: SpikeDataset | None,
    cfg: TrainConfig,
    st: OptimState,
    epoch: int = 0,
) -> dict:
    """
    One joint epoch of alternating visual/audio updates.

    The epoch lasts ceil(max(N_vis, N_aud) / batch_size) steps; the smaller
    stream is reshuffled and recycled until then. Without an audio stream
    this is plain visual training.
    """
    if len(visual_ds) == 0 or (audio_ds is not None and len(audio_ds) == 0):
        raise ConfigError("Joint training needs non-empty visual and audio datasets")
    if audio_ds is None:
        metrics = train_epoch(dual_model, visual_ds, cfg, st, epoch, VISUAL_STREAM)
        return {"visual": metrics, "steps": metrics["steps"], "updates": metrics["steps"]}

    # ceil(N_large / B), less one when a trailing singleton was merged
    steps = max(
        len(batch_plan(len(visual_ds), cfg.batch_size, cfg.seed, epoch, VISUAL_STREAM)),
        len(batch_plan(len(audio_ds), cfg.batch_size, cfg.seed, epoch, AUDIO_STREAM)),
    )
    v_plan = recycled_plan(len(visual_ds), steps, cfg.batch_size, cfg.seed, epoch, VISUAL_STREAM)
    a_plan = recycled_plan(len(audio_ds), steps, cfg.batch_size, cfg.seed, epoch, AUDIO_STREAM)

    record = {m: {"losses": [], "correct": 0, "activity": None} for m in ("visual", "audio")}
    for v_idx, a_idx in zip(v_plan, a_plan):
        dtype = dual_model.spec.dtype
        out = joint_train_step(dual_model, visual_ds.batch(v_idx, dtype), audio_ds.batch(a_idx, dtype), cfg, st)
        for m in ("visual", "audio"):
            r = record[m]
            r["losses"].append((out[f"{m}_loss"], out[f"{m}_samples"]))
            r["correct"] += out[f"{m}_correct"]
            act = out[f"{m}_activity"]
            r["activity"] = act if r["activity"] is None else r["activity"].merge(act)

    result = {m: _summary(r["losses"], r["correct"], r["activity"]) for m, r in record.items()}
    result["steps"] = steps
    result["updates"] = 2 * steps
    result["accuracy"] = (result["visual"]["accuracy"] + result["audio"]["accuracy"]) / 2.0
    logger.info(
        f"📈 Joint epoch {epoch + 1} visual acc={result['visual']['accuracy']:.4f} "
        f"audio acc={result['audio']['accuracy']:.4f} ({2 * steps} updates)"
    )
    return result
