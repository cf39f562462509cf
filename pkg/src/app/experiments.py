"""
EXPERIMENT RUNNERS - ablation grid, joint vs parallel training, engram analysis
===============================================================================

Each runner takes a validated ExperimentConfig and writes its reports under
``output_dir``:

- ablate: ablation.csv (Model, Visual, Audio, Average, Delta), cells/<cell>.json,
  metrics/<cell>.jsonl, checkpoints/<cell>.snnw
- joint:  joint.csv (Parallel, Joint, Delta rows) and joint.json with reference values
- engram: engram.csv, engram.json, features/<cell>.csv

Every CSV starts with a ``# schema_version=1`` line.
"""

from __future__ import annotations

import json
import os
import zlib

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.app.config import ExperimentConfig, FileSource, SynthSource
from src.data.dataset import SpikeDataset
from src.data.events import Modality
from src.data.load_data import load_streams
from src.data.synth import SynthKind, synth_dataset
from src.features.build_features import FeatureMatrix, rate_features
from src.features.engram import EngramReport, engram_report
from src.models.architectures import Model, build_model
from src.models.energy import efficiency_report
from src.models.evaluate import evaluate
from src.models.persistence import load_model, save_model
from src.models.train import AUDIO_STREAM, VISUAL_STREAM, TrainConfig, train_epoch, train_joint_epoch
from src.utils.errors import ConfigError, DataIOError, MalformedFileError
from src.utils.logger import get_logger
from src.utils.tracking import MetricsWriter

logger = get_logger(__name__)

SCHEMA_VERSION = 1

# Printed values of the reference joint-vs-parallel comparison (percent).
REFERENCE_JOINT = {
    "parallel": {"visual": 97.48, "audio": 80.08, "average": 88.78},
    "joint": {"visual": 94.41, "audio": 79.37, "average_printed": 88.78, "average_arithmetic": 86.89},
    "delta": {"visual": -3.07, "audio": -0.71, "average": 0.00},
}


def cell_seed(seed: int, cell_id: str) -> int:
    """Per-cell seed from (global seed, cell id), independent of scheduling."""
    return int(np.random.SeedSequence([seed, zlib.crc32(cell_id.encode())]).generate_state(1)[0])


def write_csv(df: pd.DataFrame, path: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        df.to_csv(fh, index=False, float_format="%.4f", lineterminator="\n")


def read_csv(path: str) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def write_json(body, path: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")


# === DATA ===

def load_split(cfg: ExperimentConfig, modality: Modality) -> tuple[SpikeDataset, SpikeDataset]:
    """
    Train/test datasets for one modality, binned to the configured resolution.

    Synthetic sources are generated and split (stratified) by their own seed;
    file sources are loaded from their train/test directories.
    """
    modality = Modality(modality)
    source = cfg.data.get(modality)
    if source is None:
        raise ConfigError(f"No {modality.value} data source configured")
    spec = cfg.spec_for(cfg.grid.models[0], modality)
    bins = spec.dims.bins(modality)

    if isinstance(source, SynthSource):
        kind = source.synth_kind or (SynthKind.SPATIAL if modality is Modality.VISUAL else SynthKind.TEMPORAL)
        streams = synth_dataset(
            kind, source.classes, source.samples_per_class, source.seed, cfg.geometry(modality), source.events_per_sample
        )
        if streams[0].modality is not modality:
            raise ConfigError(f"synth_kind {SynthKind(kind).value} does not produce {modality.value} streams")
        full = SpikeDataset.from_streams(streams, bins, spec.num_classes)
        train, test = full.split(source.test_fraction, source.seed)
    else:
        train = _file_dataset(source, source.train_dir, modality, bins, spec.num_classes)
        test = _file_dataset(source, source.test_dir, modality, bins, spec.num_classes)
    logger.info(f"✅ {modality.value} data: {len(train)} train / {len(test)} test samples")
    return train, test


def _file_dataset(source: FileSource, path: str, modality: Modality, bins: int, num_classes: int) -> SpikeDataset:
    streams = load_streams(source.kind, path)
    if not streams:
        raise DataIOError(f"No {source.kind} files under {path}")
    wrong = [s.source for s in streams if s.modality is not modality]
    if wrong:
        raise ConfigError(f"{len(wrong)} files under {path} are not {modality.value} recordings, e.g. {wrong[0]}")
    if source.validate_events:
        from src.utils.validate_dataset import validate_event_streams

        ok, failed = validate_event_streams(streams)
        if not ok:
            raise MalformedFileError(f"Event validation failed for {path}: {failed}")
    return SpikeDataset.from_streams(streams, bins, num_classes)


def _load_data(cfg: ExperimentConfig, modalities) -> dict[Modality, tuple[SpikeDataset, SpikeDataset]]:
    cfg.check_paths()
    return {Modality(m): load_split(cfg, m) for m in modalities}


# === TRAINING ===

def fit_model(
    model: Model,
    train: SpikeDataset,
    test: SpikeDataset,
    train_cfg: TrainConfig,
    writer: MetricsWriter,
    stream: int = VISUAL_STREAM,
) -> dict:
    """Trains for ``train_cfg.epochs`` epochs, logging train and periodic test metrics; returns the final evaluation."""
    st = train_cfg.optim_state()
    for epoch in range(train_cfg.epochs):
        m = train_epoch(model, train, train_cfg, st, epoch, stream)
        writer.log(epoch, "train", m["loss"], m["accuracy"], m["sparsity"])
        if (epoch + 1) % train_cfg.eval_every == 0 and epoch + 1 < train_cfg.epochs:
            ev = evaluate(model, test)
            writer.log(epoch, "test", ev["loss"], ev["accuracy"], ev["sparsity"])
    final = evaluate(model, test)
    writer.log(train_cfg.epochs, "test", final["loss"], final["accuracy"], final["sparsity"])
    return final


def run_cell(
    cfg: ExperimentConfig,
    model_id: str,
    modality: Modality,
    train: SpikeDataset,
    test: SpikeDataset,
) -> dict:
    """Trains, evaluates, accounts and checkpoints one (model, modality) cell."""
    cell_id = f"{model_id}-{modality.value}"
    seed = cell_seed(cfg.seed, cell_id)
    spec = cfg.spec_for(model_id, modality)
    model = build_model(spec, seed)
    train_cfg = cfg.train.model_copy(update={"seed": seed})
    out = cfg.output_dir

    logger.info(f"🔄 Cell {cell_id}: {model.num_parameters():,} parameters, seed {seed}")
    writer = MetricsWriter(os.path.join(out, "metrics", f"{cell_id}.jsonl"), cell_id, cfg.tracking_uri)
    with writer.run():
        writer.log_params({"model": model_id, "modality": modality.value, "seed": seed, **train_cfg.model_dump()})
        final = fit_model(model, train, test, train_cfg, writer, stream=VISUAL_STREAM)
        ops = efficiency_report(model, test)
        checkpoint = os.path.join(out, "checkpoints", f"{cell_id}.snnw")
        save_model(model, checkpoint)
        writer.log_artifact(checkpoint)

    body = {
        "cell": cell_id,
        "model": model_id,
        "memory": spec.memory.value,
        "modality": modality.value,
        "seed": seed,
        "epochs": train_cfg.epochs,
        "parameters": model.num_parameters(),
        "accuracy": final["accuracy"],
        "loss": final["loss"],
        "sparsity": final["sparsity"],
        "confusion_matrix": final["confusion_matrix"].tolist(),
        "ops": json.loads(ops.model_dump_json()),
    }
    write_json(body, os.path.join(out, "cells", f"{cell_id}.json"))
    logger.info(f"✅ Cell {cell_id}: accuracy {100 * final['accuracy']:.2f}%")
    return body


def fit_joint(
    model: Model,
    data: dict[Modality, tuple[SpikeDataset, SpikeDataset]],
    train_cfg: TrainConfig,
    writer: MetricsWriter,
) -> dict[Modality, dict]:
    """Alternating-batch training of a dual model; returns the final evaluation per modality."""
    (v_train, v_test), (a_train, a_test) = data[Modality.VISUAL], data[Modality.AUDIO]
    st = train_cfg.optim_state()
    for epoch in range(train_cfg.epochs):
        m = train_joint_epoch(model, v_train, a_train, train_cfg, st, epoch)
        for mod in ("visual", "audio"):
            writer.log(epoch, f"train_{mod}", m[mod]["loss"], m[mod]["accuracy"], m[mod]["sparsity"])
    final = {Modality.VISUAL: evaluate(model, v_test), Modality.AUDIO: evaluate(model, a_test)}
    for modality, ev in final.items():
        writer.log(train_cfg.epochs, f"test_{modality.value}", ev["loss"], ev["accuracy"], ev["sparsity"])
    return final


def run_dual_cell(cfg: ExperimentConfig, data: dict[Modality, tuple[SpikeDataset, SpikeDataset]]) -> list[dict]:
    """
    The dual-modality grid cell: one ``joint_model`` network trained on both
    modalities, reported as an extra ``<model>-dual`` ablation row.
    """
    model_id = cfg.grid.joint_model
    cell_id = f"{model_id}-dual"
    seed = cell_seed(cfg.seed, cell_id)
    spec = cfg.spec_for(model_id, Modality.DUAL)
    model = build_model(spec, seed)
    train_cfg = cfg.train.model_copy(update={"seed": seed})
    out = cfg.output_dir

    logger.info(f"🔄 Cell {cell_id}: {model.num_parameters():,} parameters, seed {seed}")
    writer = MetricsWriter(os.path.join(out, "metrics", f"{cell_id}.jsonl"), cell_id, cfg.tracking_uri)
    with writer.run():
        writer.log_params({"model": model_id, "modality": "dual", "seed": seed, **train_cfg.model_dump()})
        final = fit_joint(model, data, train_cfg, writer)
        checkpoint = os.path.join(out, "checkpoints", f"{cell_id}.snnw")
        save_model(model, checkpoint)
        writer.log_artifact(checkpoint)

    bodies = []
    for modality, ev in final.items():
        ops = efficiency_report(model, data[modality][1])
        bodies.append(
            {
                "cell": f"{cell_id}-{modality.value}",
                "model": cell_id,
                "memory": spec.memory.value,
                "modality": modality.value,
                "seed": seed,
                "epochs": train_cfg.epochs,
                "parameters": model.num_parameters(),
                "accuracy": ev["accuracy"],
                "loss": ev["loss"],
                "sparsity": ev["sparsity"],
                "confusion_matrix": ev["confusion_matrix"].tolist(),
                "ops": json.loads(ops.model_dump_json()),
            }
        )
    write_json(bodies, os.path.join(out, "cells", f"{cell_id}.json"))
    logger.info(
        f"✅ Cell {cell_id}: visual {100 * final[Modality.VISUAL]['accuracy']:.2f}% "
        f"audio {100 * final[Modality.AUDIO]['accuracy']:.2f}%"
    )
    return bodies


def ablation_table(cells: list[dict], models: list[str]) -> pd.DataFrame:
    """
    One row per model: Visual and Audio accuracy (percent), their Average and
    Delta = Average - best Average.
    """
    acc = {(c["model"], c["modality"]): 100.0 * c["accuracy"] for c in cells}
    rows = []
    for model_id in models:
        visual = acc.get((model_id, Modality.VISUAL.value))
        audio = acc.get((model_id, Modality.AUDIO.value))
        present = [v for v in (visual, audio) if v is not None]
        if not present:
            continue
        rows.append({"Model": model_id, "Visual": visual, "Audio": audio, "Average": float(np.mean(present))})
    df = pd.DataFrame(rows, columns=["Model", "Visual", "Audio", "Average"])
    df["Delta"] = df["Average"] - df["Average"].max()
    return df


def run_ablation(cfg: ExperimentConfig) -> pd.DataFrame:
    """
    Trains and evaluates every (model, modality) cell of the grid.

    Data sources are resolved before any training starts. Cells run through
    joblib, at most ``SNN_THREADS`` (or ``threads``) at a time. With
    ``grid.dual`` set, a dual-modality ``joint_model`` cell is added as the
    last row.

    Returns:
        pd.DataFrame: The ablation table, also written to ``ablation.csv``.
    """
    modalities = [Modality.VISUAL, Modality.AUDIO] if cfg.grid.dual else cfg.grid.modalities
    data = _load_data(cfg, modalities)
    cells = cfg.cells()
    n_jobs = min(cfg.n_threads(), len(cells))
    logger.info(f"🚀 Ablation grid: {len(cells)} cells on {n_jobs} worker(s)")
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(run_cell)(cfg, model_id, modality, *data[modality]) for model_id, modality in cells
    )
    models = list(cfg.grid.models)
    if cfg.grid.dual:
        results.extend(run_dual_cell(cfg, data))
        models.append(f"{cfg.grid.joint_model}-dual")
    table = ablation_table(results, models)
    write_csv(table, os.path.join(cfg.output_dir, "ablation.csv"))
    logger.info(f"💾 Ablation table written to {cfg.output_dir}/ablation.csv")
    return table


# === JOINT ===

def _row(visual: float, audio: float) -> dict:
    return {"visual": visual, "audio": audio, "average": (visual + audio) / 2.0}


def run_joint(cfg: ExperimentConfig) -> dict:
    """
    Joint (one dual model, alternating batches) against parallel training
    (one model per modality) for the configured hgrn-backed variant.

    All three models share one seed, so shared layer names start identical
    and an untrained comparison has a zero Delta row.
    """
    missing = [m.value for m in (Modality.VISUAL, Modality.AUDIO) if m not in cfg.data]
    if missing:
        raise ConfigError(f"Joint training needs both modalities; no data source for {missing}")
    data = _load_data(cfg, [Modality.VISUAL, Modality.AUDIO])
    (v_train, v_test), (a_train, a_test) = data[Modality.VISUAL], data[Modality.AUDIO]

    model_id = cfg.grid.joint_model
    seed = cell_seed(cfg.seed, f"joint-{model_id}")
    train_cfg = cfg.train.model_copy(update={"seed": seed})
    out = cfg.output_dir

    parallel_v = build_model(cfg.spec_for(model_id, Modality.VISUAL), seed)
    parallel_a = build_model(cfg.spec_for(model_id, Modality.AUDIO), seed)
    joint = build_model(cfg.spec_for(model_id, Modality.DUAL), seed)

    logger.info(f"🔄 Parallel {model_id}: visual and audio models")
    w_v = MetricsWriter(os.path.join(out, "metrics", f"parallel-{model_id}-visual.jsonl"), f"parallel-{model_id}-visual")
    w_a = MetricsWriter(os.path.join(out, "metrics", f"parallel-{model_id}-audio.jsonl"), f"parallel-{model_id}-audio")
    ev_pv = fit_model(parallel_v, v_train, v_test, train_cfg, w_v, VISUAL_STREAM)
    ev_pa = fit_model(parallel_a, a_train, a_test, train_cfg, w_a, AUDIO_STREAM)

    logger.info(f"🔄 Joint {model_id}: dual model, alternating visual/audio batches")
    w_j = MetricsWriter(os.path.join(out, "metrics", f"joint-{model_id}.jsonl"), f"joint-{model_id}", cfg.tracking_uri)
    with w_j.run():
        final = fit_joint(joint, data, train_cfg, w_j)
    ev_jv, ev_ja = final[Modality.VISUAL], final[Modality.AUDIO]
    save_model(joint, os.path.join(out, "checkpoints", f"joint-{model_id}.snnw"))

    parallel = _row(100.0 * ev_pv["accuracy"], 100.0 * ev_pa["accuracy"])
    unified = _row(100.0 * ev_jv["accuracy"], 100.0 * ev_ja["accuracy"])
    delta = {k: unified[k] - parallel[k] for k in parallel}

    table = pd.DataFrame(
        [
            {"Setting": "Parallel", "Visual": parallel["visual"], "Audio": parallel["audio"], "Average": parallel["average"]},
            {"Setting": "Joint", "Visual": unified["visual"], "Audio": unified["audio"], "Average": unified["average"]},
            {"Setting": "Delta", "Visual": delta["visual"], "Audio": delta["audio"], "Average": delta["average"]},
        ]
    )
    write_csv(table, os.path.join(out, "joint.csv"))

    ref = REFERENCE_JOINT["joint"]
    report = {
        "model": model_id,
        "seed": seed,
        "epochs": train_cfg.epochs,
        "average_kind": "arithmetic_mean",
        "parallel": parallel,
        "joint": unified,
        "delta": delta,
        "updates_per_joint_step": 2,
        "reference": REFERENCE_JOINT,
        "reference_discrepancy": {
            "flag": abs(ref["average_printed"] - ref["average_arithmetic"]) > 0.005,
            "printed_average": ref["average_printed"],
            "arithmetic_mean": ref["average_arithmetic"],
            "note": "printed joint average differs from the mean of its printed visual/audio columns",
        },
    }
    write_json(report, os.path.join(out, "joint.json"))
    logger.info(
        f"✅ Joint vs parallel: Δ visual {delta['visual']:+.2f} audio {delta['audio']:+.2f} "
        f"average {delta['average']:+.2f}"
    )
    return report


# === ENGRAM ===

def run_engram(cfg: ExperimentConfig, checkpoints: str) -> list[EngramReport]:
    """
    Engram analysis of trained cells found under ``checkpoints``.

    Every requested checkpoint is checked before any analysis runs; a missing
    one raises DataIOError naming its cell.
    """
    models = cfg.engram.models or cfg.grid.models
    paths = {}
    for model_id in models:
        for modality in cfg.grid.modalities:
            cell_id = f"{model_id}-{modality.value}"
            path = os.path.join(checkpoints, f"{cell_id}.snnw")
            if not os.path.exists(path):
                raise DataIOError(f"Missing checkpoint for cell {cell_id}: {path}")
            paths[(model_id, modality)] = path

    data = _load_data(cfg, cfg.grid.modalities)
    out = cfg.output_dir
    reports, rows = [], []
    for model_id in models:
        features: dict[Modality, FeatureMatrix] = {}
        for modality in cfg.grid.modalities:
            model = load_model(paths[(model_id, modality)])
            _, test = data[modality]
            F = rate_features(model, test, cfg.engram.per_class, cfg.seed, cfg.engram.classes)
            F.to_csv(os.path.join(out, "features", f"{model_id}-{modality.value}.csv"))
            features[modality] = F
        report = engram_report(model_id, features, cfg.engram.var_threshold, cfg.seed)
        reports.append(report)
        rows.extend(report.table_rows())

    columns = ["Model", "Modality", "Silhouette", "DB", "Transfer", "AlignmentMeanDiag", "EffDimFraction"]
    write_csv(pd.DataFrame(rows, columns=columns), os.path.join(out, "engram.csv"))
    with open(os.path.join(out, "engram.json"), "w") as fh:
        fh.write("[\n" + ",\n".join(r.model_dump_json(indent=2) for r in reports) + "\n]\n")
    logger.info(f"💾 Engram report written for {len(reports)} model(s)")
    return reports
