"""
COMMAND-LINE RUNNER - experiments, data conversion and synthetic data
=====================================================================

Subcommands:
    ablate  --config <path>                      ablation grid -> ablation.csv
    joint   --config <path>                      joint vs parallel -> joint.csv / joint.json
    engram  --config <path> --checkpoints <dir>  engram analysis -> engram.csv / engram.json
    convert --in <nmnist_dir|evt> --out <dir>    raw events -> EVT containers
    synth   --kind spatial|temporal --out <dir>  synthetic EVT dataset

Exit codes: 0 success, 2 config error, 3 I/O error, 4 numeric fault.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys

from src.data.events import EventStream
from src.data.load_data import list_event_files, load_evt_dir, load_nmnist_dir, read_evt_file, write_evt_file
from src.data.synth import SynthKind, synth_dataset
from src.utils.errors import DataIOError, MalformedFileError, SNNError
from src.utils.logger import configure_logging, get_logger

logger = get_logger(__name__)


def _write_streams(streams: list[EventStream], out: str, prefix: str) -> list[str]:
    paths = []
    for i, stream in enumerate(streams):
        path = os.path.join(out, str(stream.label), f"{prefix}_{i:05d}.evt")
        write_evt_file(stream, path)
        paths.append(path)
    return paths


def _read_source(path: str) -> tuple[list[EventStream], str]:
    if os.path.isfile(path):
        if not path.endswith(".evt"):
            raise DataIOError(f"convert expects an N-MNIST directory or .evt input, got {path}")
        return [read_evt_file(path)], "evt"
    if not os.path.isdir(path):
        raise DataIOError(f"Input not found: {path}")
    if list_event_files(path, "nmnist"):
        return load_nmnist_dir(path), "nmnist"
    if glob.glob(os.path.join(path, "**", "*.evt"), recursive=True):
        return load_evt_dir(path), "evt"
    raise DataIOError(f"No .bin or .evt files under {path}")


def cmd_convert(args) -> str:
    streams, kind = _read_source(args.input)
    if not args.no_validate:
        from src.utils.validate_dataset import validate_event_streams

        ok, failed = validate_event_streams(streams)
        if not ok:
            raise MalformedFileError(f"Event validation failed for {args.input}: {failed}")
    paths = _write_streams(streams, args.out, "sample")
    logger.info(f"✅ Converted {len(paths)} {kind} recordings into {args.out}")
    return f"converted {len(paths)} streams -> {args.out}"


def cmd_synth(args) -> str:
    streams = synth_dataset(args.kind, args.classes, args.samples_per_class, args.seed)
    paths = _write_streams(streams, args.out, args.kind)
    logger.info(f"✅ Wrote {len(paths)} synthetic {args.kind} streams to {args.out}")
    return f"synthesized {len(paths)} {args.kind} streams -> {args.out}"


def cmd_ablate(args) -> str:
    from src.app.config import load_config
    from src.app.experiments import run_ablation

    cfg = load_config(args.config)
    table = run_ablation(cfg)
    return table.to_string(index=False, float_format=lambda v: f"{v:.2f}")


def cmd_joint(args) -> str:
    from src.app.config import load_config
    from src.app.experiments import run_joint

    report = run_joint(load_config(args.config))
    rows = [("Parallel", report["parallel"]), ("Joint", report["joint"]), ("Delta", report["delta"])]
    return "\n".join(f"{name:<9} visual {r['visual']:7.2f}  audio {r['audio']:7.2f}  average {r['average']:7.2f}" for name, r in rows)


def cmd_engram(args) -> str:
    from src.app.config import load_config
    from src.app.experiments import run_engram

    reports = run_engram(load_config(args.config), args.checkpoints)
    lines = []
    for report in reports:
        for row in report.table_rows():
            lines.append(
                f"{row['Model']} {row['Modality']:<6} sil {row['Silhouette']:.3f}  DB {row['DB']:.3f}  "
                f"effdim {row['EffDimFraction']:.4f}"
            )
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="snn-memory", description="Memory-augmented spiking network experiments")
    p.add_argument("--log-level", type=str, default=None, help="overrides SNN_LOG_LEVEL (default INFO)")
    sub = p.add_subparsers(dest="command", required=True)

    for name, fn, help_text in (
        ("ablate", cmd_ablate, "train and evaluate the model x modality grid"),
        ("joint", cmd_joint, "compare joint dual-modality training against parallel models"),
    ):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", type=str, required=True, help="experiment JSON config")
        s.set_defaults(func=fn)

    s = sub.add_parser("engram", help="engram quality analysis of trained checkpoints")
    s.add_argument("--config", type=str, required=True)
    s.add_argument("--checkpoints", type=str, required=True, help="directory holding <model>-<modality>.snnw files")
    s.set_defaults(func=cmd_engram)

    s = sub.add_parser("convert", help="convert N-MNIST .bin trees or EVT files into EVT containers")
    s.add_argument("--in", dest="input", type=str, required=True)
    s.add_argument("--out", type=str, required=True)
    s.add_argument("--no-validate", action="store_true", help="skip the Great Expectations checks")
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("synth", help="write a synthetic EVT dataset")
    s.add_argument("--kind", type=str, choices=[k.value for k in SynthKind], required=True)
    s.add_argument("--out", type=str, required=True)
    s.add_argument("--classes", type=int, default=4)
    s.add_argument("--samples-per-class", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        summary = args.func(args)
    except SNNError as exc:
        logger.error(f"❌ {type(exc).__name__}: {exc}")
        return exc.exit_code
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
