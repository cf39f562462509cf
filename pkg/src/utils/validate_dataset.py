from __future__ import annotations

import numpy as np
import pandas as pd

from src.data.events import EventStream
from src.utils.logger import get_logger

logger = get_logger(__name__)


def events_frame(streams: list[EventStream]) -> pd.DataFrame:
    """Flattens streams into one event table with a ``sample`` and ``label`` column per row."""
    frames = [
        pd.DataFrame(
            {
                "sample": np.full(len(s), i, dtype=np.int64),
                "t": s.t,
                "x": s.x,
                "y": s.y,
                "p": s.p,
                "label": np.full(len(s), s.label, dtype=np.int64),
            }
        )
        for i, s in enumerate(streams)
    ]
    if not frames:
        return pd.DataFrame(columns=["sample", "t", "x", "y", "p", "label"])
    return pd.concat(frames, ignore_index=True)


def validate_event_streams(streams: list[EventStream]) -> tuple[bool, list[str]]:
    """
    Data-quality checks on loaded event streams using Great Expectations.

    Checks run against the declared geometry of the first stream: the event
    columns exist, timestamps are non-negative, coordinates fit the sensor,
    polarity is binary and labels are non-negative.

    Returns:
        tuple: (all checks passed, names of failed expectations)
    """
    import great_expectations as ge

    logger.info(f"🔍 Validating {len(streams)} event streams with Great Expectations...")
    df = events_frame(streams)
    ge_df = ge.from_pandas(df)

    # === SCHEMA ===
    for col in ("t", "x", "y", "p", "label"):
        ge_df.expect_column_to_exist(col)
        ge_df.expect_column_values_to_not_be_null(col)

    # === RANGES ===
    if streams:
        g = streams[0].geometry
        ge_df.expect_column_values_to_be_between("t", min_value=0)
        ge_df.expect_column_values_to_be_between("x", min_value=0, max_value=g.width - 1)
        ge_df.expect_column_values_to_be_between("y", min_value=0, max_value=g.height - 1)
        ge_df.expect_column_values_to_be_in_set("p", [0, 1])
        ge_df.expect_column_values_to_be_between("label", min_value=0)

    results = ge_df.validate()
    failed = [
        f"{r['expectation_config']['expectation_type']}({r['expectation_config']['kwargs'].get('column')})"
        for r in results["results"]
        if not r["success"]
    ]
    total = len(results["results"])
    if results["success"]:
        logger.info(f"✅ Event validation PASSED: {total}/{total} checks")
    else:
        logger.error(f"❌ Event validation FAILED: {len(failed)}/{total} checks failed: {failed}")
    return bool(results["success"]), failed
