# SPDX-License-Identifier: MIT
"""JSON Lines reader and writer for transition datasets."""
import json
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import ValidationError

from cawr.errors import DataValidationError
from cawr.mdp import Dataset
from cawr.schemas import DatasetMetadata, MetaRecord, TransitionRecord

logger = logging.getLogger(__name__)


def _first_error(e: ValidationError) -> str:
    err = e.errors()[0]
    where = ".".join(str(part) for part in err.get("loc", ())) or "record"
    return f"{where}: {err.get('msg', 'invalid value')}"


def write_dataset(path: Union[str, Path], dataset: Dataset) -> Path:
    """
    Write a metadata header line followed by one line per transition.

    Floats are written with their shortest round-trip representation, so
    reading the file back yields the same arrays.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = MetaRecord(meta=dataset.metadata).model_dump(mode="json", exclude_none=True)
    with path.open("w", encoding="utf-8") as f:
        f.write(json.dumps(header) + "\n")
        for i in range(len(dataset)):
            record = {
                "s": dataset.states[i].tolist(),
                "a": dataset.actions[i].tolist(),
                "r": float(dataset.rewards[i]),
                "s2": dataset.next_states[i].tolist(),
                "done": bool(dataset.terminals[i]),
            }
            f.write(json.dumps(record) + "\n")
    logger.info("wrote %d transitions to %s", len(dataset), path)
    return path


def ingest_dataset(path: Union[str, Path]) -> Dataset:
    """
    Read and validate a JSONL dataset.

    The metadata header is optional; without one the dimensions are taken
    from the first transition. Blank lines are skipped.

    Args:
        path: dataset file

    Returns:
        the validated dataset

    Raises:
        DataValidationError: if the file is missing or empty, a line is malformed,
            or a transition's dimensions differ from the header or earlier lines
    """
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"dataset file not found: {path}")

    metadata: Optional[DatasetMetadata] = None
    dims = None
    columns = {"s": [], "a": [], "r": [], "s2": [], "done": []}

    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataValidationError(f"{path}:{lineno}: not valid JSON ({e.msg})") from e
            if not isinstance(raw, dict):
                raise DataValidationError(f"{path}:{lineno}: expected a JSON object")

            if "meta" in raw:
                if metadata is not None or columns["s"]:
                    raise DataValidationError(f"{path}:{lineno}: metadata must be the first line")
                try:
                    metadata = MetaRecord.model_validate(raw).meta
                except ValidationError as e:
                    raise DataValidationError(f"{path}:{lineno}: bad metadata, {_first_error(e)}") from e
                dims = (metadata.state_dim, metadata.action_dim)
                continue

            try:
                record = TransitionRecord.model_validate(raw)
            except ValidationError as e:
                raise DataValidationError(f"{path}:{lineno}: bad transition, {_first_error(e)}") from e
            if dims is None:
                dims = (len(record.s), len(record.a))
            if (len(record.s), len(record.a)) != dims:
                raise DataValidationError(
                    f"{path}:{lineno}: transition has dimensions ({len(record.s)}, {len(record.a)}), "
                    f"expected {dims}"
                )
            columns["s"].append(record.s)
            columns["a"].append(record.a)
            columns["r"].append(record.r)
            columns["s2"].append(record.s2)
            columns["done"].append(record.done)

    if not columns["s"]:
        raise DataValidationError(f"{path} contains no transitions")
    dataset = Dataset(
        np.asarray(columns["s"], dtype=np.float64),
        np.asarray(columns["a"], dtype=np.float64),
        np.asarray(columns["r"], dtype=np.float64),
        np.asarray(columns["s2"], dtype=np.float64),
        np.asarray(columns["done"], dtype=bool),
        metadata,
    )
    logger.info("ingested %d transitions from %s", len(dataset), path)
    return dataset
