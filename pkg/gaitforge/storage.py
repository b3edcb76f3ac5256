# -*- coding: utf-8 -*-
"""
Persistence of trials (JSONL), models, cohorts and reports (JSON).

Every writer is deterministic (fixed field order, newline terminated) and
atomic: content goes to a temporary file in the target directory which then
replaces the target.
"""
import json
import logging
import os
from pathlib import Path
import tempfile
from typing import Any, Dict, Iterable, List, Sequence, Union

from marshmallow import ValidationError

from gaitforge import configs
from gaitforge.fields import (
    CAPTURE_SCHEMA, COHORT_SCHEMA, CaptureSchema, CohortSchema,
    MODEL_SCHEMA, ModelSchema, TRIAL_SCHEMA, TrialSchema,
)
from gaitforge.misc import GaitForgeError
from gaitforge.model import AnthropometricProfile, SkeletalModel
from gaitforge.trials import GaitTrial

logger = logging.getLogger(__name__)
logger.setLevel(configs.LOG_LEVEL)

PathLike = Union[str, Path]


class ParseError(GaitForgeError):
    """Raised on a record that cannot be parsed; ``line`` is 1-based."""

    def __init__(self, message: str, line: int = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class SchemaMismatch(GaitForgeError):
    """Raised when a record carries another schema tag."""
    pass


class IoError(GaitForgeError):
    pass


def _dumps(record: Dict[str, Any]) -> str:
    return json.dumps(record, ensure_ascii=False, allow_nan=False)


def atomic_write(path: PathLike, text: str):
    """
    Write ``text`` to ``path`` through a temporary sibling file.

    Raises:
        IoError: if the destination cannot be written
    """
    path = Path(path)
    tmp_name = None
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile("w", encoding="utf-8",
                                         dir=path.parent, delete=False,
                                         prefix=f".{path.name}.",
                                         suffix=".tmp") as tmp:
            tmp_name = tmp.name
            tmp.write(text)
            tmp.flush()
            os.fsync(tmp.fileno())
        os.replace(tmp_name, path)
    except OSError as e:
        if tmp_name is not None and Path(tmp_name).exists():
            Path(tmp_name).unlink()
        raise IoError(f"could not write '{path}': {e}") from e


def _check_tag(record: Dict[str, Any], expected: str, line: int = None):
    tag = record.get("schema")
    if tag != expected:
        where = f"line {line}: " if line is not None else ""
        raise SchemaMismatch(f"{where}expected schema '{expected}', "
                             f"found {tag!r}")


def _read(path: PathLike) -> str:
    """
    UTF-8 text of a file.

    Raises:
        IoError: if the file cannot be read
        ParseError: on invalid UTF-8, citing the offending line
    """
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"could not read '{path}': {e}") from e
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        line = data.count(b"\n", 0, e.start) + 1
        raise ParseError(f"invalid UTF-8 in '{path}' ({e.reason})",
                         line) from e


# trials -------------------------------------------------------------------
def trial_to_record(trial: GaitTrial) -> Dict[str, Any]:
    return TrialSchema().dump(trial)


def trial_from_record(record: Dict[str, Any], line: int = None) -> GaitTrial:
    _check_tag(record, TRIAL_SCHEMA, line)
    try:
        trial = TrialSchema().load(record)
    except ValidationError as e:
        raise ParseError(f"invalid trial: {e.messages}", line) from e
    try:
        return trial.validate()
    except GaitForgeError as e:
        raise ParseError(str(e), line) from e


def load_trials(path: PathLike) -> List[GaitTrial]:
    """
    Load and validate every trial of a JSONL file.

    Raises:
        IoError: if the file cannot be read
        ParseError: on malformed JSON or an invalid trial, citing its line
        SchemaMismatch: on a line with another schema tag
    """
    trials = []
    # records may hold U+2028, split on "\n" only
    for number, line in enumerate(_read(path).split("\n"), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"malformed JSON ({e.msg})", number) from e
        if not isinstance(record, dict):
            raise ParseError("a trial record must be a JSON object", number)
        trials.append(trial_from_record(record, number))
    logger.debug(f"Loaded {len(trials)} trial(s) from '{path}'")
    return trials


def save_trials(trials: Iterable[GaitTrial], path: PathLike):
    """Write one trial per line, in the given order."""
    lines = [_dumps(trial_to_record(trial)) + "\n" for trial in trials]
    atomic_write(path, "".join(lines))
    logger.debug(f"Saved {len(lines)} trial(s) to '{path}'")


# models and cohorts -------------------------------------------------------
def save_json(data: Any, path: PathLike):
    atomic_write(path, json.dumps(data, indent=2, ensure_ascii=False) + "\n")


def load_json(path: PathLike) -> Any:
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON in '{path}' ({e.msg})",
                         e.lineno) from e


def save_model(model: SkeletalModel, path: PathLike):
    save_json(ModelSchema().dump(model), path)


def load_model(path: PathLike) -> SkeletalModel:
    record = load_json(path)
    _check_tag(record, MODEL_SCHEMA)
    try:
        return ModelSchema().load(record)
    except ValidationError as e:
        raise ParseError(f"invalid model '{path}': {e.messages}") from e


def save_profiles(profiles: Sequence[AnthropometricProfile], path: PathLike):
    save_json(CohortSchema().dump({"profiles": list(profiles)}), path)


def load_profiles(path: PathLike) -> List[AnthropometricProfile]:
    record = load_json(path)
    _check_tag(record, COHORT_SCHEMA)
    try:
        return CohortSchema().load(record)
    except ValidationError as e:
        raise ParseError(f"invalid cohort '{path}': {e.messages}") from e


def load_capture(path: PathLike) -> List[Dict[str, Any]]:
    """Subjects of a capture document, validated but not yet converted."""
    record = load_json(path)
    _check_tag(record, CAPTURE_SCHEMA)
    try:
        return CaptureSchema().load(record)
    except ValidationError as e:
        raise ParseError(f"invalid capture '{path}': {e.messages}") from e


def write_run_log(path: PathLike, records: Iterable[Dict[str, Any]]):
    """
    Append solve reports to a run log, one JSON object per line.

    Earlier records are kept; the file is rewritten atomically.
    """
    path = Path(path)
    previous = _read(path) if path.exists() else ""
    if previous and not previous.endswith("\n"):
        previous += "\n"
    lines = [_dumps(record) + "\n" for record in records]
    atomic_write(path, previous + "".join(lines))
    logger.debug(f"Appended {len(lines)} record(s) to '{path}'")


def read_run_log(path: PathLike) -> List[Dict[str, Any]]:
    """Every record of a run log, oldest first."""
    records = []
    for number, line in enumerate(_read(path).split("\n"), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise ParseError(f"malformed JSON ({e.msg})", number) from e
    return records
