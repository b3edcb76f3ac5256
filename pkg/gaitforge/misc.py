"""
This file gathers some utility functions for all other scripts
(error base classes, command error handling, logging set-up, option dumps).
"""

from functools import wraps
import logging
from pathlib import Path
from typing import Any, Dict, List
import zlib

from marshmallow import fields, ValidationError
import yaml

from gaitforge import configs

logger = logging.getLogger(__name__)
logger.setLevel(configs.LOG_LEVEL)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SOLVER_BUDGET = 2
EXIT_USAGE = 64

_FIELD_TYPES = {fields.Int: int, fields.Float: float, fields.Str: str,
                fields.List: str}


class GaitForgeError(Exception):
    """Base class of every error raised by the pipeline."""
    exit_code = EXIT_VALIDATION


class PreconditionViolation(GaitForgeError, ValueError):
    """Raised when an operation is called outside its documented domain."""
    pass


class UsageError(GaitForgeError):
    """Raised on bad command-line flags or an unknown subcommand."""
    exit_code = EXIT_USAGE


class FailureBudgetExceeded(GaitForgeError):
    """Raised when too many solves of a synthesis batch failed."""
    exit_code = EXIT_SOLVER_BUDGET


def require(condition: bool, message: str):
    """Raise PreconditionViolation with ``message`` unless ``condition``."""
    if not condition:
        raise PreconditionViolation(message)


def _catch_error(f):
    """
    Decorate command functions to return an exit code instead of raising,
    in case they fail.
    """

    @wraps(f)
    def wrap(*args, **kwargs):
        try:
            f(*args, **kwargs)
            return EXIT_OK
        except ValidationError as e:
            logger.error(f"Invalid arguments: {e.messages}")
            return EXIT_VALIDATION
        except (GaitForgeError, configs.ConfigError) as e:
            logger.error(f"{type(e).__name__}: {e}")
            return e.exit_code
        except OSError as e:
            logger.error(f"I/O failure: {e}")
            return EXIT_VALIDATION
        except Exception as e:
            logger.error(f"Unexpected failure: {e}", exc_info=True)
            return EXIT_VALIDATION

    return wrap


def _fields_to_dict(fields_in) -> Dict[str, Dict[str, Any]]:
    """
    Function to convert marshmallow fields to dict()
    """
    dict_out = {}
    for k, v in fields_in.items():
        param = {}
        param["default"] = v.load_default
        param["type"] = _FIELD_TYPES.get(type(v), str)
        param["flag"] = isinstance(v, fields.Boolean)
        param["multiple"] = isinstance(v, fields.List)
        param["required"] = getattr(v, "required", False)

        v_help = v.metadata["description"]
        if "enum" in v.metadata.keys():
            v_help = f"{v_help}. Choices: {v.metadata['enum']}"
            param["choices"] = v.metadata["enum"]
        param["help"] = v_help

        dict_out[k] = param

    return dict_out


def set_log(log_dir: Path):
    """Route pipeline logs to ``<log_dir>/gaitforge.log`` and the console."""
    Path(log_dir).mkdir(parents=True, exist_ok=True)
    root = logging.getLogger("gaitforge")
    root.setLevel(configs.LOG_LEVEL)
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()

    logfile = logging.FileHandler(Path(log_dir, "gaitforge.log"), mode='w')
    logfile.setFormatter(
        logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(logfile)

    console = logging.StreamHandler()
    console.setLevel(configs.LOG_LEVEL)
    console.setFormatter(logging.Formatter('%(message)s'))
    root.addHandler(console)


def ls_files(directory: Path, pattern: str = "*.json") -> List[str]:
    """
    Utility to return a sorted list of files in a given directory
    matching a pattern.

    Args:
        directory (Path): Path of the directory to scan
        pattern (str): The pattern to use for scanning

    Returns:
        list: list of matching file paths
    """
    logger.debug(f"Scanning through '{directory}' with pattern '{pattern}'")
    return sorted(str(p) for p in Path(directory).rglob(pattern)
                  if p.is_file())


def derive_seed(base_seed: int, key: str) -> int:
    """Stable per-job seed from the run seed and a job key."""
    return (int(base_seed) * 1_000_003 + zlib.crc32(key.encode())) % (2 ** 31)


def yaml_save(file_path: Path, data: Dict[str, Any]):
    """
    Save provided data to a yaml file at file_path destination

    Args:
        file_path: path to where yaml file will be saved to
        data: data to be saved
    """
    with open(str(file_path), 'w') as f:
        yaml.safe_dump(
            {k: str(v) for k, v in data.items()},
            f,
            sort_keys=False
        )

