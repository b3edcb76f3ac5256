#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Configuration loader for gaitforge.

The packaged ``settings.ini`` holds every numeric default of the pipeline.
A run may layer its own ini file on top of it (``--config``); the merged
sections are handed to the modules as plain mappings.
"""
# imports
import ast
import configparser
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union
# --------------------------------------

# Get absolute paths for reference
API_PATH = Path(__file__).resolve().parents[1]    # = ./gaitforge/
BASE_PATH = API_PATH.parent      # = ./

# Get configuration from user env and merge with pkg settings
SETTINGS_FILE = Path(Path(__file__).parent, "settings.ini")

SETTINGS_FILE = os.getenv("GAITFORGE_SETTINGS", default=SETTINGS_FILE)
settings = configparser.ConfigParser()
settings.read(SETTINGS_FILE)

SECTIONS = ("run", "model", "contact", "problem", "collocation", "shooting",
            "augmentation", "camera", "features", "esknn", "lstm")


class ConfigError(Exception):
    """Raised when a run configuration is incomplete or inconsistent."""
    exit_code = 1


def resolve_path(path: Union[str, Path]) -> Path:
    if Path(path).is_absolute():
        return Path(path)
    else:
        return Path(BASE_PATH, path).absolute()


def parse_value(raw: str) -> Any:
    """Literal-evaluate a settings value, keeping bare words as strings."""
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw


def section(parser: configparser.ConfigParser, name: str) -> Dict[str, Any]:
    return {key: parse_value(value) for key, value in parser[name].items()}


try:  # Configure project name for metadata lookup
    PROJECT_NAME = os.getenv("PROJECT_NAME",
                             default=settings['project']['name'])
except KeyError as err:
    raise RuntimeError("Undefined configuration for project name") from err

try:  # Configure input files and command outputs
    DATA_PATH = Path(os.getenv(
        "DATA_PATH", default=resolve_path(settings['local']['data'])
    ))
    OUT_PATH = Path(os.getenv(
        "OUT_PATH", default=resolve_path(settings['local']['out'])
    ))
except KeyError as err:
    raise RuntimeError("Undefined configuration for local paths") from err

try:  # Every pipeline section must be present in the packaged settings
    DEFAULTS = {name: section(settings, name) for name in SECTIONS}
except KeyError as err:
    raise RuntimeError(f"Undefined configuration section {err}") from err


@dataclass(frozen=True)
class RunConfig:
    """Merged run configuration, one mapping per settings section."""
    sections: Mapping[str, Mapping[str, Any]] = field(
        default_factory=lambda: DEFAULTS)
    source: Optional[str] = None

    def __getitem__(self, name: str) -> Dict[str, Any]:
        return dict(self.sections[name])

    @property
    def seed(self) -> int:
        return int(self.sections["run"]["seed"])


def load_run_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Load the packaged defaults, optionally overlaid by a user ini file.

    Args:
        path: user configuration file; sections and keys it names replace
            the packaged values, everything else keeps the default.

    Returns:
        RunConfig

    Raises:
        ConfigError: if the file is missing, the seed is not an explicit
            integer, or a ``*_path`` entry names a path that does not exist.
    """
    parser = configparser.ConfigParser()
    parser.read(SETTINGS_FILE)
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"Configuration file '{path}' does not exist")
        parser.read(path)

    sections = {name: section(parser, name) for name in SECTIONS}

    seed = sections["run"].get("seed")
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"[run] seed must be an explicit integer, "
                          f"got {seed!r}")

    for name, values in sections.items():
        for key, value in values.items():
            if key.endswith("_path") and not Path(str(value)).exists():
                raise ConfigError(f"[{name}] {key} = '{value}' does not exist")

    return RunConfig(sections=sections,
                     source=None if path is None else str(path))


# configure logging:
ENV_LOG_LEVEL = os.getenv("GAITFORGE_LOG",
                          default=settings['logging']['log_level'])
LOG_LEVEL = getattr(logging, ENV_LOG_LEVEL.upper(), logging.INFO)
