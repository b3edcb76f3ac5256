# -*- coding: utf-8 -*-
"""
One function per command of the gaitforge pipeline.

This file is minimal, only validating the options of a command and handing
them to the modules (or to a batch driver in ``scripts/``), so as not to
mix the "true" code with the command plumbing. Every command returns its
exit code.
"""
import logging
from pathlib import Path
from typing import Any, Dict

from importlib_metadata import metadata as _metadata

from gaitforge import configs, fields
from gaitforge.adapters import ingest_capture
from gaitforge.camera import project_ring, ring_from_settings
from gaitforge.cohort import make_synthetic_cohort
from gaitforge.features import default_ranges, export_feature_csv, \
    feature_table
from gaitforge.misc import _catch_error, ls_files, set_log, yaml_save
from gaitforge.model import build_model, scale_model
from gaitforge.scripts import evaluate as evaluate_script
from gaitforge.scripts import synthesize as synthesize_script
from gaitforge.storage import (
    load_capture, load_profiles, load_trials, save_model, save_profiles,
    save_trials,
)
from gaitforge.synth import parse_scales

logger = logging.getLogger(__name__)
logger.setLevel(configs.LOG_LEVEL)


def get_metadata() -> Dict[str, Any]:
    """
    Returns a dictionary containing metadata information about the package
    and the inputs and reports available locally.
    """
    project = _metadata(configs.PROJECT_NAME).json
    metadata = {
        'name': project.get("name"),
        'authors': project.get("author"),
        'description': project.get("summary"),
        'home_page': project.get("home_page"),
        'license': project.get("license"),
        'version': project.get("version"),
        'commands': list(fields.COMMAND_SCHEMAS),
        'trials_LOCAL': ls_files(configs.DATA_PATH, "*.jsonl"),
        'reports_LOCAL': ls_files(configs.OUT_PATH, "report_*.json"),
    }
    logger.debug("Package metadata: %s", metadata)
    return metadata


def get_command_args(command: str):
    """
    Return the options of a command.

    Returns:
        Dictionary of marshmallow fields.
    """
    return fields.COMMAND_SCHEMAS[command]().fields


def _prepare(command: str, args: Dict[str, Any]):
    """Validated options, merged run configuration and output directory."""
    args = fields.COMMAND_SCHEMAS[command]().load(args)
    config = configs.load_run_config(args["config"])
    if args["seed"] is None:
        args["seed"] = config.seed
    out = Path(args["out"])
    set_log(out)
    yaml_save(file_path=Path(out, "options.yaml"), data=args)
    return args, config, out


@_catch_error
def scale(**args):
    """
    Build every subject's model and scale it by each factor.

    Writes ``models/<subject>_s<scale>.json`` per (subject, factor).
    """
    args, config, out = _prepare("scale", args)
    limits = {joint: config["model"][f"{joint}_limits_deg"]
              for joint in ("hip", "knee", "ankle")}
    factors = parse_scales(args["scales"])
    profiles = load_profiles(args["profiles"])
    for profile in profiles:
        model = build_model(profile, limits)
        for s in factors:
            save_model(scale_model(model, s),
                       Path(out, "models", f"{profile.subject_id}_s{s:.2f}"
                                           f".json"))
    logger.info(f"Saved {len(profiles) * len(factors)} model(s) to "
                f"{Path(out, 'models')}")


@_catch_error
def synth(**args):
    """Augment a cohort with synthesized trials."""
    args = fields.SynthArgsSchema().load(args)
    synthesize_script.main(args)


@_catch_error
def project(**args):
    """Reproject every trial on the camera ring."""
    args, config, out = _prepare("project", args)
    cams = ring_from_settings(args["views"], args["start_deg"],
                              args["step_deg"], values=config["camera"])
    projected = project_ring(load_trials(args["trials"]), cams,
                             n_jobs=args["jobs"])
    save_trials(projected, Path(out, "projected.jsonl"))


@_catch_error
def featurize(**args):
    """Export the feature matrix of a trial file to CSV."""
    args, config, out = _prepare("featurize", args)
    table = feature_table(load_trials(args["trials"]),
                          args["representation"], args["frames"],
                          args["bins"],
                          ranges=default_ranges(config["features"]),
                          normalize=bool(config["camera"]["normalize_2d"]))
    path = Path(out, f"features_{args['representation']}.csv")
    export_feature_csv(table, path)
    logger.info(f"Saved {len(table)} feature row(s) to {path}")


@_catch_error
def evaluate(**args):
    """Leave-one-subject-out evaluation of a classifier."""
    args = fields.EvaluateArgsSchema().load(args)
    evaluate_script.main(args)


@_catch_error
def report(**args):
    """Merge evaluation reports into one table."""
    args = fields.ReportArgsSchema().load(args)
    evaluate_script.merge(args)


@_catch_error
def cohort(**args):
    """Write the bundled synthetic cohort and its real-tagged trials."""
    args, config, out = _prepare("cohort", args)
    profiles, trials = make_synthetic_cohort(
        n_subjects=args["subjects"],
        trials_per_subject=args["trials_per_subject"],
        seed=args["seed"], noise_deg=args["noise_deg"],
        duration_s=float(config["augmentation"]["duration_s"]))
    save_profiles(profiles, Path(out, "cohort.json"))
    save_trials(trials, Path(out, "real_trials.jsonl"))


@_catch_error
def ingest(**args):
    """Build profiles and real trials from motion-capture joints."""
    args, _, out = _prepare("ingest", args)
    profiles, trials = ingest_capture(load_capture(args["capture"]))
    save_profiles(profiles, Path(out, "cohort.json"))
    save_trials(trials, Path(out, "real_trials.jsonl"))


COMMANDS = {
    "scale": scale,
    "synth": synth,
    "project": project,
    "featurize": featurize,
    "evaluate": evaluate,
    "report": report,
    "cohort": cohort,
    "ingest": ingest,
}
