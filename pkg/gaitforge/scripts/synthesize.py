#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
USAGE

Augment a cohort with the seven default scale factors, keeping the real
trials and copying every real trial velocity:
gaitforge synth --profiles cohort.json --trials real_trials.jsonl
--scales 0.7:0.1:1.3 --duration 2.0 --out runs/synth

Synthetic trials only, single shooting, at the cohort mean velocity:
gaitforge synth --profiles cohort.json --trials real_trials.jsonl
--mode sim_only --solver shooting --speed-policy cohort_mean
"""
import logging
from pathlib import Path
from typing import Any, Dict, List

from gaitforge import configs
from gaitforge.dynamics import ContactParams
from gaitforge.misc import FailureBudgetExceeded, set_log, yaml_save
from gaitforge.storage import (
    load_profiles, load_trials, save_json, save_trials, write_run_log,
)
from gaitforge.synth import (
    AugmentationPlan, AugmentedDataset, augment_dataset, parse_scales,
)
from gaitforge.trajopt import CollocationOptions, ShootingOptions

logger = logging.getLogger(__name__)
logger.setLevel(configs.LOG_LEVEL)


def run_log_records(dataset: AugmentedDataset) -> List[Dict[str, Any]]:
    """One record per planned job, converged solves and failures alike."""
    records = [{"trial_id": trial.trial_id, "status": "converged",
                "subject_id": trial.subject_id,
                "scale_factor": trial.scale_factor,
                "speed_mps": trial.speed_mps,
                **trial.extra.get("solve", {})}
               for trial in dataset.trials if trial.provenance == "simulated"]
    records += [{"status": "failed", **failure.to_dict()}
                for failure in dataset.failures]
    return sorted(records, key=lambda record: record["trial_id"])


def main(args: Dict[str, Any]) -> AugmentedDataset:
    """
    Run the augmentation batch described by the ``synth`` options.

    Writes ``trials.jsonl``, ``manifest.json`` and ``runlog.jsonl`` to the
    output directory before checking the failure budget.

    Raises:
        FailureBudgetExceeded: if more solves failed than the
            ``[run] failure_budget`` fraction allows
    """
    config = configs.load_run_config(args["config"])
    seed = config.seed if args["seed"] is None else int(args["seed"])
    out = Path(args["out"])
    set_log(out)
    yaml_save(file_path=Path(out, "options.yaml"), data=args)

    profiles = load_profiles(args["profiles"])
    real = load_trials(args["trials"]) if args["trials"] else []
    plan = AugmentationPlan.from_settings(
        config["augmentation"],
        scale_factors=parse_scales(args["scales"]),
        duration_s=args["duration"],
        speed_policy=args["speed_policy"])
    if args["solver"] == "collocation":
        solver_options = CollocationOptions.from_settings(
            config["collocation"])
    else:
        solver_options = ShootingOptions.from_settings(config["shooting"])

    logger.info(f"Synthesizing {len(profiles)} subject(s) x "
                f"{len(plan.scale_factors)} scale(s) with "
                f"{args['solver']} (seed {seed})")
    dataset = augment_dataset(
        profiles, plan, mode=args["mode"], real_trials=real,
        solver=args["solver"], base_seed=seed, n_jobs=args["jobs"],
        problem_settings=config["problem"],
        contact=ContactParams.from_settings(config["contact"]),
        solver_options=solver_options)

    save_trials(dataset.trials, Path(out, "trials.jsonl"))
    save_json(dataset.manifest(), Path(out, "manifest.json"))
    write_run_log(Path(out, "runlog.jsonl"), run_log_records(dataset))
    logger.info(f"Trials and manifest were saved to {out}")

    budget = float(config["run"]["failure_budget"])
    if dataset.failure_rate > budget:
        raise FailureBudgetExceeded(
            f"{len(dataset.failures)} of {len(dataset.planned)} solve(s) "
            f"failed ({dataset.failure_rate:.1%} > {budget:.1%})")
    return dataset
