#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
USAGE

Gender classification, LSTM on joint-angle sequences, trained on real and
synthesized trials:
gaitforge evaluate --trials trials.jsonl --task gender --train real+sim
--classifier lstm --representation P

Person identification on reprojected 2D joints, all three training
conditions in one table:
gaitforge evaluate --trials projected.jsonl --task identity --train all
--classifier bilstm --representation Q

Merge reports into one table:
gaitforge report --reports a.json b.json
"""
import logging
from pathlib import Path
from typing import Any, Dict, Sequence

from gaitforge import configs
from gaitforge.classify import (
    ESKNNConfig, ExperimentReport, build_dataset, loso_evaluate,
)
from gaitforge.features import default_ranges
from gaitforge.fields import REPORT_SCHEMA
from gaitforge.lstm import LSTMConfig
from gaitforge.misc import set_log, yaml_save
from gaitforge.storage import (
    SchemaMismatch, atomic_write, load_json, load_trials, save_json,
)
from gaitforge.synth import scale_subsets

logger = logging.getLogger(__name__)
logger.setLevel(configs.LOG_LEVEL)

ALL_CONDITIONS = ("real", "sim", "real+sim")


def classifier_config(name: str, config: configs.RunConfig, seed: int,
                      out: Path):
    if name == "esknn":
        return ESKNNConfig.from_settings(config["esknn"], seed=seed)
    values = config["lstm"]
    log_dir = str(Path(out, "tensorboard")) if values.get("tensorboard") \
        else None
    return LSTMConfig.from_settings(values, seed=seed,
                                    bidirectional=name == "bilstm",
                                    log_dir=log_dir)


def save_report(report: ExperimentReport, stem: Path):
    save_json({"schema": REPORT_SCHEMA, **report.to_dict()},
              stem.with_suffix(".json"))
    atomic_write(stem.with_suffix(".txt"), report.format_table())


def load_report(path) -> ExperimentReport:
    data = load_json(path)
    if data.get("schema") != REPORT_SCHEMA:
        raise SchemaMismatch(f"'{path}': expected schema '{REPORT_SCHEMA}', "
                             f"found {data.get('schema')!r}")
    return ExperimentReport.from_dict(data)


def main(args: Dict[str, Any]) -> ExperimentReport:
    """
    Leave-one-subject-out evaluation of one classifier.

    Writes ``report_<task>_<classifier>_<representation>.json`` and the
    matching ``.txt`` table to the output directory.
    """
    config = configs.load_run_config(args["config"])
    seed = config.seed if args["seed"] is None else int(args["seed"])
    out = Path(args["out"])
    set_log(out)
    yaml_save(file_path=Path(out, "options.yaml"), data=args)

    trials = load_trials(args["trials"])
    dataset = build_dataset(
        trials, args["task"], args["representation"], args["frames"],
        args["bins"], ranges=default_ranges(config["features"]),
        normalize=bool(config["camera"]["normalize_2d"]))
    classifier_cfg = classifier_config(args["classifier"], config, seed, out)

    conditions = ALL_CONDITIONS if args["train"] == "all" \
        else (args["train"],)
    report = None
    for condition in conditions:
        row = loso_evaluate(dataset, classifier_cfg, condition,
                            n_jobs=args["jobs"], balanced=args["balanced"],
                            representation=args["representation"],
                            row_name=condition)
        report = row if report is None else report.merge(row)

    if args["scale_sweep"]:
        factors = sorted({item.scale_factor for item in dataset.items
                          if item.provenance == "simulated"
                          and item.scale_factor is not None})
        for subset in scale_subsets(factors):
            keep = [item.provenance == "real" or
                    round(item.scale_factor, 10) in subset
                    for item in dataset.items]
            name = f"real+sim s[{min(subset):g},{max(subset):g}]"
            row = loso_evaluate(dataset.subset(keep), classifier_cfg,
                                "real_plus_sim", n_jobs=args["jobs"],
                                balanced=args["balanced"],
                                representation=args["representation"],
                                row_name=name)
            report = report.merge(row)

    stem = Path(out, f"report_{args['task']}_{args['classifier']}_"
                     f"{args['representation']}")
    save_report(report, stem)
    logger.info(f"\n{report.format_table()}")
    return report


def merge(args: Dict[str, Any], paths: Sequence[str] = None
          ) -> ExperimentReport:
    """Merge evaluation reports of one task into a single table."""
    out = Path(args["out"])
    set_log(out)
    reports = [load_report(path) for path in paths or args["reports"]]
    if len({r.classifier for r in reports}) > 1:
        reports = [r.relabel(r.classifier) for r in reports]
    merged = reports[0]
    for report in reports[1:]:
        merged = merged.merge(report)
    save_report(merged, Path(out, f"report_{merged.task}_merged"))
    logger.info(f"\n{merged.format_table()}")
    return merged
