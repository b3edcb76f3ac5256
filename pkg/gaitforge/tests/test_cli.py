# -*- coding: utf-8 -*-
"""
Tests of the commands and their command-line front end.
"""

import json
from pathlib import Path
import tempfile
import unittest
from unittest import mock

from gaitforge import api
from gaitforge.cli import run_command
from gaitforge.misc import EXIT_SOLVER_BUDGET, EXIT_USAGE, EXIT_VALIDATION
from gaitforge.storage import (
    load_model, load_profiles, load_trials, read_run_log,
)
from gaitforge.synth import augment_dataset
from gaitforge.tests.test_adapters import capture_document
from gaitforge.tests.test_synth import failing_synthesize


class TestMetadata(unittest.TestCase):
    def test_get_metadata(self):
        """
        Test that get_metadata names the package and lists the commands
        """
        meta = api.get_metadata()
        self.assertIsInstance(meta, dict)
        self.assertEqual(meta["name"].lower().replace("_", "-"), "gaitforge")
        self.assertEqual(meta["commands"], list(api.COMMANDS))

    def test_command_args(self):
        args = api.get_command_args("cohort")
        for name in ("subjects", "trials_per_subject", "seed", "out"):
            self.assertIn(name, args)


class TestUsage(unittest.TestCase):
    def test_unknown_command(self):
        self.assertEqual(run_command(["bake"]), EXIT_USAGE)

    def test_no_command(self):
        self.assertEqual(run_command([]), EXIT_USAGE)

    def test_missing_required_flag(self):
        self.assertEqual(run_command(["scale"]), EXIT_USAGE)

    def test_unknown_flag(self):
        self.assertEqual(run_command(["cohort", "--colour", "red"]),
                         EXIT_USAGE)

    def test_bad_choice(self):
        self.assertEqual(run_command(["evaluate", "--trials", "x.jsonl",
                                      "--task", "mood"]), EXIT_USAGE)

    def test_help(self):
        with mock.patch("sys.stdout"):
            self.assertEqual(run_command(["cohort", "--help"]), 0)


class TestCommands(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.cohort = Path(self.dir, "cohort")
        code = run_command(["cohort", "--subjects", "4",
                            "--trials-per-subject", "1", "--seed", "7",
                            "--out", str(self.cohort)])
        self.assertEqual(code, 0)
        self.profiles = str(Path(self.cohort, "cohort.json"))
        self.trials = str(Path(self.cohort, "real_trials.jsonl"))

    def tearDown(self):
        self.tmp.cleanup()

    def test_cohort_is_reproducible(self):
        """
        Test a rerun with the same seed writes byte-identical files
        """
        again = Path(self.dir, "again")
        run_command(["cohort", "--subjects", "4", "--trials-per-subject",
                     "1", "--seed", "7", "--out", str(again)])
        for name in ("cohort.json", "real_trials.jsonl"):
            self.assertEqual(Path(self.cohort, name).read_bytes(),
                             Path(again, name).read_bytes())
        self.assertTrue(Path(self.cohort, "options.yaml").exists())

    def test_cohort_validation(self):
        code = run_command(["cohort", "--subjects", "1",
                            "--out", str(Path(self.dir, "bad"))])
        self.assertEqual(code, EXIT_VALIDATION)

    def test_scale(self):
        out = Path(self.dir, "scaled")
        code = run_command(["scale", "--profiles", self.profiles,
                            "--scales", "0.9,1.1", "--out", str(out)])
        self.assertEqual(code, 0)
        models = sorted(p.name for p in Path(out, "models").iterdir())
        self.assertEqual(len(models), 8)
        self.assertEqual(models[0], "S01_s0.90.json")
        model = load_model(Path(out, "models", "S01_s1.10.json"))
        self.assertEqual(model.scale_factor, 1.1)

    def test_missing_input(self):
        code = run_command(["scale", "--profiles",
                            str(Path(self.dir, "absent.json")),
                            "--out", str(Path(self.dir, "scaled"))])
        self.assertEqual(code, EXIT_VALIDATION)

    def test_project_and_featurize(self):
        out = Path(self.dir, "views")
        code = run_command(["project", "--trials", self.trials,
                            "--views", "2", "--step-deg", "90",
                            "--out", str(out)])
        self.assertEqual(code, 0)
        projected = load_trials(Path(out, "projected.jsonl"))
        self.assertEqual(len(projected), 8)
        self.assertEqual({t.view_deg for t in projected}, {0.0, 90.0})

        code = run_command(["featurize", "--trials",
                            str(Path(out, "projected.jsonl")),
                            "--representation", "Q", "--frames", "20",
                            "--out", str(out)])
        self.assertEqual(code, 0)
        self.assertTrue(Path(out, "features_Q.csv").exists())

    def test_evaluate_and_report(self):
        """
        Test an ESKNN evaluation writes a report that can be merged
        """
        out = Path(self.dir, "eval")
        code = run_command(["evaluate", "--trials", self.trials,
                            "--train", "real", "--out", str(out)])
        self.assertEqual(code, 0)
        path = Path(out, "report_gender_esknn_histogram.json")
        report = json.loads(path.read_text())
        self.assertEqual(list(report["rows"]), ["real"])
        self.assertTrue(Path(out, "report_gender_esknn_histogram.txt")
                        .exists())

        code = run_command(["report", "--reports", str(path), str(path),
                            "--out", str(out)])
        self.assertEqual(code, 0)
        self.assertTrue(Path(out, "report_gender_merged.json").exists())

    def test_lstm_defaults_to_angle_sequences(self):
        """
        Test an LSTM evaluation without a representation runs on P
        """
        settings = Path(self.dir, "quick.ini")
        settings.write_text("[lstm]\nhidden_units = 4\nepochs = 3\n")
        out = Path(self.dir, "eval")
        code = run_command(["evaluate", "--trials", self.trials,
                            "--task", "gender", "--train", "real",
                            "--classifier", "lstm", "--config",
                            str(settings), "--out", str(out)])
        self.assertEqual(code, 0)
        report = json.loads(
            Path(out, "report_gender_lstm_P.json").read_text())
        self.assertEqual(list(report["rows"]), ["real"])

    def test_lstm_rejects_histogram(self):
        code = run_command(["evaluate", "--trials", self.trials,
                            "--classifier", "bilstm",
                            "--representation", "histogram",
                            "--out", str(Path(self.dir, "eval"))])
        self.assertEqual(code, EXIT_VALIDATION)

    def test_ingest(self):
        """
        Test a capture document becomes a cohort the other commands read
        """
        document, profiles, _ = capture_document()
        capture = Path(self.dir, "capture.json")
        capture.write_text(json.dumps(document))
        out = Path(self.dir, "ingested")
        code = run_command(["ingest", "--capture", str(capture),
                            "--out", str(out)])
        self.assertEqual(code, 0)
        ingested = load_profiles(Path(out, "cohort.json"))
        self.assertEqual([p.subject_id for p in ingested],
                         [p.subject_id for p in profiles])
        self.assertEqual(len(load_trials(Path(out, "real_trials.jsonl"))), 2)
        code = run_command(["scale", "--profiles",
                            str(Path(out, "cohort.json")), "--scales", "1.1",
                            "--out", str(Path(self.dir, "scaled"))])
        self.assertEqual(code, 0)

    def test_ingest_schema_tag(self):
        document, _, _ = capture_document()
        document["schema"] = "gaitforge-capture/0"
        capture = Path(self.dir, "capture.json")
        capture.write_text(json.dumps(document))
        code = run_command(["ingest", "--capture", str(capture),
                            "--out", str(Path(self.dir, "ingested"))])
        self.assertEqual(code, EXIT_VALIDATION)

    def test_synth_failure_budget(self):
        """
        Test too many failed solves give exit code 2 after writing outputs
        """
        def flaky(*args, **kwargs):
            return augment_dataset(*args, synthesize=failing_synthesize,
                                   **kwargs)

        out = Path(self.dir, "synth")
        with mock.patch("gaitforge.scripts.synthesize.augment_dataset",
                        side_effect=flaky):
            code = run_command(["synth", "--profiles", self.profiles,
                                "--trials", self.trials,
                                "--scales", "1.2,1.3", "--mode", "sim_only",
                                "--out", str(out)])
        self.assertEqual(code, EXIT_SOLVER_BUDGET)
        manifest = json.loads(Path(out, "manifest.json").read_text())
        self.assertEqual(len(manifest["failed"]), 4)
        self.assertEqual(len(load_trials(Path(out, "trials.jsonl"))), 4)
        self.assertEqual(
            len(Path(out, "runlog.jsonl").read_text().splitlines()), 8)

    def test_run_log_accumulates(self):
        """
        Test two synth commands sharing an output keep both run logs
        """
        def flaky(*args, **kwargs):
            return augment_dataset(*args, synthesize=failing_synthesize,
                                   **kwargs)

        out = Path(self.dir, "synth")
        with mock.patch("gaitforge.scripts.synthesize.augment_dataset",
                        side_effect=flaky):
            for scales in ("1.2,1.3", "0.8"):
                run_command(["synth", "--profiles", self.profiles,
                             "--trials", self.trials, "--scales", scales,
                             "--mode", "sim_only", "--out", str(out)])
        records = read_run_log(Path(out, "runlog.jsonl"))
        self.assertEqual(len(records), 12)
        self.assertEqual({r["scale_factor"] for r in records},
                         {0.8, 1.2, 1.3})


if __name__ == "__main__":
    unittest.main()
