# -*- coding: utf-8 -*-
"""
Tests of the layered run configuration.
"""

from pathlib import Path
import tempfile
import unittest

from gaitforge import configs
from gaitforge.misc import derive_seed


class TestRunConfig(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, text):
        path = Path(self.dir, "user.ini")
        path.write_text(text)
        return path

    def test_packaged_defaults(self):
        config = configs.load_run_config()
        self.assertEqual(config.seed, 42)
        self.assertEqual(config["features"]["bins"], 20)
        self.assertEqual(config["camera"]["image_size_px"], (640, 480))
        self.assertEqual(config["augmentation"]["speed_policy"], "per_trial")

    def test_user_file_overlays_defaults(self):
        """
        Test a user file replaces only the keys it names
        """
        config = configs.load_run_config(
            self.write("[run]\nseed = 7\n[esknn]\nn_learners = 5\n"))
        self.assertEqual(config.seed, 7)
        self.assertEqual(config["esknn"]["n_learners"], 5)
        self.assertEqual(config["esknn"]["k"], 1)
        self.assertEqual(config["run"]["solver"], "collocation")

    def test_seed_must_be_integer(self):
        with self.assertRaises(configs.ConfigError):
            configs.load_run_config(self.write("[run]\nseed = clock\n"))

    def test_missing_path(self):
        path = self.write(f"[features]\nranges_path = "
                          f"{Path(self.dir, 'absent.csv')}\n")
        with self.assertRaises(configs.ConfigError):
            configs.load_run_config(path)

    def test_missing_file(self):
        with self.assertRaises(configs.ConfigError):
            configs.load_run_config(Path(self.dir, "absent.ini"))

    def test_parse_value(self):
        self.assertEqual(configs.parse_value("(1.0, 2.0)"), (1.0, 2.0))
        self.assertEqual(configs.parse_value("per_trial"), "per_trial")


class TestSeeds(unittest.TestCase):
    def test_derived_seeds(self):
        self.assertEqual(derive_seed(42, "S01_s1.00_v000"),
                         derive_seed(42, "S01_s1.00_v000"))
        self.assertNotEqual(derive_seed(42, "S01_s1.00_v000"),
                            derive_seed(43, "S01_s1.00_v000"))
        self.assertLess(derive_seed(2 ** 40, "x"), 2 ** 31)


if __name__ == "__main__":
    unittest.main()
