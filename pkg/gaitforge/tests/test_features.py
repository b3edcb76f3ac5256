# -*- coding: utf-8 -*-
"""
Tests of the P, Q and histogram gait representations.
"""

from dataclasses import replace
from pathlib import Path
import tempfile
import unittest

import numpy as np
import pandas as pd

from gaitforge.camera import make_view_ring, project_trial
from gaitforge.cohort import make_synthetic_cohort
from gaitforge.features import (
    LABEL_COLUMNS, TrialVectorP, TrialVectorQ, angle_histogram,
    export_feature_csv, extract_P, extract_Q, feature_table,
    histogram_descriptor, normalize_Q, resample_fixed_length,
    trial_features,
)
from gaitforge.misc import PreconditionViolation
from gaitforge.trials import ANGLE_CHANNELS, MissingChannel


class TestSequences(unittest.TestCase):
    def setUp(self):
        _, trials = make_synthetic_cohort(n_subjects=2, trials_per_subject=1,
                                          duration_s=1.0)
        self.trial = trials[0]

    def test_extract_P_channel_order(self):
        P = extract_P(self.trial)
        self.assertEqual(P.values.shape, (31, 6))
        first = self.trial.frames[0].angles_deg
        np.testing.assert_array_equal(P.values[0],
                                      [first[c] for c in ANGLE_CHANNELS])

    def test_missing_channel(self):
        """
        Test a frame without the right knee angle is refused
        """
        frame = self.trial.frames[3]
        angles = {k: v for k, v in frame.angles_deg.items() if k != "knee_R"}
        frames = list(self.trial.frames)
        frames[3] = replace(frame, angles_deg=angles)
        with self.assertRaises(MissingChannel):
            extract_P(replace(self.trial, frames=tuple(frames)))

    def test_extract_Q_needs_projection(self):
        with self.assertRaises(MissingChannel):
            extract_Q(self.trial)
        view = project_trial(self.trial, make_view_ring(1)[0])
        self.assertEqual(extract_Q(view).values.shape, (31, 6, 2))

    def test_resample_same_grid_is_identity(self):
        P = extract_P(self.trial)
        np.testing.assert_allclose(
            resample_fixed_length(P, P.length).values, P.values, atol=1e-9)

    def test_resample_linear_signal(self):
        """
        Test linear interpolation keeps a linear ramp and its endpoints
        """
        times = np.linspace(0.0, 1.0, 31)
        P = TrialVectorP(values=np.outer(times, np.arange(1, 7)),
                         times=times)
        out = resample_fixed_length(P, 100)
        self.assertEqual(out.values.shape, (100, 6))
        np.testing.assert_allclose(out.values,
                                   np.outer(out.times, np.arange(1, 7)),
                                   atol=1e-12)
        np.testing.assert_array_equal(out.values[-1], P.values[-1])

    def test_resample_too_short(self):
        with self.assertRaises(PreconditionViolation):
            resample_fixed_length(np.zeros((1, 6)), 10)

    def test_normalize_Q_scale_invariant(self):
        """
        Test doubling every pixel coordinate leaves normalized Q unchanged
        """
        rng = np.random.default_rng(0)
        Q = TrialVectorQ(values=rng.uniform(100, 500, (20, 6, 2)))
        doubled = replace(Q, values=2.0 * Q.values)
        np.testing.assert_allclose(normalize_Q(Q).values,
                                   normalize_Q(doubled).values, atol=1e-12)
        hips = normalize_Q(Q).values[:, [0, 3]].mean(axis=1)
        np.testing.assert_allclose(hips, 0.0, atol=1e-12)


class TestHistogram(unittest.TestCase):
    def test_constant_channel_fills_one_bin(self):
        weights = angle_histogram(np.full(50, 12.0), (-30.0, 70.0), 20)
        self.assertEqual(weights[8], 1.0)
        self.assertEqual(weights.sum(), 1.0)

    def test_out_of_range_clamped(self):
        """
        Test values beyond the range land in the edge bins
        """
        weights = angle_histogram([-100.0, 200.0, 0.0, 0.0], (-30.0, 70.0),
                                  20)
        self.assertEqual(weights[0], 0.25)
        self.assertEqual(weights[-1], 0.25)
        self.assertAlmostEqual(weights.sum(), 1.0, places=12)

    def test_hand_counted(self):
        np.testing.assert_array_equal(
            angle_histogram([10.0, 10.0, 30.0, 50.0], (0.0, 100.0), 5),
            [0.5, 0.25, 0.25, 0.0, 0.0])

    def test_frame_order_and_repetition_ignored(self):
        """
        Test shuffling or repeating the frames leaves the descriptor as is
        """
        values = np.random.default_rng(6).uniform(-20.0, 60.0, (40, 6))
        base = histogram_descriptor(TrialVectorP(values)).vector
        shuffled = np.random.default_rng(7).permutation(values)
        np.testing.assert_array_equal(
            histogram_descriptor(TrialVectorP(shuffled)).vector, base)
        np.testing.assert_array_equal(
            histogram_descriptor(TrialVectorP(np.tile(values, (2, 1))))
            .vector, base)

    def test_bad_range(self):
        with self.assertRaises(PreconditionViolation):
            angle_histogram([0.0, 1.0], (5.0, 5.0), 10)

    def test_descriptor(self):
        _, trials = make_synthetic_cohort(n_subjects=2, trials_per_subject=1,
                                          duration_s=1.0)
        descriptor = histogram_descriptor(extract_P(trials[0]), n_bins=20)
        self.assertEqual(descriptor.vector.shape, (120,))
        np.testing.assert_allclose(descriptor.bins.sum(axis=1), 1.0,
                                   atol=1e-12)


class TestFeatureTable(unittest.TestCase):
    def setUp(self):
        _, self.trials = make_synthetic_cohort(n_subjects=2,
                                               trials_per_subject=2,
                                               duration_s=1.0)

    def test_shapes(self):
        trial = self.trials[0]
        self.assertEqual(trial_features(trial, "histogram", bins=10).shape,
                         (60,))
        self.assertEqual(trial_features(trial, "P", frames=50).shape,
                         (50, 6))
        view = project_trial(trial, make_view_ring(1)[0])
        self.assertEqual(trial_features(view, "Q", frames=50).shape,
                         (50, 12))

    def test_unknown_representation(self):
        with self.assertRaises(ValueError):
            trial_features(self.trials[0], "R")

    def test_table_and_csv(self):
        """
        Test one row per trial with the label columns first
        """
        table = feature_table(self.trials, "histogram", bins=10)
        self.assertEqual(len(table), 4)
        self.assertEqual(tuple(table.columns[:len(LABEL_COLUMNS)]),
                         LABEL_COLUMNS)
        self.assertIn("gender", table.columns)
        self.assertIn("knee_R_bin09", table.columns)

        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp, "features.csv")
            export_feature_csv(table, path)
            loaded = pd.read_csv(path)
        self.assertEqual(list(loaded["trial_id"]),
                         [t.trial_id for t in self.trials])


if __name__ == "__main__":
    unittest.main()
