# -*- coding: utf-8 -*-
"""
Tests of the gait optimal control problem, its transcription and solvers.
"""

from dataclasses import replace
import time
import unittest
from unittest import mock

import numpy as np
import pytest
import torch

from gaitforge.dynamics import (
    DTYPE, SingularConfiguration, State, dynamics_terms, linkage,
    standing_equilibrium, within_joint_limits,
)
from gaitforge.misc import PreconditionViolation
from gaitforge.model import build_model
from gaitforge.tests.test_model import make_profile
from gaitforge.trajopt import (
    CollocationOptions, GaitProblem, NoConvergence, ShootingOptions,
    check_gradients, collocate, constraint_scale, initial_guess,
    joint_angle_rms_difference, next_penalty, objective_eval,
    objective_gradient, periodicity_residuals, rank_fitness,
    solve_collocation, solve_shooting, transcribe_defects,
    trial_from_states,
)


def airborne_z(problem, substeps):
    """Decision vector sampled from an RK4 flight of the model."""
    link = linkage(problem.model)
    x = np.zeros(18)
    x[1] = 3.0
    x[3:9] = (0.3, 0.4, 0.1, -0.2, 0.2, -0.1)
    x[9:18] = (0.5, 0.2, 0.1, 2.0, -1.5, 1.0, -2.0, 1.5, -1.0)
    x = torch.as_tensor(x[None], dtype=DTYPE)
    tau = torch.zeros(1, 6, dtype=DTYPE)
    dt = problem.h / substeps
    X = [x[0].numpy()]
    for _ in range(problem.num_knots - 1):
        for _ in range(substeps):
            x = link.rk4(x, tau, dt, problem.contact)
        X.append(x[0].numpy())
    U = np.zeros((problem.num_knots, 6))
    return np.concatenate([np.stack(X).ravel(), U.ravel()])


class TestGaitProblem(unittest.TestCase):
    def setUp(self):
        self.model = build_model(make_profile())
        self.problem = GaitProblem(self.model, duration_s=0.5,
                                   target_speed_mps=1.3, num_knots=11)

    def test_speed_range(self):
        with self.assertRaises(PreconditionViolation):
            GaitProblem(self.model, target_speed_mps=3.0)

    def test_knot_count(self):
        with self.assertRaises(PreconditionViolation):
            GaitProblem(self.model, num_knots=5)

    def test_initial_guess_within_bounds(self):
        z = initial_guess(self.problem, noise_rad=0.05, seed=1)
        low, high = self.problem.bounds()
        self.assertEqual(z.shape, (self.problem.size,))
        self.assertTrue(np.all(z >= low) and np.all(z <= high))

    def test_speed_tracking_objective_vanishes(self):
        """
        Test zero torques, zero pitch and exact speed cost nothing
        """
        z = np.zeros(self.problem.size)
        X, _ = self.problem.split(z)
        X[:, 0] = 1.3 * self.problem.knot_times()
        self.assertAlmostEqual(objective_eval(self.problem, z), 0.0,
                               places=12)
        np.testing.assert_allclose(objective_gradient(self.problem, z), 0.0,
                                   atol=1e-10)

    def test_periodicity_of_shifted_stride(self):
        z = np.zeros(self.problem.size)
        X, _ = self.problem.split(z)
        X[-1, 0] = 1.3 * 0.5
        np.testing.assert_allclose(periodicity_residuals(self.problem, z),
                                   0.0, atol=1e-12)


class TestTranscription(unittest.TestCase):
    def setUp(self):
        self.model = build_model(make_profile())

    def test_defect_shape(self):
        problem = GaitProblem(self.model, duration_s=0.5, num_knots=11)
        defects = transcribe_defects(problem, initial_guess(problem))
        self.assertEqual(defects.shape, (10, 18))

    def test_equilibrium_has_no_defects(self):
        """
        Test the static stance held by its torques satisfies the dynamics
        """
        problem = GaitProblem(self.model, duration_s=0.5, num_knots=11)
        state, tau = standing_equilibrium(self.model, problem.contact)
        X = np.tile(state.as_vector(), (11, 1))
        U = np.tile(tau, (11, 1))
        z = np.concatenate([X.ravel(), U.ravel()])
        self.assertLess(np.max(np.abs(transcribe_defects(problem, z))), 1e-9)

    def test_rk4_trajectory_is_consistent(self):
        """
        Test a finely integrated flight nearly satisfies the collocation
        """
        problem = GaitProblem(self.model, duration_s=0.2, num_knots=201)
        z = airborne_z(problem, substeps=4)
        self.assertLess(np.max(np.abs(transcribe_defects(problem, z))), 1e-5)

    def test_defects_shrink_with_knots(self):
        coarse = GaitProblem(self.model, duration_s=0.2, num_knots=21)
        fine = GaitProblem(self.model, duration_s=0.2, num_knots=41)
        d_coarse = np.max(np.abs(transcribe_defects(
            coarse, airborne_z(coarse, substeps=8))))
        d_fine = np.max(np.abs(transcribe_defects(
            fine, airborne_z(fine, substeps=4))))
        self.assertGreater(d_coarse / d_fine, 3.5)

    def test_gradients_match_finite_differences(self):
        """
        Test the objective gradient and the defect Jacobian at 20 points
        """
        problem = GaitProblem(self.model, duration_s=0.5, num_knots=11)
        rng = np.random.default_rng(5)
        for point in range(20):
            z = initial_guess(problem)
            X, U = problem.split(z)
            X[:, 1] = 3.0
            X[:, 2:] += rng.normal(0.0, 0.1, X[:, 2:].shape)
            U[:] = rng.normal(0.0, 50.0, U.shape)
            with self.subTest(point=point):
                self.assertLess(check_gradients(problem, z, h_fd=1e-6,
                                                seed=point), 1e-4)

    def test_objective_hand_computed(self):
        """
        Test the cost of a fixed decision vector against a hand count
        """
        problem = GaitProblem(self.model, duration_s=2.0,
                              target_speed_mps=1.3, num_knots=41)
        z = np.zeros(problem.size)
        X, U = problem.split(z)
        X[:, 0] = np.linspace(0.0, 2.8, 41)
        X[:, 2] = 0.1
        U[:] = 125.0
        # effort 0.05 * 41 * 6 * 0.25, speed 100 * 0.1^2, pitch
        # 10 * 0.05 * 41 * 0.01
        self.assertAlmostEqual(objective_eval(problem, z), 4.28, delta=1e-10)
        X[:, 0] = 1.3 * problem.knot_times()
        X[:, 2] = 0.0
        effort = objective_eval(problem, z)
        U[:] = 250.0
        self.assertAlmostEqual(objective_eval(problem, z), 4.0 * effort,
                               delta=1e-10)

    def test_ill_conditioned_mass_matrix(self):
        """
        Test the defects refuse configurations the dynamics refuse
        """
        problem = GaitProblem(self.model, duration_s=0.5, num_knots=11)
        z = initial_guess(problem)
        X, _ = problem.split(z)
        with mock.patch("gaitforge.dynamics.MAX_CONDITION", 1.0):
            with self.assertRaises(SingularConfiguration):
                transcribe_defects(problem, z)
            with self.assertRaises(SingularConfiguration):
                dynamics_terms(self.model, State(q=X[0, :9]))

    def test_fd_step_range(self):
        problem = GaitProblem(self.model, duration_s=0.5, num_knots=11)
        with self.assertRaises(PreconditionViolation):
            check_gradients(problem, initial_guess(problem), h_fd=1e-2)


class TestPenaltySchedule(unittest.TestCase):
    def setUp(self):
        self.options = CollocationOptions(initial_penalty=1e3,
                                          penalty_growth=10.0,
                                          max_penalty=1e5,
                                          constraint_tolerance=1e-3)

    def test_raised_after_every_missed_round(self):
        """
        Test the penalty grows even when the violation keeps shrinking
        """
        penalty = self.options.initial_penalty
        for violation in (0.5, 0.01, 0.002):
            penalty = next_penalty(penalty, violation, self.options)
        self.assertEqual(penalty, 1e5)

    def test_kept_once_met(self):
        self.assertEqual(next_penalty(1e4, 5e-4, self.options), 1e4)

    def test_capped(self):
        self.assertEqual(next_penalty(1e5, 1.0, self.options), 1e5)

    def test_velocity_rows_normalized(self):
        problem = GaitProblem(build_model(make_profile()), duration_s=0.5,
                              num_knots=11)
        divisor = constraint_scale(problem, CollocationOptions(
            velocity_scale=4.0)).reshape(11, 18)
        np.testing.assert_array_equal(divisor[:, :9], 1.0)
        np.testing.assert_array_equal(divisor[:, 9:], 4.0)

    def test_bad_options(self):
        with self.assertRaises(PreconditionViolation):
            CollocationOptions(penalty_growth=1.0)
        with self.assertRaises(PreconditionViolation):
            CollocationOptions(initial_penalty=1e9, max_penalty=1e8)


class TestCollocation(unittest.TestCase):
    def setUp(self):
        self.problem = GaitProblem(build_model(make_profile()),
                                   duration_s=0.5, num_knots=11)
        self.options = CollocationOptions(max_outer_iterations=1,
                                          max_inner_iterations=5)

    def solve(self, seed):
        try:
            trial, report = solve_collocation(self.problem, seed=seed,
                                              options=self.options)
            return report, trial.angle_matrix()
        except NoConvergence as e:
            return e.report, e.solution

    def test_deterministic_for_fixed_seed(self):
        """
        Test two solves with one seed give bitwise identical results
        """
        report_a, solution_a = self.solve(3)
        report_b, solution_b = self.solve(3)
        self.assertEqual(report_a.to_dict(), report_b.to_dict())
        np.testing.assert_array_equal(solution_a, solution_b)
        self.assertEqual(report_a.solver, "collocation")

    def test_seed_changes_start(self):
        _, solution_a = self.solve(1)
        _, solution_b = self.solve(2)
        self.assertFalse(np.array_equal(solution_a, solution_b))


@pytest.mark.slow
class TestCanonicalGait(unittest.TestCase):
    """
    The cohort-mean model walking 2 s at 1.3 m/s with packaged settings.
    """

    @classmethod
    def setUpClass(cls):
        cls.problem = GaitProblem.from_settings(
            build_model(make_profile()), target_speed_mps=1.3,
            duration_s=2.0)
        start = time.monotonic()
        cls.z, cls.report = collocate(cls.problem, seed=0)
        cls.seconds = time.monotonic() - start

    def test_collocation_converges(self):
        """
        Test the packaged collocation settings reach a walking gait
        """
        report = self.report
        self.assertTrue(report.converged, report.to_dict())
        self.assertLess(report.max_defect, 1e-3)
        self.assertLess(report.max_periodicity_violation, 1e-3)
        self.assertLessEqual(abs(report.achieved_speed_mps - 1.3),
                             0.02 * 1.3)
        self.assertLess(self.seconds, 300.0)

    def test_report_matches_solution(self):
        self.assertAlmostEqual(objective_eval(self.problem, self.z),
                               self.report.final_objective, delta=1e-10)
        residuals = periodicity_residuals(self.problem, self.z)
        self.assertLess(np.max(np.abs(residuals[:9])), 1e-3)

    def test_knots_within_joint_limits(self):
        X, _ = self.problem.split(self.z)
        self.assertTrue(within_joint_limits(self.problem.model, X[:, :9]))

    def test_shooting_agrees_with_collocation(self):
        """
        Test shooting started from the collocation gait keeps walking and
        stays within 10 deg RMS of it
        """
        options = replace(ShootingOptions.from_settings(),
                          spline_knots=self.problem.num_knots - 1,
                          sigma0=0.05, max_generations=40)
        trial, report = solve_shooting(self.problem, es_config=options,
                                       seed=0, warm_start=self.z)
        self.assertTrue(report.converged, report.to_dict())
        self.assertLessEqual(abs(report.achieved_speed_mps - 1.3),
                             0.05 * 1.3)
        X, _ = self.problem.split(self.z)
        reference = trial_from_states(self.problem, X,
                                      self.problem.knot_times(),
                                      "collocation")
        self.assertLess(joint_angle_rms_difference(trial, reference), 10.0)
        angles = np.radians(trial.angle_matrix())
        q = np.zeros((len(angles), 9))
        q[:, 3:] = angles
        self.assertTrue(within_joint_limits(self.problem.model, q))


class TestShooting(unittest.TestCase):
    def setUp(self):
        self.problem = GaitProblem(build_model(make_profile()),
                                   duration_s=0.2, num_knots=11)
        self.options = ShootingOptions(spline_knots=4, population_size=8,
                                       max_generations=2)

    def solve(self, seed):
        try:
            trial, report = solve_shooting(self.problem,
                                           es_config=self.options, seed=seed)
            return report, trial.angle_matrix()
        except NoConvergence as e:
            return e.report, e.solution

    def test_deterministic_for_fixed_seed(self):
        report_a, solution_a = self.solve(7)
        report_b, solution_b = self.solve(7)
        self.assertEqual(report_a.to_dict(), report_b.to_dict())
        np.testing.assert_array_equal(solution_a, solution_b)
        self.assertEqual(report_a.solver, "shooting")
        self.assertLessEqual(report_a.iterations, 2)

    def test_too_few_spline_knots(self):
        with self.assertRaises(PreconditionViolation):
            solve_shooting(self.problem, spline_knots=3,
                           es_config=self.options)

    def test_warm_start_must_match_problem(self):
        with self.assertRaises(PreconditionViolation):
            solve_shooting(self.problem, es_config=self.options,
                           warm_start=np.zeros(10))

    def test_warm_start_from_decision_vector(self):
        z = initial_guess(self.problem, noise_rad=0.02, seed=4)
        try:
            _, report = solve_shooting(self.problem, es_config=self.options,
                                       seed=7, warm_start=z)
        except NoConvergence as e:
            report = e.report
            self.assertEqual(e.solution.shape, (4 * 6 + 12,))
        self.assertEqual(report.solver, "shooting")
        self.assertLessEqual(report.iterations, 2)


class TestRankFitness(unittest.TestCase):
    def test_centred_ranks(self):
        np.testing.assert_allclose(rank_fitness([3.0, 1.0, 2.0]),
                                   [0.5, -0.5, 0.0])

    def test_non_finite_ranks_last(self):
        fitness = rank_fitness([np.nan, 1.0, 2.0])
        self.assertEqual(int(np.argmax(fitness)), 0)

    def test_degenerate_generation(self):
        np.testing.assert_array_equal(rank_fitness([1.0] * 8), np.zeros(8))


class TestTrialFromStates(unittest.TestCase):
    def test_simulated_trial(self):
        problem = GaitProblem(build_model(make_profile()), duration_s=0.5,
                              num_knots=11)
        X, _ = problem.split(initial_guess(problem))
        trial = trial_from_states(problem, X, problem.knot_times(),
                                  "collocation", "S01_sim")
        trial.validate()
        self.assertEqual(trial.provenance, "simulated")
        self.assertEqual(trial.scale_factor, 1.0)
        self.assertEqual(trial.n_frames, 11)
        self.assertIn("toe_R", trial.frames[0].joints_3d)
        self.assertAlmostEqual(joint_angle_rms_difference(trial, trial), 0.0)


if __name__ == "__main__":
    unittest.main()
