# -*- coding: utf-8 -*-
"""
Tests of the camera ring and the pinhole reprojection.
"""

from dataclasses import replace
import unittest

import numpy as np

from gaitforge.camera import (
    BehindCamera, CameraConfig, CameraTooClose, back_project,
    make_view_ring, project_points, project_ring, project_trial,
    ring_from_settings,
)
from gaitforge.cohort import make_synthetic_cohort
from gaitforge.misc import PreconditionViolation
from gaitforge.trials import Frame, MissingChannel


class TestCameraRing(unittest.TestCase):
    def test_default_ring(self):
        """
        Test the eleven views from 0 to 180 degrees
        """
        cams = ring_from_settings()
        self.assertEqual([c.azimuth_deg for c in cams],
                         [18.0 * i for i in range(11)])
        self.assertEqual(cams[0].principal_point_px, (320.0, 240.0))

    def test_azimuth_wraps(self):
        cams = make_view_ring(3, start_deg=300.0, step_deg=30.0)
        self.assertEqual([c.azimuth_deg for c in cams], [300.0, 330.0, 0.0])

    def test_bad_focal(self):
        with self.assertRaises(PreconditionViolation):
            CameraConfig(azimuth_deg=0.0, focal_px=0.0)


class TestProjection(unittest.TestCase):
    def setUp(self):
        self.target = np.array([0.0, 0.9, 0.0])

    def test_target_on_principal_point(self):
        for cam in make_view_ring(11):
            uv = project_points(self.target, cam, self.target)
            np.testing.assert_allclose(uv, cam.principal_point_px,
                                       atol=1e-9)

    def test_image_axes(self):
        """
        Test up is up in the image and forward is right in the side view
        """
        side = CameraConfig(azimuth_deg=90.0)
        up = project_points(self.target + [0.0, 0.2, 0.0], side, self.target)
        forward = project_points(self.target + [0.2, 0.0, 0.0], side,
                                 self.target)
        self.assertLess(up[1], 240.0)
        self.assertGreater(forward[0], 320.0)

    def test_pinhole_offset(self):
        """
        Test a point 0.5 m off the optical axis at 4 m lands 125 px aside
        """
        target = np.array([0.0, 1.0, 0.0])
        cam = CameraConfig(azimuth_deg=0.0, distance_m=4.0, height_m=1.0)
        uv = project_points(target + [0.0, 0.0, -0.5], cam, target)
        self.assertAlmostEqual(uv[0] - 320.0, 125.0, places=9)
        self.assertAlmostEqual(uv[1], 240.0, places=9)

    def test_collinear_points(self):
        cam = CameraConfig(azimuth_deg=36.0)
        start = np.array([0.3, 0.2, -0.4])
        direction = np.array([0.2, 0.5, 0.7])
        line = start + np.linspace(0.0, 1.0, 7)[:, None] * direction
        uv = project_points(line, cam, self.target)
        d = uv[-1] - uv[0]
        offsets = uv - uv[0]
        deviation = np.abs(d[0] * offsets[:, 1] - d[1] * offsets[:, 0]) / \
            np.linalg.norm(d)
        self.assertLess(deviation.max(), 1e-6)

    def test_mirrored_views(self):
        """
        Test azimuths theta and 360 - theta see mirrored images
        """
        points = self.target + np.random.default_rng(3).uniform(
            -0.4, 0.4, (12, 3))
        mirrored = points * [1.0, 1.0, -1.0]
        for theta in (18.0, 72.0, 144.0):
            a = project_points(points, CameraConfig(azimuth_deg=theta),
                               self.target)
            b = project_points(mirrored,
                               CameraConfig(azimuth_deg=360.0 - theta),
                               self.target)
            np.testing.assert_allclose(a[:, 0] - 320.0, 320.0 - b[:, 0],
                                       atol=1e-6)
            np.testing.assert_allclose(a[:, 1], b[:, 1], atol=1e-6)

    def test_similar_scenes(self):
        points = self.target + np.random.default_rng(5).uniform(
            -0.3, 0.3, (8, 3))
        cam = CameraConfig(azimuth_deg=126.0)
        big = CameraConfig(azimuth_deg=126.0, distance_m=8.0, height_m=2.0)
        np.testing.assert_allclose(
            project_points(2.0 * points, big, 2.0 * self.target),
            project_points(points, cam, self.target), atol=1e-9)

    def test_back_projection(self):
        cam = CameraConfig(azimuth_deg=54.0)
        rng = np.random.default_rng(2)
        points = self.target + rng.uniform(-0.5, 0.5, (10, 3))
        centre, rotation = cam.pose(self.target)
        depth = ((points - centre) @ rotation.T)[:, 2]
        uv = project_points(points, cam, self.target)
        np.testing.assert_allclose(back_project(uv, depth, cam, self.target),
                                   points, atol=1e-9)

    def test_point_behind_camera(self):
        cam = CameraConfig(azimuth_deg=0.0, distance_m=4.0)
        with self.assertRaises(BehindCamera):
            project_points([5.0, 1.0, 0.0], cam, self.target)


class TestProjectTrial(unittest.TestCase):
    def setUp(self):
        _, self.trials = make_synthetic_cohort(n_subjects=2,
                                               trials_per_subject=1,
                                               duration_s=1.0)

    def test_projected_record(self):
        trial = self.trials[0]
        view = project_trial(trial, CameraConfig(azimuth_deg=90.0))
        self.assertEqual(view.trial_id, f"{trial.trial_id}_a090")
        self.assertEqual(view.view_deg, 90.0)
        self.assertEqual(view.source_trial_id, trial.trial_id)
        self.assertEqual(set(view.frames[0].joints_2d),
                         set(trial.frames[0].joints_3d))
        np.testing.assert_array_equal(view.angle_matrix(),
                                      trial.angle_matrix())

    def test_side_view_sees_walking(self):
        """
        Test the pelvis moves across the image in the side view
        """
        view = project_trial(self.trials[0], CameraConfig(azimuth_deg=90.0))
        u = view.joint_array(("pelvis",), plane="2d")[:, 0, 0]
        self.assertGreater(u[-1] - u[0], 50.0)

    def test_camera_too_close(self):
        with self.assertRaises(CameraTooClose):
            project_trial(self.trials[0],
                          CameraConfig(azimuth_deg=0.0, distance_m=0.3))

    def test_needs_3d_joints(self):
        trial = self.trials[0]
        frames = tuple(Frame(t=f.t, angles_deg=f.angles_deg)
                       for f in trial.frames)
        with self.assertRaises(MissingChannel):
            project_trial(replace(trial, frames=frames),
                          CameraConfig(azimuth_deg=0.0))

    def test_ring_order(self):
        """
        Test every trial through every view, trial-major
        """
        cams = make_view_ring(11)
        projected = project_ring(self.trials, cams)
        self.assertEqual(len(projected), 22)
        self.assertEqual(projected[0].source_trial_id,
                         self.trials[0].trial_id)
        self.assertEqual(projected[10].view_deg, 180.0)
        self.assertEqual(projected[11].source_trial_id,
                         self.trials[1].trial_id)


if __name__ == "__main__":
    unittest.main()
