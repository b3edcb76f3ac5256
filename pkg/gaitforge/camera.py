# -*- coding: utf-8 -*-
"""
Pinhole reprojection of 3D joint trajectories on a ring of cameras.

World frame: x forward (walking direction), y up, z to the walker's right.
A camera at azimuth ``a`` sits at ``target + (d cos a, ., d sin a)`` at a
fixed height, looking at the target: 0 deg faces the walker, 90 deg views
its right side. Camera frame: X right, Y down, Z along the optical axis.
"""
import logging
from dataclasses import dataclass, replace
from typing import List, Mapping, Optional, Sequence, Tuple

from joblib import Parallel, delayed
import numpy as np

from gaitforge import configs
from gaitforge.misc import GaitForgeError, require
from gaitforge.trials import GaitTrial, MissingChannel

logger = logging.getLogger(__name__)
logger.setLevel(configs.LOG_LEVEL)

UP = np.array([0.0, 1.0, 0.0])


class BehindCamera(GaitForgeError):
    """Raised when a joint lies on or behind the image plane."""
    pass


class CameraTooClose(GaitForgeError):
    """Raised when the ring radius does not clear the subject."""
    pass


@dataclass(frozen=True)
class CameraConfig:
    azimuth_deg: float
    distance_m: float = 4.0
    height_m: float = 1.0
    focal_px: float = 1000.0
    principal_point_px: Optional[Tuple[float, float]] = None
    image_size_px: Tuple[int, int] = (640, 480)

    def __post_init__(self):
        require(0.0 <= self.azimuth_deg < 360.0,
                f"azimuth {self.azimuth_deg} outside [0, 360)")
        require(self.distance_m > 0, "camera distance must be positive")
        require(self.focal_px > 0, "focal length must be positive")
        if self.principal_point_px is None:
            width, height = self.image_size_px
            object.__setattr__(self, "principal_point_px",
                               (width / 2.0, height / 2.0))

    @classmethod
    def from_settings(cls, azimuth_deg: float,
                      values: Optional[Mapping] = None):
        values = configs.DEFAULTS["camera"] if values is None else values
        return cls(azimuth_deg=float(azimuth_deg) % 360.0,
                   distance_m=float(values["distance_m"]),
                   height_m=float(values["height_m"]),
                   focal_px=float(values["focal_px"]),
                   image_size_px=tuple(values["image_size_px"]))

    def pose(self, target) -> Tuple[np.ndarray, np.ndarray]:
        """Camera centre and world-to-camera rotation (rows X, Y, Z)."""
        target = np.asarray(target, dtype=float)
        azimuth = np.radians(self.azimuth_deg)
        centre = np.array([target[0] + self.distance_m * np.cos(azimuth),
                           self.height_m,
                           target[2] + self.distance_m * np.sin(azimuth)])
        forward = target - centre
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, UP)
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        return centre, np.stack([right, down, forward])


def make_view_ring(n_views: int = 11, start_deg: float = 0.0,
                   step_deg: float = 18.0, **camera) -> List[CameraConfig]:
    """Cameras on a horizontal ring, ``n_views`` azimuths from start_deg."""
    require(n_views >= 1, "at least one view required")
    return [CameraConfig(azimuth_deg=float((start_deg + i * step_deg) % 360.0),
                         **camera)
            for i in range(n_views)]


def ring_from_settings(n_views: Optional[int] = None,
                       start_deg: Optional[float] = None,
                       step_deg: Optional[float] = None,
                       values: Optional[Mapping] = None) -> List[CameraConfig]:
    values = dict(configs.DEFAULTS["camera"] if values is None else values)
    template = CameraConfig.from_settings(0.0, values)
    return make_view_ring(
        int(n_views or values["n_views"]),
        float(values["start_deg"] if start_deg is None else start_deg),
        float(values["step_deg"] if step_deg is None else step_deg),
        distance_m=template.distance_m, height_m=template.height_m,
        focal_px=template.focal_px, image_size_px=template.image_size_px)


def project_points(points, cam: CameraConfig, target) -> np.ndarray:
    """
    Pixel coordinates (..., 2) of world points (..., 3).

    Raises:
        BehindCamera: if any point has a non-positive depth
    """
    points = np.asarray(points, dtype=float)
    centre, rotation = cam.pose(target)
    local = (points - centre) @ rotation.T
    depth = local[..., 2]
    if np.any(depth <= 0):
        raise BehindCamera(f"{int(np.sum(depth <= 0))} point(s) behind the "
                           f"camera at azimuth {cam.azimuth_deg:g} deg")
    cx, cy = cam.principal_point_px
    u = cam.focal_px * local[..., 0] / depth + cx
    v = cam.focal_px * local[..., 1] / depth + cy
    return np.stack([u, v], axis=-1)


def back_project(uv, depth, cam: CameraConfig, target) -> np.ndarray:
    """World points at camera depth ``depth`` along the rays of ``uv``."""
    uv = np.asarray(uv, dtype=float)
    depth = np.asarray(depth, dtype=float)
    centre, rotation = cam.pose(target)
    cx, cy = cam.principal_point_px
    local = np.stack([(uv[..., 0] - cx) * depth / cam.focal_px,
                      (uv[..., 1] - cy) * depth / cam.focal_px,
                      depth], axis=-1)
    return centre + local @ rotation


def look_at_target(trial: GaitTrial) -> np.ndarray:
    """Mean pelvis position of a trial."""
    if not trial.has_joints("3d"):
        raise MissingChannel(f"{trial.trial_id}: no 3D joints to project")
    return trial.joint_array(("pelvis",), plane="3d")[:, 0].mean(axis=0)


def project_trial(trial: GaitTrial, cam: CameraConfig) -> GaitTrial:
    """
    Copy of ``trial`` with ``joints_2d`` filled for the camera view.

    Raises:
        MissingChannel: if the trial has no 3D joints
        CameraTooClose: if a joint lies farther from the look-at target
            than the camera
        BehindCamera: if a joint projects from behind the camera
    """
    target = look_at_target(trial)
    names = tuple(trial.frames[0].joints_3d)
    points = trial.joint_array(names, plane="3d")
    reach = np.max(np.linalg.norm((points - target)[..., [0, 2]], axis=-1))
    if cam.distance_m <= reach:
        raise CameraTooClose(f"{trial.trial_id}: camera distance "
                             f"{cam.distance_m} m within subject reach "
                             f"{reach:.2f} m")
    pixels = project_points(points, cam, target)
    frames = tuple(
        replace(frame, joints_2d={name: [float(x) for x in pixels[i, j]]
                                  for j, name in enumerate(names)})
        for i, frame in enumerate(trial.frames))
    view = int(round(cam.azimuth_deg))
    return replace(trial,
                   trial_id=f"{trial.trial_id}_a{view:03d}",
                   frames=frames,
                   view_deg=float(cam.azimuth_deg),
                   source_trial_id=trial.trial_id)


def _project_views(trial: GaitTrial, cams: Sequence[CameraConfig]):
    return [project_trial(trial, cam) for cam in cams]


def project_ring(trials: Sequence[GaitTrial], cams: Sequence[CameraConfig],
                 n_jobs: int = 1) -> List[GaitTrial]:
    """Every trial through every camera, ordered by trial then view."""
    batches = Parallel(n_jobs=n_jobs)(
        delayed(_project_views)(trial, cams) for trial in trials)
    projected = [t for batch in batches for t in batch]
    logger.info(f"Projected {len(trials)} trial(s) on {len(cams)} view(s)")
    return projected

