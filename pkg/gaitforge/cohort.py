# -*- coding: utf-8 -*-
"""
Bundled synthetic cohort used to exercise the augmentation pipeline end to
end without any external dataset.

Subjects come in two anthropometric classes (``gender`` F/M) that also
differ slightly in walking style. Their real-tagged trials follow a smooth
kinematic reference gait with Gaussian joint-angle noise; 3D joints come
from the forward kinematics of each subject's model.
"""
import logging
from typing import List, Tuple

import numpy as np
import torch

from gaitforge import configs
from gaitforge.dynamics import DTYPE, KEYPOINT_NAMES, N_COORDS, linkage
from gaitforge.misc import require
from gaitforge.model import AnthropometricProfile, JOINT_NAMES, build_model
from gaitforge.trials import Frame, GaitTrial

logger = logging.getLogger(__name__)
logger.setLevel(configs.LOG_LEVEL)

CLASS_ANTHROPOMETRY = {
    # thigh, shank, foot, pelvis width (m), mass (kg)
    "F": (0.41, 0.39, 0.235, 0.165, 63.0),
    "M": (0.46, 0.44, 0.270, 0.180, 80.0),
}
CLASS_STYLE = {
    # hip amplitude, knee mean, ankle mean (deg)
    "F": (24.0, 30.0, 4.0),
    "M": (21.0, 27.0, 2.0),
}
AGE_GROUPS = ("young", "older")
FRAME_RATE_HZ = 30.0


def _profile(rng: np.random.Generator, subject_id: str,
             gender: str) -> AnthropometricProfile:
    thigh, shank, foot, width, mass = CLASS_ANTHROPOMETRY[gender]
    size = 1.0 + rng.normal(0.0, 0.03)
    jitter = 1.0 + rng.normal(0.0, 0.01, size=4)
    return AnthropometricProfile(
        subject_id=subject_id,
        pelvis_width_m=float(width * size * jitter[0]),
        thigh_len_m=float(thigh * size * jitter[1]),
        shank_len_m=float(shank * size * jitter[2]),
        foot_len_m=float(foot * size * jitter[3]),
        total_mass_kg=float(mass * size ** 3 * (1.0 + rng.normal(0.0, 0.05))),
        labels={"gender": gender, "identity": subject_id,
                "age_group": AGE_GROUPS[int(rng.integers(len(AGE_GROUPS)))]},
    )


def reference_gait(times: np.ndarray, stride_hz: float, phase: float,
                   style: Tuple[float, float, float], speed_mps: float
                   ) -> np.ndarray:
    """Joint angles (L, 6) in degrees of a periodic sagittal gait."""
    hip_amplitude, knee_mean, ankle_mean = style
    hip_amplitude *= np.sqrt(speed_mps / 1.3)
    channels = []
    for offset in (0.0, np.pi):
        phi = 2.0 * np.pi * stride_hz * times + phase + offset
        channels += [
            10.0 + hip_amplitude * np.sin(phi),
            knee_mean + 24.0 * np.sin(phi - 1.4),
            ankle_mean + 9.0 * np.sin(phi + 1.8),
        ]
    return np.stack(channels, axis=1)


def _trial(rng: np.random.Generator, profile: AnthropometricProfile,
           index: int, duration_s: float, noise_deg: float) -> GaitTrial:
    model = build_model(profile)
    gender = profile.labels["gender"]
    speed = float(np.clip(rng.normal(1.3, 0.12), 0.9, 1.7))
    leg = profile.thigh_len_m + profile.shank_len_m
    stride_hz = speed / (1.6 * leg * np.sqrt(speed / 1.3))
    times = np.arange(int(round(duration_s * FRAME_RATE_HZ)) + 1) / \
        FRAME_RATE_HZ

    angles = reference_gait(times, stride_hz, rng.uniform(0, 2 * np.pi),
                            CLASS_STYLE[gender], speed)
    angles += rng.normal(0.0, noise_deg, size=angles.shape)

    q = np.zeros((times.size, N_COORDS))
    q[:, 0] = speed * times
    q[:, 1] = model.standing_hip_height_m - 0.03 + 0.015 * np.cos(
        4.0 * np.pi * stride_hz * times)
    q[:, 3:] = np.radians(angles)
    with torch.no_grad():
        points = linkage(model).keypoints(
            torch.as_tensor(q, dtype=DTYPE)).numpy()

    frames = tuple(
        Frame(t=float(t),
              angles_deg={name: float(angles[k, i])
                          for i, name in enumerate(JOINT_NAMES)},
              joints_3d={name: [float(v) for v in points[k, j]]
                         for j, name in enumerate(KEYPOINT_NAMES)})
        for k, t in enumerate(times))
    return GaitTrial(
        trial_id=f"{profile.subject_id}_t{index:02d}",
        subject_id=profile.subject_id, frames=frames,
        labels=dict(profile.labels), provenance="real", solver="none",
        duration_s=float(times[-1]), speed_mps=speed)


def make_synthetic_cohort(n_subjects: int = 20, trials_per_subject: int = 3,
                          seed: int = 0, noise_deg: float = 2.0,
                          duration_s: float = 2.0
                          ) -> Tuple[List[AnthropometricProfile],
                                     List[GaitTrial]]:
    """
    Profiles and real-tagged trials of a two-class cohort.

    Classes alternate with the subject index so both hold half the cohort.
    """
    require(n_subjects >= 2, "a cohort needs at least 2 subjects")
    require(trials_per_subject >= 1, "at least one trial per subject")
    require(noise_deg >= 0, "noise must be non-negative")
    rng = np.random.default_rng(seed)
    width = max(2, len(str(n_subjects)))
    profiles, trials = [], []
    for i in range(n_subjects):
        gender = ("F", "M")[i % 2]
        profile = _profile(rng, f"S{i + 1:0{width}d}", gender)
        profiles.append(profile)
        trials += [_trial(rng, profile, j, duration_s, noise_deg)
                   for j in range(trials_per_subject)]
    logger.info(f"Synthetic cohort: {n_subjects} subject(s), "
                f"{len(trials)} real-tagged trial(s)")
    return profiles, trials
