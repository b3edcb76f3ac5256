# -*- coding: utf-8 -*-
"""
Ingestion of motion-capture style joint positions.

Joint names follow ``dynamics.KEYPOINT_NAMES`` (``hip_L``, ``knee_L``,
``ankle_L``, ``heel_L``, ``toe_L`` and the ``_R`` side); positions are in
meters with x forward and y up. An optional ``trunk`` point above the
pelvis gives the pelvis pitch, which is zero otherwise.
"""
import logging
from typing import Any, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from gaitforge import configs
from gaitforge.misc import require
from gaitforge.model import AnthropometricProfile, JOINT_NAMES
from gaitforge.trials import Frame, GaitTrial, MissingChannel

logger = logging.getLogger(__name__)
logger.setLevel(configs.LOG_LEVEL)

SIDES = ("L", "R")
REQUIRED_JOINTS = tuple(f"{joint}_{side}" for side in SIDES
                        for joint in ("hip", "knee", "ankle", "heel", "toe"))


def _check_joints(joints: Mapping[str, object], where: str):
    missing = [name for name in REQUIRED_JOINTS if name not in joints]
    if missing:
        raise MissingChannel(f"{where}: missing joint(s) {missing}")


def _distance(a, b) -> np.ndarray:
    return np.linalg.norm(np.asarray(a, dtype=float)
                          - np.asarray(b, dtype=float), axis=-1)


def profile_from_static_pose(joints_3d: Mapping[str, Sequence[float]],
                             subject_id: str, total_mass_kg: float,
                             labels: Optional[Mapping[str, str]] = None,
                             height_m: Optional[float] = None
                             ) -> AnthropometricProfile:
    """
    Segment lengths of a subject from one static calibration pose.

    Left and right lengths are averaged; the pelvis width is the distance
    between the hip joint centres.
    """
    _check_joints(joints_3d, subject_id)

    def both(proximal, distal):
        return float(np.mean([_distance(joints_3d[f"{proximal}_{s}"],
                                        joints_3d[f"{distal}_{s}"])
                              for s in SIDES]))

    profile = AnthropometricProfile(
        subject_id=subject_id,
        pelvis_width_m=float(_distance(joints_3d["hip_L"],
                                       joints_3d["hip_R"])),
        thigh_len_m=both("hip", "knee"),
        shank_len_m=both("knee", "ankle"),
        foot_len_m=both("heel", "toe"),
        total_mass_kg=float(total_mass_kg),
        height_m=height_m,
        labels=dict(labels or {}),
    )
    profile.validate()
    return profile


def _limb_angle(proximal: np.ndarray, distal: np.ndarray) -> np.ndarray:
    """Sagittal angle of a hanging limb, zero when pointing straight down."""
    d = distal - proximal
    return np.arctan2(d[:, 0], -d[:, 1])


def flexion_angles(joints_3d: Mapping[str, np.ndarray]) -> np.ndarray:
    """
    Hip, knee and ankle flexion (L, 6) in radians, JOINT_NAMES order.

    Hip flexion is the thigh angle relative to the pelvis, knee flexion
    the thigh-to-shank angle and ankle flexion the foot axis (heel to toe)
    relative to the shank normal.
    """
    if "trunk" in joints_3d and "pelvis" in joints_3d:
        up = joints_3d["trunk"] - joints_3d["pelvis"]
        pitch = np.arctan2(-up[:, 0], up[:, 1])
    else:
        pitch = 0.0
    channels = []
    for side in SIDES:
        thigh = _limb_angle(joints_3d[f"hip_{side}"],
                            joints_3d[f"knee_{side}"])
        shank = _limb_angle(joints_3d[f"knee_{side}"],
                            joints_3d[f"ankle_{side}"])
        sole = joints_3d[f"toe_{side}"] - joints_3d[f"heel_{side}"]
        foot = np.arctan2(sole[:, 1], sole[:, 0])
        channels += [thigh - pitch, thigh - shank, foot - shank]
    return np.stack(channels, axis=1)


def trial_from_joint_sequence(times: Sequence[float],
                              joints_3d: Mapping[str, Sequence],
                              trial_id: str, subject_id: str,
                              labels: Optional[Mapping[str, str]] = None,
                              speed_mps: Optional[float] = None
                              ) -> GaitTrial:
    """
    Real trial from 3D joint trajectories of shape (L, 3) per joint.

    The pelvis defaults to the midpoint of the hips; the walking speed
    defaults to the mean forward pelvis speed.

    Raises:
        MissingChannel: if a hip, knee, ankle, heel or toe is missing
    """
    _check_joints(joints_3d, trial_id)
    times = np.asarray(times, dtype=float)
    joints = {name: np.asarray(points, dtype=float).reshape(-1, 3)
              for name, points in joints_3d.items()}
    require(all(p.shape[0] == times.size for p in joints.values()),
            f"{trial_id}: every joint needs one position per time stamp")
    joints.setdefault("pelvis", 0.5 * (joints["hip_L"] + joints["hip_R"]))

    angles = np.degrees(flexion_angles(joints))
    if speed_mps is None and times.size >= 2:
        speed_mps = float((joints["pelvis"][-1, 0] - joints["pelvis"][0, 0])
                          / (times[-1] - times[0]))

    frames = tuple(
        Frame(t=float(t),
              angles_deg={name: float(angles[k, i])
                          for i, name in enumerate(JOINT_NAMES)},
              joints_3d={name: [float(v) for v in points[k]]
                         for name, points in joints.items()})
        for k, t in enumerate(times))
    trial = GaitTrial(trial_id=trial_id, subject_id=subject_id, frames=frames,
                      labels=dict(labels or {}), provenance="real",
                      solver="none", duration_s=float(times[-1] - times[0]),
                      speed_mps=speed_mps)
    logger.debug(f"Ingested '{trial_id}': {len(frames)} frame(s)")
    return trial.validate()


def ingest_capture(subjects: Sequence[Mapping[str, Any]]
                   ) -> Tuple[List[AnthropometricProfile], List[GaitTrial]]:
    """
    Profiles and real trials of the subjects of a capture document.

    Every subject gets an ``identity`` label equal to its id unless the
    document gives one.
    """
    ids = [subject["subject_id"] for subject in subjects]
    require(len(set(ids)) == len(ids), "subject ids must be unique")
    profiles, trials = [], []
    for subject in subjects:
        labels = {"identity": subject["subject_id"],
                  **subject.get("labels", {})}
        profile = profile_from_static_pose(
            subject["static_pose"], subject["subject_id"],
            subject["total_mass_kg"], labels=labels,
            height_m=subject.get("height_m"))
        profiles.append(profile)
        trials += [trial_from_joint_sequence(
            record["times"], record["joints_3d"], record["trial_id"],
            profile.subject_id, labels=profile.labels,
            speed_mps=record.get("speed_mps"))
            for record in subject.get("trials", [])]
    trial_ids = [trial.trial_id for trial in trials]
    require(len(set(trial_ids)) == len(trial_ids), "trial ids must be unique")
    logger.info(f"Ingested {len(profiles)} subject(s), {len(trials)} "
                f"trial(s)")
    return profiles, trials
