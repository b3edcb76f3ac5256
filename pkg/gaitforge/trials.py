# -*- coding: utf-8 -*-
"""
Gait trial record shared by synthesis, projection, features and storage.
"""
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence, Tuple

import numpy as np

from gaitforge.misc import GaitForgeError
from gaitforge.model import JOINT_NAMES

# Sagittal flexion channels, in feature order
ANGLE_CHANNELS = JOINT_NAMES
# Joints used for 2D features
POSE_JOINTS = JOINT_NAMES

PROVENANCES = ("real", "simulated")
SOLVERS = ("collocation", "shooting", "none")
# label key read by each classification task
TASK_LABELS = {"gender": "gender", "identity": "identity", "age": "age_group"}


class MissingChannel(GaitForgeError):
    """Raised when a trial lacks a joint-angle or joint-position channel."""
    pass


class InvalidTrial(GaitForgeError, ValueError):
    pass


@dataclass(frozen=True)
class Frame:
    t: float
    angles_deg: Mapping[str, float]
    joints_3d: Mapping[str, Sequence[float]] = field(default_factory=dict)
    joints_2d: Mapping[str, Sequence[float]] = field(default_factory=dict)
    extra: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class GaitTrial:
    trial_id: str
    subject_id: str
    frames: Tuple[Frame, ...]
    labels: Mapping[str, str] = field(default_factory=dict)
    provenance: str = "real"
    solver: str = "none"
    scale_factor: Optional[float] = None
    view_deg: Optional[float] = None
    duration_s: Optional[float] = None
    speed_mps: Optional[float] = None
    source_trial_id: Optional[str] = None
    extra: Mapping[str, Any] = field(default_factory=dict)

    def validate(self) -> "GaitTrial":
        """
        Check the record invariants and return the trial.

        Raises:
            InvalidTrial: on bad frame times or inconsistent provenance
            MissingChannel: if a frame lacks one of the six angles
        """
        if len(self.frames) < 2:
            raise InvalidTrial(f"{self.trial_id}: at least 2 frames needed")
        times = self.times()
        if not np.all(np.diff(times) > 0):
            raise InvalidTrial(f"{self.trial_id}: frame times must be "
                               f"strictly increasing")
        if self.provenance not in PROVENANCES:
            raise InvalidTrial(f"{self.trial_id}: unknown provenance "
                               f"'{self.provenance}'")
        if self.solver not in SOLVERS:
            raise InvalidTrial(f"{self.trial_id}: unknown solver "
                               f"'{self.solver}'")
        if self.provenance == "simulated" and (
                self.solver == "none" or self.scale_factor is None):
            raise InvalidTrial(f"{self.trial_id}: simulated trials need a "
                               f"solver and a scale factor")
        self.angle_matrix()
        return self

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def times(self) -> np.ndarray:
        return np.array([frame.t for frame in self.frames], dtype=float)

    def angle_matrix(self) -> np.ndarray:
        """Joint angles (L, 6) in degrees, ANGLE_CHANNELS order."""
        rows = []
        for frame in self.frames:
            missing = [c for c in ANGLE_CHANNELS if c not in frame.angles_deg]
            if missing:
                raise MissingChannel(f"{self.trial_id}: missing angle "
                                     f"channel(s) {missing} at t={frame.t}")
            rows.append([frame.angles_deg[c] for c in ANGLE_CHANNELS])
        return np.array(rows, dtype=float)

    def joint_array(self, names: Sequence[str] = POSE_JOINTS,
                    plane: str = "3d") -> np.ndarray:
        """Joint positions (L, K, 3) or pixel coordinates (L, K, 2)."""
        attribute = "joints_3d" if plane == "3d" else "joints_2d"
        rows = []
        for frame in self.frames:
            points = getattr(frame, attribute)
            missing = [n for n in names if n not in points]
            if missing:
                raise MissingChannel(f"{self.trial_id}: missing {plane} "
                                     f"joint(s) {missing} at t={frame.t}")
            rows.append([points[n] for n in names])
        return np.array(rows, dtype=float)

    def has_joints(self, plane: str = "3d") -> bool:
        attribute = "joints_3d" if plane == "3d" else "joints_2d"
        return all(getattr(frame, attribute) for frame in self.frames)

    def label(self, task: str) -> str:
        if task == "identity":
            return self.labels.get("identity", self.subject_id)
        key = TASK_LABELS.get(task, task)
        if key not in self.labels:
            raise MissingChannel(f"{self.trial_id}: no '{key}' label")
        return self.labels[key]
