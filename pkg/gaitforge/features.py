# -*- coding: utf-8 -*-
"""
Gait feature representations.

* P: the six sagittal joint angles per frame (L x 6, degrees)
* Q: the 2D pixel coordinates of hips, knees and ankles (L x 6 x 2)
* histogram descriptor: one normalized M-bin histogram per angle over a
  fixed physiological range, concatenated in channel order
"""
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.interpolate import interp1d

from gaitforge import configs
from gaitforge.misc import require
from gaitforge.storage import atomic_write
from gaitforge.trials import ANGLE_CHANNELS, GaitTrial, POSE_JOINTS

logger = logging.getLogger(__name__)
logger.setLevel(configs.LOG_LEVEL)

N_CHANNELS = len(ANGLE_CHANNELS)
LABEL_COLUMNS = ("trial_id", "subject_id", "provenance", "solver",
                 "scale_factor", "view_deg")


def default_ranges(values: Optional[Mapping] = None
                   ) -> Tuple[Tuple[float, float], ...]:
    """Per-channel histogram ranges (deg) in ANGLE_CHANNELS order."""
    values = configs.DEFAULTS["features"] if values is None else values
    return tuple(tuple(values[f"{channel.split('_')[0]}_range_deg"])
                 for channel in ANGLE_CHANNELS)


@dataclass(frozen=True, eq=False)
class TrialVectorP:
    values: np.ndarray
    times: Optional[np.ndarray] = None

    def __post_init__(self):
        require(self.values.ndim == 2 and self.values.shape[1] == N_CHANNELS,
                f"P must be L x {N_CHANNELS}, got {self.values.shape}")
        require(np.all(np.isfinite(self.values)), "P must be finite")

    @property
    def length(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class TrialVectorQ:
    values: np.ndarray
    times: Optional[np.ndarray] = None

    def __post_init__(self):
        require(self.values.ndim == 3 and
                self.values.shape[1:] == (len(POSE_JOINTS), 2),
                f"Q must be L x {len(POSE_JOINTS)} x 2, "
                f"got {self.values.shape}")
        require(np.all(np.isfinite(self.values)), "Q must be finite")

    @property
    def length(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class HistogramDescriptor:
    bins: np.ndarray
    ranges: Tuple[Tuple[float, float], ...]

    @property
    def vector(self) -> np.ndarray:
        return self.bins.reshape(-1)

    @property
    def n_bins(self) -> int:
        return self.bins.shape[1]


def extract_P(trial: GaitTrial) -> TrialVectorP:
    """
    Joint angles in fixed channel order.

    Raises:
        MissingChannel: if any frame lacks one of the six angles
    """
    return TrialVectorP(values=trial.angle_matrix(), times=trial.times())


def extract_Q(trial: GaitTrial) -> TrialVectorQ:
    """2D hip, knee and ankle coordinates of a projected trial."""
    return TrialVectorQ(values=trial.joint_array(POSE_JOINTS, plane="2d"),
                        times=trial.times())


def normalize_Q(Q: TrialVectorQ) -> TrialVectorQ:
    """
    Hip-centred coordinates scaled by the mean hip-to-ankle pixel distance.
    """
    values = Q.values
    index = {name: i for i, name in enumerate(POSE_JOINTS)}
    hips = values[:, [index["hip_L"], index["hip_R"]]]
    ankles = values[:, [index["ankle_L"], index["ankle_R"]]]
    centre = hips.mean(axis=1, keepdims=True)
    leg = np.linalg.norm(hips - ankles, axis=-1).mean()
    require(leg > 0, "degenerate 2D pose: zero hip-to-ankle distance")
    return replace(Q, values=(values - centre) / leg)


Sequential = Union[TrialVectorP, TrialVectorQ, np.ndarray]


def resample_fixed_length(sequence: Sequential, length: int) -> Sequential:
    """
    Linear resampling to ``length`` frames on a uniform grid.

    The grid spans [t0, t_end] of the sequence (frame indices for a bare
    array); both endpoints are kept exactly.
    """
    values = sequence if isinstance(sequence, np.ndarray) else sequence.values
    times = None if isinstance(sequence, np.ndarray) else sequence.times
    require(values.shape[0] >= 2, "at least 2 frames needed to resample")
    require(length >= 2, "target length must be at least 2")
    if times is None:
        times = np.arange(values.shape[0], dtype=float)

    grid = np.linspace(times[0], times[-1], length)
    if values.shape[0] == length and np.array_equal(grid, times):
        out = values.copy()
    else:
        out = interp1d(times, values, kind="linear", axis=0)(grid)
        out[0], out[-1] = values[0], values[-1]

    if isinstance(sequence, np.ndarray):
        return out
    return replace(sequence, values=out, times=grid)


def angle_histogram(channel: Sequence[float], value_range: Tuple[float, float],
                    n_bins: int) -> np.ndarray:
    """
    Normalized histogram of one angle channel.

    Values outside the range are clamped into the edge bins so the weights
    always sum to 1.
    """
    require(n_bins >= 2, "at least 2 bins required")
    low, high = value_range
    require(low < high, "histogram range must satisfy min < max")
    channel = np.clip(np.asarray(channel, dtype=float), low, high)
    counts, _ = np.histogram(channel, bins=np.linspace(low, high, n_bins + 1))
    return counts / channel.size


def histogram_descriptor(P: TrialVectorP, n_bins: int = 20,
                         ranges: Optional[Sequence[Tuple[float, float]]] = None
                         ) -> HistogramDescriptor:
    ranges = tuple(ranges or default_ranges())
    bins = np.stack([angle_histogram(P.values[:, k], ranges[k], n_bins)
                     for k in range(N_CHANNELS)])
    return HistogramDescriptor(bins=bins, ranges=ranges)


def trial_features(trial: GaitTrial, representation: str = "histogram",
                   frames: int = 100, bins: int = 20,
                   ranges: Optional[Sequence[Tuple[float, float]]] = None,
                   normalize: bool = True) -> np.ndarray:
    """
    Feature array of one trial: a (K*M,) vector for ``histogram``, an
    (L, D) sequence for ``P`` and ``Q``.
    """
    if representation == "histogram":
        return histogram_descriptor(extract_P(trial), bins, ranges).vector
    if representation == "P":
        return resample_fixed_length(extract_P(trial), frames).values
    if representation == "Q":
        Q = extract_Q(trial)
        if normalize:
            Q = normalize_Q(Q)
        return resample_fixed_length(Q, frames).values.reshape(frames, -1)
    raise ValueError(f"unknown representation '{representation}'")


def _feature_names(representation: str, frames: int, bins: int):
    if representation == "histogram":
        return [f"{c}_bin{m:02d}" for c in ANGLE_CHANNELS for m in range(bins)]
    if representation == "P":
        return [f"{c}_f{i:03d}" for i in range(frames) for c in ANGLE_CHANNELS]
    return [f"{j}_{axis}_f{i:03d}" for i in range(frames)
            for j in POSE_JOINTS for axis in ("u", "v")]


def feature_table(trials: Sequence[GaitTrial],
                  representation: str = "histogram", frames: int = 100,
                  bins: int = 20,
                  ranges: Optional[Sequence[Tuple[float, float]]] = None,
                  normalize: bool = True) -> pd.DataFrame:
    """One row per trial: label columns first, then the flat features."""
    label_keys = sorted({key for trial in trials for key in trial.labels})
    rows = []
    for trial in trials:
        row: Dict[str, object] = {c: getattr(trial, c) for c in LABEL_COLUMNS}
        row.update({key: trial.labels.get(key) for key in label_keys})
        rows.append(row)
    labels = pd.DataFrame(rows, columns=list(LABEL_COLUMNS) + label_keys)
    names = _feature_names(representation, frames, bins)
    if trials:
        matrix = np.stack([trial_features(trial, representation, frames, bins,
                                          ranges, normalize).reshape(-1)
                           for trial in trials])
    else:
        matrix = np.zeros((0, len(names)))
    values = pd.DataFrame(matrix, columns=names)
    logger.debug(f"Feature table: {len(trials)} trial(s), "
                 f"{len(names)} {representation} feature(s)")
    return pd.concat([labels, values], axis=1)


def export_feature_csv(table: pd.DataFrame, path: Union[str, Path]):
    atomic_write(path, table.to_csv(index=False, float_format="%.10g"))
