# -*- coding: utf-8 -*-
"""
Planar lower-extremity skeletal model.

A subject is described by a handful of anthropometric measurements; the
model built from them is a 7-segment sagittal linkage (trunk/pelvis and
bilateral thigh, shank, foot) with 9 generalized coordinates. Homogeneous
scaling by a factor ``s`` multiplies lengths by ``s``, masses by ``s**3``
and rotational inertias by ``s**5``.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Sequence, Tuple

from gaitforge import configs
from gaitforge.misc import GaitForgeError

logger = logging.getLogger(__name__)
logger.setLevel(configs.LOG_LEVEL)

SEGMENT_NAMES = ("pelvis", "thigh_L", "thigh_R", "shank_L", "shank_R",
                 "foot_L", "foot_R")
JOINT_NAMES = ("hip_L", "knee_L", "ankle_L", "hip_R", "knee_R", "ankle_R")
CONTACT_NAMES = ("heel_L", "toe_L", "heel_R", "toe_R")

# Fractions of body mass. Head, neck and arms (0.181) have no segment of
# their own and are lumped into the trunk so the segment masses add up to
# the body mass.
MASS_FRACTIONS = {"pelvis": 0.497, "thigh": 0.100, "shank": 0.0465,
                  "foot": 0.0145}
UPPER_BODY_FRACTION = 1.0 - MASS_FRACTIONS["pelvis"] - 2.0 * (
    MASS_FRACTIONS["thigh"] + MASS_FRACTIONS["shank"] + MASS_FRACTIONS["foot"])

# COM distance from the proximal joint as a fraction of segment length
COM_FRACTIONS = {"pelvis": 0.40, "thigh": 0.433, "shank": 0.433, "foot": 0.25}

LEG_HEIGHT_FRACTION = 0.491      # (thigh + shank) / stature
ANKLE_HEIGHT_FRACTION = 0.25     # of foot length
HEEL_FRACTION = 0.25             # heel behind the ankle, of foot length

SCALE_GUARD = (0.5, 1.5)

DEFAULT_JOINT_LIMITS_DEG = {
    "hip": tuple(configs.DEFAULTS["model"]["hip_limits_deg"]),
    "knee": tuple(configs.DEFAULTS["model"]["knee_limits_deg"]),
    "ankle": tuple(configs.DEFAULTS["model"]["ankle_limits_deg"]),
}


class NonPositiveDimension(GaitForgeError, ValueError):
    """Raised when a length or mass of a profile or model is not positive."""
    pass


class ScaleOutOfRange(GaitForgeError, ValueError):
    """Raised when a scale factor falls outside the guard band."""
    pass


@dataclass(frozen=True)
class AnthropometricProfile:
    """Per-subject segment lengths (m) and body mass (kg)."""
    subject_id: str
    pelvis_width_m: float
    thigh_len_m: float
    shank_len_m: float
    foot_len_m: float
    total_mass_kg: float
    height_m: Optional[float] = None
    labels: Mapping[str, str] = field(default_factory=dict)

    def derived_height(self) -> float:
        if self.height_m is not None:
            return float(self.height_m)
        return (self.thigh_len_m + self.shank_len_m) / LEG_HEIGHT_FRACTION

    def validate(self):
        dimensions = {
            "pelvis_width_m": self.pelvis_width_m,
            "thigh_len_m": self.thigh_len_m,
            "shank_len_m": self.shank_len_m,
            "foot_len_m": self.foot_len_m,
            "total_mass_kg": self.total_mass_kg,
        }
        if self.height_m is not None:
            dimensions["height_m"] = self.height_m
        for name, value in dimensions.items():
            if not value > 0:
                raise NonPositiveDimension(
                    f"{self.subject_id}: {name} must be positive, got {value}")
        if self.height_m is not None and \
                self.thigh_len_m + self.shank_len_m >= self.height_m:
            raise NonPositiveDimension(
                f"{self.subject_id}: thigh + shank "
                f"({self.thigh_len_m + self.shank_len_m:.3f} m) must be "
                f"shorter than the stature ({self.height_m:.3f} m)")


@dataclass(frozen=True)
class BodySegment:
    name: str
    length_m: float
    mass_kg: float
    com_offset_m: float
    inertia_zz: float

    def scaled(self, s: float) -> "BodySegment":
        return replace(self,
                       length_m=self.length_m * s,
                       mass_kg=self.mass_kg * s ** 3,
                       com_offset_m=self.com_offset_m * s,
                       inertia_zz=self.inertia_zz * s ** 5)


@dataclass(frozen=True)
class SkeletalModel:
    """
    Immutable planar skeletal model.

    ``joint_limits_rad`` follows JOINT_NAMES, ``contact_points`` follows
    CONTACT_NAMES and holds (forward, up) offsets of the sole points in the
    foot frame, measured from the ankle joint.
    """
    segments: Tuple[BodySegment, ...]
    joint_limits_rad: Tuple[Tuple[float, float], ...]
    contact_points: Tuple[Tuple[float, float], ...]
    pelvis_width_m: float
    height_m: float
    scale_factor: float = 1.0
    source_subject: str = ""

    def __post_init__(self):
        if tuple(s.name for s in self.segments) != SEGMENT_NAMES:
            raise ValueError(f"segments must be ordered as {SEGMENT_NAMES}")
        if len(self.joint_limits_rad) != len(JOINT_NAMES):
            raise ValueError("one joint limit pair per joint is required")
        for name, (low, high) in zip(JOINT_NAMES, self.joint_limits_rad):
            if not low < high:
                raise ValueError(f"joint limit of {name}: min must be < max")
        for segment in self.segments:
            if not 0.0 <= segment.com_offset_m <= segment.length_m:
                raise ValueError(f"{segment.name}: COM offset outside segment")
            if not segment.inertia_zz > 0:
                raise NonPositiveDimension(f"{segment.name}: inertia <= 0")

    def segment(self, name: str) -> BodySegment:
        return self.segments[SEGMENT_NAMES.index(name)]

    @property
    def total_mass_kg(self) -> float:
        return math.fsum(s.mass_kg for s in self.segments)

    @property
    def ankle_height_m(self) -> float:
        return -self.contact_points[0][1]

    @property
    def limits_by_joint(self) -> Dict[str, Tuple[float, float]]:
        return dict(zip(JOINT_NAMES, self.joint_limits_rad))

    @property
    def standing_hip_height_m(self) -> float:
        """Hip height of the zero pose with the soles on the ground."""
        return (self.segment("thigh_L").length_m
                + self.segment("shank_L").length_m + self.ankle_height_m)


def _joint_limits(limits_deg: Mapping[str, Sequence[float]]):
    limits = []
    for joint in JOINT_NAMES:
        low, high = limits_deg[joint.split("_")[0]]
        limits.append((math.radians(low), math.radians(high)))
    return tuple(limits)


def _rod(name: str, length: float, mass: float, com_fraction: float):
    return BodySegment(name=name, length_m=length, mass_kg=mass,
                       com_offset_m=com_fraction * length,
                       inertia_zz=mass * length ** 2 / 12.0)


def build_model(
        profile: AnthropometricProfile,
        joint_limits_deg: Optional[Mapping[str, Sequence[float]]] = None
) -> SkeletalModel:
    """
    Build the unscaled model of a subject.

    Args:
        profile: the subject's anthropometric measurements
        joint_limits_deg: (min, max) per joint type ``hip``, ``knee``,
            ``ankle``; defaults to the ``[model]`` settings

    Returns:
        SkeletalModel with scale_factor 1.0

    Raises:
        NonPositiveDimension: if any length or the mass is not positive
    """
    profile.validate()
    mass = profile.total_mass_kg
    height = profile.derived_height()
    foot = profile.foot_len_m
    ankle_height = ANKLE_HEIGHT_FRACTION * foot
    trunk_len = (height - profile.thigh_len_m - profile.shank_len_m
                 - ankle_height)
    if not trunk_len > 0:
        raise NonPositiveDimension(
            f"{profile.subject_id}: stature leaves no room for the trunk")

    pelvis_mass = (MASS_FRACTIONS["pelvis"] + UPPER_BODY_FRACTION) * mass
    segments = {
        "pelvis": _rod("pelvis", trunk_len, pelvis_mass,
                       COM_FRACTIONS["pelvis"]),
    }
    for side in ("L", "R"):
        segments[f"thigh_{side}"] = _rod(
            f"thigh_{side}", profile.thigh_len_m,
            MASS_FRACTIONS["thigh"] * mass, COM_FRACTIONS["thigh"])
        segments[f"shank_{side}"] = _rod(
            f"shank_{side}", profile.shank_len_m,
            MASS_FRACTIONS["shank"] * mass, COM_FRACTIONS["shank"])
        segments[f"foot_{side}"] = _rod(
            f"foot_{side}", foot, MASS_FRACTIONS["foot"] * mass,
            COM_FRACTIONS["foot"])

    heel = (-HEEL_FRACTION * foot, -ankle_height)
    toe = ((1.0 - HEEL_FRACTION) * foot, -ankle_height)

    model = SkeletalModel(
        segments=tuple(segments[name] for name in SEGMENT_NAMES),
        joint_limits_rad=_joint_limits(joint_limits_deg
                                       or DEFAULT_JOINT_LIMITS_DEG),
        contact_points=(heel, toe, heel, toe),
        pelvis_width_m=profile.pelvis_width_m,
        height_m=height,
        scale_factor=1.0,
        source_subject=profile.subject_id,
    )
    logger.debug(f"Built model for '{profile.subject_id}': "
                 f"{model.total_mass_kg:.2f} kg, {height:.3f} m")
    return model


def scale_model(model: SkeletalModel, s: float) -> SkeletalModel:
    """
    Scale a model homogeneously across all segments.

    Raises:
        ScaleOutOfRange: if ``s`` lies outside the guard band [0.5, 1.5]
    """
    if not SCALE_GUARD[0] <= s <= SCALE_GUARD[1]:
        raise ScaleOutOfRange(f"scale factor {s} outside {SCALE_GUARD}")
    return replace(
        model,
        segments=tuple(segment.scaled(s) for segment in model.segments),
        contact_points=tuple((x * s, y * s) for x, y in model.contact_points),
        pelvis_width_m=model.pelvis_width_m * s,
        height_m=model.height_m * s,
        scale_factor=model.scale_factor * s,
    )


def scale_range(start: float, step: float, stop: float) -> Tuple[float, ...]:
    """Inclusive range of scale factors, rounded to remove float drift."""
    count = int(round((stop - start) / step)) + 1
    return tuple(round(start + i * step, 10) for i in range(count))


def standing_chain_length(model: SkeletalModel, side: str = "L") -> float:
    """Hip-to-ankle distance of the straight standing leg."""
    return (model.segment(f"thigh_{side}").length_m
            + model.segment(f"shank_{side}").length_m)
