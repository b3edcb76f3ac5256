#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Record schemas (models, cohorts, trials) and the selectable options of each
command. A user enters information through flags defined by these options.
"""
from marshmallow import (
    INCLUDE, Schema, ValidationError, fields, post_dump, post_load,
    pre_load, validates_schema,
)
from webargs import validate

from gaitforge import configs
from gaitforge.model import (
    AnthropometricProfile, BodySegment, SEGMENT_NAMES, SkeletalModel,
)
from gaitforge.trials import Frame, GaitTrial, PROVENANCES, SOLVERS

MODEL_SCHEMA = "gaitforge-model/1"
TRIAL_SCHEMA = "gaitforge-trial/1"
COHORT_SCHEMA = "gaitforge-cohort/1"
REPORT_SCHEMA = "gaitforge-report/1"
CAPTURE_SCHEMA = "gaitforge-capture/1"

TASKS = ["gender", "identity", "age"]
CONDITIONS = ["real", "sim", "real+sim", "all"]
CLASSIFIERS = ["esknn", "lstm", "bilstm"]
SEQUENCE_CLASSIFIERS = ("lstm", "bilstm")
REPRESENTATIONS = ["histogram", "P", "Q"]


# --------------------------------------------------------------------------
# records
# --------------------------------------------------------------------------
class ProfileSchema(Schema):
    class Meta:
        ordered = True

    subject_id = fields.Str(required=True)
    pelvis_width_m = fields.Float(required=True)
    thigh_len_m = fields.Float(required=True)
    shank_len_m = fields.Float(required=True)
    foot_len_m = fields.Float(required=True)
    total_mass_kg = fields.Float(required=True)
    height_m = fields.Float(allow_none=True, load_default=None)
    labels = fields.Dict(keys=fields.Str(), values=fields.Str(),
                         load_default=dict)

    @post_load
    def make_profile(self, data, **kwargs):
        profile = AnthropometricProfile(**data)
        profile.validate()
        return profile


class SegmentSchema(Schema):
    class Meta:
        ordered = True

    name = fields.Str(required=True, validate=validate.OneOf(SEGMENT_NAMES))
    length_m = fields.Float(required=True)
    mass_kg = fields.Float(required=True)
    com_offset_m = fields.Float(required=True)
    inertia_zz = fields.Float(required=True)

    @post_load
    def make_segment(self, data, **kwargs):
        return BodySegment(**data)


class ModelSchema(Schema):
    """Skeletal model document, unit-suffixed field names."""

    class Meta:
        ordered = True

    schema = fields.Str(dump_default=MODEL_SCHEMA,
                        validate=validate.Equal(MODEL_SCHEMA))
    source_subject = fields.Str(required=True)
    scale_factor = fields.Float(required=True)
    height_m = fields.Float(required=True)
    pelvis_width_m = fields.Float(required=True)
    segments = fields.List(fields.Nested(SegmentSchema), required=True)
    joint_limits_rad = fields.List(fields.List(fields.Float()), required=True)
    contact_points = fields.List(fields.List(fields.Float()), required=True)

    @post_dump
    def tag(self, data, **kwargs):
        data["schema"] = MODEL_SCHEMA
        return data

    @post_load
    def make_model(self, data, **kwargs):
        data.pop("schema", None)
        data["segments"] = tuple(data["segments"])
        data["joint_limits_rad"] = tuple(tuple(x)
                                         for x in data["joint_limits_rad"])
        data["contact_points"] = tuple(tuple(x)
                                       for x in data["contact_points"])
        try:
            return SkeletalModel(**data)
        except ValueError as e:
            raise ValidationError(str(e)) from e


class CohortSchema(Schema):
    class Meta:
        ordered = True

    schema = fields.Str(dump_default=COHORT_SCHEMA,
                        validate=validate.Equal(COHORT_SCHEMA))
    profiles = fields.List(fields.Nested(ProfileSchema), required=True)

    @post_dump
    def tag(self, data, **kwargs):
        data["schema"] = COHORT_SCHEMA
        return data

    @post_load
    def make_profiles(self, data, **kwargs):
        return list(data["profiles"])


POINT_3D = fields.List(fields.Float(), validate=validate.Length(equal=3))


class CaptureTrialSchema(Schema):
    class Meta:
        ordered = True

    trial_id = fields.Str(required=True)
    times = fields.List(fields.Float(), required=True,
                        validate=validate.Length(min=2))
    joints_3d = fields.Dict(keys=fields.Str(),
                            values=fields.List(POINT_3D), required=True)
    speed_mps = fields.Float(allow_none=True, load_default=None)


class CaptureSubjectSchema(Schema):
    class Meta:
        ordered = True

    subject_id = fields.Str(required=True)
    total_mass_kg = fields.Float(required=True)
    height_m = fields.Float(allow_none=True, load_default=None)
    labels = fields.Dict(keys=fields.Str(), values=fields.Str(),
                         load_default=dict)
    static_pose = fields.Dict(keys=fields.Str(), values=POINT_3D,
                              required=True)
    trials = fields.List(fields.Nested(CaptureTrialSchema),
                         load_default=list)


class CaptureSchema(Schema):
    """Motion-capture joint positions of a cohort, meters, y up."""

    class Meta:
        ordered = True

    schema = fields.Str(required=True,
                        validate=validate.Equal(CAPTURE_SCHEMA))
    subjects = fields.List(fields.Nested(CaptureSubjectSchema),
                           required=True, validate=validate.Length(min=1))

    @post_load
    def make_subjects(self, data, **kwargs):
        return list(data["subjects"])


class FrameSchema(Schema):
    """One sample of a trial; unknown fields are kept in ``extra``."""

    class Meta:
        ordered = True
        unknown = INCLUDE

    t = fields.Float(required=True)
    angles_deg = fields.Dict(keys=fields.Str(), values=fields.Float(),
                             required=True)
    joints_3d = fields.Dict(keys=fields.Str(),
                            values=fields.List(fields.Float()),
                            load_default=dict)
    joints_2d = fields.Dict(keys=fields.Str(),
                            values=fields.List(fields.Float()),
                            load_default=dict)

    @post_dump(pass_original=True)
    def keep_extra(self, data, original, **kwargs):
        if not data.get("joints_2d"):
            data.pop("joints_2d", None)
        for key, value in original.extra.items():
            data.setdefault(key, value)
        return data

    @post_load
    def make_frame(self, data, **kwargs):
        known = set(self.fields)
        extra = {k: data.pop(k) for k in list(data) if k not in known}
        return Frame(extra=extra, **data)


class TrialSchema(Schema):
    """One GaitTrial per JSONL line; unknown fields are kept in ``extra``."""

    class Meta:
        ordered = True
        unknown = INCLUDE

    schema = fields.Str(dump_default=TRIAL_SCHEMA,
                        validate=validate.Equal(TRIAL_SCHEMA))
    trial_id = fields.Str(required=True)
    subject_id = fields.Str(required=True)
    labels = fields.Dict(keys=fields.Str(), values=fields.Str(),
                         load_default=dict)
    provenance = fields.Str(required=True,
                            validate=validate.OneOf(PROVENANCES))
    solver = fields.Str(load_default="none", validate=validate.OneOf(SOLVERS))
    scale_factor = fields.Float(allow_none=True, load_default=None)
    view_deg = fields.Float(allow_none=True, load_default=None)
    duration_s = fields.Float(allow_none=True, load_default=None)
    speed_mps = fields.Float(allow_none=True, load_default=None)
    source_trial_id = fields.Str(allow_none=True, load_default=None)
    frames = fields.List(fields.Nested(FrameSchema), required=True)

    @post_dump(pass_original=True)
    def keep_extra(self, data, original, **kwargs):
        data["schema"] = TRIAL_SCHEMA
        for key, value in original.extra.items():
            data.setdefault(key, value)
        return data

    @post_load
    def make_trial(self, data, **kwargs):
        data.pop("schema", None)
        known = set(self.fields)
        extra = {k: data.pop(k) for k in list(data) if k not in known}
        data["frames"] = tuple(data["frames"])
        return GaitTrial(extra=extra, **data)


# --------------------------------------------------------------------------
# command options
# --------------------------------------------------------------------------
class RunArgsSchema(Schema):
    """
    Options shared by every command
    """

    class Meta:
        ordered = True

    config = fields.Str(
        load_default=None,
        metadata={'description': 'User settings file layered over the '
                                 'packaged settings.ini.'}
    )

    jobs = fields.Int(
        load_default=configs.DEFAULTS["run"]["jobs"],
        validate=validate.Range(min=1),
        metadata={'description': 'Number of parallel workers.'}
    )

    seed = fields.Int(
        load_default=None,
        metadata={'description': 'Run seed. Defaults to [run] seed of the '
                                 'settings.'}
    )

    out = fields.Str(
        load_default=str(configs.OUT_PATH),
        metadata={'description': 'Output directory.'}
    )

    @pre_load
    def strip_none(self, data, **kwargs):
        """Absent flags fall back to the defaults."""
        return {k: v for k, v in data.items() if v is not None}


class ScaleArgsSchema(RunArgsSchema):
    """
    Options to build and scale skeletal models
    """

    profiles = fields.Str(
        required=True,
        metadata={'description': 'Cohort document with the anthropometric '
                                 'profiles.'}
    )

    scales = fields.Str(
        load_default="0.7:0.1:1.3",
        metadata={'description': "Scale factors, either 'start:step:stop' "
                                 "or a comma separated list."}
    )


class SynthArgsSchema(ScaleArgsSchema):
    """
    Options to synthesize an augmented gait dataset
    """

    trials = fields.Str(
        load_default=None,
        metadata={'description': 'Real trials (JSONL) providing the trial '
                                 'velocities and, for real+sim, the real '
                                 'records.'}
    )

    duration = fields.Float(
        load_default=configs.DEFAULTS["augmentation"]["duration_s"],
        validate=validate.Range(min=0.0, min_inclusive=False),
        metadata={'description': 'Walking duration of every synthesized '
                                 'trial (s).'}
    )

    solver = fields.Str(
        load_default=configs.DEFAULTS["run"]["solver"],
        validate=validate.OneOf(["collocation", "shooting"]),
        metadata={
            'enum': ["collocation", "shooting"],
            'description': 'Trajectory optimization method.'
        }
    )

    mode = fields.Str(
        load_default="real_plus_sim",
        validate=validate.OneOf(["sim_only", "real_plus_sim"]),
        metadata={
            'enum': ["sim_only", "real_plus_sim"],
            'description': 'Keep the real trials next to the synthesized '
                           'ones or not.'
        }
    )

    speed_policy = fields.Str(
        load_default=configs.DEFAULTS["augmentation"]["speed_policy"],
        validate=validate.OneOf(["per_trial", "cohort_mean"]),
        metadata={
            'enum': ["per_trial", "cohort_mean"],
            'description': 'Synthesize at every real trial velocity or at '
                           'the cohort mean velocity.'
        }
    )


class ProjectArgsSchema(RunArgsSchema):
    """
    Options to reproject trials on a ring of cameras
    """

    trials = fields.Str(
        required=True,
        metadata={'description': 'Trials (JSONL) with 3D joints.'}
    )

    views = fields.Int(
        load_default=configs.DEFAULTS["camera"]["n_views"],
        validate=validate.Range(min=1),
        metadata={'description': 'Number of viewing angles.'}
    )

    start_deg = fields.Float(
        load_default=configs.DEFAULTS["camera"]["start_deg"],
        metadata={'description': 'Azimuth of the first view.'}
    )

    step_deg = fields.Float(
        load_default=configs.DEFAULTS["camera"]["step_deg"],
        metadata={'description': 'Azimuth step between views.'}
    )


class FeaturizeArgsSchema(RunArgsSchema):
    """
    Options to export feature matrices
    """

    trials = fields.Str(
        required=True,
        metadata={'description': 'Trials (JSONL) to featurize.'}
    )

    representation = fields.Str(
        load_default="histogram",
        validate=validate.OneOf(REPRESENTATIONS),
        metadata={
            'enum': REPRESENTATIONS,
            'description': 'Histogram descriptor, joint-angle sequence P '
                           'or 2D joint sequence Q.'
        }
    )

    frames = fields.Int(
        load_default=configs.DEFAULTS["features"]["frames"],
        validate=validate.Range(min=2),
        metadata={'description': 'Fixed sequence length L.'}
    )

    bins = fields.Int(
        load_default=configs.DEFAULTS["features"]["bins"],
        validate=validate.Range(min=2),
        metadata={'description': 'Histogram bins M per angle.'}
    )


class EvaluateArgsSchema(FeaturizeArgsSchema):
    """
    Options to evaluate a classifier under leave-one-subject-out
    """

    representation = fields.Str(
        load_default=None,
        validate=validate.OneOf(REPRESENTATIONS),
        metadata={
            'enum': REPRESENTATIONS,
            'description': 'Histogram descriptor, joint-angle sequence P '
                           'or 2D joint sequence Q. Defaults to P for the '
                           'LSTM classifiers, histogram otherwise.'
        }
    )

    task = fields.Str(
        load_default="gender",
        validate=validate.OneOf(TASKS),
        metadata={'enum': TASKS, 'description': 'Classification task.'}
    )

    train = fields.Str(
        load_default="real+sim",
        validate=validate.OneOf(CONDITIONS),
        metadata={
            'enum': CONDITIONS,
            'description': 'Training condition; test folds always hold '
                           'real trials only.'
        }
    )

    classifier = fields.Str(
        load_default="esknn",
        validate=validate.OneOf(CLASSIFIERS),
        metadata={'enum': CLASSIFIERS, 'description': 'Classifier.'}
    )

    scale_sweep = fields.Bool(
        load_default=False,
        metadata={'description': 'Add one real+sim row per nested scale '
                                 'range around 1.0.'}
    )

    balanced = fields.Bool(
        load_default=False,
        metadata={'description': 'Report class-balanced accuracy instead '
                                 'of support-weighted accuracy.'}
    )

    @validates_schema
    def validate_representation(self, data, **kwargs):
        if data.get("classifier") in SEQUENCE_CLASSIFIERS and \
                data.get("representation") == "histogram":
            raise ValidationError(
                "LSTM classifiers need a sequence representation (P or Q).")

    @post_load
    def default_representation(self, data, **kwargs):
        if data.get("representation") is None:
            sequence = data["classifier"] in SEQUENCE_CLASSIFIERS
            data["representation"] = "P" if sequence else "histogram"
        return data


class ReportArgsSchema(RunArgsSchema):
    """
    Options to merge evaluation reports into one table
    """

    reports = fields.List(
        fields.Str(),
        required=True,
        metadata={'description': 'Report documents (JSON) to merge.'}
    )


class CohortArgsSchema(RunArgsSchema):
    """
    Options to write the bundled synthetic cohort
    """

    subjects = fields.Int(
        load_default=20,
        validate=validate.Range(min=2),
        metadata={'description': 'Number of subjects.'}
    )

    trials_per_subject = fields.Int(
        load_default=3,
        validate=validate.Range(min=1),
        metadata={'description': 'Real-tagged trials per subject.'}
    )

    noise_deg = fields.Float(
        load_default=2.0,
        validate=validate.Range(min=0.0),
        metadata={'description': 'Joint-angle noise injected in every '
                                 'trial (deg).'}
    )


class IngestArgsSchema(RunArgsSchema):
    """
    Options to build a cohort from motion-capture joint positions
    """

    capture = fields.Str(
        required=True,
        metadata={'description': 'Capture document (JSON) with a static '
                                 'pose and walking trials per subject.'}
    )


COMMAND_SCHEMAS = {
    "scale": ScaleArgsSchema,
    "synth": SynthArgsSchema,
    "project": ProjectArgsSchema,
    "featurize": FeaturizeArgsSchema,
    "evaluate": EvaluateArgsSchema,
    "report": ReportArgsSchema,
    "cohort": CohortArgsSchema,
    "ingest": IngestArgsSchema,
}
