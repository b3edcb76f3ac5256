# -*- coding: utf-8 -*-
"""
Gait data augmentation: scale every subject's model by a family of factors
and synthesize one walking trial per (scale factor, velocity) job.

Jobs share nothing and run on a joblib pool; results are put back in
trial_id order before anything is written. A failed solve is logged and
recorded, never fatal to the batch.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import (
    Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple,
)

from joblib import Parallel, delayed
import numpy as np
from tqdm import tqdm

from gaitforge import configs
from gaitforge.dynamics import (
    ContactParams, NonFiniteState, SingularConfiguration,
)
from gaitforge.misc import (
    GaitForgeError, PreconditionViolation, derive_seed, require,
)
from gaitforge.model import (
    AnthropometricProfile, SCALE_GUARD, build_model, scale_model,
    scale_range,
)
from gaitforge.trajopt import (
    CollocationOptions, GaitProblem, NoConvergence, ShootingOptions,
    solve_collocation, solve_shooting,
)
from gaitforge.trials import GaitTrial

logger = logging.getLogger(__name__)
logger.setLevel(configs.LOG_LEVEL)

SPEED_POLICIES = ("per_trial", "cohort_mean")
MODES = ("sim_only", "real_plus_sim")


class EmptyCohort(GaitForgeError):
    """Raised when augmentation is asked for without any profile."""
    pass


@dataclass(frozen=True)
class AugmentationPlan:
    scale_factors: Tuple[float, ...] = (0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3)
    duration_s: float = 2.0
    speed_policy: str = "per_trial"
    views_deg: Optional[Tuple[float, ...]] = None
    default_speed_mps: float = 1.3

    def __post_init__(self):
        require(len(self.scale_factors) > 0, "no scale factors planned")
        for s in self.scale_factors:
            require(SCALE_GUARD[0] <= s <= SCALE_GUARD[1],
                    f"scale factor {s} outside {SCALE_GUARD}")
        require(self.duration_s > 0, "duration must be positive")
        require(self.speed_policy in SPEED_POLICIES,
                f"speed policy must be one of {SPEED_POLICIES}")

    @classmethod
    def from_settings(cls, values: Optional[Mapping[str, Any]] = None,
                      **overrides):
        values = dict(configs.DEFAULTS["augmentation"] if values is None
                      else values)
        values.update({k: v for k, v in overrides.items() if v is not None})
        views = values.get("views_deg")
        return cls(scale_factors=tuple(float(s)
                                       for s in values["scale_factors"]),
                   duration_s=float(values["duration_s"]),
                   speed_policy=str(values["speed_policy"]),
                   views_deg=None if views is None else tuple(views),
                   default_speed_mps=float(values["default_speed_mps"]))


@dataclass(frozen=True)
class SynthesisJob:
    subject_id: str
    scale_factor: float
    speed_mps: float
    velocity_index: int
    trial_id: str
    seed: int


@dataclass(frozen=True)
class SynthesisFailure:
    trial_id: str
    subject_id: str
    scale_factor: float
    speed_mps: float
    reason: str
    report: Optional[Dict[str, Any]] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"trial_id": self.trial_id, "subject_id": self.subject_id,
                "scale_factor": self.scale_factor,
                "speed_mps": self.speed_mps, "reason": self.reason,
                "report": self.report}


@dataclass
class AugmentedDataset:
    trials: List[GaitTrial]
    failures: List[SynthesisFailure] = field(default_factory=list)
    planned: List[SynthesisJob] = field(default_factory=list)

    @property
    def failure_rate(self) -> float:
        return len(self.failures) / len(self.planned) if self.planned else 0.0

    def manifest(self) -> Dict[str, Any]:
        """Planned against completed trials of the batch."""
        done = {t.trial_id for t in self.trials if t.provenance == "simulated"}
        return {
            "planned": [job.trial_id for job in self.planned],
            "completed": sorted(done),
            "failed": [failure.to_dict() for failure in self.failures],
            "real": sorted(t.trial_id for t in self.trials
                           if t.provenance == "real"),
        }


def parse_scales(text: str) -> Tuple[float, ...]:
    """Scale factors from ``start:step:stop`` or a comma separated list."""
    try:
        if ":" in text:
            start, step, stop = (float(x) for x in text.split(":"))
            require(step > 0 and stop >= start,
                    f"scale range '{text}' is empty")
            return scale_range(start, step, stop)
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as e:
        if isinstance(e, GaitForgeError):
            raise
        raise PreconditionViolation(f"cannot parse scales '{text}'") from e


def job_trial_id(subject_id: str, s: float, velocity_index: int) -> str:
    return f"{subject_id}_s{s:.2f}_v{velocity_index:03d}"


def plan_jobs(profile: AnthropometricProfile, plan: AugmentationPlan,
              velocities: Sequence[float],
              base_seed: int = 0) -> List[SynthesisJob]:
    """One job per (scale factor, velocity), sorted by trial_id."""
    require(len(velocities) > 0, f"{profile.subject_id}: no velocities")
    jobs = []
    for s in plan.scale_factors:
        for index, v in enumerate(velocities):
            trial_id = job_trial_id(profile.subject_id, s, index)
            jobs.append(SynthesisJob(
                subject_id=profile.subject_id, scale_factor=float(s),
                speed_mps=float(v), velocity_index=index, trial_id=trial_id,
                seed=derive_seed(base_seed, trial_id)))
    return sorted(jobs, key=lambda job: job.trial_id)


def synthesize_trial(profile: AnthropometricProfile, s: float, v: float,
                     T: float = 2.0, solver: str = "collocation",
                     seed: int = 0, trial_id: str = "",
                     problem_settings: Optional[Mapping[str, Any]] = None,
                     contact: Optional[ContactParams] = None,
                     solver_options=None) -> GaitTrial:
    """
    Build the subject's model, scale it by ``s`` and solve for a walking
    trial at ``v`` m/s over ``T`` seconds.

    The trial carries the subject's labels, the requested speed and, under
    ``solve``, the solve report.

    Raises:
        NoConvergence: with the (subject, s, v) context in its message
    """
    model = scale_model(build_model(profile), s)
    problem = GaitProblem.from_settings(model, target_speed_mps=v,
                                        duration_s=T,
                                        problem=problem_settings)
    if contact is not None:
        problem = replace(problem, contact=contact)

    try:
        if solver == "collocation":
            trial, report = solve_collocation(
                problem, seed=seed,
                options=solver_options or CollocationOptions.from_settings(),
                trial_id=trial_id)
        elif solver == "shooting":
            trial, report = solve_shooting(
                problem,
                es_config=solver_options or ShootingOptions.from_settings(),
                seed=seed, trial_id=trial_id)
        else:
            raise ValueError(f"unknown solver '{solver}'")
    except NoConvergence as e:
        raise NoConvergence(f"{profile.subject_id} s={s:g} v={v:g}: {e}",
                            e.report, e.solution) from e

    return replace(trial,
                   trial_id=trial_id or job_trial_id(profile.subject_id, s, 0),
                   subject_id=profile.subject_id,
                   labels=dict(profile.labels),
                   speed_mps=float(v),
                   extra={"solve": report.to_dict()})


def _run_job(job: SynthesisJob, profile: AnthropometricProfile,
             plan: AugmentationPlan, solver: str,
             synthesize: Callable[..., GaitTrial], options: Mapping):
    try:
        trial = synthesize(profile, job.scale_factor, job.speed_mps,
                           plan.duration_s, solver, seed=job.seed,
                           trial_id=job.trial_id, **options)
        return trial, None
    except (NoConvergence, NonFiniteState, SingularConfiguration) as e:
        report = getattr(e, "report", None)
        logger.warning(f"Synthesis of '{job.trial_id}' failed: {e}")
        return None, SynthesisFailure(
            trial_id=job.trial_id, subject_id=job.subject_id,
            scale_factor=job.scale_factor, speed_mps=job.speed_mps,
            reason=f"{type(e).__name__}: {e}",
            report=None if report is None else report.to_dict())


def _run_jobs(jobs: Sequence[Tuple[SynthesisJob, AnthropometricProfile]],
              plan: AugmentationPlan, solver: str,
              synthesize: Callable[..., GaitTrial], n_jobs: int,
              options: Mapping
              ) -> Tuple[List[GaitTrial], List[SynthesisFailure]]:
    results = Parallel(n_jobs=n_jobs)(
        delayed(_run_job)(job, profile, plan, solver, synthesize, options)
        for job, profile in tqdm(jobs, desc="synthesis", unit="trial",
                                 disable=len(jobs) < 2))
    trials = sorted((t for t, _ in results if t is not None),
                    key=lambda t: t.trial_id)
    failures = sorted((f for _, f in results if f is not None),
                      key=lambda f: f.trial_id)
    return trials, failures


def augment_subject(profile: AnthropometricProfile, plan: AugmentationPlan,
                    trial_velocities: Sequence[float],
                    solver: str = "collocation", base_seed: int = 0,
                    synthesize: Callable[..., GaitTrial] = synthesize_trial,
                    n_jobs: int = 1, **options
                    ) -> Tuple[List[GaitTrial], List[SynthesisFailure]]:
    """
    Synthesize one trial per (scale factor, velocity) of a subject.

    Returns:
        the synthesized trials and the failed jobs, both by trial_id
    """
    jobs = plan_jobs(profile, plan, trial_velocities, base_seed)
    return _run_jobs([(job, profile) for job in jobs], plan, solver,
                     synthesize, n_jobs, options)


def subject_velocities(profiles: Sequence[AnthropometricProfile],
                       real_trials: Sequence[GaitTrial],
                       plan: AugmentationPlan) -> Dict[str, List[float]]:
    """
    Velocities to synthesize per subject.

    ``per_trial`` copies the speed of each real trial of the subject and
    falls back to the cohort mean for subjects without any; ``cohort_mean``
    uses the mean real speed (or the plan default) for everyone.
    """
    speeds: Dict[str, List[float]] = {}
    for trial in sorted(real_trials, key=lambda t: t.trial_id):
        if trial.provenance == "real" and trial.speed_mps is not None:
            speeds.setdefault(trial.subject_id, []).append(
                float(trial.speed_mps))
    every = [v for values in speeds.values() for v in values]
    cohort_mean = float(np.mean(every)) if every else plan.default_speed_mps

    velocities = {}
    for profile in profiles:
        own = speeds.get(profile.subject_id)
        if plan.speed_policy == "per_trial" and own:
            velocities[profile.subject_id] = own
        else:
            velocities[profile.subject_id] = [cohort_mean]
    return velocities


def augment_dataset(profiles: Sequence[AnthropometricProfile],
                    plan: AugmentationPlan, mode: str = "real_plus_sim",
                    real_trials: Sequence[GaitTrial] = (),
                    solver: str = "collocation", base_seed: int = 0,
                    synthesize: Callable[..., GaitTrial] = synthesize_trial,
                    n_jobs: int = 1, **options) -> AugmentedDataset:
    """
    Augment a cohort; ``real_plus_sim`` keeps the real trials (each once)
    next to the synthesized ones, ``sim_only`` returns synthesized trials.

    Raises:
        EmptyCohort: if ``profiles`` is empty
    """
    if not profiles:
        raise EmptyCohort("no anthropometric profiles to augment")
    require(mode in MODES, f"mode must be one of {MODES}")

    velocities = subject_velocities(profiles, real_trials, plan)
    jobs = []
    for profile in sorted(profiles, key=lambda p: p.subject_id):
        jobs.extend((job, profile) for job in plan_jobs(
            profile, plan, velocities[profile.subject_id], base_seed))
    simulated, failures = _run_jobs(jobs, plan, solver, synthesize, n_jobs,
                                    options)

    trials = list(simulated)
    if mode == "real_plus_sim":
        real = {t.trial_id: t for t in real_trials if t.provenance == "real"}
        trials.extend(real.values())
    trials.sort(key=lambda t: t.trial_id)

    logger.info(f"Augmented {len(profiles)} subject(s): {len(simulated)} of "
                f"{len(jobs)} planned trial(s) synthesized, "
                f"{len(failures)} failed")
    return AugmentedDataset(trials=trials, failures=failures,
                            planned=[job for job, _ in jobs])


def scale_subsets(factors: Sequence[float]) -> List[Tuple[float, ...]]:
    """
    Nested scale ranges symmetric around 1.0, narrowest first, e.g.
    (1.0,), (0.9, 1.0, 1.1), ... for the default factors.
    """
    factors = sorted(set(round(float(s), 10) for s in factors))
    radii = sorted(set(round(abs(s - 1.0), 10) for s in factors))
    subsets = []
    for radius in radii:
        subset = tuple(s for s in factors if round(abs(s - 1.0), 10) <= radius)
        if subset not in subsets:
            subsets.append(subset)
    return subsets
