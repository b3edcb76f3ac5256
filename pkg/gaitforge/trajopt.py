# -*- coding: utf-8 -*-
"""
Gait optimal control problem and its two solvers.

``solve_collocation`` transcribes the problem with trapezoidal collocation
and solves the resulting program with an augmented Lagrangian outer loop
around scipy's L-BFGS-B. ``solve_shooting`` parametrizes the joint torques
as periodic cubic splines, rolls the model out with RK4 and optimizes the
spline knots with CMA-ES.

Decision vector layout: ``z = [x_0 .. x_{N-1}, u_0 .. u_{N-1}]`` with
``x_k = [q_k, qdot_k]`` (18 values) and ``u_k`` the 6 joint torques (N m).
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Mapping, Optional, Tuple

import cma
import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize
from scipy.stats import rankdata
import torch

from gaitforge import configs
from gaitforge.dynamics import (
    ContactParams, DTYPE, KEYPOINT_NAMES, N_COORDS, N_JOINTS,
    SingularConfiguration, check_mass_conditioning, linkage,
    standing_equilibrium, within_joint_limits,
)
from gaitforge.features import resample_fixed_length
from gaitforge.misc import GaitForgeError, require
from gaitforge.model import JOINT_NAMES, SkeletalModel
from gaitforge.trials import Frame, GaitTrial

logger = logging.getLogger(__name__)
logger.setLevel(configs.LOG_LEVEL)

N_STATE = 2 * N_COORDS
N_PER_KNOT = N_STATE + N_JOINTS
SPEED_RANGE = (0.4, 2.5)
FD_STEP_RANGE = (1e-8, 1e-4)
# L-BFGS-B stopping tolerances of the inner minimizations
INNER_FTOL = 1e-15
INNER_GTOL = 1e-8


class NoConvergence(GaitForgeError):
    """
    Raised when a solver ends without meeting its convergence contract.

    ``report`` and the final decision vector (or genome) are attached.
    """

    def __init__(self, message: str, report: "SolveReport" = None,
                 solution: Optional[np.ndarray] = None):
        super().__init__(message)
        self.report = report
        self.solution = solution


@dataclass(frozen=True)
class ObjectiveWeights:
    effort: float = 1.0
    speed_tracking: float = 100.0
    head_stability: float = 10.0


@dataclass(frozen=True)
class GaitProblem:
    model: SkeletalModel
    duration_s: float = 2.0
    target_speed_mps: float = 1.3
    num_knots: int = 41
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    tau_max: float = 250.0
    contact: ContactParams = field(default_factory=ContactParams)

    def __post_init__(self):
        require(self.duration_s > 0, "duration_s must be positive")
        require(self.num_knots >= 11, "num_knots must be at least 11")
        require(SPEED_RANGE[0] <= self.target_speed_mps <= SPEED_RANGE[1],
                f"target speed {self.target_speed_mps} m/s outside "
                f"{SPEED_RANGE}")
        require(min(asdict(self.weights).values()) >= 0,
                "objective weights must be non-negative")
        require(self.weights.effort > 0, "effort weight must be positive")
        require(self.tau_max > 0, "tau_max must be positive")

    @classmethod
    def from_settings(cls, model: SkeletalModel,
                      target_speed_mps: Optional[float] = None,
                      duration_s: Optional[float] = None,
                      problem: Optional[Mapping[str, Any]] = None,
                      contact: Optional[Mapping[str, Any]] = None):
        values = dict(configs.DEFAULTS["problem"] if problem is None
                      else problem)
        return cls(
            model=model,
            duration_s=float(duration_s or values["duration_s"]),
            target_speed_mps=float(target_speed_mps
                                   or values["target_speed_mps"]),
            num_knots=int(values["num_knots"]),
            weights=ObjectiveWeights(
                effort=float(values["effort_weight"]),
                speed_tracking=float(values["speed_tracking_weight"]),
                head_stability=float(values["head_stability_weight"])),
            tau_max=float(values["tau_max"]),
            contact=ContactParams.from_settings(contact),
        )

    @property
    def h(self) -> float:
        return self.duration_s / (self.num_knots - 1)

    @property
    def size(self) -> int:
        return self.num_knots * N_PER_KNOT

    def knot_times(self) -> np.ndarray:
        return np.linspace(0.0, self.duration_s, self.num_knots)

    def split(self, z) -> Tuple[Any, Any]:
        """States (N, 18) and controls (N, 6) of a decision vector."""
        n = self.num_knots * N_STATE
        return (z[:n].reshape(self.num_knots, N_STATE),
                z[n:].reshape(self.num_knots, N_JOINTS))

    def stride_shift(self) -> np.ndarray:
        shift = np.zeros(N_STATE)
        shift[0] = self.target_speed_mps * self.duration_s
        return shift

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """Lower and upper bounds of z (infinite where unbounded)."""
        low = np.full((self.num_knots, N_PER_KNOT), -np.inf)
        high = np.full((self.num_knots, N_PER_KNOT), np.inf)
        stand = self.model.standing_hip_height_m
        low[:, 1], high[:, 1] = 0.5 * stand, 1.2 * stand
        low[:, 2], high[:, 2] = -0.5, 0.5
        for i, (lo, hi) in enumerate(self.model.joint_limits_rad):
            low[:, 3 + i], high[:, 3 + i] = lo, hi
        low[:, N_STATE:], high[:, N_STATE:] = -self.tau_max, self.tau_max
        X_low, U_low = low[:, :N_STATE], low[:, N_STATE:]
        X_high, U_high = high[:, :N_STATE], high[:, N_STATE:]
        return (np.concatenate([X_low.ravel(), U_low.ravel()]),
                np.concatenate([X_high.ravel(), U_high.ravel()]))

    def variable_scale(self) -> np.ndarray:
        scale = np.ones(self.size)
        scale[self.num_knots * N_STATE:] = self.tau_max
        return scale


@dataclass(frozen=True)
class CollocationOptions:
    max_outer_iterations: int = 12
    max_inner_iterations: int = 1500
    constraint_tolerance: float = 1e-3
    initial_penalty: float = 1e3
    penalty_growth: float = 10.0
    max_penalty: float = 1e8
    initial_noise_rad: float = 0.01
    velocity_scale: float = 5.0

    def __post_init__(self):
        require(self.max_outer_iterations >= 1 and
                self.max_inner_iterations >= 1,
                "collocation iteration limits must be positive")
        require(self.constraint_tolerance > 0,
                "constraint tolerance must be positive")
        require(0 < self.initial_penalty <= self.max_penalty,
                "initial penalty must lie in (0, max_penalty]")
        require(self.penalty_growth > 1, "penalty growth must exceed 1")
        require(self.velocity_scale > 0, "velocity scale must be positive")

    @classmethod
    def from_settings(cls, values: Optional[Mapping[str, Any]] = None):
        values = configs.DEFAULTS["collocation"] if values is None else values
        return cls(**values)


@dataclass(frozen=True)
class ShootingOptions:
    spline_knots: int = 8
    population_size: int = 16
    max_generations: int = 150
    sigma0: float = 0.3
    dt_s: float = 5e-3
    fall_fraction: float = 0.6
    fall_penalty: float = 1e3
    speed_tolerance: float = 0.05
    periodicity_weight: float = 1.0
    limit_weight: float = 1e3

    @classmethod
    def from_settings(cls, values: Optional[Mapping[str, Any]] = None):
        values = configs.DEFAULTS["shooting"] if values is None else values
        return cls(**values)


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    final_objective: float
    max_defect: float
    max_periodicity_violation: float
    achieved_speed_mps: float
    solver: str = "collocation"

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# --------------------------------------------------------------------------
# transcription
# --------------------------------------------------------------------------
def _defects_tensor(problem: GaitProblem, z: torch.Tensor) -> torch.Tensor:
    X, U = problem.split(z)
    check_mass_conditioning(problem.model, X[:, :N_COORDS].detach().numpy())
    try:
        F = linkage(problem.model).derivative(X, U, problem.contact)
    except torch.linalg.LinAlgError as e:
        raise SingularConfiguration(f"mass matrix solve failed: {e}") from e
    return X[1:] - X[:-1] - 0.5 * problem.h * (F[1:] + F[:-1])


def _periodicity_tensor(problem: GaitProblem, z: torch.Tensor):
    X, _ = problem.split(z)
    return X[-1] - X[0] - torch.as_tensor(problem.stride_shift(), dtype=DTYPE)


def _constraints_tensor(problem: GaitProblem, z: torch.Tensor):
    return torch.cat((_defects_tensor(problem, z).reshape(-1),
                      _periodicity_tensor(problem, z)))


def _as_tensor(z, requires_grad=False) -> torch.Tensor:
    return torch.tensor(np.asarray(z, dtype=float), dtype=DTYPE,
                        requires_grad=requires_grad)


def transcribe_defects(problem: GaitProblem, z) -> np.ndarray:
    """Trapezoidal defects, shape (N-1, 18)."""
    require(np.all(np.isfinite(z)), "decision vector must be finite")
    with torch.no_grad():
        return _defects_tensor(problem, _as_tensor(z)).numpy()


def defect_jvp(problem: GaitProblem, z, dz) -> np.ndarray:
    """Jacobian-vector product of the flattened defects along ``dz``."""
    _, product = torch.autograd.functional.jvp(
        lambda v: _defects_tensor(problem, v).reshape(-1),
        _as_tensor(z), _as_tensor(dz))
    return product.numpy()


def periodicity_residuals(problem: GaitProblem, z) -> np.ndarray:
    """q(T) - q(0) - [vT, 0, ...] and qdot(T) - qdot(0)."""
    X, _ = problem.split(np.asarray(z, dtype=float))
    return X[-1] - X[0] - problem.stride_shift()


def mean_speed(problem: GaitProblem, z) -> float:
    X, _ = problem.split(np.asarray(z, dtype=float))
    return float((X[-1, 0] - X[0, 0]) / problem.duration_s)


def objective_eval(problem: GaitProblem, z) -> float:
    """
    Torque effort + speed tracking + pelvis pitch cost.

    ``w_eff h sum (tau / tau_max)^2 + w_speed (vbar - v)^2 + w_head h sum
    pitch^2`` with ``vbar`` the mean forward pelvis speed over the cycle.
    """
    X, U = problem.split(np.asarray(z, dtype=float))
    w, h = problem.weights, problem.h
    effort = h * np.sum((U / problem.tau_max) ** 2)
    speed_error = mean_speed(problem, z) - problem.target_speed_mps
    pitch = h * np.sum(X[:, 2] ** 2)
    return float(w.effort * effort + w.speed_tracking * speed_error ** 2
                 + w.head_stability * pitch)


def objective_gradient(problem: GaitProblem, z) -> np.ndarray:
    """Hand-coded gradient of objective_eval."""
    z = np.asarray(z, dtype=float)
    X, U = problem.split(z)
    w, h = problem.weights, problem.h
    gX, gU = np.zeros_like(X), np.zeros_like(U)
    gU[:] = 2.0 * w.effort * h * U / problem.tau_max ** 2
    speed_error = mean_speed(problem, z) - problem.target_speed_mps
    d_speed = 2.0 * w.speed_tracking * speed_error / problem.duration_s
    gX[-1, 0] += d_speed
    gX[0, 0] -= d_speed
    gX[:, 2] = 2.0 * w.head_stability * h * X[:, 2]
    return np.concatenate([gX.ravel(), gU.ravel()])


def check_gradients(problem: GaitProblem, z, h_fd: float = 1e-6,
                    seed: int = 0) -> float:
    """
    Largest relative error of the analytic derivatives against central
    finite differences: the objective gradient, and the defect Jacobian
    applied to a random direction.
    """
    require(FD_STEP_RANGE[0] <= h_fd <= FD_STEP_RANGE[1],
            f"finite-difference step {h_fd} outside {FD_STEP_RANGE}")
    z = np.asarray(z, dtype=float)
    require(np.all(np.isfinite(z)), "decision vector must be finite")

    analytic = objective_gradient(problem, z)
    numeric = np.empty_like(z)
    for i in range(z.size):
        step = np.zeros_like(z)
        step[i] = h_fd
        numeric[i] = (objective_eval(problem, z + step)
                      - objective_eval(problem, z - step)) / (2.0 * h_fd)
    objective_error = (np.linalg.norm(numeric - analytic)
                       / max(np.linalg.norm(analytic), 1e-12))

    direction = np.random.default_rng(seed).standard_normal(z.size)
    direction /= np.linalg.norm(direction)
    jvp = defect_jvp(problem, z, direction)
    fd = (transcribe_defects(problem, z + h_fd * direction).ravel()
          - transcribe_defects(problem, z - h_fd * direction).ravel()) / (
        2.0 * h_fd)
    defect_error = np.linalg.norm(fd - jvp) / max(np.linalg.norm(jvp), 1e-12)

    logger.debug(f"Gradient check: objective {objective_error:.2e}, "
                 f"defects {defect_error:.2e}")
    return float(max(objective_error, defect_error))


# --------------------------------------------------------------------------
# trials from solutions
# --------------------------------------------------------------------------
def trial_from_states(problem: GaitProblem, X: np.ndarray, times: np.ndarray,
                      solver: str, trial_id: str = "",
                      speed_mps: Optional[float] = None) -> GaitTrial:
    """Sample joint angles and forward kinematics at every state."""
    with torch.no_grad():
        points = linkage(problem.model).keypoints(
            torch.as_tensor(X[:, :N_COORDS], dtype=DTYPE)).numpy()
    frames = []
    for k, t in enumerate(times):
        angles = {name: float(np.degrees(X[k, 3 + i]))
                  for i, name in enumerate(JOINT_NAMES)}
        joints = {name: [float(v) for v in points[k, j]]
                  for j, name in enumerate(KEYPOINT_NAMES)}
        frames.append(Frame(t=float(t), angles_deg=angles, joints_3d=joints))
    return GaitTrial(
        trial_id=trial_id or f"{problem.model.source_subject}_{solver}",
        subject_id=problem.model.source_subject,
        frames=tuple(frames),
        provenance="simulated",
        solver=solver,
        scale_factor=problem.model.scale_factor,
        duration_s=problem.duration_s,
        speed_mps=speed_mps,
    )


def joint_angle_rms_difference(trial_a: GaitTrial, trial_b: GaitTrial,
                               frames: int = 100) -> float:
    """RMS joint-angle difference (deg) after resampling both trials."""
    a = resample_fixed_length(trial_a.angle_matrix(), frames)
    b = resample_fixed_length(trial_b.angle_matrix(), frames)
    return float(np.sqrt(np.mean((a - b) ** 2)))


# --------------------------------------------------------------------------
# direct collocation
# --------------------------------------------------------------------------
def initial_guess(problem: GaitProblem, noise_rad: float = 0.0,
                  seed: int = 0) -> np.ndarray:
    """Standing pose at every knot, pelvis advancing at v, zero torques."""
    stance, _ = standing_equilibrium(problem.model, problem.contact)
    times = problem.knot_times()
    X = np.tile(stance.as_vector(), (problem.num_knots, 1))
    X[:, 0] = problem.target_speed_mps * times
    X[:, N_COORDS] = problem.target_speed_mps
    if noise_rad > 0:
        rng = np.random.default_rng(seed)
        X[:, 3:N_COORDS] += rng.normal(0.0, noise_rad,
                                       size=(problem.num_knots, N_JOINTS))
    U = np.zeros((problem.num_knots, N_JOINTS))
    low, high = problem.bounds()
    return np.clip(np.concatenate([X.ravel(), U.ravel()]), low, high)


def constraint_scale(problem: GaitProblem,
                     options: CollocationOptions) -> np.ndarray:
    """
    Divisors of the stacked defect and periodicity constraints.

    Coordinate rows keep their units (m, rad); velocity rows are divided by
    ``options.velocity_scale`` so every row is in normalized state units.
    """
    row = np.ones(N_STATE)
    row[N_COORDS:] = options.velocity_scale
    return np.tile(row, problem.num_knots)


def next_penalty(penalty: float, violation: float,
                 options: CollocationOptions) -> float:
    """Penalty of the next outer round, raised while it misses tolerance."""
    if violation < options.constraint_tolerance:
        return penalty
    return min(penalty * options.penalty_growth, options.max_penalty)


def _violations(c: np.ndarray) -> Tuple[float, float]:
    """Largest normalized defect and periodicity residual."""
    return (float(np.max(np.abs(c[:-N_STATE]))),
            float(np.max(np.abs(c[-N_STATE:]))))


def collocate(problem: GaitProblem, seed: int = 0,
              options: Optional[CollocationOptions] = None
              ) -> Tuple[np.ndarray, SolveReport]:
    """
    Trapezoidal direct collocation of the gait problem.

    Every outer round minimizes the augmented Lagrangian of the normalized
    constraints with L-BFGS-B, then updates the multipliers and, unless
    the constraints are met, multiplies the penalty by ``penalty_growth``.

    Args:
        problem: the gait optimal control problem
        seed: seeds the perturbation of the initial guess
        options: solver settings, ``[collocation]`` by default

    Returns:
        the last decision vector and its report, converged or not
    """
    options = options or CollocationOptions.from_settings()
    scale = problem.variable_scale()
    low, high = problem.bounds()
    scaled_bounds = [(None if not np.isfinite(lo) else lo / s,
                      None if not np.isfinite(hi) else hi / s)
                     for lo, hi, s in zip(low, high, scale)]
    divisor = torch.as_tensor(constraint_scale(problem, options),
                              dtype=DTYPE)

    def constraints(zt: torch.Tensor) -> torch.Tensor:
        return _constraints_tensor(problem, zt) / divisor

    z = initial_guess(problem, options.initial_noise_rad, seed)
    multipliers = np.zeros(divisor.numel())
    penalty = options.initial_penalty
    iterations = 0

    def lagrangian(y):
        zt = _as_tensor(y * scale, requires_grad=True)
        c_t = constraints(zt)
        c = c_t.detach().numpy()
        (jac_c,) = torch.autograd.grad(c_t, zt, grad_outputs=torch.as_tensor(
            multipliers + penalty * c, dtype=DTYPE))
        z_now = y * scale
        value = (objective_eval(problem, z_now) + multipliers @ c
                 + 0.5 * penalty * c @ c)
        grad = objective_gradient(problem, z_now) + jac_c.numpy()
        return value, grad * scale

    with torch.no_grad():
        c = constraints(_as_tensor(z)).numpy()
    for outer in range(options.max_outer_iterations):
        result = minimize(lagrangian, z / scale, jac=True, method="L-BFGS-B",
                          bounds=scaled_bounds,
                          options={"maxiter": options.max_inner_iterations,
                                   "ftol": INNER_FTOL, "gtol": INNER_GTOL})
        z = result.x * scale
        iterations += int(result.nit)
        with torch.no_grad():
            c = constraints(_as_tensor(z)).numpy()
        violation = float(np.max(np.abs(c)))
        logger.debug(f"Collocation outer {outer}: objective "
                     f"{objective_eval(problem, z):.4e}, violation "
                     f"{violation:.2e}, penalty {penalty:.1e}")
        if violation < options.constraint_tolerance:
            break
        multipliers = multipliers + penalty * c
        penalty = next_penalty(penalty, violation, options)

    max_defect, max_periodic = _violations(c)
    report = SolveReport(
        converged=bool(max_defect < options.constraint_tolerance
                       and max_periodic < options.constraint_tolerance),
        iterations=iterations,
        final_objective=objective_eval(problem, z),
        max_defect=max_defect,
        max_periodicity_violation=max_periodic,
        achieved_speed_mps=max(mean_speed(problem, z), 0.0),
        solver="collocation",
    )
    logger.info(f"Collocation solve of '{problem.model.source_subject}' "
                f"(s={problem.model.scale_factor:g}, "
                f"v={problem.target_speed_mps:g}): converged="
                f"{report.converged}, defect {max_defect:.2e}")
    return z, report


def solve_collocation(problem: GaitProblem, seed: int = 0,
                      options: Optional[CollocationOptions] = None,
                      trial_id: str = "") -> Tuple[GaitTrial, SolveReport]:
    """
    Solve the gait problem by trapezoidal direct collocation.

    Returns:
        trial sampled at the knots and the solve report

    Raises:
        NoConvergence: carrying the report and the last decision vector
    """
    z, report = collocate(problem, seed, options)
    if not report.converged:
        raise NoConvergence(
            f"collocation did not converge: max defect "
            f"{report.max_defect:.2e}, periodicity "
            f"{report.max_periodicity_violation:.2e}", report, z)
    X, _ = problem.split(z)
    trial = trial_from_states(problem, X, problem.knot_times(), "collocation",
                              trial_id, speed_mps=report.achieved_speed_mps)
    return trial, report


# --------------------------------------------------------------------------
# single shooting
# --------------------------------------------------------------------------
def rank_fitness(costs) -> np.ndarray:
    """
    Centred rank shaping of a generation's costs, in [-0.5, 0.5].

    Lower cost gives lower fitness; non-finite costs rank last; equal costs
    share their rank, so a degenerate generation maps to all zeros.
    """
    costs = np.asarray(costs, dtype=float)
    if costs.size < 2:
        return np.zeros_like(costs)
    worst = np.nanmax(np.where(np.isfinite(costs), costs, -np.inf))
    finite_worst = 0.0 if not np.isfinite(worst) else worst
    safe = np.where(np.isfinite(costs), costs,
                    finite_worst + 1.0 + np.abs(finite_worst))
    ranks = rankdata(safe, method="average")
    return (ranks - ranks.mean()) / (costs.size - 1)


class _ShootingRollout:
    """Batched rollouts of torque-spline genomes."""

    def __init__(self, problem: GaitProblem, options: ShootingOptions,
                 base_state: Optional[np.ndarray] = None):
        self.problem = problem
        self.options = options
        self.link = linkage(problem.model)
        if base_state is None:
            stance, _ = standing_equilibrium(problem.model, problem.contact)
            base_state = stance.as_vector()
            base_state[N_COORDS] = problem.target_speed_mps
        self.base_state = np.asarray(base_state, dtype=float)
        self.n_steps = int(round(problem.duration_s / options.dt_s))
        self.dt = problem.duration_s / self.n_steps
        self.step_times = np.arange(self.n_steps) * self.dt
        self.knot_times = np.linspace(0.0, problem.duration_s,
                                      options.spline_knots + 1)
        self.fall_height = (options.fall_fraction
                            * problem.model.standing_hip_height_m)
        limits = np.array(problem.model.joint_limits_rad, dtype=float)
        self.low = torch.as_tensor(limits[:, 0], dtype=DTYPE)
        self.high = torch.as_tensor(limits[:, 1], dtype=DTYPE)

    @property
    def genome_size(self) -> int:
        return self.options.spline_knots * N_JOINTS + 2 * N_JOINTS

    def genome_from_torques(self, times: np.ndarray,
                            U: np.ndarray) -> np.ndarray:
        """Genome whose splines pass through the torques U (N, 6)."""
        knots = np.stack([np.interp(self.knot_times[:-1], times, U[:, j])
                          for j in range(N_JOINTS)], axis=1)
        knots = np.clip(knots / self.problem.tau_max, -1.0, 1.0)
        return np.concatenate([knots.ravel(), np.zeros(2 * N_JOINTS)])

    def torques(self, genomes: np.ndarray) -> np.ndarray:
        """Torques (steps, B, 6) from periodic splines, in N m."""
        P = self.options.spline_knots
        knots = genomes[:, :P * N_JOINTS].reshape(-1, P, N_JOINTS)
        knots = np.concatenate([knots, knots[:, :1]], axis=1)
        spline = CubicSpline(self.knot_times, np.moveaxis(knots, 1, 0),
                             bc_type="periodic", axis=0)
        return np.clip(spline(self.step_times), -1.0, 1.0) * \
            self.problem.tau_max

    def initial_states(self, genomes: np.ndarray) -> np.ndarray:
        P = self.options.spline_knots
        x0 = np.tile(self.base_state, (genomes.shape[0], 1))
        x0[:, 3:N_COORDS] += genomes[:, P * N_JOINTS:P * N_JOINTS + N_JOINTS]
        x0[:, N_COORDS + 3:] += genomes[:, P * N_JOINTS + N_JOINTS:]
        return x0

    def run(self, genomes: np.ndarray, record: bool = False):
        """
        Roll every genome out; fallen or diverged genomes are frozen.

        Returns costs (B,), fallen flags (B,), final states (B, 18) and,
        when ``record`` is set, the state history (steps + 1, B, 18).
        """
        problem, options = self.problem, self.options
        genomes = np.atleast_2d(genomes)
        tau = torch.as_tensor(self.torques(genomes), dtype=DTYPE)
        x = torch.as_tensor(self.initial_states(genomes), dtype=DTYPE)
        x0 = x.clone()
        batch = x.shape[0]
        fallen = torch.zeros(batch, dtype=torch.bool)
        fall_step = torch.full((batch,), self.n_steps, dtype=torch.long)
        effort = torch.zeros(batch, dtype=DTYPE)
        pitch = torch.zeros(batch, dtype=DTYPE)
        excess = torch.zeros(batch, dtype=DTYPE)
        history = [x.clone()] if record else None

        with torch.no_grad():
            for step in range(self.n_steps):
                active = ~fallen
                angles = x[:, 3:N_COORDS]
                beyond = (torch.relu(angles - self.high)
                          + torch.relu(self.low - angles))
                effort += active * self.dt * (
                    (tau[step] / problem.tau_max) ** 2).sum(dim=1)
                pitch += active * self.dt * x[:, 2] ** 2
                excess += active * self.dt * (beyond ** 2).sum(dim=1)
                try:
                    x_next = self.link.rk4(x, tau[step], self.dt,
                                           problem.contact)
                except torch.linalg.LinAlgError:
                    x_next = torch.full_like(x, float("nan"))
                bad = ~torch.isfinite(x_next).all(dim=1)
                bad |= x_next[:, 1] < self.fall_height
                newly = bad & active
                fall_step[newly] = step
                fallen |= newly
                x = torch.where(fallen[:, None], x, x_next)
                if record:
                    history.append(x.clone())

        w = problem.weights
        speed = (x[:, 0] - x0[:, 0]) / problem.duration_s
        shift = torch.as_tensor(problem.stride_shift(), dtype=DTYPE)
        periodic = ((x - x0 - shift) ** 2).sum(dim=1)
        costs = (w.effort * effort
                 + w.speed_tracking * (speed - problem.target_speed_mps) ** 2
                 + w.head_stability * pitch
                 + options.periodicity_weight * periodic
                 + options.limit_weight * excess)
        remaining = 1.0 - fall_step.to(DTYPE) / self.n_steps
        costs = torch.where(fallen, options.fall_penalty * (1.0 + remaining)
                            + w.effort * effort, costs)
        out = (costs.numpy(), fallen.numpy(), x.numpy())
        if record:
            return out + (torch.stack(history).numpy(),)
        return out


def solve_shooting(problem: GaitProblem, spline_knots: Optional[int] = None,
                   es_config: Optional[ShootingOptions] = None,
                   seed: int = 0, trial_id: str = "",
                   warm_start: Optional[np.ndarray] = None
                   ) -> Tuple[GaitTrial, SolveReport]:
    """
    Solve the gait problem by single shooting with CMA-ES.

    Args:
        problem: the gait optimal control problem
        spline_knots: knots P per joint torque spline (>= 4), overrides
            ``es_config.spline_knots``
        es_config: evolution strategy settings, ``[shooting]`` by default
        seed: CMA-ES seed
        warm_start: collocation decision vector of the same problem; its
            first state starts every rollout and its torques centre the
            search. Standing start with zero torques otherwise.

    Raises:
        NoConvergence: when the best rollout fell, left the joint limits
            or missed the speed tolerance; the best genome is attached
    """
    options = es_config or ShootingOptions.from_settings()
    if spline_knots is not None:
        options = ShootingOptions(**{**asdict(options),
                                     "spline_knots": int(spline_knots)})
    require(options.spline_knots >= 4, "at least 4 spline knots required")
    require(options.population_size >= 8, "population size must be >= 8")
    require(0 < options.dt_s <= 5e-3, "shooting dt must be in (0, 5e-3]")

    if warm_start is None:
        rollout = _ShootingRollout(problem, options)
        mean = np.zeros(rollout.genome_size)
    else:
        require(np.size(warm_start) == problem.size,
                "warm start must be a decision vector of the problem")
        X, U = problem.split(np.asarray(warm_start, dtype=float))
        rollout = _ShootingRollout(problem, options, base_state=X[0])
        mean = rollout.genome_from_torques(problem.knot_times(), U)

    es = cma.CMAEvolutionStrategy(
        mean, options.sigma0,
        {"popsize": options.population_size,
         "maxiter": options.max_generations,
         "seed": int(seed) % (2 ** 31 - 2) + 1,
         "verbose": -9})

    costs, _, _ = rollout.run(mean[None])
    best_genome = mean.copy()
    best_cost = float(costs[0]) if np.isfinite(costs[0]) else math.inf
    generation = 0
    while not es.stop() and generation < options.max_generations:
        genomes = np.asarray(es.ask())
        costs, _, _ = rollout.run(genomes)
        # first index wins among equal costs
        index = int(np.argmin(np.where(np.isfinite(costs), costs, np.inf)))
        if costs[index] < best_cost:
            best_cost, best_genome = float(costs[index]), genomes[index].copy()
        es.tell(list(genomes), rank_fitness(costs).tolist())
        generation += 1
        logger.debug(f"Shooting generation {generation}: best cost "
                     f"{best_cost:.4e}")

    costs, fallen, final, history = rollout.run(best_genome[None],
                                                record=True)
    X_steps = history[:, 0, :]
    speed = float((final[0, 0] - X_steps[0, 0]) / problem.duration_s)
    periodic = final[0] - X_steps[0] - problem.stride_shift()
    within = abs(speed - problem.target_speed_mps) <= \
        options.speed_tolerance * problem.target_speed_mps
    in_limits = within_joint_limits(problem.model, X_steps[:, :N_COORDS])
    report = SolveReport(
        converged=bool(not fallen[0] and within and in_limits),
        iterations=generation,
        final_objective=float(costs[0]),
        max_defect=0.0,
        max_periodicity_violation=float(np.max(np.abs(periodic))),
        achieved_speed_mps=max(speed, 0.0),
        solver="shooting",
    )
    logger.info(f"Shooting solve of '{problem.model.source_subject}' "
                f"(s={problem.model.scale_factor:g}, "
                f"v={problem.target_speed_mps:g}): converged="
                f"{report.converged}, speed {speed:.3f} m/s")
    if not report.converged:
        raise NoConvergence(
            f"shooting did not converge: fallen={bool(fallen[0])}, "
            f"within limits={in_limits}, speed {speed:.3f} m/s", report,
            best_genome)

    times = problem.knot_times()
    steps = np.round(times / rollout.dt).astype(int)
    trial = trial_from_states(problem, X_steps[steps], times, "shooting",
                              trial_id, speed_mps=report.achieved_speed_mps)
    return trial, report
