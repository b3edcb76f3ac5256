# -*- coding: utf-8 -*-
"""
Planar rigid-body dynamics of the skeletal model with compliant ground
contact.

Generalized coordinates, in this order::

    q = [pelvis_x, pelvis_y, pelvis_pitch,
         hip_L, knee_L, ankle_L, hip_R, knee_R, ankle_R]

``pelvis_x``/``pelvis_y`` locate the hip joint centre (x forward, y up).
Absolute segment angles are linear in q: thigh = pitch + hip, shank =
thigh - knee, foot = shank + ankle, so hip flexion swings the knee forward,
knee flexion folds the shank back and ankle flexion lifts the toe.

Every routine is written once on batched ``torch`` float64 tensors (the
``Linkage`` class) so that trajectory optimization can differentiate through
it; the module-level functions are the numpy facade used everywhere else.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import fsolve
import torch

from gaitforge import configs
from gaitforge.misc import GaitForgeError, require
from gaitforge.model import (
    CONTACT_NAMES, JOINT_NAMES, SEGMENT_NAMES, SkeletalModel,
)

logger = logging.getLogger(__name__)
logger.setLevel(configs.LOG_LEVEL)

DTYPE = torch.float64
GRAVITY = 9.81
N_COORDS = 9
N_JOINTS = 6
COORD_NAMES = ("pelvis_x", "pelvis_y", "pelvis_pitch") + JOINT_NAMES
KEYPOINT_NAMES = ("pelvis",
                  "hip_L", "knee_L", "ankle_L", "heel_L", "toe_L",
                  "hip_R", "knee_R", "ankle_R", "heel_R", "toe_R")
MAX_CONDITION = 1e12
MAX_DT = 5e-3

# rows: segments in SEGMENT_NAMES order, columns: q[2:]
_ANGLE_MAP = np.array([
    [1, 0, 0, 0, 0, 0, 0],     # pelvis
    [1, 1, 0, 0, 0, 0, 0],     # thigh_L
    [1, 0, 0, 0, 1, 0, 0],     # thigh_R
    [1, 1, -1, 0, 0, 0, 0],    # shank_L
    [1, 0, 0, 0, 1, -1, 0],    # shank_R
    [1, 1, -1, 1, 0, 0, 0],    # foot_L
    [1, 0, 0, 0, 1, -1, 1],    # foot_R
], dtype=float)


class SingularConfiguration(GaitForgeError):
    """Raised when the mass matrix is too badly conditioned to solve."""
    pass


class NonFiniteState(GaitForgeError):
    """Raised when a time step produced NaN or infinite values."""
    pass


@dataclass(frozen=True)
class ContactParams:
    """Viscoelastic heel/toe ground contact with regularized friction."""
    stiffness: float = 1.0e5
    dissipation: float = 1.0
    friction_mu: float = 0.8
    contact_radius_m: float = 5e-4
    transition_velocity_mps: float = 0.1

    def __post_init__(self):
        for name in ("stiffness", "dissipation", "friction_mu",
                     "contact_radius_m", "transition_velocity_mps"):
            require(getattr(self, name) > 0,
                    f"contact parameter {name} must be positive")
        require(self.friction_mu <= 2.0, "friction_mu must not exceed 2")

    @classmethod
    def from_settings(cls, values: Optional[Mapping] = None):
        values = dict(configs.DEFAULTS["contact"] if values is None
                      else values)
        return cls(**{k: float(v) for k, v in values.items()})


@dataclass(frozen=True, eq=False)
class State:
    """Generalized coordinates and velocities."""
    q: np.ndarray
    qdot: np.ndarray = field(default_factory=lambda: np.zeros(N_COORDS))

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(N_COORDS)
        qdot = np.array(self.qdot, dtype=float).reshape(N_COORDS)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.qdot])

    @classmethod
    def from_vector(cls, x: Sequence[float]) -> "State":
        x = np.asarray(x, dtype=float)
        return cls(q=x[:N_COORDS], qdot=x[N_COORDS:])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.q)) and
                    np.all(np.isfinite(self.qdot)))


def _leg_vectors(model: SkeletalModel, side: str, upto: str,
                 foot_offset=(0.0, 0.0), distal_com=False):
    """Local offset table (7, 2) of a point on one leg chain."""
    table = np.zeros((len(SEGMENT_NAMES), 2))
    thigh = model.segment(f"thigh_{side}")
    shank = model.segment(f"shank_{side}")
    if upto == "thigh":
        table[SEGMENT_NAMES.index(thigh.name)] = (
            0.0, -(thigh.com_offset_m if distal_com else thigh.length_m))
        return table
    table[SEGMENT_NAMES.index(thigh.name)] = (0.0, -thigh.length_m)
    if upto == "shank":
        table[SEGMENT_NAMES.index(shank.name)] = (
            0.0, -(shank.com_offset_m if distal_com else shank.length_m))
        return table
    table[SEGMENT_NAMES.index(shank.name)] = (0.0, -shank.length_m)
    table[SEGMENT_NAMES.index(f"foot_{side}")] = foot_offset
    return table


class Linkage:
    """
    Batched tensor form of a SkeletalModel.

    Every method takes tensors with a leading batch dimension: ``q`` and
    ``qdot`` are (B, 9), ``tau`` is (B, 6).
    """

    def __init__(self, model: SkeletalModel):
        self.model = model
        self.A = torch.tensor(_ANGLE_MAP, dtype=DTYPE)

        com = np.zeros((7, 7, 2))
        pelvis = model.segment("pelvis")
        com[0, 0] = (0.0, pelvis.com_offset_m)
        for side in ("L", "R"):
            foot = model.segment(f"foot_{side}")
            com[SEGMENT_NAMES.index(f"thigh_{side}")] = _leg_vectors(
                model, side, "thigh", distal_com=True)
            com[SEGMENT_NAMES.index(f"shank_{side}")] = _leg_vectors(
                model, side, "shank", distal_com=True)
            com[SEGMENT_NAMES.index(f"foot_{side}")] = _leg_vectors(
                model, side, "foot", foot_offset=(foot.com_offset_m, 0.0))
        self.V_com = torch.tensor(com, dtype=DTYPE)
        self.masses = torch.tensor([s.mass_kg for s in model.segments],
                                   dtype=DTYPE)
        self.total_mass = float(self.masses.sum())

        contacts = []
        for name, offset in zip(CONTACT_NAMES, model.contact_points):
            contacts.append(_leg_vectors(model, name[-1], "foot",
                                         foot_offset=offset))
        self.V_contact = torch.tensor(np.stack(contacts), dtype=DTYPE)

        keypoints, lateral = [np.zeros((7, 2))], [0.0]
        for side, z in (("L", -0.5), ("R", 0.5)):
            heel, toe = model.contact_points[CONTACT_NAMES.index(
                f"heel_{side}"):CONTACT_NAMES.index(f"toe_{side}") + 1]
            keypoints += [np.zeros((7, 2)),
                          _leg_vectors(model, side, "thigh"),
                          _leg_vectors(model, side, "shank"),
                          _leg_vectors(model, side, "foot", foot_offset=heel),
                          _leg_vectors(model, side, "foot", foot_offset=toe)]
            lateral += [z * model.pelvis_width_m] * 5
        self.V_keypoints = torch.tensor(np.stack(keypoints), dtype=DTYPE)
        self.lateral = torch.tensor(lateral, dtype=DTYPE)

        inertia = torch.tensor([s.inertia_zz for s in model.segments],
                               dtype=DTYPE)
        A_full = torch.cat([torch.zeros(7, 2, dtype=DTYPE), self.A], dim=1)
        self.M_rot = A_full.T @ torch.diag(inertia) @ A_full
        self.gravity = torch.tensor([0.0, -GRAVITY], dtype=DTYPE)

    # kinematics ----------------------------------------------------------
    def segment_angles(self, q):
        return q[:, 2:] @ self.A.T

    def _rotated(self, q, V):
        """Offsets R(theta_j) V[p, j] of shape (B, P, 7, 2)."""
        theta = self.segment_angles(q)
        c = torch.cos(theta)[:, None, :]
        s = torch.sin(theta)[:, None, :]
        wx = c * V[None, :, :, 0] - s * V[None, :, :, 1]
        wy = s * V[None, :, :, 0] + c * V[None, :, :, 1]
        return torch.stack((wx, wy), dim=-1)

    def _jacobian(self, w):
        """Point Jacobians (B, P, 2, 9) from rotated offsets."""
        Ew = torch.stack((-w[..., 1], w[..., 0]), dim=-1)
        J_ang = torch.einsum("bpjd,jk->bpdk", Ew, self.A)
        base = torch.eye(2, dtype=DTYPE).expand(*w.shape[:2], 2, 2)
        return torch.cat((base, J_ang), dim=-1)

    def points(self, q, V):
        w = self._rotated(q, V)
        return q[:, None, :2] + w.sum(dim=2), w

    def keypoints(self, q):
        """World positions (B, 11, 3) in KEYPOINT_NAMES order."""
        p, _ = self.points(q, self.V_keypoints)
        z = self.lateral.expand(p.shape[0], -1)[..., None]
        return torch.cat((p, z), dim=-1)

    def contact_kinematics(self, q, qdot):
        p, w = self.points(q, self.V_contact)
        J = self._jacobian(w)
        v = torch.einsum("bpdi,bi->bpd", J, qdot)
        return p, v, J

    # dynamics ------------------------------------------------------------
    def mass_matrix_and_bias(self, q, qdot):
        p, w = self.points(q, self.V_com)
        J = self._jacobian(w)
        theta_dot = qdot[:, 2:] @ self.A.T
        centripetal = torch.einsum("bj,bpjd->bpd", theta_dot ** 2, w)
        M = torch.einsum("p,bpdi,bpdk->bik", self.masses, J, J) + self.M_rot
        c = torch.einsum("p,bpdi,bpd->bi", self.masses, J,
                         self.gravity + centripetal)
        return M, c

    def contact_forces(self, q, qdot, params: ContactParams):
        """Ground forces (B, 4, 2) and the contact Jacobians."""
        p, v, J = self.contact_kinematics(q, qdot)
        depth, rate = -p[..., 1], -v[..., 1]
        k, delta = params.stiffness, params.contact_radius_m
        capped = torch.clamp(depth, min=0.0, max=delta)
        onset = 2.0 * k * capped ** 2 / delta - k * capped ** 3 / delta ** 2
        elastic = torch.where(depth > delta, k * depth, onset)
        normal = torch.clamp(elastic * (1.0 + params.dissipation * rate),
                             min=0.0)
        tangential = -params.friction_mu * normal * torch.tanh(
            v[..., 0] / params.transition_velocity_mps)
        return torch.stack((tangential, normal), dim=-1), J

    def contact_energy(self, q, params: ContactParams):
        p, _ = self.points(q, self.V_contact)
        depth = -p[..., 1]
        k, delta = params.stiffness, params.contact_radius_m
        capped = torch.clamp(depth, min=0.0, max=delta)
        onset = (2.0 * k * capped ** 3 / (3.0 * delta)
                 - k * capped ** 4 / (4.0 * delta ** 2))
        linear = 5.0 * k * delta ** 2 / 12.0 + 0.5 * k * (depth ** 2
                                                           - delta ** 2)
        return torch.where(depth > delta, linear, onset).sum(dim=1)

    def generalized_forces(self, q, qdot, tau, params):
        """Right-hand side S tau + c + Jc^T f and the mass matrix."""
        M, c = self.mass_matrix_and_bias(q, qdot)
        rhs = c + torch.cat((torch.zeros(q.shape[0], 3, dtype=DTYPE), tau),
                            dim=1)
        if params is not None:
            f, Jc = self.contact_forces(q, qdot, params)
            rhs = rhs + torch.einsum("bpdi,bpd->bi", Jc, f)
        return M, rhs

    def accelerations(self, q, qdot, tau, params=None, free_dofs=None):
        M, rhs = self.generalized_forces(q, qdot, tau, params)
        if free_dofs is None:
            return torch.linalg.solve(M, rhs)
        free = torch.as_tensor(list(free_dofs), dtype=torch.long)
        M_ff = M[:, free][:, :, free]
        qddot = torch.zeros_like(q)
        qddot[:, free] = torch.linalg.solve(M_ff, rhs[:, free])
        return qddot

    def derivative(self, x, tau, params=None, free_dofs=None):
        """State derivative of x = [q, qdot] (B, 18)."""
        q, qdot = x[:, :N_COORDS], x[:, N_COORDS:]
        if free_dofs is not None:
            mask = torch.zeros(N_COORDS, dtype=DTYPE)
            mask[list(free_dofs)] = 1.0
            qdot = qdot * mask
        qddot = self.accelerations(q, qdot, tau, params, free_dofs)
        return torch.cat((qdot, qddot), dim=1)

    def rk4(self, x, tau, dt, params=None, free_dofs=None):
        k1 = self.derivative(x, tau, params, free_dofs)
        k2 = self.derivative(x + 0.5 * dt * k1, tau, params, free_dofs)
        k3 = self.derivative(x + 0.5 * dt * k2, tau, params, free_dofs)
        k4 = self.derivative(x + dt * k3, tau, params, free_dofs)
        return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def energy(self, q, qdot, params=None):
        M, _ = self.mass_matrix_and_bias(q, qdot)
        kinetic = 0.5 * torch.einsum("bi,bik,bk->b", qdot, M, qdot)
        p, _ = self.points(q, self.V_com)
        potential = GRAVITY * (p[..., 1] * self.masses).sum(dim=1)
        if params is None:
            return kinetic + potential
        return kinetic + potential + self.contact_energy(q, params)


@lru_cache(maxsize=64)
def linkage(model: SkeletalModel) -> Linkage:
    return Linkage(model)


def _batch(values, width):
    return torch.as_tensor(np.asarray(values, dtype=float),
                           dtype=DTYPE).reshape(1, width)


def _check_conditioning(M: np.ndarray):
    """Raise SingularConfiguration for an ill-conditioned mass matrix."""
    try:
        condition = float(np.max(np.linalg.cond(M)))
    except np.linalg.LinAlgError:
        condition = np.inf
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise SingularConfiguration(
            f"mass matrix condition number {condition:.3e} exceeds "
            f"{MAX_CONDITION:.0e}")


def check_mass_conditioning(model: SkeletalModel, q):
    """
    Check cond(M(q)) for a batch of generalized positions (B, 9).

    Raises:
        SingularConfiguration: if any condition number exceeds 1e12
    """
    with torch.no_grad():
        q = torch.as_tensor(np.asarray(q, dtype=float),
                            dtype=DTYPE).reshape(-1, N_COORDS)
        M, _ = linkage(model).mass_matrix_and_bias(q, torch.zeros_like(q))
    _check_conditioning(M.numpy())


def forward_kinematics(model: SkeletalModel, q) -> Dict[str, np.ndarray]:
    """3D positions of the pelvis and of every leg keypoint, in meters."""
    points = linkage(model).keypoints(_batch(q, N_COORDS))[0].numpy()
    return {name: points[i] for i, name in enumerate(KEYPOINT_NAMES)}


def dynamics_terms(model: SkeletalModel, state: State
                   ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Mass matrix M(q) and bias vector c(q, qdot).

    ``c`` collects gravity and velocity-product loads as they appear on the
    right-hand side: ``M qddot = S tau + c + Jc^T f``.

    Raises:
        SingularConfiguration: if cond(M) exceeds 1e12
    """
    M, c = linkage(model).mass_matrix_and_bias(
        _batch(state.q, N_COORDS), _batch(state.qdot, N_COORDS))
    M, c = M[0].numpy(), c[0].numpy()
    _check_conditioning(M)
    return M, c


def contact_wrench(model: SkeletalModel, state: State,
                   params: ContactParams) -> np.ndarray:
    """Ground force (tangential, normal) at each point of CONTACT_NAMES."""
    f, _ = linkage(model).contact_forces(
        _batch(state.q, N_COORDS), _batch(state.qdot, N_COORDS), params)
    return f[0].numpy()


def forward_dynamics(model: SkeletalModel, state: State, tau,
                     params: Optional[ContactParams] = None,
                     free_dofs: Optional[Sequence[int]] = None
                     ) -> np.ndarray:
    """
    Generalized accelerations for joint torques ``tau``.

    Args:
        params: contact parameters; None removes the ground
        free_dofs: coordinates left free; every other one is locked

    Raises:
        SingularConfiguration: if the mass matrix is singular
    """
    link = linkage(model)
    q, qdot = _batch(state.q, N_COORDS), _batch(state.qdot, N_COORDS)
    M, _ = link.mass_matrix_and_bias(q, qdot)
    _check_conditioning(M[0].numpy())
    x = torch.cat((q, qdot), dim=1)
    xdot = link.derivative(x, _batch(tau, N_JOINTS), params, free_dofs)
    return xdot[0, N_COORDS:].numpy()


def integrate_step(model: SkeletalModel, state: State, tau,
                   params: Optional[ContactParams], dt: float,
                   free_dofs: Optional[Sequence[int]] = None) -> State:
    """
    One explicit fourth-order Runge-Kutta step.

    Raises:
        PreconditionViolation: unless 0 < dt <= 5e-3
        NonFiniteState: if the new state is not finite
    """
    require(0.0 < dt <= MAX_DT, f"time step {dt} outside (0, {MAX_DT}]")
    x = _batch(state.as_vector(), 2 * N_COORDS)
    x_next = linkage(model).rk4(x, _batch(tau, N_JOINTS), dt, params,
                                free_dofs)[0].numpy()
    if not np.all(np.isfinite(x_next)):
        raise NonFiniteState("integration produced non-finite values")
    return State.from_vector(x_next)


def mechanical_energy(model: SkeletalModel, state: State,
                      params: Optional[ContactParams] = None) -> float:
    """Kinetic plus gravitational (plus elastic contact) energy in J."""
    energy = linkage(model).energy(_batch(state.q, N_COORDS),
                                   _batch(state.qdot, N_COORDS), params)
    return float(energy[0])


def standing_equilibrium(model: SkeletalModel, params: ContactParams
                         ) -> Tuple[State, np.ndarray]:
    """
    Static double-support stance and the joint torques that hold it.

    Legs stay straight and the trunk upright; the pelvis height and the
    (symmetric) ankle angle are solved so that the contact forces balance
    the weight and its moment about the hip.
    """
    link = linkage(model)

    def loads(unknowns):
        y, ankle = unknowns
        q = np.zeros(N_COORDS)
        q[1], q[5], q[8] = y, ankle, ankle
        qt = _batch(q, N_COORDS)
        zero = torch.zeros_like(qt)
        _, rhs = link.generalized_forces(
            qt, zero, torch.zeros(1, N_JOINTS, dtype=DTYPE), params)
        return q, rhs[0].numpy()

    weight = link.total_mass * GRAVITY
    guess = (model.standing_hip_height_m
             - weight / (len(CONTACT_NAMES) * params.stiffness)
             - params.contact_radius_m / 2.0, 0.0)
    solution, info, status, message = fsolve(
        lambda u: loads(u)[1][1:3] / weight, guess, full_output=True,
        xtol=1e-13)
    if status != 1:
        raise SingularConfiguration(f"no standing equilibrium: {message}")
    q, rhs = loads(solution)
    tau = -rhs[3:]
    logger.debug(f"Standing equilibrium: hip height {q[1]:.4f} m, "
                 f"ankle {np.degrees(q[5]):.3f} deg")
    return State(q=q), tau


def within_joint_limits(model: SkeletalModel, q,
                        margin_deg: float = 5.0) -> bool:
    """True when every joint angle lies inside its limits plus margin."""
    q = np.asarray(q, dtype=float)
    margin = np.radians(margin_deg)
    angles = q[..., 3:N_COORDS]
    low = np.array([lim[0] for lim in model.joint_limits_rad]) - margin
    high = np.array([lim[1] for lim in model.joint_limits_rad]) + margin
    return bool(np.all(angles >= low) and np.all(angles <= high))
