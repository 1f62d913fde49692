"""Simplified quadruped dynamics.

Floating rigid base plus four 3-DoF legs (hip abduction, hip flexion, knee
flexion) under joint-space PD control. Legs are massless: their reflected
inertia is a per-joint constant and foot forces act on the base through the
leg Jacobian transpose. Ground contact is a spring-damper on penetration with
an anchored tangential spring clamped by Coulomb friction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ._physics import collision_flags, run_substeps
from .plan import FOOT_SIDE
from .rotations import (
    quat_from_yaw,
    quat_identity,
    quat_rotate,
    quat_to_matrix,
    yaw_from_quat,
)
from .terrain import Heightfield, height_at

CONTACT_FORCE_THRESHOLD = 1.0  # N; a foot below this is not "in contact"


class SimDivergedError(RuntimeError):
    pass


@dataclass
class RobotModel:
    base_mass: float
    base_inertia: np.ndarray  # diagonal, (3,)
    hip_offsets: np.ndarray  # (4, 3), base frame, Foot order
    abduction_offset: float
    upper_leg_length: float
    lower_leg_length: float
    joint_limits_lower: np.ndarray  # (12,)
    joint_limits_upper: np.ndarray  # (12,)
    joint_vel_limit: float
    joint_torque_limit: float
    kp: float
    kd: float
    joint_inertia: float  # reflected inertia per joint
    q_nom: np.ndarray  # (12,)
    base_box_half_extents: np.ndarray  # (3,)
    shin_point_fractions: tuple[float, ...] = (0.0, 0.5)  # along the lower leg

    def __post_init__(self) -> None:
        for name in (
            "base_inertia",
            "hip_offsets",
            "joint_limits_lower",
            "joint_limits_upper",
            "q_nom",
            "base_box_half_extents",
        ):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.base_mass <= 0 or self.upper_leg_length <= 0 or self.lower_leg_length <= 0:
            raise ValueError("masses and lengths must be positive")
        if self.kp <= 0 or self.kd <= 0 or self.joint_inertia <= 0:
            raise ValueError("gains and joint inertia must be positive")
        if np.any(self.q_nom < self.joint_limits_lower) or np.any(
            self.q_nom > self.joint_limits_upper
        ):
            raise ValueError("q_nom must lie within the joint limits")
        # Knee bend sign per leg: front legs bend the knee forward, rear legs
        # backward, so the nominal pose is its own front/back mirror image.
        self.knee_sign = np.array([-1.0, -1.0, 1.0, 1.0])
        signs = np.array(
            [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float
        )
        self._corners = signs * self.base_box_half_extents
        self._shin_fracs = np.asarray(self.shin_point_fractions, dtype=np.float64)

    @property
    def nominal_base_height(self) -> float:
        q = self.q_nom.reshape(4, 3)
        c2 = np.cos(q[:, 1])
        c23 = np.cos(q[:, 1] + q[:, 2])
        return float(np.mean(self.upper_leg_length * c2 + self.lower_leg_length * c23))

    def base_corners(self) -> np.ndarray:
        return self._corners


@dataclass
class SimConfig:
    # 8 x 0.0025 s keeps semi-implicit Euler comfortably inside the contact
    # springs' stability region and the free-fall error under 1%.
    dt: float = 0.0025
    substeps: int = 8
    gravity: float = 9.81
    ground_stiffness: float = 8.0e3
    ground_damping: float = 500.0
    friction: float = 0.8
    # Tangential forces act on the base wrench only (legs are laterally
    # rigid); damping is sized against the four-anchor horizontal mode of
    # the base.
    tangential_stiffness: float = 2.0e4
    tangential_damping: float = 500.0
    control_rate: float = 50.0

    def __post_init__(self) -> None:
        if self.dt <= 0 or self.substeps < 1:
            raise ValueError("dt must be positive and substeps >= 1")

    @property
    def control_dt(self) -> float:
        return self.dt * self.substeps


@dataclass
class RobotState:
    base_pos: np.ndarray
    base_quat: np.ndarray  # (w, x, y, z), unit
    base_lin_vel: np.ndarray  # world
    base_ang_vel: np.ndarray  # body
    joint_pos: np.ndarray  # (12,)
    joint_vel: np.ndarray  # (12,)
    foot_pos: np.ndarray  # (4, 3), world
    foot_vel: np.ndarray  # (4, 3), world
    foot_contact: np.ndarray  # (4,) bool
    foot_force: np.ndarray  # (4,) normal force magnitude
    undesired_contact: np.ndarray  # per collision point bool
    last_torques: np.ndarray  # (12,)
    anchor_xy: np.ndarray = field(default_factory=lambda: np.zeros((4, 2)))
    anchor_active: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=bool))

    def heading(self) -> float:
        return yaw_from_quat(self.base_quat)

    def copy(self) -> "RobotState":
        return RobotState(
            base_pos=self.base_pos.copy(),
            base_quat=self.base_quat.copy(),
            base_lin_vel=self.base_lin_vel.copy(),
            base_ang_vel=self.base_ang_vel.copy(),
            joint_pos=self.joint_pos.copy(),
            joint_vel=self.joint_vel.copy(),
            foot_pos=self.foot_pos.copy(),
            foot_vel=self.foot_vel.copy(),
            foot_contact=self.foot_contact.copy(),
            foot_force=self.foot_force.copy(),
            undesired_contact=self.undesired_contact.copy(),
            last_torques=self.last_torques.copy(),
            anchor_xy=self.anchor_xy.copy(),
            anchor_active=self.anchor_active.copy(),
        )


# -- kinematics ---------------------------------------------------------------


def leg_points_base(model: RobotModel, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Foot and knee positions in the base frame for all legs. q is (12,)."""
    q = q.reshape(4, 3)
    lu, ll = model.upper_leg_length, model.lower_leg_length
    s1, c1 = np.sin(q[:, 0]), np.cos(q[:, 0])
    s2, c2 = np.sin(q[:, 1]), np.cos(q[:, 1])
    s23, c23 = np.sin(q[:, 1] + q[:, 2]), np.cos(q[:, 1] + q[:, 2])
    ab = FOOT_SIDE * model.abduction_offset

    dx = lu * s2 + ll * s23
    dz = -(lu * c2 + ll * c23)
    foot = np.empty((4, 3))
    foot[:, 0] = dx
    foot[:, 1] = c1 * ab - s1 * dz
    foot[:, 2] = s1 * ab + c1 * dz

    kx = lu * s2
    kz = -lu * c2
    knee = np.empty((4, 3))
    knee[:, 0] = kx
    knee[:, 1] = c1 * ab - s1 * kz
    knee[:, 2] = s1 * ab + c1 * kz
    return model.hip_offsets + foot, model.hip_offsets + knee


def leg_jacobians(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """Base-frame Jacobians d(foot)/d(leg joints), shape (4, 3, 3)."""
    q = q.reshape(4, 3)
    lu, ll = model.upper_leg_length, model.lower_leg_length
    s1, c1 = np.sin(q[:, 0]), np.cos(q[:, 0])
    s2, c2 = np.sin(q[:, 1]), np.cos(q[:, 1])
    s23, c23 = np.sin(q[:, 1] + q[:, 2]), np.cos(q[:, 1] + q[:, 2])
    ab = FOOT_SIDE * model.abduction_offset

    dz = -(lu * c2 + ll * c23)
    J = np.empty((4, 3, 3))
    # d/d(hip abduction): rotation of the distal chain about the X axis.
    J[:, 0, 0] = 0.0
    J[:, 1, 0] = -c1 * dz - s1 * ab
    J[:, 2, 0] = -s1 * dz + c1 * ab
    # d/d(hip flexion)
    px = lu * c2 + ll * c23
    pz = lu * s2 + ll * s23
    J[:, 0, 1] = px
    J[:, 1, 1] = -s1 * pz
    J[:, 2, 1] = c1 * pz
    # d/d(knee flexion)
    qx = ll * c23
    qz = ll * s23
    J[:, 0, 2] = qx
    J[:, 1, 2] = -s1 * qz
    J[:, 2, 2] = c1 * qz
    return J


def forward_kinematics(
    model: RobotModel, base_pos: np.ndarray, base_quat: np.ndarray, q: np.ndarray
) -> np.ndarray:
    """World foot positions for all four legs."""
    foot_b, _ = leg_points_base(model, q)
    return base_pos + quat_rotate(base_quat, foot_b)


def inverse_kinematics(model: RobotModel, leg: int, target_b: np.ndarray) -> np.ndarray | None:
    """Closed-form leg IK for a base-frame foot target; None when the target
    is outside the reachable annulus. The knee-bend branch matches the leg's
    nominal direction (front legs forward, rear legs backward)."""
    q = _ik_core(model, leg, np.asarray(target_b, dtype=float))
    return q


def _ik_core(model: RobotModel, leg: int, target_b: np.ndarray) -> np.ndarray | None:
    lu, ll = model.upper_leg_length, model.lower_leg_length
    u = target_b - model.hip_offsets[leg]
    w = FOOT_SIDE[leg] * model.abduction_offset
    rho = math.hypot(u[1], u[2])
    if rho < abs(w):
        return None
    phi = math.atan2(u[2], u[1])
    q1 = phi + math.acos(max(-1.0, min(1.0, w / rho)))
    q1 = math.atan2(math.sin(q1), math.cos(q1))
    c1, s1 = math.cos(q1), math.sin(q1)
    xprime = u[0]
    zprime = -s1 * u[1] + c1 * u[2]
    rho2 = math.hypot(xprime, zprime)
    if rho2 > lu + ll or rho2 < abs(lu - ll):
        return None
    cos_knee = (rho2 * rho2 - lu * lu - ll * ll) / (2.0 * lu * ll)
    knee = math.acos(max(-1.0, min(1.0, cos_knee)))
    q3 = model.knee_sign[leg] * knee
    gamma = math.atan2(xprime, -zprime)
    delta = math.atan2(ll * math.sin(q3), lu + ll * math.cos(q3))
    q2 = gamma - delta
    return np.array([q1, q2, q3])


def ik_clamped(model: RobotModel, leg: int, target_b: np.ndarray) -> tuple[np.ndarray, bool]:
    """Best-effort IK: unreachable targets are pulled onto the workspace
    boundary. Returns (q_leg, clamped)."""
    target_b = np.asarray(target_b, dtype=float)
    q = _ik_core(model, leg, target_b)
    if q is not None:
        return q, False
    lu, ll = model.upper_leg_length, model.lower_leg_length
    u = target_b - model.hip_offsets[leg]
    w = FOOT_SIDE[leg] * model.abduction_offset
    rho = math.hypot(u[1], u[2])
    if rho < abs(w) + 1e-9:
        # Push the YZ projection out of the abduction cylinder, downward.
        if rho < 1e-12:
            u[1], u[2] = 0.0, -(abs(w) + 1e-6)
        else:
            scale = (abs(w) + 1e-6) / rho
            u[1] *= scale
            u[2] *= scale
        rho = math.hypot(u[1], u[2])
    planar = math.sqrt(max(rho * rho - w * w, 0.0))
    span = math.hypot(u[0], planar)
    lo, hi = abs(lu - ll) + 1e-6, lu + ll - 1e-6
    if span > 1e-12:
        scale = min(max(span, lo), hi) / span
        u = u * scale
        # Rescaling the whole offset keeps the abduction feasible since
        # |w| <= rho grows with the planar span.
        if math.hypot(u[1], u[2]) < abs(w) + 1e-9:
            u[1] = math.copysign(abs(w) + 1e-6, u[1] if u[1] != 0 else FOOT_SIDE[leg])
    q = _ik_core(model, leg, model.hip_offsets[leg] + u)
    if q is None:
        q = model.q_nom.reshape(4, 3)[leg].copy()
    return q, True


# -- collision points ----------------------------------------------------------


def collision_points_world(model: RobotModel, state: RobotState) -> np.ndarray:
    """Base box corners, knees, and shin midpoints in world frame."""
    foot_b, knee_b = leg_points_base(model, state.joint_pos)
    pts = [model.base_corners(), knee_b]
    for frac in model.shin_point_fractions[1:]:
        pts.append(knee_b + frac * (foot_b - knee_b))
    pts_b = np.vstack(pts)
    return state.base_pos + quat_rotate(state.base_quat, pts_b)


def undesired_contact_flags(model: RobotModel, state: RobotState, terrain: Heightfield) -> np.ndarray:
    flags = np.empty(8 + 4 * len(model.shin_point_fractions), dtype=np.bool_)
    collision_flags(
        terrain.heights,
        float(terrain.origin[0]),
        float(terrain.origin[1]),
        terrain.resolution,
        state.base_pos,
        state.base_quat,
        state.joint_pos,
        model.hip_offsets,
        FOOT_SIDE,
        model.abduction_offset,
        model.upper_leg_length,
        model.lower_leg_length,
        model._corners,
        model._shin_fracs,
        flags,
    )
    return flags


def check_body_collision(model: RobotModel, state: RobotState, terrain: Heightfield) -> bool:
    """True when any base corner or knee/shin sample point is below terrain."""
    return bool(undesired_contact_flags(model, state, terrain).any())


# -- stepping -------------------------------------------------------------------


def step(
    model: RobotModel,
    state: RobotState,
    action: np.ndarray,
    terrain: Heightfield,
    cfg: SimConfig,
    external_force: np.ndarray | None = None,
) -> RobotState:
    """One control step (cfg.substeps physics substeps) under a desired
    joint-offset action. Pure transition: the input state is not modified."""
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (12,) or not np.all(np.isfinite(action)):
        raise SimDivergedError("action must be 12 finite joint offsets")
    q_des = np.clip(model.q_nom + action, model.joint_limits_lower, model.joint_limits_upper)
    ext = np.zeros(3) if external_force is None else np.asarray(external_force, dtype=float)

    pos = state.base_pos.copy()
    quat = state.base_quat.copy()
    vel = state.base_lin_vel.copy()
    omega = state.base_ang_vel.copy()
    q = state.joint_pos.copy()
    qd = state.joint_vel.copy()
    anchor = state.anchor_xy.copy()
    anchor_on = state.anchor_active.copy()
    tau = np.empty(12)
    normal = np.empty(4)
    foot_w = np.empty((4, 3))
    foot_vw = np.empty((4, 3))

    run_substeps(
        cfg.substeps,
        cfg.dt,
        model.base_mass,
        model.base_inertia,
        model.hip_offsets,
        FOOT_SIDE,
        model.abduction_offset,
        model.upper_leg_length,
        model.lower_leg_length,
        model.joint_limits_lower,
        model.joint_limits_upper,
        model.joint_vel_limit,
        model.joint_torque_limit,
        model.kp,
        model.kd,
        model.joint_inertia,
        cfg.gravity,
        cfg.ground_stiffness,
        cfg.ground_damping,
        cfg.friction,
        cfg.tangential_stiffness,
        cfg.tangential_damping,
        terrain.heights,
        float(terrain.origin[0]),
        float(terrain.origin[1]),
        terrain.resolution,
        pos,
        quat,
        vel,
        omega,
        q,
        qd,
        anchor,
        anchor_on,
        q_des,
        ext,
        tau,
        normal,
        foot_w,
        foot_vw,
    )

    if not (
        np.all(np.isfinite(pos))
        and np.all(np.isfinite(vel))
        and np.all(np.isfinite(q))
        and np.all(np.isfinite(omega))
    ):
        raise SimDivergedError("simulation state became non-finite")

    flags = np.empty(8 + 4 * len(model.shin_point_fractions), dtype=np.bool_)
    collision_flags(
        terrain.heights,
        float(terrain.origin[0]),
        float(terrain.origin[1]),
        terrain.resolution,
        pos,
        quat,
        q,
        model.hip_offsets,
        FOOT_SIDE,
        model.abduction_offset,
        model.upper_leg_length,
        model.lower_leg_length,
        model._corners,
        model._shin_fracs,
        flags,
    )
    return RobotState(
        base_pos=pos,
        base_quat=quat,
        base_lin_vel=vel,
        base_ang_vel=omega,
        joint_pos=q,
        joint_vel=qd,
        foot_pos=foot_w,
        foot_vel=foot_vw,
        foot_contact=normal > CONTACT_FORCE_THRESHOLD,
        foot_force=normal,
        undesired_contact=flags,
        last_torques=tau,
        anchor_xy=anchor,
        anchor_active=anchor_on,
    )


# -- spawn ----------------------------------------------------------------------


def settle_standing_state(
    model: RobotModel,
    terrain: Heightfield,
    xy: np.ndarray = (0.0, 0.0),
    yaw: float = 0.0,
    cfg: SimConfig | None = None,
) -> RobotState:
    """Static stance at the nominal footprint: the base height is set so the
    total normal force balances the weight (joints hold q_nom exactly; the
    contact model loads the base, not the legs)."""
    cfg = cfg or SimConfig()
    xy = np.asarray(xy, dtype=float)
    quat = quat_from_yaw(yaw)
    rot = quat_to_matrix(quat)
    weight = model.base_mass * cfg.gravity

    q = model.q_nom.copy()
    foot_b, _ = leg_points_base(model, q)
    foot_xy = xy + (foot_b @ rot.T)[:, :2]
    ground = height_at(terrain, foot_xy[:, 0], foot_xy[:, 1])
    # All feet penetrate by weight/(4k) on average; uneven ground shifts the
    # per-foot shares but the solved height still balances the total.
    base_z = float(np.mean(ground - (foot_b @ rot.T)[:, 2])) - weight / (
        4.0 * cfg.ground_stiffness
    )

    pos = np.array([xy[0], xy[1], base_z])
    foot_w = pos + foot_b @ rot.T
    normal = np.maximum(cfg.ground_stiffness * (ground - foot_w[:, 2]), 0.0)
    state = RobotState(
        base_pos=pos,
        base_quat=quat,
        base_lin_vel=np.zeros(3),
        base_ang_vel=np.zeros(3),
        joint_pos=q,
        joint_vel=np.zeros(12),
        foot_pos=foot_w,
        foot_vel=np.zeros((4, 3)),
        foot_contact=normal > CONTACT_FORCE_THRESHOLD,
        foot_force=normal,
        undesired_contact=np.zeros(1, dtype=bool),
        last_torques=np.zeros(12),
        anchor_xy=foot_w[:, :2].copy(),
        anchor_active=normal > 0.0,
    )
    state.undesired_contact = undesired_contact_flags(model, state, terrain)
    return state


def default_state(model: RobotModel, base_height: float | None = None) -> RobotState:
    """Nominal pose in free space (no terrain interaction resolved)."""
    h = model.nominal_base_height if base_height is None else base_height
    pos = np.array([0.0, 0.0, h])
    quat = quat_identity()
    foot_b, _ = leg_points_base(model, model.q_nom)
    return RobotState(
        base_pos=pos,
        base_quat=quat,
        base_lin_vel=np.zeros(3),
        base_ang_vel=np.zeros(3),
        joint_pos=model.q_nom.copy(),
        joint_vel=np.zeros(12),
        foot_pos=pos + foot_b,
        foot_vel=np.zeros((4, 3)),
        foot_contact=np.zeros(4, dtype=bool),
        foot_force=np.zeros(4),
        undesired_contact=np.zeros(1, dtype=bool),
        last_torques=np.zeros(12),
    )


# -- model io ---------------------------------------------------------------------


def model_to_dict(model: RobotModel) -> dict:
    return {
        "base_mass": model.base_mass,
        "base_inertia": model.base_inertia.tolist(),
        "hip_offsets": model.hip_offsets.tolist(),
        "abduction_offset": model.abduction_offset,
        "upper_leg_length": model.upper_leg_length,
        "lower_leg_length": model.lower_leg_length,
        "joint_limits_lower": model.joint_limits_lower.tolist(),
        "joint_limits_upper": model.joint_limits_upper.tolist(),
        "joint_vel_limit": model.joint_vel_limit,
        "joint_torque_limit": model.joint_torque_limit,
        "kp": model.kp,
        "kd": model.kd,
        "joint_inertia": model.joint_inertia,
        "q_nom": model.q_nom.tolist(),
        "base_box_half_extents": model.base_box_half_extents.tolist(),
        "shin_point_fractions": list(model.shin_point_fractions),
    }


def model_from_dict(data: dict) -> RobotModel:
    return RobotModel(
        base_mass=float(data["base_mass"]),
        base_inertia=data["base_inertia"],
        hip_offsets=data["hip_offsets"],
        abduction_offset=float(data["abduction_offset"]),
        upper_leg_length=float(data["upper_leg_length"]),
        lower_leg_length=float(data["lower_leg_length"]),
        joint_limits_lower=data["joint_limits_lower"],
        joint_limits_upper=data["joint_limits_upper"],
        joint_vel_limit=float(data["joint_vel_limit"]),
        joint_torque_limit=float(data["joint_torque_limit"]),
        kp=float(data["kp"]),
        kd=float(data["kd"]),
        joint_inertia=float(data["joint_inertia"]),
        q_nom=data["q_nom"],
        base_box_half_extents=data["base_box_half_extents"],
        shin_point_fractions=tuple(data.get("shin_point_fractions", (0.0, 0.5))),
    )


def load_model(path) -> RobotModel:
    with open(path) as f:
        return model_from_dict(json.load(f))


def default_model() -> RobotModel:
    text = resources.files("contactenv.data").joinpath("anymal_like.json").read_text()
    return model_from_dict(json.loads(text))
