"""Event-driven contact-tracking task reward, regularization terms, and
episode termination logic.

The task reward pays each correctly placed foot a proximity-and-synchrony
gain, penalizes wrong contacts (discounted while a foot still sits on its
previous, unmoved target), penalizes breaking held contacts, and adds an
all-feet-correct bonus normalized by the stage's contact duration. Penalties
fade in with the curriculum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

PROXIMITY_SHARPNESS = 100.0  # 1/m inside the gain's proximity exponential


class Termination(str, Enum):
    RUNNING = "running"
    BODY_CONTACT = "body_contact"
    STALLED = "stalled"
    PLAN_COMPLETE = "plan_complete"
    SIM_DIVERGED = "sim_diverged"


@dataclass
class RewardConfig:
    task_scale: float = 3.0
    base_height_scale: float = 10.0
    base_height_target: float = 0.6
    base_height_sharpness: float = 100.0
    alive_scale: float = 5.0
    flat_orientation_scale: float = -5.0
    joint_accel_scale: float = -2.5e-7
    action_rate_scale: float = -5.0e-2
    energy_scale: float = -1.0e-3
    collision_scale: float = -1.0
    foot_clearance_scale: float = -2.0
    clearance_sharpness: float = 50.0  # 1/m
    foot_velocity_scale: float = -30.0
    velocity_threshold: float = 1.5  # m/s (1.75 appears as a prose variant)
    barrier_smoothness: float = 0.1
    velocity_barrier_level: int = 3  # curriculum level at which the barrier arms
    gamma_pen_rate: float = 0.25
    gamma_pen_cap: float = 1.0
    stall_timeout_s: float = 8.0

    def __post_init__(self) -> None:
        if self.stall_timeout_s <= 0:
            raise ValueError("stall timeout must be positive")


@dataclass
class ContactEvent:
    """Per-foot contact bookkeeping for one control step."""

    correct: np.ndarray  # (4,) bool
    wrong: np.ndarray  # (4,) bool
    prev_correct_unmoved: np.ndarray  # (4,) bool: wrong now, but still on the old target
    lost: np.ndarray  # (4,) bool: counting last step, broken now
    d_contact: np.ndarray  # (4,) distance to each foot's target center
    sigma_td: float  # touchdown-time spread of feet with changed targets, s
    n_dur: int  # contact duration of the executing stage, steps
    advanced: bool = False

    def __post_init__(self) -> None:
        for name in ("correct", "wrong", "prev_correct_unmoved", "lost"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=bool))
        self.d_contact = np.asarray(self.d_contact, dtype=np.float64)
        if np.any(self.correct & self.wrong):
            raise ValueError("a foot cannot be both correct and wrong")


_TERM_NAMES = (
    "task",
    "base_height",
    "alive",
    "flat_orientation",
    "joint_accel",
    "action_rate",
    "energy",
    "undesired_collisions",
    "foot_clearance",
    "foot_velocity",
)


@dataclass
class RewardBreakdown:
    task: float = 0.0
    base_height: float = 0.0
    alive: float = 0.0
    flat_orientation: float = 0.0
    joint_accel: float = 0.0
    action_rate: float = 0.0
    energy: float = 0.0
    undesired_collisions: float = 0.0
    foot_clearance: float = 0.0
    foot_velocity: float = 0.0
    total: float = field(default=0.0)

    TERMS = _TERM_NAMES

    def finalize(self) -> "RewardBreakdown":
        self.total = float(sum(getattr(self, t) for t in _TERM_NAMES))
        return self

    def as_dict(self) -> dict[str, float]:
        return {t: float(getattr(self, t)) for t in (*_TERM_NAMES, "total")}


# -- task reward ----------------------------------------------------------------


def gamma_rew(d_contact: float, sigma_td: float) -> float:
    """Tracking gain: proximity to the target center times touchdown synchrony.
    Both factors live in (1/2, 1], so the product is in (1/4, 1]."""
    proximity = 0.5 + 0.5 * math.exp(-PROXIMITY_SHARPNESS * d_contact)
    variance = 0.5 + 0.5 * math.exp(-((sigma_td / 2.0) ** 2))
    return proximity * variance


def gamma_pen(curriculum_level: int, rate: float = 0.25, cap: float = 1.0) -> float:
    """Penalty gain: zero at level 0, growing by `rate` per level, capped."""
    if curriculum_level < 0:
        raise ValueError("curriculum level must be >= 0")
    return min(cap, rate * curriculum_level)


def task_reward(
    event: ContactEvent, curriculum_level: int, cfg: RewardConfig | None = None
) -> float:
    """Unscaled contact-tracking reward for one control step."""
    cfg = cfg or RewardConfig()
    pen = gamma_pen(curriculum_level, cfg.gamma_pen_rate, cfg.gamma_pen_cap)
    variance = 0.5 + 0.5 * math.exp(-((event.sigma_td / 2.0) ** 2))
    proximity = 0.5 + 0.5 * np.exp(-PROXIMITY_SHARPNESS * event.d_contact)
    gains = proximity * variance

    n_total = len(event.correct)
    n_corr = int(event.correct.sum())
    n_wrong = int(event.wrong.sum())
    n_prev = int(event.prev_correct_unmoved.sum())
    n_lost = int(event.lost.sum())

    reward = float(gains[event.correct].sum())
    # The unmoved-contact discount never flips the penalty into a bonus.
    reward -= pen * max(n_wrong - n_prev, 0)
    reward -= pen * n_total * n_lost
    if n_corr == n_total:
        reward += (50.0 / max(event.n_dur, 1)) * float(gains[event.correct].mean())
    return reward


# -- regularization ----------------------------------------------------------------


def regularization_rewards(
    state,
    prev_state,
    action: np.ndarray,
    prev_action: np.ndarray,
    cfg: RewardConfig,
    control_dt: float = 0.02,
    ground_height: float = 0.0,
) -> dict[str, float]:
    """Scaled smoothing/posture terms. `ground_height` is the terrain height
    under the base, so the height reward tracks clearance, not altitude."""
    from .rotations import quat_rotate_inv

    h = float(state.base_pos[2]) - ground_height
    base_height = cfg.base_height_scale * math.exp(
        -cfg.base_height_sharpness * (h - cfg.base_height_target) ** 2
    )
    g_proj = quat_rotate_inv(state.base_quat, np.array([0.0, 0.0, -1.0]))
    flat = cfg.flat_orientation_scale * float(g_proj[0] ** 2 + g_proj[1] ** 2)
    qdd = (state.joint_vel - prev_state.joint_vel) / control_dt
    joint_accel = cfg.joint_accel_scale * float(np.sum(qdd**2))
    action_rate = cfg.action_rate_scale * float(np.sum((action - prev_action) ** 2))
    energy = cfg.energy_scale * float(np.sum(np.abs(state.last_torques * state.joint_vel)))
    collisions = cfg.collision_scale * float(np.count_nonzero(state.undesired_contact))
    return {
        "base_height": base_height,
        "alive": cfg.alive_scale,
        "flat_orientation": flat,
        "joint_accel": joint_accel,
        "action_rate": action_rate,
        "energy": energy,
        "undesired_collisions": collisions,
    }


def foot_clearance_penalty(
    foot_heights: np.ndarray, foot_xy_speeds: np.ndarray, cfg: RewardConfig
) -> float:
    """Penalize dragging: planar foot speed weighted by an inverse sigmoid of
    foot height above local terrain. Returns the scaled term."""
    h = np.asarray(foot_heights, dtype=float)
    v = np.asarray(foot_xy_speeds, dtype=float)
    sig = 1.0 / (1.0 + np.exp(cfg.clearance_sharpness * h))
    return cfg.foot_clearance_scale * float(np.sum(sig * v))


def softplus_barrier(x: float, mu: float) -> float:
    """Smooth one-sided barrier: ~0 below zero, ~x above, blended over mu."""
    z = x / mu
    if z > 30.0:  # exp overflow guard; softplus is x + mu*exp(-z) here
        return x
    return mu * math.log1p(math.exp(z))


def foot_velocity_barrier(foot_speeds: np.ndarray, cfg: RewardConfig) -> float:
    """Scaled penalty on foot speeds beyond the threshold."""
    total = sum(
        softplus_barrier(float(v) - cfg.velocity_threshold, cfg.barrier_smoothness)
        for v in np.asarray(foot_speeds, dtype=float)
    )
    return cfg.foot_velocity_scale * total


# -- termination --------------------------------------------------------------------


def check_termination(state, progress, cfg: RewardConfig) -> Termination:
    """Episode status from collision flags and stage-progress timers. Body
    contact wins over everything; stalling triggers once the active stage has
    gone `stall_timeout_s` without progressing."""
    if np.any(state.undesired_contact):
        return Termination.BODY_CONTACT
    if progress.complete:
        return Termination.PLAN_COMPLETE
    stall_steps = int(round(cfg.stall_timeout_s / progress.control_dt))
    if progress.step - progress.last_advance_step >= stall_steps:
        return Termination.STALLED
    return Termination.RUNNING
