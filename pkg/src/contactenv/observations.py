"""Observation vectors for the actor (77) and critic (105).

The critic sees the actor's observations noiselessly plus privileged per-foot
timing and velocity state. Segment layout is fixed and published so external
consumers can slice the flat arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plan import ContactPlan, PlanProgress, current_targets
from .rotations import quat_rotate_inv

ACTOR_DIM = 77
CRITIC_DIM = 105

ACTOR_SEGMENTS = (
    ("base_lin_vel", 3),
    ("base_ang_vel", 3),
    ("projected_gravity", 3),
    ("foot_contact", 4),
    ("foot_pos", 12),
    ("contact_error", 12),
    ("contact_satisfied", 4),
    ("joint_pos", 12),
    ("joint_vel", 12),
    ("prev_action", 12),
)

CRITIC_EXTRA_SEGMENTS = (
    ("foot_vel", 12),
    ("touchdown_time", 4),
    ("stage_elapsed", 4),
    ("desired_duration", 4),
    ("manipulating", 4),
)


@dataclass(frozen=True)
class ObsLayout:
    """Named, contiguous segments of the observation vectors."""

    actor: tuple[tuple[str, int], ...] = ACTOR_SEGMENTS
    critic_extra: tuple[tuple[str, int], ...] = CRITIC_EXTRA_SEGMENTS

    def actor_offsets(self) -> dict[str, tuple[int, int]]:
        out, off = {}, 0
        for name, size in self.actor:
            out[name] = (off, off + size)
            off += size
        return out

    def critic_offsets(self) -> dict[str, tuple[int, int]]:
        out = self.actor_offsets()
        off = self.actor_dim
        for name, size in self.critic_extra:
            out[name] = (off, off + size)
            off += size
        return out

    @property
    def actor_dim(self) -> int:
        return sum(s for _, s in self.actor)

    @property
    def critic_dim(self) -> int:
        return self.actor_dim + sum(s for _, s in self.critic_extra)

    def to_dict(self) -> dict:
        return {
            "actor_dim": self.actor_dim,
            "critic_dim": self.critic_dim,
            "actor_segments": [
                {"name": n, "offset": o[0], "size": o[1] - o[0]}
                for n, o in self.actor_offsets().items()
            ],
            "critic_segments": [
                {"name": n, "offset": o[0], "size": o[1] - o[0]}
                for n, o in self.critic_offsets().items()
            ],
        }


LAYOUT = ObsLayout()


@dataclass
class NoiseConfig:
    """Uniform half-widths added to the actor's noisy segments; booleans,
    positions, and previous actions stay clean."""

    lin_vel: float = 0.1
    ang_vel: float = 0.2
    gravity: float = 0.05
    joint_pos: float = 0.01
    joint_vel: float = 1.5

    def __post_init__(self) -> None:
        if min(self.lin_vel, self.ang_vel, self.gravity, self.joint_pos, self.joint_vel) < 0:
            raise ValueError("noise half-widths must be non-negative")

    @classmethod
    def zero(cls) -> "NoiseConfig":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)


def satisfaction_flags(state, targets) -> np.ndarray:
    """Vectorized contact_satisfied over the four feet."""
    centers = np.array([t.center for t in targets])
    diff = state.foot_pos - centers
    dist2 = np.einsum("ij,ij->i", diff, diff)
    radius2 = np.array([t.radius * t.radius for t in targets])
    manip = np.array([t.manipulation for t in targets])
    return (dist2 <= radius2) & (manip | state.foot_contact)


def build_actor_obs(
    state,
    plan: ContactPlan,
    progress: PlanProgress,
    prev_action: np.ndarray,
    model,
    rng: np.random.Generator | None = None,
    noise: NoiseConfig | None = None,
) -> np.ndarray:
    """Assemble the 77-dim actor observation; per-segment uniform noise is
    drawn from rng when a NoiseConfig is given."""
    quat = state.base_quat
    targets = current_targets(progress, plan)
    centers = np.array([t.center for t in targets])

    # One stacked rotation for every base-frame vector quantity.
    stacked = np.empty((10, 3))
    stacked[0] = state.base_lin_vel
    stacked[1] = (0.0, 0.0, -1.0)
    stacked[2:6] = state.foot_pos - state.base_pos
    stacked[6:10] = centers - state.foot_pos
    rotated = quat_rotate_inv(quat, stacked)

    obs = np.empty(ACTOR_DIM)
    obs[0:3] = rotated[0]
    obs[3:6] = state.base_ang_vel
    obs[6:9] = rotated[1]
    obs[9:13] = state.foot_contact
    obs[13:25] = rotated[2:6].reshape(-1)
    obs[25:37] = rotated[6:10].reshape(-1)
    obs[37:41] = satisfaction_flags(state, targets)
    obs[41:53] = state.joint_pos - model.q_nom
    obs[53:65] = state.joint_vel
    obs[65:77] = prev_action

    if noise is not None and rng is not None:
        obs[0:3] += rng.uniform(-noise.lin_vel, noise.lin_vel, 3)
        obs[3:6] += rng.uniform(-noise.ang_vel, noise.ang_vel, 3)
        obs[6:9] += rng.uniform(-noise.gravity, noise.gravity, 3)
        obs[41:53] += rng.uniform(-noise.joint_pos, noise.joint_pos, 12)
        obs[53:65] += rng.uniform(-noise.joint_vel, noise.joint_vel, 12)
    return obs


def build_critic_obs(
    state, plan: ContactPlan, progress: PlanProgress, prev_action: np.ndarray, model
) -> np.ndarray:
    """105-dim privileged observation: the noiseless actor vector plus foot
    velocities and per-foot stage timing."""
    obs = np.empty(CRITIC_DIM)
    obs[:ACTOR_DIM] = build_actor_obs(state, plan, progress, prev_action, model)
    foot_vel = quat_rotate_inv(state.base_quat, state.foot_vel)
    targets = current_targets(progress, plan)
    obs[77:89] = foot_vel.reshape(-1)
    obs[89:93] = np.where(progress.touchdown_s >= 0.0, progress.touchdown_s, -1.0)
    obs[93:97] = progress.foot_elapsed_s()
    obs[97:101] = [t.duration_steps for t in targets]
    obs[101:105] = [float(t.manipulation) for t in targets]
    return obs
