"""Robot symmetry operators for data augmentation.

The quadruped is mirror-symmetric front/back and left/right, giving four ops:
identity, mirror about the body X axis (front-back swap), mirror about the
body Y axis (left-right swap), and their composition, a 180-degree turn. Each
op is a signed permutation of the observation and action vectors; applying
these to recorded transitions quadruples a training batch.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .observations import ACTOR_DIM, ACTOR_SEGMENTS
from .plan import ContactPlan, ContactStage, Foot
from .rotations import matrix_to_quat, quat_to_matrix

# Foot relabeling per op (new index <- old index is the same map; all are
# involutions built from disjoint swaps).
_FOOT_PERM = {
    "identity": np.array([0, 1, 2, 3]),
    "mirror_x": np.array([2, 3, 0, 1]),  # FL<->RL, FR<->RR
    "mirror_y": np.array([1, 0, 3, 2]),  # FL<->FR, RL<->RR
    "rotate_180": np.array([3, 2, 1, 0]),
}
# Sign patterns for base-frame vectors, pseudo-vectors (angular rates), and
# leg joints (abduction, hip flexion, knee flexion).
_VEC_SIGN = {
    "identity": np.array([1.0, 1.0, 1.0]),
    "mirror_x": np.array([-1.0, 1.0, 1.0]),
    "mirror_y": np.array([1.0, -1.0, 1.0]),
    "rotate_180": np.array([-1.0, -1.0, 1.0]),
}
_PSEUDO_SIGN = {
    "identity": np.array([1.0, 1.0, 1.0]),
    "mirror_x": np.array([1.0, -1.0, -1.0]),
    "mirror_y": np.array([-1.0, 1.0, -1.0]),
    "rotate_180": np.array([-1.0, -1.0, 1.0]),
}
_JOINT_SIGN = {
    "identity": np.array([1.0, 1.0, 1.0]),
    "mirror_x": np.array([1.0, -1.0, -1.0]),
    "mirror_y": np.array([-1.0, 1.0, 1.0]),
    "rotate_180": np.array([-1.0, -1.0, -1.0]),
}
# World-frame linear maps used when mirroring whole states and plans.
_WORLD_MAP = {
    "identity": np.diag([1.0, 1.0, 1.0]),
    "mirror_x": np.diag([-1.0, 1.0, 1.0]),
    "mirror_y": np.diag([1.0, -1.0, 1.0]),
    "rotate_180": np.diag([-1.0, -1.0, 1.0]),
}

OP_NAMES = ("identity", "mirror_x", "mirror_y", "rotate_180")


@dataclass(frozen=True)
class SymmetryOp:
    """Signed permutation acting on observations and actions: out[i] =
    sign[i] * v[perm[i]]."""

    name: str
    obs_perm: np.ndarray
    obs_sign: np.ndarray
    act_perm: np.ndarray
    act_sign: np.ndarray

    def apply_obs(self, obs: np.ndarray) -> np.ndarray:
        return self.obs_sign * np.asarray(obs)[..., self.obs_perm]

    def apply_action(self, action: np.ndarray) -> np.ndarray:
        return self.act_sign * np.asarray(action)[..., self.act_perm]


def _per_foot_block_perm(foot_perm: np.ndarray, block: int) -> np.ndarray:
    return (foot_perm[:, None] * block + np.arange(block)[None, :]).reshape(-1)


def _build_op(name: str) -> SymmetryOp:
    fp = _FOOT_PERM[name]
    vec = _VEC_SIGN[name]
    pseudo = _PSEUDO_SIGN[name]
    joint = _JOINT_SIGN[name]

    perm = np.empty(ACTOR_DIM, dtype=np.int64)
    sign = np.empty(ACTOR_DIM)
    off = 0
    for seg, size in ACTOR_SEGMENTS:
        idx = np.arange(off, off + size)
        if seg == "base_lin_vel" or seg == "projected_gravity":
            perm[idx], sign[idx] = idx, vec
        elif seg == "base_ang_vel":
            perm[idx], sign[idx] = idx, pseudo
        elif seg in ("foot_contact", "contact_satisfied"):
            perm[idx] = off + fp
            sign[idx] = 1.0
        elif seg in ("foot_pos", "contact_error"):
            perm[idx] = off + _per_foot_block_perm(fp, 3)
            sign[idx] = np.tile(vec, 4)
        elif seg in ("joint_pos", "joint_vel", "prev_action"):
            perm[idx] = off + _per_foot_block_perm(fp, 3)
            sign[idx] = np.tile(joint, 4)
        else:  # pragma: no cover - layout is fixed
            raise KeyError(seg)
        off += size

    act_perm = _per_foot_block_perm(fp, 3)
    act_sign = np.tile(joint, 4)
    return SymmetryOp(name=name, obs_perm=perm, obs_sign=sign, act_perm=act_perm, act_sign=act_sign)


def symmetry_ops(model=None) -> tuple[SymmetryOp, SymmetryOp, SymmetryOp, SymmetryOp]:
    """The four ops (identity, mirror_x, mirror_y, rotate_180). They form a
    Klein four-group under composition."""
    return tuple(_build_op(name) for name in OP_NAMES)


def compose(a: SymmetryOp, b: SymmetryOp) -> tuple[np.ndarray, np.ndarray]:
    """Signed permutation of applying b first, then a; returned as
    (perm, sign) arrays over observations."""
    perm = b.obs_perm[a.obs_perm]
    sign = a.obs_sign * b.obs_sign[a.obs_perm]
    return perm, sign


def augment_batch(transitions: list[tuple[np.ndarray, np.ndarray, float]]):
    """Replicate (obs, action, reward) transitions under all four ops; rewards
    are invariant. Output is ops-major: the originals come first."""
    out = []
    for op in symmetry_ops():
        for obs, action, reward in transitions:
            out.append((op.apply_obs(obs), op.apply_action(action), reward))
    return out


# -- whole-state and plan mirroring (for equivariance checks and augmentation
#    of privileged data) --------------------------------------------------------


def mirror_point(name: str, p: np.ndarray) -> np.ndarray:
    return _WORLD_MAP[name] @ np.asarray(p, dtype=float)


def mirror_state(model, state, name: str):
    """Map a RobotState through a symmetry op: world quantities reflect or
    rotate, legs are relabeled, joints are sign-mapped. The model's nominal
    pose is fixed under every op, so sim stepping commutes with this map on
    mirror-symmetric terrain."""
    op = _build_op(name)
    M = _WORLD_MAP[name]
    fp = _FOOT_PERM[name]
    s = state.copy()
    s.base_pos = M @ state.base_pos
    s.base_lin_vel = M @ state.base_lin_vel
    s.base_ang_vel = _PSEUDO_SIGN[name] * state.base_ang_vel
    rot = quat_to_matrix(state.base_quat)
    body = np.diag(_VEC_SIGN[name])  # body-frame relabeling map
    s.base_quat = matrix_to_quat(M @ rot @ body)
    s.joint_pos = op.apply_action(state.joint_pos - model.q_nom) + model.q_nom
    s.joint_vel = op.apply_action(state.joint_vel)
    s.last_torques = op.apply_action(state.last_torques)
    s.foot_pos = (M @ state.foot_pos[fp].T).T
    s.foot_vel = (M @ state.foot_vel[fp].T).T
    s.foot_contact = state.foot_contact[fp]
    s.foot_force = state.foot_force[fp]
    s.anchor_xy = (M[:2, :2] @ state.anchor_xy[fp].T).T
    s.anchor_active = state.anchor_active[fp]
    return s


def mirror_action(name: str, action: np.ndarray) -> np.ndarray:
    return _build_op(name).apply_action(action)


def mirror_plan(plan: ContactPlan, name: str) -> ContactPlan:
    """Relabel feet and reflect target geometry through a symmetry op."""
    M = _WORLD_MAP[name]
    fp = _FOOT_PERM[name]
    stages = []
    for st in plan.stages:
        targets = [None] * 4
        for new_foot in Foot:
            src = st.targets[fp[new_foot]]
            c = M @ np.asarray(src.center)
            targets[new_foot] = replace(src, foot=Foot(int(new_foot)), center=tuple(float(v) for v in c))
        base = M @ np.asarray(st.desired_base)
        heading = _mirror_heading(name, st.heading)
        stages.append(
            ContactStage(
                stage_index=st.stage_index,
                desired_base=tuple(float(v) for v in base),
                heading=heading,
                targets=tuple(targets),
            )
        )
    return replace(plan, stages=tuple(stages))


def _mirror_heading(name: str, heading: float) -> float:
    import math

    if name == "identity":
        return heading
    if name == "mirror_y":
        return -heading
    if name == "mirror_x":
        return math.atan2(math.sin(math.pi - heading), math.cos(math.pi - heading))
    return math.atan2(math.sin(heading + math.pi), math.cos(heading + math.pi))
