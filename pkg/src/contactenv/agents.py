"""Scripted agents that drive the environment: a privileged kinematic tracker
(IK plus Bezier swings) used to exercise the full loop, a random agent for
fuzzing, and a line-protocol bridge for external policies.
"""

from __future__ import annotations

import json
import math
import subprocess
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .plan import Foot, current_targets
from .sim import RobotModel, ik_clamped
from .rotations import quat_rotate_inv

# External policies map the 77-dim observation to a 12-dim joint-offset action.
PolicyFn = Callable[[np.ndarray], np.ndarray]


def random_agent_action(rng: np.random.Generator, amplitude: float) -> np.ndarray:
    if amplitude < 0:
        raise ValueError("amplitude must be non-negative")
    return rng.uniform(-amplitude, amplitude, 12)


@dataclass
class SwingProfile:
    """Cubic Bezier swing: exact endpoints, apex `clearance` above the higher
    endpoint at mid-phase."""

    p0: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray
    duration_steps: int

    @classmethod
    def build(
        cls, liftoff: np.ndarray, touchdown: np.ndarray, clearance: float, duration_steps: int
    ) -> "SwingProfile":
        p0 = np.asarray(liftoff, dtype=float)
        p3 = np.asarray(touchdown, dtype=float)
        peak = max(p0[2], p3[2]) + clearance
        # z(0.5) = (z0 + 3 z1 + 3 z2 + z3)/8 with z1 = z2 pinned to hit the peak.
        zc = (8.0 * peak - p0[2] - p3[2]) / 6.0
        p1 = p0 + (p3 - p0) / 3.0
        p2 = p0 + 2.0 * (p3 - p0) / 3.0
        p1 = np.array([p1[0], p1[1], zc])
        p2 = np.array([p2[0], p2[1], zc])
        return cls(p0=p0, p1=p1, p2=p2, p3=p3, duration_steps=max(int(duration_steps), 1))

    def eval(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), 1.0)
        c = 1.0 - s
        return (
            c * c * c * self.p0
            + 3.0 * c * c * s * self.p1
            + 3.0 * c * s * s * self.p2
            + s * s * s * self.p3
        )


@dataclass
class OracleParams:
    swing_clearance: float = 0.12
    manip_clearance: float = 0.02
    min_swing_steps: int = 9
    touchdown_depth: float = 0.009  # aim below the surface to seat the contact
    base_speed: float = 0.4  # m/s reference slew
    base_yaw_rate: float = 1.5  # rad/s
    base_z_speed: float = 0.5  # m/s
    flight_swing_steps: int = 6
    sway_gain: float = 0.35
    pose_gain: float = 0.5  # proportional pull of the stance frame toward the reference
    # Stand tall at the initial stance, walk in a crouch: the lower ride
    # height keeps landing feet inside the leg workspace when the base tips
    # over a diagonal support pair.
    stand_height: float = 0.591
    walk_height: float = 0.53


class OracleTracker:
    """Privileged-state tracker: stance legs hold their targets through IK in a
    slewing base-reference frame (pulling the base along the plan), swing legs
    follow smooth-timed Bezier arcs to their next targets in the actual base
    frame. A test vehicle, not a learned-policy stand-in."""

    def __init__(self, params: OracleParams | None = None):
        self.params = params or OracleParams()
        self.last_clamped = np.zeros(4, dtype=bool)
        self._swing: list[SwingProfile | None] = [None] * 4
        self._swing_step = [0] * 4
        self._hold_point: list[np.ndarray | None] = [None] * 4
        self._last_stage: np.ndarray | None = None
        self._ref_xy = np.zeros(2)
        self._ref_yaw = 0.0
        self._ref_z = 0.0

    def reset(self, env) -> None:
        state = env.state
        self._swing = [None] * 4
        self._swing_step = [0] * 4
        self._hold_point = [None] * 4
        self._last_stage = env.progress.foot_stage.copy()
        self._ref_xy = state.base_pos[:2].copy()
        self._ref_yaw = state.heading()
        self._ref_z = self._stance_z_goal(env, current_targets(env.progress, env.plan))

    def _stance_z_goal(self, env, targets) -> float:
        zs = [t.center[2] for t in targets if not t.manipulation]
        ground = sum(zs) / len(zs) if zs else float(env.state.base_pos[2]) - 0.6
        height = (
            self.params.stand_height
            if env.progress.stage_index == 0
            else self.params.walk_height
        )
        return ground + height

    def act(self, env) -> np.ndarray:
        model: RobotModel = env.model
        state = env.state
        progress = env.progress
        targets = current_targets(progress, env.plan)
        dt = env.control_dt
        prm = self.params

        if self._last_stage is None:
            self._last_stage = progress.foot_stage.copy()

        # Feet entering a stage with a moved target start a swing; starting
        # together with a shared duration keeps touchdowns synchronized.
        starters = [
            f
            for f in Foot
            if progress.foot_stage[f] != self._last_stage[f] and progress.changed[f]
        ]
        if starters:
            dur = max(
                max(prm.min_swing_steps, targets[f].duration_steps // 2) for f in starters
            )
            if len(starters) == 4:
                # Full flight phase: shorten the hop so the unsupported base
                # falls less before the catch.
                dur = min(dur, prm.flight_swing_steps)
            for f in starters:
                t = targets[f]
                clearance = prm.manip_clearance if t.manipulation else prm.swing_clearance
                dz = 0.0 if t.manipulation else -prm.touchdown_depth
                touchdown = t.center_array() + np.array([0.0, 0.0, dz])
                self._swing[f] = SwingProfile.build(
                    state.foot_pos[f], touchdown, clearance, dur
                )
                self._swing_step[f] = 0
                self._hold_point[f] = None
        for f in Foot:
            if progress.foot_stage[f] != self._last_stage[f] and not progress.changed[f]:
                self._swing[f] = None
            self._last_stage[f] = progress.foot_stage[f]

        # Base reference slews toward the active stage's desired pose, but
        # only while all feet are planted: shifting weight during a swing
        # rocks the support diagonal and breaks the held contacts. Lifted
        # feet (swings and free-space holds) shift the reference away from
        # their hips so the weight stays over the support polygon; symmetric
        # lifts (trot diagonals, pronk) cancel out.
        stage = env.plan.stages[min(progress.stage_index, len(env.plan.stages) - 1)]
        lifted = [
            f
            for f in Foot
            if self._swing[f] is not None or targets[f].manipulation
        ]
        sway = np.zeros(2)
        if lifted:
            hips = model.hip_offsets[lifted, :2].mean(axis=0)
            c, s = math.cos(stage.heading), math.sin(stage.heading)
            sway = -prm.sway_gain * np.array([c * hips[0] - s * hips[1],
                                              s * hips[0] + c * hips[1]])
        swinging = any(p is not None for p in self._swing)
        if not swinging:
            goal_xy = np.array(stage.desired_base[:2]) + sway
            delta = goal_xy - self._ref_xy
            dist = float(np.linalg.norm(delta))
            if dist > 1e-9:
                self._ref_xy += delta * min(1.0, prm.base_speed * dt / dist)
            yaw_err = math.atan2(
                math.sin(stage.heading - self._ref_yaw),
                math.cos(stage.heading - self._ref_yaw),
            )
            lim = prm.base_yaw_rate * dt
            self._ref_yaw += min(max(yaw_err, -lim), lim)
        z_goal = self._stance_z_goal(env, targets)
        dz = z_goal - self._ref_z
        lim = prm.base_z_speed * dt
        self._ref_z += min(max(dz, -lim), lim)

        # Stance legs solve IK against a virtual base pose pulled a fraction
        # of the pose error toward the reference: the planted feet then walk
        # the base toward the plan, and expressing the result in the actual
        # (tilted) base orientation keeps the legs world-vertical, righting
        # roll and pitch through the contact geometry.
        ref_pos = np.array([self._ref_xy[0], self._ref_xy[1], self._ref_z])
        actual_yaw = state.heading()
        g = prm.pose_gain
        virt_pos = state.base_pos + g * (ref_pos - state.base_pos)
        yaw_err = math.atan2(
            math.sin(self._ref_yaw - actual_yaw), math.cos(self._ref_yaw - actual_yaw)
        )
        yaw_corr = g * yaw_err
        cy, sy = math.cos(-yaw_corr), math.sin(-yaw_corr)

        rel = np.empty((4, 3))
        for f in Foot:
            t = targets[f]
            profile = self._swing[f]
            if profile is not None:
                self._swing_step[f] += 1
                s = self._swing_step[f] / profile.duration_steps
                s_eff = s * s * (3.0 - 2.0 * s)  # ease in/out: soft touchdown
                des_w = profile.eval(s_eff)
                if s >= 1.0:
                    self._hold_point[f] = profile.p3
                    self._swing[f] = None
                rel[f] = des_w - state.base_pos
            elif t.manipulation:
                rel[f] = t.center_array() - state.base_pos
            else:
                if self._hold_point[f] is not None:
                    des_w = self._hold_point[f]
                else:
                    des_w = t.center_array() - np.array([0.0, 0.0, prm.touchdown_depth])
                rx, ry, rz = des_w - virt_pos
                rel[f] = (cy * rx - sy * ry, sy * rx + cy * ry, rz)

        in_base = quat_rotate_inv(state.base_quat, rel)
        q_des = np.empty(12)
        self.last_clamped = np.zeros(4, dtype=bool)
        for f in Foot:
            q_leg, clamped = ik_clamped(model, int(f), in_base[f])
            self.last_clamped[f] = clamped
            q_des[3 * f : 3 * f + 3] = q_leg

        action = q_des - model.q_nom
        return np.clip(
            action,
            model.joint_limits_lower - model.q_nom,
            model.joint_limits_upper - model.q_nom,
        )


class RandomAgent:
    def __init__(self, seed: int = 0, amplitude: float = 0.2):
        self.rng = np.random.default_rng(seed)
        self.amplitude = amplitude

    def reset(self, env) -> None:
        pass

    def act(self, env) -> np.ndarray:
        return random_agent_action(self.rng, self.amplitude)


class ObsPolicyAgent:
    """Adapter running an observation-based policy function in the loop."""

    def __init__(self, fn: PolicyFn):
        self.fn = fn

    def reset(self, env) -> None:
        pass

    def act(self, env) -> np.ndarray:
        return np.asarray(self.fn(env.last_obs), dtype=float)


class ExternalLineAgent:
    """Bridge to an external process: one JSON observation per line on stdin,
    one JSON action per line on stdout."""

    def __init__(self, command: str):
        self.proc = subprocess.Popen(
            command,
            shell=True,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

    def reset(self, env) -> None:
        pass

    def act(self, env) -> np.ndarray:
        self.proc.stdin.write(json.dumps([float(v) for v in env.last_obs]) + "\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        if not line:
            raise RuntimeError("external agent closed its stdout")
        return np.asarray(json.loads(line), dtype=float)

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.stdin.close()
            self.proc.terminate()
            self.proc.wait(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def make_agent(name: str, seed: int = 0, amplitude: float = 0.2, command: str | None = None):
    if name == "oracle":
        return OracleTracker()
    if name == "random":
        return RandomAgent(seed=seed, amplitude=amplitude)
    if name == "external":
        if not command:
            raise ValueError("external agent needs a command")
        return ExternalLineAgent(command)
    raise ValueError(f"unknown agent {name!r}")
