"""Episode orchestration: configuration, curriculum, stepping, and batching.

An Environment owns one robot on one terrain. Each reset regenerates the
terrain at the current curriculum difficulty, settles the robot into a static
stance, samples a fresh contact plan (stage 0 is the stance footprint), and
live-tracks plan progress, rewards, and termination while stepping.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .fileio import atomic_write_text
from ._physics import _height_at
from .observations import NoiseConfig, build_actor_obs, build_critic_obs
from .plan import (
    ContactPlan,
    Foot,
    PlanProgress,
    SamplerConfig,
    current_targets,
    new_progress,
    sample_plan,
    update_progress,
)
from .rewards import (
    ContactEvent,
    RewardBreakdown,
    RewardConfig,
    Termination,
    check_termination,
    foot_clearance_penalty,
    foot_velocity_barrier,
    regularization_rewards,
    task_reward,
)
from .sim import (
    RobotModel,
    SimConfig,
    SimDivergedError,
    default_model,
    load_model,
    settle_standing_state,
    step as sim_step,
)
from .terrain import Heightfield, TerrainKind, TerrainSpec, generate_terrain, height_at


@dataclass(frozen=True)
class CurriculumState:
    level: int = 0
    max_level: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.level <= max(self.max_level, 0):
            raise ValueError("curriculum level out of range")

    @property
    def difficulty(self) -> float:
        """Terrain scaling factor; a zero max level disables the curriculum
        and runs terrains at full difficulty."""
        return 1.0 if self.max_level <= 0 else self.level / self.max_level


def curriculum_update(cur: CurriculumState, stages_completed: int) -> CurriculumState:
    """Ten or more completed stages move the level up, fewer than five move it
    down; both clamped to [0, max]."""
    level = cur.level
    if stages_completed >= 10:
        level = min(level + 1, cur.max_level)
    elif stages_completed < 5:
        level = max(level - 1, 0)
    return CurriculumState(level=level, max_level=cur.max_level)


@dataclass
class EnvConfig:
    terrain: TerrainSpec
    sampler: SamplerConfig
    rewards: RewardConfig
    sim: SimConfig
    noise: NoiseConfig
    curriculum_initial_level: int = 0
    curriculum_max_level: int = 0
    episode_seconds: float = 20.0
    plan_stages: int = 40
    seed: int = 0
    spawn_xy: tuple[float, float] = (-1.0, 0.0)
    robot_model: str = "anymal_like"

    @classmethod
    def default(cls, terrain_kind: TerrainKind = TerrainKind.FLAT, **overrides) -> "EnvConfig":
        cfg = cls(
            terrain=TerrainSpec(kind=terrain_kind),
            sampler=SamplerConfig(),
            rewards=RewardConfig(),
            sim=SimConfig(),
            noise=NoiseConfig(),
        )
        return replace(cfg, **overrides)


class Environment:
    """One robot, one terrain, one active contact plan."""

    def __init__(self, config: EnvConfig, seed: int | None = None, observe: bool = True):
        self.config = config
        # observe=False skips building (and noising) actor observations each
        # step; batch evaluations with privileged agents don't need them.
        self.observe = observe
        self.model: RobotModel = (
            default_model()
            if config.robot_model == "anymal_like"
            else load_model(config.robot_model)
        )
        self.curriculum = CurriculumState(
            level=config.curriculum_initial_level, max_level=config.curriculum_max_level
        )
        self.rng = np.random.default_rng(config.seed if seed is None else seed)
        self.max_steps = int(round(config.episode_seconds * config.sim.control_rate))
        self._terrain_cache: dict[float, Heightfield] = {}
        self.terrain: Heightfield | None = None
        self.plan: ContactPlan | None = None
        self.progress: PlanProgress | None = None
        self.state = None
        self.prev_action = np.zeros(12)
        self.last_obs: np.ndarray | None = None
        self.step_count = 0
        self.spawn_pos = np.zeros(2)
        self._done = True
        self._offset_low = self.model.joint_limits_lower - self.model.q_nom
        self._offset_high = self.model.joint_limits_upper - self.model.q_nom

    @property
    def control_dt(self) -> float:
        return self.config.sim.control_dt

    def _terrain_for_level(self) -> Heightfield:
        factor = self.curriculum.difficulty
        if factor not in self._terrain_cache:
            self._terrain_cache[factor] = generate_terrain(self.config.terrain.scaled(factor))
        return self._terrain_cache[factor]

    def reset(self, plan: ContactPlan | None = None) -> np.ndarray:
        self.terrain = self._terrain_for_level()
        self.state = settle_standing_state(
            self.model, self.terrain, np.asarray(self.config.spawn_xy), 0.0, self.config.sim
        )
        self.spawn_pos = self.state.base_pos[:2].copy()
        if plan is None:
            plan = sample_plan(
                self.rng, self.config.sampler, self.terrain, self.state, self.config.plan_stages
            )
        self.plan = plan
        self.progress = new_progress(plan, self.control_dt)
        self.prev_action = np.zeros(12)
        self.step_count = 0
        self._done = False
        if self.observe:
            self.last_obs = build_actor_obs(
                self.state, self.plan, self.progress, self.prev_action, self.model,
                self.rng, self.config.noise,
            )
        else:
            self.last_obs = None
        return self.last_obs

    def critic_obs(self) -> np.ndarray:
        return build_critic_obs(self.state, self.plan, self.progress, self.prev_action, self.model)

    def step(self, action: np.ndarray) -> tuple[np.ndarray, RewardBreakdown, Termination, dict]:
        if self._done:
            raise RuntimeError("episode is over; call reset()")
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if action.shape != (12,) or not np.all(np.isfinite(action)):
            return self._diverged()
        action = np.clip(action, self._offset_low, self._offset_high)

        prev_state = self.state
        try:
            state = sim_step(self.model, prev_state, action, self.terrain, self.config.sim)
        except SimDivergedError:
            return self._diverged()

        targets = current_targets(self.progress, self.plan)
        diff = state.foot_pos - np.array([t.center for t in targets])
        dist2 = np.einsum("ij,ij->i", diff, diff)
        manip = np.array([t.manipulation for t in targets])
        radius2 = np.array([t.radius * t.radius for t in targets])
        satisfied = (dist2 <= radius2) & (manip | state.foot_contact)
        d_contact = np.sqrt(dist2)
        prev_targets = self.progress.prev_targets
        stage_changed = self.progress.changed
        progress, advanced, lost = update_progress(
            self.progress, self.plan, satisfied, self.control_dt
        )

        # A wrong foot is discounted while its target is the one it already
        # satisfied last stage (carried, unmoved): no rush to re-place it.
        prev_unmoved = np.zeros(4, dtype=bool)
        for f in Foot:
            if not satisfied[f] and prev_targets[f] is not None and not stage_changed[f]:
                prev_unmoved[f] = True
        event = ContactEvent(
            correct=satisfied,
            wrong=~satisfied,
            prev_correct_unmoved=prev_unmoved,
            lost=lost,
            d_contact=d_contact,
            sigma_td=progress.sigma_td,
            n_dur=progress.event_n_dur,
            advanced=advanced,
        )

        cfg = self.config.rewards
        level = self.curriculum.level
        rb = RewardBreakdown(task=cfg.task_scale * task_reward(event, level, cfg))
        hf = self.terrain
        ground_under_base = _height_at(
            hf.heights, hf.origin[0], hf.origin[1], hf.resolution,
            hf.size_x, hf.size_y, state.base_pos[0], state.base_pos[1],
        )
        for name, value in regularization_rewards(
            state, prev_state, action, self.prev_action, cfg,
            control_dt=self.control_dt, ground_height=ground_under_base,
        ).items():
            setattr(rb, name, value)
        foot_ground = height_at(self.terrain, state.foot_pos[:, 0], state.foot_pos[:, 1])
        rb.foot_clearance = foot_clearance_penalty(
            state.foot_pos[:, 2] - foot_ground,
            np.linalg.norm(state.foot_vel[:, :2], axis=1),
            cfg,
        )
        if level >= cfg.velocity_barrier_level:
            rb.foot_velocity = foot_velocity_barrier(
                np.linalg.norm(state.foot_vel, axis=1), cfg
            )
        rb.finalize()

        self.state = state
        self.progress = progress
        self.prev_action = action
        self.step_count += 1

        termination = check_termination(state, progress, cfg)
        truncated = termination is Termination.RUNNING and self.step_count >= self.max_steps
        if termination is not Termination.RUNNING or truncated:
            self._finish_episode()

        if self.observe:
            self.last_obs = build_actor_obs(
                state, self.plan, self.progress, self.prev_action, self.model,
                self.rng, self.config.noise,
            )
        info = {
            "stage_index": self.progress.stage_index,
            "stages_completed": self.progress.stages_completed,
            "foot_distance": d_contact,
            "satisfied": satisfied,
            "advanced": advanced,
            "lost": lost,
            "truncated": truncated,
            "distance_from_spawn": float(
                np.linalg.norm(state.base_pos[:2] - self.spawn_pos)
            ),
            "curriculum_level": level,
        }
        return self.last_obs, rb, termination, info

    def _diverged(self) -> tuple[np.ndarray, RewardBreakdown, Termination, dict]:
        self._finish_episode()
        info = {
            "stage_index": self.progress.stage_index,
            "stages_completed": self.progress.stages_completed,
            "foot_distance": np.full(4, np.nan),
            "satisfied": np.zeros(4, dtype=bool),
            "advanced": False,
            "lost": np.zeros(4, dtype=bool),
            "truncated": False,
            "distance_from_spawn": float(
                np.linalg.norm(self.state.base_pos[:2] - self.spawn_pos)
            ),
            "curriculum_level": self.curriculum.level,
        }
        return self.last_obs, RewardBreakdown().finalize(), Termination.SIM_DIVERGED, info

    def _finish_episode(self) -> None:
        self._done = True
        self.curriculum = curriculum_update(self.curriculum, self.progress.stages_completed)

    @property
    def done(self) -> bool:
        return self._done


class BatchEnv:
    """N independent environments with decorrelated seed streams; stepping is
    sequential but order-free because the instances share nothing."""

    def __init__(self, config: EnvConfig, n: int, base_seed: int | None = None):
        seeds = np.random.SeedSequence(config.seed if base_seed is None else base_seed)
        self.envs = [
            Environment(config, seed=np.random.default_rng(child).integers(2**63))
            for child in seeds.spawn(n)
        ]

    def __len__(self) -> int:
        return len(self.envs)

    def reset_all(self) -> list[np.ndarray]:
        return [env.reset() for env in self.envs]

    def step(self, actions) -> list[tuple]:
        return [env.step(a) for env, a in zip(self.envs, actions)]


# -- config serialization --------------------------------------------------------


def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    if isinstance(value, (TerrainKind,)):
        return value.value
    return value


def _dataclass_to_dict(obj) -> dict:
    return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}


def _dataclass_from_dict(cls, data: dict):
    defaults = cls() if cls is not TerrainSpec else None
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if defaults is not None and isinstance(getattr(defaults, f.name), tuple):
            value = tuple(value)
        kwargs[f.name] = value
    return cls(**kwargs)


def env_config_to_dict(cfg: EnvConfig) -> dict:
    return {
        "terrain_spec": {
            "kind": TerrainKind(cfg.terrain.kind).value,
            "parameters": dict(cfg.terrain.params),
            "seed": cfg.terrain.seed,
            "resolution": cfg.terrain.resolution,
        },
        "sampler_config": _dataclass_to_dict(cfg.sampler),
        "reward_config": _dataclass_to_dict(cfg.rewards),
        "sim_config": _dataclass_to_dict(cfg.sim),
        "noise_config": _dataclass_to_dict(cfg.noise),
        "curriculum": {
            "initial_level": cfg.curriculum_initial_level,
            "max_level": cfg.curriculum_max_level,
        },
        "episode_seconds": cfg.episode_seconds,
        "plan_stages": cfg.plan_stages,
        "seed": cfg.seed,
        "spawn_xy": list(cfg.spawn_xy),
        "robot_model": cfg.robot_model,
    }


def env_config_from_dict(data: dict) -> EnvConfig:
    ts = data["terrain_spec"]
    terrain = TerrainSpec(
        kind=TerrainKind(ts["kind"]),
        params=dict(ts.get("parameters", {})),
        seed=int(ts.get("seed", 0)),
        resolution=float(ts.get("resolution", 0.05)),
    )
    cur = data.get("curriculum", {})
    return EnvConfig(
        terrain=terrain,
        sampler=_dataclass_from_dict(SamplerConfig, data.get("sampler_config", {})),
        rewards=_dataclass_from_dict(RewardConfig, data.get("reward_config", {})),
        sim=_dataclass_from_dict(SimConfig, data.get("sim_config", {})),
        noise=_dataclass_from_dict(NoiseConfig, data.get("noise_config", {})),
        curriculum_initial_level=int(cur.get("initial_level", 0)),
        curriculum_max_level=int(cur.get("max_level", 0)),
        episode_seconds=float(data.get("episode_seconds", 20.0)),
        plan_stages=int(data.get("plan_stages", 40)),
        seed=int(data.get("seed", 0)),
        spawn_xy=tuple(data.get("spawn_xy", (-1.0, 0.0))),
        robot_model=data.get("robot_model", "anymal_like"),
    )


def save_env_config(path, cfg: EnvConfig) -> None:
    atomic_write_text(path, json.dumps(env_config_to_dict(cfg), indent=2))


def load_env_config(path) -> EnvConfig:
    with open(Path(path)) as f:
        return env_config_from_dict(json.load(f))
