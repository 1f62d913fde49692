"""Contact-command space: spherical target regions, gait skeletons, the plan
sampler, terrain projection/feasibility filtering, and stage progression.

A plan is an ordered list of contact stages; each stage assigns one target
region per foot plus the number of control steps the foot must hold contact
inside it. Stage 0 is always the robot's initial stance footprint so episodes
begin satisfiable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum

import numpy as np

from .fileio import atomic_write_text
from .terrain import DEFAULT_EDGE_MARGIN, Heightfield, height_at, nearest_horizontal_surface

DEFAULT_TARGET_RADIUS = 0.1
MAX_TARGET_DISTANCE = 1.0


class Foot(IntEnum):
    FL = 0
    FR = 1
    RL = 2
    RR = 3


FOOT_NAMES = tuple(f.name for f in Foot)
# Lateral sign of each foot (left +1, right -1), in Foot order.
FOOT_SIDE = np.array([1.0, -1.0, 1.0, -1.0])
# Longitudinal sign (front +1, rear -1), in Foot order.
FOOT_FRONT = np.array([1.0, 1.0, -1.0, -1.0])


class Gait(str, Enum):
    TROT = "trot"
    PACE = "pace"
    BOUND = "bound"
    PRONK = "pronk"
    SINGLE_STEP = "single_step"
    MANIPULATION = "manipulation"
    WALK_THEN_MANIPULATE = "walk_then_manipulate"


LOCOMOTION_GAITS = (Gait.TROT, Gait.PACE, Gait.BOUND, Gait.PRONK, Gait.SINGLE_STEP)


class NotALocomotionGaitError(ValueError):
    pass


def gait_skeleton(gait: Gait) -> tuple[frozenset[Foot], ...]:
    """Moving-foot group per stage; the pattern repeats cyclically."""
    gait = Gait(gait)
    if gait is Gait.TROT:
        return (frozenset({Foot.FL, Foot.RR}), frozenset({Foot.FR, Foot.RL}))
    if gait is Gait.PACE:
        return (frozenset({Foot.FL, Foot.RL}), frozenset({Foot.FR, Foot.RR}))
    if gait is Gait.BOUND:
        return (frozenset({Foot.FL, Foot.FR}), frozenset({Foot.RL, Foot.RR}))
    if gait is Gait.PRONK:
        return (frozenset(Foot),)
    if gait is Gait.SINGLE_STEP:
        return tuple(frozenset({f}) for f in Foot)
    raise NotALocomotionGaitError(f"{gait.value} has no locomotion skeleton")


# -- plan data ---------------------------------------------------------------


@dataclass(frozen=True)
class ContactTarget:
    foot: Foot
    center: tuple[float, float, float]
    radius: float = DEFAULT_TARGET_RADIUS
    duration_steps: int = 1
    manipulation: bool = False
    valid: bool = True  # cleared when terrain projection found no surface

    def center_array(self) -> np.ndarray:
        return np.array(self.center)


@dataclass(frozen=True)
class ContactStage:
    stage_index: int
    desired_base: tuple[float, float, float]
    heading: float
    targets: tuple[ContactTarget, ContactTarget, ContactTarget, ContactTarget]

    def __post_init__(self) -> None:
        feet = sorted(t.foot for t in self.targets)
        if feet != [Foot.FL, Foot.FR, Foot.RL, Foot.RR]:
            raise ValueError("a stage needs exactly one target per foot")


@dataclass(frozen=True)
class ContactPlan:
    gait: Gait
    independent_progression: bool
    stages: tuple[ContactStage, ...]

    def __post_init__(self) -> None:
        if not self.stages:
            raise ValueError("a plan needs at least one stage")


# -- sampler configuration ---------------------------------------------------


@dataclass
class SamplerConfig:
    """Distribution parameters for plan sampling (ranges are inclusive)."""

    base_pos_dev: tuple[float, float] = (0.0, 0.4)  # uniform, m
    base_heading_dev: tuple[float, float] = (-math.pi / 8, math.pi / 8)  # uniform, rad
    footstep_noise_std: float = 0.05  # zero-mean gaussian, m (XY)
    p_independent: float = 0.1
    p_backward: float = 0.5
    footstep_width_mean: float = 0.2
    footstep_width_std: float = 0.1
    duration_range: tuple[int, int] = (1, 50)  # control steps
    p_manipulation: float = 0.3
    p_walk_and_manipulate: float = 0.2
    manip_x: tuple[float, float] = (-0.6, 0.6)
    manip_y: tuple[float, float] = (-0.4, 0.4)
    manip_z: tuple[float, float] = (0.0, 1.2)  # above local ground
    gait_probs: tuple[float, float, float, float, float] = (0.2, 0.2, 0.2, 0.2, 0.2)
    target_radius: float = DEFAULT_TARGET_RADIUS
    stance_half_length: float = 0.3  # fore-aft hip distance from base center
    min_footstep_width: float = 0.05
    nominal_base_height: float = 0.6
    edge_margin: float = DEFAULT_EDGE_MARGIN
    resample_attempts: int = 20
    walk_prefix_range: tuple[int, int] = (4, 8)

    def validate(self) -> None:
        if abs(sum(self.gait_probs) - 1.0) > 1e-9:
            raise ValueError("gait probabilities must sum to 1.0")
        if self.footstep_noise_std < 0 or self.footstep_width_std < 0:
            raise ValueError("standard deviations must be non-negative")
        lo, hi = self.duration_range
        if not (1 <= lo <= hi):
            raise ValueError("duration range must satisfy 1 <= lo <= hi")

    @classmethod
    def eval_trot(cls, step_length: tuple[float, float] = (0.15, 0.2),
                  width: float = 0.2, duration_steps: int = 6) -> "SamplerConfig":
        """Deterministic-geometry stepping gait used for terrain evaluation:
        trot skeleton, per-stage base advance of half a step length, fixed
        width, no footstep noise."""
        return cls(
            base_pos_dev=(step_length[0] / 2.0, step_length[1] / 2.0),
            base_heading_dev=(0.0, 0.0),
            footstep_noise_std=0.0,
            p_independent=0.0,
            p_backward=0.0,
            footstep_width_mean=width,
            footstep_width_std=0.0,
            duration_range=(duration_steps, duration_steps),
            p_manipulation=0.0,
            gait_probs=(1.0, 0.0, 0.0, 0.0, 0.0),
        )


# -- elementary draws (one function per Table row keeps them testable) -------


def draw_base_pos_dev(rng: np.random.Generator, cfg: SamplerConfig) -> float:
    return float(rng.uniform(*cfg.base_pos_dev))


def draw_heading_dev(rng: np.random.Generator, cfg: SamplerConfig) -> float:
    return float(rng.uniform(*cfg.base_heading_dev))


def draw_footstep_noise(rng: np.random.Generator, cfg: SamplerConfig) -> np.ndarray:
    return rng.normal(0.0, cfg.footstep_noise_std, size=2)


def draw_footstep_width(rng: np.random.Generator, cfg: SamplerConfig) -> float:
    return float(rng.normal(cfg.footstep_width_mean, cfg.footstep_width_std))


def draw_duration(rng: np.random.Generator, cfg: SamplerConfig) -> int:
    lo, hi = cfg.duration_range
    return int(rng.integers(lo, hi + 1))


def draw_gait(rng: np.random.Generator, cfg: SamplerConfig) -> Gait:
    idx = int(rng.choice(5, p=np.asarray(cfg.gait_probs) / sum(cfg.gait_probs)))
    return LOCOMOTION_GAITS[idx]


# -- sampling -----------------------------------------------------------------


def sample_manipulation_target(
    rng: np.random.Generator,
    cfg: SamplerConfig,
    base_pose: tuple[np.ndarray, float],
    foot: Foot,
    duration_steps: int = 1,
) -> ContactTarget:
    """Free-space target in the base's yawed frame; z is height above the
    ground under the base."""
    base_pos, heading = base_pose
    ux = rng.uniform(*cfg.manip_x)
    uy = rng.uniform(*cfg.manip_y)
    uz = rng.uniform(*cfg.manip_z)
    c, s = math.cos(heading), math.sin(heading)
    ground_z = float(base_pos[2]) - cfg.nominal_base_height
    center = (
        float(base_pos[0]) + c * ux - s * uy,
        float(base_pos[1]) + s * ux + c * uy,
        ground_z + uz,
    )
    return ContactTarget(
        foot=foot,
        center=center,
        radius=cfg.target_radius,
        duration_steps=duration_steps,
        manipulation=True,
    )


def _stance_offsets_xy(cfg: SamplerConfig, width: float) -> np.ndarray:
    """Per-foot XY offsets of the nominal footprint in the base frame."""
    return np.stack(
        [FOOT_FRONT * cfg.stance_half_length, FOOT_SIDE * max(width, cfg.min_footstep_width)],
        axis=1,
    )


def _durations(rng: np.random.Generator, cfg: SamplerConfig, independent: bool) -> list[int]:
    if independent:
        return [draw_duration(rng, cfg) for _ in Foot]
    return [draw_duration(rng, cfg)] * 4


def sample_plan(
    rng: np.random.Generator,
    cfg: SamplerConfig,
    terrain: Heightfield,
    initial_state,
    n_stages: int,
) -> "ContactPlan":
    """Draw a full contact plan: gait/manipulation branch, per-stage base-pose
    propagation, footprint targets with gaussian noise, terrain projection and
    feasibility filtering. Deterministic for a fixed generator state."""
    if n_stages < 1:
        raise ValueError("n_stages must be >= 1")
    cfg.validate()

    manipulate = rng.random() < cfg.p_manipulation
    walk_first = bool(manipulate and rng.random() < cfg.p_walk_and_manipulate)
    if manipulate:
        plan_gait = Gait.WALK_THEN_MANIPULATE if walk_first else Gait.MANIPULATION
        walk_gait = draw_gait(rng, cfg) if walk_first else None
        manip_foot = Foot(int(rng.integers(4)))
    else:
        plan_gait = draw_gait(rng, cfg)
        walk_gait = plan_gait
        manip_foot = None
    independent = bool(rng.random() < cfg.p_independent)
    backward = bool(rng.random() < cfg.p_backward)

    base_xy = np.array(initial_state.base_pos[:2], dtype=float)
    heading = initial_state.heading()
    foot_pos = np.asarray(initial_state.foot_pos, dtype=float)

    stages: list[ContactStage] = [
        _stance_stage(rng, cfg, terrain, 0, base_xy, heading, foot_pos, independent)
    ]

    if manipulate:
        n_walk = 0
        if walk_first:
            lo, hi = cfg.walk_prefix_range
            n_walk = min(int(rng.integers(lo, hi + 1)), max(n_stages - 2, 0))
        plan_stages = ["walk"] * n_walk + ["manip"] * (n_stages - 1 - n_walk)
    else:
        plan_stages = ["walk"] * (n_stages - 1)

    skeleton = gait_skeleton(walk_gait) if walk_gait is not None else ()
    walk_count = 0
    for k, kind in enumerate(plan_stages, start=1):
        prev = stages[-1]
        if kind == "manip":
            duration = _durations(rng, cfg, independent)
            targets = []
            base_pos3 = np.array(prev.desired_base)
            for f in Foot:
                if f == manip_foot:
                    targets.append(
                        sample_manipulation_target(
                            rng, cfg, (base_pos3, prev.heading), f, duration[f]
                        )
                    )
                else:
                    targets.append(replace(prev.targets[f], duration_steps=duration[f]))
            stage = ContactStage(
                stage_index=k,
                desired_base=prev.desired_base,
                heading=prev.heading,
                targets=tuple(targets),
            )
        else:
            moving = skeleton[walk_count % len(skeleton)]
            walk_count += 1
            stage = _walk_stage(rng, cfg, terrain, k, prev, moving, independent, backward)
            if stage is None:
                break
        stages.append(stage)

    plan = ContactPlan(
        gait=plan_gait, independent_progression=independent, stages=tuple(stages)
    )
    return filter_infeasible(plan)


def _stance_stage(rng, cfg, terrain, index, base_xy, heading, foot_pos, independent):
    duration = _durations(rng, cfg, independent)
    targets = []
    for f in Foot:
        p = foot_pos[f]
        q = nearest_horizontal_surface(terrain, p, cfg.edge_margin)
        center = tuple(q) if q is not None else (float(p[0]), float(p[1]), float(p[2]))
        targets.append(
            ContactTarget(
                foot=f, center=center, radius=cfg.target_radius, duration_steps=duration[f]
            )
        )
    base_z = float(np.mean([t.center[2] for t in targets])) + cfg.nominal_base_height
    return ContactStage(
        stage_index=index,
        desired_base=(float(base_xy[0]), float(base_xy[1]), base_z),
        heading=float(heading),
        targets=tuple(targets),
    )


def _walk_stage(rng, cfg, terrain, index, prev, moving, independent, backward):
    """Sample one locomotion stage; None when no feasible stage was found
    within the resample budget (the plan truncates there)."""
    direction = -1.0 if backward else 1.0
    for _ in range(max(cfg.resample_attempts, 1)):
        heading = prev.heading + draw_heading_dev(rng, cfg)
        dp = draw_base_pos_dev(rng, cfg)
        c, s = math.cos(heading), math.sin(heading)
        base_xy = np.array(prev.desired_base[:2]) + direction * dp * np.array([c, s])
        width = draw_footstep_width(rng, cfg)
        offsets = _stance_offsets_xy(cfg, width)
        duration = _durations(rng, cfg, independent)

        targets: list[ContactTarget] = []
        ok = True
        for f in Foot:
            if f not in moving:
                targets.append(replace(prev.targets[f], duration_steps=duration[f]))
                continue
            off = offsets[f]
            noise = draw_footstep_noise(rng, cfg)
            raw = np.array(
                [
                    base_xy[0] + c * off[0] - s * off[1] + noise[0],
                    base_xy[1] + s * off[0] + c * off[1] + noise[1],
                    0.0,
                ]
            )
            # Reference height for the 3D projection: the local surface when
            # it is a walkable level, else the foot's previous surface -- a
            # chasm floor far below must not capture the step.
            local = height_at(terrain, raw[0], raw[1])
            raw[2] = max(float(local), prev.targets[f].center[2] - 2.0 * terrain.resolution)
            q = nearest_horizontal_surface(terrain, raw, cfg.edge_margin)
            if q is None:
                ok = False
                break
            # Keep per-foot travel bounded like targets-to-body: a foot jump
            # beyond the reach limit is infeasible however it is phrased.
            if np.linalg.norm(q - prev.targets[f].center_array()) > MAX_TARGET_DISTANCE:
                ok = False
                break
            targets.append(
                ContactTarget(
                    foot=f,
                    center=(float(q[0]), float(q[1]), float(q[2])),
                    radius=cfg.target_radius,
                    duration_steps=duration[f],
                )
            )
        if not ok:
            continue
        base_z = float(np.mean([t.center[2] for t in targets])) + cfg.nominal_base_height
        desired_base = (float(base_xy[0]), float(base_xy[1]), base_z)
        if all(
            np.linalg.norm(t.center_array() - np.array(desired_base)) <= MAX_TARGET_DISTANCE
            for t in targets
        ):
            return ContactStage(
                stage_index=index, desired_base=desired_base, heading=heading,
                targets=tuple(targets),
            )
    return None


# -- projection & filtering ---------------------------------------------------


def project_plan(
    plan: ContactPlan, terrain: Heightfield, edge_margin: float = DEFAULT_EDGE_MARGIN
) -> ContactPlan:
    """Move every locomotion target onto the nearest horizontal surface;
    manipulation targets are free-space and pass through. Targets with no
    surface within reach are flagged invalid for the filter."""
    new_stages = []
    for stage in plan.stages:
        targets = []
        for t in stage.targets:
            if t.manipulation:
                targets.append(t)
                continue
            q = nearest_horizontal_surface(terrain, t.center_array(), edge_margin)
            if q is None:
                targets.append(replace(t, valid=False))
            else:
                targets.append(replace(t, center=(float(q[0]), float(q[1]), float(q[2]))))
        new_stages.append(replace(stage, targets=tuple(targets)))
    return replace(plan, stages=tuple(new_stages))


def filter_infeasible(plan: ContactPlan) -> ContactPlan:
    """Truncate at the first stage holding an unprojectable target or one
    farther than MAX_TARGET_DISTANCE from the stage's desired base. Stage 0
    (the initial stance) always survives."""
    keep = [plan.stages[0]]
    for stage in plan.stages[1:]:
        base = np.array(stage.desired_base)
        feasible = all(
            t.valid and np.linalg.norm(t.center_array() - base) <= MAX_TARGET_DISTANCE
            for t in stage.targets
        )
        if not feasible:
            break
        keep.append(stage)
    return replace(plan, stages=tuple(keep))


# -- satisfaction & progression -----------------------------------------------


def contact_satisfied(foot_pos: np.ndarray, in_ground_contact: bool, target: ContactTarget) -> bool:
    """Inside the closed ball around the target center; locomotion targets
    additionally require ground contact."""
    d = float(np.linalg.norm(np.asarray(foot_pos) - target.center_array()))
    if d > target.radius:
        return False
    return True if target.manipulation else bool(in_ground_contact)


@dataclass
class PlanProgress:
    """Per-foot satisfaction counters and stage pointers for one episode."""

    control_dt: float
    foot_stage: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=np.int64))
    counters: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=np.int64))
    touchdown_s: np.ndarray = field(default_factory=lambda: np.full(4, -1.0))
    foot_stage_start: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=np.int64))
    changed: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=bool))
    prev_targets: tuple = (None, None, None, None)
    step: int = 0
    last_advance_step: int = 0
    stages_completed: int = 0
    complete: bool = False
    # Event support computed during the latest update, before any advance.
    sigma_td: float = 0.0
    event_n_dur: int = 1

    @property
    def stage_index(self) -> int:
        return int(self.foot_stage.min())

    @property
    def stage_elapsed(self) -> int:
        return self.step - int(self.foot_stage_start.min())

    @property
    def stage_wall_time(self) -> float:
        return (self.step - self.last_advance_step) * self.control_dt

    def foot_elapsed_s(self) -> np.ndarray:
        return (self.step - self.foot_stage_start) * self.control_dt

    def copy(self) -> "PlanProgress":
        return replace(
            self,
            foot_stage=self.foot_stage.copy(),
            counters=self.counters.copy(),
            touchdown_s=self.touchdown_s.copy(),
            foot_stage_start=self.foot_stage_start.copy(),
            changed=self.changed.copy(),
        )


def new_progress(plan: ContactPlan, control_dt: float) -> PlanProgress:
    return PlanProgress(control_dt=control_dt)


def current_target(progress: PlanProgress, plan: ContactPlan, foot: Foot) -> ContactTarget:
    idx = min(int(progress.foot_stage[foot]), len(plan.stages) - 1)
    return plan.stages[idx].targets[foot]


def current_targets(progress: PlanProgress, plan: ContactPlan) -> list[ContactTarget]:
    return [current_target(progress, plan, f) for f in Foot]


def update_progress(
    progress: PlanProgress, plan: ContactPlan, satisfied, dt: float
) -> tuple[PlanProgress, bool, np.ndarray]:
    """Advance the per-foot counters by one control step.

    Satisfied feet count up (capped at their duration), unsatisfied feet reset
    and report lost=True if they were counting. With uniform progression the
    stage advances once every counter has reached its duration; with
    independent progression each foot moves to its own next target as soon as
    its counter completes.
    """
    if progress.stage_index >= len(plan.stages):
        raise ValueError("progress is already past the final stage")
    p = progress.copy()
    p.step += 1
    lost = np.zeros(4, dtype=bool)
    n_stages = len(plan.stages)
    step = p.step

    counters = p.counters
    touchdown = p.touchdown_s
    stage_start = p.foot_stage_start
    foot_stage = p.foot_stage
    changed = p.changed

    durations = [0, 0, 0, 0]
    active = [False] * 4
    for f in range(4):
        fs = int(foot_stage[f])
        active[f] = fs < n_stages
        durations[f] = plan.stages[min(fs, n_stages - 1)].targets[f].duration_steps
        if not active[f]:
            continue
        if satisfied[f]:
            if touchdown[f] < 0.0:
                touchdown[f] = (step - stage_start[f]) * dt
            if counters[f] < durations[f]:
                counters[f] += 1
        else:
            if counters[f] > 0:
                lost[f] = True
                counters[f] = 0

    # Touchdown-time spread over feet whose targets changed this stage,
    # evaluated before any advance; unlanded feet contribute their elapsed time.
    if changed.any():
        times = np.where(touchdown >= 0.0, touchdown, (step - stage_start) * dt)
        p.sigma_td = float(np.std(times[changed]))
    else:
        p.sigma_td = 0.0
    p.event_n_dur = max(
        (durations[f] for f in range(4) if active[f]), default=1
    )

    advanced = False
    prev_targets = list(p.prev_targets)
    old_min = int(foot_stage.min())
    if plan.independent_progression:
        for f in Foot:
            if active[f] and counters[f] >= durations[f]:
                _advance_foot(p, plan, f, prev_targets)
                advanced = True
    else:
        if all(counters[f] >= durations[f] for f in range(4)):
            for f in Foot:
                _advance_foot(p, plan, f, prev_targets)
            advanced = True
    if advanced:
        p.prev_targets = tuple(prev_targets)
        p.last_advance_step = step
        p.stages_completed += int(foot_stage.min()) - old_min
        p.complete = bool(np.all(foot_stage >= n_stages))
    return p, advanced, lost


def _advance_foot(p: PlanProgress, plan: ContactPlan, f: Foot, prev_targets: list) -> None:
    old = current_target(p, plan, f)
    prev_targets[f] = old
    p.foot_stage[f] += 1
    p.counters[f] = 0
    p.touchdown_s[f] = -1.0
    p.foot_stage_start[f] = p.step
    if p.foot_stage[f] < len(plan.stages):
        new = plan.stages[p.foot_stage[f]].targets[f]
        p.changed[f] = new.center != old.center or new.manipulation != old.manipulation
    else:
        p.changed[f] = False


# -- serialization -------------------------------------------------------------


def plan_to_dict(plan: ContactPlan) -> dict:
    return {
        "version": 1,
        "gait": plan.gait.value,
        "independent_progression": plan.independent_progression,
        "stages": [
            {
                "stage_index": st.stage_index,
                "desired_base": {
                    "xyz": [float(v) for v in st.desired_base],
                    "heading": float(st.heading),
                },
                "targets": [
                    {
                        "foot": t.foot.name,
                        "center": [float(v) for v in t.center],
                        "radius": float(t.radius),
                        "duration_steps": int(t.duration_steps),
                        "manipulation": bool(t.manipulation),
                    }
                    for t in st.targets
                ],
            }
            for st in plan.stages
        ],
    }


def plan_from_dict(data: dict) -> ContactPlan:
    if data.get("version") != 1:
        raise ValueError("unsupported plan file version")
    stages = []
    for st in data["stages"]:
        targets = tuple(
            ContactTarget(
                foot=Foot[t["foot"]],
                center=tuple(float(v) for v in t["center"]),
                radius=float(t["radius"]),
                duration_steps=int(t["duration_steps"]),
                manipulation=bool(t["manipulation"]),
            )
            for t in sorted(st["targets"], key=lambda t: Foot[t["foot"]])
        )
        stages.append(
            ContactStage(
                stage_index=int(st["stage_index"]),
                desired_base=tuple(float(v) for v in st["desired_base"]["xyz"]),
                heading=float(st["desired_base"]["heading"]),
                targets=targets,
            )
        )
    return ContactPlan(
        gait=Gait(data["gait"]),
        independent_progression=bool(data["independent_progression"]),
        stages=tuple(stages),
    )


def save_plan(path, plan: ContactPlan) -> None:
    atomic_write_text(path, json.dumps(plan_to_dict(plan)))


def load_plan(path) -> ContactPlan:
    with open(path) as f:
        return plan_from_dict(json.load(f))
