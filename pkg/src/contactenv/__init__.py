"""Contact-conditioned quadruped locomotion environments.

A contact plan assigns each foot a spherical target region and a hold
duration per stage; the environment simulates a simplified quadruped tracking
those plans over procedural terrains, with event-driven rewards, curriculum
difficulty, and symmetry augmentation operators.
"""

from .env import (
    BatchEnv,
    CurriculumState,
    EnvConfig,
    Environment,
    curriculum_update,
    env_config_from_dict,
    env_config_to_dict,
    load_env_config,
    save_env_config,
)
from .observations import (
    ACTOR_DIM,
    CRITIC_DIM,
    LAYOUT,
    NoiseConfig,
    ObsLayout,
    build_actor_obs,
    build_critic_obs,
)
from .plan import (
    ContactPlan,
    ContactStage,
    ContactTarget,
    Foot,
    Gait,
    PlanProgress,
    SamplerConfig,
    contact_satisfied,
    current_targets,
    filter_infeasible,
    gait_skeleton,
    load_plan,
    new_progress,
    project_plan,
    sample_manipulation_target,
    sample_plan,
    save_plan,
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
    gamma_pen,
    gamma_rew,
    regularization_rewards,
    task_reward,
)
from .sim import (
    RobotModel,
    RobotState,
    SimConfig,
    SimDivergedError,
    check_body_collision,
    default_model,
    forward_kinematics,
    inverse_kinematics,
    load_model,
    settle_standing_state,
    step,
)
from .symmetry import SymmetryOp, augment_batch, mirror_plan, mirror_state, symmetry_ops
from .terrain import (
    Heightfield,
    TerrainKind,
    TerrainSpec,
    edge_distance,
    generate_terrain,
    height_at,
    load_terrain,
    nearest_horizontal_surface,
    save_terrain,
)
from .agents import OracleTracker, RandomAgent, random_agent_action

__version__ = "0.1.0"
