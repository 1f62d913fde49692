import numpy as np
import pytest
from dataclasses import replace

from contactenv.env import (
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
from contactenv.plan import SamplerConfig
from contactenv.rewards import RewardBreakdown, Termination
from contactenv.terrain import TerrainKind, TerrainSpec


def quiet_config(**overrides):
    cfg = EnvConfig.default()
    cfg = replace(cfg, sampler=SamplerConfig.eval_trot(), episode_seconds=4.0, plan_stages=8)
    return replace(cfg, **overrides)


class TestCurriculum:
    def test_increment_at_ten(self):
        assert curriculum_update(CurriculumState(3, 10), 10).level == 4

    def test_decrement_below_five(self):
        assert curriculum_update(CurriculumState(3, 10), 4).level == 2

    def test_hold_between(self):
        for n in (5, 6, 7, 8, 9):
            assert curriculum_update(CurriculumState(3, 10), n).level == 3

    def test_clamped_at_bounds(self):
        assert curriculum_update(CurriculumState(0, 10), 0).level == 0
        assert curriculum_update(CurriculumState(10, 10), 25).level == 10

    def test_scripted_sequence(self):
        cur = CurriculumState(0, 10)
        levels = []
        for completed in (10, 10, 4, 7, 12):
            cur = curriculum_update(cur, completed)
            levels.append(cur.level)
        assert levels == [1, 2, 1, 1, 2]

    def test_bounded_under_random_sequences(self, rng):
        cur = CurriculumState(0, 5)
        for _ in range(500):
            cur = curriculum_update(cur, int(rng.integers(0, 20)))
            assert 0 <= cur.level <= 5

    def test_invalid_state_rejected(self):
        with pytest.raises(ValueError):
            CurriculumState(level=7, max_level=5)


class TestReset:
    def test_same_seed_same_plan_and_obs(self):
        a = Environment(quiet_config(seed=42))
        b = Environment(quiet_config(seed=42))
        oa, ob = a.reset(), b.reset()
        assert a.plan == b.plan
        assert np.array_equal(oa, ob)

    def test_different_seed_differs(self):
        a = Environment(quiet_config(seed=1))
        b = Environment(quiet_config(seed=2))
        a.reset(), b.reset()
        assert a.plan != b.plan

    def test_stage_zero_satisfied_at_spawn(self):
        env = Environment(quiet_config(seed=5))
        env.reset()
        obs, rb, term, info = env.step(np.zeros(12))
        assert np.all(info["satisfied"])

    def test_level_zero_flattens_curriculum_terrain(self):
        cfg = quiet_config(
            terrain=TerrainSpec(kind=TerrainKind.STAIRS_UP, params={"step_height": 0.2}),
            curriculum_initial_level=0,
            curriculum_max_level=5,
        )
        env = Environment(cfg)
        env.reset()
        assert np.all(env.terrain.heights == 0.0)

    def test_max_level_zero_runs_full_difficulty(self):
        cfg = quiet_config(
            terrain=TerrainSpec(kind=TerrainKind.STAIRS_UP, params={"step_height": 0.2})
        )
        env = Environment(cfg)
        env.reset()
        assert env.terrain.heights.max() > 0.19


class TestStep:
    def test_reward_breakdown_additive(self):
        env = Environment(quiet_config(seed=3))
        env.reset()
        for _ in range(30):
            if env.done:
                break
            obs, rb, term, info = env.step(np.zeros(12))
            assert rb.total == pytest.approx(
                sum(getattr(rb, t) for t in RewardBreakdown.TERMS), abs=1e-12
            )

    def test_nan_action_ends_episode_as_diverged(self):
        env = Environment(quiet_config(seed=3))
        env.reset()
        obs, rb, term, info = env.step(np.full(12, np.nan))
        assert term is Termination.SIM_DIVERGED
        assert env.done
        with pytest.raises(RuntimeError):
            env.step(np.zeros(12))

    def test_wrong_action_shape_diverges(self):
        env = Environment(quiet_config(seed=3))
        env.reset()
        obs, rb, term, info = env.step(np.zeros(11))
        assert term is Termination.SIM_DIVERGED

    def test_truncation_at_episode_limit(self):
        from contactenv.agents import OracleTracker

        env = Environment(quiet_config(seed=3, episode_seconds=1.0))
        env.reset()
        agent = OracleTracker()
        agent.reset(env)
        steps = 0
        info = {}
        while not env.done:
            obs, rb, term, info = env.step(agent.act(env))
            steps += 1
        assert steps <= 50
        if term is Termination.RUNNING:
            assert info["truncated"]

    def test_step_seconds_match_control_rate(self):
        env = Environment(quiet_config())
        assert env.control_dt == pytest.approx(1.0 / env.config.sim.control_rate)

    def test_stand_advances_stage_and_pays_bonus(self):
        env = Environment(quiet_config(seed=11))
        env.reset()
        from contactenv.agents import OracleTracker

        agent = OracleTracker()
        agent.reset(env)
        bonus_steps = []
        advances = 0
        for i in range(120):
            if env.done:
                break
            obs, rb, term, info = env.step(agent.act(env))
            if info["advanced"]:
                advances += 1
                # all-correct bonus present in the task term on the advance step
                n_dur = env.plan.stages[info["stage_index"] - 1].targets[0].duration_steps
                assert rb.task / env.config.rewards.task_scale > 50.0 / max(n_dur, 1) * 0.25
                bonus_steps.append(i)
        assert advances >= 1

    def test_critic_obs_available(self):
        env = Environment(quiet_config(seed=2))
        env.reset()
        assert env.critic_obs().shape == (105,)
        env.step(np.zeros(12))
        assert env.critic_obs().shape == (105,)

    def test_observe_false_skips_obs(self):
        env = Environment(quiet_config(seed=2), observe=False)
        assert env.reset() is None
        obs, rb, term, info = env.step(np.zeros(12))
        assert obs is None


class TestCurriculumInEnv:
    def test_level_updates_after_episode(self):
        cfg = quiet_config(
            seed=4, curriculum_initial_level=1, curriculum_max_level=5, episode_seconds=1.0
        )
        env = Environment(cfg)
        env.reset()
        while not env.done:
            env.step(np.zeros(12))
        # a short frozen episode completes < 5 stages: level decays
        assert env.curriculum.level == 0


class TestBatchEnv:
    def test_batch_runs_independently(self):
        batch = BatchEnv(quiet_config(seed=8), n=3)
        obs = batch.reset_all()
        assert len(obs) == 3
        plans = [env.plan for env in batch.envs]
        assert plans[0] != plans[1] and plans[1] != plans[2]
        results = batch.step([np.zeros(12)] * 3)
        assert len(results) == 3

    def test_batch_deterministic_given_seed(self):
        a = BatchEnv(quiet_config(), n=2, base_seed=99)
        b = BatchEnv(quiet_config(), n=2, base_seed=99)
        a.reset_all()
        b.reset_all()
        for ea, eb in zip(a.envs, b.envs):
            assert ea.plan == eb.plan


class TestConfigIO:
    def test_round_trip(self, tmp_path):
        cfg = quiet_config(seed=17)
        path = tmp_path / "env.json"
        save_env_config(path, cfg)
        loaded = load_env_config(path)
        assert env_config_to_dict(loaded) == env_config_to_dict(cfg)
        save_env_config(tmp_path / "b.json", loaded)
        assert (tmp_path / "b.json").read_bytes() == path.read_bytes()

    def test_dict_contains_declared_sections(self):
        d = env_config_to_dict(quiet_config())
        for key in (
            "terrain_spec",
            "sampler_config",
            "reward_config",
            "sim_config",
            "noise_config",
            "curriculum",
            "episode_seconds",
            "seed",
        ):
            assert key in d

    def test_defaults_fill_missing_fields(self):
        cfg = env_config_from_dict({"terrain_spec": {"kind": "flat"}})
        assert cfg.sim.control_rate == 50.0
        assert cfg.rewards.task_scale == 3.0
