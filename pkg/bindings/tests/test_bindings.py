import csv
import gc
import json
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

import contactenv_gym as gym
from contactenv.env import EnvConfig, save_env_config
from contactenv.plan import SamplerConfig


@pytest.fixture(scope="module")
def env_json(tmp_path_factory):
    cfg = replace(
        EnvConfig.default(),
        sampler=SamplerConfig.eval_trot(),
        episode_seconds=12.0,
        plan_stages=20,
        seed=7,
    )
    path = tmp_path_factory.mktemp("cfg") / "env.json"
    save_env_config(path, cfg)
    return path


class TestHandleLifecycle:
    def test_reset_returns_actor_obs(self, env_json):
        with gym.make_env(env_json, seed=1) as h:
            obs = gym.reset(h)
            assert obs.shape == (77,)

    def test_reset_deterministic(self, env_json):
        with gym.make_env(env_json, seed=5) as a, gym.make_env(env_json, seed=5) as b:
            assert np.array_equal(gym.reset(a), gym.reset(b))

    def test_step_returns_gym_tuple(self, env_json):
        with gym.make_env(env_json, seed=1) as h:
            gym.reset(h)
            obs, reward, terminated, truncated, info = gym.step(h, np.zeros(12))
            assert obs.shape == (77,)
            assert isinstance(reward, float)
            assert not terminated and not truncated
            assert info["stage_index"] == 0
            assert set(info["reward_breakdown"]) >= {"task", "total"}

    def test_wrong_action_shape_leaves_state_unchanged(self, env_json):
        with gym.make_env(env_json, seed=1) as h:
            gym.reset(h)
            before = h._native().step_count
            with pytest.raises(gym.ShapeError):
                gym.step(h, np.zeros(11))
            assert h._native().step_count == before
            obs, *_ = gym.step(h, np.zeros(12))
            assert obs.shape == (77,)

    def test_closed_handle_raises(self, env_json):
        h = gym.make_env(env_json, seed=1)
        gym.reset(h)
        gym.close(h)
        with pytest.raises(gym.ClosedHandleError):
            gym.reset(h)
        with pytest.raises(gym.ClosedHandleError):
            gym.step(h, np.zeros(12))

    def test_critic_obs(self, env_json):
        with gym.make_env(env_json, seed=1) as h:
            gym.reset(h)
            assert gym.critic_obs(h).shape == (105,)
            actor = gym.reset(h)
            # noiseless critic head differs from the noisy actor obs only by noise
            critic = gym.critic_obs(h)
            assert critic.shape == (105,)

    def test_layout_descriptor_json(self, env_json):
        with gym.make_env(env_json, seed=1) as h:
            d = gym.layout(h)
            assert json.loads(json.dumps(d)) == d
            assert d["actor_dim"] == 77
            assert d["critic_dim"] == 105
            names = {seg["name"] for seg in d["critic_segments"]}
            assert {"base_lin_vel", "contact_error", "foot_vel", "manipulating"} <= names

    def test_no_handle_leak_over_many_cycles(self, env_json):
        base = gym.core.open_handle_count()
        for _ in range(100_000):
            h = gym.make_env(env_json, seed=0)
            gym.close(h)
        gc.collect()
        assert gym.core.open_handle_count() == base


class TestVectorHandle:
    def test_batched_shapes(self, env_json):
        v = gym.make_vector_env(env_json, seeds=[1, 2, 3])
        obs = v.reset()
        assert obs.shape == (3, 77)
        obs, rewards, terms, truncs, infos = v.step(np.zeros((3, 12)))
        assert obs.shape == (3, 77)
        assert rewards.shape == (3,)
        assert len(infos) == 3
        v.close()
        with pytest.raises(gym.ClosedHandleError):
            v.reset()

    def test_batch_shape_mismatch(self, env_json):
        v = gym.make_vector_env(env_json, seeds=[1, 2])
        v.reset()
        with pytest.raises(gym.ShapeError):
            v.step(np.zeros((3, 12)))
        v.close()

    def test_vector_matches_single(self, env_json):
        v = gym.make_vector_env(env_json, seeds=[4, 9])
        obs_v = v.reset()
        singles = [gym.make_env(env_json, seed=s) for s in (4, 9)]
        obs_s = np.stack([gym.reset(h) for h in singles])
        assert np.array_equal(obs_v, obs_s)
        for _ in range(5):
            actions = np.zeros((2, 12))
            obs_v, rew_v, *_ = v.step(actions)
            obs_s = []
            rew_s = []
            for h in singles:
                o, r, *_ = gym.step(h, np.zeros(12))
                obs_s.append(o)
                rew_s.append(r)
            assert np.array_equal(obs_v, np.stack(obs_s))
            assert np.array_equal(rew_v, np.asarray(rew_s))
        v.close()
        for h in singles:
            gym.close(h)


class TestCliParity:
    def test_zero_action_tape_matches_native_cli(self, env_json, tmp_path):
        """A 500-step seeded zero-action tape produces element-wise identical
        rewards and observations through the bindings and the native CLI."""
        steps = 500
        cfg = replace(
            EnvConfig.default(),
            sampler=SamplerConfig.eval_trot(),
            episode_seconds=steps / 50.0,
            plan_stages=20,
            seed=7,
        )
        cfg_path = tmp_path / "env.json"
        save_env_config(cfg_path, cfg)
        out = tmp_path / "native"
        proc = subprocess.run(
            [
                sys.executable, "-m", "contactenv.cli", "rollout",
                "--env", str(cfg_path), "--agent", "random", "--amplitude", "0",
                "--seed", "7", "--out-dir", str(out),
                "--obs-out", str(out / "obs.csv"), "--no-figures",
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr

        with open(out / "trajectory.csv") as f:
            native_rows = list(csv.DictReader(f))
        with open(out / "obs.csv") as f:
            native_obs = [[float(v) for v in row.values()] for row in csv.DictReader(f)]

        h = gym.make_env(cfg_path, seed=7)
        gym.reset(h)
        bound_rewards, bound_obs = [], []
        for _ in range(len(native_rows)):
            obs, reward, terminated, truncated, info = gym.step(h, np.zeros(12))
            bound_rewards.append(reward)
            bound_obs.append(obs)
            if terminated or truncated:
                break
        gym.close(h)

        assert len(bound_rewards) == len(native_rows)
        for row, reward in zip(native_rows, bound_rewards):
            assert float(row["rew_total"]) == reward
        for native, bound in zip(native_obs, bound_obs):
            assert np.array_equal(np.asarray(native), bound)
