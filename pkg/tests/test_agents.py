import numpy as np
import pytest
from dataclasses import replace

from contactenv.agents import (
    ExternalLineAgent,
    ObsPolicyAgent,
    OracleTracker,
    RandomAgent,
    SwingProfile,
    make_agent,
    random_agent_action,
)
from contactenv.env import EnvConfig, Environment
from contactenv.plan import SamplerConfig
from contactenv.sim import default_model, ik_clamped


class TestSwingProfile:
    def test_endpoints_exact(self, rng):
        p0 = rng.normal(size=3)
        p3 = rng.normal(size=3)
        prof = SwingProfile.build(p0, p3, clearance=0.12, duration_steps=10)
        assert np.array_equal(prof.eval(0.0), p0)
        assert np.array_equal(prof.eval(1.0), p3)

    def test_apex_reaches_clearance(self, rng):
        for _ in range(50):
            p0 = np.array([0.0, 0.0, rng.uniform(-0.2, 0.2)])
            p3 = np.array([0.2, 0.1, rng.uniform(-0.2, 0.2)])
            prof = SwingProfile.build(p0, p3, clearance=0.12, duration_steps=10)
            peak = max(prof.eval(s)[2] for s in np.linspace(0, 1, 101))
            assert peak >= max(p0[2], p3[2]) + 0.12 - 1e-6

    def test_mid_swing_height(self):
        prof = SwingProfile.build(np.zeros(3), np.array([0.2, 0.0, 0.0]), 0.12, 10)
        assert prof.eval(0.5)[2] >= 0.08


class TestRandomAgent:
    def test_zero_amplitude_zero_action(self, rng):
        assert np.all(random_agent_action(rng, 0.0) == 0.0)

    def test_bounded(self, rng):
        for _ in range(1000):
            a = random_agent_action(rng, 0.3)
            assert a.shape == (12,)
            assert np.all(np.abs(a) <= 0.3)

    def test_seeded_determinism(self):
        a = RandomAgent(seed=5, amplitude=0.2)
        b = RandomAgent(seed=5, amplitude=0.2)
        assert np.array_equal(a.act(None), b.act(None))

    def test_negative_amplitude_rejected(self, rng):
        with pytest.raises(ValueError):
            random_agent_action(rng, -1.0)


@pytest.fixture(scope="module")
def trot_env():
    cfg = replace(
        EnvConfig.default(),
        sampler=SamplerConfig.eval_trot(),
        episode_seconds=20.0,
        plan_stages=40,
        seed=3,
    )
    return cfg


class TestOracle:
    def test_stance_action_near_zero(self, trot_env):
        env = Environment(trot_env, observe=False)
        env.reset()
        agent = OracleTracker()
        agent.reset(env)
        action = agent.act(env)
        assert np.max(np.abs(action)) < 0.05

    def test_actions_always_finite_full_loop(self, trot_env):
        env = Environment(replace(trot_env, sampler=SamplerConfig(), seed=9), observe=False)
        agent = OracleTracker()
        for ep in range(3):
            env.reset()
            agent.reset(env)
            while not env.done:
                a = agent.act(env)
                assert np.all(np.isfinite(a))
                env.step(a)

    def test_ik_pipeline_finite_under_fuzz(self, rng):
        # the oracle's action path is IK + clamping; fuzz it over a huge box
        # of targets, including unreachable and degenerate ones
        model = default_model()
        n = 1_000_000
        targets = rng.uniform(-2.0, 2.0, size=(n, 3))
        targets[::1000] = 0.0  # exactly-degenerate points
        legs = rng.integers(0, 4, size=n)
        out = np.empty((n, 3))
        for i in range(n):
            out[i], _ = ik_clamped(model, int(legs[i]), targets[i])
        assert np.all(np.isfinite(out))

    def test_advances_ten_stages_on_flat_trot(self, trot_env):
        """A 20 s episode with the default stepping gait should clear 10
        stages in at least 80% of seeded runs."""
        wins = 0
        runs = 500
        for seed in range(runs):
            env = Environment(replace(trot_env, seed=seed), observe=False)
            agent = OracleTracker()
            env.reset()
            agent.reset(env)
            while not env.done:
                _, _, _, info = env.step(agent.act(env))
                if info["stages_completed"] >= 10:
                    break
            wins += info["stages_completed"] >= 10
        assert wins / runs >= 0.8

    def test_pronk_touchdowns_synchronized(self):
        cfg = SamplerConfig.eval_trot(duration_steps=6)
        cfg.gait_probs = (0.0, 0.0, 0.0, 1.0, 0.0)
        env_cfg = replace(
            EnvConfig.default(), sampler=cfg, episode_seconds=15.0, plan_stages=25, seed=4
        )
        env = Environment(env_cfg, observe=False)
        agent = OracleTracker()
        env.reset()
        agent.reset(env)
        assert env.plan.gait.value == "pronk"
        sigmas = []
        while not env.done:
            _, _, _, info = env.step(agent.act(env))
            if info["advanced"] and env.progress.stage_index > 1:
                sigmas.append(env.progress.sigma_td)
        assert len(sigmas) >= 2
        assert max(sigmas) < 0.06


class TestExternalBridge:
    def test_line_protocol_round_trip(self, trot_env):
        env = Environment(trot_env)
        env.reset()
        script = (
            "import sys, json\n"
            "for line in sys.stdin:\n"
            "    obs = json.loads(line)\n"
            "    print(json.dumps([0.0] * 12), flush=True)\n"
        )
        with ExternalLineAgent(f'python3 -c "{script}"') as agent:
            a = agent.act(env)
            assert np.array_equal(a, np.zeros(12))
            env.step(a)
            a = agent.act(env)
            assert a.shape == (12,)

    def test_policy_adapter(self, trot_env):
        env = Environment(trot_env)
        env.reset()
        agent = ObsPolicyAgent(lambda obs: np.full(12, 0.01))
        assert np.allclose(agent.act(env), 0.01)

    def test_make_agent_selector(self):
        assert isinstance(make_agent("oracle"), OracleTracker)
        assert isinstance(make_agent("random", seed=1), RandomAgent)
        with pytest.raises(ValueError):
            make_agent("external")
        with pytest.raises(ValueError):
            make_agent("mystery")
