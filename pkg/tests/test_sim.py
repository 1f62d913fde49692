import math

import numpy as np
import pytest

from contactenv.plan import FOOT_SIDE
from contactenv.rotations import quat_rotate, random_unit_quat
from contactenv.sim import (
    SimConfig,
    SimDivergedError,
    check_body_collision,
    default_model,
    default_state,
    forward_kinematics,
    ik_clamped,
    inverse_kinematics,
    leg_points_base,
    settle_standing_state,
    step,
)
from contactenv.terrain import TerrainKind, TerrainSpec, generate_terrain


@pytest.fixture(scope="module")
def model():
    return default_model()


@pytest.fixture(scope="module")
def flat():
    return generate_terrain(TerrainSpec(kind=TerrainKind.FLAT))


def rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def fk_oracle(model, leg, q_leg):
    """Independent homogeneous-transform chain for one leg. Hip abduction
    rotates about +X; flexion joints rotate about -Y (positive angles swing
    the links forward), uniformly for all four legs."""
    hip = model.hip_offsets[leg]
    ab = np.array([0.0, FOOT_SIDE[leg] * model.abduction_offset, 0.0])
    upper = rot_y(-q_leg[1]) @ np.array([0.0, 0.0, -model.upper_leg_length])
    lower = (
        rot_y(-q_leg[1]) @ rot_y(-q_leg[2]) @ np.array([0.0, 0.0, -model.lower_leg_length])
    )
    return hip + rot_x(q_leg[0]) @ (ab + upper + lower)


class TestKinematics:
    def test_nominal_footprint_symmetric(self, model):
        feet = forward_kinematics(
            model, np.zeros(3), np.array([1.0, 0, 0, 0]), model.q_nom
        )
        assert np.allclose(feet[:, 2], -0.6, atol=1e-12)
        # symmetric about both base axes
        assert feet[0][0] == pytest.approx(-feet[2][0])
        assert feet[0][1] == pytest.approx(-feet[1][1])
        assert feet[0][1] == pytest.approx(feet[2][1])
        assert np.allclose(np.abs(feet[:, 0]), 0.3)
        assert np.allclose(np.abs(feet[:, 1]), 0.2)

    def test_straight_leg_reach(self, model):
        q = model.q_nom.copy()
        q[1], q[2] = 0.3, 0.0  # FL knee fully extended
        foot_b, _ = leg_points_base(model, q)
        hip_pivot = model.hip_offsets[0] + np.array([0, model.abduction_offset, 0])
        reach = np.linalg.norm(foot_b[0] - hip_pivot)
        assert reach == pytest.approx(model.upper_leg_length + model.lower_leg_length)

    def test_fk_matches_transform_chain_oracle(self, model, rng):
        for _ in range(300):
            q = rng.uniform(model.joint_limits_lower, model.joint_limits_upper)
            foot_b, _ = leg_points_base(model, q)
            for leg in range(4):
                want = fk_oracle(model, leg, q.reshape(4, 3)[leg])
                assert np.allclose(foot_b[leg], want, atol=1e-9)

    def test_fk_composes_with_base_pose(self, model, rng):
        q = model.q_nom
        quat = random_unit_quat(rng)
        pos = rng.normal(size=3)
        feet = forward_kinematics(model, pos, quat, q)
        foot_b, _ = leg_points_base(model, q)
        assert np.allclose(feet, pos + quat_rotate(quat, foot_b), atol=1e-12)


class TestInverseKinematics:
    def test_round_trip_at_nominal(self, model):
        foot_b, _ = leg_points_base(model, model.q_nom)
        for leg in range(4):
            q = inverse_kinematics(model, leg, foot_b[leg])
            assert q is not None
            assert np.allclose(q, model.q_nom.reshape(4, 3)[leg], atol=1e-9)

    def test_round_trip_random_targets(self, model, rng):
        hits = 0
        while hits < 10_000:
            leg = int(rng.integers(4))
            q_leg = rng.uniform(
                [-0.7, -1.5, -2.4 if leg < 2 else 0.1],
                [0.7, 1.5, -0.1 if leg < 2 else 2.4],
            )
            q = model.q_nom.copy()
            q[3 * leg : 3 * leg + 3] = q_leg
            foot_b, _ = leg_points_base(model, q)
            got = inverse_kinematics(model, leg, foot_b[leg])
            assert got is not None
            q2 = model.q_nom.copy()
            q2[3 * leg : 3 * leg + 3] = got
            foot2, _ = leg_points_base(model, q2)
            assert np.linalg.norm(foot2[leg] - foot_b[leg]) <= 1e-9
            hits += 1

    def test_unreachable_outside_annulus(self, model):
        target = model.hip_offsets[0] + np.array(
            [0.0, model.abduction_offset, -(model.upper_leg_length + model.lower_leg_length + 0.01)]
        )
        assert inverse_kinematics(model, 0, target) is None

    def test_clamped_always_returns(self, model, rng):
        for _ in range(2000):
            target = rng.uniform([-1.5, -1.5, -1.5], [1.5, 1.5, 1.5])
            q, clamped = ik_clamped(model, int(rng.integers(4)), target)
            assert np.all(np.isfinite(q))


class TestStepDynamics:
    def test_ballistic_drop(self, model, flat):
        cfg = SimConfig()
        state = default_state(model, base_height=1.5)
        t = 0.3
        n = int(round(t / cfg.control_dt))
        for _ in range(n):
            state = step(model, state, np.zeros(12), flat, cfg)
        drop = 1.5 - state.base_pos[2]
        assert drop == pytest.approx(0.5 * cfg.gravity * t * t, rel=0.01)

    def test_standing_drift(self, model, flat):
        cfg = SimConfig()
        state = settle_standing_state(model, flat, np.array([-1.0, 0.0]), 0.0, cfg)
        weight = model.base_mass * cfg.gravity
        assert state.foot_force.sum() == pytest.approx(weight, rel=1e-6)
        z0 = state.base_pos[2]
        for _ in range(100):  # 2 s
            state = step(model, state, np.zeros(12), flat, cfg)
            assert abs(state.base_pos[2] - z0) < 0.005
        assert np.linalg.norm(state.base_pos[:2] - [-1.0, 0.0]) < 0.005

    def test_friction_stiction_under_pull(self, model, flat):
        cfg = SimConfig()
        state = settle_standing_state(model, flat, np.array([-1.0, 0.0]), 0.0, cfg)
        pull = np.array([60.0, 0.0, 0.0])  # well below mu*m*g = 235 N
        for _ in range(250):  # 5 s
            state = step(model, state, np.zeros(12), flat, cfg, external_force=pull)
        assert np.linalg.norm(state.base_lin_vel[:2]) < 0.01

    def test_no_ghost_forces(self, model, flat):
        cfg = SimConfig()
        state = default_state(model, base_height=2.0)
        nxt = step(model, state, np.zeros(12), flat, cfg)
        accel = (nxt.base_lin_vel - state.base_lin_vel) / cfg.control_dt
        assert np.allclose(accel, [0, 0, -cfg.gravity], atol=1e-9)

    def test_energy_conserved_in_free_fall(self, model, flat):
        cfg = SimConfig()
        state = default_state(model, base_height=8.0)
        state.base_lin_vel = np.array([0.3, -0.2, 0.5])
        state.base_ang_vel = np.array([0.4, -0.3, 0.6])

        def energy(s):
            ke = 0.5 * model.base_mass * float(s.base_lin_vel @ s.base_lin_vel)
            rot = 0.5 * float(s.base_ang_vel @ (model.base_inertia * s.base_ang_vel))
            pe = model.base_mass * cfg.gravity * s.base_pos[2]
            return ke + rot + pe

        e0 = energy(state)
        for _ in range(50):  # 1 s of flight
            state = step(model, state, np.zeros(12), flat, cfg)
        assert abs(energy(state) - e0) / e0 < 0.01

    def test_quaternion_norm_maintained(self, model, flat):
        # 1e5 physics substeps with a spinning base
        cfg = SimConfig()
        state = settle_standing_state(model, flat, np.array([-1.0, 0.0]), 0.0, cfg)
        state.base_ang_vel = np.array([0.2, 0.1, 0.3])
        for _ in range(100_000 // cfg.substeps):
            state = step(model, state, np.zeros(12), flat, cfg)
            assert abs(np.linalg.norm(state.base_quat) - 1.0) < 1e-6

    def test_normal_forces_never_negative(self, model, flat, rng):
        cfg = SimConfig()
        state = settle_standing_state(model, flat, np.array([-1.0, 0.0]), 0.0, cfg)
        for _ in range(200):
            state = step(model, state, rng.uniform(-0.3, 0.3, 12), flat, cfg)
            assert np.all(state.foot_force >= 0.0)

    def test_determinism(self, model, flat, rng):
        cfg = SimConfig()
        actions = rng.uniform(-0.2, 0.2, size=(50, 12))
        outs = []
        for _ in range(2):
            state = settle_standing_state(model, flat, np.array([-1.0, 0.0]), 0.0, cfg)
            for a in actions:
                state = step(model, state, a, flat, cfg)
            outs.append(state)
        assert np.array_equal(outs[0].base_pos, outs[1].base_pos)
        assert np.array_equal(outs[0].joint_pos, outs[1].joint_pos)
        assert np.array_equal(outs[0].foot_pos, outs[1].foot_pos)

    def test_feet_track_forward_kinematics(self, model, flat, rng):
        cfg = SimConfig()
        state = settle_standing_state(model, flat, np.array([-1.0, 0.0]), 0.0, cfg)
        for _ in range(20):
            state = step(model, state, rng.uniform(-0.2, 0.2, 12), flat, cfg)
            fk = forward_kinematics(model, state.base_pos, state.base_quat, state.joint_pos)
            assert np.allclose(state.foot_pos, fk, atol=1e-12)

    def test_nonfinite_action_raises(self, model, flat):
        state = default_state(model)
        with pytest.raises(SimDivergedError):
            step(model, state, np.full(12, np.nan), flat, SimConfig())


class TestBodyCollision:
    def test_nominal_stand_clear(self, model, flat):
        state = settle_standing_state(model, flat, np.array([-1.0, 0.0]), 0.0, SimConfig())
        assert not check_body_collision(model, state, flat)

    def test_lowered_base_collides(self, model, flat):
        state = default_state(model, base_height=0.1)  # box half-height is 0.15
        assert check_body_collision(model, state, flat)

    def test_riser_side_point_detection(self, model):
        # base over the lower tread, adjacent to a tall riser: the forward
        # knee/shin sample points fall below the upper tread's height
        stairs = generate_terrain(
            TerrainSpec(
                kind=TerrainKind.STAIRS_UP, params={"step_width": 0.25, "step_height": 0.4}
            )
        )
        state = default_state(model, base_height=0.55)
        state.base_pos[0] = -0.15  # front knees reach past x=0 where the riser starts
        state.foot_pos = forward_kinematics(
            model, state.base_pos, state.base_quat, state.joint_pos
        )
        pts_before = check_body_collision(model, state, stairs)
        assert pts_before  # front points are below the 0.4 m tread top
        state.base_pos[0] = -1.0
        assert not check_body_collision(model, state, stairs)
