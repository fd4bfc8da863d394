import math

import numpy as np
import pytest

from singularguard import kernels, _kernels_py
from singularguard.kinematics import (KinematicModel, KinematicsError, UR10_DH, chain_max_reach,
                                      clamp_to_limits, compute_jacobian,
                                      forward_kinematics, joint_config, sample_configs, tcp_position,
                                      within_limits)
from singularguard.metrics import min_singular_value


def fd_jacobian(model, q, h=1e-6):
    """Central differences of position and of the rotation (angular part via R' R^T)."""
    J = np.zeros((6, 6))
    for i in range(6):
        dq = np.zeros(6)
        dq[i] = h
        p1, R1 = forward_kinematics(model, q + dq)
        p0, R0 = forward_kinematics(model, q - dq)
        J[:3, i] = (p1 - p0) / (2 * h)
        W = (R1 - R0) / (2 * h) @ forward_kinematics(model, q).orientation.T
        J[3:, i] = [W[2, 1], W[0, 2], W[1, 0]]
    return J


def test_zero_pose_matches_hand_evaluated_chain(model):
    # x = a2 + a3, y = -(d4 + d6), z = d1 - d5 for the stretched arm
    pos = tcp_position(model, np.zeros(6))
    np.testing.assert_allclose(pos, [-1.1843, -0.256141, 0.0116], atol=1e-12)


def test_base_half_turn_symmetry(model):
    p0 = tcp_position(model, np.zeros(6))
    p1 = tcp_position(model, [math.pi, 0, 0, 0, 0, 0])
    np.testing.assert_allclose(p1[:2], -p0[:2], atol=1e-12)
    assert abs(p1[2] - p0[2]) < 1e-12


def test_base_rotation_equivariance(model, rng):
    for q in sample_configs(model, 20, rng):
        d = rng.uniform(-1, 1)
        p = tcp_position(model, q)
        q2 = q.copy()
        q2[0] += d
        c, s = math.cos(d), math.sin(d)
        Rz = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
        np.testing.assert_allclose(tcp_position(model, q2), Rz @ p, atol=1e-10)


def test_reach_bound_and_orthonormality(model, rng):
    for q in sample_configs(model, 500, rng):
        pose = forward_kinematics(model, q)
        assert np.linalg.norm(pose.position) <= model.max_reach + 1e-9
        R = pose.orientation
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-9)
        assert abs(np.linalg.det(R) - 1.0) < 1e-9


def test_max_reach_closed_form_matches_numeric_search(model):
    from scipy.optimize import minimize
    rng = np.random.default_rng(3)
    best = 0.0
    for _ in range(30):
        r = minimize(lambda q: -np.linalg.norm(tcp_position(model, q)), rng.uniform(-math.pi, math.pi, 6))
        best = max(best, -r.fun)
    assert abs(best - model.max_reach) < 1e-7
    assert model.max_reach == pytest.approx(1.4697497132643615, abs=1e-12)


def test_jacobian_matches_finite_differences(model, rng):
    worst = 0.0
    for q in sample_configs(model, 100, rng):
        worst = max(worst, np.max(np.abs(compute_jacobian(model, q) - fd_jacobian(model, q))))
    assert worst <= 1e-5


def test_stretched_arm_is_rank_deficient(model):
    assert min_singular_value(compute_jacobian(model, np.zeros(6))) < 1e-8


def test_base_joint_has_no_vertical_velocity(model, rng):
    for q in sample_configs(model, 10, rng):
        assert compute_jacobian(model, q)[2, 0] == 0.0


def test_forward_kinematics_is_deterministic(model, rng):
    q = sample_configs(model, 1, rng)[0]
    a, b = forward_kinematics(model, q), forward_kinematics(model, q.copy())
    assert np.array_equal(a.position, b.position) and np.array_equal(a.orientation, b.orientation)


def test_out_of_limit_input_still_evaluates(model):
    q = np.full(6, 3 * math.pi)
    assert not within_limits(model, q)
    assert np.all(np.isfinite(forward_kinematics(model, q).position))


def test_backends_agree(model, rng):
    for q in sample_configs(model, 50, rng):
        T1, J1 = kernels.forward_and_jacobian(model.dh, q)
        T2, J2 = _kernels_py.forward_and_jacobian(model.dh, q)
        np.testing.assert_allclose(T1, T2, atol=1e-13)
        np.testing.assert_allclose(J1, J2, atol=1e-13)
        np.testing.assert_allclose(kernels.forward(model.dh, q), T1, atol=1e-15)


def test_clamp(model):
    q = np.array([0.1, -0.2, 7.0, -7.0, 0.0, 2 * math.pi])
    out = clamp_to_limits(model, q)
    assert out[2] == model.upper[2] and out[3] == model.lower[3]
    np.testing.assert_array_equal(out[[0, 1, 4, 5]], q[[0, 1, 4, 5]])
    inside = np.array([0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
    np.testing.assert_array_equal(clamp_to_limits(model, inside), inside)


@pytest.mark.parametrize("bad", [[0] * 5, [0, 0, 0, 0, 0, math.nan], [0, 0, 0, 0, 0, math.inf]])
def test_joint_config_rejects_bad_input(bad):
    with pytest.raises(KinematicsError):
        joint_config(bad)


def test_model_validation():
    with pytest.raises(KinematicsError):
        KinematicModel(limits=np.array([[1.0, -1.0]] * 6))
    with pytest.raises(KinematicsError):
        KinematicModel(max_reach=1.5)
    m = KinematicModel()
    assert not m.dh.flags.writeable


def test_model_round_trips_through_dict(model):
    m2 = KinematicModel.from_dict(model.to_dict())
    np.testing.assert_array_equal(m2.dh, model.dh)
    assert m2.max_reach == model.max_reach
    with pytest.raises(KinematicsError):
        KinematicModel.from_dict({**model.to_dict(), "payload": 3})


def test_numeric_reach_fallback_for_non_ur_chain():
    dh = np.array(UR10_DH, dtype=float).copy()
    dh[1, 2] = 0.3  # breaks the UR-family alpha pattern
    r = chain_max_reach(dh)
    assert 0 < r < 2.0
