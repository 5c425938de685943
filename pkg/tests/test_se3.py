"""Lie-core battery: round trips, adjoint identity, right-Jacobian FD check."""

import numpy as np
import pytest

from se3track import se3
from se3track.errors import AngleNearPi, NotPSD


def random_twist(rng, scale=1.0):
    return scale * rng.uniform(-1.0, 1.0, 6)


def test_hat_zero_twist():
    assert np.array_equal(se3.hat(np.zeros(6)), np.zeros((4, 4)))


def test_hat_pure_translation():
    m = se3.hat(np.array([1.0, 2.0, 3.0, 0.0, 0.0, 0.0]))
    assert np.array_equal(m[:3, 3], [1.0, 2.0, 3.0])
    assert np.array_equal(m[:3, :3], np.zeros((3, 3)))
    assert np.array_equal(m[3], np.zeros(4))


def test_hat_vee_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(20):
        xi = random_twist(rng, 3.0)
        assert np.allclose(se3.vee(se3.hat(xi)), xi, atol=1e-15)


def test_exp_pure_translation():
    pose = se3.exp_map(np.array([1.0, 0, 0, 0, 0, 0]), dt=1.0)
    assert np.allclose(pose.R, np.eye(3), atol=1e-15)
    assert np.allclose(pose.r, [1.0, 0, 0], atol=1e-15)


def test_exp_quarter_turn_about_z():
    pose = se3.exp_map(np.array([0, 0, 0, 0, 0, np.pi / 2]), dt=1.0)
    expect = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    assert np.allclose(pose.R, expect, atol=1e-12)
    assert np.allclose(pose.r, 0.0, atol=1e-15)


def test_exp_zero_is_identity():
    pose = se3.exp_map(np.zeros(6))
    assert np.allclose(pose.matrix(), np.eye(4), atol=1e-15)


def test_exp_matches_matrix_exponential():
    from scipy.linalg import expm

    rng = np.random.default_rng(1)
    for _ in range(50):
        xi = random_twist(rng, 2.0)
        assert np.allclose(se3.exp_map(xi).matrix(), expm(se3.hat(xi)), atol=1e-10)


def test_log_identity_and_pure_translation():
    assert np.allclose(se3.log_map(se3.Pose.identity()), np.zeros(6))
    assert np.allclose(
        se3.log_map(se3.Pose(np.eye(3), np.array([1.0, 0, 0]))),
        [1.0, 0, 0, 0, 0, 0],
        atol=1e-15,
    )


def test_exp_log_round_trip():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        xi = random_twist(rng, 2.0 / np.sqrt(6))
        back = se3.log_map(se3.exp_map(xi))
        assert np.allclose(back, xi, atol=1e-9)


def test_log_near_pi_raises():
    rot = se3.so3_exp(np.array([0, 0, np.pi - 1e-9]))
    with pytest.raises(AngleNearPi):
        se3.log_map(se3.Pose(rot, np.zeros(3)))


def test_small_angle_round_trip():
    rng = np.random.default_rng(3)
    for scale in (1e-10, 1e-8, 1e-7, 1e-5):
        xi = random_twist(rng, scale)
        assert np.allclose(se3.log_map(se3.exp_map(xi)), xi, atol=1e-15 + 1e-6 * scale)


def test_adjoint_identity_element():
    assert np.allclose(se3.adjoint(se3.Pose.identity()), np.eye(6))


def test_adjoint_pure_rotation_block_diag():
    rot = se3.so3_exp(np.array([0.3, -0.2, 0.5]))
    adj = se3.adjoint(se3.Pose(rot, np.zeros(3)))
    assert np.allclose(adj[:3, :3], rot)
    assert np.allclose(adj[3:, 3:], rot)
    assert np.allclose(adj[:3, 3:], 0.0)


def test_adjoint_group_identity():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        pose = se3.exp_map(random_twist(rng, 1.0))
        xi = random_twist(rng, 0.5)
        lhs = se3.exp_map(se3.adjoint(pose) @ xi).matrix()
        rhs = (pose @ se3.exp_map(xi) @ pose.inverse()).matrix()
        assert np.allclose(lhs, rhs, atol=1e-9)


def test_right_jacobian_identity_cases():
    assert np.allclose(se3.right_jacobian(np.zeros(6)), np.eye(6))
    # translations commute: J_r restricted to translation directions is the
    # identity; the only other nonzero block is the -skew(nu)/2 coupling
    nu = np.array([0.4, -1.2, 0.7])
    jr = se3.right_jacobian(np.concatenate([nu, np.zeros(3)]))
    assert np.allclose(jr[:3, :3], np.eye(3), atol=1e-12)
    assert np.allclose(jr[3:, 3:], np.eye(3), atol=1e-12)
    assert np.allclose(jr[:3, 3:], -0.5 * se3.skew(nu), atol=1e-12)


def test_right_jacobian_finite_difference():
    rng = np.random.default_rng(5)
    eps = 1e-6
    for _ in range(1000):
        xi = random_twist(rng, 1.0)
        jr = se3.right_jacobian(xi)
        delta = random_twist(rng, 1.0)
        delta /= np.linalg.norm(delta)
        num = se3.right_minus(se3.exp_map(xi + eps * delta), se3.exp_map(xi)) / eps
        assert np.linalg.norm(num - jr @ delta) < 1e-5


def test_right_plus_minus():
    rng = np.random.default_rng(6)
    pose = se3.exp_map(random_twist(rng))
    assert np.allclose(se3.right_plus(pose, np.zeros(6)).matrix(), pose.matrix())
    for _ in range(50):
        delta = random_twist(rng, 0.4)
        roundtrip = se3.right_minus(se3.right_plus(pose, delta), pose)
        assert np.allclose(roundtrip, delta, atol=1e-9)
    delta = random_twist(rng, 0.5)
    assert np.allclose(
        se3.right_plus(se3.Pose.identity(), delta).matrix(),
        se3.exp_map(delta).matrix(),
    )


def test_plus_minus_consistency():
    rng = np.random.default_rng(7)
    for _ in range(50):
        t1 = se3.exp_map(random_twist(rng))
        t2 = se3.exp_map(random_twist(rng))
        assert np.allclose(
            se3.right_plus(t1, se3.right_minus(t2, t1)).matrix(),
            t2.matrix(),
            atol=1e-9,
        )


def test_sample_twist_zero_cov():
    rng = np.random.default_rng(8)
    assert np.array_equal(se3.sample_twist(np.zeros((6, 6)), rng), np.zeros(6))


def test_sample_twist_covariance_statistics():
    rng = np.random.default_rng(9)
    a = rng.standard_normal((6, 6))
    cov = a @ a.T + 0.5 * np.eye(6)
    draws = np.array([se3.sample_twist(cov, rng) for _ in range(100_000)])
    emp = draws.T @ draws / len(draws)
    assert np.linalg.norm(emp - cov) / np.linalg.norm(cov) < 0.05


def test_sample_twist_diagonal_variances():
    rng = np.random.default_rng(10)
    var = np.array([0.1, 0.2, 0.3, 0.01, 0.02, 0.03])
    draws = np.array([se3.sample_twist(np.diag(var), rng) for _ in range(100_000)])
    assert np.all(np.abs(draws.var(axis=0) - var) / var < 0.05)


def test_sample_twist_not_psd():
    rng = np.random.default_rng(11)
    with pytest.raises(NotPSD):
        se3.sample_twist(-np.eye(6), rng)


def test_act_identity_and_vectors():
    pose = se3.Pose.identity()
    point = np.array([1.0, 2.0, 3.0, 1.0])
    assert np.allclose(se3.act(pose, point), point)
    shift = se3.Pose(np.eye(3), np.array([5.0, 0, 0]))
    vec = np.array([1.0, 2.0, 3.0, 0.0])
    assert np.allclose(se3.act(shift, vec), vec)
    assert np.allclose(se3.act(shift, point), [6.0, 2.0, 3.0, 1.0])


def test_act_preserves_inner_product():
    rng = np.random.default_rng(12)
    for _ in range(100):
        pose = se3.exp_map(random_twist(rng))
        v1 = np.append(rng.standard_normal(3), 0.0)
        v2 = np.append(rng.standard_normal(3), 0.0)
        assert np.isclose(
            se3.act(pose, v1) @ se3.act(pose, v2), v1 @ v2, atol=1e-10
        )


def test_pose_reorthonormalization():
    rot = se3.so3_exp(np.array([0.1, 0.2, 0.3])) + 1e-6 * np.ones((3, 3))
    pose = se3.Pose(rot, np.zeros(3))
    assert np.abs(pose.R.T @ pose.R - np.eye(3)).max() < 1e-12
    assert np.isclose(np.linalg.det(pose.R), 1.0)
