import math

import numpy as np
import pytest

from demorl.geometry import (
    AnchorSet,
    Pose,
    anchor_points,
    compose,
    interp_pose,
    inverse,
    pose_distance,
    quat_angle,
    symmetric_anchor_reduce,
    tracking_reward,
)

# ---------------------------------------------------------------------------
# Oracles: all pose algebra is cross-checked against plain 4x4 matrix math.


def mat_of(pose: Pose) -> np.ndarray:
    return pose.matrix()


def rot_z_mat(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    m = np.eye(4)
    m[:2, :2] = [[c, -s], [s, c]]
    return m


def random_pose(rng) -> Pose:
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    return Pose(rng.uniform(-1, 1, 3), q)


def assert_pose_close(a: Pose, b: Pose, pos_tol=1e-9, quat_tol=1e-9):
    np.testing.assert_allclose(a.position, b.position, atol=pos_tol)
    assert abs(abs(float(a.quaternion @ b.quaternion)) - 1.0) <= quat_tol


def test_compose_identity():
    rng = np.random.default_rng(0)
    p = random_pose(rng)
    assert_pose_close(compose(Pose.identity(), p), p, 1e-12, 1e-12)
    assert_pose_close(compose(p, Pose.identity()), p, 1e-12, 1e-12)


def test_compose_translations():
    a = Pose.from_translation(1, 0, 0)
    b = Pose.from_translation(0, 2, 0)
    assert_pose_close(compose(a, b), Pose.from_translation(1, 2, 0), 1e-12, 1e-12)


def test_compose_rotation_then_translation():
    # rotZ(90 deg) chained with translate(1,0,0): matrix product puts the
    # translation through the rotation, landing at (0,1,0).
    a = Pose.rot_z(math.pi / 2)
    b = Pose.from_translation(1, 0, 0)
    out = compose(a, b)
    np.testing.assert_allclose(out.position, [0, 1, 0], atol=1e-12)
    assert quat_angle(out.quaternion, Pose.rot_z(math.pi / 2).quaternion) < 1e-12
    # matrix-multiplication oracle
    np.testing.assert_allclose(mat_of(out), rot_z_mat(math.pi / 2) @ mat_of(b), atol=1e-12)


def test_compose_matches_matrix_oracle_random():
    rng = np.random.default_rng(1)
    for _ in range(200):
        a, b = random_pose(rng), random_pose(rng)
        np.testing.assert_allclose(mat_of(compose(a, b)), mat_of(a) @ mat_of(b), atol=1e-12)


def test_compose_associative():
    rng = np.random.default_rng(2)
    for _ in range(100):
        a, b, c = (random_pose(rng) for _ in range(3))
        assert_pose_close(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-10, 1e-10)


def test_inverse_identity_and_translation():
    assert_pose_close(inverse(Pose.identity()), Pose.identity(), 1e-15, 1e-15)
    assert_pose_close(
        inverse(Pose.from_translation(1, 2, 3)), Pose.from_translation(-1, -2, -3), 1e-15, 1e-15
    )


def test_inverse_rot_z_at_offset():
    p = Pose.rot_z(math.pi / 2, position=(1, 0, 0))
    inv = inverse(p)
    np.testing.assert_allclose(inv.position, [0, 1, 0], atol=1e-12)
    assert quat_angle(inv.quaternion, Pose.rot_z(-math.pi / 2).quaternion) < 1e-12
    # 4x4 matrix inversion oracle
    np.testing.assert_allclose(mat_of(inv), np.linalg.inv(mat_of(p)), atol=1e-12)


def test_inverse_roundtrip_tolerance():
    rng = np.random.default_rng(3)
    for _ in range(500):
        p = random_pose(rng)
        ident = compose(p, inverse(p))
        np.testing.assert_allclose(ident.position, 0.0, atol=1e-12)
        assert abs(abs(float(ident.quaternion[0])) - 1.0) <= 1e-12
        assert abs(np.linalg.norm(ident.quaternion) - 1.0) <= 1e-9


def test_anchor_points_default_set():
    anchors = AnchorSet.default()
    pts = anchor_points(Pose.identity(), anchors)
    np.testing.assert_allclose(pts, [[0.2, 0, 0], [0, 0.2, 0], [0, 0, 0.2]], atol=1e-15)

    t = Pose.from_translation(0.1, -0.2, 0.3)
    np.testing.assert_allclose(
        anchor_points(t, anchors), pts + np.array([0.1, -0.2, 0.3]), atol=1e-15
    )

    rot = Pose.rot_z(math.pi / 2)
    np.testing.assert_allclose(
        anchor_points(rot, anchors), [[0, 0.2, 0], [-0.2, 0, 0], [0, 0, 0.2]], atol=1e-12
    )
    # rotation-matrix oracle
    np.testing.assert_allclose(
        anchor_points(rot, anchors), anchors.anchors @ rot_z_mat(math.pi / 2)[:3, :3].T, atol=1e-12
    )


def test_pose_distance_values():
    anchors = AnchorSet.default()
    a = Pose.identity()
    assert pose_distance(a, a, anchors) == 0.0

    b = Pose.from_translation(0.03, 0, 0)
    assert abs(pose_distance(a, b, anchors) - 0.09) < 1e-12

    c = Pose.rot_z(math.pi / 2)
    # x and y anchors each travel 0.2*sqrt(2); z anchor is fixed
    expected = 2 * 0.2 * math.sqrt(2)
    assert abs(pose_distance(a, c, anchors) - expected) < 1e-12
    # direct evaluation oracle
    direct = sum(
        np.linalg.norm(anchor_points(a, anchors)[i] - anchor_points(c, anchors)[i])
        for i in range(3)
    )
    assert abs(pose_distance(a, c, anchors) - direct) < 1e-12


def test_pose_distance_symmetric_nonnegative():
    rng = np.random.default_rng(4)
    anchors = AnchorSet.default()
    for _ in range(200):
        a, b = random_pose(rng), random_pose(rng)
        d_ab = pose_distance(a, b, anchors)
        assert d_ab >= 0.0
        assert abs(d_ab - pose_distance(b, a, anchors)) < 1e-12


def test_pose_distance_left_invariance():
    rng = np.random.default_rng(5)
    anchors = AnchorSet.default()
    for _ in range(1000):
        a, b, g = random_pose(rng), random_pose(rng), random_pose(rng)
        d0 = pose_distance(a, b, anchors)
        d1 = pose_distance(compose(g, a), compose(g, b), anchors)
        assert abs(d0 - d1) < 1e-9


def test_pose_distance_triangle_inequality():
    rng = np.random.default_rng(6)
    anchors = AnchorSet.default()
    for _ in range(1000):
        a, b, c = (random_pose(rng) for _ in range(3))
        assert pose_distance(a, c, anchors) <= (
            pose_distance(a, b, anchors) + pose_distance(b, c, anchors) + 1e-12
        )


def test_tracking_reward_values():
    anchors = AnchorSet.default()
    a = Pose.identity()
    assert tracking_reward(a, a, anchors, alpha=10.0) == 1.0
    b = Pose.from_translation(0.03, 0, 0)
    assert abs(tracking_reward(a, b, anchors, alpha=10.0) - math.exp(-0.9)) < 1e-12
    c = Pose.rot_z(math.pi / 2)
    assert abs(tracking_reward(a, c, anchors, alpha=10.0) - math.exp(-4 * math.sqrt(2))) < 1e-12


def test_tracking_reward_log_linear_in_distance():
    rng = np.random.default_rng(7)
    anchors = AnchorSet.default()
    for _ in range(300):
        a, b = random_pose(rng), random_pose(rng)
        r = tracking_reward(a, b, anchors, alpha=10.0)
        assert 0.0 < r <= 1.0
        assert abs(math.log(r) + 10.0 * pose_distance(a, b, anchors)) < 1e-9


def test_tracking_reward_rejects_bad_alpha():
    anchors = AnchorSet.default()
    with pytest.raises(ValueError):
        tracking_reward(Pose.identity(), Pose.identity(), anchors, alpha=0.0)


def test_interp_pose_endpoints_and_midpoint():
    a = Pose.identity()
    b = Pose.rot_z(math.pi / 2, position=(1, 0, 0))
    assert_pose_close(interp_pose(a, b, 0.0), a, 1e-15, 1e-15)
    assert_pose_close(interp_pose(a, b, 1.0), b, 1e-15, 1e-15)
    mid = interp_pose(a, b, 0.5)
    np.testing.assert_allclose(mid.position, [0.5, 0, 0], atol=1e-12)
    assert quat_angle(mid.quaternion, Pose.rot_z(math.pi / 4).quaternion) < 1e-12
    with pytest.raises(ValueError):
        interp_pose(a, b, 1.5)


def test_interp_pose_geodesic():
    rng = np.random.default_rng(8)
    for _ in range(500):
        a, b = random_pose(rng), random_pose(rng)
        if quat_angle(a.quaternion, b.quaternion) > math.pi - 1e-3:
            continue  # antipodal pairs have no unique geodesic
        u = rng.uniform(0, 1)
        m = interp_pose(a, b, u)
        lhs = quat_angle(a.quaternion, m.quaternion) + quat_angle(m.quaternion, b.quaternion)
        assert abs(lhs - quat_angle(a.quaternion, b.quaternion)) < 1e-7


def test_interp_pose_shortest_arc():
    a = Pose.identity()
    b = Pose(np.zeros(3), -Pose.rot_z(0.3).quaternion)  # same rotation, flipped sign
    mid = interp_pose(a, b, 0.5)
    assert quat_angle(mid.quaternion, Pose.rot_z(0.15).quaternion) < 1e-9


def test_symmetric_anchor_reduce():
    anchors = AnchorSet.default()
    z = symmetric_anchor_reduce(anchors, (0, 0, 1))
    np.testing.assert_allclose(z.anchors, [[0, 0, 0.2]], atol=1e-15)
    x = symmetric_anchor_reduce(anchors, (1, 0, 0))
    np.testing.assert_allclose(x.anchors, [[0.2, 0, 0]], atol=1e-15)
    diag = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)
    with pytest.raises(ValueError):
        symmetric_anchor_reduce(anchors, diag)
    with pytest.raises(ValueError):
        symmetric_anchor_reduce(anchors, (0, 0, 2.0))


def test_symmetry_reduction_gives_yaw_invariant_reward():
    rng = np.random.default_rng(9)
    reduced = symmetric_anchor_reduce(AnchorSet.default(), (0, 0, 1))
    for _ in range(1000):
        target, obj = random_pose(rng), random_pose(rng)
        r0 = tracking_reward(target, obj, reduced)
        yaw = compose(obj, Pose.rot_z(rng.uniform(-math.pi, math.pi)))
        assert abs(tracking_reward(target, yaw, reduced) - r0) < 1e-9


def test_quaternion_norm_maintained():
    rng = np.random.default_rng(10)
    p = random_pose(rng)
    for _ in range(2000):
        p = compose(p, random_pose(rng))
        assert abs(np.linalg.norm(p.quaternion) - 1.0) <= 1e-9


def test_serialization_roundtrip_and_canonical_sign():
    rng = np.random.default_rng(11)
    for _ in range(100):
        p = random_pose(rng)
        vals = p.to_list()
        assert vals[3] >= 0.0
        q = Pose.from_list(vals)
        assert_pose_close(p, q, 1e-15, 1e-12)
    with pytest.raises(ValueError):
        Pose.from_list([0, 0, 0, math.nan, 0, 0, 1])


def test_anchor_set_validation():
    with pytest.raises(ValueError):
        AnchorSet(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        AnchorSet(np.array([[np.inf, 0, 0]]))
