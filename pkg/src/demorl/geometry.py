"""SE(3) pose algebra, anchor-point pose distance and the tracking reward.

Poses are (position, unit quaternion) pairs; quaternions use (w, x, y, z)
ordering and are renormalized after every composing operation. ``compose``
chains frames: compose(a, b) is the transform "a then b" in the frame-chaining
sense, i.e. the homogeneous-matrix product T_a @ T_b.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

QUAT_NORM_TOL = 1e-9
# anchors within this angle of the symmetry axis count as parallel
PARALLEL_TOL_RAD = 1e-6

DEFAULT_ANCHOR_ARM = 0.2


def _normalized_quat(q: np.ndarray) -> np.ndarray:
    n = math.sqrt(float(q @ q))
    if not (n > 0.0) or not math.isfinite(n):
        raise ValueError("quaternion has zero or non-finite norm")
    return q / n


@dataclass
class Pose:
    """Rigid transform: position in meters, orientation as a unit quaternion."""

    position: np.ndarray
    quaternion: np.ndarray  # (w, x, y, z)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        q = np.asarray(self.quaternion, dtype=np.float64).reshape(4)
        n = math.sqrt(float(q @ q))
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {n} too far from 1")
        self.quaternion = q / n

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def from_translation(x: float, y: float, z: float) -> "Pose":
        return Pose(np.array([x, y, z], dtype=np.float64), np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def from_axis_angle(axis, angle: float, position=(0.0, 0.0, 0.0)) -> "Pose":
        a = np.asarray(axis, dtype=np.float64)
        a = a / np.linalg.norm(a)
        half = 0.5 * angle
        q = np.concatenate(([math.cos(half)], math.sin(half) * a))
        return Pose(np.asarray(position, dtype=np.float64), q)

    @staticmethod
    def rot_z(angle: float, position=(0.0, 0.0, 0.0)) -> "Pose":
        return Pose.from_axis_angle((0.0, 0.0, 1.0), angle, position)

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.quaternion)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix()
        m[:3, 3] = self.position
        return m

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Pose":
        return Pose(np.array(m[:3, 3]), quat_from_matrix(np.asarray(m)[:3, :3]))

    def to_list(self) -> list:
        """Serialize as [x, y, z, qw, qx, qy, qz], canonicalized to qw >= 0."""
        q = self.quaternion if self.quaternion[0] >= 0.0 else -self.quaternion
        return [float(v) for v in (*self.position, *q)]

    @staticmethod
    def from_list(values) -> "Pose":
        v = np.asarray(values, dtype=np.float64).reshape(7)
        if not np.all(np.isfinite(v)):
            raise ValueError("pose contains non-finite values")
        return Pose(v[:3], v[3:])

    def copy(self) -> "Pose":
        return Pose(self.position.copy(), self.quaternion.copy())


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(m: np.ndarray) -> np.ndarray:
    # Shepperd's method: pick the largest of the four candidates for stability
    t = np.trace(m)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    return _normalized_quat(q)


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate a 3-vector (or N x 3 array of vectors) by a unit quaternion."""
    return np.asarray(v) @ quat_to_matrix(q).T


def quat_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic rotation angle between two unit quaternions, in [0, pi]."""
    d = min(1.0, abs(float(a @ b)))
    return 2.0 * math.acos(d)


@dataclass
class AnchorSet:
    """Local-frame anchor points that turn pose error into point distances."""

    anchors: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.anchors = np.asarray(self.anchors, dtype=np.float64).reshape(-1, 3)
        if self.anchors.shape[0] == 0:
            raise ValueError("anchor set must be non-empty")
        if not np.all(np.isfinite(self.anchors)):
            raise ValueError("anchor set contains non-finite values")

    @staticmethod
    def default(arm: float = DEFAULT_ANCHOR_ARM) -> "AnchorSet":
        return AnchorSet(np.eye(3) * arm, label="axis-aligned")

    def __len__(self) -> int:
        return self.anchors.shape[0]


def compose(a: Pose, b: Pose) -> Pose:
    """Chain two transforms: the result is T_a @ T_b."""
    q = _normalized_quat(quat_multiply(a.quaternion, b.quaternion))
    p = a.position + quat_rotate(a.quaternion, b.position)
    return Pose(p, q)


def inverse(a: Pose) -> Pose:
    qi = quat_conjugate(a.quaternion)
    return Pose(-quat_rotate(qi, a.position), _normalized_quat(qi))


def transform_point(pose: Pose, point: np.ndarray) -> np.ndarray:
    return pose.position + quat_rotate(pose.quaternion, np.asarray(point, dtype=np.float64))


def anchor_points(pose: Pose, anchors: AnchorSet) -> np.ndarray:
    """World positions of the anchor points under ``pose``, shape (N, 3)."""
    return anchors.anchors @ pose.rotation_matrix().T + pose.position


def pose_distance(a: Pose, b: Pose, anchors: AnchorSet) -> float:
    """Sum over anchors of the Euclidean distance between the two images."""
    diff = anchor_points(a, anchors) - anchor_points(b, anchors)
    return float(np.sqrt((diff * diff).sum(axis=1)).sum())


def tracking_reward(target: Pose, obj: Pose, anchors: AnchorSet, alpha: float = 10.0) -> float:
    """exp(-alpha * pose_distance); 1 exactly when the poses agree on all anchors."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return math.exp(-alpha * pose_distance(target, obj, anchors))


def quat_slerp(a: np.ndarray, b: np.ndarray, u: float) -> np.ndarray:
    """Shortest-arc spherical interpolation between unit quaternions."""
    dot = float(a @ b)
    if dot < 0.0:
        b = -b
        dot = -dot
    if dot > 1.0 - 1e-12:
        return _normalized_quat(a + u * (b - a))
    theta = math.acos(min(1.0, dot))
    s = math.sin(theta)
    return _normalized_quat(
        (math.sin((1.0 - u) * theta) / s) * a + (math.sin(u * theta) / s) * b
    )


def interp_pose(a: Pose, b: Pose, u: float) -> Pose:
    """Lerp position, slerp orientation; u must be in [0, 1]."""
    if not (0.0 <= u <= 1.0):
        raise ValueError(f"interpolation parameter {u} outside [0, 1]")
    return Pose((1.0 - u) * a.position + u * b.position, quat_slerp(a.quaternion, b.quaternion, u))


def symmetric_anchor_reduce(anchors: AnchorSet, symmetry_axis) -> AnchorSet:
    """Keep only anchors parallel to the symmetry axis.

    Dropping the off-axis anchors makes the reward invariant to rotations
    about that axis, so pose-tracking of rotationally symmetric objects does
    not punish the unobservable spin component.
    """
    axis = np.asarray(symmetry_axis, dtype=np.float64).reshape(3)
    n = np.linalg.norm(axis)
    if abs(n - 1.0) > 1e-6:
        raise ValueError("symmetry axis must be unit-norm")
    axis = axis / n
    kept = []
    for k in anchors.anchors:
        kn = np.linalg.norm(k)
        if kn == 0.0:
            kept.append(k)  # origin anchor is invariant under any rotation
            continue
        c = min(1.0, abs(float(k @ axis) / kn))
        if math.acos(c) <= PARALLEL_TOL_RAD:
            kept.append(k)
    if not kept:
        raise ValueError("symmetry reduction would remove every anchor")
    return AnchorSet(np.array(kept), label=anchors.label + "|axis-reduced")
