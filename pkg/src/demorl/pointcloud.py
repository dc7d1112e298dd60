"""Depth-image alignment: masked depth to point cloud, connected-component
filtering with a KD-tree, and point-to-point ICP registration.

File formats: depth frames are binary 16-bit PGM (P5, maxval 65535) in
millimeters, masks are binary 8-bit PGM, camera intrinsics are JSON
{"fx","fy","cx","cy"}, and clouds are ASCII XYZ (one "x y z" line per point,
meters).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from demorl.geometry import Pose, compose, quat_from_matrix

DEFAULT_COMPONENT_RADIUS = 0.05  # m, neighbor distance for the point graph


class PointCloudError(ValueError):
    """Raised for malformed depth/mask/cloud data."""


@dataclass
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise PointCloudError("focal lengths must be positive")

    @staticmethod
    def from_json(path) -> "CameraIntrinsics":
        with open(path) as fh:
            d = json.load(fh)
        try:
            return CameraIntrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]))
        except KeyError as e:
            raise PointCloudError(f"{path}: missing intrinsics field {e}") from e


@dataclass
class DepthFrame:
    """Row-major 16-bit depth in millimeters; 0 marks invalid pixels."""

    width: int
    height: int
    depth_mm: np.ndarray
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        self.depth_mm = np.asarray(self.depth_mm, dtype=np.uint16).reshape(self.height, self.width)


@dataclass
class MaskFrame:
    width: int
    height: int
    mask: np.ndarray  # row-major 8-bit, nonzero = selected

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=np.uint8).reshape(self.height, self.width)


# ---------------------------------------------------------------------------
# PGM / XYZ I/O


def _read_pgm_tokens(fh):
    # width/height/maxval may be separated by whitespace/comments in any mix
    tokens = []
    while len(tokens) < 3:
        line = fh.readline()
        if not line:
            raise PointCloudError("truncated PGM header")
        if line.startswith(b"#"):
            continue
        tokens.extend(line.split())
    return tokens[:3]


def read_pgm(path) -> tuple:
    """Read a binary PGM (P5); returns (array[h,w], maxval)."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise PointCloudError(f"{path}: expected binary PGM (P5), got {magic!r}")
        tokens = _read_pgm_tokens(fh)
        width, height, maxval = int(tokens[0]), int(tokens[1]), int(tokens[2])
        dtype = np.dtype(">u2") if maxval > 255 else np.uint8
        data = fh.read(width * height * dtype.itemsize)
        if len(data) != width * height * dtype.itemsize:
            raise PointCloudError(f"{path}: pixel payload truncated")
        arr = np.frombuffer(data, dtype=dtype).reshape(height, width)
        return arr.astype(np.uint16 if maxval > 255 else np.uint8), maxval


def write_pgm(path, array: np.ndarray, maxval: int) -> None:
    array = np.asarray(array)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{array.shape[1]} {array.shape[0]}\n{maxval}\n".encode())
        if maxval > 255:
            fh.write(array.astype(">u2").tobytes())
        else:
            fh.write(array.astype(np.uint8).tobytes())


def load_depth(path, intrinsics: CameraIntrinsics) -> DepthFrame:
    arr, maxval = read_pgm(path)
    if maxval <= 255:
        raise PointCloudError(f"{path}: depth PGM must be 16-bit (maxval 65535)")
    return DepthFrame(arr.shape[1], arr.shape[0], arr, intrinsics)


def load_mask(path) -> MaskFrame:
    arr, maxval = read_pgm(path)
    if maxval > 255:
        raise PointCloudError(f"{path}: mask PGM must be 8-bit")
    return MaskFrame(arr.shape[1], arr.shape[0], arr)


def load_xyz(path) -> np.ndarray:
    pts = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if pts.size == 0:
        return np.zeros((0, 3))
    if pts.shape[1] != 3:
        raise PointCloudError(f"{path}: expected 3 columns, got {pts.shape[1]}")
    return pts


def save_xyz(path, points: np.ndarray) -> None:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    with open(path, "w") as fh:
        for x, y, z in points:
            fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")


# ---------------------------------------------------------------------------
# Operations


def depth_to_points(depth: DepthFrame, mask: MaskFrame) -> np.ndarray:
    """Back-project masked, valid-depth pixels through the pinhole model."""
    if (depth.width, depth.height) != (mask.width, mask.height):
        raise PointCloudError(
            f"depth {depth.width}x{depth.height} vs mask {mask.width}x{mask.height}"
        )
    k = depth.intrinsics
    sel = (mask.mask != 0) & (depth.depth_mm > 0)
    v, u = np.nonzero(sel)
    z = depth.depth_mm[v, u].astype(np.float64) / 1000.0
    return np.column_stack([(u - k.cx) / k.fx * z, (v - k.cy) / k.fy * z, z])


class _UnionFind:
    def __init__(self, n: int):
        self.parent = np.arange(n)

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:  # path compression
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def connected_component_labels(points: np.ndarray, radius: float) -> np.ndarray:
    """Label points by connected component of the <=radius neighbor graph.

    Component labels are the minimum original point index in each component,
    so label order is stable under permutations of the union order.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(points)
    uf = _UnionFind(n)
    if n:
        tree = cKDTree(points)
        for i, j in tree.query_pairs(radius, output_type="ndarray"):
            uf.union(int(i), int(j))
    return np.array([uf.find(i) for i in range(n)], dtype=np.int64)


def largest_component_filter(points: np.ndarray, radius: float = DEFAULT_COMPONENT_RADIUS):
    """Keep the largest connected component; ties keep the lowest-index one.

    Returns (filtered points, original indices).
    """
    if radius <= 0:
        raise PointCloudError("radius must be positive")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        return points.copy(), np.zeros(0, dtype=np.int64)
    labels = connected_component_labels(points, radius)
    roots, counts = np.unique(labels, return_counts=True)
    # roots are minimum member indices; np.unique sorts them ascending, so
    # argmax on counts picks the lowest-index component among ties
    best = roots[np.argmax(counts)]
    idx = np.nonzero(labels == best)[0]
    return points[idx], idx


def _best_fit_transform(src: np.ndarray, dst: np.ndarray) -> Pose:
    """Least-squares rigid transform mapping src onto dst (SVD, reflection guard)."""
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    cov = (src - mu_s).T @ (dst - mu_d)
    u, _, vt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return Pose(mu_d - r @ mu_s, quat_from_matrix(r))


def icp_register(
    src: np.ndarray,
    dst: np.ndarray,
    init: Pose | None = None,
    max_iters: int = 50,
    tol: float = 1e-8,
):
    """Point-to-point ICP from ``init``; returns (pose mapping src->dst, rmse).

    Alternates KD-tree nearest-neighbor correspondences with the closed-form
    rigid fit; stops when the RMSE improvement drops below ``tol``.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if len(src) < 3 or len(dst) < 3:
        raise PointCloudError("ICP needs at least 3 points per cloud")
    for name, cloud in (("src", src), ("dst", dst)):
        cov = np.cov(cloud.T)
        if np.linalg.matrix_rank(cov, tol=1e-12) < 3:
            raise PointCloudError(f"{name} cloud is degenerate (covariance rank < 3)")
    pose = init.copy() if init is not None else Pose.identity()
    tree = cKDTree(dst)
    prev_rmse = None
    rmse = float("inf")
    for _ in range(max_iters):
        moved = src @ pose.rotation_matrix().T + pose.position
        dists, nn = tree.query(moved)
        rmse = float(np.sqrt(np.mean(dists**2)))
        if prev_rmse is not None:
            # point-to-point ICP is monotone; allow float slack only
            assert rmse <= prev_rmse + 1e-12, "ICP objective increased"
            if prev_rmse - rmse < tol:
                return pose, rmse
        prev_rmse = rmse
        step = _best_fit_transform(moved, dst[nn])
        pose = compose(step, pose)
    moved = src @ pose.rotation_matrix().T + pose.position
    dists, _ = tree.query(moved)
    return pose, float(np.sqrt(np.mean(dists**2)))
