"""Demonstration trajectories: loading, pre-manipulation detection, reward
target providers, replay warping, velocity-limited retiming and resampling.

Demo files are JSONL, one frame per line: {"t": int, "pose": [x,y,z,qw,qx,qy,qz]}
with an optional header line {"rate_hz": number} (default 30). Joint
trajectories are JSONL with a header {"joints": [names]} followed by
{"time": seconds, "q": [..]} lines.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from demorl.geometry import Pose, compose, interp_pose, inverse

DEFAULT_RATE_HZ = 30.0
DEFAULT_V_MIN = 0.05  # m/s, object speed that marks manipulation onset
DEFAULT_T_OFFSET = 30  # frames before onset used as the pre-manipulation time
DEFAULT_DOWNSAMPLE = 90  # frames between downsampled-mode key poses


class TrajectoryError(ValueError):
    """Raised for malformed or inconsistent trajectory data."""


@dataclass
class DemoTrajectory:
    """Timestamped object pose sequence extracted from a demonstration."""

    timesteps: np.ndarray
    poses: list
    rate_hz: float = DEFAULT_RATE_HZ

    def __post_init__(self):
        self.timesteps = np.asarray(self.timesteps, dtype=np.int64)
        if len(self.poses) < 2:
            raise TrajectoryError("trajectory needs at least 2 frames")
        if len(self.poses) != len(self.timesteps):
            raise TrajectoryError("timestep/pose count mismatch")
        if np.any(np.diff(self.timesteps) <= 0):
            raise TrajectoryError("timesteps must be strictly increasing")
        if self.rate_hz <= 0:
            raise TrajectoryError("rate_hz must be positive")

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def first_timestep(self) -> int:
        return int(self.timesteps[0])

    @property
    def last_timestep(self) -> int:
        return int(self.timesteps[-1])

    def positions(self) -> np.ndarray:
        return np.stack([p.position for p in self.poses])

    def pose_at(self, timestep: int) -> Pose:
        """Frame at a timestep, clamped to the trajectory and held over gaps."""
        t = min(max(int(timestep), self.first_timestep), self.last_timestep)
        i = int(np.searchsorted(self.timesteps, t, side="right")) - 1
        return self.poses[i]


@dataclass
class JointTrajectory:
    """Time-stamped joint waypoints for open-loop execution."""

    times: np.ndarray
    positions: np.ndarray  # (N, dof) radians
    joint_names: list = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 2 or len(self.times) != self.positions.shape[0]:
            raise TrajectoryError("times/positions shape mismatch")
        if len(self.times) and np.any(np.diff(self.times) <= 0):
            raise TrajectoryError("times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def dof(self) -> int:
        return self.positions.shape[1]

    def sample(self, t: float) -> np.ndarray:
        """Linear interpolation between waypoints, zero-order hold past the ends."""
        if len(self.times) == 0:
            raise TrajectoryError("empty trajectory")
        if t <= self.times[0]:
            return self.positions[0].copy()
        if t >= self.times[-1]:
            return self.positions[-1].copy()
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        u = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        return (1 - u) * self.positions[i] + u * self.positions[i + 1]


class TargetMode(str, Enum):
    DENSE = "dense"
    FIXED = "fixed"
    INTERPOLATED = "interpolated"
    DOWNSAMPLED = "downsampled"


@dataclass
class TargetProviderConfig:
    mode: TargetMode = TargetMode.DENSE
    downsample: int = DEFAULT_DOWNSAMPLE
    tau: int = 0

    def __post_init__(self):
        self.mode = TargetMode(self.mode)
        if self.downsample < 1:
            raise TrajectoryError("downsample factor must be >= 1")


# ---------------------------------------------------------------------------
# File I/O


def load_demo(path) -> DemoTrajectory:
    rate_hz = DEFAULT_RATE_HZ
    timesteps, poses = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise TrajectoryError(f"{path}:{lineno}: invalid JSON ({e.msg})") from e
            if "rate_hz" in rec and "t" not in rec:
                rate_hz = float(rec["rate_hz"])
                continue
            if "t" not in rec or "pose" not in rec:
                raise TrajectoryError(f"{path}:{lineno}: frame needs 't' and 'pose'")
            vals = np.asarray(rec["pose"], dtype=np.float64)
            if vals.shape != (7,):
                raise TrajectoryError(f"{path}:{lineno}: pose must have 7 numbers")
            if not np.all(np.isfinite(vals)):
                raise TrajectoryError(f"{path}:{lineno}: non-finite pose value")
            qn = float(np.linalg.norm(vals[3:]))
            if abs(qn - 1.0) > 1e-6:
                raise TrajectoryError(f"{path}:{lineno}: quaternion norm {qn:.6g} is not 1")
            if timesteps and rec["t"] <= timesteps[-1]:
                raise TrajectoryError(
                    f"{path}:{lineno}: timestep {rec['t']} not increasing (prev {timesteps[-1]})"
                )
            timesteps.append(int(rec["t"]))
            poses.append(Pose(vals[:3], vals[3:]))
    if len(poses) < 2:
        raise TrajectoryError(f"{path}: trajectory needs at least 2 frames")
    return DemoTrajectory(np.array(timesteps), poses, rate_hz)


def save_demo(traj: DemoTrajectory, path) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"rate_hz": traj.rate_hz}) + "\n")
        for t, pose in zip(traj.timesteps, traj.poses):
            fh.write(json.dumps({"t": int(t), "pose": pose.to_list()}) + "\n")


def load_joint_trajectory(path) -> JointTrajectory:
    names = []
    times, qs = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise TrajectoryError(f"{path}:{lineno}: invalid JSON ({e.msg})") from e
            if "joints" in rec:
                names = list(rec["joints"])
                continue
            if "time" not in rec or "q" not in rec:
                raise TrajectoryError(f"{path}:{lineno}: waypoint needs 'time' and 'q'")
            times.append(float(rec["time"]))
            qs.append(np.asarray(rec["q"], dtype=np.float64))
    if not times:
        raise TrajectoryError(f"{path}: empty joint trajectory")
    dims = {len(q) for q in qs}
    if len(dims) != 1:
        raise TrajectoryError(f"{path}: inconsistent joint dimension {sorted(dims)}")
    return JointTrajectory(np.array(times), np.stack(qs), names)


def save_joint_trajectory(jt: JointTrajectory, path) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"joints": list(jt.joint_names)}) + "\n")
        for t, q in zip(jt.times, jt.positions):
            fh.write(json.dumps({"time": float(t), "q": [float(v) for v in q]}) + "\n")


# ---------------------------------------------------------------------------
# Operations


def frame_speeds(traj: DemoTrajectory) -> np.ndarray:
    """Finite-difference position speed per frame (central; one-sided at ends)."""
    pos = traj.positions()
    t = traj.timesteps / traj.rate_hz
    n = len(traj)
    speeds = np.empty(n)
    speeds[0] = np.linalg.norm(pos[1] - pos[0]) / (t[1] - t[0])
    speeds[-1] = np.linalg.norm(pos[-1] - pos[-2]) / (t[-1] - t[-2])
    if n > 2:
        dt = t[2:] - t[:-2]
        speeds[1:-1] = np.linalg.norm(pos[2:] - pos[:-2], axis=1) / dt
    return speeds


def detect_premanip_timestep(
    traj: DemoTrajectory,
    v_min: float = DEFAULT_V_MIN,
    t_offset: int = DEFAULT_T_OFFSET,
) -> int:
    """First motion onset minus the offset, clamped to the first frame.

    Onset is the first frame whose position speed exceeds ``v_min``.
    """
    if v_min <= 0:
        raise TrajectoryError("v_min must be positive")
    if len(traj) <= t_offset:
        raise TrajectoryError(f"trajectory length {len(traj)} <= t_offset {t_offset}")
    speeds = frame_speeds(traj)
    above = np.nonzero(speeds > v_min)[0]
    if len(above) == 0:
        raise TrajectoryError(f"object never exceeds v_min={v_min} m/s (static demo?)")
    t0 = int(traj.timesteps[above[0]])
    return max(traj.first_timestep, t0 - t_offset)


def target_pose(traj: DemoTrajectory, cfg: TargetProviderConfig, t: int) -> Pose:
    """Reward target for episode step ``t`` (frames since the episode start)."""
    if t < 0:
        raise TrajectoryError("episode step must be >= 0")
    tau = int(cfg.tau)
    if not (traj.first_timestep <= tau <= traj.last_timestep):
        raise TrajectoryError(f"tau={tau} outside trajectory bounds")
    T = traj.last_timestep
    if cfg.mode is TargetMode.DENSE:
        return traj.pose_at(tau + t)
    if cfg.mode is TargetMode.FIXED:
        return traj.pose_at(T)
    if cfg.mode is TargetMode.INTERPOLATED:
        span = T - tau
        u = 1.0 if span <= 0 else min(1.0, max(0.0, t / span))
        return interp_pose(traj.pose_at(tau), traj.pose_at(T), u)
    d = cfg.downsample
    return traj.pose_at(tau + (t // d) * d)


def oa_warp(ee_traj, demo_obj_init: Pose, new_obj_init: Pose) -> list:
    """Left-multiply a pose trajectory by the initial-object-pose correction.

    The correction maps the demo's initial object pose onto the new one, so
    the warped end-effector path keeps the demonstrated pose relative to the
    object.
    """
    t_rel = compose(new_obj_init, inverse(demo_obj_init))
    return [compose(t_rel, p) for p in ee_traj]


def retime_velocity_limited(jt: JointTrajectory, limits) -> JointTrajectory:
    """Stretch segment durations until every joint speed is within its limit."""
    limits = np.asarray(limits, dtype=np.float64)
    if limits.shape != (jt.dof,):
        raise TrajectoryError(f"expected {jt.dof} limits, got {limits.shape}")
    if np.any(limits <= 0):
        raise TrajectoryError("velocity limits must be positive")
    if len(jt) < 2:
        return JointTrajectory(jt.times.copy(), jt.positions.copy(), list(jt.joint_names))
    new_times = [float(jt.times[0])]
    for i in range(len(jt) - 1):
        dt = float(jt.times[i + 1] - jt.times[i])
        dq = np.abs(jt.positions[i + 1] - jt.positions[i])
        needed = float(np.max(dq / limits))
        new_times.append(new_times[-1] + max(dt, needed))
    return JointTrajectory(np.array(new_times), jt.positions.copy(), list(jt.joint_names))


def resample(traj: DemoTrajectory, target_hz: float) -> DemoTrajectory:
    """Resample onto a uniform grid at ``target_hz``; both endpoints preserved."""
    if target_hz <= 0:
        raise TrajectoryError("target_hz must be positive")
    src_t = (traj.timesteps - traj.timesteps[0]) / traj.rate_hz
    duration = float(src_t[-1])
    n_whole = int(np.floor(duration * target_hz + 1e-9))
    new_t = np.arange(n_whole + 1) / target_hz
    if duration - new_t[-1] > 1e-9:
        new_t = np.append(new_t, duration)
    poses = []
    for t in new_t:
        j = int(np.searchsorted(src_t, t, side="right"))
        j = min(max(j, 1), len(src_t) - 1)
        lo, hi = src_t[j - 1], src_t[j]
        u = 0.0 if hi <= lo else min(1.0, max(0.0, (t - lo) / (hi - lo)))
        poses.append(interp_pose(traj.poses[j - 1], traj.poses[j], u))
    return DemoTrajectory(np.arange(len(poses)), poses, target_hz)
