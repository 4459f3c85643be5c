"""TUM-style trajectory files and correspondence matching between trajectories."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from src.errors import InsufficientCorrespondencesError, SchemaError
from src.models import Pose, RotationQuaternion

logger = logging.getLogger(__name__)

MATCH_MAX_DT = 0.02  # seconds


@dataclass
class Trajectory:
    """Timestamped camera-to-world poses, in file order."""

    timestamps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    poses: list[Pose] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.poses)

    @classmethod
    def from_poses(cls, poses: list[Pose], timestamps=None) -> Trajectory:
        ts = np.arange(len(poses), dtype=np.float64) if timestamps is None else np.asarray(timestamps, dtype=np.float64)
        return cls(ts, list(poses))


def read_trajectory(path: str | Path) -> Trajectory:
    """Parse `timestamp tx ty tz qx qy qz qw` lines; `#` starts a comment."""
    path = Path(path)
    timestamps: list[float] = []
    poses: list[Pose] = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 8:
                raise SchemaError(f"{path}:{lineno}", f"expected 8 values, got {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError as e:
                raise SchemaError(f"{path}:{lineno}", str(e)) from e
            timestamps.append(vals[0])
            poses.append(Pose(RotationQuaternion.from_xyzw(vals[4:8]), np.array(vals[1:4])))
    return Trajectory(np.asarray(timestamps, dtype=np.float64), poses)


def write_trajectory(path: str | Path, trajectory: Trajectory) -> None:
    """Write with 17 significant digits so values survive a read back exactly."""
    lines = ["# timestamp tx ty tz qx qy qz qw"]
    for ts, pose in zip(trajectory.timestamps, trajectory.poses):
        vals = [ts, *pose.translation.tolist(), *pose.rotation.as_xyzw().tolist()]
        lines.append(" ".join(f"{v:.17g}" for v in vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def camera_centers(trajectory: Trajectory) -> np.ndarray:
    """Camera center of a camera-to-world pose is its translation."""
    if not trajectory.poses:
        return np.zeros((0, 3))
    return np.stack([p.translation for p in trajectory.poses])


def match_trajectories(
    a: Trajectory, b: Trajectory, max_dt: float = MATCH_MAX_DT
) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (ia, ib) of corresponding poses.

    Nearest timestamp within max_dt, each pose of b used once; when fewer than
    three pairs match that way, trajectories of equal length are paired by
    index and any others are rejected. Unmatched frames are dropped.
    """
    ia: list[int] = []
    ib: list[int] = []
    if len(a) and len(b):
        order = np.argsort(b.timestamps, kind="stable")
        tb = b.timestamps[order]
        used = np.zeros(len(b), dtype=bool)
        for i, t in enumerate(a.timestamps):
            pos = int(np.searchsorted(tb, t))
            best = -1
            best_dt = np.inf
            for cand in (pos - 1, pos):
                if 0 <= cand < len(tb) and not used[cand]:
                    dt = abs(tb[cand] - t)
                    if dt < best_dt:
                        best, best_dt = cand, dt
            if best >= 0 and best_dt <= max_dt:
                used[best] = True
                ia.append(i)
                ib.append(int(order[best]))
    if len(ia) < 3:
        if len(a) != len(b):
            raise InsufficientCorrespondencesError(
                f"only {len(ia)} timestamps match and the trajectories differ in length "
                f"({len(a)} vs {len(b)} poses)"
            )
        logger.info("timestamp matching found %d pairs; pairing %d poses by index", len(ia), len(a))
        ia = list(range(len(a)))
        ib = list(range(len(b)))
    if len(ia) < 3:
        raise InsufficientCorrespondencesError(f"only {len(ia)} matched poses between trajectories")
    return np.asarray(ia, dtype=np.int64), np.asarray(ib, dtype=np.int64)
