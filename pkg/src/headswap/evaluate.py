"""Pose-trace accuracy metrics against ground truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch
from .geometry import ANGLE_FIELDS, PoseState

METRIC_FIELDS = ("tx", "ty", "s", "rx", "ry", "rz", "alpha")


@dataclass
class PoseErrorMetrics:
    mae: dict
    rmse: dict
    errors: dict  # per-dimension signed error series
    frames: int

    def to_json(self) -> dict:
        return {"mae": dict(self.mae), "rmse": dict(self.rmse), "frames": self.frames}


def angle_diff(a, b):
    """a - b wrapped to (-180, 180]."""
    d = (np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 360.0
    return np.where(d > 180.0, d - 360.0, d)


def pose_error(estimated, truth, frames_est=None, frames_truth=None) -> PoseErrorMetrics:
    """Per-dimension MAE and RMSE; angular errors wrap so 359 vs 1 scores 2."""
    estimated = list(estimated)
    truth = list(truth)
    if len(estimated) != len(truth):
        raise LengthMismatch(f"{len(estimated)} estimated poses vs {len(truth)} ground-truth poses")
    if frames_est is not None and frames_truth is not None and list(frames_est) != list(frames_truth):
        raise LengthMismatch("frame indices of the two traces differ")
    n = len(truth)
    mae, rmse, errors = {}, {}, {}
    for name in METRIC_FIELDS:
        e = np.array([getattr(p, name) for p in estimated], dtype=float)
        t = np.array([getattr(p, name) for p in truth], dtype=float)
        d = angle_diff(e, t) if name in ANGLE_FIELDS else e - t
        errors[name] = d
        mae[name] = float(np.mean(np.abs(d))) if n else 0.0
        rmse[name] = float(np.sqrt(np.mean(d * d))) if n else 0.0
    return PoseErrorMetrics(mae, rmse, errors, n)
