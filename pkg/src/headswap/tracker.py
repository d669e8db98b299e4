"""Sparse-template particle filter over the ellipsoid head model.

Particles are stored as an (N, 10) array whose columns follow
``geometry.STATE_FIELDS``.  One tracking step is predict -> weigh -> estimate
-> resample.  ``mean_residuals`` is a pure function of each particle row, so
weighing is an embarrassingly parallel map over particles.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .errors import DegenerateWeights, EmptyTemplate, InsufficientTexture, InvalidArgument
from .geometry import (
    ALPHA,
    RX,
    RY,
    RY_DOT,
    RZ,
    STATE_FIELDS,
    TX,
    TX_DOT,
    TY,
    TY_DOT,
    CameraModel,
    EllipsoidModel,
    PoseState,
    S,
    in_frame,
    raycast,
    rotation_matrices,
    sample_bilinear,
    surface_normals,
)

logger = logging.getLogger(__name__)

TRACKING = "Tracking"
LOST = "Lost"

MIN_POSITIVE = 1e-3
GRADIENT_FLOOR = 1e-3

# Per-dimension random-walk std, in STATE_FIELDS order (px, px/frame, -, deg, deg/frame, -).
DEFAULT_MOTION_STD = (0.5, 0.5, 0.05, 0.05, 0.003, 3.0, 1.0, 0.3, 0.3, 0.01)
DEFAULT_INIT_STD = (2.0, 2.0, 0.2, 0.2, 0.01, 2.0, 2.0, 1.0, 0.2, 0.02)


@dataclass(frozen=True)
class TemplatePoint:
    p: tuple
    t: float
    n: tuple


@dataclass(frozen=True)
class SparseTemplate:
    """Template points stored column-wise for vectorized evaluation."""

    points: np.ndarray  # (M, 3) model-space surface points
    intensities: np.ndarray  # (M,) reference gray levels in [0, 1]
    normals: np.ndarray  # (M, 3) outward unit normals
    source: str = ""

    def __len__(self):
        return len(self.intensities)

    def __iter__(self):
        for p, t, n in zip(self.points, self.intensities, self.normals):
            yield TemplatePoint(tuple(p), float(t), tuple(n))

    @classmethod
    def from_points(cls, points, source: str = "") -> "SparseTemplate":
        pts = list(points)
        return cls(
            np.array([tp.p for tp in pts], dtype=float).reshape(-1, 3),
            np.array([tp.t for tp in pts], dtype=float),
            np.array([tp.n for tp in pts], dtype=float).reshape(-1, 3),
            source,
        )


@dataclass(frozen=True)
class TrackerConfig:
    n_particles: int = 500
    motion_std: tuple = DEFAULT_MOTION_STD
    init_std: tuple = DEFAULT_INIT_STD
    sigma: float = 0.08
    tau: float = 0.25
    lost_residual: float = 0.03
    lost_frames: int = 10

    def __post_init__(self):
        if self.n_particles < 1 or self.lost_frames < 1:
            raise InvalidArgument("n_particles and lost_frames must be >= 1")
        if self.sigma <= 0 or self.tau <= 0 or self.lost_residual <= 0:
            raise InvalidArgument("sigma, tau and lost_residual must be positive")
        for name in ("motion_std", "init_std"):
            v = getattr(self, name)
            if len(v) != len(STATE_FIELDS) or min(v) < 0:
                raise InvalidArgument(f"{name} needs {len(STATE_FIELDS)} non-negative entries")

    def replace(self, **changes) -> "TrackerConfig":
        return dataclasses.replace(self, **changes)


class Particle(NamedTuple):
    state: PoseState
    weight: float


@dataclass
class ParticleSet:
    states: np.ndarray  # (N, 10)
    weights: np.ndarray  # (N,)
    rng: np.random.Generator
    frame_index: int = 0
    lost_run: int = 0

    def __len__(self):
        return len(self.weights)

    @property
    def particles(self) -> list[Particle]:
        return [Particle(PoseState.from_array(s), float(w)) for s, w in zip(self.states, self.weights)]

    def evolve(self, **changes) -> "ParticleSet":
        return dataclasses.replace(self, **changes)


def init_particles(pose: PoseState, cfg: TrackerConfig, seed: int = 0) -> ParticleSet:
    """Scatter ``cfg.n_particles`` hypotheses around ``pose`` with ``cfg.init_std``."""
    rng = np.random.default_rng(seed)
    n = cfg.n_particles
    states = pose.as_array()[None, :] + rng.normal(size=(n, len(STATE_FIELDS))) * np.asarray(cfg.init_std)
    _fix_ranges(states)
    return ParticleSet(states, np.full(n, 1.0 / n), rng)


def _fix_ranges(states: np.ndarray) -> None:
    for col in (RX, RY, RZ):
        states[:, col] = (states[:, col] + 180.0) % 360.0 - 180.0
    np.maximum(states[:, S], MIN_POSITIVE, out=states[:, S])
    np.maximum(states[:, ALPHA], MIN_POSITIVE, out=states[:, ALPHA])


def calibrate_template(
    frontal_image: np.ndarray,
    model: EllipsoidModel,
    cam: CameraModel,
    n_points: int = 200,
    seed: int = 0,
    source: str = "",
) -> SparseTemplate:
    """Pick salient surface points from a frontal calibration image.

    The face must sit at the calibration pose (centered on the principal
    point, s=1, no rotation).  Candidates are face pixels away from the
    silhouette rim; they are drawn without replacement with probability
    proportional to gradient magnitude, keeping projected points at least 2 px
    apart.
    """
    if n_points < 1:
        raise InvalidArgument(f"n_points must be >= 1, got {n_points}")
    gray = to_gray(frontal_image)
    if gray.shape != cam.shape:
        raise InvalidArgument(f"image shape {gray.shape} does not match camera {cam.shape}")

    face, pts = raycast(model, PoseState(), cam)
    # Keep the 3x3 gradient stencil on the face so the rim/background edge never counts.
    inner = ndimage.binary_erosion(face, iterations=2)
    gy, gx = np.gradient(gray)
    mag = np.hypot(gx, gy)
    mag[~inner] = 0.0
    cand = np.flatnonzero(mag > GRADIENT_FLOOR)
    if cand.size < n_points:
        raise InsufficientTexture(f"only {cand.size} textured pixels for {n_points} template points")

    rng = np.random.default_rng(seed)
    # Weighted sampling without replacement via exponential keys (Efraimidis-Spirakis).
    keys = rng.exponential(size=cand.size) / mag.flat[cand]
    order = cand[np.argsort(keys, kind="stable")]
    h, w = gray.shape
    blocked = np.zeros((h, w), dtype=bool)
    chosen = []
    for idx in order:
        r, c = divmod(int(idx), w)
        if blocked[r, c]:
            continue
        chosen.append(idx)
        blocked[max(r - 1, 0) : r + 2, max(c - 1, 0) : c + 2] = True
        if len(chosen) == n_points:
            break
    if len(chosen) < n_points:
        raise InsufficientTexture(f"only {len(chosen)} separated salient pixels for {n_points} points")

    chosen = np.array(chosen)
    rows, cols = np.divmod(chosen, w)
    p = pts[rows, cols]
    return SparseTemplate(p, gray[rows, cols].astype(float), surface_normals(p, model), source)


def to_gray(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=float)
    if image.ndim == 2:
        return image
    return image[..., :3] @ np.array([0.299, 0.587, 0.114])


def predict(pset: ParticleSet, cfg: TrackerConfig) -> ParticleSet:
    """Constant-velocity drift on tx, ty, ry; random walk on everything."""
    if len(pset) == 0:
        raise InvalidArgument("empty particle set")
    x = pset.states.copy()
    x[:, TX] += x[:, TX_DOT]
    x[:, TY] += x[:, TY_DOT]
    x[:, RY] += x[:, RY_DOT]
    std = np.asarray(cfg.motion_std, dtype=float)
    x += pset.rng.normal(size=x.shape) * std
    _fix_ranges(x)
    return pset.evolve(states=x)


def mean_residuals(states: np.ndarray, frame: np.ndarray, tmpl: SparseTemplate, cfg: TrackerConfig, cam: CameraModel) -> np.ndarray:
    """Truncated mean squared intensity residual for every state row.

    Rows with no visible in-frame template point score ``cfg.tau``.
    """
    if len(tmpl) == 0:
        raise EmptyTemplate("template has no points")
    frame = to_gray(frame)
    if frame.shape != cam.shape:
        raise InvalidArgument(f"frame shape {frame.shape} does not match camera {cam.shape}")
    states = np.atleast_2d(states)
    r = rotation_matrices(states[:, RX], states[:, RY], states[:, RZ])
    q = np.einsum("nij,mj->nmi", r[:, :2, :], tmpl.points)
    s = states[:, S, None]
    u = cam.cx + s * q[..., 0] + states[:, TX, None]
    v = cam.cy - s * q[..., 1] + states[:, TY, None]
    facing = np.einsum("nj,mj->nm", r[:, 2, :], tmpl.normals) > 0
    usable = facing & in_frame(u, v, cam.width, cam.height)
    observed = sample_bilinear(frame, np.where(usable, u, 0.0), np.where(usable, v, 0.0))
    err = np.minimum(cfg.tau, (observed - states[:, ALPHA, None] * tmpl.intensities[None, :]) ** 2)
    count = usable.sum(axis=1)
    total = np.where(usable, err, 0.0).sum(axis=1)
    return np.where(count > 0, total / np.maximum(count, 1), cfg.tau)


def likelihoods(residuals: np.ndarray, cfg: TrackerConfig) -> np.ndarray:
    """Unnormalized ``exp(-r / (2 sigma^2))``."""
    return np.exp(-np.asarray(residuals) / (2.0 * cfg.sigma**2))


def weigh(pset: ParticleSet, frame: np.ndarray, tmpl: SparseTemplate, cfg: TrackerConfig, cam: CameraModel) -> np.ndarray:
    """Normalized particle weights for ``frame``."""
    res = mean_residuals(pset.states, frame, tmpl, cfg, cam)
    # Shifting by the minimum leaves the normalized weights unchanged and avoids underflow.
    w = likelihoods(res - res.min(), cfg)
    return w / w.sum()


def resample(pset: ParticleSet) -> ParticleSet:
    """Systematic resampling: one offset ``u ~ U[0, 1/N)``, strata ``u + i/N``."""
    w = np.asarray(pset.weights, dtype=float)
    total = w.sum()
    if w.size == 0 or not np.all(np.isfinite(w)) or np.any(w < 0) or total <= 0:
        raise DegenerateWeights("weights must be finite, non-negative and not all zero")
    n = w.size
    positions = (pset.rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(w / total)
    cumulative[-1] = 1.0
    idx = np.searchsorted(cumulative, positions, side="right")
    return pset.evolve(states=pset.states[idx].copy(), weights=np.full(n, 1.0 / n))


def estimate(pset: ParticleSet) -> PoseState:
    """Weighted mean of every dimension.

    Angles are averaged arithmetically, which is valid while the particle cloud
    stays clear of the +/-180 seam (the tracked range is well inside +/-90).
    """
    w = np.asarray(pset.weights, dtype=float)
    # Averaging offsets from one particle keeps an all-identical set exact.
    ref = pset.states[0]
    mean = ref + (w[:, None] * (pset.states - ref)).sum(axis=0) / w.sum()
    for col in (RX, RY, RZ):
        mean[col] = (mean[col] + 180.0) % 360.0 - 180.0
    mean[S] = max(mean[S], MIN_POSITIVE)
    mean[ALPHA] = max(mean[ALPHA], MIN_POSITIVE)
    return PoseState.from_array(mean)


class TrackResult(NamedTuple):
    pose: PoseState
    status: str
    particles: ParticleSet
    residual: float


def track_frame(pset: ParticleSet, frame: np.ndarray, tmpl: SparseTemplate, cfg: TrackerConfig, cam: CameraModel) -> TrackResult:
    """One filter step; returns the estimate, the track status and the next set."""
    pset = predict(pset, cfg)
    pset = pset.evolve(weights=weigh(pset, frame, tmpl, cfg, cam))
    pose = estimate(pset)
    residual = float(mean_residuals(pose.as_array(), frame, tmpl, cfg, cam)[0])
    lost_run = pset.lost_run + 1 if residual > cfg.lost_residual else 0
    status = LOST if lost_run >= cfg.lost_frames else TRACKING
    if status == LOST and pset.lost_run < cfg.lost_frames:
        logger.info("track lost at frame %d (residual %.3f)", pset.frame_index, residual)
    pset = resample(pset).evolve(frame_index=pset.frame_index + 1, lost_run=lost_run)
    return TrackResult(pose, status, pset, residual)


class HeadTracker:
    """Convenience wrapper owning a particle set across frames."""

    def __init__(self, tmpl: SparseTemplate, cam: CameraModel, cfg: TrackerConfig = TrackerConfig(), seed: int = 0, initial: PoseState = PoseState()):
        self.tmpl = tmpl
        self.cam = cam
        self.cfg = cfg
        self.particles = init_particles(initial, cfg, seed)
        self.status = TRACKING

    def step(self, frame: np.ndarray) -> TrackResult:
        result = track_frame(self.particles, frame, self.tmpl, self.cfg, self.cam)
        self.particles = result.particles
        self.status = result.status
        return result

    def track(self, frames) -> list[TrackResult]:
        return [self.step(f) for f in frames]
