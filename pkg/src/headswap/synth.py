"""Synthetic textured-ellipsoid head sequences with exact ground truth.

Texture is a planar raster wrapped onto the ellipsoid along the viewing axis
of the frontal view, i.e. the colour of a surface point ``(x, y, z)`` depends
on ``(x, y)`` only.  The frontal render at the calibration pose therefore
reproduces the raster pixel for pixel, which is the same relationship the
face bank assumes when it wraps a frontal photograph onto the model.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import ndimage

from .errors import InvalidCoverage, InvalidScript, OverlapError
from .geometry import (
    STATE_FIELDS,
    CameraModel,
    EllipsoidModel,
    PoseState,
    raycast,
    sample_bilinear,
    silhouette_bbox,
    silhouette_mask,
)

# Dimensions a script may drive; velocities are derived from the formulas.
SCRIPTED_FIELDS = ("tx", "ty", "s", "rx", "ry", "rz", "alpha")
_DEFAULTS = {"tx": 0.0, "ty": 0.0, "s": 1.0, "rx": 0.0, "ry": 0.0, "rz": 0.0, "alpha": 1.0}


@dataclass(frozen=True)
class Constant:
    value: float

    def value_at(self, k, duration):
        return self.value + 0.0 * np.asarray(k, dtype=float)

    def rate_at(self, k, duration):
        return 0.0 * np.asarray(k, dtype=float)


@dataclass(frozen=True)
class Ramp:
    """Linear ramp from ``start`` at frame 0 to ``end`` at the last frame."""

    start: float
    end: float

    def _slope(self, duration):
        return 0.0 if duration <= 1 else (self.end - self.start) / (duration - 1)

    def value_at(self, k, duration):
        return self.start + self._slope(duration) * np.asarray(k, dtype=float)

    def rate_at(self, k, duration):
        return self._slope(duration) + 0.0 * np.asarray(k, dtype=float)


@dataclass(frozen=True)
class Sinusoid:
    """``offset + amplitude * sin(2 pi k / period + phase)``; phase in radians."""

    amplitude: float
    period: float
    phase: float = 0.0
    offset: float = 0.0

    def value_at(self, k, duration):
        k = np.asarray(k, dtype=float)
        return self.offset + self.amplitude * np.sin(2.0 * np.pi * k / self.period + self.phase)

    def rate_at(self, k, duration):
        k = np.asarray(k, dtype=float)
        w = 2.0 * np.pi / self.period
        return self.amplitude * w * np.cos(w * k + self.phase)


Trajectory = Union[Constant, Ramp, Sinusoid]


@dataclass(frozen=True)
class TextureSpec:
    """Procedural checker with random per-cell gray levels plus a shading ramp.

    ``softness`` is the Gaussian blur sigma (texture pixels) applied to the
    checker edges; 0 keeps them hard.
    """

    checker: int = 12
    low: float = 0.15
    high: float = 0.85
    softness: float = 1.0
    shading: float = 0.1
    tint: tuple = (1.0, 1.0, 1.0)
    seed: int = 0


@dataclass(frozen=True)
class BackgroundSpec:
    kind: str = "flat"  # flat | noise
    level: float = 0.5
    amplitude: float = 0.2
    seed: int = 0


@dataclass(frozen=True)
class OcclusionSpec:
    coverage: float = 0.2
    onset: int = 0
    color: tuple = (0.55, 0.45, 0.4)


@dataclass(frozen=True)
class DistractorSpec:
    """A static, smaller textured ellipsoid drawn in the background layer."""

    tx: float
    ty: float
    s: float = 0.4
    rx: float = 0.0
    ry: float = 0.0
    rz: float = 0.0
    texture: TextureSpec = TextureSpec(seed=101)

    @property
    def pose(self) -> PoseState:
        return PoseState(tx=self.tx, ty=self.ty, s=self.s, rx=self.rx, ry=self.ry, rz=self.rz)


@dataclass(frozen=True)
class SceneScript:
    duration: int
    trajectories: dict = field(default_factory=dict)
    texture: TextureSpec = TextureSpec()
    background: BackgroundSpec = BackgroundSpec()
    occlusion: Optional[OcclusionSpec] = None
    distractors: tuple = ()
    noise_std: float = 0.0
    seed: int = 0

    def trajectory(self, name: str) -> Trajectory:
        return self.trajectories.get(name, Constant(_DEFAULTS[name]))

    def validate(self):
        if int(self.duration) < 1:
            raise InvalidScript(f"duration must be >= 1, got {self.duration}")
        unknown = set(self.trajectories) - set(SCRIPTED_FIELDS)
        if unknown:
            raise InvalidScript(f"cannot script dimensions {sorted(unknown)}")
        if self.background.kind not in ("flat", "noise"):
            raise InvalidScript(f"unknown background kind {self.background.kind!r}")
        if self.noise_std < 0:
            raise InvalidScript("noise_std must be >= 0")
        if self.texture.checker < 1:
            raise InvalidScript("checker size must be >= 1")
        try:
            ground_truth(self)
        except ValueError as exc:
            raise InvalidScript(str(exc)) from exc


def ground_truth(script: SceneScript) -> list[PoseState]:
    """Evaluate the script formulas at every frame; velocities are exact derivatives."""
    k = np.arange(int(script.duration))
    vals = {name: script.trajectory(name).value_at(k, script.duration) for name in SCRIPTED_FIELDS}
    vals["tx_dot"] = script.trajectory("tx").rate_at(k, script.duration)
    vals["ty_dot"] = script.trajectory("ty").rate_at(k, script.duration)
    vals["ry_dot"] = script.trajectory("ry").rate_at(k, script.duration)
    return [PoseState(**{f: float(vals[f][i]) for f in STATE_FIELDS}) for i in range(len(k))]


def make_texture(spec: TextureSpec, model: EllipsoidModel) -> np.ndarray:
    """Gray texture raster covering the model's frontal extent (plus margin).

    The raster centre ``(rows // 2, cols // 2)`` corresponds to model (0, 0).
    """
    res = model.texture_res
    half_w = int(math.ceil(model.ax * res)) + 4
    half_h = int(math.ceil(model.ay * res)) + 4
    rows, cols = 2 * half_h + 1, 2 * half_w + 1
    rng = np.random.default_rng(spec.seed)
    n_r = rows // spec.checker + 2
    n_c = cols // spec.checker + 2
    cells = rng.uniform(spec.low, spec.high, size=(n_r, n_c))
    rr, cc = np.mgrid[0:rows, 0:cols]
    tex = cells[rr // spec.checker, cc // spec.checker]
    if spec.softness > 0:
        tex = ndimage.gaussian_filter(tex, spec.softness, mode="nearest")
    if spec.shading:
        tex = tex + spec.shading * (cc - half_w) / half_w
    return np.clip(tex, 0.0, 1.0)


def texture_lookup(texture: np.ndarray, model: EllipsoidModel, x, y) -> np.ndarray:
    """Sample a planar texture raster at model-plane coordinates (x, y)."""
    rows, cols = texture.shape[:2]
    col = np.clip(cols // 2 + np.asarray(x) * model.texture_res, 0, cols - 1)
    row = np.clip(rows // 2 - np.asarray(y) * model.texture_res, 0, rows - 1)
    return sample_bilinear(texture, col, row)


def _background(spec: BackgroundSpec, cam: CameraModel) -> np.ndarray:
    if spec.kind == "flat":
        bg = np.full(cam.shape, spec.level)
    else:
        rng = np.random.default_rng(spec.seed)
        bg = spec.level + spec.amplitude * (rng.random(cam.shape) - 0.5) * 2.0
    return np.repeat(np.clip(bg, 0.0, 1.0)[..., None], 3, axis=2)


def draw_ellipsoid(canvas: np.ndarray, texture: np.ndarray, tint, model: EllipsoidModel, pose: PoseState, cam: CameraModel):
    """Paint a textured ellipsoid over ``canvas`` in place; returns the hit mask."""
    mask, pts = raycast(model, pose, cam)
    if mask.any():
        p = pts[mask]
        value = texture_lookup(texture, model, p[:, 0], p[:, 1])
        if value.ndim == 1:
            value = value[:, None] * np.asarray(tint, dtype=float)[None, :]
        canvas[mask] = value
    return mask


def quantize(image: np.ndarray) -> np.ndarray:
    """Snap intensities to 8-bit levels, keeping float storage."""
    return np.round(np.clip(image, 0.0, 1.0) * 255.0) / 255.0


class Renderer:
    """Caches texture rasters so sequences render quickly frame by frame."""

    def __init__(self, script: SceneScript, model: EllipsoidModel, cam: CameraModel):
        script.validate()
        self.script = script
        self.model = model
        self.cam = cam
        self.texture = make_texture(script.texture, model)
        self.background = _background(script.background, cam)
        self._distractor_layer = self.background.copy()
        for d in script.distractors:
            draw_ellipsoid(self._distractor_layer, make_texture(d.texture, model), d.texture.tint, model, d.pose, cam)

    def render(self, pose: PoseState, frame_index: int = 0, noise: bool = True) -> np.ndarray:
        frame = self._distractor_layer.copy()
        draw_ellipsoid(frame, self.texture, self.script.texture.tint, self.model, pose, self.cam)
        frame *= pose.alpha
        if noise and self.script.noise_std > 0:
            rng = np.random.default_rng([self.script.seed, frame_index])
            frame += rng.normal(0.0, self.script.noise_std, size=frame.shape)
        return quantize(frame)

    def frontal(self) -> np.ndarray:
        """Noise-free render at the calibration pose (centered, s=1, no rotation)."""
        return self.render(PoseState(), noise=False)


def render_sequence(script: SceneScript, model: EllipsoidModel, cam: CameraModel):
    """Render every frame of ``script``; returns ``(frames, trace)``.

    Frames are float (H, W, 3) arrays on 8-bit intensity levels.  An occlusion
    spec on the script is applied after rendering.
    """
    renderer = Renderer(script, model, cam)
    trace = ground_truth(script)
    frames = [renderer.render(pose, k) for k, pose in enumerate(trace)]
    if script.occlusion is not None:
        frames = inject_occlusion(frames, script.occlusion, trace, model, cam)
    return frames, trace


def face_bbox(model: EllipsoidModel, pose: PoseState, cam: CameraModel) -> tuple[int, int, int, int]:
    """Inclusive pixel bounding box (c0, r0, c1, r1) of the silhouette mask."""
    mask = silhouette_mask(model, pose, cam)
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1])


def occluder_rect(bbox, coverage: float) -> tuple[int, int, int, int]:
    """Rectangle (c0, r0, width, height) covering ``coverage`` of ``bbox``.

    Centered horizontally and placed over the lower part of the face, where a
    hand or toy would be brought to the mouth.
    """
    c0, r0, c1, r1 = bbox
    bw, bh = c1 - c0 + 1, r1 - r0 + 1
    if coverage <= 0:
        return c0, r0, 0, 0
    height = max(1, min(bh, int(round(bh * math.sqrt(coverage)))))
    width = max(1, min(bw, int(round(coverage * bw * bh / height))))
    left = c0 + (bw - width) // 2
    top = min(r1 + 1 - height, r0 + int(round(0.7 * bh)) - height // 2)
    top = max(top, r0)
    return left, top, width, height


def inject_occlusion(frames, spec: OcclusionSpec, trace, model: EllipsoidModel, cam: CameraModel):
    """Overwrite a flat rectangle on the face from ``spec.onset`` onwards."""
    if not 0.0 <= spec.coverage < 1.0:
        raise InvalidCoverage(f"coverage must be in [0, 1), got {spec.coverage}")
    out = []
    for k, frame in enumerate(frames):
        if k < spec.onset or spec.coverage == 0:
            out.append(frame)
            continue
        left, top, width, height = occluder_rect(face_bbox(model, trace[k], cam), spec.coverage)
        frame = frame.copy()
        frame[top : top + height, left : left + width] = quantize(np.asarray(spec.color, dtype=float))
        out.append(frame)
    return out


def swept_bbox(script: SceneScript, model: EllipsoidModel, cam: CameraModel) -> tuple[float, float, float, float]:
    boxes = np.array([silhouette_bbox(model, p, cam) for p in ground_truth(script)])
    return boxes[:, 0].min(), boxes[:, 1].min(), boxes[:, 2].max(), boxes[:, 3].max()


def inject_distractor(script: SceneScript, spec: DistractorSpec, model: EllipsoidModel, cam: CameraModel) -> SceneScript:
    """Return a copy of ``script`` with a static background head added."""
    u0, v0, u1, v1 = swept_bbox(script, model, cam)
    d0, e0, d1, e1 = silhouette_bbox(model, spec.pose, cam)
    if d0 <= u1 + 1 and u0 - 1 <= d1 and e0 <= v1 + 1 and v0 - 1 <= e1:
        raise OverlapError("distractor intersects the primary face's swept region")
    return dataclasses.replace(script, distractors=tuple(script.distractors) + (spec,))


# -- standard clips ------------------------------------------------------------

STANDARD_CAMERA = CameraModel.centered(320, 240)
STANDARD_MODEL = EllipsoidModel()


def standard_script(duration: int = 300, seed: int = 0, **changes) -> SceneScript:
    """The +/-40 degree benchmark: sinusoidal yaw and pitch, about 1.7 deg/frame peak."""
    script = SceneScript(
        duration=duration,
        trajectories={"ry": Sinusoid(40.0, 150.0), "rx": Sinusoid(40.0, 200.0)},
        texture=TextureSpec(seed=seed),
        noise_std=0.01,
        seed=seed,
    )
    return dataclasses.replace(script, **changes)


def pitch_ramp_script(duration: int = 150, seed: int = 0, **changes) -> SceneScript:
    script = SceneScript(
        duration=duration,
        trajectories={"rx": Ramp(0.0, 70.0)},
        texture=TextureSpec(seed=seed),
        noise_std=0.01,
        seed=seed,
    )
    return dataclasses.replace(script, **changes)


# -- (de)serialization ---------------------------------------------------------

_TRAJ_TYPES = {"constant": Constant, "ramp": Ramp, "sinusoid": Sinusoid}


def _traj_to_dict(t: Trajectory) -> dict:
    name = {Constant: "constant", Ramp: "ramp", Sinusoid: "sinusoid"}[type(t)]
    return {"type": name, **dataclasses.asdict(t)}


def script_to_dict(script: SceneScript) -> dict:
    d = dataclasses.asdict(script)
    d["trajectories"] = {k: _traj_to_dict(v) for k, v in script.trajectories.items()}
    return d


def script_from_dict(d: dict) -> SceneScript:
    try:
        d = dict(d)
        traj = {}
        for name, t in d.pop("trajectories", {}).items():
            t = dict(t)
            traj[name] = _TRAJ_TYPES[t.pop("type")](**t)
        texture = TextureSpec(**_tuplify(d.pop("texture", {})))
        background = BackgroundSpec(**d.pop("background", {}))
        occ = d.pop("occlusion", None)
        occlusion = OcclusionSpec(**_tuplify(occ)) if occ else None
        distractors = []
        for ds in d.pop("distractors", ()):
            ds = dict(ds)
            tex = TextureSpec(**_tuplify(ds.pop("texture", {"seed": 101})))
            distractors.append(DistractorSpec(texture=tex, **ds))
        script = SceneScript(
            trajectories=traj,
            texture=texture,
            background=background,
            occlusion=occlusion,
            distractors=tuple(distractors),
            **d,
        )
    except (KeyError, TypeError) as exc:
        raise InvalidScript(f"malformed scene script: {exc}") from exc
    script.validate()
    return script


def _tuplify(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
