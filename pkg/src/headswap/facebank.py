"""Pose-tagged replacement faces rendered from a single frontal image.

Each entry is the frontal photo wrapped onto the ellipsoid and re-rendered at
one (pitch, yaw) grid node, stored in the canonical frame (s=1, centered, no
roll).  Scale, roll and translation are applied afterwards by a 2D similarity
warp, so the grid stays two-dimensional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyOutput, InvalidArgument, InvalidGrid
from .geometry import CameraModel, EllipsoidModel, PoseState, in_frame, raycast, sample_bilinear


@dataclass(frozen=True)
class GridSpec:
    pitch_min: float = -70.0
    pitch_max: float = 70.0
    yaw_min: float = -70.0
    yaw_max: float = 70.0
    step: float = 10.0

    def validate(self):
        if not self.step > 0:
            raise InvalidGrid(f"grid step must be positive, got {self.step}")
        if self.pitch_max < self.pitch_min or self.yaw_max < self.yaw_min:
            raise InvalidGrid("empty pitch or yaw range")
        for v in (self.pitch_min, self.pitch_max, self.yaw_min, self.yaw_max):
            if not -180.0 <= v < 180.0:
                raise InvalidGrid(f"grid bound {v} outside [-180, 180)")

    def axis(self, lo: float, hi: float) -> np.ndarray:
        n = int(math.floor((hi - lo) / self.step + 1e-9)) + 1
        return lo + self.step * np.arange(n)

    @property
    def pitches(self) -> np.ndarray:
        return self.axis(self.pitch_min, self.pitch_max)

    @property
    def yaws(self) -> np.ndarray:
        return self.axis(self.yaw_min, self.yaw_max)

    def nodes(self) -> list[tuple[float, float]]:
        """Grid nodes in pitch-major order."""
        self.validate()
        return [(float(p), float(y)) for p in self.pitches for y in self.yaws]


@dataclass
class FaceBankEntry:
    image: np.ndarray  # (h, w, 3) float32, canonical-frame crop
    mask: np.ndarray  # (h, w) float32 in [0, 1]
    tag_rx: float
    tag_ry: float
    origin: tuple  # canonical principal point (col, row) inside the crop
    alpha_bank: float = 1.0


@dataclass
class FaceBank:
    entries: list
    grid: GridSpec
    model: EllipsoidModel

    def __post_init__(self):
        self.tags = np.array([(e.tag_rx, e.tag_ry) for e in self.entries], dtype=float).reshape(-1, 2)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i) -> FaceBankEntry:
        return self.entries[i]


def crop_camera(model: EllipsoidModel) -> CameraModel:
    """Canonical-frame window large enough for the silhouette at any rotation."""
    half = int(math.ceil(max(model.ax, model.ay, model.az))) + 2
    return CameraModel(2 * half + 1, 2 * half + 1, float(half), float(half))


def _to_color(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=float)
    if image.ndim == 2:
        return np.repeat(image[..., None], 3, axis=2)
    return image[..., :3]


def render_entry(frontal: np.ndarray, model: EllipsoidModel, cam: CameraModel, rx: float, ry: float, alpha_bank: float = 1.0) -> FaceBankEntry:
    """Wrap ``frontal`` onto the ellipsoid and render it at (rx, ry) in the canonical crop."""
    frontal = _to_color(frontal)
    crop = crop_camera(model)
    mask, pts = raycast(model, PoseState(rx=rx, ry=ry), crop)
    image = np.zeros(crop.shape + (3,))
    if mask.any():
        p = pts[mask]
        # Inverse orthographic mapping into the frontal image (calibration pose).
        u = np.clip(cam.cx + p[:, 0], 0, cam.width - 1)
        v = np.clip(cam.cy - p[:, 1], 0, cam.height - 1)
        image[mask] = sample_bilinear(frontal, u, v)
    image = np.round(np.clip(image, 0.0, 1.0) * 255.0) / 255.0
    return FaceBankEntry(
        image.astype(np.float32),
        mask.astype(np.float32),
        float(rx),
        float(ry),
        (crop.cx, crop.cy),
        float(alpha_bank),
    )


def build_bank(frontal_image: np.ndarray, model: EllipsoidModel, cam: CameraModel, grid: GridSpec = GridSpec(), alpha_bank: float = 1.0) -> FaceBank:
    """Render one entry per grid node, enumerated pitch-major."""
    grid.validate()
    if np.asarray(frontal_image).shape[:2] != cam.shape:
        raise InvalidArgument(f"frontal image shape {np.asarray(frontal_image).shape[:2]} does not match camera {cam.shape}")
    entries = [render_entry(frontal_image, model, cam, rx, ry, alpha_bank) for rx, ry in grid.nodes()]
    return FaceBank(entries, grid, model)


def select_entry(bank: FaceBank, pose: PoseState) -> int:
    """Index of the entry nearest in (pitch, yaw); ties go to the lowest index."""
    if len(bank) == 0:
        raise InvalidArgument("empty face bank")
    d = np.sqrt((pose.rx - bank.tags[:, 0]) ** 2 + (pose.ry - bank.tags[:, 1]) ** 2)
    return int(np.argmin(d))


def blend_weights(bank: FaceBank, pose: PoseState) -> list[tuple[int, float]]:
    """Two nearest entries weighted by inverse pose distance.

    Collapses to the single nearest entry when the query sits on a node.
    """
    if len(bank) == 0:
        raise InvalidArgument("empty face bank")
    d = np.sqrt((pose.rx - bank.tags[:, 0]) ** 2 + (pose.ry - bank.tags[:, 1]) ** 2)
    order = np.argsort(d, kind="stable")
    i0 = int(order[0])
    if d[i0] == 0.0 or len(bank) == 1:
        return [(i0, 1.0)]
    i1 = int(order[1])
    w0, w1 = 1.0 / d[i0], 1.0 / d[i1]
    return [(i0, w0 / (w0 + w1)), (i1, w1 / (w0 + w1))]


def warp_entry(entry: FaceBankEntry, pose: PoseState, cam: CameraModel):
    """Similarity-warp an entry to the query pose on a full-size canvas.

    Scale by ``s``, rotate in-plane by ``rz`` and move the canonical centre to
    ``(cx + tx, cy + ty)``; image and mask are resampled bilinearly by inverse
    mapping.  Returns ``(image, mask)``.
    """
    ch, cw = entry.mask.shape
    ox, oy = entry.origin
    th = math.radians(pose.rz)
    c, s_ = math.cos(th), math.sin(th)

    # Forward-map the crop corners to bound the work on the output canvas.
    corners = np.array([[0, 0], [cw - 1, 0], [0, ch - 1], [cw - 1, ch - 1]], dtype=float)
    x = corners[:, 0] - ox
    y = oy - corners[:, 1]
    fu = cam.cx + pose.tx + pose.s * (c * x - s_ * y)
    fv = cam.cy + pose.ty - pose.s * (s_ * x + c * y)
    c0, c1 = max(int(math.floor(fu.min())) - 1, 0), min(int(math.ceil(fu.max())) + 1, cam.width - 1)
    r0, r1 = max(int(math.floor(fv.min())) - 1, 0), min(int(math.ceil(fv.max())) + 1, cam.height - 1)

    out = np.zeros(cam.shape + (3,))
    out_mask = np.zeros(cam.shape)
    if c0 <= c1 and r0 <= r1:
        vv, uu = np.mgrid[r0 : r1 + 1, c0 : c1 + 1].astype(float)
        a = (uu - cam.cx - pose.tx) / pose.s
        b = (cam.cy + pose.ty - vv) / pose.s
        xs = c * a + s_ * b
        ys = -s_ * a + c * b
        col = ox + xs
        row = oy - ys
        ok = in_frame(col, row, cw, ch)
        img = sample_bilinear(entry.image.astype(float), col[ok], row[ok])
        msk = sample_bilinear(entry.mask.astype(float), col[ok], row[ok])
        win = out[r0 : r1 + 1, c0 : c1 + 1]
        win[ok] = img
        mwin = out_mask[r0 : r1 + 1, c0 : c1 + 1]
        mwin[ok] = msk
    if not np.any(out_mask > 0):
        raise EmptyOutput(f"warped face at {pose} leaves the image")
    return out, out_mask


def replacement_for(bank: FaceBank, pose: PoseState, cam: CameraModel, blend: bool = False):
    """Warped replacement image, mask and bank illumination for a tracked pose."""
    if not blend:
        entry = bank[select_entry(bank, pose)]
        image, mask = warp_entry(entry, pose, cam)
        return image, mask, entry.alpha_bank
    image = np.zeros(cam.shape + (3,))
    mask = np.zeros(cam.shape)
    alpha_bank = 0.0
    for idx, w in blend_weights(bank, pose):
        img, msk = warp_entry(bank[idx], pose, cam)
        image += w * img
        mask += w * msk
        alpha_bank += w * bank[idx].alpha_bank
    return image, mask, alpha_bank


def entry_name(rx: float, ry: float) -> str:
    return f"entry_{rx:g}_{ry:g}"


def save_bank(bank: FaceBank, directory) -> None:
    """Write ``bank.meta`` plus one PPM image and PGM mask per entry."""
    from . import formats

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    g, m = bank.grid, bank.model
    first = bank.entries[0]
    meta = {
        "pitch_min": g.pitch_min,
        "pitch_max": g.pitch_max,
        "yaw_min": g.yaw_min,
        "yaw_max": g.yaw_max,
        "step": g.step,
        "ax": m.ax,
        "ay": m.ay,
        "az": m.az,
        "texture_res": m.texture_res,
        "origin_x": first.origin[0],
        "origin_y": first.origin[1],
        "alpha_bank": first.alpha_bank,
        "entries": len(bank),
    }
    (d / "bank.meta").write_text("".join(f"{k} = {v!r}\n" for k, v in meta.items()))
    for e in bank.entries:
        name = entry_name(e.tag_rx, e.tag_ry)
        formats.write_image(d / f"{name}.ppm", e.image)
        formats.write_image(d / f"{name}.pgm", e.mask)


def load_bank(directory) -> FaceBank:
    from . import formats
    from .config import parse_key_values

    d = Path(directory)
    meta = {k: float(v) for k, v in parse_key_values((d / "bank.meta").read_text()).items()}
    grid = GridSpec(meta["pitch_min"], meta["pitch_max"], meta["yaw_min"], meta["yaw_max"], meta["step"])
    model = EllipsoidModel(meta["ax"], meta["ay"], meta["az"], meta["texture_res"])
    entries = []
    for rx, ry in grid.nodes():
        name = entry_name(rx, ry)
        image = formats.read_image(d / f"{name}.ppm", color=True).astype(np.float32)
        mask = formats.read_image(d / f"{name}.pgm", color=False).astype(np.float32)
        entries.append(FaceBankEntry(image, mask, rx, ry, (meta["origin_x"], meta["origin_y"]), meta["alpha_bank"]))
    return FaceBank(entries, grid, model)
