"""On-disk formats: 8-bit images, template/pose CSVs and the JSON reports."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidArgument
from .geometry import PoseState
from .tracker import SparseTemplate

TEMPLATE_HEADER = ["x", "y", "z", "nx", "ny", "nz", "t"]
TRACE_HEADER = ["frame", "tx", "ty", "s", "rx", "ry", "rz", "alpha"]


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(np.asarray(image, dtype=float), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_image(path, image: np.ndarray) -> None:
    """Save a float image in [0, 1]; (H, W) becomes PGM/gray, (H, W, 3) PPM/RGB."""
    data = to_uint8(image)
    mode = "L" if data.ndim == 2 else "RGB"
    Image.fromarray(data, mode=mode).save(Path(path))


def read_image(path, color: bool = True) -> np.ndarray:
    with Image.open(Path(path)) as im:
        im = im.convert("RGB" if color else "L")
        return np.asarray(im, dtype=float) / 255.0


def frame_path(directory, index: int) -> Path:
    return Path(directory) / f"frame_{index:06d}.ppm"


def write_frames(directory, frames) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for k, f in enumerate(frames):
        write_image(frame_path(d, k), f)


def list_frames(directory) -> list[Path]:
    return sorted(Path(directory).glob("frame_*.ppm"))


def read_frames(directory) -> list[np.ndarray]:
    return [read_image(p) for p in list_frames(directory)]


def write_template(path, tmpl: SparseTemplate) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TEMPLATE_HEADER)
        for p, n, t in zip(tmpl.points, tmpl.normals, tmpl.intensities):
            w.writerow([repr(float(v)) for v in (*p, *n, t)])


def read_template(path) -> SparseTemplate:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TEMPLATE_HEADER:
            raise InvalidArgument(f"{path}: expected header {','.join(TEMPLATE_HEADER)}")
        rows = np.array([[float(v) for v in row] for row in reader if row], dtype=float).reshape(-1, 7)
    return SparseTemplate(rows[:, 0:3].copy(), rows[:, 6].copy(), rows[:, 3:6].copy(), source=str(path))


def write_trace(path, poses, statuses=None, frames=None) -> None:
    """Pose CSV; ``statuses`` adds a trailing ``status`` column (tracker output).

    ``frames`` gives the frame index of each row (default 0, 1, 2, ...).
    """
    poses = list(poses)
    frames = range(len(poses)) if frames is None else list(frames)
    if len(frames) != len(poses):
        raise InvalidArgument(f"{len(frames)} frame indices for {len(poses)} poses")
    header = TRACE_HEADER + (["status"] if statuses is not None else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, (index, pose) in enumerate(zip(frames, poses)):
            row = [str(index)] + [repr(float(getattr(pose, f))) for f in TRACE_HEADER[1:]]
            if statuses is not None:
                row.append(statuses[k])
            w.writerow(row)


def read_trace(path) -> tuple[list[int], list[PoseState]]:
    """Read a pose CSV; extra columns (e.g. status) are ignored."""
    frames, poses = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACE_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise InvalidArgument(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            frames.append(int(row["frame"]))
            poses.append(PoseState(**{f: float(row[f]) for f in TRACE_HEADER[1:]}))
    return frames, poses


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())
