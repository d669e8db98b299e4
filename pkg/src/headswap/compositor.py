"""Superimpose a warped replacement face on the subject's frame."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, InvalidArgument, InvalidGain

DEFAULT_FEATHER = 5


def match_illumination(image: np.ndarray, alpha_est: float, alpha_bank: float) -> np.ndarray:
    """Scale every channel by ``alpha_est / alpha_bank`` and clamp to [0, 1]."""
    if not (alpha_est > 0 and alpha_bank > 0):
        raise InvalidGain(f"gains must be positive, got {alpha_est} and {alpha_bank}")
    if alpha_est == alpha_bank:
        return np.asarray(image).copy()
    return np.clip(np.asarray(image, dtype=float) * (alpha_est / alpha_bank), 0.0, 1.0)


def feathered_alpha(mask: np.ndarray, feather_px: int) -> np.ndarray:
    """Mask attenuated by a linear ramp over ``feather_px`` pixels inside its boundary.

    A pixel at Euclidean distance ``d`` from the nearest zero-mask pixel keeps
    ``min(1, d / feather_px)`` of its mask value, so the outermost support
    ring (d = 1) starts at ``1 / feather_px``.
    """
    if feather_px < 0:
        raise InvalidArgument(f"feather_px must be >= 0, got {feather_px}")
    mask = np.asarray(mask, dtype=float)
    if feather_px == 0:
        return mask
    support = mask > 0
    if not support.any():
        return np.zeros_like(mask)
    # Pad with zeros so the image border counts as outside the support.
    dist = ndimage.distance_transform_edt(np.pad(support, 1))[1:-1, 1:-1]
    return mask * np.minimum(1.0, dist / feather_px)


def composite(frame: np.ndarray, replacement: np.ndarray, mask: np.ndarray, feather_px: int = DEFAULT_FEATHER) -> np.ndarray:
    """``a * replacement + (1 - a) * frame`` with ``a`` the feathered mask.

    Pixels where ``a`` is exactly 0 (or 1) are copied bit-for-bit from the
    frame (or the replacement).
    """
    frame = np.asarray(frame)
    replacement = np.asarray(replacement)
    mask = np.asarray(mask)
    if frame.shape != replacement.shape or frame.shape[:2] != mask.shape:
        raise DimensionMismatch(f"frame {frame.shape}, replacement {replacement.shape}, mask {mask.shape}")
    a = feathered_alpha(mask, feather_px)
    if frame.ndim == 3:
        a = a[..., None]
    blended = a * replacement + (1.0 - a) * frame
    # Guard against rounding pushing a blend outside its two sources.
    blended = np.clip(blended, np.minimum(frame, replacement), np.maximum(frame, replacement))
    out = np.where(a == 0, frame, np.where(a == 1, replacement, blended))
    return out.astype(frame.dtype, copy=False)
