"""Digital reflection of the side-mirror regions of a wrist camera image."""

from __future__ import annotations

import numpy as np

from ..errors import GeometryError


def _check_rect(rect, shape) -> tuple[int, int, int, int]:
    x, y, w, h = (int(v) for v in rect)
    if w <= 0 or h <= 0:
        raise GeometryError(f"rect {rect} must have positive size")
    if x < 0 or y < 0 or x + w > shape[1] or y + h > shape[0]:
        raise GeometryError(f"rect {rect} exceeds image of {shape[1]}x{shape[0]}")
    return x, y, w, h


def mirror_reflect(img: np.ndarray, left_rect, right_rect) -> np.ndarray:
    """Flip each mirror crop horizontally and swap the two crops.

    ``img`` is ``(height, width[, channels])``; rects are ``(x, y, w, h)``
    pixels, equal in size and non-overlapping. Pixels outside both rects
    are copied unchanged. Applying the operation twice is the identity.
    """
    img = np.asarray(img)
    lx, ly, lw, lh = _check_rect(left_rect, img.shape)
    rx, ry, rw, rh = _check_rect(right_rect, img.shape)
    if (lw, lh) != (rw, rh):
        raise GeometryError(f"mirror rects differ in size: {(lw, lh)} vs {(rw, rh)}")
    if lx < rx + rw and rx < lx + lw and ly < ry + rh and ry < ly + lh:
        raise GeometryError("mirror rects overlap")
    out = img.copy()
    left = img[ly : ly + lh, lx : lx + lw]
    right = img[ry : ry + rh, rx : rx + rw]
    out[ry : ry + rh, rx : rx + rw] = left[:, ::-1]
    out[ly : ly + lh, lx : lx + lw] = right[:, ::-1]
    return out
