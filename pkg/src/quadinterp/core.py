"""Frame and flow array conventions, PNG I/O, resampling, and gradients.

Frames are numpy float64 arrays with intensities in [0, 1], shaped
``(H, W)`` for grayscale or ``(H, W, 3)`` for RGB.  Flow fields are
``(H, W, 2)`` float64 arrays holding per-pixel ``(dx, dy)`` displacements
in pixel units.  All values are converted from 8-bit on load by dividing
by 255 and quantized back only when a frame is written to disk.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image


class FormatError(ValueError):
    """Raised when a file on disk does not match its expected format."""


def validate_frame(frame: np.ndarray) -> np.ndarray:
    """Check frame shape/values and return the array as float64."""
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
        raise ValueError(f"frame must be (H, W) or (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"frame dimensions must be >= 1, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("frame contains non-finite values")
    return arr


def channel_count(frame: np.ndarray) -> int:
    return 1 if frame.ndim == 2 else frame.shape[2]


def load_frame(path: str | os.PathLike) -> np.ndarray:
    """Load an 8-bit grayscale or RGB PNG as intensities in [0, 1].

    Raises FileNotFoundError for missing files and FormatError for any
    other mode (palette, RGBA, 16-bit, ...), naming the offending path.
    """
    with Image.open(path) as img:
        if img.mode == "L":
            data = np.asarray(img, dtype=np.uint8)
        elif img.mode == "RGB":
            data = np.asarray(img, dtype=np.uint8)
        else:
            raise FormatError(
                f"{os.fspath(path)}: unsupported image mode {img.mode!r}; "
                "expected 8-bit grayscale (L) or RGB"
            )
    return data.astype(np.float64) / 255.0


def save_frame(frame: np.ndarray, path: str | os.PathLike) -> None:
    """Write a frame as an 8-bit PNG.

    Values are clamped to [0, 1] and quantized as round(v * 255) with
    ties rounding away from zero, so 127.5 becomes 128.
    """
    arr = validate_frame(frame)
    data = quantize(arr)
    mode = "L" if data.ndim == 2 else "RGB"
    Image.fromarray(data, mode=mode).save(path, format="PNG")


def quantize(frame: np.ndarray) -> np.ndarray:
    """Map [0, 1] intensities to uint8, ties away from zero."""
    v = np.clip(frame, 0.0, 1.0) * 255.0
    return np.floor(v + 0.5).astype(np.uint8)


def edge_map(frame: np.ndarray) -> np.ndarray:
    """Per-channel gradient magnitude of a frame.

    Central differences in the interior, one-sided at the borders;
    magnitude is sqrt(gx^2 + gy^2) per channel, same shape as the input.
    """
    arr = validate_frame(frame)
    if arr.ndim == 2:
        gy, gx = np.gradient(arr)
        return np.hypot(gx, gy)
    out = np.empty_like(arr)
    for c in range(arr.shape[2]):
        gy, gx = np.gradient(arr[:, :, c])
        out[:, :, c] = np.hypot(gx, gy)
    return out


def downsample2(frame: np.ndarray) -> np.ndarray:
    """Halve resolution by averaging 2x2 blocks.

    Odd trailing rows/columns are averaged with their edge-replicated
    neighbour, so output dimensions are ceil(h/2) x ceil(w/2).
    """
    arr = np.asarray(frame, dtype=np.float64)
    h, w = arr.shape[:2]
    if h < 2 or w < 2:
        raise ValueError(f"downsample2 needs width, height >= 2, got {w}x{h}")
    pad = [(0, h % 2), (0, w % 2)] + [(0, 0)] * (arr.ndim - 2)
    f = np.pad(arr, pad, mode="edge")
    return 0.25 * (f[0::2, 0::2] + f[1::2, 0::2] + f[0::2, 1::2] + f[1::2, 1::2])


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample img at continuous (xs, ys) with bilinear weights, edge-clamped.

    Exact at integer coordinates (zero interpolation applied) and exact on
    affine images for any fractional coordinate.
    """
    h, w = img.shape[:2]
    x = np.clip(xs, 0.0, w - 1.0)
    y = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    v00 = img[y0, x0]
    v01 = img[y0, x1]
    v10 = img[y1, x0]
    v11 = img[y1, x1]
    top = v00 + (v01 - v00) * fx
    bot = v10 + (v11 - v10) * fx
    return top + (bot - top) * fy


def upsample2(frame: np.ndarray, target_w: int, target_h: int) -> np.ndarray:
    """Bilinearly resample a frame to (target_w, target_h).

    Uses pixel-center alignment: output center (i + 0.5) maps to input
    coordinate (i + 0.5) * src/dst - 0.5, clamped at the edges.
    """
    if target_w < 1 or target_h < 1:
        raise ValueError(f"target dimensions must be >= 1, got {target_w}x{target_h}")
    arr = np.asarray(frame, dtype=np.float64)
    h, w = arr.shape[:2]
    xs = (np.arange(target_w, dtype=np.float64) + 0.5) * (w / target_w) - 0.5
    ys = (np.arange(target_h, dtype=np.float64) + 0.5) * (h / target_h) - 0.5
    gx, gy = np.meshgrid(xs, ys)
    return bilinear_sample(arr, gx, gy)


def downsample2_flow(flow: np.ndarray) -> np.ndarray:
    """Downsample a flow field, halving the vectors.

    Displacements are in pixel units, so when the grid spacing doubles a
    d-pixel displacement becomes d/2 pixels.
    """
    return downsample2(flow) * 0.5


def upsample2_flow(flow: np.ndarray, target_w: int, target_h: int) -> np.ndarray:
    """Upsample a flow field, scaling vectors by the resolution ratio."""
    h, w = flow.shape[:2]
    out = upsample2(flow, target_w, target_h)
    out[..., 0] *= target_w / w
    out[..., 1] *= target_h / h
    return out


def pixel_grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """(xs, ys) coordinate grids of shape (h, w)."""
    ys, xs = np.mgrid[0:h, 0:w]
    return xs.astype(np.float64), ys.astype(np.float64)
