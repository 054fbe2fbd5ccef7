"""Classical coarse-to-fine dense optical flow and Middlebury .flo I/O.

The estimator is a pyramidal local least-squares (Lucas-Kanade style)
refinement: a Gaussian image pyramid is built for both frames, and at each
level the current flow is iteratively corrected by solving, per pixel, the
regularized 2x2 normal equations accumulated over a square window of
spatial and temporal gradients.  It is fully deterministic: no random
initialization, no data-dependent iteration counts.

Precomputed flows in the Middlebury .flo format can be used everywhere the
pipeline needs a flow, so a stronger external estimator can be injected.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d, uniform_filter

from .core import FormatError, bilinear_sample, pixel_grid, upsample2_flow

FLO_MAGIC = 202021.25

# 5-tap binomial smoothing used between pyramid levels
_BINOMIAL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


@dataclass(frozen=True)
class FlowEstimatorConfig:
    pyramid_levels: int = 4
    iterations_per_level: int = 3
    window_radius: int = 7
    regularization: float = 1e-4

    def validate(self) -> None:
        if self.pyramid_levels < 1:
            raise ValueError(f"pyramid_levels must be >= 1, got {self.pyramid_levels}")
        if self.window_radius < 1:
            raise ValueError(f"window_radius must be >= 1, got {self.window_radius}")
        if self.iterations_per_level < 1:
            raise ValueError(
                f"iterations_per_level must be >= 1, got {self.iterations_per_level}"
            )
        if self.regularization < 0:
            raise ValueError(f"regularization must be >= 0, got {self.regularization}")


def _to_gray(frame: np.ndarray) -> np.ndarray:
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim == 3:
        return arr.mean(axis=2)
    return arr


def _blur_decimate(img: np.ndarray) -> np.ndarray:
    smoothed = correlate1d(img, _BINOMIAL, axis=0, mode="nearest")
    smoothed = correlate1d(smoothed, _BINOMIAL, axis=1, mode="nearest")
    return smoothed[::2, ::2]


def _pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [img]
    for _ in range(levels - 1):
        if min(pyr[-1].shape) < 16:
            break
        pyr.append(_blur_decimate(pyr[-1]))
    return pyr


def _refine_level(src: np.ndarray, dst: np.ndarray, flow: np.ndarray,
                  cfg: FlowEstimatorConfig) -> np.ndarray:
    h, w = src.shape
    size = 2 * cfg.window_radius + 1
    xs, ys = pixel_grid(h, w)
    gy_s, gx_s = np.gradient(src)

    for _ in range(cfg.iterations_per_level):
        warped = bilinear_sample(dst, xs + flow[..., 0], ys + flow[..., 1])
        residual = warped - src
        gy_w, gx_w = np.gradient(warped)
        gx = 0.5 * (gx_s + gx_w)
        gy = 0.5 * (gy_s + gy_w)

        sxx = uniform_filter(gx * gx, size, mode="nearest") + cfg.regularization
        sxy = uniform_filter(gx * gy, size, mode="nearest")
        syy = uniform_filter(gy * gy, size, mode="nearest") + cfg.regularization
        bx = uniform_filter(gx * residual, size, mode="nearest")
        by = uniform_filter(gy * residual, size, mode="nearest")

        det = sxx * syy - sxy * sxy
        du = -(syy * bx - sxy * by) / det
        dv = -(sxx * by - sxy * bx) / det
        flow = flow + np.stack([du, dv], axis=-1)
    return flow


def estimate_flow(src: np.ndarray, dst: np.ndarray,
                  cfg: FlowEstimatorConfig | None = None) -> np.ndarray:
    """Estimate dense flow such that dst(p + flow(p)) ~ src(p).

    Both frames must share dimensions and channel count.  The number of
    pyramid levels is capped so the coarsest level keeps at least 16
    pixels on its short side.  Identical frames yield exactly zero flow.
    """
    cfg = cfg or FlowEstimatorConfig()
    cfg.validate()
    if src.shape != dst.shape:
        raise ValueError(f"frame shapes differ: {src.shape} vs {dst.shape}")

    a = _to_gray(src)
    b = _to_gray(dst)
    pyr_a = _pyramid(a, cfg.pyramid_levels)
    pyr_b = _pyramid(b, cfg.pyramid_levels)

    flow = np.zeros(pyr_a[-1].shape + (2,), dtype=np.float64)
    for level in range(len(pyr_a) - 1, -1, -1):
        if level < len(pyr_a) - 1:
            lh, lw = pyr_a[level].shape
            flow = upsample2_flow(flow, lw, lh)
        flow = _refine_level(pyr_a[level], pyr_b[level], flow, cfg)
    return flow


def write_flow(flow: np.ndarray, path: str | os.PathLike) -> None:
    """Write a flow field as a little-endian Middlebury .flo file."""
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be (H, W, 2), got {flow.shape}")
    h, w = flow.shape[:2]
    with open(path, "wb") as f:
        f.write(np.float32(FLO_MAGIC).astype("<f4").tobytes())
        f.write(np.array([w, h], dtype="<i4").tobytes())
        f.write(np.ascontiguousarray(flow, dtype="<f4").tobytes())


def read_flow(path: str | os.PathLike) -> np.ndarray:
    """Read a Middlebury .flo file into an (H, W, 2) float64 array."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 12:
        raise FormatError(f"{os.fspath(path)}: truncated header")
    magic = np.frombuffer(raw, dtype="<f4", count=1)[0]
    if magic != np.float32(FLO_MAGIC):
        raise FormatError(f"{os.fspath(path)}: bad magic {magic!r}")
    w, h = np.frombuffer(raw, dtype="<i4", count=2, offset=4)
    if w <= 0 or h <= 0:
        raise FormatError(f"{os.fspath(path)}: nonpositive dimensions {w}x{h}")
    expected = 12 + 8 * int(w) * int(h)
    if len(raw) < expected:
        raise FormatError(
            f"{os.fspath(path)}: truncated payload ({len(raw)} of {expected} bytes)"
        )
    data = np.frombuffer(raw, dtype="<f4", count=2 * int(w) * int(h), offset=12)
    return data.reshape(int(h), int(w), 2).astype(np.float64)
