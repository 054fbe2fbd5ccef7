"""Per-pixel quadratic motion fitting, rectification, and flow prediction.

A pixel trajectory is modelled as x(t) = x0 + v*t + 0.5*a*t^2 with t in
frame units.  Given displacement fields from a center frame to its
neighbours at t = -1, 1, 2, the model is fitted either exactly from the
two adjacent flows or by least squares over all three, and the two fits
are blended with a weight that decays as the three pairwise acceleration
estimates disagree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Displacement matrix of the quadratic model: row k maps (velocity,
# acceleration) to the displacement at t = -1, 1, 2 respectively.
SYSTEM_MATRIX = np.array([
    [-1.0, 0.5],
    [1.0, 0.5],
    [2.0, 2.0],
])

# Closed-form pseudo-inverse (A^T A)^-1 A^T of SYSTEM_MATRIX; verified
# against a numerical normal-equations solve in the test suite.
PSEUDO_INVERSE = np.array([
    [-6.5, 2.5, 1.0],
    [7.0, -1.0, 4.0],
]) / 11.0

CONSISTENCY_RULES = ("pairwise-dot-positive", "pairwise-dot-nonnegative")


@dataclass(frozen=True)
class MotionField:
    """Per-pixel velocity and acceleration, both (H, W, 2) in pixel units."""

    velocity: np.ndarray
    acceleration: np.ndarray

    def __post_init__(self) -> None:
        if self.velocity.shape != self.acceleration.shape:
            raise ValueError(
                f"velocity/acceleration shapes differ: "
                f"{self.velocity.shape} vs {self.acceleration.shape}"
            )


@dataclass(frozen=True)
class RectifierConfig:
    omega: float = 5.0       # steepness of the blending weight
    gamma: float = 1.0       # disagreement level at which the weight is 0.5
    consistency: str = "pairwise-dot-positive"

    def validate(self) -> None:
        if self.omega <= 0:
            raise ValueError(f"omega must be > 0, got {self.omega}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.consistency not in CONSISTENCY_RULES:
            raise ValueError(
                f"consistency must be one of {CONSISTENCY_RULES}, got {self.consistency!r}"
            )


def _check_same_shape(*flows: np.ndarray) -> None:
    shapes = {f.shape for f in flows}
    if len(shapes) != 1:
        raise ValueError(f"flow shapes differ: {sorted(shapes)}")


def fit_pair(flow_back: np.ndarray, flow_fwd: np.ndarray) -> MotionField:
    """Exact fit from the flows to t = -1 and t = 1.

    The unique solution of the two-equation system: velocity is the
    central difference of the flows, acceleration their sum.
    """
    _check_same_shape(flow_back, flow_fwd)
    return MotionField(
        velocity=0.5 * (flow_fwd - flow_back),
        acceleration=flow_fwd + flow_back,
    )


def fit_least_squares(flow_back: np.ndarray, flow_fwd: np.ndarray,
                      flow_fwd2: np.ndarray) -> MotionField:
    """Least-squares fit over the flows to t = -1, 1 and 2.

    Applies the precomputed pseudo-inverse of the fixed 3x2 system per
    pixel and per component.
    """
    _check_same_shape(flow_back, flow_fwd, flow_fwd2)
    p = PSEUDO_INVERSE
    velocity = p[0, 0] * flow_back + p[0, 1] * flow_fwd + p[0, 2] * flow_fwd2
    acceleration = p[1, 0] * flow_back + p[1, 1] * flow_fwd + p[1, 2] * flow_fwd2
    return MotionField(velocity=velocity, acceleration=acceleration)


def acceleration_estimates(flow_back: np.ndarray, flow_fwd: np.ndarray,
                           flow_fwd2: np.ndarray
                           ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Three independent per-pixel acceleration estimates.

    Each is the combination of two of the three flows that equals the
    acceleration when the motion is exactly quadratic, so their spread
    measures how well the model holds.
    """
    _check_same_shape(flow_back, flow_fwd, flow_fwd2)
    a1 = flow_back + flow_fwd
    a2 = (2.0 / 3.0) * flow_back + (1.0 / 3.0) * flow_fwd2
    a3 = flow_fwd2 - 2.0 * flow_fwd
    return a1, a2, a3


def consistency_weight(z, cfg: RectifierConfig | None = None):
    """Blending weight in (0, 1) decaying with the disagreement z >= 0.

    Computed as 0.5 * (1 - tanh(omega * (z - gamma))), the numerically
    stable form of the logistic-style weight; equals 0.5 at z = gamma and
    is strictly decreasing in z.
    """
    cfg = cfg or RectifierConfig()
    cfg.validate()
    return 0.5 * (1.0 - np.tanh(cfg.omega * (np.asarray(z) - cfg.gamma)))


def _pair_consistent(x: np.ndarray, y: np.ndarray, rule: str) -> np.ndarray:
    dot = (x * y).sum(axis=-1)
    if rule == "pairwise-dot-nonnegative":
        return dot >= 0.0
    # zero vectors carry no orientation and never veto consistency
    zero = ((x == 0.0).all(axis=-1)) | ((y == 0.0).all(axis=-1))
    return (dot > 0.0) | zero


def rectify(ori: MotionField, lse: MotionField,
            a1: np.ndarray, a2: np.ndarray, a3: np.ndarray,
            cfg: RectifierConfig | None = None) -> MotionField:
    """Blend the least-squares fit into the exact pair fit where consistent.

    Pixels whose three acceleration estimates disagree in orientation keep
    the pair fit unchanged; elsewhere the two fits are mixed with
    consistency_weight(|a1 - a2|) on the least-squares side.
    """
    cfg = cfg or RectifierConfig()
    cfg.validate()
    _check_same_shape(ori.velocity, lse.velocity, a1, a2, a3)

    consistent = (
        _pair_consistent(a1, a2, cfg.consistency)
        & _pair_consistent(a1, a3, cfg.consistency)
        & _pair_consistent(a2, a3, cfg.consistency)
    )
    z = np.linalg.norm(a1 - a2, axis=-1)
    alpha = np.where(consistent, consistency_weight(z, cfg), 0.0)[..., None]
    return MotionField(
        velocity=alpha * lse.velocity + (1.0 - alpha) * ori.velocity,
        acceleration=alpha * lse.acceleration + (1.0 - alpha) * ori.acceleration,
    )


def predict_flow(motion: MotionField, t: float) -> np.ndarray:
    """Displacement field from the center frame to time t in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must be in [0, 1], got {t}")
    return motion.velocity * t + 0.5 * motion.acceleration * (t * t)


def rescale_flow_pair(forward: np.ndarray, backward: np.ndarray,
                      n: float) -> tuple[np.ndarray, np.ndarray]:
    """Linearly rescale a bidirectional flow pair to the fraction n.

    Returns (n * forward, (1 - n) * backward): the forward flow shrinks
    toward the earlier frame and the backward flow toward the later one.
    """
    _check_same_shape(forward, backward)
    if not 0.0 <= n <= 1.0:
        raise ValueError(f"n must be in [0, 1], got {n}")
    return n * forward, (1.0 - n) * backward
