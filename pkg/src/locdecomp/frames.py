"""Planar coordinate frames and heading conventions.

Two Cartesian frames are used throughout:

- navigation frame: local tangent plane, x = east, y = north
- body frame: vehicle-fixed, x = forward, y = left

The heading angle ``gamma`` is the rotation from navigation to body axes
(0 = facing east, counter-clockwise positive) and is always normalized to
``(-pi, pi]``.  Frame membership of a vector is a documented convention,
not enforced by types; conversions go through explicit rotations only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


def normalize_angle(angle):
    """Normalize an angle (or array of angles) in radians to ``(-pi, pi]``."""
    a = np.remainder(angle, TWO_PI)
    a = np.where(a > np.pi, a - TWO_PI, a)
    return float(a) if np.isscalar(angle) else a


def as_vec2(v, name: str = "vector") -> np.ndarray:
    """Coerce to a finite float vector of shape (2,)."""
    arr = np.asarray(v, dtype=float)
    if arr.shape != (2,):
        raise ValueError(f"{name} must have shape (2,), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {arr}")
    return arr


@dataclass(frozen=True)
class Heading:
    """Heading angle and its time derivative.

    ``angle`` is normalized to ``(-pi, pi]`` at construction; ``rate`` is an
    explicit measured input, not differentiated internally (see
    :func:`heading_rates` for filling it from sampled angles).
    """

    angle: float
    rate: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.angle) and np.isfinite(self.rate)):
            raise ValueError(f"heading must be finite, got {self.angle}, {self.rate}")
        object.__setattr__(self, "angle", normalize_angle(float(self.angle)))
        object.__setattr__(self, "rate", float(self.rate))


def rotation_matrix(gamma: float) -> np.ndarray:
    """2x2 rotation matrix for a counter-clockwise rotation by ``gamma``."""
    c, s = np.cos(gamma), np.sin(gamma)
    return np.array([[c, -s], [s, c]])


def body_to_nav(v, gamma: float) -> np.ndarray:
    """Rotate a body-frame vector into the navigation frame."""
    return rotation_matrix(gamma) @ as_vec2(v)


def nav_to_body(v, gamma: float) -> np.ndarray:
    """Rotate a navigation-frame vector into the body frame."""
    return rotation_matrix(-gamma) @ as_vec2(v)


def heading_rates(t, angles) -> np.ndarray:
    """Heading rates by central differences over sampled heading angles.

    Angles are unwrapped first so a crossing of the +/-pi seam does not
    produce a spurious rate spike.  Endpoints use one-sided differences.
    """
    t = np.asarray(t, dtype=float)
    angles = np.asarray(angles, dtype=float)
    if t.shape != angles.shape or t.ndim != 1:
        raise ValueError("t and angles must be 1-d arrays of equal length")
    if t.size < 2:
        return np.zeros_like(angles)
    return np.gradient(np.unwrap(angles), t)
