"""Planar poses, angle wrapping and rigid transforms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .autodiff import Jet3, cos, sin, value_of

TWO_PI = 2.0 * math.pi


def normalize_angle(t):
    """Wrap an angle into [-pi, pi).

    Works on floats and jets; for jets the derivative passes through
    unchanged since wrapping only subtracts a constant multiple of 2*pi.
    """
    a = value_of(t)
    k = math.floor((a + math.pi) / TWO_PI)
    r = t if isinstance(t, Jet3) else a
    if k != 0:
        r = r - TWO_PI * k
    # Rounding can land exactly on +pi or just below -pi.
    if value_of(r) >= math.pi:
        r = r - TWO_PI
    elif value_of(r) < -math.pi:
        r = r + TWO_PI
    return r


@dataclass(frozen=True)
class Pose2D:
    """Robot pose in the map frame. ``theta`` is wrapped on construction."""

    x: float
    y: float
    theta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    def __iter__(self) -> Iterator[float]:
        yield self.x
        yield self.y
        yield self.theta

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "Pose2D":
        x, y, theta = values
        return cls(x, y, theta)

    def inverse(self) -> "Pose2D":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2D(-c * self.x - s * self.y, s * self.x - c * self.y, -self.theta)

    def compose(self, other: "Pose2D") -> "Pose2D":
        """``self * other``: apply ``other`` in the frame of ``self``."""
        px, py = transform_point(self, (other.x, other.y))
        return Pose2D(px, py, self.theta + other.theta)

    def __matmul__(self, other: "Pose2D") -> "Pose2D":
        return self.compose(other)


def transform_point(pose, p):
    """Map body-frame point ``p`` through ``pose`` (rotate, then translate).

    ``pose`` is any ``(x, y, theta)`` triple; its entries may be jets.
    """
    x, y, theta = pose
    c, s = cos(theta), sin(theta)
    px, py = p
    return (c * px - s * py + x, s * px + c * py + y)


def transform_points(pose: Pose2D, points: np.ndarray) -> np.ndarray:
    """Vectorised float version of :func:`transform_point` for ``(n, 2)`` arrays."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    rot = np.array([[c, -s], [s, c]])
    return points @ rot.T + np.array([pose.x, pose.y])
