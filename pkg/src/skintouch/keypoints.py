"""
Geometry over 21-point hand skeletons.

Coordinates follow the usual hand-tracker layout: x/y in image pixels (y grows
downward) and z as relative depth in palm-length units, negative toward the
camera. All gating geometry is done in the image plane; z only feeds pitch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateSkeleton

NUM_KEYPOINTS = 21
WRIST = 0
MIDDLE_MCP = 9
PROXIMITY_PALM_LENGTHS = 3.0
_EPS = 1e-6


class Finger(IntEnum):
    THUMB = 0
    INDEX = 1
    MIDDLE = 2
    RING = 3
    PINKY = 4


# (mcp, pip, dip, tip) per finger. For the thumb the chain is CMC, MCP, IP, tip,
# so MCP stands in for PIP and IP stands in for DIP.
FINGER_JOINTS = {
    Finger.THUMB: (1, 2, 3, 4),
    Finger.INDEX: (5, 6, 7, 8),
    Finger.MIDDLE: (9, 10, 11, 12),
    Finger.RING: (13, 14, 15, 16),
    Finger.PINKY: (17, 18, 19, 20),
}


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite keypoint {self}")


@dataclass(frozen=True, eq=False)
class HandSkeleton:
    """One tracked hand: 21 keypoints stored as a read-only (21, 3) array."""

    handedness: str
    points: np.ndarray
    confidence: float = 1.0

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.shape != (NUM_KEYPOINTS, 3):
            raise ValueError(f"expected ({NUM_KEYPOINTS}, 3) keypoints, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("keypoints must be finite")
        if self.handedness not in ("Left", "Right"):
            raise ValueError(f"handedness must be Left or Right, got {self.handedness!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_keypoints(cls, handedness: str, keypoints: Sequence[Keypoint], confidence: float = 1.0):
        return cls(handedness, np.array([[k.x, k.y, k.z] for k in keypoints]), confidence)

    def __eq__(self, other):
        if not isinstance(other, HandSkeleton):
            return NotImplemented
        return (
            self.handedness == other.handedness
            and self.confidence == other.confidence
            and np.array_equal(self.points, other.points)
        )

    def keypoint(self, index: int) -> Keypoint:
        x, y, z = self.points[index]
        return Keypoint(float(x), float(y), float(z))

    @property
    def wrist(self) -> Keypoint:
        return self.keypoint(WRIST)

    @property
    def middle_mcp(self) -> Keypoint:
        return self.keypoint(MIDDLE_MCP)

    def mcp(self, finger: Finger) -> Keypoint:
        return self.keypoint(FINGER_JOINTS[Finger(finger)][0])

    def pip(self, finger: Finger) -> Keypoint:
        return self.keypoint(FINGER_JOINTS[Finger(finger)][1])

    def dip(self, finger: Finger) -> Keypoint:
        return self.keypoint(FINGER_JOINTS[Finger(finger)][2])

    def tip(self, finger: Finger) -> Keypoint:
        return self.keypoint(FINGER_JOINTS[Finger(finger)][3])

    def transformed(self, matrix: np.ndarray, offset=(0.0, 0.0)) -> "HandSkeleton":
        """Apply a 2x2 linear map plus translation to the image-plane coordinates."""
        pts = self.points.copy()
        pts[:, :2] = pts[:, :2] @ np.asarray(matrix, dtype=np.float64).T + np.asarray(offset)
        return HandSkeleton(self.handedness, pts, self.confidence)


@dataclass(frozen=True)
class PolarContext:
    R: float
    theta: float


@dataclass(frozen=True)
class FingerAngle:
    pitch: float
    yaw: float


def wrap_angle(a: float) -> float:
    """Map an angle onto (-pi, pi]."""
    a = math.remainder(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


def palm_length(hand: HandSkeleton) -> float:
    d = float(np.hypot(*(hand.points[MIDDLE_MCP, :2] - hand.points[WRIST, :2])))
    if d < _EPS:
        raise DegenerateSkeleton("wrist and middle MCP coincide")
    return d


def proximity_gate(receiving: HandSkeleton, inputting: HandSkeleton,
                   threshold: float = PROXIMITY_PALM_LENGTHS) -> bool:
    """True when the closest keypoint pair is within `threshold` receiving-hand palm lengths."""
    limit = threshold * palm_length(receiving)
    diff = receiving.points[:, None, :2] - inputting.points[None, :, :2]
    nearest = float(np.sqrt(np.min(np.einsum("ijk,ijk->ij", diff, diff))))
    return nearest <= limit


def active_fingers(hand: HandSkeleton) -> frozenset:
    # a finger is extended when tip, DIP and PIP get strictly farther from the wrist in turn
    wrist = hand.points[WRIST, :2]
    dist = np.hypot(*(hand.points[:, :2] - wrist).T)
    active = set()
    for finger, (_, pip, dip, tip) in FINGER_JOINTS.items():
        if dist[tip] > dist[dip] > dist[pip]:
            active.add(finger)
    return frozenset(active)


def polar_context(receiving: HandSkeleton, fingertip: Keypoint) -> PolarContext:
    """Polar position of `fingertip` around the receiving wrist.

    R is in palm lengths; theta is the signed angle from the wrist->middle-MCP
    axis, counter-clockwise positive in raw image coordinates.
    """
    wrist = receiving.points[WRIST, :2]
    axis = receiving.points[MIDDLE_MCP, :2] - wrist
    axis_len = float(np.hypot(*axis))
    if axis_len < _EPS:
        raise DegenerateSkeleton("wrist and middle MCP coincide")
    vx, vy = fingertip.x - wrist[0], fingertip.y - wrist[1]
    r = math.hypot(vx, vy) / axis_len
    if r == 0.0:
        return PolarContext(0.0, 0.0)
    cross = axis[0] * vy - axis[1] * vx
    dot = axis[0] * vx + axis[1] * vy
    return PolarContext(r, wrap_angle(math.atan2(cross, dot)))


def finger_angle(hand: HandSkeleton, finger: Finger) -> FingerAngle:
    _, _, dip, tip = FINGER_JOINTS[Finger(finger)]
    dx, dy, dz = hand.points[tip] - hand.points[dip]
    planar = math.hypot(dx, dy)
    if planar < _EPS and abs(dz) < _EPS:
        raise DegenerateSkeleton("DIP and tip coincide")
    # z is in palm lengths; bring it to pixels before comparing with the planar run
    dz_px = dz * palm_length(hand)
    pitch = math.atan2(-dz_px, planar)
    yaw = wrap_angle(math.atan2(dx, -dy)) if planar >= _EPS else 0.0
    return FingerAngle(pitch, yaw)


def select_hands(hands: Iterable[HandSkeleton], min_confidence: float = 0.5,
                 receiving: str = "Left"):
    """Pick the most confident receiving and inputting hands; either may be None."""
    best = {}
    for hand in hands:
        if hand.confidence < min_confidence:
            continue
        cur = best.get(hand.handedness)
        if cur is None or hand.confidence > cur.confidence:
            best[hand.handedness] = hand
    inputting = "Right" if receiving == "Left" else "Left"
    return best.get(receiving), best.get(inputting)
