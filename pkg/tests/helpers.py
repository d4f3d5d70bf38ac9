"""Shared builders for tests."""

import math

import numpy as np

from skintouch.keypoints import HandSkeleton

# radius along each finger ray, in palm lengths: (mcp, pip, dip, tip)
_FINGER_RADII = [(0.3, 0.6, 0.85, 1.05)] + [(1.0, 1.35, 1.6, 1.8)] * 4


def radial_hand(handedness="Right", wrist=(200.0, 200.0), palm=100.0, rot=0.0, spread=0.3, z=None,
                confidence=0.9):
    """All five fingers extended along rays fanning out of the wrist.

    The middle finger ray points along `rot` measured from image-up, so the
    middle MCP sits exactly one palm length from the wrist.
    """
    pts = np.zeros((21, 3))
    pts[0, :2] = wrist
    for f in range(5):
        phi = rot + (f - 2) * spread
        d = np.array([math.sin(phi), -math.cos(phi)])
        for j, r in enumerate(_FINGER_RADII[f]):
            pts[1 + 4 * f + j, :2] = np.asarray(wrist) + r * palm * d
    if z is not None:
        pts[:, 2] = z
    return HandSkeleton(handedness, pts, confidence)


def with_points(hand, updates):
    pts = hand.points.copy()
    for idx, xyz in updates.items():
        pts[idx, :len(xyz)] = xyz
    return HandSkeleton(hand.handedness, pts, hand.confidence)


def rotation(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def textured_image(width=240, height=200, seed=0):
    """Smooth random texture, band-limited so bilinear resampling is accurate."""
    from scipy.ndimage import gaussian_filter

    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((height, width, 3))
    smooth = gaussian_filter(noise, sigma=(4, 4, 0))
    smooth = (smooth - smooth.min()) / (smooth.max() - smooth.min())
    return np.rint(30 + 190 * smooth).astype(np.uint8)


ACCEPTANCE_LINES = []


class criterion:
    """Context manager that records one PASS/FAIL line per acceptance criterion.

    The body sets `.detail` and must raise (usually via assert) on failure.
    """

    def __init__(self, number, title):
        self.number, self.title, self.detail = number, title, ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        verdict = "PASS" if exc_type is None else "FAIL"
        line = f"criterion {self.number:2d} {verdict}: {self.title}"
        if self.detail:
            line += f" ({self.detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return False
