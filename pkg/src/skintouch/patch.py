"""Finger-up, scale-normalized fingertip patches and their training augmentations."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .errors import DegenerateSkeleton
from .keypoints import FINGER_JOINTS, Finger, HandSkeleton, PolarContext, wrap_angle

PATCH_SIZE = 100
PATCH_CENTER = (PATCH_SIZE - 1) / 2.0  # 49.5, pixel-center convention
# DIP->tip segment length in patch pixels (adult ~2.2 cm at 100 px per 4 cm)
K_PX = 55.0

_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Row-major RGB24 image held as an (height, width, 3) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"expected (H, W, 3) pixels, got {px.shape}")
        if px.dtype != np.uint8:
            raise ValueError("pixels must be uint8")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def from_bytes(cls, width: int, height: int, data: bytes) -> "ImageBuffer":
        if len(data) != width * height * 3:
            raise ValueError(f"buffer holds {len(data)} bytes, expected {width * height * 3}")
        return cls(np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3).copy())

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True)
class PatchTransform:
    """Similarity map source -> patch: patch_offset = scale * Rot(rotation) @ (src - center)."""

    rotation: float
    scale: float
    center: Tuple[float, float]

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def _rot(self, angle: float) -> np.ndarray:
        c, s = math.cos(angle), math.sin(angle)
        return np.array([[c, -s], [s, c]])

    def to_patch(self, xy) -> np.ndarray:
        """Source coordinates -> patch pixel coordinates."""
        d = np.asarray(xy, dtype=np.float64) - np.asarray(self.center)
        return d @ (self.scale * self._rot(self.rotation)).T + PATCH_CENTER

    def to_source(self, uv) -> np.ndarray:
        d = (np.asarray(uv, dtype=np.float64) - PATCH_CENTER) / self.scale
        return d @ self._rot(-self.rotation).T + np.asarray(self.center)


@dataclass(frozen=True, eq=False)
class FingerPatch:
    pixels: np.ndarray
    finger: Finger
    polar: PolarContext
    transform: PatchTransform
    frame_index: int = 0

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.shape != (PATCH_SIZE, PATCH_SIZE, 3) or px.dtype != np.uint8:
            raise ValueError(f"patch must be {PATCH_SIZE}x{PATCH_SIZE}x3 uint8, got {px.shape} {px.dtype}")
        object.__setattr__(self, "pixels", px)


@dataclass(frozen=True)
class AugmentConfig:
    brightness_range: Tuple[float, float] = (0.2, 2.2)
    contrast_range: Tuple[float, float] = (0.8, 2.0)
    saturation_range: Tuple[float, float] = (0.5, 1.5)
    hue_range: Tuple[float, float] = (-0.1, 0.1)
    horizontal_flip_prob: float = 0.5
    seed: int = 0


def compute_transform(hand: HandSkeleton, finger: Finger, k_px: float = K_PX) -> PatchTransform:
    _, _, dip, tip = FINGER_JOINTS[Finger(finger)]
    dx, dy = hand.points[tip, :2] - hand.points[dip, :2]
    length = math.hypot(dx, dy)
    if length < 1e-6:
        raise DegenerateSkeleton("DIP and tip coincide in the image plane")
    # rotate the DIP->tip direction onto patch-up (0, -1)
    rotation = wrap_angle(-math.pi / 2 - math.atan2(dy, dx))
    return PatchTransform(rotation, k_px / length, (float(hand.points[tip, 0]), float(hand.points[tip, 1])))


_GRID_V, _GRID_U = np.mgrid[0:PATCH_SIZE, 0:PATCH_SIZE].astype(np.float64)
_GRID_U -= PATCH_CENTER
_GRID_V -= PATCH_CENTER


def sample_grid(t: PatchTransform) -> Tuple[np.ndarray, np.ndarray]:
    """Source (x, y) coordinates sampled by every patch pixel."""
    c, s = math.cos(t.rotation), math.sin(t.rotation)
    inv = 1.0 / t.scale
    # inverse rotation Rot(-rotation) applied to the patch offset
    xs = (c * _GRID_U + s * _GRID_V) * inv + t.center[0]
    ys = (-s * _GRID_U + c * _GRID_V) * inv + t.center[1]
    return xs, ys


def bilinear_sample(pixels: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear lookup at float (x, y); reads outside the image are black."""
    h, w = pixels.shape[:2]
    x_lo = int(math.floor(xs.min()))
    y_lo = int(math.floor(ys.min()))
    x_hi = int(math.floor(xs.max())) + 1
    y_hi = int(math.floor(ys.max())) + 1
    # copy just the covered window into a zero-padded buffer
    buf = np.zeros((y_hi - y_lo + 1, x_hi - x_lo + 1, pixels.shape[2]), dtype=np.float32)
    sx0, sx1 = max(x_lo, 0), min(x_hi + 1, w)
    sy0, sy1 = max(y_lo, 0), min(y_hi + 1, h)
    if sx0 < sx1 and sy0 < sy1:
        buf[sy0 - y_lo:sy1 - y_lo, sx0 - x_lo:sx1 - x_lo] = pixels[sy0:sy1, sx0:sx1]
    lx = xs - x_lo
    ly = ys - y_lo
    x0 = np.floor(lx).astype(np.intp)
    y0 = np.floor(ly).astype(np.intp)
    fx = (lx - x0).astype(np.float32)[..., None]
    fy = (ly - y0).astype(np.float32)[..., None]
    top = buf[y0, x0] * (1 - fx) + buf[y0, x0 + 1] * fx
    bottom = buf[y0 + 1, x0] * (1 - fx) + buf[y0 + 1, x0 + 1] * fx
    return top * (1 - fy) + bottom * fy


def extract_patch(img: ImageBuffer, t: PatchTransform, context: PolarContext,
                  finger: Finger, frame_index: int = 0) -> FingerPatch:
    xs, ys = sample_grid(t)
    values = bilinear_sample(img.pixels, xs, ys)
    pixels = np.clip(np.rint(values), 0, 255).astype(np.uint8)
    return FingerPatch(pixels, Finger(finger), context, t, frame_index)


def _rgb_to_hsv(rgb: np.ndarray):
    r, g, b = (np.ascontiguousarray(rgb[..., i]) for i in range(3))
    maxc = np.maximum(np.maximum(r, g), b)
    delta = maxc - np.minimum(np.minimum(r, g), b)
    safe = np.where(delta > 0, delta, 1)
    # first maximal channel wins ties, as in colorsys
    h = np.where(r == maxc, (g - b) / safe, np.where(g == maxc, 2.0 + (b - r) / safe, 4.0 + (r - g) / safe))
    h = np.where(delta > 0, h / 6.0, 0.0)
    h -= np.floor(h)
    s = delta / np.where(maxc > 0, maxc, 1)
    return h, s, maxc


def _hsv_to_rgb(h, s, v) -> np.ndarray:
    h6 = h * 6.0
    out = np.empty(h.shape + (3,), dtype=np.result_type(h, s, v))
    for i, phase in enumerate((5.0, 3.0, 1.0)):
        k = h6 + phase
        k -= 6.0 * (k >= 6.0)
        k -= 6.0 * (k >= 6.0)
        ramp = np.clip(np.minimum(k, 4.0 - k), 0.0, 1.0)
        out[..., i] = v * (1.0 - s * ramp)
    return out


def color_jitter(pixels: np.ndarray, brightness: float, contrast: float,
                 saturation: float, hue: float) -> np.ndarray:
    """Apply brightness, contrast, saturation and hue jitter in that order; returns uint8."""
    img = pixels.astype(np.float32)
    img = np.clip(img * brightness, 0, 255)
    mean = float((img @ _LUMA).mean())
    img = np.clip(img * contrast + (1 - contrast) * mean, 0, 255)
    gray = (img @ _LUMA)[..., None]
    img = np.clip(img * saturation + (1 - saturation) * gray, 0, 255)
    if hue != 0.0:
        h, s, v = _rgb_to_hsv(img / 255.0)
        img = np.clip(_hsv_to_rgb((h + hue) % 1.0, s, v) * 255.0, 0, 255)
    return np.rint(img).astype(np.uint8)


def sample_jitter(cfg: AugmentConfig, rng: np.random.Generator):
    """Draw (brightness, contrast, saturation, hue, flip) for one patch."""
    b = rng.uniform(*cfg.brightness_range)
    c = rng.uniform(*cfg.contrast_range)
    s = rng.uniform(*cfg.saturation_range)
    h = rng.uniform(*cfg.hue_range)
    flip = bool(rng.random() < cfg.horizontal_flip_prob)
    return b, c, s, h, flip


def augment(p: FingerPatch, cfg: AugmentConfig = AugmentConfig(),
            rng: Optional[np.random.Generator] = None) -> FingerPatch:
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    b, c, s, h, flip = sample_jitter(cfg, rng)
    pixels = color_jitter(p.pixels, b, c, s, h)
    if flip:
        pixels = pixels[:, ::-1].copy()
    return replace(p, pixels=pixels)


def hflip(p: FingerPatch) -> FingerPatch:
    return replace(p, pixels=p.pixels[:, ::-1].copy())


def luma(pixels: np.ndarray) -> np.ndarray:
    return pixels.astype(np.float32) @ _LUMA
