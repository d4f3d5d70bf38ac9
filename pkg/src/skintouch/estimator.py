"""
Touch/force inference head.

A backend turns a finger patch into a fixed-length embedding. The fusion head
projects it to 126 dims, appends the (R, theta) polar context, applies ReLU and
reads out a touch logit and a normalized force from two linear heads.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Optional, Protocol, Sequence, Tuple

import numpy as np

from .errors import BackendUnavailable, DimensionMismatch
from .keypoints import Finger, PolarContext
from .patch import PATCH_CENTER, PATCH_SIZE, FingerPatch, luma

EMBED_DIM = 126
FRAME_DIM = EMBED_DIM + 2
FORCE_MAX_N = 3.5
TOUCH_THRESHOLD = 0.5
HEAD_MAGIC = b"ETHEAD01"


class Backend(Protocol):
    dim: int

    def embed(self, p: FingerPatch) -> np.ndarray: ...


def _ray_geometry(finger_radius: float, n_rays: int = 15, spread_deg: float = 105.0,
                  step: float = 0.5, n_steps: int = 48):
    """Sample points on rays fanning out of the fingertip pad circle, beyond its edge."""
    cx, cy = PATCH_CENTER, PATCH_CENTER + finger_radius
    phi = np.radians(np.linspace(-spread_deg, spread_deg, n_rays))
    radii = finger_radius + 1.0 + step * np.arange(n_steps)
    xs = cx + np.sin(phi)[:, None] * radii[None, :]
    ys = cy - np.cos(phi)[:, None] * radii[None, :]
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    return x0, y0, (xs - x0), (ys - y0), radii - finger_radius


def _quartiles(values: np.ndarray) -> np.ndarray:
    """Same as np.percentile(values, (25, 50, 75)) with linear interpolation, but faster on small arrays."""
    flat = np.sort(values, axis=None)
    pos = np.array([0.25, 0.5, 0.75]) * (flat.size - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, flat.size - 1)
    frac = pos - lo
    return flat[lo] * (1 - frac) + flat[hi] * frac


class AnalyticBackend:
    """Sixteen hand-crafted features on contrast-normalized luma.

    Luma is rescaled so the skin background maps to 0 and the finger body to 1,
    which cancels brightness/contrast gain. Features, in order:

    0  shadow gap: longest dark run (px) leaving the fingertip edge along any ray
    1  shadow mass: largest integrated darkness along a ray
    2  dark fraction over all ray samples
    3  mean level in the band just outside the fingertip edge
    4-5  median level in the near and far dimple rings
    6-8  mean level in rings of radius 0-10, 10-20, 20-30 px around the tip
    9-12 gradient energy per quadrant (TL, TR, BL, BR)
    13-15 level quartiles over the whole patch
    """

    dim = 16
    DARK_LEVEL = -0.5
    SHADOW_OFFSET = 0.3

    def __init__(self, finger_radius: float = 20.0):
        self.finger_radius = finger_radius
        self._x0, self._y0, fx, fy, self._outside = _ray_geometry(finger_radius)
        self._fx = fx.astype(np.float32)
        self._fy = fy.astype(np.float32)
        self._step = float(self._outside[1] - self._outside[0])
        v, u = np.mgrid[0:PATCH_SIZE, 0:PATCH_SIZE]
        rr = np.hypot(u - PATCH_CENTER, v - PATCH_CENTER)
        self._rings = [(rr >= lo) & (rr < lo + 10) for lo in (0, 10, 20)]
        self._near = self._outside < 5
        self._dimple_near = self._outside < 8
        self._dimple_far = (self._outside >= 8) & (self._outside < 16)

    def normalized_luma(self, pixels: np.ndarray) -> np.ndarray:
        lum = luma(pixels)
        bg = float(np.median(lum[:14]))
        fg = float(np.median(lum[74:95, 43:57]))
        denom = fg - bg
        if abs(denom) < 1e-3 * max(1.0, abs(bg)):
            denom = 1.0
        return np.clip((lum - bg) / denom, -5.0, 5.0)

    def _rays(self, level: np.ndarray) -> np.ndarray:
        x0, y0, fx, fy = self._x0, self._y0, self._fx, self._fy
        top = level[y0, x0] * (1 - fx) + level[y0, x0 + 1] * fx
        bottom = level[y0 + 1, x0] * (1 - fx) + level[y0 + 1, x0 + 1] * fx
        return top * (1 - fy) + bottom * fy

    def embed(self, p: FingerPatch) -> np.ndarray:
        level = self.normalized_luma(p.pixels)
        rays = self._rays(level)
        dark = rays < self.DARK_LEVEL
        # leading dark run per ray: index of the first bright sample
        first_bright = np.where(dark.all(axis=1), dark.shape[1], np.argmin(dark, axis=1))
        gap = float(first_bright.max()) * self._step
        mass = float(np.clip(-rays - self.SHADOW_OFFSET, 0.0, 1.5).sum(axis=1).max()) * self._step
        gx = np.diff(level, axis=1)[:-1]
        gy = np.diff(level, axis=0)[:, :-1]
        energy = gx * gx + gy * gy
        half = energy.shape[0] // 2
        quartiles = _quartiles(level)
        return np.array([
            gap,
            mass,
            dark.mean(),
            rays[:, self._near].mean(),
            np.median(rays[:, self._dimple_near]),
            np.median(rays[:, self._dimple_far]),
            *(level[m].mean() for m in self._rings),
            energy[:half, :half].mean(),
            energy[:half, half:].mean(),
            energy[half:, :half].mean(),
            energy[half:, half:].mean(),
            *quartiles,
        ], dtype=np.float64)


class OracleBackend:
    """Reads ground truth keyed by frame index. Only meaningful on synthetic recordings."""

    dim = 2

    def __init__(self, truth: Mapping[int, Tuple[int, float]]):
        self.truth = dict(truth)

    def embed(self, p: FingerPatch) -> np.ndarray:
        try:
            touch, force_n = self.truth[p.frame_index]
        except KeyError:
            raise BackendUnavailable(f"no ground truth for frame {p.frame_index}") from None
        return np.array([float(touch), float(force_n) / FORCE_MAX_N])


@dataclass(eq=False)
class FusionHead:
    W_embed: np.ndarray  # (D, 126)
    b_embed: np.ndarray  # (126,)
    W_touch: np.ndarray  # (128,)
    b_touch: float
    W_force: np.ndarray  # (128,)
    b_force: float

    def __post_init__(self):
        self.W_embed = np.asarray(self.W_embed, dtype=np.float64)
        self.b_embed = np.asarray(self.b_embed, dtype=np.float64).reshape(-1)
        self.W_touch = np.asarray(self.W_touch, dtype=np.float64).reshape(-1)
        self.W_force = np.asarray(self.W_force, dtype=np.float64).reshape(-1)
        self.b_touch = float(self.b_touch)
        self.b_force = float(self.b_force)
        if self.W_embed.ndim != 2 or self.W_embed.shape[1] != EMBED_DIM:
            raise DimensionMismatch(f"W_embed must be (D, {EMBED_DIM}), got {self.W_embed.shape}")
        if self.b_embed.shape != (EMBED_DIM,):
            raise DimensionMismatch("b_embed must have 126 entries")
        if self.W_touch.shape != (FRAME_DIM,) or self.W_force.shape != (FRAME_DIM,):
            raise DimensionMismatch(f"output heads must have {FRAME_DIM} weights")

    @property
    def dim(self) -> int:
        return self.W_embed.shape[0]

    @classmethod
    def initialize(cls, dim: int, rng: np.random.Generator) -> "FusionHead":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
        a = 1.0 / math.sqrt(dim)
        b = 1.0 / math.sqrt(FRAME_DIM)
        return cls(
            W_embed=rng.uniform(-a, a, (dim, EMBED_DIM)),
            b_embed=rng.uniform(-a, a, EMBED_DIM),
            W_touch=rng.uniform(-b, b, FRAME_DIM),
            b_touch=rng.uniform(-b, b),
            W_force=rng.uniform(-b, b, FRAME_DIM),
            b_force=rng.uniform(-b, b),
        )

    @classmethod
    def zeros(cls, dim: int) -> "FusionHead":
        return cls(np.zeros((dim, EMBED_DIM)), np.zeros(EMBED_DIM), np.zeros(FRAME_DIM), 0.0,
                   np.zeros(FRAME_DIM), 0.0)

    def copy(self) -> "FusionHead":
        return FusionHead(self.W_embed.copy(), self.b_embed.copy(), self.W_touch.copy(),
                          self.b_touch, self.W_force.copy(), self.b_force)

    def params(self) -> dict:
        return {
            "W_embed": self.W_embed, "b_embed": self.b_embed,
            "W_touch": self.W_touch, "b_touch": np.array([self.b_touch]),
            "W_force": self.W_force, "b_force": np.array([self.b_force]),
        }

    @classmethod
    def from_params(cls, params: Mapping[str, np.ndarray]) -> "FusionHead":
        return cls(params["W_embed"], params["b_embed"], params["W_touch"],
                   float(np.asarray(params["b_touch"]).reshape(-1)[0]), params["W_force"],
                   float(np.asarray(params["b_force"]).reshape(-1)[0]))

    def __eq__(self, other):
        if not isinstance(other, FusionHead):
            return NotImplemented
        a, b = self.params(), other.params()
        return all(np.array_equal(a[k], b[k]) for k in a)

    def forward(self, E: np.ndarray, ctx: np.ndarray):
        """Batched pass. E is (N, D), ctx is (N, 2) of (R, theta). Returns logits, forces, hidden."""
        E = np.atleast_2d(np.asarray(E, dtype=np.float64))
        if E.shape[1] != self.dim:
            raise DimensionMismatch(f"embedding has {E.shape[1]} dims, head expects {self.dim}")
        pre = np.concatenate([E @ self.W_embed + self.b_embed, np.atleast_2d(ctx)], axis=1)
        hidden = np.maximum(pre, 0.0)
        return hidden @ self.W_touch + self.b_touch, hidden @ self.W_force + self.b_force, pre

    def to_bytes(self) -> bytes:
        body = np.concatenate([
            self.W_embed.reshape(-1), self.b_embed, self.W_touch, [self.b_touch],
            self.W_force, [self.b_force],
        ]).astype("<f4")
        return HEAD_MAGIC + struct.pack("<I", self.dim) + body.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "FusionHead":
        if data[:8] != HEAD_MAGIC:
            raise ValueError("not a fusion head file (bad magic)")
        (dim,) = struct.unpack_from("<I", data, 8)
        expected = dim * EMBED_DIM + EMBED_DIM + 2 * (FRAME_DIM + 1)
        body = np.frombuffer(data, dtype="<f4", offset=12).astype(np.float64)
        if body.size != expected:
            raise ValueError(f"head file holds {body.size} floats, expected {expected}")
        parts = np.split(body, np.cumsum([dim * EMBED_DIM, EMBED_DIM, FRAME_DIM, 1, FRAME_DIM]))
        return cls(parts[0].reshape(dim, EMBED_DIM), parts[1], parts[2], parts[3][0], parts[4], parts[5][0])

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "FusionHead":
        return cls.from_bytes(Path(path).read_bytes())


def oracle_head() -> FusionHead:
    """Head that turns OracleBackend's (touch, force/3.5) into a +-10 logit and the force."""
    head = FusionHead.zeros(OracleBackend.dim)
    head.W_embed[0, 0] = 20.0
    head.W_embed[1, 1] = 1.0
    head.W_touch[0] = 1.0
    head.b_touch = -10.0
    head.W_force[1] = 1.0
    return head


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -z))


def fuse_and_predict(e: np.ndarray, ctx: PolarContext, head: FusionHead) -> Tuple[float, float]:
    e = np.asarray(e, dtype=np.float64).reshape(-1)
    if e.shape[0] != head.dim:
        raise DimensionMismatch(f"embedding has {e.shape[0]} dims, head expects {head.dim}")
    logits, forces, _ = head.forward(e[None, :], np.array([[ctx.R, ctx.theta]]))
    return float(logits[0]), float(forces[0])


@dataclass(frozen=True)
class TouchEstimate:
    touch_prob: float
    force: float  # newtons, clamped to [0, FORCE_MAX_N]
    finger: Finger
    frame_index: int
    filtered: bool = False

    @property
    def touching(self) -> bool:
        return self.touch_prob > TOUCH_THRESHOLD


def to_estimate(logit: float, force_raw: float, finger: Finger, frame_index: int) -> TouchEstimate:
    force = min(max(force_raw, 0.0), 1.0) * FORCE_MAX_N
    return TouchEstimate(float(sigmoid(logit)), force, Finger(finger), frame_index)


class TouchForceEstimator:
    def __init__(self, backend: Backend, head: FusionHead):
        if backend.dim != head.dim:
            raise DimensionMismatch(f"backend emits {backend.dim} dims, head expects {head.dim}")
        self.backend = backend
        self.head = head

    def estimate(self, p: FingerPatch) -> TouchEstimate:
        logit, force_raw = fuse_and_predict(self.backend.embed(p), p.polar, self.head)
        return to_estimate(logit, force_raw, p.finger, p.frame_index)


def median3_values(values: Sequence[float]) -> np.ndarray:
    """Centered three-tap median with replicate padding."""
    x = np.asarray(values, dtype=np.float64)
    if x.size < 3:
        return x.copy()
    padded = np.concatenate([x[:1], x, x[-1:]])
    return np.median(np.stack([padded[:-2], padded[1:-1], padded[2:]]), axis=0)


class Median3Filter:
    """Streaming per-finger median of three.

    push() returns the filtered estimate for the previous frame, so output lags
    input by exactly one frame. An optional payload rides along with each
    estimate and comes back out with it. flush() emits the final frame.
    """

    def __init__(self):
        self._buf = []

    def __len__(self):
        return len(self._buf)

    def _filtered(self, prev, cur, nxt):
        est, payload = cur
        tp = sorted((prev[0].touch_prob, est.touch_prob, nxt[0].touch_prob))[1]
        fc = sorted((prev[0].force, est.force, nxt[0].force))[1]
        return replace(est, touch_prob=tp, force=fc, filtered=True), payload

    def push(self, est: TouchEstimate, payload=None):
        self._buf.append((est, payload))
        if len(self._buf) == 1:
            return None
        if len(self._buf) == 2:
            first = self._buf[0]
            return self._filtered(first, first, self._buf[1])
        prev, cur, nxt = self._buf[-3:]
        del self._buf[0]
        return self._filtered(prev, cur, nxt)

    def flush(self):
        if not self._buf:
            return None
        last = self._buf[-1]
        prev = self._buf[-2] if len(self._buf) > 1 else last
        self._buf.clear()
        return self._filtered(prev, last, last)


def median3(estimates: Sequence[TouchEstimate]) -> list:
    """Filter a whole per-finger stream at once."""
    tp = median3_values([e.touch_prob for e in estimates])
    fc = median3_values([e.force for e in estimates])
    return [replace(e, touch_prob=float(a), force=float(b), filtered=True)
            for e, a, b in zip(estimates, tp, fc)]
