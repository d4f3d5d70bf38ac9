"""
Synthetic touch scenes with exact ground truth.

A right index finger hovers over or presses on the left hand/forearm. The
visual touch cue is the finger's cast shadow, displaced from the fingertip by
clamp(k * height, 0, g_max) pixels along the light azimuth, which closes to
zero at contact, plus a radial skin dimple whose darkening grows linearly with
press force. Episodes follow the four touch types (tap, light press, hard
press, hover) and every corpus cell is location x touch type x lighting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from .keypoints import HandSkeleton
from .patch import ImageBuffer
from .recording import GroundTruth, HandFrame, Recording, RecordingManifest, save

FRAME_RATE_HZ = 30.0
DEFAULT_SIZE = (320, 240)
LOCATIONS = ("inner_forearm", "inner_palm", "outer_forearm", "back_of_hand")
TOUCH_KINDS = ("tap", "light_press", "hard_press", "hover")
LIGHTING_PROFILES = ("indoor", "outdoor")
LUX_RANGE = (12.0, 35000.0)

SHADOW_PX_PER_MM = 1.2
SHADOW_MAX_PX = 12.0
DIMPLE_PER_NEWTON = 0.06
FINGER_RADIUS_RATIO = 0.37   # fingertip radius / 2D DIP-tip length
FINGER_GAIN = 1.5            # the raised finger catches more light than the skin below
NOISE_SIGMA = 0.8

# receiving-hand template in palm lengths: (along wrist->middle MCP, lateral)
_RECEIVING_TEMPLATE = np.array([
    (0.0, 0.0),
    (0.15, -0.25), (0.35, -0.45), (0.55, -0.60), (0.72, -0.72),
    (0.95, -0.22), (1.40, -0.26), (1.65, -0.28), (1.87, -0.30),
    (1.00, 0.00), (1.48, 0.00), (1.76, 0.00), (2.00, 0.00),
    (0.95, 0.20), (1.38, 0.23), (1.63, 0.25), (1.85, 0.27),
    (0.85, 0.38), (1.18, 0.43), (1.38, 0.46), (1.56, 0.49),
])

# inputting hand: index extended (filled in per pose), other fingers curled
_INPUT_TEMPLATE = np.array([
    (0.0, 0.0),
    (0.15, -0.25), (0.35, -0.40), (0.50, -0.35), (0.55, -0.22),
    (1.00, 0.00), (np.nan, 0.0), (np.nan, 0.0), (np.nan, 0.0),
    (0.97, 0.20), (1.20, 0.22), (1.15, 0.26), (1.00, 0.27),
    (0.92, 0.38), (1.12, 0.42), (1.07, 0.45), (0.93, 0.45),
    (0.85, 0.54), (1.00, 0.58), (0.96, 0.60), (0.85, 0.60),
])
_INDEX_3D = (0.45, 0.72, 0.95)  # PIP, DIP, tip distance from the MCP along the finger


@dataclass(frozen=True)
class Lighting:
    azimuth: float    # radians, image-plane direction the shadow is cast toward
    elevation: float  # radians above the skin plane
    intensity: float  # lux
    ambient: float    # fraction of light reaching shadowed skin

    @property
    def gain(self) -> float:
        lo, hi = (math.log(v) for v in LUX_RANGE)
        t = (math.log(min(max(self.intensity, LUX_RANGE[0]), LUX_RANGE[1])) - lo) / (hi - lo)
        return 0.35 + 0.35 * t

    @property
    def lit(self) -> float:
        return self.ambient + (1.0 - self.ambient) * math.sin(self.elevation)


@dataclass(frozen=True)
class SynthParticipant:
    id: str
    skin_albedo: Tuple[float, float, float]
    hair_noise_amplitude: float
    hand_scale: float
    lighting: Tuple[Tuple[str, Lighting], ...]

    def light(self, profile: str) -> Lighting:
        return dict(self.lighting)[profile]


def make_participant(index: int, seed: int = 0) -> SynthParticipant:
    rng = np.random.default_rng([seed, 0x9A27, index])
    tone = rng.uniform(0.0, 1.0)
    light_skin = np.array([0.92, 0.76, 0.64])
    dark_skin = np.array([0.36, 0.23, 0.16])
    albedo = tuple(float(v) for v in (1 - tone) * light_skin + tone * dark_skin)

    def profile(lux_lo, lux_hi, elev_deg, amb):
        return Lighting(
            azimuth=math.radians(rng.uniform(-160.0, -20.0)),
            elevation=math.radians(rng.uniform(*elev_deg)),
            intensity=float(math.exp(rng.uniform(math.log(lux_lo), math.log(lux_hi)))),
            ambient=float(rng.uniform(*amb)),
        )

    return SynthParticipant(
        id=f"P{index:02d}",
        skin_albedo=albedo,
        hair_noise_amplitude=float(rng.uniform(0.0, 0.15)),
        hand_scale=float(rng.uniform(0.85, 1.15)),
        lighting=(("indoor", profile(12.0, 800.0, (45.0, 80.0), (0.20, 0.45))),
                  ("outdoor", profile(800.0, 35000.0, (30.0, 75.0), (0.15, 0.40)))),
    )


@dataclass(frozen=True)
class TouchEpisode:
    kind: str
    duration_frames: int   # contact frames, or total frames for a hover
    peak_force: float      # newtons
    min_hover_gap: float   # millimetres, hovers only

    def __post_init__(self):
        if self.kind not in TOUCH_KINDS:
            raise ValueError(f"unknown touch kind {self.kind!r}")


def sample_episode(kind: str, rng: np.random.Generator) -> TouchEpisode:
    if kind == "tap":
        return TouchEpisode(kind, int(rng.integers(3, 7)), float(rng.uniform(0.3, 1.5)), 0.0)
    if kind == "light_press":
        return TouchEpisode(kind, int(rng.integers(15, 31)), float(rng.uniform(0.3, 0.9)), 0.0)
    if kind == "hard_press":
        return TouchEpisode(kind, int(rng.integers(15, 31)), float(rng.uniform(1.2, 3.5)), 0.0)
    if kind == "hover":
        return TouchEpisode(kind, int(rng.integers(18, 27)), 0.0, float(rng.uniform(1.0, 5.0)))
    raise ValueError(f"unknown touch kind {kind!r}")


def half_sine(n: int, peak: float) -> np.ndarray:
    """Half-sine over n contact frames, scaled so the largest sample equals `peak`."""
    s = np.sin(np.pi * (np.arange(n) + 0.5) / n)
    return peak * s / s.max()


def _raised_cosine(start: float, end: float, n: int) -> np.ndarray:
    if n == 1:
        return np.array([end])
    t = np.arange(n) / (n - 1)
    return end + (start - end) * 0.5 * (1 + np.cos(np.pi * t))


def height_force_profile(ep: TouchEpisode, rng: np.random.Generator):
    """Per-frame (height_mm, force_n). Every non-contact frame stays at least 1 mm up."""
    if ep.kind == "hover":
        n = ep.duration_frames
        h0 = rng.uniform(12.0, 25.0)
        t = np.arange(n) / (n - 1)
        heights = ep.min_hover_gap + (h0 - ep.min_hover_gap) * (1 - np.sin(np.pi * t))
        return heights, np.zeros(n)
    n_pre, n_post = int(rng.integers(8, 12)), int(rng.integers(8, 12))
    pre = _raised_cosine(rng.uniform(12.0, 25.0), rng.uniform(1.0, 2.5), n_pre)
    post = _raised_cosine(rng.uniform(12.0, 25.0), rng.uniform(1.0, 2.5), n_post)[::-1]
    heights = np.concatenate([pre, np.zeros(ep.duration_frames), post])
    force = np.concatenate([np.zeros(n_pre), half_sine(ep.duration_frames, ep.peak_force), np.zeros(n_post)])
    return heights, force


def shadow_gap_px(height_mm: float, k: float = SHADOW_PX_PER_MM, g_max: float = SHADOW_MAX_PX) -> float:
    return float(min(max(k * height_mm, 0.0), g_max))


def _capsule_coverage(xs, ys, p0, p1, radius):
    """Anti-aliased (1 px ramp) coverage of a capsule."""
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    denom = dx * dx + dy * dy
    px, py = xs - p0[0], ys - p0[1]
    t = np.clip((px * dx + py * dy) / denom, 0.0, 1.0) if denom > 0 else 0.0
    dist = np.hypot(px - t * dx, py - t * dy)
    return np.clip(radius + 0.5 - dist, 0.0, 1.0)


def _shift(arr: np.ndarray, sx: float, sy: float) -> np.ndarray:
    """out(x, y) = arr(x - sx, y - sy), bilinear, zero outside."""
    ix, iy = int(math.floor(sx)), int(math.floor(sy))
    fx, fy = sx - ix, sy - iy
    h, w = arr.shape
    pad = max(abs(ix), abs(iy)) + 2
    big = np.zeros((h + 2 * pad, w + 2 * pad), dtype=arr.dtype)
    big[pad:pad + h, pad:pad + w] = arr

    def take(dx, dy):
        y0, x0 = pad - iy - dy, pad - ix - dx
        return big[y0:y0 + h, x0:x0 + w]

    return ((1 - fx) * (1 - fy) * take(0, 0) + fx * (1 - fy) * take(1, 0)
            + (1 - fx) * fy * take(0, 1) + fx * fy * take(1, 1))


@dataclass(eq=False)
class Scene:
    """Static geometry of one episode; per-frame rendering only varies height and force."""

    participant: SynthParticipant
    location: str
    lighting_profile: str
    width: int
    height: int
    receiving: HandSkeleton
    inputting: HandSkeleton
    finger_dir: Tuple[float, float]
    finger_radius: float
    texture_seed: int
    shadow_px_per_mm: float = SHADOW_PX_PER_MM
    shadow_max_px: float = SHADOW_MAX_PX
    _cache: Dict[str, object] = field(default_factory=dict, repr=False)

    @property
    def light(self) -> Lighting:
        return self.participant.light(self.lighting_profile)

    @property
    def tip(self) -> np.ndarray:
        return self.inputting.points[8, :2]

    @property
    def pad_center(self) -> np.ndarray:
        return self.tip - self.finger_radius * np.asarray(self.finger_dir)

    @property
    def skin_rgb(self) -> np.ndarray:
        tone = 1.06 if self.location.startswith("inner") else 0.97
        return np.clip(np.asarray(self.participant.skin_albedo) * tone, 0, 1)

    @cached_property
    def background(self) -> np.ndarray:
        """Environment plus the receiving arm/hand with hair texture, float32 (H, W, 3)."""
        light = self.light
        ys, xs = np.mgrid[0:self.height, 0:self.width].astype(np.float32)
        pts = self.receiving.points[:, :2]
        palm = float(np.hypot(*(pts[9] - pts[0])))
        axis = (pts[9] - pts[0]) / palm
        arm = _capsule_coverage(xs, ys, pts[0], pts[0] - 2.5 * palm * axis, 0.36 * palm)
        arm = np.maximum(arm, _capsule_coverage(xs, ys, pts[0] + 0.25 * palm * axis,
                                                pts[0] + 0.8 * palm * axis, 0.42 * palm))
        for base, tip, r in ((1, 4, 0.10), (5, 8, 0.085), (9, 12, 0.085), (13, 16, 0.085), (17, 20, 0.085)):
            arm = np.maximum(arm, _capsule_coverage(xs, ys, pts[base], pts[tip], r * palm))
        rng = np.random.default_rng(self.texture_seed)
        strands = gaussian_filter(rng.standard_normal((self.height, self.width)).astype(np.float32), (0.7, 3.0))
        strands /= strands.std() + 1e-12
        hair = np.clip((strands - 1.6) * 1.5, 0.0, 1.0)
        density = {"inner_palm": 0.1, "inner_forearm": 0.5, "outer_forearm": 1.0, "back_of_hand": 0.7}[self.location]
        skin_shade = 1.0 - self.participant.hair_noise_amplitude * density * hair
        scale = 255.0 * light.gain * light.lit
        skin = self.skin_rgb[None, None, :] * skin_shade[..., None] * scale
        env_rgb = np.array([0.30, 0.31, 0.34]) * (0.8 + 0.2 * ys / self.height)[..., None] * scale
        return (arm[..., None] * skin + (1 - arm[..., None]) * env_rgb).astype(np.float32)

    @cached_property
    def _hand_layer(self):
        """Bounding box, inputting-hand coverage and unit dimple profile inside it."""
        pts = self.inputting.points[:, :2]
        palm = float(np.hypot(*(pts[9] - pts[0])))
        r = self.finger_radius
        capsules = [(self.pad_center, pts[5], r)]
        for mcp, pip in ((9, 10), (13, 14), (17, 18)):
            capsules.append((pts[mcp], pts[pip], r * 1.05))
        capsules.append((pts[1], pts[3], 0.1 * palm))
        capsules.append((pts[3], pts[4], 0.08 * palm))
        capsules.append((pts[0] + 0.1 * (pts[5] - pts[0]), 0.5 * (pts[5] + pts[17]), 0.33 * palm))
        margin = self.shadow_max_px + 3
        lo = np.min([np.minimum(a, b) - rad for a, b, rad in capsules], axis=0) - margin
        hi = np.max([np.maximum(a, b) + rad for a, b, rad in capsules], axis=0) + margin
        x0, y0 = max(int(lo[0]), 0), max(int(lo[1]), 0)
        x1, y1 = min(int(hi[0]) + 1, self.width), min(int(hi[1]) + 1, self.height)
        ys, xs = np.mgrid[y0:y1, x0:x1].astype(np.float32)
        cover = np.zeros(xs.shape, dtype=np.float32)
        for a, b, rad in capsules:
            cover = np.maximum(cover, _capsule_coverage(xs, ys, a, b, rad))
        c = self.pad_center
        sigma = 1.5 * r
        dimple = np.exp(-((xs - c[0]) ** 2 + (ys - c[1]) ** 2) / (sigma * sigma)).astype(np.float32)
        return (y0, y1, x0, x1), cover, dimple

    def shadow_gap(self, height_mm: float) -> float:
        return shadow_gap_px(height_mm, self.shadow_px_per_mm, self.shadow_max_px)

    def render(self, height_mm: float, force_n: float, noise_seed: Optional[int] = None) -> ImageBuffer:
        return ImageBuffer(np.clip(np.rint(self.radiance(height_mm, force_n, noise_seed)), 0, 255).astype(np.uint8))

    def radiance(self, height_mm: float, force_n: float, noise_seed: Optional[int] = None) -> np.ndarray:
        """The float image before rounding and clamping to 8 bits."""
        light = self.light
        (y0, y1, x0, x1), cover, dimple = self._hand_layer
        img = self.background.copy()
        g = self.shadow_gap(height_mm)
        shadow = _shift(cover, g * math.cos(light.azimuth), g * math.sin(light.azimuth))
        shade = 1.0 - (1.0 - light.ambient / light.lit) * shadow
        if force_n > 0:
            shade = shade * (1.0 - DIMPLE_PER_NEWTON * force_n * dimple)
        region = img[y0:y1, x0:x1] * shade[..., None]
        finger_rgb = (self.skin_rgb * 255.0 * light.gain * light.lit * FINGER_GAIN).astype(np.float32)
        region = cover[..., None] * finger_rgb + (1.0 - cover[..., None]) * region
        img[y0:y1, x0:x1] = region
        if noise_seed is not None:
            rng = np.random.default_rng(noise_seed)
            img += rng.standard_normal(img.shape, dtype=np.float32) * NOISE_SIGMA
        return img


@dataclass(eq=False)
class SynthFrameRecord:
    frame: HandFrame
    gt_touch: int
    gt_force: float
    gt_height: float
    kind: str
    scene: Scene
    noise_seed: Optional[int] = None


def _angle_in(lo: float, hi: float, rng) -> float:
    return math.radians(rng.uniform(lo, hi))


def make_scene(participant: SynthParticipant, location: str, lighting: str, rng: np.random.Generator,
               width: int = DEFAULT_SIZE[0], height: int = DEFAULT_SIZE[1]) -> Scene:
    if location not in LOCATIONS:
        raise ValueError(f"unknown location {location!r}")
    palm = 175.0 * participant.hand_scale * width / DEFAULT_SIZE[0]
    touch = np.array([width / 2 + rng.uniform(-0.08, 0.08) * width, height / 2 + rng.uniform(-0.08, 0.08) * height])

    # receiving hand: axis roughly up-left, lateral side mirrored for the dorsal locations
    alpha = _angle_in(-150.0, -100.0, rng)
    axis = np.array([math.cos(alpha), math.sin(alpha)])
    lateral = np.array([-axis[1], axis[0]]) * (1.0 if location.startswith("inner") else -1.0)
    if location in ("inner_palm", "back_of_hand"):
        along, across = rng.uniform(0.48, 0.62), rng.uniform(-0.1, 0.1)
    else:
        along, across = rng.uniform(-0.85, -0.6), rng.uniform(-0.1, 0.1)
    wrist = touch - palm * (along * axis + across * lateral)
    recv = wrist + palm * (_RECEIVING_TEMPLATE[:, :1] * axis + _RECEIVING_TEMPLATE[:, 1:] * lateral)
    receiving = HandSkeleton("Left", np.column_stack([recv, np.zeros(21)]), 0.95)

    # index direction keeps the shadow within 100 degrees of the fingertip's heading
    az = math.degrees(participant.light(lighting).azimuth)
    beta = _angle_in(max(-165.0, az - 100.0), min(-15.0, az + 100.0), rng)
    u = np.array([math.cos(beta), math.sin(beta)])
    n = np.array([-u[1], u[0]])
    pitch = _angle_in(10.0, 35.0, rng)
    c = math.cos(pitch)
    local = _INPUT_TEMPLATE.copy()
    local[6:9, 0] = 1.0 + np.array(_INDEX_3D) * c
    in_wrist = touch - palm * local[8, 0] * u
    pts = in_wrist + palm * (local[:, :1] * u + local[:, 1:] * n)
    z = np.zeros(21)
    z[6:9] = np.array(_INDEX_3D) * math.sin(pitch)
    inputting = HandSkeleton("Right", np.column_stack([pts, z]), 0.95)
    dip_tip = float(np.hypot(*(pts[8] - pts[7])))
    return Scene(participant, location, lighting, width, height, receiving, inputting,
                 (float(u[0]), float(u[1])), FINGER_RADIUS_RATIO * dip_tip, int(rng.integers(2**31)))


def render_patch_region(record: SynthFrameRecord, participant: Optional[SynthParticipant] = None) -> ImageBuffer:
    """Render the camera image for a record: skin, finger, cast shadow and contact dimple."""
    scene = record.scene
    if participant is not None and participant is not scene.participant:
        scene = Scene(participant, scene.location, scene.lighting_profile, scene.width, scene.height,
                      scene.receiving, scene.inputting, scene.finger_dir, scene.finger_radius,
                      scene.texture_seed, scene.shadow_px_per_mm, scene.shadow_max_px)
    return scene.render(record.gt_height, record.gt_force, record.noise_seed)


def generate_episode(kind: str, participant: SynthParticipant, seed, location: Optional[str] = None,
                     lighting: Optional[str] = None, width: int = DEFAULT_SIZE[0],
                     height: int = DEFAULT_SIZE[1], render: bool = True) -> List[SynthFrameRecord]:
    rng = np.random.default_rng(seed)
    if location is None:
        location = LOCATIONS[int(rng.integers(len(LOCATIONS)))]
    if lighting is None:
        lighting = LIGHTING_PROFILES[int(rng.integers(len(LIGHTING_PROFILES)))]
    scene = make_scene(participant, location, lighting, rng, width, height)
    ep = sample_episode(kind, rng)
    heights, forces = height_force_profile(ep, rng)
    noise_base = int(rng.integers(2**31))
    hands = (scene.receiving, scene.inputting)
    records = []
    for i, (h, f) in enumerate(zip(heights, forces)):
        touching = int(h == 0.0)
        frame = HandFrame(i, int(round(i * 1e6 / FRAME_RATE_HZ)), hands)
        rec = SynthFrameRecord(frame, touching, float(f), float(h), kind, scene, noise_base + i)
        if render:
            frame.image = render_patch_region(rec)
        records.append(rec)
    return records


def corpus_cells():
    """The 32 cells of one participant: location x touch type x lighting."""
    return [(loc, kind, light) for loc in LOCATIONS for kind in TOUCH_KINDS for light in LIGHTING_PROFILES]


def episode_recording(records: List[SynthFrameRecord], name: str = "") -> Recording:
    scene = records[0].scene
    manifest = RecordingManifest(
        frame_rate_hz=FRAME_RATE_HZ, width=scene.width, height=scene.height, frame_count=len(records),
        participant=scene.participant.id, location=scene.location, touch_type=records[0].kind,
        lighting=scene.lighting_profile,
    )
    gt = [GroundTruth(r.frame.timestamp_us, r.gt_touch, r.gt_force) for r in records]
    return Recording(manifest, [r.frame for r in records], gt, name=name)


def generate_corpus(n_participants: int, episodes_per_cell: int = 1, seed: int = 0, out=None,
                    width: int = DEFAULT_SIZE[0], height: int = DEFAULT_SIZE[1],
                    gt_jitter_frames: int = 0) -> Iterator[Recording]:
    """Yield one recording per episode, participant-major; optionally write each under `out`.

    gt_jitter_frames > 0 emulates an unsynchronized ground-truth sensor by
    shifting each episode's ground truth by a random whole number of frames.
    """
    from .metrics import jitter_inject

    if n_participants < 2:
        raise ValueError("a corpus needs at least 2 participants")
    for p in range(n_participants):
        participant = make_participant(p, seed)
        for cell, (location, kind, lighting) in enumerate(corpus_cells()):
            for e in range(episodes_per_cell):
                records = generate_episode(kind, participant, [seed, p, cell, e], location, lighting,
                                           width, height)
                name = f"{participant.id}_{location}_{kind}_{lighting}_e{e}"
                rec = episode_recording(records, name)
                if gt_jitter_frames > 0:
                    touch, _ = jitter_inject([g.touch for g in rec.gt], gt_jitter_frames, seed=[seed, p, cell, e, 7])
                    force, _ = jitter_inject([g.force_n for g in rec.gt], gt_jitter_frames, seed=[seed, p, cell, e, 7])
                    rec.gt = [GroundTruth(g.timestamp_us, int(t), float(f)) for g, t, f in zip(rec.gt, touch, force)]
                if out is not None:
                    save(Path(out) / name, rec)
                yield rec
