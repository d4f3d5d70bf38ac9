"""
Recording container: one directory per capture.

    manifest.json    capture metadata (version 1)
    frames.rgb24     raw row-major RGB frames, concatenated
    keypoints.jsonl  one line per frame: timestamp_us + tracked hands
    gt.jsonl         optional ground truth: timestamp_us, touch, force_n
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CorruptManifest, LengthMismatch, TruncatedFrames
from .keypoints import HandSkeleton
from .patch import ImageBuffer

FORMAT_VERSION = 1


@dataclass(eq=False)
class HandFrame:
    index: int
    timestamp_us: int
    hands: Tuple[HandSkeleton, ...]
    image: Optional[ImageBuffer] = None


@dataclass(frozen=True)
class GroundTruth:
    timestamp_us: int
    touch: int
    force_n: float


@dataclass(frozen=True)
class RecordingManifest:
    frame_rate_hz: float
    width: int
    height: int
    frame_count: int
    participant: str = ""
    location: str = ""
    touch_type: str = ""
    lighting: str = ""
    version: int = FORMAT_VERSION

    @property
    def frame_bytes(self) -> int:
        return self.width * self.height * 3


@dataclass(eq=False)
class Recording:
    manifest: RecordingManifest
    frames: List[HandFrame]
    gt: Optional[List[GroundTruth]] = None
    name: str = ""

    @property
    def labeled(self) -> bool:
        return self.gt is not None

    def truth_by_frame(self) -> dict:
        if self.gt is None:
            return {}
        return {f.index: (g.touch, g.force_n) for f, g in zip(self.frames, self.gt)}


def _hand_to_json(h: HandSkeleton) -> dict:
    return {"handedness": h.handedness, "confidence": h.confidence, "points": h.points.tolist()}


def _hand_from_json(d: dict) -> HandSkeleton:
    return HandSkeleton(d["handedness"], np.array(d["points"], dtype=np.float64), float(d["confidence"]))


def write_recording(path, manifest: RecordingManifest, frames: Sequence[HandFrame],
                    gt: Optional[Sequence[GroundTruth]] = None) -> None:
    path = Path(path)
    if len(frames) != manifest.frame_count:
        raise LengthMismatch(f"manifest says {manifest.frame_count} frames, got {len(frames)}")
    if gt is not None and len(gt) != len(frames):
        raise LengthMismatch(f"{len(gt)} ground-truth rows for {len(frames)} frames")
    path.mkdir(parents=True, exist_ok=True)
    (path / "manifest.json").write_text(json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n",
                                        encoding="utf-8")
    with open(path / "frames.rgb24", "wb") as fh:
        for f in frames:
            if f.image is None or (f.image.width, f.image.height) != (manifest.width, manifest.height):
                raise LengthMismatch(f"frame {f.index} image does not match {manifest.width}x{manifest.height}")
            fh.write(f.image.tobytes())
    with open(path / "keypoints.jsonl", "w", encoding="utf-8") as fh:
        for f in frames:
            fh.write(json.dumps({"timestamp_us": f.timestamp_us,
                                 "hands": [_hand_to_json(h) for h in f.hands]}) + "\n")
    gt_path = path / "gt.jsonl"
    if gt is not None:
        with open(gt_path, "w", encoding="utf-8") as fh:
            for g in gt:
                fh.write(json.dumps({"timestamp_us": g.timestamp_us, "touch": g.touch,
                                     "force_n": g.force_n}) + "\n")
    elif gt_path.exists():
        gt_path.unlink()


def save(path, rec: Recording) -> None:
    write_recording(path, rec.manifest, rec.frames, rec.gt)


def read_manifest(path) -> RecordingManifest:
    path = Path(path)
    try:
        raw = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptManifest(f"{path}: unreadable manifest: {exc}") from exc
    if not isinstance(raw, dict) or raw.get("version") != FORMAT_VERSION:
        raise CorruptManifest(f"{path}: unsupported manifest version {raw.get('version') if isinstance(raw, dict) else raw!r}")
    try:
        m = RecordingManifest(**raw)
    except TypeError as exc:
        raise CorruptManifest(f"{path}: {exc}") from exc
    if m.width < 1 or m.height < 1 or m.frame_count < 0:
        raise CorruptManifest(f"{path}: invalid dimensions")
    return m


def read_jsonl(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def read_stream(path) -> List[GroundTruth]:
    """Read a gt.jsonl-style stream (also used for prediction streams)."""
    return [GroundTruth(int(r["timestamp_us"]), int(r["touch"]), float(r["force_n"])) for r in read_jsonl(path)]


def write_stream(path, rows: Sequence[GroundTruth]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in rows:
            fh.write(json.dumps({"timestamp_us": g.timestamp_us, "touch": g.touch, "force_n": g.force_n}) + "\n")


def read_recording(path, load_images: bool = True) -> Recording:
    path = Path(path)
    m = read_manifest(path)
    expected = m.frame_count * m.frame_bytes
    frames_path = path / "frames.rgb24"
    actual = frames_path.stat().st_size if frames_path.exists() else 0
    if actual != expected:
        if actual < expected:
            raise TruncatedFrames(expected, actual)
        raise CorruptManifest(f"{path}: frames.rgb24 has {actual} bytes, manifest implies {expected}")
    kp_rows = read_jsonl(path / "keypoints.jsonl")
    if len(kp_rows) != m.frame_count:
        raise CorruptManifest(f"{path}: {len(kp_rows)} keypoint rows for {m.frame_count} frames")
    data = np.fromfile(frames_path, dtype=np.uint8) if load_images else None
    frames = []
    for i, row in enumerate(kp_rows):
        img = None
        if data is not None:
            img = ImageBuffer(data[i * m.frame_bytes:(i + 1) * m.frame_bytes].reshape(m.height, m.width, 3))
        frames.append(HandFrame(i, int(row["timestamp_us"]),
                                tuple(_hand_from_json(h) for h in row["hands"]), img))
    gt = None
    if (path / "gt.jsonl").exists():
        gt = read_stream(path / "gt.jsonl")
        if len(gt) != m.frame_count:
            raise CorruptManifest(f"{path}: {len(gt)} ground-truth rows for {m.frame_count} frames")
    return Recording(m, frames, gt, name=path.name)


def iter_corpus(root) -> Iterator[Path]:
    """Recording directories under `root` (or `root` itself), in sorted order."""
    root = Path(root)
    if (root / "manifest.json").exists():
        yield root
        return
    for child in sorted(p for p in root.iterdir() if p.is_dir()):
        if (child / "manifest.json").exists():
            yield child
