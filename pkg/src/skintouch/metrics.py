"""
Touch and force metrics: frame-wise, exact-frame events, band-limited DTW, force MAE and binning.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyStream, LengthMismatch, NoEvents, OffsetTooLarge


@dataclass(frozen=True)
class EvalConfig:
    dtw_window: int = 4
    global_offset_frames: int = 1
    force_max: float = 3.5
    force_split: float = 1.0

    def __post_init__(self):
        if self.dtw_window < 0:
            raise ValueError("dtw_window must be >= 0")


@dataclass
class PairedStreams:
    pred_touch: np.ndarray
    gt_touch: np.ndarray
    pred_force: np.ndarray
    gt_force: np.ndarray
    frame_rate_hz: float = 30.0

    def __post_init__(self):
        self.pred_touch = np.asarray(self.pred_touch, dtype=np.int64).reshape(-1)
        self.gt_touch = np.asarray(self.gt_touch, dtype=np.int64).reshape(-1)
        n = self.gt_touch.size
        self.pred_force = np.zeros(n) if self.pred_force is None else np.asarray(self.pred_force, dtype=np.float64).reshape(-1)
        self.gt_force = np.zeros(n) if self.gt_force is None else np.asarray(self.gt_force, dtype=np.float64).reshape(-1)
        if not (self.pred_touch.size == n == self.pred_force.size == self.gt_force.size):
            raise LengthMismatch("paired streams must have equal lengths")
        for arr in (self.pred_touch, self.gt_touch):
            if not np.isin(arr, (0, 1)).all():
                raise ValueError("touch streams must be binary")

    def __len__(self):
        return self.gt_touch.size


@dataclass
class EvalReport:
    frame_acc: float
    tpr: Optional[float]
    fpr: Optional[float]
    event_acc: Optional[float]
    dtw_acc: float
    force_mae_pct: float
    force_mae_pct_1n: float
    force_bin_acc: float
    touch_frames: int
    non_touch_frames: int
    events: int

    def as_lines(self) -> list:
        """Machine-readable key=value lines; absent rates print as 'na'."""
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            out.append(f"{f.name}={'na' if v is None else (f'{v:.6f}' if isinstance(v, float) else v)}")
        return out

    def as_table(self) -> str:
        rows = [
            ("frame accuracy", self.frame_acc, "%"),
            ("true positive rate", self.tpr, "%"),
            ("false positive rate", self.fpr, "%"),
            ("event accuracy (exact frame)", self.event_acc, "%"),
            ("DTW-corrected accuracy", self.dtw_acc, "%"),
            ("force MAE (% of max)", self.force_mae_pct, ""),
            ("force MAE (% of 1 N)", self.force_mae_pct_1n, ""),
            ("force level accuracy", self.force_bin_acc, "%"),
        ]
        lines = []
        for name, v, unit in rows:
            if v is None:
                txt = "n/a"
            elif unit == "%":
                txt = f"{100 * v:6.2f} %"
            else:
                txt = f"{v:6.2f} %"
            lines.append(f"{name:<30} {txt}")
        lines.append(f"{'frames (touch / non-touch)':<30} {self.touch_frames} / {self.non_touch_frames}")
        lines.append(f"{'ground-truth events':<30} {self.events}")
        return "\n".join(lines)


def apply_offset(gt: Sequence, k: int) -> np.ndarray:
    """Shift by k frames (positive = later), replicating the edge value into vacated slots."""
    x = np.asarray(gt)
    n = x.size
    if abs(k) >= max(n, 1):
        raise OffsetTooLarge(f"offset {k} too large for {n} frames")
    src = np.clip(np.arange(n) - k, 0, n - 1)
    return x[src]


def frame_metrics(s: PairedStreams) -> Tuple[float, Optional[float], Optional[float]]:
    if len(s) == 0:
        raise EmptyStream("no frames to score")
    p, g = s.pred_touch, s.gt_touch
    tp = int(np.sum((p == 1) & (g == 1)))
    tn = int(np.sum((p == 0) & (g == 0)))
    fp = int(np.sum((p == 1) & (g == 0)))
    fn = int(np.sum((p == 0) & (g == 1)))
    acc = (tp + tn) / len(s)
    tpr = tp / (tp + fn) if tp + fn else None
    fpr = fp / (fp + tn) if fp + tn else None
    return acc, tpr, fpr


def edges(x: Sequence) -> np.ndarray:
    """Signed transitions: +1 at rising edges, -1 at falling edges, 0 elsewhere (index 0 is never an edge)."""
    x = np.asarray(x, dtype=np.int64)
    out = np.zeros_like(x)
    if x.size > 1:
        out[1:] = np.diff(x)
    return out


def event_counts(s: PairedStreams) -> Tuple[int, int]:
    """(correct, total) ground-truth edges matched exactly in frame and direction."""
    g = edges(s.gt_touch)
    p = edges(s.pred_touch)
    mask = g != 0
    return int(np.sum(p[mask] == g[mask])), int(mask.sum())


def event_accuracy(s: PairedStreams) -> float:
    if len(s) == 0:
        raise EmptyStream("no frames to score")
    correct, total = event_counts(s)
    if total == 0:
        raise NoEvents("ground truth has no touch-down or touch-up edges")
    return correct / total


def dtw_cost(a: Sequence, b: Sequence, window: int) -> float:
    """Minimum mismatch count over monotone alignments with |i - j| <= window."""
    a = np.asarray(a)
    b = np.asarray(b)
    n, m = a.size, b.size
    if n == 0 or m == 0:
        return 0.0 if n == m else float("inf")
    w = max(window, abs(n - m))
    inf = np.inf
    prev = np.full(m + 1, inf)
    prev[0] = 0.0
    for i in range(1, n + 1):
        cur = np.full(m + 1, inf)
        lo = max(1, i - w)
        hi = min(m, i + w)
        cost = (a[i - 1] != b[lo - 1:hi]).astype(np.float64)
        # diagonal and vertical moves come from the previous row
        base = np.minimum(prev[lo - 1:hi], prev[lo:hi + 1]) + cost
        # horizontal moves chain along the current row
        for j in range(lo, hi + 1):
            v = base[j - lo]
            left = cur[j - 1] + cost[j - lo]
            cur[j] = v if v <= left else left
        prev = cur
    return float(prev[m])


def dtw_corrected_accuracy(s: PairedStreams, window: int = 4) -> float:
    if window < 0:
        raise ValueError("window must be >= 0")
    if len(s) == 0:
        raise EmptyStream("no frames to score")
    cost = dtw_cost(s.pred_touch, s.gt_touch, window)
    return 1.0 - cost / len(s)


def force_class(force, split: float = 1.0) -> np.ndarray:
    """0 for the soft range [0, split), 1 for the hard range [split, max]."""
    return (np.asarray(force, dtype=np.float64) >= split).astype(np.int64)


def force_metrics(s: PairedStreams, cfg: EvalConfig = EvalConfig()) -> Tuple[float, float]:
    if len(s) == 0:
        raise EmptyStream("no frames to score")
    mae = float(np.mean(np.abs(s.pred_force - s.gt_force)))
    valid = s.gt_force >= 0
    bin_acc = float(np.mean(force_class(s.pred_force[valid], cfg.force_split)
                            == force_class(s.gt_force[valid], cfg.force_split)))
    return 100.0 * mae / cfg.force_max, bin_acc


def jitter_inject(gt: Sequence, max_frames: int = 4, seed: int = 0) -> Tuple[np.ndarray, int]:
    if max_frames < 0:
        raise ValueError("max_frames must be >= 0")
    shift = int(np.random.default_rng(seed).integers(-max_frames, max_frames + 1))
    return apply_offset(gt, shift), shift


def evaluate(s: PairedStreams, cfg: EvalConfig = EvalConfig(), offset_frames: Optional[int] = None) -> EvalReport:
    """Full metric battery. The ground truth is shifted by the configured global offset first."""
    k = cfg.global_offset_frames if offset_frames is None else offset_frames
    if k:
        s = PairedStreams(s.pred_touch, apply_offset(s.gt_touch, k), s.pred_force,
                          apply_offset(s.gt_force, k), s.frame_rate_hz)
    acc, tpr, fpr = frame_metrics(s)
    correct, total = event_counts(s)
    mae_pct, bin_acc = force_metrics(s, cfg)
    return EvalReport(
        frame_acc=acc, tpr=tpr, fpr=fpr,
        event_acc=correct / total if total else None,
        dtw_acc=dtw_corrected_accuracy(s, cfg.dtw_window),
        force_mae_pct=mae_pct,
        force_mae_pct_1n=100.0 * float(np.mean(np.abs(s.pred_force - s.gt_force))) / 1.0,
        force_bin_acc=bin_acc,
        touch_frames=int(s.gt_touch.sum()),
        non_touch_frames=int(len(s) - s.gt_touch.sum()),
        events=total,
    )
