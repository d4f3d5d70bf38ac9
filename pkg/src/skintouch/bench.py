"""Latency and throughput harness for the frame pipeline (monotonic clock, warmup excluded)."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import cycle, islice
from time import perf_counter_ns
from typing import List, Optional, Sequence

import numpy as np

from .errors import EmptyCorpus
from .estimator import FusionHead, TouchForceEstimator
from .patch import FingerPatch
from .pipeline import STAGES, Pipeline, PipelineConfig
from .recording import HandFrame

WARMUP_FRAMES = 100


@dataclass(frozen=True)
class StageTiming:
    stage: str
    p50_us: float
    p95_us: float
    max_us: float
    frames_per_second: float
    samples: int

    def __post_init__(self):
        if not self.p50_us <= self.p95_us <= self.max_us:
            raise ValueError(f"{self.stage}: percentiles out of order")

    def as_line(self) -> str:
        return (f"stage={self.stage} p50_us={self.p50_us:.1f} p95_us={self.p95_us:.1f} "
                f"max_us={self.max_us:.1f} fps={self.frames_per_second:.1f} n={self.samples}")


def summarize(stage: str, durations_ns: Sequence[int], fps: Optional[float] = None) -> StageTiming:
    us = np.asarray(durations_ns, dtype=np.float64) / 1000.0
    if us.size == 0:
        return StageTiming(stage, 0.0, 0.0, 0.0, 0.0, 0)
    p50, p95 = np.percentile(us, (50, 95))
    top = float(us.max())
    if fps is None:
        mean = float(us.mean())
        fps = 1e6 / mean if mean > 0 else float("inf")
    return StageTiming(stage, float(p50), float(min(p95, top)), top, fps, int(us.size))


def bench_pipeline(frames: Sequence[HandFrame], estimator: TouchForceEstimator, iterations: int,
                   cfg: PipelineConfig = PipelineConfig(), warmup: int = WARMUP_FRAMES) -> List[StageTiming]:
    """Time gate, patch, estimate and FSM per frame, plus the end-to-end frame time.

    The corpus is cycled until warmup + iterations frames have run; frame
    indices are renumbered so the state machine sees a monotone stream.
    """
    frames = list(frames)
    if not frames or iterations <= 0:
        raise EmptyCorpus("nothing to benchmark")
    pipe = Pipeline(estimator, cfg)
    total = []
    for n, frame in enumerate(islice(cycle(frames), warmup + iterations)):
        if n == warmup:
            pipe.enable_timing()
        f = HandFrame(n, int(n * 1e6 / cfg.fsm.frame_rate_hz), frame.hands, frame.image)
        t0 = perf_counter_ns()
        pipe.process(f)
        if n >= warmup:
            total.append(perf_counter_ns() - t0)
    out = [summarize(s, pipe.timings[s]) for s in STAGES]
    out.append(summarize("end_to_end", total, fps=1e9 * len(total) / max(sum(total), 1)))
    return out


def bench_fingers(estimator: TouchForceEstimator, patch: FingerPatch, max_fingers: int = 5, iterations: int = 200,
                  parallel: bool = False, warmup: int = WARMUP_FRAMES) -> List[StageTiming]:
    """Per-frame estimate cost for 1..max_fingers patches, sequential or one thread per finger."""
    out = []
    pool = ThreadPoolExecutor(max_fingers) if parallel else None
    try:
        for k in range(1, max_fingers + 1):
            batch = [patch] * k
            times = []
            for n in range(warmup + iterations):
                t0 = perf_counter_ns()
                if pool is not None:
                    list(pool.map(estimator.estimate, batch))
                else:
                    for p in batch:
                        estimator.estimate(p)
                if n >= warmup:
                    times.append(perf_counter_ns() - t0)
            out.append(summarize(f"fingers_{k}{'_parallel' if parallel else ''}", times))
    finally:
        if pool is not None:
            pool.shutdown()
    return out


def timing_head(dim: int, seed: int = 0) -> FusionHead:
    """Any head costs the same to evaluate; a random one is fine for timing."""
    return FusionHead.initialize(dim, np.random.default_rng(seed))
