"""
Frame pipeline: hand selection and proximity gate, active fingers, patch
extraction, touch/force estimation, per-finger median filtering and the touch
state machine. Also builds training features from labeled recordings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from time import perf_counter_ns
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .errors import DegenerateSkeleton
from .estimator import FORCE_MAX_N, Median3Filter, TouchEstimate, TouchForceEstimator
from .events import FingerState, FsmConfig, TouchEvent, reset, step, step_inactive
from .keypoints import Finger, active_fingers, finger_angle, polar_context, proximity_gate, select_hands
from .patch import K_PX, AugmentConfig, compute_transform, extract_patch
from .recording import HandFrame, Recording
from .trainer import FeatureSet, LabeledSample, TrainerConfig

STAGES = ("gate", "patch", "estimate", "fsm")


@dataclass(frozen=True)
class PipelineConfig:
    gate_palm_lengths: float = 3.0
    k_px: float = K_PX
    min_confidence: float = 0.5
    receiving: str = "Left"
    fsm: FsmConfig = field(default_factory=FsmConfig)
    median_filter: bool = True


@dataclass
class FrameOutput:
    frame_index: int
    timestamp_us: int
    gated: bool
    active: frozenset
    estimates: Dict[Finger, TouchEstimate]   # unfiltered, this frame
    events: List[TouchEvent]


def finger_patches(frame: HandFrame, cfg: PipelineConfig = PipelineConfig()):
    """(receiving, inputting, active fingers) for a frame; empty set when the gate is closed."""
    receiving, inputting = select_hands(frame.hands, cfg.min_confidence, cfg.receiving)
    if receiving is None or inputting is None:
        return receiving, inputting, frozenset()
    try:
        if not proximity_gate(receiving, inputting, cfg.gate_palm_lengths):
            return receiving, inputting, frozenset()
        return receiving, inputting, active_fingers(inputting)
    except DegenerateSkeleton:
        return receiving, inputting, frozenset()


class Pipeline:
    """Stateful per-stream processor. Feed frames in order, then call finish()."""

    def __init__(self, estimator: TouchForceEstimator, cfg: PipelineConfig = PipelineConfig()):
        self.estimator = estimator
        self.cfg = cfg
        self.states: Dict[Finger, FingerState] = {f: reset(f) for f in Finger}
        self.filters: Dict[Finger, Median3Filter] = {f: Median3Filter() for f in Finger}
        self.filtered: List[TouchEstimate] = []
        self.timings: Optional[Dict[str, List[int]]] = None

    def enable_timing(self):
        """Record ns per frame for gate and fsm, per patch for patch and estimate."""
        self.timings = {s: [] for s in STAGES}

    def _tick(self, stage, t0):
        t1 = perf_counter_ns()
        if self.timings is not None:
            self.timings[stage].append(t1 - t0)
        return t1

    def _advance(self, est: TouchEstimate, payload) -> List[TouchEvent]:
        ctx, angle, ts = payload
        self.filtered.append(est)
        state, events = step(self.states[est.finger], est, ctx, angle, self.cfg.fsm, ts)
        self.states[est.finger] = state
        return events

    def _deactivate(self, finger: Finger, frame_index: int, ts: int) -> List[TouchEvent]:
        events = []
        tail = self.filters[finger].flush()
        if tail is not None:
            events += self._advance(*tail)
        if self.states[finger].phase.value != "idle":
            self.states[finger], ev = step_inactive(self.states[finger], frame_index, self.cfg.fsm, ts)
            events += ev
        return events

    def process(self, frame: HandFrame) -> FrameOutput:
        t = perf_counter_ns()
        receiving, inputting, active = finger_patches(frame, self.cfg)
        t = self._tick("gate", t)
        events: List[TouchEvent] = []
        estimates: Dict[Finger, TouchEstimate] = {}
        fsm_ns = 0
        for finger in sorted(active):
            t0 = perf_counter_ns()
            ctx = polar_context(receiving, inputting.tip(finger))
            patch = extract_patch(frame.image, compute_transform(inputting, finger, self.cfg.k_px), ctx,
                                  finger, frame.index)
            t1 = perf_counter_ns()
            est = self.estimator.estimate(patch)
            t2 = perf_counter_ns()
            estimates[finger] = est
            payload = (ctx, finger_angle(inputting, finger), frame.timestamp_us)
            if self.cfg.median_filter:
                out = self.filters[finger].push(est, payload)
                if out is not None:
                    events += self._advance(*out)
            else:
                events += self._advance(est, payload)
            fsm_ns += perf_counter_ns() - t2
            if self.timings is not None:
                self.timings["patch"].append(t1 - t0)
                self.timings["estimate"].append(t2 - t1)
        t0 = perf_counter_ns()
        for finger in Finger:
            if finger not in active:
                events += self._deactivate(finger, frame.index, frame.timestamp_us)
        if self.timings is not None:
            self.timings["fsm"].append(fsm_ns + perf_counter_ns() - t0)
        return FrameOutput(frame.index, frame.timestamp_us, bool(active), active, estimates, events)

    def finish(self) -> List[TouchEvent]:
        """Flush the median filters after the last frame. Open presses stay open."""
        events = []
        for finger in Finger:
            tail = self.filters[finger].flush()
            if tail is not None:
                events += self._advance(*tail)
        return events


@dataclass
class RunResult:
    pred_touch: np.ndarray
    pred_force: np.ndarray
    events: List[TouchEvent]
    outputs: List[FrameOutput]


def run_frames(frames: Sequence[HandFrame], estimator: TouchForceEstimator,
               cfg: PipelineConfig = PipelineConfig(), finger: Optional[Finger] = None) -> RunResult:
    """Run a stream and collapse filtered estimates into per-frame predictions.

    A frame is predicted touching if the chosen finger (any finger when None)
    is touching; its force is the largest force among touching fingers.
    """
    pipe = Pipeline(estimator, cfg)
    outputs = [pipe.process(f) for f in frames]
    events = [e for o in outputs for e in o.events] + pipe.finish()
    pos = {f.index: i for i, f in enumerate(frames)}
    touch = np.zeros(len(frames), dtype=np.int64)
    force = np.zeros(len(frames))
    for est in pipe.filtered:
        if finger is not None and est.finger != finger:
            continue
        i = pos[est.frame_index]
        if est.touching:
            touch[i] = 1
            force[i] = max(force[i], est.force)
    return RunResult(touch, force, events, outputs)


def run_recording(rec: Recording, estimator: TouchForceEstimator, cfg: PipelineConfig = PipelineConfig(),
                  finger: Optional[Finger] = None) -> RunResult:
    return run_frames(rec.frames, estimator, cfg, finger)


def recording_samples(rec: Recording, finger: Finger = Finger.INDEX, cfg: PipelineConfig = PipelineConfig(),
                      first_id: int = 0, episode: int = 0) -> List[LabeledSample]:
    """Labeled patches for one finger on every gated frame where it is active."""
    if rec.gt is None:
        raise ValueError(f"recording {rec.name!r} is unlabeled")
    samples = []
    for frame, gt in zip(rec.frames, rec.gt):
        receiving, inputting, active = finger_patches(frame, cfg)
        if finger not in active:
            continue
        ctx = polar_context(receiving, inputting.tip(finger))
        patch = extract_patch(frame.image, compute_transform(inputting, finger, cfg.k_px), ctx, finger, frame.index)
        samples.append(LabeledSample(patch, ctx, int(gt.touch), min(max(gt.force_n / FORCE_MAX_N, 0.0), 1.0),
                                     rec.manifest.participant, first_id + len(samples), episode))
    return samples


def collect_features(recordings: Iterable[Recording], backend, trainer_cfg: TrainerConfig = TrainerConfig(),
                     aug_cfg: AugmentConfig = AugmentConfig(), finger: Finger = Finger.INDEX,
                     cfg: PipelineConfig = PipelineConfig()) -> FeatureSet:
    """Embed a corpus one recording at a time so patches never pile up in memory."""
    parts = []
    next_id = 0
    for episode, rec in enumerate(recordings):
        samples = recording_samples(rec, finger, cfg, next_id, episode)
        next_id += len(samples)
        if samples:
            parts.append(FeatureSet.build(samples, backend, trainer_cfg, aug_cfg))
    if not parts:
        raise ValueError("no labeled samples in corpus")
    return FeatureSet.concat(parts)
