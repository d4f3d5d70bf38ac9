"""Per-finger touch state machine: filtered estimates in, Android-style touch events out."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from typing import List, Optional, Tuple

from .errors import OutOfOrderFrame
from .estimator import TouchEstimate
from .keypoints import Finger, FingerAngle, PolarContext


class Phase(Enum):
    IDLE = "idle"
    HOVER = "hover"
    PRESSED = "pressed"
    DRAGGING = "dragging"


class EventKind(IntEnum):
    DOWN = 0
    UP = 1
    MOVE = 2
    DRAG_START = 3
    LONG_CLICK = 4
    HOVER_ENTER = 5
    HOVER_EXIT = 6


@dataclass(frozen=True)
class FsmConfig:
    touch_threshold: float = 0.5
    long_click_ms: float = 500.0
    drag_slop: float = 0.15  # palm lengths
    frame_rate_hz: float = 30.0

    def __post_init__(self):
        if min(self.touch_threshold, self.long_click_ms, self.drag_slop, self.frame_rate_hz) <= 0:
            raise ValueError("FSM parameters must be positive")


@dataclass(frozen=True)
class FingerState:
    finger: Finger
    phase: Phase = Phase.IDLE
    down_frame: Optional[int] = None
    down_position: Optional[PolarContext] = None
    long_click_fired: bool = False
    last_frame: Optional[int] = None

    @property
    def pressed(self) -> bool:
        return self.phase in (Phase.PRESSED, Phase.DRAGGING)


@dataclass(frozen=True)
class TouchEvent:
    kind: EventKind
    finger: Finger
    frame_index: Optional[int]
    timestamp_us: int
    polar: PolarContext
    force: float
    pitch: float
    yaw: float


def reset(finger: Finger) -> FingerState:
    """Fresh Idle state. Resetting mid-press is an implicit cancel: no Up is emitted."""
    return FingerState(Finger(finger))


def polar_distance(a: PolarContext, b: PolarContext) -> float:
    ax, ay = a.R * math.cos(a.theta), a.R * math.sin(a.theta)
    bx, by = b.R * math.cos(b.theta), b.R * math.sin(b.theta)
    return math.hypot(ax - bx, ay - by)


def _check_order(state: FingerState, frame_index: int):
    if state.last_frame is not None and frame_index <= state.last_frame:
        raise OutOfOrderFrame(f"frame {frame_index} after {state.last_frame}")


def step(state: FingerState, est: TouchEstimate, ctx: PolarContext, angle: FingerAngle,
         cfg: FsmConfig = FsmConfig(), timestamp_us: Optional[int] = None
         ) -> Tuple[FingerState, List[TouchEvent]]:
    """Advance one frame for a finger that is active and has a filtered estimate."""
    frame = est.frame_index
    _check_order(state, frame)
    if timestamp_us is None:
        timestamp_us = int(round(frame * 1e6 / cfg.frame_rate_hz))

    def event(kind):
        return TouchEvent(kind, state.finger, frame, timestamp_us, ctx, est.force, angle.pitch, angle.yaw)

    events = []
    touching = est.touch_prob > cfg.touch_threshold
    if state.phase is Phase.IDLE:
        events.append(event(EventKind.HOVER_ENTER))
        state = replace(state, phase=Phase.HOVER)

    if not state.pressed:
        if touching:
            events.append(event(EventKind.DOWN))
            state = replace(state, phase=Phase.PRESSED, down_frame=frame, down_position=ctx,
                            long_click_fired=False)
    elif not touching:
        events.append(event(EventKind.UP))
        state = replace(state, phase=Phase.HOVER, down_frame=None, down_position=None,
                        long_click_fired=False)
    else:
        events.append(event(EventKind.MOVE))
        if (state.phase is Phase.PRESSED and not state.long_click_fired
                and polar_distance(ctx, state.down_position) > cfg.drag_slop):
            events.append(event(EventKind.DRAG_START))
            state = replace(state, phase=Phase.DRAGGING)
        elif state.phase is Phase.PRESSED and not state.long_click_fired:
            held_ms = (frame - state.down_frame) * 1000.0 / cfg.frame_rate_hz
            if held_ms >= cfg.long_click_ms:
                events.append(event(EventKind.LONG_CLICK))
                state = replace(state, long_click_fired=True)
    return replace(state, last_frame=frame), events


def step_inactive(state: FingerState, frame_index: int, cfg: FsmConfig = FsmConfig(),
                  timestamp_us: Optional[int] = None, ctx: Optional[PolarContext] = None,
                  angle: Optional[FingerAngle] = None) -> Tuple[FingerState, List[TouchEvent]]:
    """The finger stopped being active (or left the gate): close any press, then leave hover."""
    _check_order(state, frame_index)
    if state.phase is Phase.IDLE:
        return replace(state, last_frame=frame_index), []
    if timestamp_us is None:
        timestamp_us = int(round(frame_index * 1e6 / cfg.frame_rate_hz))
    ctx = ctx or state.down_position or PolarContext(0.0, 0.0)
    angle = angle or FingerAngle(0.0, 0.0)
    events = []
    if state.pressed:
        events.append(TouchEvent(EventKind.UP, state.finger, frame_index, timestamp_us, ctx, 0.0,
                                 angle.pitch, angle.yaw))
    events.append(TouchEvent(EventKind.HOVER_EXIT, state.finger, frame_index, timestamp_us, ctx, 0.0,
                             angle.pitch, angle.yaw))
    return FingerState(state.finger, last_frame=frame_index), events
