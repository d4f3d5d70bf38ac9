import math
import re

import pytest
from hypothesis import given, strategies as st

from skintouch.errors import OutOfOrderFrame
from skintouch.estimator import TouchEstimate, median3
from skintouch.events import (
    EventKind, FingerState, FsmConfig, Phase, TouchEvent, polar_distance, reset, step, step_inactive,
)
from skintouch.keypoints import Finger, FingerAngle, PolarContext

ANGLE = FingerAngle(0.1, -0.2)
HOME = PolarContext(1.0, 0.0)
LETTER = {
    EventKind.HOVER_ENTER: "E", EventKind.DOWN: "D", EventKind.MOVE: "M", EventKind.DRAG_START: "S",
    EventKind.LONG_CLICK: "L", EventKind.UP: "U", EventKind.HOVER_EXIT: "X",
}
GRAMMAR = re.compile(r"(E(DM*S?M*L?M*U)*X?)*")


def est(frame, prob, force=0.0):
    return TouchEstimate(prob, force, Finger.INDEX, frame, filtered=True)


def drive(probs, positions=None, cfg=FsmConfig(), finger=Finger.INDEX):
    """Feed a touch-probability stream (None = finger inactive) through one FSM."""
    state = reset(finger)
    events = []
    for i, p in enumerate(probs):
        ctx = positions[i] if positions is not None else HOME
        if p is None:
            state, ev = step_inactive(state, i, cfg)
        else:
            state, ev = step(state, est(i, p), ctx, ANGLE, cfg)
        events += ev
    return state, events


def kinds(events, *which):
    return [(e.kind, e.frame_index) for e in events if not which or e.kind in which]


def test_down_up_at_crossings():
    _, ev = drive([0, 0, 1, 1, 1, 0])
    assert kinds(ev, EventKind.DOWN, EventKind.UP) == [(EventKind.DOWN, 2), (EventKind.UP, 5)]
    assert kinds(ev, EventKind.HOVER_ENTER) == [(EventKind.HOVER_ENTER, 0)]
    assert [f for k, f in kinds(ev, EventKind.MOVE)] == [3, 4]


def test_long_click_once_at_500ms():
    _, ev = drive([0] + [1] * 20 + [0])
    down = kinds(ev, EventKind.DOWN)[0][1]
    assert kinds(ev, EventKind.LONG_CLICK) == [(EventKind.LONG_CLICK, down + 15)]


def test_threshold_is_strict():
    _, ev = drive([0.5, 0.5, 0.51])
    assert kinds(ev, EventKind.DOWN) == [(EventKind.DOWN, 2)]


def reference_fsm(touching, positions, slop=0.15, long_frames=15):
    """Straight-line simulation of the press logic for one finger that stays active."""
    out = []
    pressed = dragging = fired = False
    down_at = down_pos = None
    for i, (t, pos) in enumerate(zip(touching, positions)):
        if i == 0:
            out.append(("E", i))
        if not pressed:
            if t:
                pressed, dragging, fired, down_at, down_pos = True, False, False, i, pos
                out.append(("D", i))
            continue
        if not t:
            pressed = False
            out.append(("U", i))
            continue
        out.append(("M", i))
        if dragging or fired:
            continue
        dx = pos[0] - down_pos[0]
        dy = pos[1] - down_pos[1]
        if math.hypot(dx, dy) > slop:
            dragging = True
            out.append(("S", i))
        elif i - down_at >= long_frames:
            fired = True
            out.append(("L", i))
    return out


def cartesian_to_polar(x, y):
    return PolarContext(math.hypot(x, y), math.atan2(y, x))


def test_drag_start_then_no_long_click():
    n = 30
    xy = [(1.0 + max(0, i - 3) * 0.02, 0.0) for i in range(n)]  # starts moving after the press
    touching = [0, 0] + [1] * (n - 3) + [0]
    positions = [cartesian_to_polar(*p) for p in xy]
    _, ev = drive(touching, positions)
    got = [(LETTER[e.kind], e.frame_index) for e in ev]
    assert got == reference_fsm(touching, xy)
    drag = kinds(ev, EventKind.DRAG_START)
    # displacement from the down position (frame 2, x=1.0) first exceeds 0.15 at 1.0 + 8 * 0.02 = 1.16
    assert drag == [(EventKind.DRAG_START, 11)]
    assert kinds(ev, EventKind.LONG_CLICK) == []


@given(st.lists(st.tuples(st.booleans(), st.floats(-0.1, 0.1), st.floats(-0.1, 0.1)), min_size=1, max_size=60))
def test_matches_reference_fsm(seq):
    touching = [int(t) for t, _, _ in seq]
    xy, x, y = [], 1.0, 0.0
    for _, dx, dy in seq:
        x, y = x + dx, y + dy
        xy.append((x, y))
    _, ev = drive(touching, [cartesian_to_polar(*p) for p in xy])
    assert [(LETTER[e.kind], e.frame_index) for e in ev] == reference_fsm(touching, xy)


def test_event_payload():
    state = reset(Finger.MIDDLE)
    state, ev = step(state, TouchEstimate(0.9, 1.7, Finger.MIDDLE, 4, True), PolarContext(0.8, 0.3), ANGLE,
                     timestamp_us=123)
    assert [e.kind for e in ev] == [EventKind.HOVER_ENTER, EventKind.DOWN]
    e = ev[1]
    assert e == TouchEvent(EventKind.DOWN, Finger.MIDDLE, 4, 123, PolarContext(0.8, 0.3), 1.7, 0.1, -0.2)
    assert state.phase is Phase.PRESSED and state.down_frame == 4
    _, ev = step(state, TouchEstimate(0.9, 1.7, Finger.MIDDLE, 5, True), PolarContext(0.8, 0.3), ANGLE)
    assert ev[0].timestamp_us == round(5 * 1e6 / 30)


def test_out_of_order():
    state, _ = step(reset(Finger.INDEX), est(5, 0.0), HOME, ANGLE)
    with pytest.raises(OutOfOrderFrame):
        step(state, est(5, 0.0), HOME, ANGLE)
    with pytest.raises(OutOfOrderFrame):
        step_inactive(state, 3)


def test_reset_examples():
    state, ev = drive([0, 0, 0])
    assert state.phase is Phase.HOVER and kinds(ev, EventKind.DOWN) == []
    pressed, _ = drive([0, 1, 1])
    assert pressed.pressed
    fresh = reset(pressed.finger)
    assert fresh == reset(Finger.INDEX) == reset(reset(Finger.INDEX).finger)
    assert fresh.phase is Phase.IDLE and fresh.down_frame is None and not fresh.long_click_fired
    _, ev = step(fresh, est(10, 0.0), HOME, ANGLE)
    assert kinds(ev) == [(EventKind.HOVER_ENTER, 10)]  # the cancelled press never gets an Up


def test_inactive_closes_press():
    state, ev = drive([0, 1, 1, None])
    assert kinds(ev)[-2:] == [(EventKind.UP, 3), (EventKind.HOVER_EXIT, 3)]
    assert state.phase is Phase.IDLE


def test_config_validation():
    with pytest.raises(ValueError):
        FsmConfig(drag_slop=0)


def test_polar_distance():
    assert polar_distance(PolarContext(1, 0), PolarContext(1, math.pi / 2)) == pytest.approx(math.sqrt(2))
    assert polar_distance(PolarContext(0, 1), PolarContext(0, -2)) == 0.0


# ---- properties ---------------------------------------------------------------

frames = st.lists(st.one_of(st.none(), st.floats(0, 1)), min_size=0, max_size=80)


def event_string(events):
    return "".join(LETTER[e.kind] for e in events)


@given(frames, st.integers(0, 2**16))
def test_events_form_regular_language(probs, seed):
    import random

    rnd = random.Random(seed)
    positions = [PolarContext(rnd.uniform(0, 2), rnd.uniform(-3, 3)) for _ in range(len(probs) + 1)]
    # a complete session ends with the finger leaving; anything cut short is a prefix of the language
    state, ev = drive(probs + [None], positions)
    assert GRAMMAR.fullmatch(event_string(ev))
    state, _ = drive(probs, positions)
    # invariant: down_frame is set exactly while pressed
    assert (state.down_frame is not None) == state.pressed


@given(frames)
def test_down_up_balance_when_ending_untouched(probs):
    _, ev = drive(probs + [0.0])
    assert sum(e.kind is EventKind.DOWN for e in ev) == sum(e.kind is EventKind.UP for e in ev)


@given(frames)
def test_long_click_at_most_once_per_press(probs):
    _, ev = drive(probs)
    for press in re.findall(r"D[^U]*", event_string(ev)):
        assert press.count("L") <= 1 and press.count("S") <= 1 and not ("L" in press and "S" in press)


@given(st.lists(st.integers(0, 1), min_size=3, max_size=60), st.data())
def test_median_upstream_debounces_single_frame_presses(base, data):
    # keep runs of length >= 3 only, then flip one isolated frame
    clean = []
    for b in base:
        clean += [b] * 3
    i = data.draw(st.integers(1, len(clean) - 2))
    # isolated: the stream is constant for two frames either side of the flip
    if len(set(clean[max(i - 2, 0):i + 3])) != 1:
        return
    flipped = clean.copy()
    flipped[i] = 1 - flipped[i]
    filt = [e.touch_prob for e in median3([est(j, float(p)) for j, p in enumerate(flipped)])]
    assert filt == [float(x) for x in clean]
    assert kinds(drive(filt)[1]) == kinds(drive([float(x) for x in clean])[1])


def test_no_event_for_one_frame_press():
    filt = [e.touch_prob for e in median3([est(j, p) for j, p in enumerate([0, 0, 1, 0, 0])])]
    _, ev = drive(filt)
    assert kinds(ev, EventKind.DOWN, EventKind.UP) == []
