import numpy as np
import pytest

from skintouch.bench import StageTiming, bench_fingers, bench_pipeline, summarize, timing_head
from skintouch.errors import EmptyCorpus
from skintouch.estimator import AnalyticBackend, TouchForceEstimator
from skintouch.keypoints import polar_context
from skintouch.patch import compute_transform, extract_patch
from skintouch.pipeline import STAGES, PipelineConfig, finger_patches
from skintouch.synth import generate_episode, make_participant


@pytest.fixture(scope="module")
def frames():
    return [r.frame for r in generate_episode("tap", make_participant(0), [2, 2], width=160, height=120)]


@pytest.fixture(scope="module")
def estimator():
    backend = AnalyticBackend()
    return TouchForceEstimator(backend, timing_head(backend.dim))


def test_stage_timing_validation():
    StageTiming("x", 1.0, 2.0, 2.0, 10.0, 3)
    with pytest.raises(ValueError):
        StageTiming("x", 3.0, 2.0, 4.0, 10.0, 3)
    assert StageTiming("gate", 1.0, 2.0, 3.0, 4.0, 5).as_line() == (
        "stage=gate p50_us=1.0 p95_us=2.0 max_us=3.0 fps=4.0 n=5")


def test_summarize():
    t = summarize("s", [1000, 2000, 3000, 4000])
    assert t.p50_us == pytest.approx(2.5) and t.max_us == 4.0 and t.samples == 4
    assert t.p95_us == pytest.approx(np.percentile([1, 2, 3, 4], 95))
    assert t.frames_per_second == pytest.approx(1e6 / 2.5)
    assert summarize("s", []).samples == 0
    assert summarize("s", [5000], fps=7.0).frames_per_second == 7.0


def test_bench_pipeline_reports_every_stage(frames, estimator):
    out = bench_pipeline(frames, estimator, iterations=20, warmup=5)
    assert [t.stage for t in out] == list(STAGES) + ["end_to_end"]
    assert all(t.samples == 20 for t in out if t.stage in ("gate", "fsm", "end_to_end"))
    e2e = out[-1]
    assert e2e.frames_per_second > 0 and e2e.p50_us > 0


def test_bench_pipeline_empty(estimator, frames):
    with pytest.raises(EmptyCorpus):
        bench_pipeline([], estimator, 10)
    with pytest.raises(EmptyCorpus):
        bench_pipeline(frames, estimator, 0)


@pytest.mark.parametrize("parallel", [False, True])
def test_bench_fingers(frames, estimator, parallel):
    recv, inp, active = finger_patches(frames[0])
    finger = next(iter(active))
    patch = extract_patch(frames[0].image, compute_transform(inp, finger, PipelineConfig().k_px),
                          polar_context(recv, inp.tip(finger)), finger)
    out = bench_fingers(estimator, patch, max_fingers=3, iterations=10, parallel=parallel, warmup=2)
    suffix = "_parallel" if parallel else ""
    assert [t.stage for t in out] == [f"fingers_{k}{suffix}" for k in (1, 2, 3)]
    assert all(t.samples == 10 for t in out)
