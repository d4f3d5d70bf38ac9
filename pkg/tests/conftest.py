import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=300, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


import pytest


@pytest.fixture(scope="session")
def small_corpus():
    """Three participants, each rendering every third cell of the design (32 cells in all)."""
    from skintouch.synth import corpus_cells, episode_recording, generate_episode, make_participant

    recs = []
    for p in range(3):
        participant = make_participant(p, seed=11)
        for cell, (location, kind, lighting) in list(enumerate(corpus_cells()))[p::3]:
            records = generate_episode(kind, participant, [11, p, cell], location, lighting)
            recs.append(episode_recording(records, f"{participant.id}_{cell}"))
    return recs


@pytest.fixture(scope="session")
def small_features(small_corpus):
    from skintouch.estimator import AnalyticBackend
    from skintouch.pipeline import collect_features
    from skintouch.trainer import TrainerConfig

    return collect_features(small_corpus, AnalyticBackend(), TrainerConfig(seed=5))


class StudyRun:
    """One streaming pass over the full synthetic study corpus.

    Images are dropped after each recording, so only per-recording results and
    the embedded training features stay in memory.
    """

    def __init__(self):
        self.names = []
        self.participants = []
        self.gt_touch = []
        self.gt_force = []
        self.oracle_touch = []
        self.oracle_force = []
        self.oracle_seconds = 0.0
        self.generate_seconds = 0.0
        self.features = None


@pytest.fixture(scope="session")
def study():
    import time

    from skintouch.estimator import AnalyticBackend, OracleBackend, TouchForceEstimator, oracle_head
    from skintouch.pipeline import recording_samples, run_recording
    from skintouch.synth import generate_corpus
    from skintouch.trainer import FeatureSet, TrainerConfig

    run = StudyRun()
    backend, cfg = AnalyticBackend(), TrainerConfig()
    parts, next_id = [], 0
    corpus = generate_corpus(15, seed=0)
    for episode in range(15 * 32):
        t0 = time.perf_counter()
        rec = next(corpus)
        t1 = time.perf_counter()
        est = TouchForceEstimator(OracleBackend(rec.truth_by_frame()), oracle_head())
        result = run_recording(rec, est)
        t2 = time.perf_counter()
        run.generate_seconds += t1 - t0
        run.oracle_seconds += t2 - t1
        run.names.append(rec.name)
        run.participants.append(rec.manifest.participant)
        run.gt_touch.append([g.touch for g in rec.gt])
        run.gt_force.append([g.force_n for g in rec.gt])
        run.oracle_touch.append(result.pred_touch)
        run.oracle_force.append(result.pred_force)
        samples = recording_samples(rec, first_id=next_id, episode=episode)
        next_id += len(samples)
        parts.append(FeatureSet.build(samples, backend, cfg))
    run.features = FeatureSet.concat(parts)
    return run


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
