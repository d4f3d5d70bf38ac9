"""Command-line entry point: synth, run, train, eval, serve, bench."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import SkinTouchError
from .estimator import AnalyticBackend, FusionHead, OracleBackend, TouchForceEstimator, oracle_head
from .metrics import EvalConfig, PairedStreams, evaluate
from .pipeline import collect_features, run_recording
from .recording import GroundTruth, iter_corpus, read_recording, read_stream, write_stream
from .trainer import METRICS_HEADER, TrainerConfig, cross_validate, train_head_on_features

log = logging.getLogger("skintouch")


def default_seed() -> int:
    return int(os.environ.get("ET_SEED", "0"))


def _estimator(rec, backend: str, head_path: Optional[str]) -> TouchForceEstimator:
    if backend == "oracle":
        if not rec.labeled:
            raise SkinTouchError("the oracle backend needs a labeled recording")
        return TouchForceEstimator(OracleBackend(rec.truth_by_frame()), oracle_head())
    be = AnalyticBackend()
    if head_path is None:
        raise SkinTouchError("the analytic backend needs --head (train one with `skintouch train`)")
    return TouchForceEstimator(be, FusionHead.load(head_path))


def _load_stream(path: str, default_name: str) -> List[GroundTruth]:
    p = Path(path)
    if p.is_dir():
        p = p / default_name
    return read_stream(p)


def cmd_synth(args) -> int:
    from .synth import generate_corpus

    n = 0
    for rec in generate_corpus(args.participants, args.episodes, args.seed, out=args.out,
                               width=args.width, height=args.height, gt_jitter_frames=args.jitter):
        n += 1
        log.info("wrote %s (%d frames)", rec.name, rec.manifest.frame_count)
    print(f"recordings={n} out={args.out}")
    return 0


def cmd_run(args) -> int:
    rec = read_recording(args.recording)
    result = run_recording(rec, _estimator(rec, args.backend, args.head))
    if args.pred:
        write_stream(args.pred, [GroundTruth(f.timestamp_us, int(t), float(fo))
                                 for f, t, fo in zip(rec.frames, result.pred_touch, result.pred_force)])
    if args.events:
        for e in result.events:
            print(f"frame={e.frame_index} t_us={e.timestamp_us} kind={e.kind.name} finger={e.finger.name} "
                  f"force={e.force:.3f} R={e.polar.R:.3f} theta={e.polar.theta:.3f}")
    print(f"frames={len(rec.frames)} touch_frames={int(result.pred_touch.sum())} events={len(result.events)}")
    if rec.labeled:
        gt = np.array([g.touch for g in rec.gt])
        print(f"frame_acc={float(np.mean(gt == result.pred_touch)):.6f}")
    return 0


def cmd_train(args) -> int:
    cfg = TrainerConfig(epochs=args.epochs, seed=args.seed)
    recordings = (read_recording(p) for p in iter_corpus(args.corpus))
    fs = collect_features(recordings, AnalyticBackend(), cfg)
    log.info("collected %d samples", len(fs))
    rows = [METRICS_HEADER]
    if args.lopo:
        folds = cross_validate(fs, cfg, on_epoch=rows.append)
        pred = np.concatenate([(f.touch_prob > 0.5).astype(int) for f in folds])
        s = PairedStreams(pred, np.concatenate([f.gt_touch for f in folds]),
                          np.concatenate([np.where(f.touch_prob > 0.5, f.force_n, 0.0) for f in folds]),
                          np.concatenate([f.gt_force_n for f in folds]))
        report = evaluate(s, EvalConfig(), offset_frames=0)
        print("\n".join(report.as_lines()))
    head = train_head_on_features(fs.augmented, fs.ctx, fs.touch, fs.force, cfg, on_epoch=rows.append)
    head.save(args.out)
    if args.metrics:
        Path(args.metrics).write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"head={args.out} samples={len(fs)}")
    return 0


def cmd_eval(args) -> int:
    pred = _load_stream(args.pred, "pred.jsonl")
    gt = _load_stream(args.gt, "gt.jsonl")
    s = PairedStreams([p.touch for p in pred], [g.touch for g in gt],
                      [p.force_n for p in pred], [g.force_n for g in gt])
    cfg = EvalConfig(dtw_window=args.dtw_window, global_offset_frames=args.offset_frames)
    report = evaluate(s, cfg)
    print(report.as_table())
    print("\n".join(report.as_lines()))
    return 0


def cmd_serve(args) -> int:
    from .wire import EventServer

    if args.source == "live":
        raise SkinTouchError("live capture is not supported; pass a recording directory")
    host, _, port = args.listen.rpartition(":")
    rec = read_recording(args.source)
    events = run_recording(rec, _estimator(rec, args.backend, args.head)).events
    with EventServer(host or "127.0.0.1", int(port), args.mode) as server:
        print(f"listening={server.address[0]}:{server.address[1]} mode={args.mode}", flush=True)
        if args.wait:
            server.wait_for_subscribers(args.wait, args.timeout)
        n = server.publish_all(events)
    print(f"published={n} dropped={server.dropped}")
    return 0


def cmd_bench(args) -> int:
    from .bench import bench_pipeline, timing_head
    from .synth import generate_episode, make_participant

    frames = []
    for i, kind in enumerate(("tap", "hard_press", "hover", "light_press")):
        frames += [r.frame for r in generate_episode(kind, make_participant(i % 2, args.seed), [args.seed, i])]
    backend = AnalyticBackend()
    head = FusionHead.load(args.head) if args.head else timing_head(backend.dim, args.seed)
    for t in bench_pipeline(frames, TouchForceEstimator(backend, head), args.frames):
        print(t.as_line())
    return 0


def build_parser() -> argparse.ArgumentParser:
    seed = default_seed()
    p = argparse.ArgumentParser(prog="skintouch", description="On-skin touch detection pipeline tools.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    s.add_argument("--participants", type=int, default=15)
    s.add_argument("--episodes", type=int, default=1, help="episodes per cell")
    s.add_argument("--seed", type=int, default=seed)
    s.add_argument("--out", required=True)
    s.add_argument("--width", type=int, default=320)
    s.add_argument("--height", type=int, default=240)
    s.add_argument("--jitter", type=int, default=0, help="max ground-truth desync in frames")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("run", help="run the pipeline over a recording")
    s.add_argument("recording")
    s.add_argument("--head")
    s.add_argument("--backend", choices=("analytic", "oracle"), default="analytic")
    s.add_argument("--pred", help="write per-frame predictions (gt.jsonl format)")
    s.add_argument("--events", action="store_true", help="print every event")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("train", help="train a fusion head on a labeled corpus")
    s.add_argument("corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--epochs", type=int, default=8)
    s.add_argument("--seed", type=int, default=seed)
    s.add_argument("--lopo", action="store_true", help="also report leave-one-participant-out metrics")
    s.add_argument("--metrics", help="write per-epoch losses as CSV")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="score a prediction stream against ground truth")
    s.add_argument("pred")
    s.add_argument("gt")
    s.add_argument("--dtw-window", type=int, default=4)
    s.add_argument("--offset-frames", type=int, default=1)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("serve", help="stream a recording's events to subscribers")
    s.add_argument("source", help="recording directory, or 'live'")
    s.add_argument("--listen", default="127.0.0.1:7777")
    s.add_argument("--mode", choices=("stream", "datagram"), default="stream")
    s.add_argument("--head")
    s.add_argument("--backend", choices=("analytic", "oracle"), default="analytic")
    s.add_argument("--wait", type=int, default=0, help="wait for this many subscribers first")
    s.add_argument("--timeout", type=float, default=10.0)
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("bench", help="time the pipeline stages")
    s.add_argument("--frames", type=int, default=1000)
    s.add_argument("--head")
    s.add_argument("--seed", type=int, default=seed)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (SkinTouchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
