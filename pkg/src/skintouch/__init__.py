"""On-skin touch detection and force estimation from egocentric RGB frames plus hand keypoints."""

from .errors import SkinTouchError
from .estimator import AnalyticBackend, FusionHead, OracleBackend, TouchEstimate, TouchForceEstimator
from .events import EventKind, FsmConfig, TouchEvent
from .keypoints import Finger, HandSkeleton, PolarContext
from .metrics import EvalConfig, EvalReport, PairedStreams, evaluate
from .patch import FingerPatch, ImageBuffer
from .pipeline import Pipeline, PipelineConfig, run_recording
from .recording import Recording, read_recording, write_recording

__version__ = "0.1.0"

__all__ = [
    "AnalyticBackend", "EvalConfig", "EvalReport", "EventKind", "Finger", "FingerPatch", "FsmConfig",
    "FusionHead", "HandSkeleton", "ImageBuffer", "OracleBackend", "PairedStreams", "Pipeline",
    "PipelineConfig", "PolarContext", "Recording", "SkinTouchError", "TouchEstimate", "TouchEvent",
    "TouchForceEstimator", "evaluate", "read_recording", "run_recording", "write_recording",
]
