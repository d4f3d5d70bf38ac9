"""Exception hierarchy shared by every pipeline stage."""


class SkinTouchError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateSkeleton(SkinTouchError, ValueError):
    pass


class BackendUnavailable(SkinTouchError, RuntimeError):
    pass


class DimensionMismatch(SkinTouchError, ValueError):
    pass


class ShapeMismatch(SkinTouchError, ValueError):
    pass


class EmptyBatch(SkinTouchError, ValueError):
    pass


class TooFewParticipants(SkinTouchError, ValueError):
    pass


class OutOfOrderFrame(SkinTouchError, ValueError):
    pass


class OffsetTooLarge(SkinTouchError, ValueError):
    pass


class EmptyStream(SkinTouchError, ValueError):
    pass


class NoEvents(SkinTouchError, ValueError):
    pass


class LengthMismatch(SkinTouchError, ValueError):
    pass


class CorruptManifest(SkinTouchError, ValueError):
    pass


class TruncatedFrames(SkinTouchError, ValueError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"frames.rgb24 truncated: expected {expected} bytes, found {actual}")
        self.expected = expected
        self.actual = actual


class DecodeError(SkinTouchError, ValueError):
    pass


class BindError(SkinTouchError, OSError):
    pass


class ConnectionClosed(SkinTouchError, ConnectionError):
    pass


class EmptyCorpus(SkinTouchError, ValueError):
    pass
