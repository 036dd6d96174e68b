"""Error taxonomy shared across the pipeline.

Every failure mode a harness might want to triage has its own class.
Parsers attach line numbers; evaluation errors attach identifiers.
"""


class GazeScreenError(Exception):
    """Base class for all pipeline errors."""


# --- ingest ---------------------------------------------------------------

class MalformedRow(GazeScreenError):
    def __init__(self, path, line_no, reason):
        self.path = path
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{path}:{line_no}: {reason}")


class NonMonotonicTimestamp(GazeScreenError):
    def __init__(self, path, line_no):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: wall timestamp not strictly increasing")


class EmptyLog(GazeScreenError):
    def __init__(self, path):
        self.path = path
        super().__init__(f"{path}: gaze log contains no samples")


class DegenerateBox(GazeScreenError):
    def __init__(self, path, line_no):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: box has non-positive width or height")


class FrameOutOfRange(GazeScreenError):
    def __init__(self, path, line_no, frame_index, n_frames):
        self.path = path
        self.line_no = line_no
        self.frame_index = frame_index
        super().__init__(
            f"{path}:{line_no}: frame {frame_index} outside [0, {n_frames})"
        )


class RateMismatch(GazeScreenError):
    def __init__(self, participant_id, video_id, fraction):
        self.participant_id = participant_id
        self.video_id = video_id
        self.fraction = fraction
        super().__init__(
            f"{participant_id}/{video_id}: only {fraction:.1%} of frames received "
            f"a valid sample (minimum 10%)"
        )


# --- features -------------------------------------------------------------

class InsufficientData(GazeScreenError):
    pass


class NoAoiInWindow(GazeScreenError):
    pass


class MissingVideo(GazeScreenError):
    def __init__(self, participant_id, video_id):
        self.participant_id = participant_id
        self.video_id = video_id
        super().__init__(f"participant {participant_id} lacks video {video_id}")


# --- learn ----------------------------------------------------------------

class DimensionMismatch(GazeScreenError):
    pass


class SingleClass(GazeScreenError):
    pass


class NonFiniteFeature(GazeScreenError):
    pass


class DivergenceDetected(GazeScreenError):
    pass


# --- eval -----------------------------------------------------------------

class TooFewPerClass(GazeScreenError):
    pass


class MissingFeatures(GazeScreenError):
    pass


class TooFewParticipants(GazeScreenError):
    pass


class DurationTooLong(GazeScreenError):
    pass


class AoiNeverInAnyWindow(GazeScreenError):
    pass


# --- synth / io -----------------------------------------------------------

class IoFailure(GazeScreenError):
    pass


class ConfigError(GazeScreenError):
    pass
