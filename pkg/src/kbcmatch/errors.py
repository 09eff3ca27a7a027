"""Exception hierarchy shared by all kbcmatch modules."""


class KbcMatchError(Exception):
    """Base class for every error raised by this package."""

    code = "error"


class ShapeError(KbcMatchError):
    """An input tensor has the wrong shape; the message names the offending axis."""

    code = "shape"


class ConfigError(KbcMatchError):
    """An invalid configuration value (group count, threshold, input size...)."""

    code = "config"


class NoValidKeypointsError(KbcMatchError):
    """A geometric operation was asked to run on an empty keypoint set."""

    code = "empty_keypoints"


class TensorFileError(KbcMatchError):
    """Base class for tensor-file format violations."""

    code = "tensor_file"


class BadMagicError(TensorFileError):
    code = "bad_magic"


class UnknownVersionError(TensorFileError):
    code = "unknown_version"


class UnknownDtypeError(TensorFileError):
    code = "unknown_dtype"


class TruncatedPayloadError(TensorFileError):
    code = "truncated_payload"


class AnnotationError(KbcMatchError):
    """Malformed annotation / prediction / report record."""

    code = "annotation"


class PipelineError(KbcMatchError):
    """Failure inside the inference pipeline; carries the stage that failed."""

    code = "pipeline"

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class TrainingDivergedError(KbcMatchError):
    """Toy training hit a non-finite loss; the partial loss trace is attached."""

    code = "training_diverged"

    def __init__(self, step: int, trace):
        super().__init__(f"loss became non-finite at step {step}")
        self.step = step
        self.trace = list(trace)
