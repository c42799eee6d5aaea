"""Exception types raised across the pipeline.

Input-shaped problems (bad files, malformed annotations) derive from
InputError; algorithmic failures mid-pipeline derive from PipelineError.
The CLI maps the former to exit code 2 and the latter to exit code 3.
"""


class InputError(Exception):
    """Malformed or inconsistent input data."""


class PipelineError(Exception):
    """Processing failure after inputs were accepted."""


class FormatError(InputError):
    """File does not conform to its declared format."""


class SequenceGapError(InputError):
    """Frame directory has missing indices."""

    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__(f"missing frame indices: {self.missing}")


class AnnotationError(InputError):
    """Annotation data fails validation against its sequence."""


class SizeError(InputError):
    """Frame or region too small for the requested operation."""


class BoundaryError(PipelineError):
    """Sample support extends outside the frame."""


class InsufficientCorrespondenceError(PipelineError):
    """Too few or degenerate point correspondences for a transform fit."""


class SingularTransformError(PipelineError):
    """Transform is not invertible."""


class StitchingFailureError(PipelineError):
    """No feasible alignment path for a frame."""

    def __init__(self, frame_index, message=None):
        self.frame_index = frame_index
        super().__init__(message or f"no feasible alignment for frame {frame_index}")


class SignalQualityError(PipelineError):
    """Region trace has too many invalid samples to be usable."""


class TraceLengthError(InputError):
    """Trace too short for the requested operation."""


class SegmentError(InputError):
    """Video too short to produce any segment."""


class MetricError(InputError):
    """Score set lacks the samples the metric needs."""


class SynthSpecError(InputError):
    """Synthetic sequence specification is invalid."""
