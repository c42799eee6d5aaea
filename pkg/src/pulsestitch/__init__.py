"""Motion-robust pulse-signal extraction and liveness scoring for face video."""

from .affine import AffineTransform, compose, fit_affine, warp_frame
from .config import PipelineConfig
from .errors import (
    AnnotationError,
    BoundaryError,
    FormatError,
    InputError,
    InsufficientCorrespondenceError,
    MetricError,
    PipelineError,
    SegmentError,
    SequenceGapError,
    SignalQualityError,
    SingularTransformError,
    SizeError,
    StitchingFailureError,
    SynthSpecError,
    TraceLengthError,
)
from .features import DetectorParams, Keypoint, compute_descriptor, detect_keypoints
from .harness import (
    SynthGroundTruth,
    SynthSpec,
    alignment_residual,
    generate_sequence,
    pulse_snr,
    synthetic_vessel_mask,
)
from .ingest import (
    AnnotationSet,
    Frame,
    FrameSequence,
    equalize_histogram,
    load_annotations,
    load_sequence,
    save_annotations,
    save_frame_dir,
    save_raw_planar,
)
from .matching import (
    MatchPair,
    MatchStats,
    fine_match,
    fit_match_stats,
    fused_distance,
    initial_match,
    match_keypoints,
    match_score,
    normalize_distances,
)
from .metrics import (
    ScoreSet,
    bpcer_at_apcer,
    compute_auc,
    compute_eer,
    compute_hter,
    majority_vote,
    spectral_liveness_score,
)
from .pipeline import (
    alignment_heatmap,
    extract_channel_traces,
    extract_frame_features,
    render_aligned,
    sequence_tensors,
    stack_tensors,
)
from .representation import (
    STRTensor,
    VesselWeightMap,
    apply_vascular_weights,
    assemble_str,
    build_str_tensors,
    default_vessel_weights,
    read_str_tensor,
    segment_starts,
    vessel_weights_from_mask,
    write_str_tensor,
)
from .signals import (
    RoiGrid,
    Trace,
    bandpass_filter,
    color_channels,
    convert_color,
    normalize_unit_range,
    partition_rois,
    resample_to_30fps,
    roi_mean_series,
)
from .stitching import (
    AlignmentPlan,
    FrameFeatures,
    FramePlan,
    HopResult,
    align_sequence_dp,
    align_sequence_landmarks,
    evaluate_hop,
    keypoint_hop_error,
    landmark_error,
    propagate_landmarks,
    select_template,
)

__version__ = "0.1.0"

__all__ = [
    "AffineTransform",
    "AlignmentPlan",
    "AnnotationError",
    "AnnotationSet",
    "BoundaryError",
    "DetectorParams",
    "FormatError",
    "Frame",
    "FrameFeatures",
    "FramePlan",
    "FrameSequence",
    "HopResult",
    "InputError",
    "InsufficientCorrespondenceError",
    "Keypoint",
    "MatchPair",
    "MatchStats",
    "MetricError",
    "PipelineConfig",
    "PipelineError",
    "RoiGrid",
    "STRTensor",
    "ScoreSet",
    "SegmentError",
    "SequenceGapError",
    "SignalQualityError",
    "SingularTransformError",
    "SizeError",
    "StitchingFailureError",
    "SynthGroundTruth",
    "SynthSpec",
    "SynthSpecError",
    "Trace",
    "TraceLengthError",
    "VesselWeightMap",
    "align_sequence_dp",
    "align_sequence_landmarks",
    "alignment_heatmap",
    "alignment_residual",
    "apply_vascular_weights",
    "assemble_str",
    "bandpass_filter",
    "bpcer_at_apcer",
    "build_str_tensors",
    "color_channels",
    "compose",
    "compute_auc",
    "compute_descriptor",
    "compute_eer",
    "compute_hter",
    "convert_color",
    "default_vessel_weights",
    "detect_keypoints",
    "equalize_histogram",
    "evaluate_hop",
    "extract_channel_traces",
    "extract_frame_features",
    "fine_match",
    "fit_affine",
    "fit_match_stats",
    "fused_distance",
    "generate_sequence",
    "initial_match",
    "keypoint_hop_error",
    "landmark_error",
    "load_annotations",
    "load_sequence",
    "majority_vote",
    "match_keypoints",
    "match_score",
    "normalize_distances",
    "normalize_unit_range",
    "partition_rois",
    "propagate_landmarks",
    "pulse_snr",
    "read_str_tensor",
    "render_aligned",
    "resample_to_30fps",
    "roi_mean_series",
    "save_annotations",
    "save_frame_dir",
    "save_raw_planar",
    "segment_starts",
    "select_template",
    "sequence_tensors",
    "spectral_liveness_score",
    "stack_tensors",
    "synthetic_vessel_mask",
    "vessel_weights_from_mask",
    "warp_frame",
    "write_str_tensor",
]
