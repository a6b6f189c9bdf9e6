"""annolab: measure, simulate, and repair annotation errors in video
object-detection datasets."""

from .core import (AnnotationTrack, BoundingBox, Detection, DetectionSet,
                   FrameLabel, ParseError, ValidationError, parse_annotations,
                   parse_detections, write_annotations, write_detections)
from .correction import (CorrectionConfig, CorrectionDiagnostics, correct,
                         correct_pass, detrend, measure_displacements,
                         visible_segments)
from .imaging import (DegeneratePatchError, Displacement, FrameLoadError,
                      FrameSequence, GrayFrame, MatchInfeasibleError, Patch,
                      extract_patch, load_frame, patch_variance, read_pgm,
                      write_pgm, zncc_match, zncc_score)
from .metrics import (CalibrationResult, DiffStats, EvalReport, FrameOutcome,
                      UndefinedMetricError, calibrate_threshold,
                      calibrate_threshold_pooled, classify_frame,
                      compare_tracks, diff_stats, evaluate, evaluate_pooled,
                      fa_per_min, format_report_table, hit_rate, iou,
                      modified_tracking_accuracy, tracking_accuracy)
from .noise import (AdditionalConsistent, AdditionalRandom, CorruptedLabels,
                    InjectionLog, LogRecord, MissingConsistent, MissingRandom,
                    NoiseConfig, Shifted, SizeStats, apply_log,
                    inject_additional_consistent, inject_additional_random,
                    inject_combined, inject_missing_consistent,
                    inject_missing_random, inject_shifted, multibox_export,
                    parse_noise_config, size_stats)

__version__ = "0.1.0"
