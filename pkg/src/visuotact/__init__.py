"""visuotact: a toolkit for vision-based tactile sensing pipelines.

Covers the full software stack around a camera-in-gel tactile gripper:
fisheye calibration and undistortion, gel-region rectification, contact
enhancement, visuo-tactile contrastive alignment, synchronized episode
recording, a synthetic sensor simulator, and state-of-health analysis.
"""

__version__ = "0.1.0"

from .align import (AlignmentConfig, AugmentSpec, EpochMetrics, JointVector,
                    MemoryBank, ProjectionHead, ToyFeatureExtractor, augment,
                    bank_push, dual_positive_grad, dual_positive_loss,
                    load_head, normalize, project_tactile, retrieval_accuracy,
                    save_head, train_alignment)
from .bench import BenchReport, bench_pipeline
from .camera import (CalibrationResult, CalibrationView, CameraIntrinsics,
                     ViewExtrinsics, calibrate, distort_point, load_intrinsics,
                     load_views, save_intrinsics, save_views, undistort_image,
                     undistort_point)
from .enhance import (EnhancementConfig, ReferenceFrame, apply_attenuation,
                      attenuation_weights, build_reference, diff_channels,
                      enhance)
from .episodes import (Episode, EpisodeMeta, EpisodeRecord, StreamSample,
                       pair_streams, read_episode, write_episode)
from .errors import VisuotactError
from .estimators import (ContactEnhancer, ContrastiveAligner, FisheyeCalibrator,
                         FisheyeUndistorter, RoiRectifier)
from .frames import (FloatPlane, PixelCoord, RasterFrame, bilinear_sample,
                     frames_equal, read_png, to_gray, write_png)
from .health import (HealthMetrics, SohSample, compute_soh, frame_metrics,
                     lifespan_curve)
from .rectify import (AffineTransform, PolygonMask, RoiSpec, estimate_affine,
                      load_roi_spec, rasterize_mask, rectify, save_roi_spec)
from .synth import (BoardSpec, GelScene, Indenter, ScratchEvent, WearModel,
                    degrade, render_contact, render_reference,
                    sample_checkerboard_poses, synth_checkerboard_views)
