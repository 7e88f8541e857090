"""Scikit-learn style estimators wrapping the pipeline stages.

Each stage of the tactile pipeline is fit/transform shaped, so these
wrappers follow the sklearn estimator contract (constructor stores
parameters verbatim, ``fit`` returns ``self``, fitted state lives in
trailing-underscore attributes, ``get_params``/``set_params`` work with
``sklearn.base.clone``). ``X`` is a list of RasterFrames for the image
stages, so the stages compose with ``sklearn.pipeline.Pipeline``:

    Pipeline([("undistort", FisheyeUndistorter(intrinsics)),
              ("rectify", RoiRectifier(spec)),
              ("enhance", ContactEnhancer(alpha=0.6).fit(no_contact_frames))])
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .align import (AlignmentConfig, build_components, project_tactile,
                    retrieval_accuracy, train_alignment)
from .camera import calibrate, undistort_image, undistortion_remap
from .enhance import EnhancementConfig, build_reference
from .enhance import enhance as enhance_frame
from .frames import to_gray
from .rectify import rectification_remap
from .rectify import rectify as rectify_frame


def _require_fitted(estimator, attribute: str):
    value = getattr(estimator, attribute, None)
    if value is None:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first")
    return value


class FisheyeCalibrator(BaseEstimator):
    """Fit fisheye intrinsics from checkerboard correspondence views.

    Parameters mirror :func:`visuotact.camera.calibrate`. After ``fit``:
    ``intrinsics_``, ``extrinsics_``, ``rms_reprojection_error_``,
    ``n_iterations_``.
    """

    def __init__(self, init=None, max_iterations=100, tolerance=1e-8, image_size=None):
        self.init = init
        self.max_iterations = max_iterations
        self.tolerance = tolerance
        self.image_size = image_size

    def fit(self, X, y=None):
        result = calibrate(list(X), init=self.init,
                                   max_iterations=self.max_iterations,
                                   tolerance=self.tolerance,
                                   image_size=self.image_size)
        self.intrinsics_ = result.intrinsics
        self.extrinsics_ = result.extrinsics
        self.rms_reprojection_error_ = result.rms_reprojection_error
        self.n_iterations_ = result.iterations
        return self

    def score(self, X=None, y=None):
        """Negated RMS reprojection error (higher is better)."""
        return -_require_fitted(self, "rms_reprojection_error_")


class FisheyeUndistorter(TransformerMixin, BaseEstimator):
    """Resample fisheye frames into their pinhole view via a cached remap."""

    def __init__(self, intrinsics=None, output_intrinsics=None):
        self.intrinsics = intrinsics
        self.output_intrinsics = output_intrinsics

    def fit(self, X=None, y=None):
        if self.intrinsics is None:
            raise NotFittedError("FisheyeUndistorter needs intrinsics")
        out = self.output_intrinsics if self.output_intrinsics is not None else self.intrinsics
        self.remap_ = undistortion_remap(self.intrinsics, out)
        return self

    def transform(self, X):
        if getattr(self, "remap_", None) is None:
            self.fit()
        out = self.output_intrinsics if self.output_intrinsics is not None else self.intrinsics
        return [undistort_image(frame, self.intrinsics, out) for frame in X]


class RoiRectifier(TransformerMixin, BaseEstimator):
    """Warp the masked gel region of each frame into its rectangular crop."""

    def __init__(self, spec=None):
        self.spec = spec

    def fit(self, X=None, y=None):
        if self.spec is None:
            raise NotFittedError("RoiRectifier needs a RoiSpec")
        self.remap_ = rectification_remap(self.spec)
        return self

    def transform(self, X):
        if self.spec is None:
            raise NotFittedError("RoiRectifier needs a RoiSpec")
        return [rectify_frame(frame, self.spec) for frame in X]


class ContactEnhancer(TransformerMixin, BaseEstimator):
    """Difference-channel contact enhancement against a fitted reference.

    ``fit`` takes no-contact frames and builds the attenuated floating-point
    reference; ``transform`` emits the 3-channel (dark, bright, reference)
    composites.
    """

    def __init__(self, alpha=0.6, gain_dark=1.0, gain_bright=1.0):
        self.alpha = alpha
        self.gain_dark = gain_dark
        self.gain_bright = gain_bright

    def fit(self, X, y=None):
        frames = [to_gray(frame) for frame in X]
        self.reference_ = build_reference(frames, self.alpha)
        return self

    def transform(self, X):
        reference = _require_fitted(self, "reference_")
        config = EnhancementConfig(self.alpha, self.gain_dark, self.gain_bright)
        return [enhance_frame(reference, to_gray(frame), config) for frame in X]


class ContrastiveAligner(BaseEstimator):
    """Visuo-tactile contrastive alignment with a memory bank of negatives.

    ``fit`` consumes time-ordered (visual frame, tactile frame, JointVector)
    triples; ``transform`` embeds such triples with the trained tactile
    head; ``score`` reports top-1 retrieval accuracy against the frozen
    visual embeddings.
    """

    def __init__(self, tau=0.07, batch_size=32, bank_capacity=1024,
                 learning_rate=0.5, epochs=10, seed=0, feature_dim=64,
                 embedding_dim=128, augment_negative_fraction=0.5,
                 train_visual_head=False, learnable_tau=False,
                 parallel_features=False):
        self.tau = tau
        self.batch_size = batch_size
        self.bank_capacity = bank_capacity
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.seed = seed
        self.feature_dim = feature_dim
        self.embedding_dim = embedding_dim
        self.augment_negative_fraction = augment_negative_fraction
        self.train_visual_head = train_visual_head
        self.learnable_tau = learnable_tau
        self.parallel_features = parallel_features

    def _config(self) -> _align.AlignmentConfig:
        return AlignmentConfig(
            tau=self.tau, batch_size=self.batch_size,
            bank_capacity=self.bank_capacity, learning_rate=self.learning_rate,
            epochs=self.epochs, seed=self.seed, feature_dim=self.feature_dim,
            embedding_dim=self.embedding_dim,
            augment_negative_fraction=self.augment_negative_fraction,
            train_visual_head=self.train_visual_head,
            learnable_tau=self.learnable_tau,
            parallel_features=self.parallel_features)

    def fit(self, X, y=None):
        config = self._config()
        self.head_, self.history_ = train_alignment(list(X), config)
        _f_v, f_t, _g_v, _ = build_components(config)
        self.tactile_extractor_ = f_t
        return self

    def transform(self, X):
        head = _require_fitted(self, "head_")
        extractor = _require_fitted(self, "tactile_extractor_")
        rows = [project_tactile(extractor.extract(tactile), joints, head)
                for _visual, tactile, joints in X]
        return np.stack(rows)

    def score(self, X, y=None):
        """Top-1 retrieval accuracy of tactile embeddings against the frozen
        visual path (assumes the default train_visual_head=False)."""
        _require_fitted(self, "head_")
        f_v, _f_t, g_v, _ = build_components(self._config())
        pairs = list(X)
        v_set = np.stack([g_v.apply(f_v.extract(visual)) for visual, _t, _q in pairs])
        return retrieval_accuracy(v_set, self.transform(pairs))
