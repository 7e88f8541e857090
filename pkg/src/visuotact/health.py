"""Sensor state-of-health analysis.

SOH condenses three image-quality ingredients into one 0-100% indicator:

- illumination uniformity: 1 - coefficient of variation of the row means of
  the no-contact reference;
- deformation visibility: mean of the difference channels between the
  reference and a standard probe contact, relative to the reference mean
  (the difference channels vanish away from the contact footprint, so the
  full-frame mean measures the probe response);
- structural integrity: fraction of reference pixels that stay within 20
  gray levels of the long-run (fresh-sensor) reference.

Each ingredient is normalized by its fresh-sensor baseline, clamped to
[0, 1], and averaged with configurable weights. A sensor is considered at
the end of its life once SOH first drops below the failure threshold
(80% by default).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import ConfigError, DimensionError, OrderingError
from .frames import RasterFrame

DAMAGE_THRESHOLD_GRAY = 20.0
DEFAULT_FAILURE_THRESHOLD = 80.0
EQUAL_WEIGHTS = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)


@dataclass(frozen=True)
class HealthMetrics:
    """Baseline-normalized quality ingredients, each in [0, 1]."""

    illumination_uniformity: float
    deformation_visibility: float
    structural_integrity: float

    def __post_init__(self):
        for name in ("illumination_uniformity", "deformation_visibility",
                     "structural_integrity"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise DimensionError(f"{name} must be in [0, 1], got {value}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.illumination_uniformity, self.deformation_visibility,
                self.structural_integrity)


@dataclass(frozen=True)
class SohSample:
    """State of health (percent) at one cycle count."""

    cycle: int
    soh: float

    def __post_init__(self):
        if not (0.0 <= self.soh <= 100.0):
            raise DimensionError(f"soh must be in [0, 100], got {self.soh}")


def _clamp01(value: float) -> float:
    return min(1.0, max(0.0, value))


def _normalize(raw: float, baseline: float) -> float:
    if baseline <= 0.0:
        # A zero baseline cannot register change; treat as unassessable (fresh).
        return 1.0
    return _clamp01(raw / baseline)


def frame_metrics(reference: RasterFrame, probe_contact: RasterFrame,
                  baseline: HealthMetrics | None = None,
                  long_run_reference: RasterFrame | None = None) -> HealthMetrics:
    """Quality ingredients for one (reference, probe contact) frame pair.

    ``long_run_reference`` is the fresh sensor's reference frame; without it
    structural integrity cannot be assessed and reports 1. When ``baseline``
    is given, every raw ingredient is divided by its baseline value and
    clamped to [0, 1].
    """
    if reference.size != probe_contact.size:
        raise DimensionError(
            f"probe frame size {probe_contact.size} does not match reference {reference.size}")
    if reference.channels != 1 or probe_contact.channels != 1:
        raise DimensionError("health metrics expect 1-channel frames")
    ref = reference.channel(0).astype(np.float64)
    probe = probe_contact.channel(0).astype(np.float64)

    row_means = ref.mean(axis=1)
    mean_level = float(row_means.mean())
    if mean_level > 0:
        uniformity = _clamp01(1.0 - float(row_means.std()) / mean_level)
    else:
        uniformity = 0.0

    response = np.abs(ref - probe)   # == dark + bright, which are disjoint
    visibility = _clamp01(float(response.mean()) / mean_level) if mean_level > 0 else 0.0

    if long_run_reference is not None:
        if long_run_reference.size != reference.size:
            raise DimensionError("long-run reference size does not match reference")
        drift = np.abs(ref - long_run_reference.channel(0).astype(np.float64))
        integrity = 1.0 - float(np.mean(drift > DAMAGE_THRESHOLD_GRAY))
    else:
        integrity = 1.0

    if baseline is not None:
        uniformity = _normalize(uniformity, baseline.illumination_uniformity)
        visibility = _normalize(visibility, baseline.deformation_visibility)
        integrity = _normalize(integrity, baseline.structural_integrity)
    return HealthMetrics(uniformity, visibility, integrity)


def compute_soh(metrics: HealthMetrics,
                weights: tuple[float, float, float] = EQUAL_WEIGHTS) -> float:
    """Weighted composite of baseline-normalized metrics, as a percentage."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (3,) or np.any(w < 0):
        raise ConfigError(f"weights must be 3 non-negative values, got {weights}")
    if abs(float(w.sum()) - 1.0) > 1e-9:
        raise ConfigError(f"weights must sum to 1, got sum {float(w.sum())}")
    value = 100.0 * float(w @ np.asarray(metrics.as_tuple()))
    return min(100.0, max(0.0, value))


def evaluate_stream(samples: Iterable[tuple[int, RasterFrame, RasterFrame]],
                    baseline_from_first: bool = True,
                    weights: tuple[float, float, float] = EQUAL_WEIGHTS,
                    ) -> Iterator[tuple[int, HealthMetrics, float]]:
    """Stream (cycle, metrics, soh) for ordered (cycle, reference, probe) samples.

    One pass, O(1) state beyond the baseline. Cycles must be strictly
    increasing. With ``baseline_from_first`` the first sample defines both
    the metric baselines and the long-run reference, so it reports exactly
    SOH = 100.
    """
    baseline: HealthMetrics | None = None
    long_run: RasterFrame | None = None
    previous_cycle: int | None = None
    for cycle, reference, probe in samples:
        if previous_cycle is not None and cycle <= previous_cycle:
            raise OrderingError(
                f"cycles must be strictly increasing: {cycle} after {previous_cycle}")
        previous_cycle = cycle
        if baseline_from_first and baseline is None:
            long_run = reference
            baseline = frame_metrics(reference, probe, None, long_run)
        metrics = frame_metrics(reference, probe, baseline, long_run)
        yield cycle, metrics, compute_soh(metrics, weights)


def lifespan_curve(samples: Iterable[tuple[int, RasterFrame, RasterFrame]],
                   baseline_from_first: bool = True,
                   threshold: float = DEFAULT_FAILURE_THRESHOLD,
                   weights: tuple[float, float, float] = EQUAL_WEIGHTS,
                   ) -> tuple[list[SohSample], int | None]:
    """SOH curve plus the first cycle where it drops below ``threshold``.

    Returns (curve, failure_cycle); failure_cycle is None when the curve
    never crosses the threshold.
    """
    curve: list[SohSample] = []
    failure_cycle: int | None = None
    for cycle, _metrics, soh in evaluate_stream(samples, baseline_from_first, weights):
        curve.append(SohSample(cycle, soh))
        if failure_cycle is None and soh < threshold:
            failure_cycle = cycle
    return curve, failure_cycle
