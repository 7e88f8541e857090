"""Visuo-tactile contrastive alignment.

Aligns tactile embeddings with visual embeddings in a shared unit-norm
space. For each timestep i the tactile embedding t_i is pulled toward its
paired visual embedding v_i (primary positive) and the next-step visual
v_{i+1} (secondary positive, encouraging temporal coherence), and pushed
away from a fixed-size FIFO memory bank of negatives:

    L_i = -log [ (e^{v_i.t_i/tau} + e^{v_{i+1}.t_i/tau})
                 / (e^{v_i.t_i/tau} + e^{v_{i+1}.t_i/tau}
                    + sum_j e^{m_j.t_i/tau}) ]

with the mean taken over the batch. Negatives are augmented visual views
and stale tactile embeddings from earlier batches. Tactile features are
concatenated with the normalized 7-DOF joint vector before the projection
head, injecting proprioceptive context.

Deep backbones are out of scope here; a deterministic toy feature extractor
(patch means through a fixed seeded mixing matrix) stands in for the frozen
encoders, which keeps the whole training loop bit-reproducible for a seed.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (ConfigError, DegenerateInputError, DimensionError,
                     GeometryError, InsufficientDataError, NormalizationError)
from .frames import RasterFrame, to_gray
from .resample import scale_frame

UNIT_NORM_TOLERANCE = 1e-4
JOINT_COUNT = 7


def normalize(vector: np.ndarray) -> np.ndarray:
    """Scale a vector to unit L2 norm."""
    v = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise DegenerateInputError("cannot normalize a zero vector")
    return v / norm


def normalize_backward(raw: np.ndarray, grad_unit: np.ndarray) -> np.ndarray:
    """Chain a gradient w.r.t. the unit vector back through normalization.

    For t = z / ||z||:  dL/dz = (grad - t (t . grad)) / ||z||.
    """
    z = np.asarray(raw, dtype=np.float64)
    norm = float(np.linalg.norm(z))
    if norm == 0.0:
        raise DegenerateInputError("cannot backpropagate through a zero vector")
    t = z / norm
    g = np.asarray(grad_unit, dtype=np.float64)
    return (g - t * float(t @ g)) / norm


def _check_unit_rows(matrix: np.ndarray, what: str) -> None:
    norms = np.linalg.norm(matrix, axis=-1)
    worst = float(np.max(np.abs(norms - 1.0))) if norms.size else 0.0
    if worst > UNIT_NORM_TOLERANCE:
        raise NormalizationError(
            f"{what} must be unit-norm (max deviation {worst:.2e})")


@dataclass(frozen=True)
class JointVector:
    """7-DOF joint configuration, each value normalized to [-1, 1]."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) != JOINT_COUNT:
            raise DimensionError(f"joint vector must have {JOINT_COUNT} values, got {len(vals)}")
        for v in vals:
            if not (-1.0 <= v <= 1.0):
                raise DimensionError(f"joint value {v} outside [-1, 1]")
        object.__setattr__(self, "values", vals)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    @staticmethod
    def from_limits(raw, lower, upper) -> "JointVector":
        """Normalize raw joint readings per-joint into [-1, 1] by their limits."""
        raw = np.asarray(raw, dtype=np.float64)
        lower = np.asarray(lower, dtype=np.float64)
        upper = np.asarray(upper, dtype=np.float64)
        if raw.shape != (JOINT_COUNT,) or lower.shape != raw.shape or upper.shape != raw.shape:
            raise DimensionError("raw values and limits must all have 7 entries")
        if np.any(upper <= lower):
            raise ConfigError("each upper joint limit must exceed its lower limit")
        scaled = 2.0 * (raw - lower) / (upper - lower) - 1.0
        return JointVector(tuple(np.clip(scaled, -1.0, 1.0)))


@dataclass(frozen=True, eq=False)
class MemoryBank:
    """Fixed-capacity FIFO queue of unit-norm negative embeddings."""

    capacity: int
    entries: tuple = ()

    def __post_init__(self):
        if self.capacity < 1:
            raise ConfigError(f"bank capacity must be >= 1, got {self.capacity}")
        if len(self.entries) > self.capacity:
            raise ConfigError("bank holds more entries than its capacity")

    def __len__(self) -> int:
        return len(self.entries)

    def matrix(self) -> np.ndarray | None:
        """(n, D) matrix of entries in FIFO order, or None when empty."""
        if not self.entries:
            return None
        return np.stack(self.entries)


def bank_push(bank: MemoryBank, new) -> MemoryBank:
    """Append embeddings in order, evicting the oldest beyond capacity."""
    new = list(new)
    if not new:
        return bank
    stacked = np.stack([np.asarray(e, dtype=np.float64) for e in new])
    _check_unit_rows(stacked, "bank entries")
    merged = bank.entries + tuple(stacked[i] for i in range(stacked.shape[0]))
    if len(merged) > bank.capacity:
        merged = merged[len(merged) - bank.capacity:]
    return MemoryBank(bank.capacity, merged)


def _loss_terms(v: np.ndarray, t: np.ndarray, bank: MemoryBank, tau: float,
                secondary_mask: np.ndarray | None):
    """Shared forward pass. Returns per-sample loss plus softmax bookkeeping."""
    if tau <= 0:
        raise ConfigError(f"temperature must be > 0, got {tau}")
    v = np.asarray(v, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if v.ndim != 2 or t.ndim != 2 or v.shape[1] != t.shape[1]:
        raise DimensionError("embedding batches must be 2-D with a shared dimension")
    batch = t.shape[0]
    if v.shape[0] == batch + 1:
        has_next = True
    elif v.shape[0] == batch:
        has_next = False
    else:
        raise DimensionError(
            f"visual batch must hold B or B+1 embeddings, got {v.shape[0]} for B={batch}")
    _check_unit_rows(v, "visual embeddings")
    _check_unit_rows(t, "tactile embeddings")

    if secondary_mask is None:
        mask = np.full(batch, has_next)
    else:
        mask = np.asarray(secondary_mask, dtype=bool)
        if mask.shape != (batch,):
            raise DimensionError("secondary mask must have one flag per sample")
        if not has_next and mask.any():
            raise DimensionError("secondary positives require B+1 visual embeddings")

    s1 = np.sum(v[:batch] * t, axis=1) / tau
    if has_next:
        s2 = np.sum(v[1:batch + 1] * t, axis=1) / tau
    else:
        s2 = np.zeros(batch)
    s2 = np.where(mask, s2, -np.inf)

    bank_matrix = bank.matrix()
    if bank_matrix is not None:
        negs = (t @ bank_matrix.T) / tau                        # (B, K)
        m = np.maximum(np.maximum(s1, s2), negs.max(axis=1))
        neg_exp = np.exp(negs - m[:, np.newaxis])
        s_sum = neg_exp.sum(axis=1)
    else:
        negs = None
        neg_exp = None
        m = np.maximum(s1, s2)
        s_sum = np.zeros(batch)

    e1 = np.exp(s1 - m)
    e2 = np.where(mask, np.exp(s2 - m), 0.0)
    p = e1 + e2
    per_sample = np.log1p(s_sum / p)
    return per_sample, (v, t, batch, s1, s2, mask, bank_matrix, neg_exp, e1, e2, p, s_sum)


def dual_positive_loss(v, t, bank: MemoryBank, tau: float,
                       secondary_mask=None) -> tuple[float, np.ndarray]:
    """Dual-positive contrastive loss against the memory bank.

    ``v`` holds B+1 unit visual embeddings (one extra so the secondary
    positive v_{i+1} exists for every sample) and ``t`` holds B unit
    tactile embeddings. ``secondary_mask`` can disable the secondary
    positive per sample (trajectory tails); with a B-row ``v`` the
    secondary term is dropped everywhere.

    Returns (mean loss, per-sample losses). An empty bank gives exactly 0.
    """
    per_sample, _ = _loss_terms(v, t, bank, tau, secondary_mask)
    return float(per_sample.mean()), per_sample


def _loss_and_grad(v, t, bank: MemoryBank, tau: float, secondary_mask=None):
    """Loss plus analytic gradients of the mean loss w.r.t. t and v."""
    per_sample, state = _loss_terms(v, t, bank, tau, secondary_mask)
    v, t, batch, s1, s2, mask, bank_matrix, neg_exp, e1, e2, p, s_sum = state
    q = p + s_sum
    coeff = 1.0 / q - 1.0 / p                                   # <= 0
    d_s1 = e1 * coeff
    d_s2 = e2 * coeff
    scale = 1.0 / (batch * tau)

    grad_t = (d_s1[:, np.newaxis] * v[:batch]) * scale
    if v.shape[0] == batch + 1:
        grad_t += (d_s2[:, np.newaxis] * v[1:batch + 1]) * scale
    if bank_matrix is not None:
        d_negs = neg_exp / q[:, np.newaxis]
        grad_t += (d_negs @ bank_matrix) * scale

    grad_v = np.zeros_like(v)
    grad_v[:batch] += (d_s1[:, np.newaxis] * t) * scale
    if v.shape[0] == batch + 1:
        grad_v[1:batch + 1] += (d_s2[:, np.newaxis] * t) * scale

    # ds/dtau = -s/tau for every logit, so dL/dtau telescopes over them.
    s2_safe = np.where(mask, s2, 0.0)
    d_tau = -(np.sum(d_s1 * s1) + np.sum(d_s2 * s2_safe)) / (batch * tau)
    if bank_matrix is not None:
        negs = (t @ bank_matrix.T) / tau
        d_tau -= float(np.sum((neg_exp / q[:, np.newaxis]) * negs)) / (batch * tau)
    return float(per_sample.mean()), per_sample, grad_t, grad_v, float(d_tau)


def dual_positive_grad(v, t, bank: MemoryBank, tau: float,
                       secondary_mask=None) -> np.ndarray:
    """Analytic gradient of the mean dual-positive loss w.r.t. each t_i."""
    return _loss_and_grad(v, t, bank, tau, secondary_mask)[2]


# --------------------------------------------------------------------------
# Projection heads and toy features
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProjectionHead:
    """Affine map (d_in -> d_out) followed by normalization."""

    weight: np.ndarray   # (d_in, d_out)
    bias: np.ndarray     # (d_out,)

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[1],):
            raise DimensionError(
                f"weight must be (d_in, d_out) with matching bias, got {w.shape} / {b.shape}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise DimensionError("head parameters must be finite")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def d_in(self) -> int:
        return self.weight.shape[0]

    @property
    def d_out(self) -> int:
        return self.weight.shape[1]

    def raw(self, inputs: np.ndarray) -> np.ndarray:
        return np.asarray(inputs, dtype=np.float64) @ self.weight + self.bias

    def apply(self, inputs: np.ndarray) -> np.ndarray:
        """Project and normalize one input vector."""
        return normalize(self.raw(inputs))

    @staticmethod
    def random(d_in: int, d_out: int, seed: int) -> "ProjectionHead":
        rng = np.random.default_rng(seed)
        return ProjectionHead(rng.normal(0.0, 1.0 / math.sqrt(d_in), (d_in, d_out)),
                              np.zeros(d_out))


def project_tactile(features: np.ndarray, q: JointVector,
                    head: ProjectionHead) -> np.ndarray:
    """Embed tactile features with proprioceptive context.

    Concatenates the feature vector with the normalized 7-DOF joint vector
    (so the head input dimension is feature_dim + 7) and applies the head.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 1:
        raise DimensionError("features must be a 1-D vector")
    if head.d_in != feats.size + JOINT_COUNT:
        raise DimensionError(
            f"head expects d_in={head.d_in} but features+joints give {feats.size + JOINT_COUNT}")
    return head.apply(np.concatenate([feats, q.as_array()]))


@dataclass(frozen=True, eq=False)
class ToyFeatureExtractor:
    """Deterministic stand-in for a frozen deep encoder.

    Patch means over a fixed grid, scaled to [0, 1] and centered per frame
    (the common brightness mode carries no identity and would otherwise
    collapse the embedding space), pushed through a fixed seeded random
    mixing matrix. Identical output for identical (grid, seed, frame).
    """

    grid: tuple[int, int] = (8, 8)
    seed: int = 0
    out_dim: int = 64

    def __post_init__(self):
        rows, cols = self.grid
        if rows < 1 or cols < 1 or self.out_dim < 1:
            raise ConfigError("grid and output dimension must be positive")
        rng = np.random.default_rng(self.seed)
        mixing = rng.normal(0.0, 1.0 / math.sqrt(rows * cols), (rows * cols, self.out_dim))
        mixing.flags.writeable = False
        object.__setattr__(self, "_mixing", mixing)

    def extract(self, frame: RasterFrame) -> np.ndarray:
        rows, cols = self.grid
        gray = to_gray(frame).channel(0).astype(np.float64) / 255.0
        if gray.shape[0] < rows or gray.shape[1] < cols:
            raise DimensionError(
                f"frame {gray.shape} smaller than the {rows}x{cols} patch grid")
        means = np.empty(rows * cols)
        row_blocks = np.array_split(gray, rows, axis=0)
        for r, block in enumerate(row_blocks):
            for c, patch in enumerate(np.array_split(block, cols, axis=1)):
                means[r * cols + c] = patch.mean()
        means -= means.mean()
        return means @ self._mixing


# --------------------------------------------------------------------------
# Augmentation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AugmentSpec:
    """Deterministic view variant: optional scale, crop size, and flips.

    The crop location is drawn uniformly inside the (scaled) bounds from the
    seed passed to :func:`augment`.
    """

    scale: float | None = None
    crop: tuple[int, int] | None = None    # (width, height)
    hflip: bool = False
    vflip: bool = False


def augment(frame: RasterFrame, spec: AugmentSpec, seed: int = 0) -> RasterFrame:
    """Apply scale -> crop -> flips; deterministic for (spec, seed)."""
    out = frame
    if spec.scale is not None:
        out = scale_frame(out, spec.scale)
    if spec.crop is not None:
        crop_w, crop_h = int(spec.crop[0]), int(spec.crop[1])
        if crop_w < 1 or crop_h < 1 or crop_w > out.width or crop_h > out.height:
            raise GeometryError(
                f"crop {crop_w}x{crop_h} exceeds bounds {out.width}x{out.height}")
        rng = np.random.default_rng(seed)
        off_x = int(rng.integers(0, out.width - crop_w + 1))
        off_y = int(rng.integers(0, out.height - crop_h + 1))
        out = RasterFrame(np.ascontiguousarray(
            out.data[off_y:off_y + crop_h, off_x:off_x + crop_w]), out.timestamp_us)
    if spec.hflip:
        out = RasterFrame(np.ascontiguousarray(out.data[:, ::-1]), out.timestamp_us)
    if spec.vflip:
        out = RasterFrame(np.ascontiguousarray(out.data[::-1, :]), out.timestamp_us)
    return out


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AlignmentConfig:
    """Hyperparameters of the toy alignment loop (all deterministic per seed)."""

    tau: float = 0.07
    batch_size: int = 32
    bank_capacity: int = 1024
    learning_rate: float = 0.5
    epochs: int = 10
    seed: int = 0
    feature_dim: int = 64
    embedding_dim: int = 128
    patch_grid: tuple[int, int] = (8, 8)
    augment_negative_fraction: float = 0.5
    train_visual_head: bool = False
    learnable_tau: bool = False
    parallel_features: bool = False

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.tau}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if not (0.0 <= self.augment_negative_fraction <= 1.0):
            raise ConfigError("augment_negative_fraction must be in [0, 1]")


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    loss: float
    retrieval_top1: float


def retrieval_accuracy(v_set, t_set) -> float:
    """Fraction of tactile embeddings whose best-matching visual is their pair.

    Ties break toward the lower index.
    """
    v = np.asarray(v_set, dtype=np.float64)
    t = np.asarray(t_set, dtype=np.float64)
    if v.shape != t.shape or v.ndim != 2:
        raise DimensionError(
            f"v_set and t_set must be equal-shaped 2-D batches, got {v.shape} / {t.shape}")
    if v.shape[0] == 0:
        raise DimensionError("retrieval needs at least one pair")
    best = np.argmax(t @ v.T, axis=1)
    return float(np.mean(best == np.arange(t.shape[0])))


def _extract_all(extractor: ToyFeatureExtractor, frames, parallel: bool) -> np.ndarray:
    if parallel:
        with ThreadPoolExecutor() as pool:
            return np.stack(list(pool.map(extractor.extract, frames)))
    return np.stack([extractor.extract(frame) for frame in frames])


def train_alignment(pairs, config: AlignmentConfig = AlignmentConfig()
                    ) -> tuple[ProjectionHead, list[EpochMetrics]]:
    """Train the tactile projection head on time-ordered (visual, tactile, joints) pairs.

    The visual path (toy extractor + visual head) stays frozen unless
    ``train_visual_head`` is set. Negatives pushed into the memory bank per
    batch are a configurable mix of augmented visual views and the batch's
    own (thereafter stale) tactile embeddings. The final timestep has no
    successor, so its secondary positive is dropped.

    Returns the trained tactile head and per-epoch (loss, retrieval) metrics.
    """
    pairs = list(pairs)
    n = len(pairs)
    if n < 2 * config.batch_size:
        raise InsufficientDataError(
            f"training needs >= {2 * config.batch_size} pairs, got {n}")

    f_v, f_t, g_v, g_t = build_components(config)
    draw_seed = _seed_int(np.random.SeedSequence(config.seed).spawn(5)[4])

    visual_frames = [p[0] for p in pairs]
    visual_features = _extract_all(f_v, visual_frames, config.parallel_features)
    tactile_features = _extract_all(f_t, (p[1] for p in pairs), config.parallel_features)
    joints = np.stack([p[2].as_array() for p in pairs])
    tactile_inputs = np.concatenate([tactile_features, joints], axis=1)

    def visual_embeddings(indices) -> np.ndarray:
        raw = visual_features[indices] @ g_v.weight + g_v.bias
        return raw / np.linalg.norm(raw, axis=1, keepdims=True)

    def tactile_embeddings(indices) -> tuple[np.ndarray, np.ndarray]:
        raw = tactile_inputs[indices] @ g_t.weight + g_t.bias
        return raw / np.linalg.norm(raw, axis=1, keepdims=True), raw

    tau = config.tau
    batch_count = n // config.batch_size
    metrics: list[EpochMetrics] = []
    all_indices = np.arange(n)

    for epoch in range(1, config.epochs + 1):
        # Fresh bank and draw stream per epoch: each epoch is then a pure
        # function of the parameters, so a frozen optimizer replays exactly.
        bank = MemoryBank(config.bank_capacity)
        draw = np.random.default_rng(draw_seed)
        epoch_losses = []
        for b in range(batch_count):
            start = b * config.batch_size
            stop = start + config.batch_size
            idx = all_indices[start:stop]
            if stop < n:
                v_idx = all_indices[start:stop + 1]
                mask = None
            else:
                # Trajectory tail: the final sample has no successor, so its
                # secondary positive is dropped. The duplicated last index is
                # a shape-keeping dummy that the mask zeroes out.
                v_idx = np.concatenate([idx, idx[-1:]])
                mask = np.ones(config.batch_size, dtype=bool)
                mask[-1] = False
            v_batch = visual_embeddings(v_idx)

            t_unit, t_raw = tactile_embeddings(idx)
            loss, _per, grad_t, grad_v, grad_tau = _loss_and_grad(
                v_batch, t_unit, bank, tau, mask)
            epoch_losses.append(loss)

            grad_raw = np.stack([normalize_backward(t_raw[i], grad_t[i])
                                 for i in range(idx.size)])
            g_t = ProjectionHead(
                g_t.weight - config.learning_rate * tactile_inputs[idx].T @ grad_raw,
                g_t.bias - config.learning_rate * grad_raw.sum(axis=0))

            if config.train_visual_head:
                v_raw = visual_features[v_idx] @ g_v.weight + g_v.bias
                grad_v_raw = np.stack([normalize_backward(v_raw[i], grad_v[i])
                                       for i in range(v_idx.size)])
                g_v = ProjectionHead(
                    g_v.weight - config.learning_rate * visual_features[v_idx].T @ grad_v_raw,
                    g_v.bias - config.learning_rate * grad_v_raw.sum(axis=0))
            if config.learnable_tau:
                tau = max(1e-4, tau - config.learning_rate * grad_tau)

            bank = bank_push(bank, _draw_negatives(
                idx, visual_frames, f_v, g_v, t_unit, config, draw))
        t_all, _ = tactile_embeddings(all_indices)
        metrics.append(EpochMetrics(epoch, float(np.mean(epoch_losses)),
                                    retrieval_accuracy(visual_embeddings(all_indices), t_all)))
    return g_t, metrics


def _seed_int(seed_seq: np.random.SeedSequence) -> int:
    return int(seed_seq.generate_state(1)[0])


def build_components(config: AlignmentConfig
                     ) -> tuple[ToyFeatureExtractor, ToyFeatureExtractor,
                                ProjectionHead, ProjectionHead]:
    """Deterministic (f_v, f_t, g_v, g_t-initial) for a config's seed.

    The visual pieces stay frozen during default training, so anything
    embedding new data (retrieval scoring, export) can rebuild them from
    the config alone.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(5)
    f_v = ToyFeatureExtractor(config.patch_grid, _seed_int(seeds[0]), config.feature_dim)
    f_t = ToyFeatureExtractor(config.patch_grid, _seed_int(seeds[1]), config.feature_dim)
    g_v = ProjectionHead.random(config.feature_dim, config.embedding_dim, _seed_int(seeds[2]))
    g_t = ProjectionHead.random(config.feature_dim + JOINT_COUNT, config.embedding_dim,
                                _seed_int(seeds[3]))
    return f_v, f_t, g_v, g_t


def _draw_negatives(idx, visual_frames, f_v: ToyFeatureExtractor, g_v: ProjectionHead,
                    t_unit: np.ndarray, config: AlignmentConfig,
                    draw: np.random.Generator) -> list[np.ndarray]:
    """Bank update for one batch: augmented visual views + stale tactile embeddings."""
    batch = idx.size
    n_aug = int(round(batch * config.augment_negative_fraction))
    negatives: list[np.ndarray] = []
    if n_aug > 0:
        chosen = draw.choice(idx, size=n_aug, replace=False)
        for sample in chosen:
            frame = visual_frames[int(sample)]
            scale = float(draw.uniform(0.8, 1.25))
            # crop back to the original size only when upscaling left room
            want_crop = bool(draw.random() < 0.5) and scale >= 1.0
            spec = AugmentSpec(
                scale=scale,
                crop=(frame.width, frame.height) if want_crop else None,
                hflip=bool(draw.random() < 0.5),
                vflip=bool(draw.random() < 0.5))
            view = augment(frame, spec, seed=int(draw.integers(0, 2 ** 31)))
            negatives.append(g_v.apply(f_v.extract(view)))
    n_stale = batch - n_aug
    if n_stale > 0:
        stale = draw.choice(batch, size=n_stale, replace=False)
        negatives.extend(t_unit[int(i)].copy() for i in np.sort(stale))
    return negatives


def save_head(head: ProjectionHead, tau: float, seed: int, path: str | Path) -> None:
    """Persist a trained head: {d_in, d_out, weight row-major, bias, tau, seed}."""
    payload = {"d_in": head.d_in, "d_out": head.d_out,
               "weight": head.weight.ravel().tolist(),
               "bias": head.bias.tolist(), "tau": tau, "seed": seed}
    Path(path).write_text(json.dumps(payload) + "\n")


def load_head(path: str | Path) -> tuple[ProjectionHead, float, int]:
    d = json.loads(Path(path).read_text())
    weight = np.asarray(d["weight"], dtype=np.float64).reshape(d["d_in"], d["d_out"])
    return (ProjectionHead(weight, np.asarray(d["bias"], dtype=np.float64)),
            float(d["tau"]), int(d["seed"]))


def write_metrics_csv(metrics: list[EpochMetrics], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "retrieval_top1"])
        for m in metrics:
            writer.writerow([m.epoch, repr(m.loss), repr(m.retrieval_top1)])
