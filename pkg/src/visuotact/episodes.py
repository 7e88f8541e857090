"""Time-synchronized episode recording.

Visual, tactile, and joint streams arrive at a nominal 30 Hz with
independent jitter. The visual stream paces the pairing: for every visual
sample, the nearest tactile and joint samples (by absolute timestamp
difference, each used at most once, ties toward the earlier sample) form a
record, but only when both fall inside the pairing tolerance. The default
tolerance is half the 30 Hz period so nearest neighbors are unambiguous.

On disk, an episode is a directory of PNG frames plus JSON-lines records
and a metadata file:

    episode_<id>/
      visual/000000.png ...
      tactile/000000.png ...
      records.jsonl    # {"index", "t_us", "visual", "tactile", "joints": [7]}
      meta.json        # {"episode_id", "task", "hz", "resolution", "robot",
                       #  "sensor", "created_at", "config_hash"}

Writes are atomic: everything lands in a temporary directory that is
renamed into place only when complete.
"""

from __future__ import annotations

import bisect
import json
import os
import shutil
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from .align import JointVector
from .errors import (ConflictError, DimensionError, OrderingError,
                     StorageError, ValidationError)
from .frames import RasterFrame, read_png, write_png

PAIRING_RATE_HZ = 30
DEFAULT_RESOLUTION = (640, 480)
# Half the 30 Hz period, rounded to the microsecond.
DEFAULT_TOLERANCE_US = 16_667


@dataclass(frozen=True)
class StreamSample:
    """One timestamped sample of a sensor stream; payload is stream-specific."""

    timestamp_us: int
    payload: Any

    def __post_init__(self):
        if self.timestamp_us < 0:
            raise DimensionError(f"timestamps must be non-negative, got {self.timestamp_us}")


@dataclass(frozen=True)
class EpisodeRecord:
    """One paired timestep; the timestamp is the visual stream's."""

    index: int
    visual: Any
    tactile: Any
    joints: JointVector
    timestamp_us: int


@dataclass(frozen=True)
class EpisodeMeta:
    episode_id: str
    task: str
    robot: str = ""
    sensor: str = ""
    config_hash: str = ""
    created_at: str = ""
    hz: int = PAIRING_RATE_HZ
    resolution: tuple[int, int] = DEFAULT_RESOLUTION


@dataclass(frozen=True)
class Episode:
    """One recorded trajectory: ordered paired records plus metadata."""

    records: tuple[EpisodeRecord, ...]
    meta: EpisodeMeta

    def __post_init__(self):
        previous = None
        for position, record in enumerate(self.records):
            if record.index != position:
                raise ValidationError(
                    f"record indices must be contiguous from 0; got {record.index} "
                    f"at position {position}")
            if previous is not None and record.timestamp_us <= previous:
                raise ValidationError(
                    f"record {position} breaks strictly increasing timestamps")
            previous = record.timestamp_us

    def __len__(self) -> int:
        return len(self.records)


def _check_sorted(samples: Sequence[StreamSample], name: str, strict: bool) -> None:
    for i in range(1, len(samples)):
        earlier = samples[i - 1].timestamp_us
        later = samples[i].timestamp_us
        if later < earlier or (strict and later == earlier):
            raise OrderingError(f"{name} stream is not sorted at sample {i}")


def _match_stream(target_us: int, times: list[int], used: list[bool],
                  tolerance_us: int) -> int | None:
    """Index of the nearest unused sample within tolerance; ties go earlier."""
    n = len(times)
    pos = bisect.bisect_left(times, target_us)
    left = pos - 1
    while left >= 0 and used[left]:
        left -= 1
    right = pos
    while right < n and used[right]:
        right += 1
    best = None
    best_delta = tolerance_us + 1
    if left >= 0:
        delta = target_us - times[left]
        if delta <= tolerance_us:
            best = left
            best_delta = delta
    if right < n:
        delta = times[right] - target_us
        if delta <= tolerance_us and delta < best_delta:
            best = right
    return best


def pair_streams(visual: Sequence[StreamSample], tactile: Sequence[StreamSample],
                 joints: Sequence[StreamSample],
                 tolerance_us: int = DEFAULT_TOLERANCE_US,
                 ) -> tuple[list[EpisodeRecord], dict[str, int]]:
    """Pair the three streams on the visual clock.

    Returns the paired records plus per-stream counts of samples that ended
    up in no record. A visual sample is dropped when either match is missing
    or out of tolerance. Pairing is deterministic and greedy in time order.
    """
    visual = list(visual)
    tactile = list(tactile)
    joints = list(joints)
    _check_sorted(visual, "visual", strict=True)
    _check_sorted(tactile, "tactile", strict=False)
    _check_sorted(joints, "joints", strict=False)

    used_tactile = [False] * len(tactile)
    used_joints = [False] * len(joints)
    times_tactile = [s.timestamp_us for s in tactile]
    times_joints = [s.timestamp_us for s in joints]
    records: list[EpisodeRecord] = []
    for sample in visual:
        match_t = _match_stream(sample.timestamp_us, times_tactile, used_tactile,
                                tolerance_us)
        match_j = _match_stream(sample.timestamp_us, times_joints, used_joints,
                                tolerance_us)
        if match_t is None or match_j is None:
            continue
        used_tactile[match_t] = True
        used_joints[match_j] = True
        joints_payload = joints[match_j].payload
        if not isinstance(joints_payload, JointVector):
            raise DimensionError("joint stream payloads must be JointVector instances")
        records.append(EpisodeRecord(index=len(records),
                                     visual=sample.payload,
                                     tactile=tactile[match_t].payload,
                                     joints=joints_payload,
                                     timestamp_us=sample.timestamp_us))
    dropped = {"visual": len(visual) - len(records),
               "tactile": len(tactile) - len(records),
               "joints": len(joints) - len(records)}
    return records, dropped


def _episode_dir_name(episode_id: str) -> str:
    return f"episode_{episode_id}"


def write_episode(episode: Episode, root: str | Path) -> Path:
    """Persist an episode under ``root``; returns the meta.json path.

    Fails with ConflictError if the episode id already exists; on I/O
    failure the partial temporary directory is removed.
    """
    root = Path(root)
    final_dir = root / _episode_dir_name(episode.meta.episode_id)
    if final_dir.exists():
        raise ConflictError(f"episode {episode.meta.episode_id!r} already exists at {final_dir}")
    temp_dir = root / f".tmp-{_episode_dir_name(episode.meta.episode_id)}-{uuid.uuid4().hex[:8]}"
    try:
        (temp_dir / "visual").mkdir(parents=True)
        (temp_dir / "tactile").mkdir()
        with open(temp_dir / "records.jsonl", "w", encoding="utf-8") as fh:
            for record in episode.records:
                if not isinstance(record.visual, RasterFrame) \
                        or not isinstance(record.tactile, RasterFrame):
                    raise DimensionError(
                        f"record {record.index} payloads must be RasterFrames to persist")
                name = f"{record.index:06d}.png"
                write_png(record.visual, temp_dir / "visual" / name)
                write_png(record.tactile, temp_dir / "tactile" / name)
                fh.write(json.dumps({
                    "index": record.index,
                    "t_us": record.timestamp_us,
                    "visual": f"visual/{name}",
                    "tactile": f"tactile/{name}",
                    "joints": list(record.joints.values),
                }) + "\n")
        meta = episode.meta
        (temp_dir / "meta.json").write_text(json.dumps({
            "episode_id": meta.episode_id,
            "task": meta.task,
            "hz": meta.hz,
            "resolution": list(meta.resolution),
            "robot": meta.robot,
            "sensor": meta.sensor,
            "created_at": meta.created_at,
            "config_hash": meta.config_hash,
        }, indent=2) + "\n")
        if final_dir.exists():
            raise ConflictError(
                f"episode {episode.meta.episode_id!r} already exists at {final_dir}")
        os.rename(temp_dir, final_dir)
    except OSError as exc:
        shutil.rmtree(temp_dir, ignore_errors=True)
        raise StorageError(f"failed to write episode: {exc}") from exc
    except Exception:
        shutil.rmtree(temp_dir, ignore_errors=True)
        raise
    return final_dir / "meta.json"


def read_episode(manifest_path: str | Path) -> Episode:
    """Load and validate an episode from its meta.json (or directory) path."""
    path = Path(manifest_path)
    episode_dir = path if path.is_dir() else path.parent
    meta_path = episode_dir / "meta.json"
    records_path = episode_dir / "records.jsonl"
    if not meta_path.exists() or not records_path.exists():
        raise StorageError(f"no episode manifest at {episode_dir}")
    try:
        meta_raw = json.loads(meta_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise StorageError(f"unreadable meta.json: {exc}") from exc
    resolution = tuple(meta_raw.get("resolution", DEFAULT_RESOLUTION))
    meta = EpisodeMeta(episode_id=str(meta_raw["episode_id"]),
                       task=str(meta_raw.get("task", "")),
                       robot=str(meta_raw.get("robot", "")),
                       sensor=str(meta_raw.get("sensor", "")),
                       config_hash=str(meta_raw.get("config_hash", "")),
                       created_at=str(meta_raw.get("created_at", "")),
                       hz=int(meta_raw.get("hz", PAIRING_RATE_HZ)),
                       resolution=(int(resolution[0]), int(resolution[1])))

    records: list[EpisodeRecord] = []
    previous_t: int | None = None
    with open(records_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            index = int(row["index"])
            if index != len(records):
                raise ValidationError(
                    f"record at line {line_no} has index {index}, expected {len(records)}")
            t_us = int(row["t_us"])
            if t_us < 0:
                raise ValidationError(f"record {index} has negative timestamp")
            if previous_t is not None and t_us <= previous_t:
                raise ValidationError(
                    f"record {index} breaks strictly increasing timestamps")
            previous_t = t_us
            joints_row = row["joints"]
            if len(joints_row) != 7:
                raise ValidationError(f"record {index} joints must have 7 values")
            frames = {}
            for stream in ("visual", "tactile"):
                frame_path = episode_dir / row[stream]
                if not frame_path.exists():
                    raise StorageError(f"record {index} frame missing: {frame_path}")
                frame = read_png(frame_path, timestamp_us=t_us)
                if frame.size != meta.resolution:
                    raise ValidationError(
                        f"record {index} {stream} frame is {frame.size}, "
                        f"expected {meta.resolution}")
                frames[stream] = frame
            records.append(EpisodeRecord(index=index, visual=frames["visual"],
                                         tactile=frames["tactile"],
                                         joints=JointVector(tuple(joints_row)),
                                         timestamp_us=t_us))
    return Episode(tuple(records), meta)
