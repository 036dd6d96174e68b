"""Parsing of gaze logs, AOI annotations and the dataset manifest, plus
frame alignment.

File formats (all UTF-8 CSV with a header row):

  gaze log:  participant_id,video_id,wall_ts_ms,video_ts_ms,x_px,y_px,valid
  AOI track: video_id,frame_index,object_id,x_min_px,y_min_px,x_max_px,y_max_px

The manifest is a YAML tree; see ``load_manifest`` for the schema.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .core import (
    AoiBox,
    AoiTrack,
    GazeSample,
    GazeTrace,
    Group,
    Participant,
    VideoMeta,
    normalize_coordinates,
)
from .errors import (
    ConfigError,
    DegenerateBox,
    EmptyLog,
    FrameOutOfRange,
    MalformedRow,
    NonMonotonicTimestamp,
    RateMismatch,
)

GAZE_HEADER = ["participant_id", "video_id", "wall_ts_ms", "video_ts_ms", "x_px", "y_px", "valid"]
AOI_HEADER = ["video_id", "frame_index", "object_id", "x_min_px", "y_min_px", "x_max_px", "y_max_px"]

# Hard floor on the fraction of frames that must receive a valid sample;
# below this the meta or the log is wrong. Traces between MIN and WARN are
# usable but flagged in reports.
MIN_VALID_FRAME_FRACTION = 0.10
WARN_VALID_FRAME_FRACTION = 0.50


@dataclass(frozen=True)
class DatasetManifest:
    """Declares videos (in feature-concatenation order), participants and
    the files holding their data. All paths are resolved relative to the
    manifest's directory."""

    videos: tuple[VideoMeta, ...]
    participants: tuple[Participant, ...]
    gaze_log_paths: dict  # (participant_id, video_id) -> Path
    aoi_paths: dict  # video_id -> Path

    @property
    def video_order(self) -> tuple[str, ...]:
        return tuple(v.video_id for v in self.videos)

    def video_meta(self, video_id: str) -> VideoMeta:
        for v in self.videos:
            if v.video_id == video_id:
                return v
        raise ConfigError(f"unknown video id {video_id!r}")


@dataclass(frozen=True)
class AlignedTrace:
    """Frame-indexed gaze for one (participant, video).

    Arrays have one entry per video frame. ``present[f]`` is False when no
    valid sample maps to frame f; then x/y/wall_s are NaN. ``gap[f]`` marks
    frames that begin a discontinuity (pause or invalid run).
    """

    participant_id: str
    video_id: str
    fps: float
    present: np.ndarray  # bool (n_frames,)
    x: np.ndarray  # float (n_frames,)
    y: np.ndarray  # float (n_frames,)
    gap: np.ndarray  # bool (n_frames,)
    wall_s: np.ndarray  # float (n_frames,), wall time of the chosen sample
    valid_fraction: float = 1.0

    @property
    def n_frames(self) -> int:
        return len(self.present)


def _parse_float(row_val: str, path, line_no, what) -> float:
    try:
        v = float(row_val)
    except (TypeError, ValueError):
        raise MalformedRow(path, line_no, f"bad {what}: {row_val!r}") from None
    if not math.isfinite(v):
        raise MalformedRow(path, line_no, f"non-finite {what}")
    return v


def parse_gaze_log(path, meta: VideoMeta) -> GazeTrace:
    """Parse one gaze CSV into a GazeTrace with normalized coordinates.

    Rows flagged invalid by the tracker, or whose coordinates fall off
    screen, are kept with valid=False.
    """
    path = Path(path)
    samples = []
    participant_id = None
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != GAZE_HEADER:
            raise MalformedRow(path, 1, f"expected header {','.join(GAZE_HEADER)}")
        prev_wall = -math.inf
        prev_video = -math.inf
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(GAZE_HEADER):
                raise MalformedRow(path, line_no, f"expected {len(GAZE_HEADER)} fields, got {len(row)}")
            pid, vid, wall_raw, video_raw, x_raw, y_raw, valid_raw = row
            if participant_id is None:
                participant_id = pid
            if vid != meta.video_id:
                raise MalformedRow(path, line_no, f"video id {vid!r} does not match {meta.video_id!r}")
            wall_ts = _parse_float(wall_raw, path, line_no, "wall_ts_ms")
            video_ts = _parse_float(video_raw, path, line_no, "video_ts_ms")
            x_px = _parse_float(x_raw, path, line_no, "x_px")
            y_px = _parse_float(y_raw, path, line_no, "y_px")
            if valid_raw.strip() not in ("0", "1"):
                raise MalformedRow(path, line_no, f"valid must be 0 or 1, got {valid_raw!r}")
            tracker_valid = valid_raw.strip() == "1"
            if wall_ts <= prev_wall:
                raise NonMonotonicTimestamp(path, line_no)
            if video_ts < prev_video:
                raise MalformedRow(path, line_no, "video_ts_ms decreases")
            prev_wall = wall_ts
            prev_video = video_ts
            x, y, on_screen = normalize_coordinates(x_px, y_px, meta)
            samples.append(GazeSample(wall_ts, video_ts, x, y, tracker_valid and on_screen))
    if not samples:
        raise EmptyLog(path)
    return GazeTrace(participant_id=participant_id, video_id=meta.video_id, samples=tuple(samples))


def parse_aoi_track(path, meta: VideoMeta) -> AoiTrack:
    """Parse one AOI CSV, normalizing boxes to [0,1]^2. An empty file is a
    legal track with zero boxes."""
    path = Path(path)
    boxes = []
    n_frames = meta.n_frames
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != AOI_HEADER:
            raise MalformedRow(path, 1, f"expected header {','.join(AOI_HEADER)}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(AOI_HEADER):
                raise MalformedRow(path, line_no, f"expected {len(AOI_HEADER)} fields, got {len(row)}")
            vid, frame_raw, object_id, x0_raw, y0_raw, x1_raw, y1_raw = row
            if vid != meta.video_id:
                raise MalformedRow(path, line_no, f"video id {vid!r} does not match {meta.video_id!r}")
            try:
                frame_index = int(frame_raw)
            except ValueError:
                raise MalformedRow(path, line_no, f"bad frame_index: {frame_raw!r}") from None
            if not (0 <= frame_index < n_frames):
                raise FrameOutOfRange(path, line_no, frame_index, n_frames)
            x0 = _parse_float(x0_raw, path, line_no, "x_min_px") / meta.width_px
            y0 = _parse_float(y0_raw, path, line_no, "y_min_px") / meta.height_px
            x1 = _parse_float(x1_raw, path, line_no, "x_max_px") / meta.width_px
            y1 = _parse_float(y1_raw, path, line_no, "y_max_px") / meta.height_px
            if x0 >= x1 or y0 >= y1:
                raise DegenerateBox(path, line_no)
            if not (0.0 <= x0 and x1 <= 1.0 and 0.0 <= y0 and y1 <= 1.0):
                raise MalformedRow(path, line_no, "box extends outside the screen")
            boxes.append(AoiBox(object_id, frame_index, x0, y0, x1, y1))
    return AoiTrack(video_id=meta.video_id, boxes=tuple(boxes))


def align(trace: GazeTrace, meta: VideoMeta) -> AlignedTrace:
    """Assign valid samples to video frames.

    Frame f (video time f/fps) receives the valid sample whose video_ts is
    nearest within half a frame period; frames with no such sample are
    absent. A frame is gap-flagged when its predecessor is absent or when
    the wall-clock spread between the two chosen samples exceeds
    2/fps + 0.5 s, which captures pause events (playback halted after the
    gaze left the screen for 500 ms).
    """
    if trace.video_id != meta.video_id:
        raise ConfigError(f"trace video {trace.video_id!r} does not match meta {meta.video_id!r}")
    fps = meta.fps
    n_frames = meta.n_frames
    present = np.zeros(n_frames, dtype=bool)
    x = np.full(n_frames, np.nan)
    y = np.full(n_frames, np.nan)
    wall_s = np.full(n_frames, np.nan)

    valid = [s for s in trace.samples if s.valid]
    if valid:
        video_s = np.array([s.video_ts for s in valid]) / 1000.0
        wall = np.array([s.wall_ts for s in valid]) / 1000.0
        xs = np.array([s.x for s in valid])
        ys = np.array([s.y for s in valid])
        half_period = 1.0 / (2.0 * fps)
        t_f = np.arange(n_frames) / fps
        # nearest sample by video time; ties resolve to the earlier sample
        idx = np.searchsorted(video_s, t_f)
        idx_lo = np.clip(idx - 1, 0, len(valid) - 1)
        idx_hi = np.clip(idx, 0, len(valid) - 1)
        d_lo = np.abs(video_s[idx_lo] - t_f)
        d_hi = np.abs(video_s[idx_hi] - t_f)
        best = np.where(d_lo <= d_hi, idx_lo, idx_hi)
        dist = np.minimum(d_lo, d_hi)
        hit = dist <= half_period
        present[hit] = True
        x[hit] = xs[best[hit]]
        y[hit] = ys[best[hit]]
        wall_s[hit] = wall[best[hit]]

    fraction = float(present.mean()) if n_frames else 0.0
    if fraction < MIN_VALID_FRAME_FRACTION:
        raise RateMismatch(trace.participant_id, trace.video_id, fraction)

    gap = np.zeros(n_frames, dtype=bool)
    max_spread = 2.0 / fps + 0.5
    for f in range(1, n_frames):
        if not present[f - 1]:
            gap[f] = True
        elif present[f] and (wall_s[f] - wall_s[f - 1]) > max_spread:
            gap[f] = True
    return AlignedTrace(
        participant_id=trace.participant_id,
        video_id=trace.video_id,
        fps=fps,
        present=present,
        x=x,
        y=y,
        gap=gap,
        wall_s=wall_s,
        valid_fraction=fraction,
    )


def load_manifest(path) -> DatasetManifest:
    """Load the dataset manifest.

    Schema::

        videos:                     # list, order defines concatenation order
          - id: car_pursuit
            duration_s: 24.0
            fps: 30.0
            width_px: 1920
            height_px: 1080
        participants:
          - id: asd_000
            group: ASD              # ASD | CONTROL
            cars: 33                # optional, ASD only
        gaze_logs:
          asd_000:
            car_pursuit: logs/asd_000__car_pursuit.csv
        aoi_tracks:
          car_pursuit: aoi/car_pursuit.csv
    """
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: manifest must be a mapping")
    base = path.parent

    videos = []
    for entry in data.get("videos", []):
        try:
            videos.append(
                VideoMeta(
                    video_id=str(entry["id"]),
                    duration_s=float(entry["duration_s"]),
                    fps=float(entry["fps"]),
                    width_px=int(entry["width_px"]),
                    height_px=int(entry["height_px"]),
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"{path}: bad video entry {entry!r}: {e}") from e
    if not videos:
        raise ConfigError(f"{path}: manifest declares no videos")

    participants = []
    for entry in data.get("participants", []):
        try:
            group = Group(str(entry["group"]))
            cars = entry.get("cars")
            participants.append(
                Participant(
                    participant_id=str(entry["id"]),
                    group=group,
                    cars=int(cars) if cars is not None else None,
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"{path}: bad participant entry {entry!r}: {e}") from e
    if not participants:
        raise ConfigError(f"{path}: manifest declares no participants")

    video_ids = {v.video_id for v in videos}
    participant_ids = {p.participant_id for p in participants}

    gaze_log_paths = {}
    for pid, per_video in (data.get("gaze_logs") or {}).items():
        if pid not in participant_ids:
            raise ConfigError(f"{path}: gaze_logs references unknown participant {pid!r}")
        for vid, rel in per_video.items():
            if vid not in video_ids:
                raise ConfigError(f"{path}: gaze_logs references unknown video {vid!r}")
            gaze_log_paths[(pid, vid)] = base / rel

    aoi_paths = {}
    for vid, rel in (data.get("aoi_tracks") or {}).items():
        if vid not in video_ids:
            raise ConfigError(f"{path}: aoi_tracks references unknown video {vid!r}")
        aoi_paths[vid] = base / rel

    return DatasetManifest(
        videos=tuple(videos),
        participants=tuple(participants),
        gaze_log_paths=gaze_log_paths,
        aoi_paths=aoi_paths,
    )
