"""The five gaze features, computed over a full video or a time window.

All statistics use population (divide-by-n) variance so results are
deterministic down to n = 2; oracle implementations must match this choice.

Feature summary (per window):
  F1  scalar dispersion of gaze points: sqrt(var(x) + var(y))
  F2  std of Euclidean displacement between consecutive frames
  F3  std of Manhattan distance from gaze to the nearest AOI center
  F4  RMS Euclidean distance from gaze to the nearest AOI center
  F5  mean first-look delay per AOI occurrence, right-censored at the
      occurrence's (window-clipped) duration
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .core import AoiTrack, FeatureMode, FeatureVector
from .errors import InsufficientData, MissingVideo, NoAoiInWindow
from .ingest import AlignedTrace


@dataclass(frozen=True)
class Window:
    """A [start_s, start_s + duration_s) slice of video time."""

    start_s: float
    duration_s: float

    def __post_init__(self):
        if self.start_s < 0 or self.duration_s <= 0:
            raise ValueError("need start_s >= 0 and duration_s > 0")

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s


@dataclass(frozen=True)
class AoiOccurrence:
    """A maximal contiguous span of frames where one object is annotated."""

    object_id: str
    enter_frame: int
    exit_frame: int  # inclusive


def full_window(aligned: AlignedTrace) -> Window:
    return Window(0.0, aligned.n_frames / aligned.fps)


def frame_range(w: Window, fps: float, n_frames: int) -> tuple[int, int]:
    """Half-open frame index range [lo, hi) of frames whose timestamp
    f/fps falls inside the window."""
    lo = int(math.ceil(w.start_s * fps - 1e-9))
    hi = int(math.ceil(w.end_s * fps - 1e-9))
    return max(lo, 0), min(hi, n_frames)


class _AoiIndex:
    """Per-frame, per-object arrays for fast geometry queries."""

    def __init__(self, track: AoiTrack, n_frames: int):
        self.object_ids = track.object_ids
        n_obj = len(self.object_ids)
        obj_pos = {oid: k for k, oid in enumerate(self.object_ids)}
        self.ann = np.zeros((n_obj, n_frames), dtype=bool)
        self.cx = np.full((n_obj, n_frames), np.nan)
        self.cy = np.full((n_obj, n_frames), np.nan)
        self.x_min = np.full((n_obj, n_frames), np.nan)
        self.x_max = np.full((n_obj, n_frames), np.nan)
        self.y_min = np.full((n_obj, n_frames), np.nan)
        self.y_max = np.full((n_obj, n_frames), np.nan)
        for b in track.boxes:
            if b.frame_index >= n_frames:
                continue
            k = obj_pos[b.object_id]
            f = b.frame_index
            self.ann[k, f] = True
            self.cx[k, f], self.cy[k, f] = b.center
            self.x_min[k, f] = b.x_min
            self.x_max[k, f] = b.x_max
            self.y_min[k, f] = b.y_min
            self.y_max[k, f] = b.y_max
        self.any_ann = self.ann.any(axis=0) if n_obj else np.zeros(n_frames, dtype=bool)

    @functools.cached_property
    def occurrences(self) -> tuple[AoiOccurrence, ...]:
        occs = []
        for k, oid in enumerate(self.object_ids):
            row = self.ann[k]
            f = 0
            n = len(row)
            while f < n:
                if row[f]:
                    start = f
                    while f + 1 < n and row[f + 1]:
                        f += 1
                    occs.append(AoiOccurrence(oid, start, f))
                f += 1
        occs.sort(key=lambda o: (o.enter_frame, o.object_id))
        return tuple(occs)


@functools.lru_cache(maxsize=256)
def _aoi_index(track: AoiTrack, n_frames: int) -> _AoiIndex:
    return _AoiIndex(track, n_frames)


def aoi_occurrences(track: AoiTrack, n_frames: int) -> tuple[AoiOccurrence, ...]:
    """Maximal contiguous annotated spans, per object, in frame order."""
    return _aoi_index(track, n_frames).occurrences


def _std_pop(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean((values - values.mean()) ** 2)))


def feature_std_gaze(aligned: AlignedTrace, w: Window) -> float:
    """F1: sqrt of summed per-axis population variances of gaze points."""
    lo, hi = frame_range(w, aligned.fps, aligned.n_frames)
    mask = aligned.present[lo:hi]
    if int(mask.sum()) < 2:
        raise InsufficientData(f"F1 needs >= 2 present frames in {w}")
    xs = aligned.x[lo:hi][mask]
    ys = aligned.y[lo:hi][mask]
    return float(np.sqrt(np.var(xs) + np.var(ys)))


def feature_std_diff(aligned: AlignedTrace, w: Window) -> float:
    """F2: population std of Euclidean displacement between consecutive
    frames. Pairs spanning a gap flag are excluded."""
    lo, hi = frame_range(w, aligned.fps, aligned.n_frames)
    if hi - lo < 2:
        raise InsufficientData(f"F2 needs >= 2 frames in {w}")
    p = aligned.present[lo:hi]
    eligible = p[:-1] & p[1:] & ~aligned.gap[lo + 1 : hi]
    if int(eligible.sum()) < 2:
        raise InsufficientData(f"F2 needs >= 2 eligible consecutive pairs in {w}")
    dx = np.diff(aligned.x[lo:hi])[eligible]
    dy = np.diff(aligned.y[lo:hi])[eligible]
    return _std_pop(np.hypot(dx, dy))


def _gaze_to_center_distances(aligned, aoi, w, metric):
    idx = _aoi_index(aoi, aligned.n_frames)
    lo, hi = frame_range(w, aligned.fps, aligned.n_frames)
    if not idx.any_ann[lo:hi].any():
        raise NoAoiInWindow(f"no annotated frame in {w}")
    both = aligned.present[lo:hi] & idx.any_ann[lo:hi]
    cols = np.nonzero(both)[0] + lo
    if len(cols) == 0:
        return np.empty(0)
    gx = aligned.x[cols]
    gy = aligned.y[cols]
    if metric == "manhattan":
        d = np.abs(gx - idx.cx[:, cols]) + np.abs(gy - idx.cy[:, cols])
    else:
        d = np.hypot(gx - idx.cx[:, cols], gy - idx.cy[:, cols])
    # min over annotated objects only; NaN rows are unannotated objects
    return np.nanmin(np.where(idx.ann[:, cols], d, np.nan), axis=0)


def feature_std_manhattan(aligned: AlignedTrace, aoi: AoiTrack, w: Window) -> float:
    """F3: population std of the Manhattan distance from gaze to the
    nearest annotated box center, over frames that are both present and
    annotated."""
    d = _gaze_to_center_distances(aligned, aoi, w, "manhattan")
    if len(d) < 2:
        raise InsufficientData(f"F3 needs >= 2 present+annotated frames in {w}")
    return _std_pop(d)


def feature_rmse_aoi(aligned: AlignedTrace, aoi: AoiTrack, w: Window) -> float:
    """F4: RMS Euclidean distance from gaze to the nearest annotated box
    center, paired frame by frame."""
    d = _gaze_to_center_distances(aligned, aoi, w, "euclidean")
    if len(d) < 1:
        raise NoAoiInWindow(f"no frame both present and annotated in {w}")
    return float(np.sqrt(np.mean(d**2)))


def feature_delay(aligned: AlignedTrace, aoi: AoiTrack, w: Window) -> float:
    """F5: mean first-look delay in seconds, averaged over all AOI
    occurrences overlapping the window.

    Each occurrence is clipped to the window (enter frame clamped to the
    window start). The delay is the time from the clipped enter frame to
    the first frame whose present gaze point lies inside that object's
    box; if the gaze never enters during the clipped span, the delay is
    right-censored at the clipped span duration.
    """
    idx = _aoi_index(aoi, aligned.n_frames)
    lo, hi = frame_range(w, aligned.fps, aligned.n_frames)
    obj_pos = {oid: k for k, oid in enumerate(idx.object_ids)}
    delays = []
    for occ in idx.occurrences:
        enter = max(occ.enter_frame, lo)
        exit_ = min(occ.exit_frame, hi - 1)
        if enter > exit_:
            continue
        k = obj_pos[occ.object_id]
        span = slice(enter, exit_ + 1)
        inside = (
            aligned.present[span]
            & (aligned.x[span] >= idx.x_min[k, span])
            & (aligned.x[span] <= idx.x_max[k, span])
            & (aligned.y[span] >= idx.y_min[k, span])
            & (aligned.y[span] <= idx.y_max[k, span])
        )
        hits = np.nonzero(inside)[0]
        if len(hits):
            delays.append(hits[0] / aligned.fps)
        else:
            delays.append((exit_ - enter + 1) / aligned.fps)
    if not delays:
        raise NoAoiInWindow(f"no AOI occurrence overlaps {w}")
    return float(np.mean(delays))


def extract(
    aligned: AlignedTrace,
    aoi: AoiTrack | None,
    w: Window,
    mode: FeatureMode,
) -> FeatureVector:
    """Single-video feature vector: [F1..F5] with AOI, [F1, F2] without."""
    values = [feature_std_gaze(aligned, w), feature_std_diff(aligned, w)]
    if mode is FeatureMode.WITH_AOI:
        if aoi is None:
            raise NoAoiInWindow(f"no AOI track for video {aligned.video_id!r}")
        values.append(feature_std_manhattan(aligned, aoi, w))
        values.append(feature_rmse_aoi(aligned, aoi, w))
        values.append(feature_delay(aligned, aoi, w))
    return FeatureVector(
        participant_id=aligned.participant_id,
        video_ids=(aligned.video_id,),
        mode=mode,
        values=tuple(values),
        windows=((w.start_s, w.duration_s),),
    )


def concat_videos(per_video: list[FeatureVector], video_order: list[str]) -> FeatureVector:
    """Concatenate single-video vectors in manifest video order."""
    if not per_video:
        raise ValueError("nothing to concatenate")
    pid = per_video[0].participant_id
    mode = per_video[0].mode
    by_video = {}
    for fv in per_video:
        if fv.participant_id != pid:
            raise ValueError("mixed participants in concat")
        if fv.mode is not mode:
            raise ValueError("mixed modes in concat")
        if len(fv.video_ids) != 1:
            raise ValueError("concat expects single-video vectors")
        by_video[fv.video_ids[0]] = fv
    values = []
    windows = []
    for vid in video_order:
        if vid not in by_video:
            raise MissingVideo(pid, vid)
        fv = by_video[vid]
        values.extend(fv.values)
        windows.extend(fv.windows or ((math.nan, math.nan),))
    return FeatureVector(
        participant_id=pid,
        video_ids=tuple(video_order),
        mode=mode,
        values=tuple(values),
        windows=tuple(windows),
    )
