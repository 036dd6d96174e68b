"""Manifest-to-features plumbing shared by the CLI and the experiment
harness."""
from __future__ import annotations

from dataclasses import dataclass, field

from .core import FeatureMode, FeatureVector, Group
from .errors import GazeScreenError, MissingVideo
from .features import Window, concat_videos, extract, full_window
from .ingest import (
    WARN_VALID_FRAME_FRACTION,
    AlignedTrace,
    DatasetManifest,
    align,
    load_manifest,
    parse_aoi_track,
    parse_gaze_log,
)


@dataclass
class Dataset:
    """Everything parsed and frame-aligned, ready for feature extraction."""

    manifest: DatasetManifest
    aligned: dict  # (participant_id, video_id) -> AlignedTrace
    aoi: dict  # video_id -> AoiTrack
    quality_warnings: list = field(default_factory=list)

    @property
    def video_order(self):
        return self.manifest.video_order


def load_dataset(manifest_path) -> Dataset:
    """Parse and align every declared file. Raises on the first hard
    failure; low-coverage traces (below the soft threshold) are recorded
    as warnings."""
    manifest = load_manifest(manifest_path)
    aoi = {}
    for vid, path in manifest.aoi_paths.items():
        aoi[vid] = parse_aoi_track(path, manifest.video_meta(vid))
    aligned = {}
    warnings = []
    for (pid, vid), path in manifest.gaze_log_paths.items():
        meta = manifest.video_meta(vid)
        trace = parse_gaze_log(path, meta)
        at = align(trace, meta)
        if at.valid_fraction < WARN_VALID_FRAME_FRACTION:
            warnings.append(
                f"{pid}/{vid}: only {at.valid_fraction:.1%} of frames have gaze"
            )
        aligned[(pid, vid)] = at
    return Dataset(manifest=manifest, aligned=aligned, aoi=aoi, quality_warnings=warnings)


def extract_features(
    dataset: Dataset,
    mode: FeatureMode,
    windows: dict | None = None,
    video_ids: list | None = None,
) -> dict:
    """Concatenated per-participant feature vectors.

    ``windows`` maps video_id -> Window (default: the full video).
    ``video_ids`` restricts and orders the contributing videos (default:
    manifest order). Raises the first extraction error encountered.
    """
    order = list(video_ids) if video_ids is not None else list(dataset.video_order)
    out = {}
    for p in dataset.manifest.participants:
        per_video = []
        for vid in order:
            key = (p.participant_id, vid)
            if key not in dataset.aligned:
                raise MissingVideo(p.participant_id, vid)
            at = dataset.aligned[key]
            w = windows.get(vid) if windows else None
            if w is None:
                w = full_window(at)
            per_video.append(extract(at, dataset.aoi.get(vid), w, mode))
        out[p.participant_id] = concat_videos(per_video, order)
    return out


def collect_extraction_failures(
    dataset: Dataset, mode: FeatureMode
) -> list[tuple[str, str, str]]:
    """Try every (participant, video) and report all failures instead of
    stopping at the first; used by the CLI to list every broken pair."""
    failures = []
    for p in dataset.manifest.participants:
        for vid in dataset.video_order:
            key = (p.participant_id, vid)
            if key not in dataset.aligned:
                failures.append((p.participant_id, vid, "missing gaze log"))
                continue
            at = dataset.aligned[key]
            try:
                extract(at, dataset.aoi.get(vid), full_window(at), mode)
            except GazeScreenError as e:
                failures.append((p.participant_id, vid, str(e)))
    return failures
