"""Synthetic cohort generator.

Produces on-disk datasets (manifest + gaze logs + AOI tracks) whose
group-level differences encode the behavioral signature the features
target: ASD-parameterized participants attend to the annotated object less
often, look at it later, and hold longer background fixations. Parameter
magnitudes are invented (only the directions are grounded) and fully
overridable via a spec file.

Generation is deterministic: (spec, seed) -> byte-identical dataset.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .core import AoiBox, AoiTrack, Group, Participant, VideoMeta
from .errors import ConfigError, IoFailure
from .experiments import derive_rng

# CARS histogram of the 35-participant reference cohort (scores 30..39).
CARS_HISTOGRAM = {30: 3, 31: 5, 32: 6, 33: 4, 34: 5, 35: 7, 36: 3, 37: 0, 38: 1, 39: 1}

AOI_BOX_HALF = 0.05  # ~0.1 x 0.1 normalized box

DEFAULT_VIDEOS = (
    VideoMeta("car_pursuit", 24.0, 30.0, 1920, 1080),
    VideoMeta("dialog", 18.0, 30.0, 1920, 1080),
    VideoMeta("case_exchange", 26.0, 30.0, 1920, 1080),
    VideoMeta("ball_game", 26.0, 30.0, 1920, 1080),
)


@dataclass(frozen=True)
class GroupParams:
    """Behavioral parameters for one group's gaze simulator."""

    p_attend: float  # probability a fixation targets the AOI
    latency_mean_s: float  # first-look latency to a new AOI occurrence
    latency_sd_s: float
    fix_dur_aoi_mean_s: float  # exponential mean fixation duration on AOI
    fix_dur_bg_mean_s: float  # ... on background
    jitter_sd: float  # within-fixation noise, normalized units
    saccade_dur_s: float
    offscreen_rate_hz: float  # look-away event rate
    # per-CARS-unit relative parameter shift: value * (1 + coeff*(cars-30))
    severity_coupling: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.p_attend <= 1.0):
            raise ValueError("p_attend must be in [0,1]")

    def for_cars(self, cars: int | None) -> "GroupParams":
        if cars is None or not self.severity_coupling:
            return self
        shift = cars - 30
        values = dataclasses.asdict(self)
        for name, coeff in self.severity_coupling.items():
            values[name] = max(0.0, values[name] * (1.0 + coeff * shift))
        values["p_attend"] = min(1.0, values["p_attend"])
        return GroupParams(**values)


DEFAULT_CONTROL_PARAMS = GroupParams(
    p_attend=0.75,
    latency_mean_s=0.4,
    latency_sd_s=0.15,
    fix_dur_aoi_mean_s=0.40,
    fix_dur_bg_mean_s=0.25,
    jitter_sd=0.010,
    saccade_dur_s=0.04,
    offscreen_rate_hz=0.02,
)

DEFAULT_ASD_PARAMS = GroupParams(
    p_attend=0.45,
    latency_mean_s=1.2,
    latency_sd_s=0.40,
    fix_dur_aoi_mean_s=0.55,
    fix_dur_bg_mean_s=0.45,
    jitter_sd=0.022,
    saccade_dur_s=0.05,
    offscreen_rate_hz=0.08,
    severity_coupling={
        "p_attend": -0.04,
        "latency_mean_s": 0.08,
        "fix_dur_bg_mean_s": 0.05,
        "offscreen_rate_hz": 0.04,
    },
)


@dataclass(frozen=True)
class CohortSpec:
    n_asd: int = 35
    n_control: int = 25
    videos: tuple = DEFAULT_VIDEOS
    sample_rate_hz: float = 60.0
    asd_params: GroupParams = DEFAULT_ASD_PARAMS
    control_params: GroupParams = DEFAULT_CONTROL_PARAMS
    seed: int = 0

    def __post_init__(self):
        if self.n_asd < 1 or self.n_control < 1:
            raise ValueError("participant counts must be >= 1")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")


def load_cohort_spec(path, seed: int) -> CohortSpec:
    """Build a CohortSpec from a YAML override file; any omitted key keeps
    its default."""
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: spec must be a mapping")
    kwargs = {"seed": seed}
    for key in ("n_asd", "n_control", "sample_rate_hz"):
        if key in data:
            kwargs[key] = data[key]
    if "videos" in data:
        kwargs["videos"] = tuple(
            VideoMeta(
                str(v["id"]), float(v["duration_s"]), float(v["fps"]),
                int(v["width_px"]), int(v["height_px"]),
            )
            for v in data["videos"]
        )
    for key, default in (("asd_params", DEFAULT_ASD_PARAMS), ("control_params", DEFAULT_CONTROL_PARAMS)):
        if key in data:
            merged = dataclasses.asdict(default)
            merged.update(data[key])
            kwargs[key] = GroupParams(**merged)
    try:
        return CohortSpec(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: bad cohort spec: {e}") from e


def generate_aoi_path(meta: VideoMeta, rng: np.random.Generator) -> AoiTrack:
    """One object moving along a piecewise-linear path, present in 2-4
    contiguous occurrences that together cover >= 60% of frames."""
    n = meta.n_frames
    n_occ = int(rng.integers(2, 5))
    coverage = float(rng.uniform(0.65, 0.85))
    covered = max(n_occ, int(round(coverage * n)))
    # split covered frames into n_occ spans, uncovered into interior gaps
    cuts = np.sort(rng.choice(np.arange(1, covered), size=n_occ - 1, replace=False))
    span_lens = np.diff(np.concatenate(([0], cuts, [covered])))
    uncovered = n - covered
    n_gaps = n_occ + 1
    gap_weights = rng.dirichlet(np.ones(n_gaps))
    gap_lens = np.floor(gap_weights * uncovered).astype(int)
    # interior gaps must be >= 1 so occurrences stay maximal
    for g in range(1, n_gaps - 1):
        if gap_lens[g] == 0:
            gap_lens[g] = 1
    while gap_lens.sum() > uncovered:
        k = int(np.argmax(gap_lens))
        gap_lens[k] -= 1
    gap_lens[0] += uncovered - gap_lens.sum()

    lo, hi = AOI_BOX_HALF + 0.02, 1.0 - AOI_BOX_HALF - 0.02
    boxes = []
    frame = int(gap_lens[0])
    for k in range(n_occ):
        length = int(span_lens[k])
        # waypoints roughly every second, linear interpolation between them
        n_way = max(2, int(round(length / meta.fps)) + 1)
        way_x = rng.uniform(lo, hi, size=n_way)
        way_y = rng.uniform(lo, hi, size=n_way)
        t = np.linspace(0.0, n_way - 1.0, length)
        cx = np.interp(t, np.arange(n_way), way_x)
        cy = np.interp(t, np.arange(n_way), way_y)
        for j in range(length):
            f = frame + j
            if f >= n:
                break
            boxes.append(
                AoiBox(
                    "object_0",
                    f,
                    round(cx[j] - AOI_BOX_HALF, 6),
                    round(cy[j] - AOI_BOX_HALF, 6),
                    round(cx[j] + AOI_BOX_HALF, 6),
                    round(cy[j] + AOI_BOX_HALF, 6),
                )
            )
        frame += length + int(gap_lens[k + 1])
    return AoiTrack(video_id=meta.video_id, boxes=tuple(boxes))


class _AoiLookup:
    """Per-frame center/occurrence info for the generator."""

    def __init__(self, track: AoiTrack, meta: VideoMeta):
        n = meta.n_frames
        self.present = np.zeros(n, dtype=bool)
        self.cx = np.zeros(n)
        self.cy = np.zeros(n)
        self.occ_start = np.full(n, -1, dtype=int)  # enter frame of the covering occurrence
        for b in track.boxes:
            self.present[b.frame_index] = True
            self.cx[b.frame_index], self.cy[b.frame_index] = b.center
        start = -1
        for f in range(n):
            if self.present[f]:
                if start < 0:
                    start = f
                self.occ_start[f] = start
            else:
                start = -1


def generate_trace_rows(
    params: GroupParams,
    meta: VideoMeta,
    aoi: AoiTrack,
    rng: np.random.Generator,
    sample_rate_hz: float,
) -> list[tuple[float, float, float, float, int]]:
    """Simulate one viewing session.

    Returns rows (wall_s, video_s, x, y, valid) in normalized coordinates.
    Alternates fixations and saccades; look-away runs produce invalid
    samples, and the video pauses once the gaze has been off screen for
    more than 500 ms (video time freezes until the gaze returns).
    """
    dt = 1.0 / sample_rate_hz
    lookup = _AoiLookup(aoi, meta)
    # one first-look latency per occurrence
    latencies = {}
    for f in range(meta.n_frames):
        s = lookup.occ_start[f]
        if s >= 0 and s not in latencies:
            latencies[s] = max(0.0, float(rng.normal(params.latency_mean_s, params.latency_sd_s)))

    rows = []
    wall = 0.0
    video = 0.0
    pos = np.array([0.5, 0.5])
    if params.offscreen_rate_hz > 0:
        next_off = float(rng.exponential(1.0 / params.offscreen_rate_hz))
    else:
        next_off = np.inf

    def frame_at(v):
        return min(int(v * meta.fps), meta.n_frames - 1)

    while video < meta.duration_s - 1e-9:
        if wall >= next_off:
            # look-away run: samples invalid; video freezes after 500 ms
            off_dur = float(rng.uniform(0.6, 1.5))
            elapsed = 0.0
            while elapsed < off_dur and video < meta.duration_s - 1e-9:
                rows.append((wall, video, -0.1, -0.1, 0))
                wall += dt
                elapsed += dt
                if elapsed <= 0.5:
                    video = min(video + dt, meta.duration_s)
            next_off = wall + float(rng.exponential(1.0 / params.offscreen_rate_hz))
            continue

        # choose the next fixation target
        f = frame_at(video)
        attend = False
        if lookup.present[f]:
            enter = lookup.occ_start[f]
            if video >= enter / meta.fps + latencies[enter]:
                attend = rng.random() < params.p_attend
        if attend:
            target = np.array([lookup.cx[f], lookup.cy[f]])
            fix_dur = float(rng.exponential(params.fix_dur_aoi_mean_s))
        else:
            target = rng.uniform(0.05, 0.95, size=2)
            fix_dur = float(rng.exponential(params.fix_dur_bg_mean_s))
        fix_dur = min(max(fix_dur, 0.08), 2.0)

        # saccade: linear sweep from the previous position
        n_sac = max(1, int(round(params.saccade_dur_s / dt)))
        for k in range(1, n_sac + 1):
            if video >= meta.duration_s - 1e-9:
                break
            p = pos + (target - pos) * (k / n_sac)
            rows.append((wall, video, float(np.clip(p[0], 0, 1)), float(np.clip(p[1], 0, 1)), 1))
            wall += dt
            video = min(video + dt, meta.duration_s)
        pos = target

        # fixation: follow the (possibly moving) target with jitter
        elapsed = 0.0
        while elapsed < fix_dur and video < meta.duration_s - 1e-9:
            f = frame_at(video)
            if attend and lookup.present[f]:
                center = np.array([lookup.cx[f], lookup.cy[f]])
            else:
                center = target
            p = center + rng.normal(0.0, params.jitter_sd, size=2)
            rows.append((wall, video, float(np.clip(p[0], 0, 1)), float(np.clip(p[1], 0, 1)), 1))
            wall += dt
            video = min(video + dt, meta.duration_s)
            elapsed += dt
            pos = p
    return rows


def _sample_cars(n_asd: int, rng: np.random.Generator) -> list[int]:
    scores = [s for s, count in sorted(CARS_HISTOGRAM.items()) for _ in range(count)]
    if n_asd == len(scores):
        pool = scores
    else:
        probs = np.array([CARS_HISTOGRAM[s] for s in sorted(CARS_HISTOGRAM)], dtype=float)
        probs /= probs.sum()
        pool = list(rng.choice(sorted(CARS_HISTOGRAM), size=n_asd, p=probs))
    order = rng.permutation(n_asd)
    return [int(pool[i]) for i in order]


def build_participants(spec: CohortSpec) -> list[Participant]:
    rng = derive_rng(spec.seed, "cars")
    cars = _sample_cars(spec.n_asd, rng)
    out = [
        Participant(f"asd_{i:03d}", Group.ASD, cars[i]) for i in range(spec.n_asd)
    ]
    out += [Participant(f"ctl_{i:03d}", Group.CONTROL) for i in range(spec.n_control)]
    return out


def generate_cohort(spec: CohortSpec, out_dir) -> Path:
    """Write a complete dataset (manifest + logs + AOI tracks + resolved
    generator config) under ``out_dir``. Returns the manifest path."""
    out = Path(out_dir)
    try:
        (out / "logs").mkdir(parents=True, exist_ok=True)
        (out / "aoi").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoFailure(f"cannot create output directory {out}: {e}") from e

    participants = build_participants(spec)
    tracks = {}
    for meta in spec.videos:
        tracks[meta.video_id] = generate_aoi_path(meta, derive_rng(spec.seed, "aoi", meta.video_id))

    manifest = {
        "videos": [
            {
                "id": m.video_id,
                "duration_s": m.duration_s,
                "fps": m.fps,
                "width_px": m.width_px,
                "height_px": m.height_px,
            }
            for m in spec.videos
        ],
        "participants": [],
        "gaze_logs": {},
        "aoi_tracks": {},
    }

    try:
        for meta in spec.videos:
            rel = f"aoi/{meta.video_id}.csv"
            manifest["aoi_tracks"][meta.video_id] = rel
            with (out / rel).open("w", encoding="utf-8", newline="\n") as fh:
                fh.write("video_id,frame_index,object_id,x_min_px,y_min_px,x_max_px,y_max_px\n")
                for b in tracks[meta.video_id].boxes:
                    fh.write(
                        f"{meta.video_id},{b.frame_index},{b.object_id},"
                        f"{b.x_min * meta.width_px:.3f},{b.y_min * meta.height_px:.3f},"
                        f"{b.x_max * meta.width_px:.3f},{b.y_max * meta.height_px:.3f}\n"
                    )

        for p in participants:
            entry = {"id": p.participant_id, "group": p.group.value}
            if p.cars is not None:
                entry["cars"] = p.cars
            manifest["participants"].append(entry)
            base_params = spec.asd_params if p.group is Group.ASD else spec.control_params
            params = base_params.for_cars(p.cars)
            manifest["gaze_logs"][p.participant_id] = {}
            for meta in spec.videos:
                rel = f"logs/{p.participant_id}__{meta.video_id}.csv"
                manifest["gaze_logs"][p.participant_id][meta.video_id] = rel
                rng = derive_rng(spec.seed, "trace", p.participant_id, meta.video_id)
                rows = generate_trace_rows(params, meta, tracks[meta.video_id], rng, spec.sample_rate_hz)
                with (out / rel).open("w", encoding="utf-8", newline="\n") as fh:
                    fh.write("participant_id,video_id,wall_ts_ms,video_ts_ms,x_px,y_px,valid\n")
                    for wall, video, x, y, valid in rows:
                        fh.write(
                            f"{p.participant_id},{meta.video_id},"
                            f"{wall * 1000.0:.3f},{video * 1000.0:.3f},"
                            f"{x * meta.width_px:.2f},{y * meta.height_px:.2f},{valid}\n"
                        )

        manifest_path = out / "manifest.yaml"
        manifest_path.write_text(
            yaml.safe_dump(manifest, sort_keys=False), encoding="utf-8"
        )
        config = {
            "seed": spec.seed,
            "n_asd": spec.n_asd,
            "n_control": spec.n_control,
            "sample_rate_hz": spec.sample_rate_hz,
            "asd_params": dataclasses.asdict(spec.asd_params),
            "control_params": dataclasses.asdict(spec.control_params),
        }
        (out / "generator_config.yaml").write_text(
            yaml.safe_dump(config, sort_keys=False), encoding="utf-8"
        )
    except OSError as e:
        raise IoFailure(f"failed writing dataset under {out}: {e}") from e
    return manifest_path
