"""Experiment protocols: repeated stratified k-fold classification,
the random-window duration simulation, and leave-one-out severity
regression.

Every protocol is deterministic given its config seed: per-repetition RNGs
are derived from (root seed, tags), so repetitions can run on a worker
pool in any order and still assemble into a bit-identical report.
"""
from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import FeatureMode, Group
from .errors import (
    AoiNeverInAnyWindow,
    DurationTooLong,
    GazeScreenError,
    MissingFeatures,
    TooFewParticipants,
    TooFewPerClass,
)
from .features import Window
from .learn import (
    LABEL_ASD,
    LABEL_CONTROL,
    MlpConfig,
    Standardizer,
    gamma_scale,
    mlp_predict,
    mlp_train,
    svm_predict,
    svm_train,
)
from .pipeline import Dataset, extract_features

# Accuracies and MAE reported by the original 60-participant human study.
# They are NOT reproducible from synthetic cohorts and are carried in
# reports purely for comparison.
HUMAN_STUDY_REFERENCE = {
    "with_aoi_per_video_accuracy": [0.9141, 0.9344, 0.9434, 0.9193],
    "with_aoi_concatenated_accuracy": 0.983,
    "no_aoi_per_video_accuracy": [0.9116, 0.9174, 0.8679, 0.9091],
    "no_aoi_concatenated_accuracy": 0.933,
    "with_aoi_15s_accuracy": 0.9575,
    "no_aoi_15s_accuracy": 0.925,
    "severity_mae": 2.03,
    "severity_mae_std": 1.37,
}


def derive_rng(root_seed: int, *tags) -> np.random.Generator:
    """Deterministic sub-stream keyed by the root seed and tags."""
    parts = [int(root_seed) & 0xFFFFFFFF]
    for t in tags:
        if isinstance(t, str):
            parts.append(zlib.crc32(t.encode("utf-8")))
        else:
            parts.append(int(t) & 0xFFFFFFFF)
    return np.random.default_rng(parts)


@dataclass
class CvConfig:
    seed: int
    folds: int = 3
    repetitions: int = 100
    mode: FeatureMode = FeatureMode.WITH_AOI
    video_selection: str = "all"  # a video id, or "all" for concatenation
    C: float = 1.0
    gamma: float | None = None  # None -> scale heuristic on the training fold
    coef0: float = 0.0
    svm_tol: float = 1e-3
    jobs: int = 1

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "folds": self.folds,
            "repetitions": self.repetitions,
            "mode": self.mode.value,
            "video_selection": self.video_selection,
            "C": self.C,
            "gamma": self.gamma,
            "coef0": self.coef0,
            "svm_tol": self.svm_tol,
        }


@dataclass
class ClassificationReport:
    config: dict
    fold_rows: list  # dicts: rep, fold, accuracy, n_test, tp, tn, fp, fn
    mean_accuracy: float
    std_accuracy: float
    sensitivity: float
    specificity: float
    reference: dict = field(default_factory=lambda: dict(HUMAN_STUDY_REFERENCE))

    def to_dict(self) -> dict:
        return {
            "kind": "classification_cv",
            "config": self.config,
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "n_fold_runs": len(self.fold_rows),
            "fold_rows": self.fold_rows,
            "reference": self.reference,
        }


@dataclass
class DurationReport:
    config: dict
    rows: list  # dicts: duration_s, mean_acc, std_acc, n_runs
    fold_rows: list
    reference: dict = field(default_factory=lambda: dict(HUMAN_STUDY_REFERENCE))

    def to_dict(self) -> dict:
        return {
            "kind": "duration_simulation",
            "config": self.config,
            "rows": self.rows,
            "reference": self.reference,
        }


@dataclass
class SeverityReport:
    config: dict
    rows: list  # dicts: participant_id, true_cars, predicted_cars, abs_err
    mae: float
    std_abs_err: float
    reference: dict = field(default_factory=lambda: dict(HUMAN_STUDY_REFERENCE))

    def to_dict(self) -> dict:
        return {
            "kind": "severity_loocv",
            "config": self.config,
            "mae": self.mae,
            "std_abs_err": self.std_abs_err,
            "rows": self.rows,
            "reference": self.reference,
        }


def stratified_folds(labels: list[int], folds: int, rng: np.random.Generator) -> np.ndarray:
    """Deal each class round-robin into folds after a seeded shuffle.

    Returns a fold index per position in ``labels``. Fold class counts
    deviate from exact proportionality by at most one per class.
    """
    labels = np.asarray(labels)
    assignment = np.full(len(labels), -1, dtype=int)
    start = 0  # rotate the deal between classes so leftovers spread out
    for cls in np.unique(labels):
        members = np.nonzero(labels == cls)[0]
        if len(members) < folds:
            raise TooFewPerClass(
                f"class {cls} has {len(members)} members, need >= {folds}"
            )
        members = members[rng.permutation(len(members))]
        for k, idx in enumerate(members):
            assignment[idx] = (start + k) % folds
        start = (start + len(members)) % folds
    return assignment


def _evaluate_folds(X, y, assignment, config: CvConfig, rng):
    """Fit and score each fold; returns one row per fold."""
    rows = []
    for fold in range(config.folds):
        test = assignment == fold
        train = ~test
        scaler = Standardizer().fit(X[train])
        Xtr = scaler.transform(X[train])
        Xte = scaler.transform(X[test])
        gamma = config.gamma if config.gamma is not None else gamma_scale(Xtr)
        model = svm_train(
            Xtr,
            y[train],
            C=config.C,
            gamma=gamma,
            coef0=config.coef0,
            tol=config.svm_tol,
            seed=int(rng.integers(2**31)),
        )
        tp = tn = fp = fn = 0
        for xi, yi in zip(Xte, y[test]):
            pred, _ = svm_predict(model, xi)
            if yi == LABEL_ASD:
                tp += pred == LABEL_ASD
                fn += pred != LABEL_ASD
            else:
                tn += pred == LABEL_CONTROL
                fp += pred != LABEL_CONTROL
        n_test = int(test.sum())
        rows.append(
            {
                "fold": fold,
                "accuracy": (tp + tn) / n_test,
                "n_test": n_test,
                "tp": int(tp),
                "tn": int(tn),
                "fp": int(fp),
                "fn": int(fn),
            }
        )
    return rows


def _feature_matrix(features: dict, groups: dict):
    pids = sorted(features)
    X = np.array([features[p].values for p in pids], dtype=float)
    y = np.array(
        [LABEL_ASD if groups[p] is Group.ASD else LABEL_CONTROL for p in pids]
    )
    return pids, X, y


def _map_reps(fn, reps: int, jobs: int):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, range(reps)))
    return [fn(r) for r in range(reps)]


def _summarize(fold_rows):
    accs = np.array([r["accuracy"] for r in fold_rows])
    tp = sum(r["tp"] for r in fold_rows)
    fn = sum(r["fn"] for r in fold_rows)
    tn = sum(r["tn"] for r in fold_rows)
    fp = sum(r["fp"] for r in fold_rows)
    return {
        "mean": float(accs.mean()),
        "std": float(accs.std()),
        "sensitivity": tp / (tp + fn) if tp + fn else float("nan"),
        "specificity": tn / (tn + fp) if tn + fp else float("nan"),
    }


def run_classification_cv(features: dict, groups: dict, config: CvConfig) -> ClassificationReport:
    """Repeated stratified k-fold CV of the SVM screening classifier.

    ``features`` maps participant_id -> FeatureVector (already matching
    config.video_selection); ``groups`` maps participant_id -> Group.
    """
    for pid in groups:
        if pid not in features:
            raise MissingFeatures(f"participant {pid} lacks a feature vector")
    pids, X, y = _feature_matrix(features, groups)

    def one_rep(rep):
        rng = derive_rng(config.seed, "cv", rep)
        assignment = stratified_folds(y, config.folds, rng)
        rows = _evaluate_folds(X, y, assignment, config, rng)
        for row in rows:
            row["rep"] = rep
        return rows

    fold_rows = [row for rows in _map_reps(one_rep, config.repetitions, config.jobs) for row in rows]
    s = _summarize(fold_rows)
    return ClassificationReport(
        config=config.to_dict(),
        fold_rows=fold_rows,
        mean_accuracy=s["mean"],
        std_accuracy=s["std"],
        sensitivity=s["sensitivity"],
        specificity=s["specificity"],
    )


def _draw_windows(dataset: Dataset, duration: float, mode: FeatureMode, rng, video_ids):
    """One shared window per video, redrawn (up to 100 times) until every
    participant's features are computable on it."""
    groups = {p.participant_id: p.group for p in dataset.manifest.participants}
    for _attempt in range(100):
        windows = {}
        for vid in video_ids:
            meta = dataset.manifest.video_meta(vid)
            start = float(rng.uniform(0.0, meta.duration_s - duration))
            windows[vid] = Window(start, duration)
        try:
            features = extract_features(dataset, mode, windows=windows, video_ids=video_ids)
        except GazeScreenError:
            continue
        return windows, features, groups
    raise AoiNeverInAnyWindow(
        f"no usable window of {duration}s found in 100 attempts"
    )


def run_duration_simulation(
    dataset: Dataset, durations: list[float], config: CvConfig
) -> DurationReport:
    """Accuracy as a function of observation time, on random shared
    windows (one window per video per repetition)."""
    video_ids = (
        list(dataset.video_order)
        if config.video_selection == "all"
        else [config.video_selection]
    )
    min_duration = min(dataset.manifest.video_meta(v).duration_s for v in video_ids)
    for d in durations:
        if d > min_duration:
            raise DurationTooLong(f"{d}s exceeds shortest video ({min_duration}s)")

    all_fold_rows = []
    curve = []
    for d_idx, d in enumerate(durations):

        def one_rep(rep, _d=d, _d_idx=d_idx):
            rng = derive_rng(config.seed, "duration", _d_idx, rep)
            windows, features, groups = _draw_windows(
                dataset, _d, config.mode, rng, video_ids
            )
            pids, X, y = _feature_matrix(features, groups)
            assignment = stratified_folds(y, config.folds, rng)
            rows = _evaluate_folds(X, y, assignment, config, rng)
            for row in rows:
                row["rep"] = rep
                row["duration_s"] = _d
            return rows

        fold_rows = [
            row for rows in _map_reps(one_rep, config.repetitions, config.jobs) for row in rows
        ]
        accs = np.array([r["accuracy"] for r in fold_rows])
        curve.append(
            {
                "duration_s": d,
                "mean_acc": float(accs.mean()),
                "std_acc": float(accs.std()),
                "n_runs": config.repetitions,
            }
        )
        all_fold_rows.extend(fold_rows)
    cfg = config.to_dict()
    cfg["durations"] = list(durations)
    return DurationReport(config=cfg, rows=curve, fold_rows=all_fold_rows)


def run_severity_loocv(
    features: dict, cars: dict, config: CvConfig, mlp_config: MlpConfig | None = None
) -> SeverityReport:
    """Leave-one-out CARS regression over scored (ASD) participants."""
    pids = sorted(p for p in cars if cars[p] is not None)
    if len(pids) < 3:
        raise TooFewParticipants(f"need >= 3 scored participants, have {len(pids)}")
    for pid in pids:
        if pid not in features:
            raise MissingFeatures(f"participant {pid} lacks a feature vector")
    X = np.array([features[p].values for p in pids], dtype=float)
    y = np.array([cars[p] for p in pids], dtype=float)
    rows = []
    for i, pid in enumerate(pids):
        train = np.arange(len(pids)) != i
        scaler = Standardizer().fit(X[train])
        # center the targets around the training mean; the regressor starts
        # from a near-zero output, so raw CARS magnitudes would dominate the
        # error budget before the optimizer ever sees the features
        y_center = float(y[train].mean())
        rng = derive_rng(config.seed, "loocv", i)
        model = mlp_train(
            scaler.transform(X[train]),
            y[train] - y_center,
            config=mlp_config,
            seed=int(rng.integers(2**31)),
        )
        pred = y_center + mlp_predict(model, scaler.transform(X[i]))
        rows.append(
            {
                "participant_id": pid,
                "true_cars": float(y[i]),
                "predicted_cars": pred,
                "abs_err": abs(pred - float(y[i])),
            }
        )
    errs = np.array([r["abs_err"] for r in rows])
    return SeverityReport(
        config=config.to_dict(),
        rows=rows,
        mae=float(errs.mean()),
        std_abs_err=float(errs.std()),
    )
