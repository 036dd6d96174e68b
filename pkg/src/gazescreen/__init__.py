"""Gaze-analytics screening pipeline: gaze features over annotated videos,
kernel-SVM classification, MLP severity regression, and reproducible
experiment harnesses with a synthetic cohort generator."""

__version__ = "0.1.0"
