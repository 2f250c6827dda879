"""Appearance-based gaze estimation: head pose from facial landmarks, eye-image
normalization, gaze regressors and evaluation protocols, with a parametric
synthetic eye renderer for ground truth."""

__version__ = "0.1.0"
