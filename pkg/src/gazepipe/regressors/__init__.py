"""Gaze regressors: CNN, kNN, ridge and mean baselines."""
from .checkpoint import load_estimator, save_estimator
from .cnn import CnnArchitecture, CnnModel, cnn_forward, cnn_gradients, train_cnn
from .estimator import Estimator, EstimatorConfig, FeatureSpec, build_features, fit_estimator
from .knn import KnnModel, kmeans, knn_fit, knn_predict
from .linear import LinearModel, MeanModel, linear_fit, mean_predictor
from .optim import AdamState, TrainConfig, adam_step, learning_rate_at

__all__ = [
    "AdamState", "CnnArchitecture", "CnnModel", "Estimator", "EstimatorConfig", "FeatureSpec",
    "KnnModel", "LinearModel", "MeanModel", "TrainConfig", "adam_step", "build_features",
    "cnn_forward", "cnn_gradients", "fit_estimator", "kmeans", "knn_fit", "knn_predict",
    "learning_rate_at", "linear_fit", "load_estimator", "mean_predictor", "save_estimator",
    "train_cnn",
]  # fmt: skip
