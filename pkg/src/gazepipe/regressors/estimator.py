"""Uniform fit/predict front end over the four regressors."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataset_io import SampleSet
from ..errors import EmptyTrainingSet, ValidationError
from ..imaging import resize_batch
from .cnn import CnnModel, train_cnn
from .knn import KnnModel, knn_fit
from .linear import LinearModel, MeanModel, linear_fit, mean_predictor
from .optim import TrainConfig

KINDS = ("cnn", "knn", "linear", "mean")
MODEL_CLASSES = {"cnn": CnnModel, "knn": KnnModel, "linear": LinearModel, "mean": MeanModel}


@dataclass(frozen=True)
class FeatureSpec:
    """Auxiliary vector fed next to the pixels: head angles and/or pupil centre."""

    use_head_pose: bool = True
    use_pupil: bool = False

    @property
    def dim(self) -> int:
        return 2 * int(self.use_head_pose) + 2 * int(self.use_pupil)


def build_features(samples: SampleSet, spec: FeatureSpec) -> np.ndarray:
    """(N, spec.dim) features; pupil positions scaled so the patch spans [-1, 1]."""
    cols = []
    if spec.use_head_pose:
        cols.append(samples.h)
    if spec.use_pupil:
        if np.any(np.isnan(samples.pupil)):
            raise ValidationError("pupil features requested but some samples lack pupil positions")
        hp, wp = samples.patches.shape[1:]
        half = np.array([(wp - 1) / 2.0, (hp - 1) / 2.0])
        cols.append((samples.pupil - half) / half)
    if not cols:
        return np.zeros((len(samples), 0))
    return np.concatenate(cols, axis=1)


@dataclass
class EstimatorConfig:
    kind: str = "cnn"
    features: FeatureSpec = field(default_factory=FeatureSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    k: int = 5
    clusters: int | None = 8
    ridge: float = 1.0
    width: int | None = None  # training resolution; None keeps the archive's
    height: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown estimator {self.kind!r}; expected one of {KINDS}")

    def echo(self) -> dict[str, str]:
        """Flat key/value view for run-config files and checkpoint headers."""
        out = {
            "kind": self.kind,
            "use_head_pose": str(int(self.features.use_head_pose)),
            "use_pupil": str(int(self.features.use_pupil)),
            "k": str(self.k),
            "clusters": "none" if self.clusters is None else str(self.clusters),
            "ridge": repr(self.ridge),
            "width": "native" if self.width is None else str(self.width),
            "height": "native" if self.height is None else str(self.height),
        }
        for name, value in vars(self.train).items():
            out[f"train.{name}"] = repr(value) if isinstance(value, float) else str(value)
        return out


@dataclass
class Estimator:
    """A fitted model plus what is needed to turn samples into its inputs."""

    model: CnnModel | KnnModel | LinearModel | MeanModel
    features: FeatureSpec
    width: int
    height: int
    trace: np.ndarray | None = None

    @property
    def kind(self) -> str:
        return self.model.kind

    def inputs(self, samples: SampleSet) -> tuple[np.ndarray, np.ndarray]:
        patches = samples.patches
        if patches.shape[1:] != (self.height, self.width):
            patches = resize_batch(patches, self.width, self.height)
        return patches, build_features(samples, self.features)

    def predict(self, samples: SampleSet) -> np.ndarray:
        """Predicted (yaw, pitch) radians, one row per sample."""
        if len(samples) == 0:
            return np.zeros((0, 2))
        patches, feat = self.inputs(samples)
        if self.kind == "knn":
            return self.model.predict(patches, samples.h)
        return self.model.predict(patches, feat)


def fit_estimator(samples: SampleSet, config: EstimatorConfig) -> Estimator:
    if len(samples) == 0:
        raise EmptyTrainingSet("no training samples")
    hp, wp = samples.patches.shape[1:]
    width, height = config.width or wp, config.height or hp
    est = Estimator(None, config.features, width, height)  # type: ignore[arg-type]
    patches, feat = est.inputs(samples)
    if config.kind == "cnn":
        est.model, est.trace = train_cnn(patches, feat, samples.g, config.train)
    elif config.kind == "knn":
        clusters = config.clusters if config.features.use_head_pose else None
        est.model = knn_fit(patches, samples.h, samples.g, k=config.k, clusters=clusters,
                            seed=config.train.seed)  # fmt: skip
    elif config.kind == "linear":
        est.model = linear_fit(patches, feat, samples.g, ridge=config.ridge)
    else:
        est.model = mean_predictor(samples.g)
    return est
