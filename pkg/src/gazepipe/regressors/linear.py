"""Ridge regression on pixels plus features, and the constant mean predictor."""
from __future__ import annotations

import numpy as np

from ..errors import EmptyTrainingSet, SingularSystem


def design_matrix(patches, feat) -> np.ndarray:
    patches = np.asarray(patches)
    n = len(patches)
    pix = patches.reshape(n, -1).astype(float) / 255.0
    return np.concatenate([pix, np.asarray(feat, dtype=float).reshape(n, -1)], axis=1)


class LinearModel:
    kind = "linear"

    def __init__(self, coef: np.ndarray, intercept: np.ndarray, ridge: float):
        self.coef = np.asarray(coef, dtype=float)
        self.intercept = np.asarray(intercept, dtype=float)
        self.ridge = float(ridge)

    def predict(self, patches, feat) -> np.ndarray:
        return design_matrix(patches, feat) @ self.coef + self.intercept

    def state(self):
        return {"ridge": repr(self.ridge)}, {"coef": self.coef, "intercept": self.intercept}

    @classmethod
    def from_state(cls, meta, tensors):
        return cls(tensors["coef"], tensors["intercept"], float(meta["ridge"]))


def linear_fit(patches, feat, g, ridge: float = 1.0) -> LinearModel:
    """Closed-form ridge with an unpenalised intercept.

    Solves (Xc^T Xc + ridge I) B = Xc^T Yc on centred data. With ``ridge`` = 0
    a rank-deficient design raises :class:`SingularSystem`.
    """
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    X = design_matrix(patches, feat)
    Y = np.asarray(g, dtype=float).reshape(len(X), -1)
    if len(X) == 0:
        raise EmptyTrainingSet("no training samples")
    xm, ym = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - xm, Y - ym
    d = X.shape[1]
    if ridge == 0.0:
        rank = np.linalg.matrix_rank(Xc)
        if rank < d:
            raise SingularSystem(f"design rank {rank} < {d} unknowns; use ridge > 0")
        coef, *_ = np.linalg.lstsq(Xc, Yc, rcond=None)
    else:
        A = Xc.T @ Xc
        A[np.diag_indices(d)] += ridge
        coef = np.linalg.solve(A, Xc.T @ Yc)
    return LinearModel(coef, ym - xm @ coef, ridge)


class MeanModel:
    """Always predicts the training-set mean gaze angles."""

    kind = "mean"

    def __init__(self, mean: np.ndarray):
        self.mean = np.asarray(mean, dtype=float).reshape(2)

    def predict(self, patches, feat=None) -> np.ndarray:
        return np.tile(self.mean, (len(patches), 1))

    def state(self):
        return {}, {"mean": self.mean}

    @classmethod
    def from_state(cls, meta, tensors):
        return cls(tensors["mean"])


def mean_predictor(g) -> MeanModel:
    g = np.asarray(g, dtype=float).reshape(-1, 2)
    if len(g) == 0:
        raise EmptyTrainingSet("no training samples")
    return MeanModel(g.mean(axis=0))
