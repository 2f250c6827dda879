"""k-nearest-neighbour regression on raw pixels, optionally partitioned by head pose."""
from __future__ import annotations

import numpy as np

from ..errors import EmptyTrainingSet, ShapeMismatch


def kmeans(points: np.ndarray, n_clusters: int, seed: int = 0, max_iter: int = 100):
    """Lloyd's algorithm with k-means++ seeding.

    Returns (centroids, assignments). Empty clusters keep their previous
    centroid. Ties in assignment go to the lowest centroid index.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    n_clusters = min(n_clusters, n)
    rng = np.random.default_rng(seed)
    centroids = [points[rng.integers(n)]]
    for _ in range(1, n_clusters):
        d2 = np.min(((points[:, None, :] - np.array(centroids)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        if total == 0.0:
            centroids.append(points[rng.integers(n)])
        else:
            centroids.append(points[rng.choice(n, p=d2 / total)])
    centroids = np.array(centroids)
    assign = np.full(n, -1)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centroids[None]) ** 2).sum(-1)
        new = np.argmin(d2, axis=1)
        if np.array_equal(new, assign):
            break
        assign = new
        for c in range(n_clusters):
            members = points[assign == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    return centroids, assign


class KnnModel:
    """Stores the training set; prediction averages the k nearest gaze labels.

    Distances are exact squared L2 over integer pixel values. Neighbours are
    ranked by (distance, yaw, pitch) so equal-distance ties resolve the same
    way regardless of training-set order, and the average is taken in that
    order.
    """

    kind = "knn"

    def __init__(self, pixels, g, h, k=5, centroids=None, assign=None):
        self.pixels = np.asarray(pixels, dtype=np.float64)
        self.g = np.asarray(g, dtype=float)
        self.h = np.asarray(h, dtype=float)
        self.k = int(k)
        self.centroids = None if centroids is None else np.asarray(centroids, dtype=float)
        self.assign = None if assign is None else np.asarray(assign, dtype=np.int64)
        self._sq = np.einsum("ij,ij->i", self.pixels, self.pixels)

    @property
    def shape_flat(self) -> int:
        return self.pixels.shape[1]

    def predict(self, patches: np.ndarray, h: np.ndarray) -> np.ndarray:
        patches = np.asarray(patches)
        q = patches.reshape(len(patches), -1).astype(np.float64)
        if q.shape[1] != self.shape_flat:
            raise ShapeMismatch(f"query has {q.shape[1]} pixels, model expects {self.shape_flat}")
        h = np.asarray(h, dtype=float).reshape(len(q), -1)
        out = np.empty((len(q), 2))
        groups: dict[int, list[int]] = {}
        if self.centroids is None:
            groups[-1] = list(range(len(q)))
        else:
            d = ((h[:, None, :] - self.centroids[None]) ** 2).sum(-1)
            for i, c in enumerate(np.argmin(d, axis=1)):
                groups.setdefault(int(c), []).append(i)
        for c, rows in groups.items():
            cand = np.arange(len(self.pixels)) if c < 0 else np.flatnonzero(self.assign == c)
            qs = q[rows]
            # exact: integer-valued operands well below 2**53
            d2 = self._sq[cand][None, :] + np.einsum("ij,ij->i", qs, qs)[:, None] - 2.0 * (
                qs @ self.pixels[cand].T
            )
            gc = self.g[cand]
            kk = min(self.k, len(cand))
            for r, row in enumerate(rows):
                order = np.lexsort((gc[:, 1], gc[:, 0], d2[r]))[:kk]
                out[row] = gc[order].mean(axis=0)
        return out

    def state(self):
        meta = {"k": self.k, "clustered": int(self.centroids is not None)}
        tensors = {"pixels": self.pixels, "g": self.g, "h": self.h}
        if self.centroids is not None:
            tensors["centroids"] = self.centroids
            tensors["assign"] = self.assign.astype(np.float64)
        return meta, tensors

    @classmethod
    def from_state(cls, meta, tensors):
        clustered = int(meta["clustered"])
        return cls(
            tensors["pixels"], tensors["g"], tensors["h"], k=int(meta["k"]),
            centroids=tensors["centroids"] if clustered else None,
            assign=tensors["assign"].astype(np.int64) if clustered else None,
        )  # fmt: skip


def knn_fit(patches, h, g, k: int = 5, clusters: int | None = None, seed: int = 0) -> KnnModel:
    """Index the training set; ``clusters`` partitions it by k-means over ``h``."""
    patches = np.asarray(patches)
    if len(patches) == 0:
        raise EmptyTrainingSet("no training samples")
    if k < 1:
        raise ValueError("k must be >= 1")
    pixels = patches.reshape(len(patches), -1)
    h = np.asarray(h, dtype=float).reshape(len(patches), -1)
    centroids = assign = None
    if clusters is not None:
        centroids, assign = kmeans(h, clusters, seed=seed)
    return KnnModel(pixels, g, h, k=k, centroids=centroids, assign=assign)


def knn_predict(model: KnnModel, patches, h) -> np.ndarray:
    return model.predict(patches, h)
