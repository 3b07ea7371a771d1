"""k-nearest-neighbor classification under the self-encoder ranking or Euclidean distance.

Both classifiers take a majority vote over the k neighbors.  A tied vote goes
to the class with the stronger summed affinity (higher summed probability for
the self-encoder, lower summed squared distance for Euclidean), then to the
smaller class id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import SelfEncoderModel, rank_batch
from .linalg import ShapeError, as_matrix

DEFAULT_K = 5


@dataclass(frozen=True)
class LabeledNeighbors:
    k: int
    indices: np.ndarray
    labels: np.ndarray
    tally: dict[int, int]


def vote(labels, affinity) -> int:
    """Majority label; ties by larger summed ``affinity`` within each class, then smaller class id."""
    labels = np.asarray(labels)
    affinity = np.asarray(affinity, dtype=np.float64)
    classes, counts = np.unique(labels, return_counts=True)
    tied = classes[counts == counts.max()]
    if len(tied) == 1:
        return int(tied[0])
    sums = np.array([affinity[labels == c].sum() for c in tied])
    return int(tied[np.flatnonzero(sums == sums.max())[0]])


def _check_k(k: int, n: int) -> None:
    if not 1 <= k <= n:
        raise ValueError(f"k must be between 1 and {n}, got {k}")


def _anchor_labels(model: SelfEncoderModel, train_labels) -> np.ndarray:
    train_labels = np.asarray(train_labels)
    if model.anchor_indices.max() >= len(train_labels):
        raise IndexError(f"labels cover {len(train_labels)} rows but anchors reach index {model.anchor_indices.max()}")
    return train_labels


def se_neighbors(model: SelfEncoderModel, train_labels, x, k: int = DEFAULT_K) -> LabeledNeighbors:
    _check_k(k, model.n_anchors)
    labels = _anchor_labels(model, train_labels)
    idx, _ = rank_batch(model, np.asarray(x, dtype=np.float64).reshape(1, -1))
    top = idx[0, :k]
    lab = labels[top]
    classes, counts = np.unique(lab, return_counts=True)
    return LabeledNeighbors(k, top, lab, {int(c): int(n) for c, n in zip(classes, counts)})


def se_knn_predict_batch(model: SelfEncoderModel, train_labels, x, k: int = DEFAULT_K) -> np.ndarray:
    _check_k(k, model.n_anchors)
    labels = _anchor_labels(model, train_labels)
    x = as_matrix(x, "queries")
    idx, probs = rank_batch(model, x)
    return np.array([vote(labels[idx[r, :k]], probs[r, :k]) for r in range(x.shape[0])], dtype=np.intp)


def se_knn_predict(model: SelfEncoderModel, train_labels, x, k: int = DEFAULT_K) -> int:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return int(se_knn_predict_batch(model, train_labels, x, k)[0])


def squared_distances(x_train, x) -> np.ndarray:
    """Squared Euclidean distances, one row per query and one column per training row."""
    x_train = as_matrix(x_train, "training data")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != x_train.shape[1]:
        raise ShapeError(f"query dimension {x.shape[1]} != training dimension {x_train.shape[1]}")
    # explicit differences rather than the |a|^2 - 2ab + |b|^2 expansion, which loses exact ties
    return ((x[:, None, :] - x_train[None, :, :]) ** 2).sum(axis=2)


def euclidean_order(x_train, x) -> tuple[np.ndarray, np.ndarray]:
    d2 = squared_distances(x_train, x)
    order = np.argsort(d2, axis=1, kind="stable")
    return order, np.take_along_axis(d2, order, axis=1)


def euclidean_knn_predict_batch(x_train, train_labels, x, k: int = DEFAULT_K) -> np.ndarray:
    x_train = as_matrix(x_train, "training data")
    train_labels = np.asarray(train_labels)
    if len(train_labels) != x_train.shape[0]:
        raise ShapeError(f"{x_train.shape[0]} training rows but {len(train_labels)} labels")
    _check_k(k, x_train.shape[0])
    preds = []
    # chunk queries to bound the (queries, train, dim) difference tensor
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    for start in range(0, x.shape[0], 256):
        order, d2 = euclidean_order(x_train, x[start : start + 256])
        for r in range(order.shape[0]):
            preds.append(vote(train_labels[order[r, :k]], -d2[r, :k]))
    return np.array(preds, dtype=np.intp)


def euclidean_knn_predict(x_train, train_labels, x, k: int = DEFAULT_K) -> int:
    return int(euclidean_knn_predict_batch(x_train, train_labels, np.asarray(x).reshape(1, -1), k)[0])


def nearest_sets(x_train, x) -> np.ndarray:
    """All training row indices at the minimum Euclidean distance from ``x``, ascending."""
    d2 = squared_distances(x_train, np.asarray(x, dtype=np.float64).reshape(1, -1))[0]
    return np.flatnonzero(d2 == d2.min())
