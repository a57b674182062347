from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..tensor.core import UsageError


class KnnResult(NamedTuple):
    labels: np.ndarray
    scores: np.ndarray  # fraction of genuine neighbours


def knn_predict(train_x: np.ndarray, train_y: np.ndarray, query: np.ndarray, k: int = 5, chunk: int = 256) -> KnnResult:
    """Euclidean k-nearest-neighbour vote.

    Ties in distance go to the lower training index. The predicted label is
    the majority; an even split goes to genuine only when the genuine count
    strictly exceeds half, so a 2-2 vote (k=4) is called synthesized.
    """
    if len(train_x) == 0:
        raise UsageError("KNN needs a non-empty training set")
    train_x = np.asarray(train_x, dtype=np.float64).reshape(len(train_x), -1)
    train_y = np.asarray(train_y, dtype=np.int64)
    query = np.asarray(query, dtype=np.float64).reshape(len(query), -1)
    if not 1 <= k <= train_x.shape[0]:
        raise UsageError(f"k={k} must be between 1 and the training size {train_x.shape[0]}")
    sq_train = (train_x * train_x).sum(axis=1)
    scores = np.empty(query.shape[0])
    for lo in range(0, query.shape[0], chunk):
        q = query[lo : lo + chunk]
        d2 = (q * q).sum(axis=1)[:, None] - 2 * q @ train_x.T + sq_train[None, :]
        # stable sort keeps the lower index first among equal distances
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        scores[lo : lo + chunk] = train_y[nearest].mean(axis=1)
    labels = (scores > 0.5).astype(np.int64)
    return KnnResult(labels, scores)


def knn_bruteforce(train_x, train_y, q, k: int = 5) -> tuple[int, float]:
    """Exhaustive per-point scan; the reference for :func:`knn_predict`."""
    dists = []
    for i, t in enumerate(np.asarray(train_x, dtype=np.float64).reshape(len(train_x), -1)):
        diff = t - np.asarray(q, dtype=np.float64).reshape(-1)
        dists.append((float(np.sqrt(diff @ diff)), i))
    dists.sort()
    votes = [int(train_y[i]) for _, i in dists[:k]]
    score = sum(votes) / k
    return int(score > 0.5), score
