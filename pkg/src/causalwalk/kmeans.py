"""Lloyd's K-Means with k-means++ seeding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["KMeansResult", "kmeans_plusplus", "kmeans"]


@dataclass
class KMeansResult:
    centers: np.ndarray
    labels: np.ndarray
    objective: float
    history: list[float]
    n_iter: int


def _sq_dist(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - C[None, :, :]
    return (diff * diff).sum(axis=2)


def kmeans_plusplus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    closest = _sq_dist(X, np.array(centers))[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers.append(X[idx])
        closest = np.minimum(closest, _sq_dist(X, X[idx : idx + 1])[:, 0])
    return np.array(centers)


def _lloyd(X, centers, max_iter, tol):
    history = []
    labels = np.zeros(len(X), dtype=int)
    for it in range(1, max_iter + 1):
        d = _sq_dist(X, centers)
        labels = d.argmin(axis=1)
        obj = float(d[np.arange(len(X)), labels].sum())
        history.append(obj)
        new = centers.copy()
        for c in range(len(centers)):
            members = X[labels == c]
            if len(members):
                new[c] = members.mean(axis=0)
        centers = new
        if len(history) > 1:
            prev = history[-2]
            if prev - obj <= tol * max(prev, np.finfo(float).tiny):
                break
    d = _sq_dist(X, centers)
    labels = d.argmin(axis=1)
    obj = float(d[np.arange(len(X)), labels].sum())
    history.append(obj)
    return centers, labels, obj, history, it


def kmeans(
    X: np.ndarray,
    k: int,
    seed: int | np.random.Generator = 0,
    max_iter: int = 100,
    tol: float = 1e-6,
    n_init: int = 10,
) -> KMeansResult:
    """Cluster rows of ``X`` into ``k`` groups; best of ``n_init`` seeded runs.

    Each run stops after ``max_iter`` Lloyd iterations or once the relative
    objective improvement drops below ``tol``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or len(X) < k or k < 1:
        raise ValueError(f"kmeans needs at least k={k} points, got {len(X)}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        init = kmeans_plusplus(X, k, rng)
        centers, labels, obj, history, n_iter = _lloyd(X, init, max_iter, tol)
        if best is None or obj < best.objective:
            best = KMeansResult(centers, labels, obj, history, n_iter)
    return best
