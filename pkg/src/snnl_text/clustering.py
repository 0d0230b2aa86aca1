"""k-means (k-means++ seeding, Lloyd iterations) and eigendecomposition PCA."""

import csv
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_float_matrix, check_positive_int, check_random_state


@dataclass(frozen=True)
class ClusterResult:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    iterations: int
    inertia_history: list = field(default_factory=list)


def _sq_distances(X, centroids):
    out = np.empty((X.shape[0], centroids.shape[0]))
    for j, c in enumerate(centroids):
        diff = X - c
        out[:, j] = np.einsum("ij,ij->i", diff, diff)
    return out


def kmeans_plusplus(X, k, rng):
    """D^2-weighted seeding. Falls back to uniform picks among unused rows
    once every remaining row coincides with a chosen center."""
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_distances(X, X[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            unused = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(unused))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_distances(X, X[idx : idx + 1])[:, 0])
    return X[chosen].copy()


def _assign(X, centroids):
    d2 = _sq_distances(X, centroids)
    labels = d2.argmin(axis=1)
    k = centroids.shape[0]
    counts = np.bincount(labels, minlength=k)
    for empty in np.flatnonzero(counts == 0):
        # steal the worst-fit point from a cluster that can spare one
        own = d2[np.arange(X.shape[0]), labels]
        donors = counts[labels] > 1
        candidate = np.where(donors, own, -1.0)
        i = int(candidate.argmax())
        counts[labels[i]] -= 1
        labels[i] = empty
        counts[empty] = 1
        centroids[empty] = X[i]
        d2[:, empty] = _sq_distances(X, X[i : i + 1])[:, 0]
    inertia = float(d2[np.arange(X.shape[0]), labels].sum())
    return labels, inertia


def _update(X, labels, k):
    centroids = np.zeros((k, X.shape[1]))
    np.add.at(centroids, labels, X)
    return centroids / np.bincount(labels, minlength=k)[:, None]


def kmeans(X, k, seed=None, tol=1e-4, max_iter=300, init=None):
    """Lloyd's algorithm from k-means++ seeds.

    Stops when the relative drop in inertia falls below ``tol`` or after
    ``max_iter`` iterations. ``init`` overrides the seeding with explicit
    starting centroids.
    """
    X = as_float_matrix(X)
    k = check_positive_int(k, "k")
    n = X.shape[0]
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    if init is None:
        centroids = kmeans_plusplus(X, k, check_random_state(seed))
    else:
        centroids = np.array(init, dtype=np.float64)
        if centroids.shape != (k, X.shape[1]):
            raise ValueError(f"init must have shape {(k, X.shape[1])}")
    labels, inertia = _assign(X, centroids)
    history = [inertia]
    iterations = 0
    for iterations in range(1, max_iter + 1):
        centroids = _update(X, labels, k)
        labels, inertia = _assign(X, centroids)
        prev = history[-1]
        history.append(inertia)
        if prev - inertia <= tol * prev:
            break
    centroids = _update(X, labels, k)
    diff = X - centroids[labels]
    inertia = float(np.einsum("ij,ij->", diff, diff))
    if inertia < history[-1]:
        history.append(inertia)
    return ClusterResult(centroids, labels, inertia, iterations, history)


def write_assignments_csv(path, assignments):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "assignment"])
        for i, a in enumerate(assignments):
            writer.writerow([i, int(a)])


class KMeans(ClusterMixin, BaseEstimator):
    def __init__(self, n_clusters=4, random_state=None, tol=1e-4, max_iter=300):
        self.n_clusters = n_clusters
        self.random_state = random_state
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        result = kmeans(X, self.n_clusters, self.random_state, self.tol, self.max_iter)
        self.cluster_centers_ = result.centroids
        self.labels_ = result.assignments
        self.inertia_ = result.inertia
        self.n_iter_ = result.iterations
        self.inertia_history_ = result.inertia_history
        self.n_features_in_ = result.centroids.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = as_float_matrix(X)
        return _sq_distances(X, self.cluster_centers_).argmin(axis=1)


@dataclass(frozen=True)
class PCABasis:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    def project(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T

    def reconstruct(self, Z):
        return np.asarray(Z) @ self.components + self.mean


def fit_pca(X, dims):
    X = as_float_matrix(X)
    n, m = X.shape
    dims = check_positive_int(dims, "dims")
    if dims > m:
        raise ValueError(f"dims={dims} exceeds the {m} input features")
    if n < 2:
        raise ValueError("PCA needs at least two samples")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (n - 1)
    values, vectors = np.linalg.eigh(cov)
    order = np.argsort(values)[::-1][:dims]
    components = vectors[:, order].T
    # make the largest-magnitude coordinate of each component positive
    pivot = np.abs(components).argmax(axis=1)
    signs = np.sign(components[np.arange(dims), pivot])
    components *= signs[:, None]
    return PCABasis(mean, components, np.maximum(values[order], 0.0))


def pca_project(X, dims):
    """Project ``X`` onto its top ``dims`` principal components.

    Returns ``(projected, basis)``.
    """
    basis = fit_pca(X, dims)
    return basis.project(X), basis


class PCA(TransformerMixin, BaseEstimator):
    def __init__(self, n_components=128):
        self.n_components = n_components

    def fit(self, X, y=None):
        basis = fit_pca(X, self.n_components)
        self.basis_ = basis
        self.mean_ = basis.mean
        self.components_ = basis.components
        self.explained_variance_ = basis.explained_variance
        self.n_features_in_ = basis.mean.shape[0]
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        return self.basis_.project(as_float_matrix(X))

    def inverse_transform(self, Z):
        check_is_fitted(self, "basis_")
        return self.basis_.reconstruct(Z)
