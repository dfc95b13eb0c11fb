"""Embedding, clustering and evaluation of dissimilarity matrices."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import NumericalError

LINKAGES = ("single", "complete", "average")


@dataclass(frozen=True, eq=False)
class EmbeddingCoords:
    points: np.ndarray
    stress: float
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class ClusterLabels:
    """Cluster labels ``1..k`` numbered by order of first appearance."""

    labels: np.ndarray
    k: int
    method: str
    params: dict = field(default_factory=dict)
    wcss: float | None = None
    centres: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {"labels": self.labels.tolist(), "k": self.k, "method": self.method, "params": self.params}
        if self.wcss is not None:
            out["wcss"] = self.wcss
        return out


def canonical_labels(labels) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.empty(len(labels), dtype=np.int64)
    seen: dict = {}
    for i, l in enumerate(labels.tolist()):
        out[i] = seen.setdefault(l, len(seen) + 1)
    return out


def _check_matrix(D):
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {D.shape}")
    if not np.all(np.isfinite(D)):
        raise ValueError("matrix contains non-finite entries")
    if not np.allclose(D, D.T, rtol=0, atol=1e-12):
        raise ValueError("matrix is not symmetric")
    return D


# ---------------------------------------------------------------- embedding

def classical_mds(D, p: int = 2) -> np.ndarray:
    D = _check_matrix(D)
    n = len(D)
    J = np.eye(n) - 1.0 / n
    B = -0.5 * J @ (D * D) @ J
    w, V = np.linalg.eigh((B + B.T) / 2)
    idx = np.argsort(-w, kind="stable")[:p]
    X = V[:, idx] * np.sqrt(np.maximum(w[idx], 0.0))
    if X.shape[1] < p:
        X = np.hstack([X, np.zeros((n, p - X.shape[1]))])
    # fix the sign of each axis so the output is reproducible
    for j in range(p):
        col = X[:, j]
        k = int(np.argmax(np.abs(col)))
        if col[k] < 0:
            X[:, j] = -col
    return X


def _distances(X):
    diff = X[:, None, :] - X[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def kruskal_stress(D, X) -> float:
    D = np.asarray(D, dtype=float)
    iu = np.triu_indices(len(D), 1)
    d = _distances(X)[iu]
    den = np.sum(D[iu] ** 2)
    if den == 0:
        return float(np.sqrt(np.sum(d * d)))
    return float(np.sqrt(np.sum((d - D[iu]) ** 2) / den))


def mds(D, p: int = 2, max_iter: int = 300, eps: float = 1e-10) -> EmbeddingCoords:
    """Metric MDS: classical start refined by SMACOF.

    Returns points in ``R^p`` and Kruskal's stress-1.
    """
    D = _check_matrix(D)
    n = len(D)
    if p < 1:
        raise ValueError("p must be >= 1")
    if n >= 2 and p > n - 1:
        raise ValueError(f"p={p} exceeds n-1={n - 1}")
    if n < 2:
        return EmbeddingCoords(np.zeros((n, p)), 0.0)
    X = classical_mds(D, p)
    iu = np.triu_indices(n, 1)

    def raw(X):
        return float(np.sum((_distances(X)[iu] - D[iu]) ** 2))

    sigma = raw(X)
    it = 0
    for it in range(1, max_iter + 1):
        if sigma <= 0:
            break
        d = _distances(X)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(d > 0, D / d, 0.0)
        Bm = -ratio
        np.fill_diagonal(Bm, 0.0)
        np.fill_diagonal(Bm, -Bm.sum(axis=1))
        Xn = Bm @ X / n
        new = raw(Xn)
        if new > sigma:
            break
        X, done = Xn, sigma - new <= eps * max(sigma, 1e-300)
        sigma = new
        if done:
            break
    X = X - X.mean(axis=0)
    return EmbeddingCoords(X, kruskal_stress(D, X), it)


# ---------------------------------------------------------------- hierarchical

def hierarchical_cluster(D, k: int, linkage: str = "average") -> ClusterLabels:
    """Agglomerative clustering cut at ``k`` clusters.

    Lance-Williams updates; among equally close pairs the one with the
    lowest member indices merges first.
    """
    D = _check_matrix(D)
    n = len(D)
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}; choose from {LINKAGES}")
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must be between 1 and {n}")
    dist = D.copy()
    np.fill_diagonal(dist, np.inf)
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    member = np.arange(n)
    for _ in range(n - k):
        sub = np.where(active[:, None] & active[None, :], dist, np.inf)
        flat = int(np.argmin(sub))  # row-major order gives the lowest pair on ties
        i, j = divmod(flat, n)
        i, j = min(i, j), max(i, j)
        di, dj = dist[i], dist[j]
        if linkage == "single":
            new = np.minimum(di, dj)
        elif linkage == "complete":
            new = np.maximum(di, dj)
        else:
            new = (size[i] * di + size[j] * dj) / (size[i] + size[j])
        dist[i, :] = new
        dist[:, i] = new
        dist[i, i] = np.inf
        size[i] += size[j]
        active[j] = False
        member[member == j] = i
    return ClusterLabels(canonical_labels(member), k, "hierarchical", {"linkage": linkage})


# ---------------------------------------------------------------- k-means

def _kmeanspp(X, k, rng):
    n = len(X)
    centres = [X[rng.integers(n)]]
    d2 = np.sum((X - centres[0]) ** 2, axis=1)
    for _ in range(1, k):
        tot = d2.sum()
        if tot > 0:
            i = rng.choice(n, p=d2 / tot)
        else:
            i = rng.integers(n)
        centres.append(X[i])
        d2 = np.minimum(d2, np.sum((X - X[i]) ** 2, axis=1))
    return np.array(centres)


def lloyd(X, centres, max_iter: int = 300):
    """Lloyd iterations from ``centres``; returns labels, centres and the WCSS history."""
    X = np.asarray(X, dtype=float)
    C = np.array(centres, dtype=float)
    k = len(C)
    history = []
    labels = None
    for _ in range(max_iter):
        d2 = np.sum((X[:, None, :] - C[None, :, :]) ** 2, axis=2)
        new = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(X)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            pts = X[labels == c]
            if len(pts):
                C[c] = pts.mean(axis=0)
            else:
                # reseed an empty cluster at the worst-fit point
                far = int(np.argmax(d2[np.arange(len(X)), labels]))
                C[c] = X[far]
    d2 = np.sum((X[:, None, :] - C[None, :, :]) ** 2, axis=2)
    labels = np.argmin(d2, axis=1)
    return labels, C, history


def kmeans(X, k: int, replicates: int = 100, seed: int = 0, max_iter: int = 300) -> ClusterLabels:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = len(X)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must be between 1 and {n}")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(replicates):
        labels, C, _ = lloyd(X, _kmeanspp(X, k, rng), max_iter)
        wcss = float(np.sum((X - C[labels]) ** 2))
        if best is None or wcss < best[0]:
            best = (wcss, labels, C)
    wcss, labels, C = best
    _, first = np.unique(labels, return_index=True)
    order = labels[np.sort(first)]
    return ClusterLabels(canonical_labels(labels), k, "kmeans",
                         {"replicates": replicates, "seed": seed}, wcss, C[order])


# ---------------------------------------------------------------- evaluation

def pairwise_counts(labels, truth) -> tuple[int, int]:
    labels = np.asarray(labels)
    truth = np.asarray(truth)
    if labels.shape != truth.shape:
        raise ValueError(f"label vectors differ in length: {labels.shape} vs {truth.shape}")
    n = len(labels)
    if n < 2:
        raise ValueError("pairwise accuracy needs at least two items")
    iu = np.triu_indices(n, 1)
    same_l = labels[iu[0]] == labels[iu[1]]
    same_t = truth[iu[0]] == truth[iu[1]]
    return int(np.sum(same_l == same_t)), len(iu[0])


def pairwise_accuracy(labels, truth) -> float:
    """Fraction of unordered pairs on which same/different grouping agrees."""
    good, total = pairwise_counts(labels, truth)
    return good / total


def place_point(X, dist, x0=None, max_iter: int = 500, tol: float = 1e-12) -> np.ndarray:
    """Out-of-sample MDS placement of one point with target distances ``dist``."""
    X = np.asarray(X, dtype=float)
    dist = np.asarray(dist, dtype=float)
    x = X.mean(axis=0) if x0 is None else np.array(x0, dtype=float)
    m = len(X)
    for _ in range(max_iter):
        diff = x - X
        r = np.linalg.norm(diff, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = np.where(r[:, None] > 0, diff / r[:, None], 0.0)
        xn = (X + dist[:, None] * unit).sum(axis=0) / m
        if np.linalg.norm(xn - x) <= tol * (1 + np.linalg.norm(x)):
            x = xn
            break
        x = xn
    return x


@dataclass(frozen=True)
class LOOCVResult:
    accuracy: float
    fold_scores: tuple
    predicted: tuple


def loocv(D, truth, k: int, p: int = 2, replicates: int = 100, seed: int = 0) -> LOOCVResult:
    """Leave-one-out check of the MDS + k-means pipeline.

    Each fold embeds and clusters the remaining items, places the held-out
    item by stress majorization, assigns it to the nearest centroid, and
    scores the fraction of its pairs with the training items whose
    same/different relation matches the truth.
    """
    D = _check_matrix(D)
    truth = np.asarray(truth)
    n = len(D)
    if len(truth) != n:
        raise ValueError("truth labels do not match the matrix size")
    if n - 1 < k:
        raise ValueError(f"need at least k+1={k + 1} items for leave-one-out, got {n}")
    scores, preds = [], []
    for i in range(n):
        rest = np.delete(np.arange(n), i)
        emb = mds(D[np.ix_(rest, rest)], min(p, n - 2))
        cl = kmeans(emb.points, k, replicates, seed)
        if len(np.unique(cl.labels)) < k:
            raise NumericalError(f"fold {i}: a cluster vanished")
        x = place_point(emb.points, D[i, rest])
        d2 = np.sum((cl.centres - x) ** 2, axis=1)
        c = int(np.argmin(d2)) + 1
        same_pred = cl.labels == c
        same_true = truth[rest] == truth[i]
        scores.append(float(np.mean(same_pred == same_true)))
        preds.append(c)
    return LOOCVResult(float(np.mean(scores)), tuple(scores), tuple(preds))


# ---------------------------------------------------------------- baseline

def _normalise_config(P):
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] < 3:
        raise ValueError("landmark configuration needs at least 3 points")
    C = P - P.mean(axis=0)
    s = np.linalg.svd(C, compute_uv=False)
    if len(s) < 2 or s[1] <= 1e-12 * max(s[0], 1e-300):
        raise ValueError("landmark configuration is collinear")
    return C / np.linalg.norm(C)


def procrustes_distance(A, B) -> float:
    """Full Procrustes RMS residual between two landmark configurations.

    Both are centred and scaled to unit size; ``B`` is then fitted to ``A``
    by the optimal proper rotation and scale.
    """
    X = _normalise_config(A)
    Y = _normalise_config(B)
    if X.shape != Y.shape:
        raise ValueError(f"landmark configurations differ in shape: {X.shape} vs {Y.shape}")
    U, s, Vt = np.linalg.svd(Y.T @ X)
    if np.linalg.det(U @ Vt) < 0:
        s[-1] = -s[-1]
        U[:, -1] = -U[:, -1]
    # explicit residual; 1 - (sum s)^2 loses half the digits near zero
    R = U @ Vt
    res = X - s.sum() * Y @ R
    return float(np.sqrt(np.sum(res * res) / len(X)))


def procrustes_matrix(configs) -> np.ndarray:
    n = len(configs)
    D = np.zeros((n, n))
    for i, j in combinations(range(n), 2):
        D[i, j] = D[j, i] = procrustes_distance(configs[i], configs[j])
    return D
