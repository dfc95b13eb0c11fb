"""Combined shape index and dissimilarity matrices."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .curvature import CurvatureField, normalize_field
from .errors import MeshError, NumericalError
from .register import RegistrationResult

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class IndexWeights:
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        w = (self.alpha, self.beta, self.gamma)
        if min(w) < 0:
            raise ValueError(f"weights must be non-negative, got {w}")
        if abs(sum(w) - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights must sum to 1, got {sum(w)!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma])


@dataclass(frozen=True, eq=False)
class ShapeFields:
    """Symmetric-range normalised mean and Gaussian curvature of one surface."""

    H: np.ndarray
    K: np.ndarray

    @classmethod
    def from_curvature(cls, field: CurvatureField, clip_percentile=None) -> "ShapeFields":
        return cls(
            normalize_field(field.mean, "symmetric", clip_percentile).values,
            normalize_field(field.gaussian, "symmetric", clip_percentile).values,
        )


def shape_index_components(reg: RegistrationResult, fields1: ShapeFields, fields2: ShapeFields) -> np.ndarray:
    """Area-averaged ``|mu|``, ``|dH|/2`` and ``|dK|/2`` over Omega1.

    The combined index for weights ``w`` is ``w . components``. Target fields
    are pulled back to the source vertices through the barycentric
    correspondence; per-face values average the three corner differences.
    """
    mesh1 = reg.h.domain.mesh
    mesh2 = reg.target.mesh
    om = reg.omega1
    if not om.any():
        raise NumericalError("empty common region")
    f1 = mesh1.faces[om]
    area = mesh1.face_areas[om]
    total = area.sum()
    used = np.unique(f1)
    cf, cb = reg.corr_face, reg.corr_bary
    if np.any(cf[used] < 0):
        raise NumericalError("common-region vertex without correspondence")

    def pulled(values):
        out = np.zeros(mesh1.n_vertices)
        out[used] = np.einsum("ij,ij->i", cb[used], values[mesh2.faces[cf[used]]])
        return out

    dH = np.abs(fields1.H - pulled(fields2.H))
    dK = np.abs(fields1.K - pulled(fields2.K))
    mu = reg.mu_abs[om]
    comps = np.array([
        np.sum(area * mu),
        np.sum(area * dH[f1].mean(axis=1)) / 2,
        np.sum(area * dK[f1].mean(axis=1)) / 2,
    ]) / total
    return comps


def _fields(f) -> ShapeFields:
    return ShapeFields.from_curvature(f) if isinstance(f, CurvatureField) else f


def shape_index_delta(reg: RegistrationResult, curv1, curv2, w: IndexWeights) -> float:
    """Combined shape index of a registration.

    ``curv1`` and ``curv2`` are either raw :class:`CurvatureField` objects,
    normalised here to the symmetric range, or ready :class:`ShapeFields`.
    """
    return float(w.as_array() @ shape_index_components(reg, _fields(curv1), _fields(curv2)))


def dissimilarity(delta12: float, delta21: float) -> float:
    for d in (delta12, delta21):
        if not 0.0 <= d <= 1.0:
            raise ValueError(f"shape index {d!r} outside [0, 1]")
    return min(delta12, delta21)


@dataclass(frozen=True, eq=False)
class DissimilarityMatrix:
    D: np.ndarray
    ids: tuple
    weights: IndexWeights | None = None

    def __post_init__(self):
        D = np.array(self.D, dtype=float)
        n = len(self.ids)
        if D.shape != (n, n):
            raise MeshError(f"matrix shape {D.shape} does not match {n} ids")
        if not np.array_equal(D, D.T):
            raise ValueError("dissimilarity matrix is not symmetric")
        if np.any(np.diag(D) != 0):
            raise ValueError("dissimilarity matrix has a non-zero diagonal")
        if np.any(~np.isfinite(D)) or D.min(initial=0) < 0 or D.max(initial=0) > 1:
            raise ValueError("dissimilarities must lie in [0, 1]")
        D.setflags(write=False)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "ids", tuple(self.ids))

    @property
    def n(self) -> int:
        return len(self.ids)

    def subset(self, keep) -> "DissimilarityMatrix":
        keep = np.asarray(keep)
        return DissimilarityMatrix(self.D[np.ix_(keep, keep)], tuple(np.array(self.ids, dtype=object)[keep]), self.weights)

    def to_csv(self, path):
        write_matrix_csv(path, self.D, self.ids)

    @classmethod
    def from_csv(cls, path) -> "DissimilarityMatrix":
        ids, D = read_matrix_csv(path)
        return cls(D, ids)


def build_matrix(deltas, ids, w: IndexWeights | None = None) -> DissimilarityMatrix:
    """``D[i, j] = min(delta[i, j], delta[j, i])`` with a zero diagonal.

    ``deltas`` is an n x n table of ordered-pair shape indices; diagonal
    entries are ignored.
    """
    d = np.array(deltas, dtype=float)
    n = len(ids)
    if d.shape != (n, n):
        raise MeshError(f"delta table shape {d.shape} does not match {n} ids")
    off = ~np.eye(n, dtype=bool)
    if np.any(~np.isfinite(d[off])):
        raise MeshError("delta table has missing entries")
    if np.any((d[off] < 0) | (d[off] > 1)):
        bad = d[off][(d[off] < 0) | (d[off] > 1)][0]
        raise ValueError(f"shape index {bad!r} outside [0, 1]")
    D = np.minimum(d, d.T)
    np.fill_diagonal(D, 0.0)
    return DissimilarityMatrix(D, tuple(ids), w)


@dataclass(frozen=True, eq=False)
class ComponentCache:
    """Per ordered pair component integrals, shape (3, n, n)."""

    components: np.ndarray
    ids: tuple

    def deltas(self, w: IndexWeights) -> np.ndarray:
        return np.tensordot(w.as_array(), self.components, axes=1)

    def matrix(self, w: IndexWeights) -> DissimilarityMatrix:
        return build_matrix(self.deltas(w), self.ids, w)

    def save(self, out_dir):
        out = Path(out_dir)
        for name, c in zip(("mu", "mean_curvature", "gaussian_curvature"), self.components):
            write_matrix_csv(out / f"components_{name}.csv", c, self.ids)

    @classmethod
    def load(cls, out_dir) -> "ComponentCache":
        out = Path(out_dir)
        comps = []
        ids = None
        for name in ("mu", "mean_curvature", "gaussian_curvature"):
            p = out / f"components_{name}.csv"
            if not p.is_file():
                raise MeshError(f"missing component cache {p}")
            ids, c = read_matrix_csv(p)
            comps.append(c)
        return cls(np.array(comps), tuple(ids))


def write_matrix_csv(path, M, ids):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", *ids])
        for i, row in zip(ids, M):
            w.writerow([i, *(repr(float(x)) for x in row)])


def read_matrix_csv(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    ids = rows[0][1:]
    if [r[0] for r in rows[1:]] != ids:
        raise MeshError(f"{path}: row ids do not match the header")
    M = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return ids, M
