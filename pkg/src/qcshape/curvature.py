"""Discrete mean/Gaussian curvature and the field normalizations built on them."""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MeshError, NumericalError
from .geometry import corner_angles, cot_laplacian, mixed_voronoi_area
from .mesh import TriMesh, boundary_vertex_mask

logger = logging.getLogger(__name__)


class DegenerateRangeWarning(UserWarning):
    pass


def _areas(mesh):
    A = mixed_voronoi_area(mesh.vertices, mesh.faces)
    if np.any(A <= 0):
        raise NumericalError(f"vertex {int(np.argmin(A))} has zero mixed area")
    return A


def gaussian_curvature(mesh: TriMesh) -> np.ndarray:
    """Angle-defect Gaussian curvature per vertex.

    Interior vertices use ``2*pi - sum(angles)``, boundary vertices ``pi - sum(angles)``,
    both divided by the mixed Voronoi area.
    """
    A = _areas(mesh)
    ang = corner_angles(mesh.vertices, mesh.faces)
    total = np.bincount(mesh.faces.ravel(), weights=ang.ravel(), minlength=mesh.n_vertices)
    full = np.where(boundary_vertex_mask(mesh), np.pi, 2 * np.pi)
    return (full - total) / A


def mean_curvature(mesh: TriMesh) -> np.ndarray:
    """Signed mean curvature from the cotangent mean-curvature normal.

    Positive on convex regions w.r.t. outward normals (a sphere gives 1/r).
    On boundary vertices the Laplacian has a large tangential part, so only
    its normal component is used there.
    """
    A = _areas(mesh)
    Lx = cot_laplacian(mesh.vertices, mesh.faces) @ mesh.vertices
    n = mesh.vertex_normals
    along = np.einsum("ij,ij->i", Lx, n)
    mag = np.linalg.norm(Lx, axis=1) * np.sign(along)
    H = np.where(boundary_vertex_mask(mesh), along, mag) / (2 * A)
    return H


def principal_curvatures(H, K):
    """``(k1, k2) = H +- sqrt(max(H^2 - K, 0))``."""
    H = np.asarray(H, dtype=float)
    K = np.asarray(K, dtype=float)
    disc = np.sqrt(np.maximum(H * H - K, 0.0))
    return H + disc, H - disc


@dataclass(frozen=True)
class CurvatureField:
    mean: np.ndarray
    gaussian: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    area: np.ndarray

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["vertex", "H", "K", "k1", "k2", "mixed_area"])
            for i, row in enumerate(zip(self.mean, self.gaussian, self.k1, self.k2, self.area)):
                w.writerow([i, *(repr(float(x)) for x in row)])


def curvature_field(mesh: TriMesh) -> CurvatureField:
    H = mean_curvature(mesh)
    K = gaussian_curvature(mesh)
    k1, k2 = principal_curvatures(H, K)
    field = CurvatureField(H, K, k1, k2, mixed_voronoi_area(mesh.vertices, mesh.faces))
    for name in ("mean", "gaussian"):
        if not np.all(np.isfinite(getattr(field, name))):
            raise NumericalError(f"non-finite {name} curvature")
    return field


@dataclass(frozen=True)
class NormalizedField:
    values: np.ndarray
    lo: float
    hi: float
    range: str

    @property
    def bounds(self):
        return (0.0, 1.0) if self.range == "unit" else (-1.0, 1.0)


def normalize_field(values, range: str = "unit", clip_percentile: float | None = None) -> NormalizedField:
    """Affine map of ``values`` onto [0, 1] (``unit``) or [-1, 1] (``symmetric``).

    With ``clip_percentile=p`` the min/max are replaced by the p-th and
    (100-p)-th percentiles and values are clipped to them first. A constant
    field maps to all zeros with a DegenerateRangeWarning.
    """
    if range not in ("unit", "symmetric"):
        raise ValueError(f"unknown range {range!r}")
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise MeshError("cannot normalize an empty field")
    if not np.all(np.isfinite(x)):
        raise MeshError("cannot normalize a field with non-finite values")
    if clip_percentile:
        lo, hi = np.percentile(x, [clip_percentile, 100 - clip_percentile])
        x = np.clip(x, lo, hi)
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        warnings.warn("degenerate range: field is constant", DegenerateRangeWarning, stacklevel=2)
        return NormalizedField(np.zeros_like(x), lo, hi, range)
    t = (x - lo) / (hi - lo)
    if range == "symmetric":
        t = 2.0 * t - 1.0
        t = np.clip(t, -1.0, 1.0)
    else:
        t = np.clip(t, 0.0, 1.0)
    return NormalizedField(t, lo, hi, range)
