"""Free-boundary conformal flattening, Beltrami coefficients and the Linear Beltrami Solver.

Both the flattening and the solver minimise the same least-squares Beltrami
energy ``sum_f area_f |f_zbar - mu_f f_z|^2`` over piecewise-linear maps; the
flattening is the ``mu = 0`` case measured on the 3D triangles.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import MeshError, NumericalError
from .geometry import planar_signed_areas
from .mesh import TriMesh, extract_boundary

logger = logging.getLogger(__name__)

MAX_FLIP_FRACTION = 1e-3
ITERATIVE_THRESHOLD = 400_000  # unknowns above which CG replaces the direct solve


@dataclass(frozen=True, eq=False)
class PlanarEmbedding:
    """Per-vertex plane coordinates of ``mesh``."""

    uv: np.ndarray
    mesh: TriMesh

    def __post_init__(self):
        if np.iscomplexobj(self.uv):
            uv = np.column_stack([np.real(self.uv), np.imag(self.uv)])
        else:
            uv = np.array(self.uv, dtype=float)
        if uv.shape != (self.mesh.n_vertices, 2):
            raise MeshError(f"embedding needs ({self.mesh.n_vertices}, 2) coordinates, got {uv.shape}")
        uv.setflags(write=False)
        object.__setattr__(self, "uv", uv)

    @property
    def z(self) -> np.ndarray:
        return self.uv[:, 0] + 1j * self.uv[:, 1]

    @property
    def signed_areas(self) -> np.ndarray:
        return planar_signed_areas(self.uv, self.mesh.faces)

    @property
    def orientation(self) -> np.ndarray:
        return np.sign(self.signed_areas).astype(int)

    @property
    def flipped(self) -> np.ndarray:
        return np.flatnonzero(self.signed_areas <= 0)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.uv.max(axis=0) - self.uv.min(axis=0)))

    def with_uv(self, uv) -> "PlanarEmbedding":
        return PlanarEmbedding(uv, self.mesh)

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["vertex", "u", "v"])
            for i, (u, v) in enumerate(self.uv):
                w.writerow([i, repr(float(u)), repr(float(v))])


@dataclass(frozen=True, eq=False)
class BeltramiField:
    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=complex)
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @property
    def abs(self) -> np.ndarray:
        return np.abs(self.mu)

    def __len__(self):
        return len(self.mu)

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["face", "re_mu", "im_mu"])
            for i, m in enumerate(self.mu):
                w.writerow([i, repr(float(m.real)), repr(float(m.imag))])


@dataclass(frozen=True, eq=False)
class PlanarMap:
    domain: PlanarEmbedding
    image: np.ndarray
    mu: BeltramiField
    constraints: tuple = field(default=())

    @property
    def z(self) -> np.ndarray:
        return self.image[:, 0] + 1j * self.image[:, 1]

    def constraint_residuals(self) -> np.ndarray:
        if not self.constraints:
            return np.zeros(0)
        ids = np.array([c[0] for c in self.constraints])
        pos = np.array([c[1] for c in self.constraints], dtype=float)
        return np.linalg.norm(self.image[ids] - pos, axis=1)


# ------------------------------------------------------------ face calculus


def _face_gradients(p):
    """Gradient coefficients of the three hat functions on each planar triangle.

    ``p`` has shape (m, 3, 2); returns ``gx, gy`` of shape (m, 3) and the
    signed areas.
    """
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    gx = np.empty(p.shape[:2])
    gy = np.empty(p.shape[:2])
    for k in range(3):
        e = p[:, (k + 2) % 3] - p[:, (k + 1) % 3]
        gx[:, k] = -e[:, 1] / (2 * area)
        gy[:, k] = e[:, 0] / (2 * area)
    return gx, gy, area


def _local_frames(mesh: TriMesh):
    """Isometric 2D coordinates of every 3D triangle in its own frame."""
    p = mesh.vertices[mesh.faces]
    ex = p[:, 1] - p[:, 0]
    ex /= np.linalg.norm(ex, axis=1, keepdims=True)
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    ey = np.cross(n, ex)
    d = p - p[:, :1]
    return np.stack([np.einsum("fkj,fj->fk", d, ex), np.einsum("fkj,fj->fk", d, ey)], axis=2)


def _derivatives(gx, gy, faces, w):
    """Per-face ``f_z`` and ``f_zbar`` of the complex vertex function ``w``."""
    wf = w[faces]
    fx = np.sum(gx * wf, axis=1)
    fy = np.sum(gy * wf, axis=1)
    return 0.5 * (fx - 1j * fy), 0.5 * (fx + 1j * fy)


def _mu_from(fz, fzbar):
    small = np.abs(fz) <= 1e-14 * (np.abs(fz).max() + np.abs(fzbar).max() + 1e-300)
    if np.any(small):
        raise NumericalError(
            f"f_z vanishes on {int(small.sum())} faces (first: {int(np.flatnonzero(small)[0])})"
        )
    return fzbar / fz


def beltrami_from_map(domain: PlanarEmbedding, image) -> BeltramiField:
    """Per-face Beltrami coefficient of the piecewise-linear map ``domain -> image``."""
    image = _as_points(image)
    if image.shape != domain.uv.shape:
        raise MeshError("image must have one 2D point per domain vertex")
    f = domain.mesh.faces
    if np.array_equal(image, domain.uv):
        return BeltramiField(np.zeros(len(f), dtype=complex))
    gx, gy, area = _face_gradients(domain.uv[f])
    if np.any(area == 0):
        raise NumericalError("degenerate domain triangle")
    fz, fzbar = _derivatives(gx, gy, f, image[:, 0] + 1j * image[:, 1])
    return BeltramiField(_mu_from(fz, fzbar))


def surface_beltrami(mesh: TriMesh, uv) -> BeltramiField:
    """Beltrami coefficient of a flattening measured against the 3D triangles."""
    uv = _as_points(uv)
    gx, gy, _ = _face_gradients(_local_frames(mesh))
    fz, fzbar = _derivatives(gx, gy, mesh.faces, uv[:, 0] + 1j * uv[:, 1])
    return BeltramiField(_mu_from(fz, fzbar))


def dilatation(mu) -> float | np.ndarray:
    """Aspect ratio ``(1 + |mu|) / (1 - |mu|)`` of the infinitesimal ellipse."""
    a = np.abs(np.asarray(mu))
    if np.any(a >= 1):
        raise ValueError("dilatation needs |mu| < 1")
    out = (1 + a) / (1 - a)
    return float(out) if np.ndim(out) == 0 else out


def _as_points(x):
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return np.column_stack([x.real, x.imag])
    return np.asarray(x, dtype=float)


# ------------------------------------------------------ least-squares solver


def _beltrami_system(gx, gy, faces, weight, mu, n):
    """Real (2m x 2n) operator whose rows are ``sqrt(w) (f_zbar - mu f_z)``.

    Unknown ordering is ``[u_0..u_{n-1}, v_0..v_{n-1}]``.
    """
    rho = np.real(mu)[:, None]
    tau = np.imag(mu)[:, None]
    a, b = 0.5 * gx, 0.5 * gy
    s = np.sqrt(weight)[:, None]
    re_u = s * ((1 - rho) * a - tau * b)
    re_v = s * (tau * a - (1 + rho) * b)
    im_u = s * ((1 + rho) * b - tau * a)
    im_v = s * ((1 - rho) * a - tau * b)
    m = len(faces)
    r = np.repeat(np.arange(m), 3)
    c = faces.ravel()
    rows = np.concatenate([r, r, r + m, r + m])
    cols = np.concatenate([c, c + n, c, c + n])
    vals = np.concatenate([re_u.ravel(), re_v.ravel(), im_u.ravel(), im_v.ravel()])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(2 * m, 2 * n))


def _solve_constrained(A, n, fixed_ids, fixed_pos):
    """Minimise ``|A x|^2`` with the listed vertices pinned; returns (n, 2) points."""
    fixed_ids = np.asarray(fixed_ids, dtype=np.int64)
    fixed_pos = np.asarray(fixed_pos, dtype=float).reshape(-1, 2)
    fixed_cols = np.concatenate([fixed_ids, fixed_ids + n])
    fixed_vals = np.concatenate([fixed_pos[:, 0], fixed_pos[:, 1]])
    free = np.ones(2 * n, dtype=bool)
    free[fixed_cols] = False
    A = A.tocsc()
    Af = A[:, free]
    rhs = -(Af.T @ (A[:, fixed_cols] @ fixed_vals))
    N = (Af.T @ Af).tocsc()
    if N.shape[0] > ITERATIVE_THRESHOLD:
        sol, info = spla.cg(N, rhs, rtol=1e-10, maxiter=20 * N.shape[0])
        if info != 0:
            raise NumericalError(f"conjugate gradient did not converge (info={info})")
    else:
        try:
            sol = spla.splu(N, permc_spec="MMD_AT_PLUS_A").solve(rhs)
        except RuntimeError as exc:
            raise NumericalError(f"singular Beltrami system: {exc}") from None
    if not np.all(np.isfinite(sol)):
        raise NumericalError("Beltrami system produced non-finite coordinates")
    x = np.empty(2 * n)
    x[free] = sol
    x[fixed_cols] = fixed_vals
    return np.column_stack([x[:n], x[n:]])


def default_pins(mesh: TriMesh) -> tuple[int, int]:
    """Boundary vertex pair half a loop apart with the largest 3D separation."""
    loop = extract_boundary(mesh)
    half = len(loop) // 2
    a = loop[: len(loop) - half]
    b = loop[(np.arange(len(a)) + half) % len(loop)]
    d = np.linalg.norm(mesh.vertices[a] - mesh.vertices[b], axis=1)
    # near-ties go to the first pair along the loop, so rigid copies agree
    i = int(np.flatnonzero(d >= d.max() * (1 - 1e-9))[0])
    return int(a[i]), int(b[i])


def lscm(mesh: TriMesh, pin_a: int | None = None, pin_b: int | None = None,
         pos_a=(0.0, 0.0), pos_b=(1.0, 0.0), check_flips: bool = True) -> PlanarEmbedding:
    """Least-squares conformal flattening with two pinned vertices.

    Without explicit pins the boundary pair from :func:`default_pins` is
    sent to (0, 0) and (1, 0).
    """
    if pin_a is None or pin_b is None:
        pin_a, pin_b = default_pins(mesh)
    if pin_a == pin_b:
        raise MeshError("LSCM pins must be distinct vertices")
    if np.allclose(pos_a, pos_b):
        raise MeshError("LSCM pin positions coincide")
    gx, gy, area = _face_gradients(_local_frames(mesh))
    A = _beltrami_system(gx, gy, mesh.faces, area, np.zeros(mesh.n_faces), mesh.n_vertices)
    uv = _solve_constrained(A, mesh.n_vertices, [pin_a, pin_b], [pos_a, pos_b])
    emb = PlanarEmbedding(uv, mesh)
    flipped = emb.flipped
    if flipped.size:
        logger.warning("LSCM flattening flipped %d of %d faces", flipped.size, mesh.n_faces)
        if check_flips and flipped.size > MAX_FLIP_FRACTION * mesh.n_faces:
            raise NumericalError(
                f"LSCM flattening flipped {flipped.size} faces (> {MAX_FLIP_FRACTION:.1%})"
            )
    return emb


def lbs_solve(domain: PlanarEmbedding, target_mu, constraints) -> PlanarMap:
    """Planar map with Beltrami coefficient close to ``target_mu`` matching ``constraints`` exactly.

    ``constraints`` is a sequence of ``(vertex_id, (x, y))``. The boundary is
    free: with two constraints and ``mu = 0`` the result is the conformal
    map through the two points.
    """
    mu = target_mu.mu if isinstance(target_mu, BeltramiField) else np.asarray(target_mu, dtype=complex)
    f = domain.mesh.faces
    n = domain.mesh.n_vertices
    if mu.shape != (len(f),):
        raise MeshError("target_mu needs one coefficient per face")
    if np.any(np.abs(mu) >= 1):
        raise ValueError(f"|mu| >= 1 on {int(np.sum(np.abs(mu) >= 1))} faces")
    ids = [int(c[0]) for c in constraints]
    pos = [tuple(map(float, c[1])) for c in constraints]
    if len(set(ids)) != len(ids):
        raise MeshError("a vertex is constrained twice")
    if len(ids) < 2:
        raise NumericalError("at least two distinct constrained vertices are needed")
    for i in ids:
        if not 0 <= i < n:
            raise MeshError(f"constraint vertex {i} out of range")
    gx, gy, area = _face_gradients(domain.uv[f])
    if np.any(area == 0):
        raise NumericalError(f"domain has {int(np.sum(area == 0))} degenerate faces")
    A = _beltrami_system(gx, gy, f, np.abs(area), mu, n)
    image = _solve_constrained(A, n, ids, pos)
    fz, fzbar = _derivatives(gx, gy, f, image[:, 0] + 1j * image[:, 1])
    return PlanarMap(domain, image, BeltramiField(_mu_from(fz, fzbar)), tuple(zip(ids, pos)))


def flatten(mesh: TriMesh) -> PlanarEmbedding:
    return lscm(mesh)
