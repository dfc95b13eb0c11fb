"""Inconsistent planar registration between two conformal flattenings.

The map ``h`` alternates a Demons intensity-matching step with a
landmark-exact Linear Beltrami Solver projection, always finishing on the
latter. Common regions are then read off from where ``h`` lands inside the
target flattening.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import linalg as spla

from .conformal import BeltramiField, PlanarEmbedding, PlanarMap, beltrami_from_map, lbs_solve
from .curvature import NormalizedField
from .errors import MeshError, NumericalError
from .geometry import cot_laplacian
from .locate import PointLocator, rasterize_triangles
from .mesh import LandmarkCorrespondence, TriMesh

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegistrationConfig:
    """Knobs of the Demons/LBS splitting scheme.

    ``lam`` weighs the ``|mu|^2`` term and ``smooth_weight`` the
    ``|grad mu|^2`` term; lengths in the regulariser are measured in Demons
    grid cells.
    """

    n_iter: int = 20
    lam: float = 0.1
    smooth_weight: float = 1.0
    demons_grid: int = 256
    demons_sigma: float = 4.0
    demons_steps_per_outer: int = 10
    demons_levels: int = 1
    mu_clip: float = 0.97
    rel_tol: float = 1e-4
    grid_margin: float = 0.1
    max_halvings: int = 3

    def __post_init__(self):
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.smooth_weight < 0:
            raise ValueError("smooth_weight must be >= 0")
        if self.demons_grid < 32:
            raise ValueError("demons_grid must be >= 32")
        if self.demons_sigma <= 0:
            raise ValueError("demons_sigma must be > 0")
        if self.demons_steps_per_outer < 1:
            raise ValueError("demons_steps_per_outer must be >= 1")
        if self.demons_levels < 1:
            raise ValueError("demons_levels must be >= 1")
        if not 0 < self.mu_clip < 1:
            raise ValueError("mu_clip must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


# ------------------------------------------------------------------ images


@dataclass(frozen=True)
class GridGeometry:
    origin: tuple  # (x, y) of pixel (0, 0) centre
    spacing: float
    shape: tuple  # (ny, nx)

    @classmethod
    def covering(cls, points, resolution: int, margin: float = 0.1) -> "GridGeometry":
        p = np.asarray(points, dtype=float)
        lo, hi = p.min(axis=0), p.max(axis=0)
        extent = float(np.max(hi - lo))
        pad = margin * extent
        spacing = (extent + 2 * pad) / (resolution - 1)
        centre = 0.5 * (lo + hi)
        origin = centre - 0.5 * spacing * (resolution - 1)
        return cls((float(origin[0]), float(origin[1])), float(spacing), (resolution, resolution))

    def pixel_centres(self) -> np.ndarray:
        ny, nx = self.shape
        y, x = np.mgrid[0:ny, 0:nx]
        return np.column_stack([
            self.origin[0] + x.ravel() * self.spacing,
            self.origin[1] + y.ravel() * self.spacing,
        ])

    def to_pixel(self, pts) -> np.ndarray:
        """Plane points to fractional (col, row)."""
        return (np.asarray(pts) - np.asarray(self.origin)) / self.spacing


@dataclass(frozen=True, eq=False)
class IntensityImage:
    values: np.ndarray  # (ny, nx), 0 where uncovered
    mask: np.ndarray  # (ny, nx) bool
    grid: GridGeometry

    def filled(self) -> np.ndarray:
        """Values with uncovered pixels set to their nearest covered neighbour."""
        if self.mask.all() or not self.mask.any():
            return self.values.copy()
        _, idx = ndimage.distance_transform_edt(~self.mask, return_indices=True)
        return self.values[idx[0], idx[1]]


def rasterize_intensity(embedding: PlanarEmbedding, vertex_values, grid) -> IntensityImage:
    """Barycentric interpolation of vertex values onto pixel centres.

    ``grid`` is a :class:`GridGeometry` or a resolution (square grid fitted
    to the embedding).
    """
    vals = vertex_values.values if isinstance(vertex_values, NormalizedField) else np.asarray(vertex_values, dtype=float)
    if vals.shape != (embedding.mesh.n_vertices,):
        raise MeshError("need one intensity per vertex")
    if np.any(vals < 0) or np.any(vals > 1):
        raise ValueError("intensities must lie in [0, 1]")
    if not isinstance(grid, GridGeometry):
        grid = GridGeometry.covering(embedding.uv, int(grid), margin=0.0)
    face, bary = rasterize_triangles(embedding.uv, embedding.mesh.faces, grid.origin, grid.spacing, grid.shape)
    inside = face >= 0
    out = np.zeros(len(face))
    fv = vals[embedding.mesh.faces[face[inside]]]
    b = bary[inside]
    # offset form keeps constant fields exact
    out[inside] = fv[:, 0] + b[:, 1] * (fv[:, 1] - fv[:, 0]) + b[:, 2] * (fv[:, 2] - fv[:, 0])
    covered = int(inside.sum())
    if covered == 0:
        raise NumericalError("rasterization covers no pixel (grid too coarse or degenerate embedding)")
    if covered < embedding.mesh.n_vertices // 4:
        warnings.warn(
            f"coarse grid: {covered} covered pixels for {embedding.mesh.n_vertices} vertices",
            stacklevel=2,
        )
    return IntensityImage(
        np.clip(out, 0.0, 1.0).reshape(grid.shape), inside.reshape(grid.shape), grid
    )


def _warp(moving: IntensityImage, disp, moving_filled=None):
    """``m(x - d(x))`` and its coverage; ``disp`` is (2, ny, nx) in pixels, x first."""
    ny, nx = moving.grid.shape
    yy, xx = np.mgrid[0:ny, 0:nx].astype(float)
    coords = np.array([yy - disp[1], xx - disp[0]])
    src = moving.filled() if moving_filled is None else moving_filled
    w = ndimage.map_coordinates(src, coords, order=1, mode="nearest")
    m = ndimage.map_coordinates(moving.mask.astype(float), coords, order=1, mode="constant", cval=0.0)
    return w, m > 0.999


def intensity_ssd(moving: IntensityImage, fixed: IntensityImage, disp=None) -> float:
    """Mean squared intensity difference over the overlap of the two coverages."""
    if disp is None:
        w, wm = moving.values, moving.mask
    else:
        w, wm = _warp(moving, disp)
    ov = wm & fixed.mask
    if not ov.any():
        return float("inf")
    return float(np.mean((w[ov] - fixed.values[ov]) ** 2))


def demons_update(moving: IntensityImage, fixed: IntensityImage, displacement, config: RegistrationConfig):
    """Thirion demons iterations on a displacement field.

    The field ``d`` (shape (2, ny, nx), x component first, pixel units)
    warps the moving image as ``m(x - d(x))``. Each step adds
    ``(m - f) grad f / (|grad f|^2 + (m - f)^2)`` on the covered overlap and
    smooths with a Gaussian of ``demons_sigma`` cells. Steps that would
    raise the overlap SSD are halved and, failing that, dropped.

    With ``demons_levels > 1`` the same iterations first run at coarser
    scales ``s = 2, 4, ...``: images are blurred by ``s / 2`` cells, forces
    are measured in units of ``s`` cells and the field is smoothed with
    ``s * demons_sigma``. The result never has a larger full-resolution
    SSD than the input field.
    """
    if moving.grid != fixed.grid:
        raise ValueError("moving and fixed images live on different grids")
    d = np.array(displacement, dtype=float, copy=True)
    if d.shape != (2,) + fixed.grid.shape:
        raise ValueError(f"displacement must have shape {(2,) + fixed.grid.shape}")
    if not fixed.mask.any() or not moving.mask.any():
        warnings.warn("empty image coverage; displacement left unchanged", stacklevel=2)
        return d
    m_full = moving.filled()
    f_full = fixed.filled()
    d_in = d.copy()
    for level in reversed(range(config.demons_levels)):
        d = _demons_scale(moving, fixed, m_full, f_full, d, config, 2**level)
    if config.demons_levels > 1:
        before = _overlap_ssd(moving, fixed, m_full, fixed.values, d_in)[0]
        if _overlap_ssd(moving, fixed, m_full, fixed.values, d)[0] > before:
            return d_in
    return d


def _overlap_ssd(moving, fixed, m_src, f_vals, field):
    w, wm = _warp(moving, field, m_src)
    ov = wm & fixed.mask
    return (float(np.mean((w[ov] - f_vals[ov]) ** 2)) if ov.any() else np.inf), w, ov


def _demons_scale(moving, fixed, m_full, f_full, d, config, s):
    if s > 1:
        m_src = ndimage.gaussian_filter(m_full, s / 2, mode="nearest")
        f_src = ndimage.gaussian_filter(f_full, s / 2, mode="nearest")
    else:
        m_src, f_src = m_full, f_full
    gy, gx = np.gradient(f_src)
    g2 = gx * gx + gy * gy
    sigma = config.demons_sigma * s
    weight = ndimage.gaussian_filter(fixed.mask.astype(float), sigma, mode="constant")
    far = weight < 1e-6

    def smooth(c):
        # normalised convolution over the fixed coverage, so the field is not
        # dragged towards zero by uncovered pixels
        out = ndimage.gaussian_filter(c * fixed.mask, sigma, mode="constant")
        out = np.divide(out, weight, out=np.zeros_like(out), where=~far)
        return out

    cur, w, ov = _overlap_ssd(moving, fixed, m_src, f_src, d)
    for _ in range(config.demons_steps_per_outer):
        diff = np.where(ov, w - f_src, 0.0)
        # force in units of s cells, converted back to cells
        den = s * s * g2 + diff * diff
        scale = np.divide(s * s * diff, den, out=np.zeros_like(den), where=den > 1e-12)
        step = np.array([scale * gx, scale * gy])
        cand = np.array([smooth(c) for c in d + step])
        accepted = False
        for _h in range(config.max_halvings + 1):
            val, w2, ov2 = _overlap_ssd(moving, fixed, m_src, f_src, cand)
            if val <= cur:
                accepted = True
                break
            cand = 0.5 * (cand + d)
        if not accepted:
            break
        d, cur, w, ov = cand, val, w2, ov2
    return d


def _apply_displacement(points, disp, grid: GridGeometry, fixed_point_iters: int = 3):
    """Push plane points through the moving-to-fixed map ``y -> y + d(y')``, ``y' = y + d(y')``."""
    pts = np.asarray(points, dtype=float)
    y = pts.copy()
    for _ in range(fixed_point_iters):
        pix = grid.to_pixel(y)
        coords = np.array([pix[:, 1], pix[:, 0]])
        dx = ndimage.map_coordinates(disp[0], coords, order=1, mode="nearest")
        dy = ndimage.map_coordinates(disp[1], coords, order=1, mode="nearest")
        y = pts + grid.spacing * np.column_stack([dx, dy])
    return y


# ------------------------------------------------------------ regulariser


class _MuRegulariser:
    """Minimises ``|mu - mu_bar|^2 + lam |mu|^2 + w |grad mu|^2`` over a vertex field."""

    def __init__(self, domain: PlanarEmbedding, lam: float, weight: float, spacing: float):
        f = domain.mesh.faces
        n = domain.mesh.n_vertices
        self.faces = f
        self.area_px = np.abs(domain.signed_areas) / spacing**2
        A = np.zeros(n)
        for k in range(3):
            np.add.at(A, f[:, k], self.area_px / 3)
        self.mass = A
        self.L = cot_laplacian(domain.uv, f)
        self.lam, self.weight = lam, weight
        op = sparse.diags((1 + lam) * A) + weight * self.L
        self._solve = spla.factorized(op.tocsc())
        rows = f.ravel()
        cols = np.repeat(np.arange(len(f)), 3)
        w = np.repeat(self.area_px, 3)
        self._f2v = sparse.csr_matrix((w, (rows, cols)), shape=(n, len(f)))
        self._f2v_norm = np.asarray(self._f2v.sum(axis=1)).ravel()

    def to_vertices(self, mu_f):
        return (self._f2v @ mu_f) / self._f2v_norm

    def to_faces(self, mu_v):
        return mu_v[self.faces].mean(axis=1)

    def smooth(self, mu_f):
        rhs = self.mass * self.to_vertices(mu_f)
        mu_v = self._solve(rhs.real) + 1j * self._solve(rhs.imag)
        return self.to_faces(mu_v)

    def energies(self, mu_f):
        mu_v = self.to_vertices(mu_f)
        reg = float(self.lam * np.sum(self.area_px * np.abs(mu_f) ** 2))
        grad = float(self.weight * np.real(np.vdot(mu_v, self.L @ mu_v)))
        return reg, grad


def _clip(mu, cap):
    a = np.abs(mu)
    return np.where(a > cap, mu * (cap / np.maximum(a, 1e-300)), mu)


# ------------------------------------------------------------------ result


@dataclass(frozen=True, eq=False)
class RegistrationResult:
    h: PlanarMap
    omega1: np.ndarray  # face mask on S1
    omega2: np.ndarray  # face mask on S2
    corr_face: np.ndarray  # per S1 vertex: containing S2 face, -1 outside Omega1
    corr_bary: np.ndarray  # per S1 vertex barycentric coordinates in corr_face
    trace: list
    mu_abs: np.ndarray  # per S1 face |mu_f|
    landmarks: LandmarkCorrespondence
    target: PlanarEmbedding
    config: RegistrationConfig
    alignment: tuple = (1.0, 0.0)
    converged: bool = True
    iterations: int = 0

    def landmark_residuals(self) -> np.ndarray:
        src = np.array(self.landmarks.source_vertex_ids)
        tgt = np.array(self.landmarks.target_vertex_ids)
        return np.linalg.norm(self.h.image[src] - self.target.uv[tgt], axis=1)

    def area_fractions(self) -> tuple[float, float]:
        a1 = self.h.domain.mesh.face_areas
        a2 = self.target.mesh.face_areas
        return float(a1[self.omega1].sum() / a1.sum()), float(a2[self.omega2].sum() / a2.sum())

    def report(self) -> dict:
        res = self.landmark_residuals()
        f1, f2 = self.area_fractions()
        mu = self.mu_abs[self.omega1]
        a = self.alignment
        return {
            "config": self.config.to_dict(),
            "iterations": self.iterations,
            "converged": self.converged,
            "energy_trace": self.trace,
            "landmark_residuals": res.tolist(),
            "max_landmark_residual": float(res.max()),
            "omega1_area_fraction": f1,
            "omega2_area_fraction": f2,
            "mu_abs": {
                "mean": float(mu.mean()),
                "median": float(np.median(mu)),
                "max": float(mu.max()),
                "p95": float(np.percentile(mu, 95)),
            },
            "alignment": {"scale_rotation": [float(np.real(a[0])), float(np.imag(a[0]))],
                          "translation": [float(np.real(a[1])), float(np.imag(a[1]))]},
        }


# ----------------------------------------------------------------- overlap


def extract_overlap(h: PlanarMap, emb2: PlanarEmbedding, landmarks: LandmarkCorrespondence | None = None):
    """Common regions of the source and target flattenings under ``h``.

    A source face belongs to Omega1 when it keeps its orientation and all
    three image vertices fall inside the target flattening. Omega2 holds
    the target faces whose centroid lies inside ``h(Omega1)``, plus every
    face the correspondence lands in. Landmark stars are always included.

    Returns ``(omega1, omega2, corr_face, corr_bary)``.
    """
    f1 = h.domain.mesh.faces
    f2 = emb2.mesh.faces
    img = h.image
    loc2 = PointLocator(emb2.uv, f2)
    corr_face, corr_bary = loc2.locate(img)
    inside = corr_face >= 0
    p = img[f1]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    positive = (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]) > 0
    omega1 = inside[f1].all(axis=1) & positive
    if not omega1.any():
        raise NumericalError("empty overlap: h maps no source face inside the target domain")
    if landmarks is not None:
        for s in landmarks.source_vertex_ids:
            star = np.flatnonzero((f1 == s).any(axis=1))
            if not omega1[star].any():
                good = star[positive[star]]
                if good.size == 0:
                    raise NumericalError(f"every face around source landmark {s} is folded")
                omega1[good] = True
    used = np.zeros(len(img), dtype=bool)
    used[f1[omega1].ravel()] = True
    missing = np.flatnonzero(used & (corr_face < 0))
    if missing.size:
        nf, nb = loc2.nearest(img[missing])
        corr_face[missing], corr_bary[missing] = nf, nb
    if landmarks is not None:
        # landmark images coincide with the target landmarks: pin them to that vertex
        for s, t in zip(landmarks.source_vertex_ids, landmarks.target_vertex_ids):
            tf = int(corr_face[s])
            if tf < 0 or t not in f2[tf]:
                tf = int(np.flatnonzero((f2 == t).any(axis=1))[0])
            corr_face[s] = tf
            corr_bary[s] = (f2[tf] == t).astype(float)
    corr_face[~used] = -1
    corr_bary[~used] = 0.0

    loc1 = PointLocator(img, f1[omega1])
    cf, _ = loc1.locate(emb2.uv[f2].mean(axis=1))
    omega2 = cf >= 0
    omega2[corr_face[used]] = True
    if landmarks is not None:
        for t in landmarks.target_vertex_ids:
            star = np.flatnonzero((f2 == t).any(axis=1))
            if not omega2[star].any():
                omega2[star] = True
    return omega1, omega2, corr_face, corr_bary


# ------------------------------------------------------------ registration


def similarity_fit(src, dst):
    """Complex ``(a, b)`` minimising ``sum |a src + b - dst|^2``."""
    src = np.asarray(src, dtype=complex)
    dst = np.asarray(dst, dtype=complex)
    if np.array_equal(src, dst):
        return 1.0 + 0j, 0j
    if len(src) == 1:
        return 1.0 + 0j, complex(dst[0] - src[0])
    sc, dc = src - src.mean(), dst - dst.mean()
    den = np.vdot(sc, sc)
    if den == 0:
        return 1.0 + 0j, complex(dst.mean() - src.mean())
    a = np.vdot(sc, dc) / den
    return complex(a), complex(dst.mean() - a * src.mean())


def inconsistent_planar_register(
    emb1: PlanarEmbedding,
    emb2: PlanarEmbedding,
    I1,
    I2,
    landmarks: LandmarkCorrespondence,
    config: RegistrationConfig = RegistrationConfig(),
) -> RegistrationResult:
    """Landmark-exact quasi-conformal map between the common parts of two flattenings.

    The source flattening is first moved by the similarity that best aligns
    its landmarks with the target ones; ``h`` is then a map from that
    aligned copy into the target flattening's own coordinates.
    """
    landmarks.check(emb1.mesh, emb2.mesh)
    I1 = I1.values if isinstance(I1, NormalizedField) else np.asarray(I1, dtype=float)
    I2 = I2.values if isinstance(I2, NormalizedField) else np.asarray(I2, dtype=float)
    src = np.array(landmarks.source_vertex_ids)
    tgt = np.array(landmarks.target_vertex_ids)

    a, b = similarity_fit(emb1.z[src], emb2.z[tgt])
    z1 = a * emb1.z + b
    domain = PlanarEmbedding(z1, emb1.mesh)
    targets = emb2.uv[tgt]
    constraints = [(int(s), tuple(q)) for s, q in zip(src, targets)]
    diam = max(domain.diameter, emb2.diameter)

    grid = GridGeometry.covering(np.vstack([domain.uv, emb2.uv]), config.demons_grid, config.grid_margin)
    fixed = rasterize_intensity(emb2, I2, grid)

    def moving_of(image):
        return rasterize_intensity(domain.with_uv(image), I1, grid)

    ident = domain.uv
    lm_err = float(np.sum(np.linalg.norm(ident[src] - targets, axis=1)))
    moving0 = moving_of(ident)
    ov = moving0.mask & fixed.mask
    int_err = float(np.mean(np.abs(moving0.values[ov] - fixed.values[ov]))) if ov.any() else np.inf
    same_cover = np.mean(moving0.mask != fixed.mask) <= 1e-3

    reg = _MuRegulariser(domain, config.lam, config.smooth_weight, grid.spacing)
    trace = []
    converged = True
    iterations = 0
    if lm_err <= 1e-12 * diam and int_err <= 1e-10 and same_cover:
        h = PlanarMap(domain, ident.copy(), BeltramiField(np.zeros(domain.mesh.n_faces, complex)),
                      tuple(constraints))
        trace.append(_trace_entry(0, intensity_ssd(moving0, fixed), h, reg, landmark_error=lm_err))
    else:
        h = lbs_solve(domain, np.zeros(domain.mesh.n_faces), constraints)
        moving = moving_of(h.image)
        ssd = intensity_ssd(moving, fixed)
        trace.append(_trace_entry(0, ssd, h, reg))
        converged = False
        for t in range(1, config.n_iter + 1):
            disp = demons_update(moving, fixed, np.zeros((2,) + grid.shape), config)
            accepted = None
            for k in range(config.max_halvings + 1):
                s = 0.5**k
                pushed = _apply_displacement(h.image, s * disp, grid)
                try:
                    mu_d = beltrami_from_map(domain, pushed).mu
                except NumericalError:
                    continue
                mu_s = _clip(reg.smooth(_clip(mu_d, config.mu_clip)), config.mu_clip)
                cand = lbs_solve(domain, mu_s, constraints)
                cand_moving = moving_of(cand.image)
                val = intensity_ssd(cand_moving, fixed)
                if val <= ssd:
                    accepted = (cand, val, cand_moving)
                    break
            iterations = t
            if accepted is None:
                converged = True
                logger.debug("iteration %d: no accepted step, stopping", t)
                break
            h, new, moving = accepted
            rel = (ssd - new) / ssd if ssd > 0 else 0.0
            ssd = new
            trace.append(_trace_entry(t, ssd, h, reg))
            if rel < config.rel_tol:
                converged = True
                break
    mu_abs = np.abs(h.mu.mu)
    omega1, omega2, cf, cb = extract_overlap(h, emb2, landmarks)
    if np.any(mu_abs[omega1] >= 1):
        raise NumericalError("|mu| >= 1 inside the common region (LBS collapse)")
    res = float(np.max(np.linalg.norm(h.image[src] - targets, axis=1)))
    if res > 1e-8 * diam:
        raise NumericalError(f"landmark residual {res:.3e} exceeds tolerance")
    return RegistrationResult(
        h=h, omega1=omega1, omega2=omega2, corr_face=cf, corr_bary=cb, trace=trace,
        mu_abs=mu_abs, landmarks=landmarks, target=emb2, config=config,
        alignment=(a, b), converged=converged, iterations=iterations,
    )


def _trace_entry(t, ssd, h: PlanarMap, reg: _MuRegulariser, landmark_error=None):
    r, g = reg.energies(h.mu.mu)
    lm = float(np.max(h.constraint_residuals())) if landmark_error is None else landmark_error
    return {"iteration": t, "intensity": float(ssd), "lambda_mu2": r, "grad_mu2": g,
            "landmark_error": lm}


# ------------------------------------------------------------- composition


@dataclass(frozen=True, eq=False)
class SurfaceCorrespondence:
    """``f = psi^-1 o h o phi`` sampled at the Omega1 vertices of S1."""

    points: np.ndarray  # (n1, 3), NaN outside Omega1
    vertex_mask: np.ndarray
    mu_abs: np.ndarray  # per S1 face, copied from h
    omega1: np.ndarray
    omega2: np.ndarray


def compose_registration(phi: PlanarEmbedding, reg: RegistrationResult, psi: PlanarEmbedding) -> SurfaceCorrespondence:
    if phi.mesh is not reg.h.domain.mesh and phi.mesh.n_vertices != reg.h.domain.mesh.n_vertices:
        raise MeshError("phi does not flatten the registration's source mesh")
    used = reg.corr_face >= 0
    if np.any(~reg.omega2[reg.corr_face[used]]):
        raise NumericalError("correspondence references a face outside Omega2")
    tri = psi.mesh.vertices[psi.mesh.faces[reg.corr_face[used]]]
    pts = np.full((phi.mesh.n_vertices, 3), np.nan)
    pts[used] = np.einsum("ik,ikd->id", reg.corr_bary[used], tri)
    return SurfaceCorrespondence(pts, used, reg.mu_abs.copy(), reg.omega1, reg.omega2)


def register_surfaces(mesh1: TriMesh, mesh2: TriMesh, landmarks: LandmarkCorrespondence,
                      config: RegistrationConfig = RegistrationConfig(), clip_percentile=None,
                      emb1=None, emb2=None):
    """Flatten both meshes, build curvature intensities and register them."""
    from .conformal import lscm
    from .curvature import gaussian_curvature, normalize_field

    emb1 = lscm(mesh1) if emb1 is None else emb1
    emb2 = lscm(mesh2) if emb2 is None else emb2
    I1 = normalize_field(gaussian_curvature(mesh1), "unit", clip_percentile)
    I2 = normalize_field(gaussian_curvature(mesh2), "unit", clip_percentile)
    return inconsistent_planar_register(emb1, emb2, I1, I2, landmarks, config)
