"""Per-face differential operators shared by the curvature and mapping code."""
import numpy as np
from scipy import sparse


def _pad3(v):
    v = np.asarray(v, dtype=float)
    if v.shape[1] == 2:
        v = np.column_stack([v, np.zeros(len(v))])
    return v


def corner_angles(vertices, faces):
    """Interior angle at each corner, shape (m, 3)."""
    v = _pad3(vertices)
    p = v[faces]
    ang = np.empty(faces.shape)
    for k in range(3):
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        cos = np.einsum("ij,ij->i", a, b)
        sin = np.linalg.norm(np.cross(a, b), axis=1)
        ang[:, k] = np.arctan2(sin, cos)
    return ang


def corner_cotangents(vertices, faces):
    v = _pad3(vertices)
    p = v[faces]
    cot = np.empty(faces.shape)
    for k in range(3):
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        cot[:, k] = np.einsum("ij,ij->i", a, b) / np.linalg.norm(np.cross(a, b), axis=1)
    return cot


def cot_laplacian(vertices, faces, n=None):
    """Positive semi-definite cotangent Laplacian, ``(L x)_i = sum_j w_ij (x_i - x_j)``
    with ``w_ij = (cot a + cot b) / 2``."""
    n = len(vertices) if n is None else n
    cot = corner_cotangents(vertices, faces)
    rows, cols, vals = [], [], []
    for k in range(3):
        i = faces[:, (k + 1) % 3]
        j = faces[:, (k + 2) % 3]
        w = 0.5 * cot[:, k]
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-w, -w, w, w]
    L = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return L.tocsr()


def mixed_voronoi_area(vertices, faces, n=None):
    """Obtuse-safe mixed Voronoi area per vertex (Meyer et al. construction)."""
    v = _pad3(vertices)
    n = len(v) if n is None else n
    p = v[faces]
    area = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    ang = corner_angles(v, faces)
    cot = 1.0 / np.tan(ang)
    # squared length of the edge opposite corner k
    l2 = np.stack(
        [np.sum((p[:, (k + 2) % 3] - p[:, (k + 1) % 3]) ** 2, axis=1) for k in range(3)], 1
    )
    obtuse = ang > np.pi / 2
    any_obtuse = obtuse.any(axis=1)
    contrib = np.empty(faces.shape)
    for k in range(3):
        k1, k2 = (k + 1) % 3, (k + 2) % 3
        vor = (l2[:, k2] * cot[:, k2] + l2[:, k1] * cot[:, k1]) / 8.0
        contrib[:, k] = np.where(
            any_obtuse, np.where(obtuse[:, k], area / 2, area / 4), vor
        )
    A = np.zeros(n)
    for k in range(3):
        np.add.at(A, faces[:, k], contrib[:, k])
    return A


def lumped_mass(vertices, faces, n=None):
    """Barycentric (one third of incident area) vertex areas."""
    v = _pad3(vertices)
    n = len(v) if n is None else n
    p = v[faces]
    area = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    A = np.zeros(n)
    for k in range(3):
        np.add.at(A, faces[:, k], area / 3)
    return A


def planar_signed_areas(uv, faces):
    p = np.asarray(uv)[faces]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def planar_gradient(uv, faces, n=None):
    """Sparse per-face gradient operators ``Dx, Dy`` of piecewise-linear functions on a planar mesh."""
    uv = np.asarray(uv, dtype=float)
    n = len(uv) if n is None else n
    p = uv[faces]
    area2 = 2.0 * planar_signed_areas(uv, faces)
    nf = len(faces)
    # gradient of the hat function at corner k is rot90(opposite edge) / (2A)
    gx = np.empty((nf, 3))
    gy = np.empty((nf, 3))
    for k in range(3):
        e = p[:, (k + 2) % 3] - p[:, (k + 1) % 3]
        gx[:, k] = -e[:, 1] / area2
        gy[:, k] = e[:, 0] / area2
    rows = np.repeat(np.arange(nf), 3)
    cols = faces.ravel()
    Dx = sparse.csr_matrix((gx.ravel(), (rows, cols)), shape=(nf, n))
    Dy = sparse.csr_matrix((gy.ravel(), (rows, cols)), shape=(nf, n))
    return Dx, Dy
