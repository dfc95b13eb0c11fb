"""Point location in planar triangle meshes via a uniform bucket grid."""
import numpy as np
from scipy.spatial import cKDTree


def barycentric(p, tri):
    """Barycentric coordinates of points ``p`` (k, 2) in triangles ``tri`` (k, 3, 2)."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    v0, v1, v2 = b - a, c - a, p - a
    den = v0[:, 0] * v1[:, 1] - v1[:, 0] * v0[:, 1]
    l1 = (v2[:, 0] * v1[:, 1] - v1[:, 0] * v2[:, 1]) / den
    l2 = (v0[:, 0] * v2[:, 1] - v2[:, 0] * v0[:, 1]) / den
    return np.column_stack([1.0 - l1 - l2, l1, l2])


class PointLocator:
    """Find the triangle containing each query point.

    Faces may overlap (e.g. a slightly folded deformed mesh); the face in
    which the point is deepest wins.
    """

    def __init__(self, uv, faces, faces_per_cell: float = 2.0):
        self.uv = np.asarray(uv, dtype=float)
        self.faces = np.asarray(faces, dtype=np.int64)
        tri = self.uv[self.faces]
        lo = tri.min(axis=1)
        hi = tri.max(axis=1)
        self.origin = self.uv[np.unique(self.faces)].min(axis=0)
        extent = np.maximum(self.uv[np.unique(self.faces)].max(axis=0) - self.origin, 1e-300)
        n_cells = max(1.0, len(self.faces) / faces_per_cell)
        h = float(np.sqrt(extent[0] * extent[1] / n_cells)) or float(extent.max())
        h = max(h, float(np.median(hi - lo)) * 0.5, 1e-300)
        self.h = h
        self.shape = (int(extent[0] // h) + 1, int(extent[1] // h) + 1)
        i0 = self._cell(lo)
        i1 = self._cell(hi)
        nx = i1[:, 0] - i0[:, 0] + 1
        ny = i1[:, 1] - i0[:, 1] + 1
        count = nx * ny
        face_of = np.repeat(np.arange(len(self.faces)), count)
        local = np.arange(count.sum()) - np.repeat(np.cumsum(count) - count, count)
        cx = i0[face_of, 0] + local % nx[face_of]
        cy = i0[face_of, 1] + local // nx[face_of]
        cell = cx * self.shape[1] + cy
        order = np.argsort(cell, kind="stable")
        self.cell_faces = face_of[order]
        self.cell_start = np.searchsorted(cell[order], np.arange(self.shape[0] * self.shape[1] + 1))
        self._tree = None

    def _cell(self, p):
        c = np.floor((p - self.origin) / self.h).astype(np.int64)
        c[:, 0] = np.clip(c[:, 0], 0, self.shape[0] - 1)
        c[:, 1] = np.clip(c[:, 1], 0, self.shape[1] - 1)
        return c

    def locate(self, points, tol: float = 1e-10):
        """Return ``(face, bary)``; ``face`` is -1 for points outside the mesh."""
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        k = len(p)
        face = -np.ones(k, dtype=np.int64)
        bary = np.zeros((k, 3))
        if k == 0:
            return face, bary
        rel = (p - self.origin) / self.h
        inside_grid = np.all((rel >= -1e-9) & (rel <= np.array(self.shape) + 1e-9), axis=1)
        q = np.flatnonzero(inside_grid)
        c = self._cell(p[q])
        cell = c[:, 0] * self.shape[1] + c[:, 1]
        start = self.cell_start[cell]
        cnt = self.cell_start[cell + 1] - start
        q_rep = np.repeat(q, cnt)
        off = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        cand = self.cell_faces[np.repeat(start, cnt) + off]
        if len(cand) == 0:
            return face, bary
        b = barycentric(p[q_rep], self.uv[self.faces[cand]])
        depth = b.min(axis=1)
        ok = depth >= -tol
        q_rep, cand, b, depth = q_rep[ok], cand[ok], b[ok], depth[ok]
        # deepest candidate per point: sort by (point, -depth) and take the first
        order = np.lexsort((-depth, q_rep))
        q_rep, cand, b = q_rep[order], cand[order], b[order]
        first = np.ones(len(q_rep), dtype=bool)
        first[1:] = q_rep[1:] != q_rep[:-1]
        sel_q = q_rep[first]
        face[sel_q] = cand[first]
        bary[sel_q] = b[first]
        self._snap(p, face, bary)
        return face, bary

    def _snap(self, p, face, bary):
        """Exact unit coordinates for points sitting exactly on a vertex."""
        hit = np.flatnonzero(face >= 0)
        if not hit.size:
            return
        corners = self.uv[self.faces[face[hit]]]
        eq = np.all(corners == p[hit, None, :], axis=2)
        on = eq.any(axis=1)
        rows = hit[on]
        bary[rows] = eq[on].astype(float)

    def nearest(self, points):
        """Closest face and the barycentric coordinates of the closest point on it."""
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        if self._tree is None:
            self._tree = cKDTree(self.uv[self.faces].mean(axis=1))
        kk = min(8, len(self.faces))
        _, idx = self._tree.query(p, k=kk)
        idx = np.asarray(idx).reshape(len(p), kk)
        tri = self.uv[self.faces[idx]]  # (k, kk, 3, 2)
        q = np.repeat(p[:, None, :], kk, axis=1)
        b = barycentric(q.reshape(-1, 2), tri.reshape(-1, 3, 2)).reshape(len(p), kk, 3)
        inside = b.min(axis=2) >= 0
        best_b = np.where(inside[..., None], b, 0.0)
        best_d = np.where(inside, 0.0, np.inf)
        for e in range(3):
            a, c = tri[:, :, e], tri[:, :, (e + 1) % 3]
            ac = c - a
            t = np.clip(np.sum((q - a) * ac, axis=2) / np.sum(ac * ac, axis=2), 0.0, 1.0)
            d = np.linalg.norm(a + t[..., None] * ac - q, axis=2)
            better = d < best_d
            be = np.zeros_like(b)
            be[..., e] = 1 - t
            be[..., (e + 1) % 3] = t
            best_b = np.where(better[..., None], be, best_b)
            best_d = np.where(better, d, best_d)
        j = np.argmin(best_d, axis=1)
        rows = np.arange(len(p))
        return idx[rows, j], best_b[rows, j]


def rasterize_triangles(uv, faces, origin, spacing, shape, tol: float = 1e-10):
    """Containing face and barycentric coordinates for every pixel centre.

    Pixel ``(row, col)`` sits at ``origin + (col, row) * spacing``. Work is
    proportional to the summed bounding-box pixel counts of the triangles.
    """
    uv = np.asarray(uv, dtype=float)
    faces = np.asarray(faces, dtype=np.int64)
    ny, nx = shape
    pix = (uv - np.asarray(origin)) / spacing
    tri = pix[faces]
    lo = np.ceil(tri.min(axis=1) - 1e-9).astype(np.int64)
    hi = np.floor(tri.max(axis=1) + 1e-9).astype(np.int64)
    lo[:, 0] = np.clip(lo[:, 0], 0, nx)
    lo[:, 1] = np.clip(lo[:, 1], 0, ny)
    hi[:, 0] = np.clip(hi[:, 0], -1, nx - 1)
    hi[:, 1] = np.clip(hi[:, 1], -1, ny - 1)
    wx = np.maximum(hi[:, 0] - lo[:, 0] + 1, 0)
    wy = np.maximum(hi[:, 1] - lo[:, 1] + 1, 0)
    count = wx * wy
    fid = np.repeat(np.arange(len(faces)), count)
    local = np.arange(count.sum()) - np.repeat(np.cumsum(count) - count, count)
    cx = lo[fid, 0] + local % wx[fid]
    cy = lo[fid, 1] + local // wx[fid]
    b = barycentric(np.column_stack([cx, cy]).astype(float), tri[fid])
    depth = b.min(axis=1)
    ok = depth >= -tol
    fid, cx, cy, b, depth = fid[ok], cx[ok], cy[ok], b[ok], depth[ok]
    p = cy * nx + cx
    order = np.lexsort((-depth, p))
    p, fid, b = p[order], fid[order], b[order]
    first = np.ones(len(p), dtype=bool)
    first[1:] = p[1:] != p[:-1]
    face = -np.ones(ny * nx, dtype=np.int64)
    bary = np.zeros((ny * nx, 3))
    face[p[first]] = fid[first]
    bary[p[first]] = b[first]
    return face, bary
