"""Parametric test meshes: grids, disks, spheres, cylinders, caps."""
from __future__ import annotations

import numpy as np

from .mesh import TriMesh


def grid_faces(nx: int, ny: int) -> np.ndarray:
    """Two CCW triangles per cell of an ``nx`` by ``ny`` vertex lattice (row-major, x fastest)."""
    i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="xy")
    a = (j * nx + i).ravel()
    b, c, d = a + 1, a + nx, a + nx + 1
    return np.concatenate([np.stack([a, b, d], 1), np.stack([a, d, c], 1)])


def grid_patch(n: int, size: float = 1.0, height=None) -> TriMesh:
    """Square ``n`` x ``n`` grid on [0, size]^2, optionally lifted by ``height(x, y)``."""
    t = np.linspace(0.0, size, n)
    x, y = np.meshgrid(t, t, indexing="xy")
    x, y = x.ravel(), y.ravel()
    z = np.zeros_like(x) if height is None else height(x, y)
    return TriMesh(np.column_stack([x, y, z]), grid_faces(n, n))


def disk_points(rings: int) -> tuple[np.ndarray, np.ndarray]:
    """Concentric-ring triangulation of the unit disk.

    Ring k carries 6k vertices, so the mesh has 1 + 3R(R+1) vertices and
    nearly equilateral triangles.
    """
    pts = [np.zeros(2)]
    starts = [0]
    for k in range(1, rings + 1):
        n = 6 * k
        a = 2 * np.pi * np.arange(n) / n
        starts.append(starts[-1] + (1 if k == 1 else 6 * (k - 1)))
        pts.append(np.column_stack([np.cos(a), np.sin(a)]) * (k / rings))
    pts = np.vstack(pts)
    faces = []
    for k in range(1, rings + 1):
        n1 = 6 * k
        o0 = starts[k]
        if k == 1:
            for j in range(n1):
                faces.append((0, o0 + j, o0 + (j + 1) % n1))
            continue
        n0 = 6 * (k - 1)
        i0 = starts[k - 1]
        i = j = 0
        while i < n0 or j < n1:
            next_in = (i + 1) / n0
            next_out = (j + 1) / n1
            if j < n1 and (i == n0 or next_out <= next_in):
                faces.append((i0 + i % n0, o0 + j, o0 + (j + 1) % n1))
                j += 1
            else:
                faces.append((i0 + i % n0, o0 + j % n1, i0 + (i + 1) % n0))
                i += 1
    return pts, np.array(faces, dtype=np.int64)


def rings_for_vertices(n_vertices: int) -> int:
    """Ring count whose disk mesh has about ``n_vertices`` vertices."""
    return max(1, int(round((-3 + np.sqrt(9 + 12 * (n_vertices - 1))) / 6)))


def disk_mesh(rings: int, radius: float = 1.0, height=None) -> TriMesh:
    p, f = disk_points(rings)
    p = p * radius
    z = np.zeros(len(p)) if height is None else height(p[:, 0], p[:, 1])
    return TriMesh(np.column_stack([p, z]), f)


def icosphere(subdivisions: int, radius: float = 1.0) -> TriMesh:
    t = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
         [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
         [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]],
        dtype=float,
    )
    f = np.array(
        [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
         [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
         [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
         [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]],
        dtype=np.int64,
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(subdivisions):
        he = np.stack([f, np.roll(f, -1, axis=1)], axis=2).reshape(-1, 2)
        edges, inv = np.unique(np.sort(he, axis=1), axis=0, return_inverse=True)
        mid = 0.5 * (v[edges[:, 0]] + v[edges[:, 1]])
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        m = inv.reshape(-1).reshape(len(f), 3) + len(v)
        v = np.vstack([v, mid])
        a, b, c = f[:, 0], f[:, 1], f[:, 2]
        ab, bc, ca = m[:, 0], m[:, 1], m[:, 2]
        f = np.concatenate([
            np.stack([a, ab, ca], 1), np.stack([b, bc, ab], 1),
            np.stack([c, ca, bc], 1), np.stack([ab, bc, ca], 1),
        ])
    return TriMesh(v * radius, f)


def cylinder_strip(radius: float, n_around: int = 48, n_along: int = 24,
                   angle: float = np.pi, length: float = 1.0) -> TriMesh:
    """Open strip of a cylinder about the z axis, outward normals."""
    th = np.linspace(0.0, angle, n_around)
    z = np.linspace(0.0, length, n_along)
    T, Z = np.meshgrid(th, z, indexing="xy")
    T, Z = T.ravel(), Z.ravel()
    v = np.column_stack([radius * np.cos(T), radius * np.sin(T), Z])
    return TriMesh(v, grid_faces(n_around, n_along))


def spherical_cap(rings: int, polar_angle: float = np.pi / 2, radius: float = 1.0) -> TriMesh:
    """Cap of a sphere around the north pole; ``pi/2`` gives a hemisphere."""
    p, f = disk_points(rings)
    rho = np.linalg.norm(p, axis=1)
    phi = np.arctan2(p[:, 1], p[:, 0])
    th = rho * polar_angle
    v = np.column_stack([np.sin(th) * np.cos(phi), np.sin(th) * np.sin(phi), np.cos(th)])
    return TriMesh(radius * v, f)


def open_tetrahedron() -> TriMesh:
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    # the closed tetrahedron minus face (0, 2, 1)
    return TriMesh(v, [[0, 1, 3], [1, 2, 3], [2, 0, 3]])


def closed_tetrahedron() -> TriMesh:
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    return TriMesh(v, [[0, 2, 1], [0, 1, 3], [1, 2, 3], [2, 0, 3]])
