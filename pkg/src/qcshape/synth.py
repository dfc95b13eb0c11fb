"""Synthetic 'molar' specimens: height-field disks with four Gaussian cusps.

Classes differ in cusp sharpness (and mildly in height); apex positions and
heights are jittered independently of class, so landmark configurations
alone carry little class signal.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mesh import TriMesh, save_off
from .shapes import disk_points, rings_for_vertices

CUSP_LAYOUT = np.array([[0.42, 0.40], [-0.42, 0.40], [-0.42, -0.40], [0.42, -0.40]])


@dataclass(frozen=True)
class CuspParams:
    centres: np.ndarray  # (4, 2)
    heights: np.ndarray  # (4,)
    widths: np.ndarray  # (4,)
    radius: float
    rotation: float


def class_template(c: int) -> tuple[np.ndarray, np.ndarray]:
    """Cusp widths and heights of class ``c``."""
    base = 0.13 + 0.055 * c
    widths = base * np.array([1.0, 0.9, 1.1, 0.95])
    heights = np.full(4, 0.28)
    return widths, heights


def sample_params(c: int, rng: np.random.Generator) -> CuspParams:
    widths, heights = class_template(c)
    return CuspParams(
        centres=CUSP_LAYOUT + rng.uniform(-0.06, 0.06, size=(4, 2)),
        heights=heights * rng.uniform(0.75, 1.25, size=4),
        widths=widths * rng.uniform(0.95, 1.05, size=4),
        radius=float(rng.uniform(0.95, 1.08)),
        rotation=float(rng.uniform(-np.pi, np.pi)),
    )


def height(params: CuspParams, x, y):
    z = np.zeros_like(x)
    for (cx, cy), h, w in zip(params.centres, params.heights, params.widths):
        z += h * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * w * w))
    return z


def make_specimen(params: CuspParams, resolution: int) -> tuple[TriMesh, list[int]]:
    """Mesh with about ``resolution**2`` vertices and its four apex landmarks."""
    p, f = disk_points(rings_for_vertices(resolution * resolution))
    p = p * params.radius
    z = height(params, p[:, 0], p[:, 1])
    # neighbours for hill climbing onto the discrete apex
    nbrs = [set() for _ in range(len(p))]
    for a, b, c in f:
        nbrs[a] |= {b, c}
        nbrs[b] |= {a, c}
        nbrs[c] |= {a, b}
    landmarks = []
    for centre in params.centres:
        v = int(np.argmin(np.sum((p - centre) ** 2, axis=1)))
        while True:
            best = max(nbrs[v], key=lambda u: (z[u], -u))
            if z[best] <= z[v]:
                break
            v = best
        landmarks.append(int(v))
    c, s = np.cos(params.rotation), np.sin(params.rotation)
    xy = p @ np.array([[c, s], [-s, c]])
    return TriMesh(np.column_stack([xy, z]), f), landmarks


def generate_synthetic(class_count: int, per_class: int, resolution: int, seed: int, out_dir) -> Path:
    """Write ``class_count * per_class`` OFF specimens plus ``manifest.json`` to ``out_dir``."""
    if class_count < 1 or per_class < 1:
        raise ValueError("class_count and per_class must be >= 1")
    if resolution < 8:
        raise ValueError("resolution must be >= 8")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    specimens = []
    for c in range(class_count):
        for j in range(per_class):
            sid = f"c{c}_s{j:02d}"
            mesh, lms = make_specimen(sample_params(c, rng), resolution)
            save_off(mesh, out / f"{sid}.off")
            specimens.append({"id": sid, "mesh": f"{sid}.off", "landmarks": lms, "label": f"class{c}"})
    manifest = {
        "generator": {"class_count": class_count, "per_class": per_class,
                      "resolution": resolution, "seed": seed},
        "specimens": specimens,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def crop_radial(mesh: TriMesh, fraction: float, landmarks=()) -> tuple[TriMesh, np.ndarray]:
    """Remove the outer band holding ``fraction`` of the surface area.

    Returns the cropped mesh and, for each kept vertex, its index in ``mesh``.
    Landmark vertices must survive the crop.
    """
    centre = mesh.vertices[:, :2].mean(axis=0)
    fc = mesh.vertices[mesh.faces][:, :, :2].mean(axis=1)
    r = np.linalg.norm(fc - centre, axis=1)
    order = np.argsort(-r)
    area = mesh.face_areas[order]
    drop = np.cumsum(area) <= fraction * area.sum()
    keep = np.ones(mesh.n_faces, dtype=bool)
    keep[order[drop]] = False
    sub, idx = mesh.submesh(keep)
    missing = set(landmarks) - set(idx.tolist())
    if missing:
        raise ValueError(f"crop removed landmark vertices {sorted(missing)}")
    return sub, idx
