"""Triangle-mesh container, ASCII readers/writers, topology checks and landmarks."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import MeshError, TopologyError

logger = logging.getLogger(__name__)

DEGENERATE_AREA_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle surface.

    Parameters
    ----------
    vertices : (n, 3) float array
    faces : (m, 3) int array, counter-clockwise w.r.t. the outward normal.
    attributes : optional per-vertex scalar arrays keyed by name.

    The arrays are made read-only on construction so a mesh can be shared
    between threads and worker processes without copying.
    """

    vertices: np.ndarray
    faces: np.ndarray
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        f = np.array(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] not in (2, 3):
            raise MeshError(f"vertices must be (n, 3), got shape {v.shape}")
        if v.shape[1] == 2:
            v = np.column_stack([v, np.zeros(len(v))])
        if f.ndim != 2 or f.shape[1] != 3:
            if f.size == 0:
                f = f.reshape(0, 3)
            else:
                raise MeshError(f"faces must be (m, 3), got shape {f.shape}")
        if len(f) == 0:
            raise MeshError("mesh has no faces")
        if not np.all(np.isfinite(v)):
            raise MeshError("non-finite vertex coordinates")
        bad = np.flatnonzero((f < 0).any(axis=1) | (f >= len(v)).any(axis=1))
        if bad.size:
            raise MeshError(
                f"face {bad[0]} references vertex index out of range [0, {len(v)})"
            )
        rep = np.flatnonzero(
            (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        )
        if rep.size:
            raise MeshError(f"face {rep[0]} repeats a vertex: {f[rep[0]].tolist()}")
        diag2 = float(np.sum((v.max(axis=0) - v.min(axis=0)) ** 2))
        areas = _face_areas(v, f)
        tiny = np.flatnonzero(areas < DEGENERATE_AREA_TOL * diag2)
        if tiny.size:
            raise MeshError(
                f"face {tiny[0]} is degenerate (area {areas[tiny[0]]:.3e})"
            )
        attrs = {}
        for name, values in dict(self.attributes).items():
            a = np.asarray(values, dtype=float)
            if a.shape != (len(v),):
                raise MeshError(f"attribute {name!r} must have one value per vertex")
            a.setflags(write=False)
            attrs[name] = a
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "attributes", attrs)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted (i, j) pairs."""
        return _edge_table(self.faces)[0]

    @property
    def face_areas(self) -> np.ndarray:
        return _face_areas(self.vertices, self.faces)

    @property
    def face_normals(self) -> np.ndarray:
        v, f = self.vertices, self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @property
    def vertex_normals(self) -> np.ndarray:
        """Area-weighted vertex normals."""
        v, f = self.vertices, self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        vn = np.zeros_like(v)
        for k in range(3):
            np.add.at(vn, f[:, k], n)
        norm = np.linalg.norm(vn, axis=1, keepdims=True)
        norm[norm == 0] = 1.0
        return vn / norm

    @property
    def diameter(self) -> float:
        """Bounding-box diagonal."""
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def mean_edge_length(self) -> float:
        e = self.edges
        return float(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1).mean())

    def submesh(self, face_mask) -> tuple["TriMesh", np.ndarray]:
        """Mesh made of the selected faces, plus the old index of each kept vertex."""
        faces = self.faces[np.asarray(face_mask)]
        keep = np.unique(faces)
        remap = -np.ones(self.n_vertices, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        attrs = {k: a[keep] for k, a in self.attributes.items()}
        return TriMesh(self.vertices[keep], remap[faces], attrs), keep


def _face_areas(v, f):
    return 0.5 * np.linalg.norm(
        np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1
    )


def _edge_table(faces):
    """Unique sorted edges, and for each (face, local edge k) the edge id.

    Local edge k of a face joins corners k and k+1.
    """
    he = np.stack([faces, np.roll(faces, -1, axis=1)], axis=2).reshape(-1, 2)
    key = np.sort(he, axis=1)
    edges, inverse = np.unique(key, axis=0, return_inverse=True)
    return edges, inverse.reshape(-1).reshape(len(faces), 3)


@dataclass(frozen=True)
class TopologyReport:
    euler_characteristic: int
    boundary_loop_count: int
    is_simply_connected_open: bool
    genus: int
    n_vertices: int
    n_edges: int
    n_faces: int
    n_boundary_edges: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _check_manifold(mesh: TriMesh):
    f = mesh.faces
    edges, fe = _edge_table(f)
    count = np.bincount(fe.ravel(), minlength=len(edges))
    bad = np.flatnonzero(count > 2)
    if bad.size:
        raise TopologyError(
            f"non-manifold edge {edges[bad[0]].tolist()} borders {count[bad[0]]} faces"
        )
    # Corners sharing a vertex across an interior edge are linked; each vertex
    # must end up with a single connected fan of corners.
    nf = len(f)
    corner_id = np.arange(3 * nf).reshape(nf, 3)
    flat_e = fe.ravel()
    order = np.argsort(flat_e, kind="stable")
    se = flat_e[order]
    pair_start = np.flatnonzero((se[:-1] == se[1:]))
    a_he, b_he = order[pair_start], order[pair_start + 1]
    a_f, a_k = np.divmod(a_he, 3)
    b_f, b_k = np.divmod(b_he, 3)
    rows, cols = [], []
    for ends in (0, 1):
        va = f[a_f, (a_k + ends) % 3]
        # corner of face b holding the same vertex
        bk = np.argmax(f[b_f] == va[:, None], axis=1)
        rows.append(corner_id[a_f, (a_k + ends) % 3])
        cols.append(corner_id[b_f, bk])
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    g = sparse.coo_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(3 * nf, 3 * nf)
    )
    _, comp = connected_components(g, directed=False)
    corner_vertex = f.ravel()
    pairs = np.unique(np.stack([corner_vertex, comp]), axis=1)
    fans = np.bincount(pairs[0], minlength=mesh.n_vertices)
    bad_v = np.flatnonzero(fans > 1)
    if bad_v.size:
        raise TopologyError(
            f"non-manifold vertex {bad_v[0]}: incident faces form {fans[bad_v[0]]} fans"
        )
    return edges, count


def _boundary_loops(mesh: TriMesh, edges=None, count=None) -> list[np.ndarray]:
    f = mesh.faces
    if edges is None:
        edges, count = _check_manifold(mesh)
    _, fe = _edge_table(f)
    is_b = count[fe] == 1
    fi, k = np.nonzero(is_b)
    src = f[fi, k]
    dst = f[fi, (k + 1) % 3]
    if len(src) == 0:
        return []
    nxt = dict(zip(src.tolist(), dst.tolist()))
    seen = set()
    loops = []
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        cur = nxt[start]
        while cur != start:
            if cur in seen or cur not in nxt:
                raise TopologyError(f"boundary traversal broke at vertex {cur}")
            loop.append(cur)
            seen.add(cur)
            cur = nxt[cur]
        loops.append(np.array(loop, dtype=np.int64))
    return loops


def validate_topology(mesh: TriMesh) -> TopologyReport:
    """Euler characteristic, boundary loops and manifoldness of ``mesh``.

    Raises TopologyError on a non-manifold edge or vertex.
    """
    edges, count = _check_manifold(mesh)
    loops = _boundary_loops(mesh, edges, count)
    nv, ne, nf = mesh.n_vertices, len(edges), mesh.n_faces
    chi = nv - ne + nf
    b = len(loops)
    n_components, _ = connected_components(_adjacency(mesh, edges), directed=False)
    genus = (2 * n_components - chi - b) // 2
    nb = int(np.sum(count == 1))
    assert nb == sum(len(l) for l in loops)
    return TopologyReport(
        euler_characteristic=int(chi),
        boundary_loop_count=b,
        is_simply_connected_open=(chi == 1 and b == 1),
        genus=int(genus),
        n_vertices=nv,
        n_edges=ne,
        n_faces=nf,
        n_boundary_edges=nb,
    )


def _adjacency(mesh, edges=None):
    if edges is None:
        edges = mesh.edges
    n = mesh.n_vertices
    return sparse.coo_matrix(
        (np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n)
    )


def extract_boundary(mesh: TriMesh) -> np.ndarray:
    """The single boundary loop, ordered with the surface on its left."""
    loops = _boundary_loops(mesh)
    if len(loops) != 1:
        raise TopologyError(f"expected exactly one boundary loop, found {len(loops)}")
    return loops[0]


def boundary_vertex_mask(mesh: TriMesh) -> np.ndarray:
    edges, fe = _edge_table(mesh.faces)
    count = np.bincount(fe.ravel(), minlength=len(edges))
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    mask[edges[count == 1].ravel()] = True
    return mask


# ---------------------------------------------------------------- readers


def _data_lines(text):
    """(line number, tokens) for non-empty, non-comment lines."""
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if s:
            yield no, s.split()


def _read_off(text, path):
    lines = list(_data_lines(text))
    if not lines:
        raise MeshError(f"{path}: empty file")
    no, tok = lines[0]
    if not tok[0].upper().endswith("OFF"):
        raise MeshError(f"{path}:{no}: missing OFF header")
    rest = tok[1:]
    idx = 1
    if not rest:
        no, rest = lines[1]
        idx = 2
    try:
        nv, nf = int(rest[0]), int(rest[1])
    except (ValueError, IndexError):
        raise MeshError(f"{path}:{no}: bad count line {' '.join(rest)!r}") from None
    if len(lines) < idx + nv + nf:
        raise MeshError(f"{path}: expected {nv} vertices and {nf} faces, file truncated")
    verts, extra = [], []
    for no, tok in lines[idx : idx + nv]:
        try:
            vals = [float(t) for t in tok]
        except ValueError:
            raise MeshError(f"{path}:{no}: cannot parse vertex {' '.join(tok)!r}") from None
        if len(vals) < 3:
            raise MeshError(f"{path}:{no}: vertex needs 3 coordinates")
        verts.append(vals[:3])
        extra.append(vals[3:])
    faces = []
    for no, tok in lines[idx + nv : idx + nv + nf]:
        try:
            vals = [int(t) for t in tok]
        except ValueError:
            raise MeshError(f"{path}:{no}: cannot parse face {' '.join(tok)!r}") from None
        if vals[0] != 3:
            raise MeshError(f"{path}:{no}: non-triangle face with {vals[0]} vertices")
        tri = vals[1:4]
        if len(tri) != 3:
            raise MeshError(f"{path}:{no}: face lists fewer than 3 indices")
        for i in tri:
            if not 0 <= i < nv:
                raise MeshError(f"{path}:{no}: vertex index {i} out of range [0, {nv})")
        faces.append(tri)
    attrs = {}
    widths = {len(e) for e in extra}
    if len(widths) == 1 and (w := widths.pop()) > 0:
        ex = np.array(extra)
        attrs = {f"off_{j}": ex[:, j] for j in range(w)}
    return verts, faces, attrs


def _read_obj(text, path):
    verts, faces = [], []
    face_lines = []
    ignored = set()
    for no, tok in _data_lines(text):
        kind = tok[0]
        if kind == "v":
            try:
                verts.append([float(t) for t in tok[1:4]])
            except ValueError:
                raise MeshError(f"{path}:{no}: cannot parse vertex") from None
            if len(verts[-1]) != 3:
                raise MeshError(f"{path}:{no}: vertex needs 3 coordinates")
        elif kind == "f":
            idx = []
            for t in tok[1:]:
                try:
                    idx.append(int(t.split("/")[0]))
                except ValueError:
                    raise MeshError(f"{path}:{no}: cannot parse face index {t!r}") from None
            if len(idx) != 3:
                raise MeshError(f"{path}:{no}: non-triangle face with {len(idx)} vertices")
            faces.append(idx)
            face_lines.append(no)
        else:
            ignored.add(kind)
    if ignored:
        logger.warning("%s: ignoring OBJ records %s", path, sorted(ignored))
    nv = len(verts)
    out = []
    for no, tri in zip(face_lines, faces):
        fixed = []
        for i in tri:
            j = i - 1 if i > 0 else nv + i
            if not 0 <= j < nv:
                raise MeshError(f"{path}:{no}: vertex index {i} out of range")
            fixed.append(j)
        out.append(fixed)
    return verts, out, {}


def _read_ply(text, path):
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshError(f"{path}:1: missing ply magic")
    elements = []
    i = 1
    while True:
        if i >= len(lines):
            raise MeshError(f"{path}: missing end_header")
        tok = lines[i].split()
        i += 1
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if tok[1] != "ascii":
                raise MeshError(f"{path}:{i}: only ASCII PLY is supported")
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            elements[-1][2].append(tok[1:])
        elif tok[0] == "end_header":
            break
    body = [(n, l.split()) for n, l in enumerate(lines[i:], start=i + 1) if l.strip()]
    pos = 0
    verts, faces, attrs = [], [], {}
    for name, count, props in elements:
        chunk = body[pos : pos + count]
        if len(chunk) < count:
            raise MeshError(f"{path}: element {name!r} truncated")
        pos += count
        if name == "vertex":
            names = [p[-1] for p in props]
            try:
                data = np.array([[float(t) for t in tok[: len(names)]] for _, tok in chunk])
            except ValueError:
                raise MeshError(f"{path}: cannot parse vertex element") from None
            data = data.reshape(count, len(names))
            try:
                verts = data[:, [names.index(c) for c in "xyz"]]
            except ValueError:
                raise MeshError(f"{path}: vertex element lacks x/y/z") from None
            geometric = {"x", "y", "z", "nx", "ny", "nz", "s", "t", "u", "v",
                         "red", "green", "blue", "alpha"}
            for j, n in enumerate(names):
                if n not in geometric:
                    attrs[n] = data[:, j]
            skipped = [n for n in names if n in geometric - {"x", "y", "z"}]
            if skipped:
                logger.warning("%s: ignoring PLY vertex properties %s", path, skipped)
        elif name == "face":
            for no, tok in chunk:
                try:
                    k = int(tok[0])
                    idx = [int(t) for t in tok[1 : 1 + k]]
                except (ValueError, IndexError):
                    raise MeshError(f"{path}:{no}: cannot parse face") from None
                if k != 3:
                    raise MeshError(f"{path}:{no}: non-triangle face with {k} vertices")
                for j in idx:
                    if not 0 <= j < len(verts):
                        raise MeshError(f"{path}:{no}: vertex index {j} out of range")
                faces.append(idx)
        else:
            logger.warning("%s: ignoring PLY element %r", path, name)
    return verts, faces, attrs


_READERS = {"off": _read_off, "obj": _read_obj, "ply": _read_ply}


def load_mesh(path, format: str | None = None) -> TriMesh:
    """Read an ASCII OFF, OBJ or PLY triangle mesh.

    The format is taken from the suffix when not given.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt not in _READERS:
        raise MeshError(f"{path}: unsupported mesh format {fmt!r}")
    if not path.is_file():
        raise MeshError(f"{path}: no such file")
    verts, faces, attrs = _READERS[fmt](path.read_text(), path)
    try:
        return TriMesh(np.asarray(verts, dtype=float).reshape(-1, 3), np.asarray(faces).reshape(-1, 3), attrs)
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from None


def save_off(mesh: TriMesh, path, precision: int = 17):
    path = Path(path)
    lines = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} 0"]
    fmt = f"{{:.{precision}g}}"
    for p in mesh.vertices:
        lines.append(" ".join(fmt.format(x) for x in p))
    for t in mesh.faces:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")
    path.write_text("\n".join(lines) + "\n")


# -------------------------------------------------------------- landmarks


@dataclass(frozen=True)
class LandmarkCorrespondence:
    source_vertex_ids: tuple
    target_vertex_ids: tuple

    def __post_init__(self):
        s = tuple(int(i) for i in self.source_vertex_ids)
        t = tuple(int(i) for i in self.target_vertex_ids)
        if len(s) != len(t):
            raise MeshError(f"landmark length mismatch: {len(s)} source vs {len(t)} target")
        if len(s) < 1:
            raise MeshError("at least one landmark pair is required")
        for side, ids in (("source", s), ("target", t)):
            if len(set(ids)) != len(ids):
                raise MeshError(f"duplicate {side} landmark index")
        object.__setattr__(self, "source_vertex_ids", s)
        object.__setattr__(self, "target_vertex_ids", t)

    def __len__(self):
        return len(self.source_vertex_ids)

    def check(self, source: TriMesh, target: TriMesh):
        for side, ids, mesh in (
            ("source", self.source_vertex_ids, source),
            ("target", self.target_vertex_ids, target),
        ):
            for i in ids:
                if not 0 <= i < mesh.n_vertices:
                    raise MeshError(
                        f"{side} landmark {i} out of range [0, {mesh.n_vertices})"
                    )
        return self

    def reversed(self) -> "LandmarkCorrespondence":
        return LandmarkCorrespondence(self.target_vertex_ids, self.source_vertex_ids)


def load_landmarks(path, source: TriMesh, target: TriMesh) -> LandmarkCorrespondence:
    """Read whitespace-separated 0-based ``src tgt`` pairs, one per line."""
    path = Path(path)
    src, tgt = [], []
    for no, tok in _data_lines(path.read_text()):
        if len(tok) != 2:
            raise MeshError(f"{path}:{no}: expected 'src_index target_index'")
        try:
            a, b = int(tok[0]), int(tok[1])
        except ValueError:
            raise MeshError(f"{path}:{no}: landmark indices must be integers") from None
        src.append(a)
        tgt.append(b)
    try:
        return LandmarkCorrespondence(src, tgt).check(source, target)
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from None
