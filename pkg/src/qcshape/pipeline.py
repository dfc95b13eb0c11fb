"""All-pairs registration, dissimilarity assembly, clustering and reporting."""
from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cluster import (ClusterLabels, hierarchical_cluster, kmeans, loocv, mds,
                      pairwise_accuracy, procrustes_matrix)
from .conformal import PlanarEmbedding, lscm
from .curvature import curvature_field, normalize_field
from .dissim import ComponentCache, IndexWeights, ShapeFields, shape_index_components
from .errors import MeshError, NumericalError, QCShapeError
from .mesh import LandmarkCorrespondence, TriMesh, load_mesh, validate_topology
from .register import RegistrationConfig, inconsistent_planar_register

logger = logging.getLogger(__name__)

WORKERS_ENV = "QCSHAPE_WORKERS"


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be >= 1")
    return n


# ----------------------------------------------------------------- manifest

@dataclass(frozen=True)
class Specimen:
    id: str
    mesh: Path
    landmarks: tuple
    label: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    specimens: tuple
    root: Path

    def __post_init__(self):
        if not self.specimens:
            raise MeshError("manifest lists no specimens")
        ids = [s.id for s in self.specimens]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            raise MeshError(f"duplicate specimen ids: {dup}")
        counts = {len(s.landmarks) for s in self.specimens}
        if len(counts) > 1:
            raise MeshError(f"landmark lists differ in length across specimens: {sorted(counts)}")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        if not path.is_file():
            raise MeshError(f"manifest not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise MeshError(f"{path}: invalid JSON ({e})") from None
        entries = data.get("specimens") if isinstance(data, dict) else None
        if not isinstance(entries, list):
            raise MeshError(f"{path}: expected an object with a 'specimens' list")
        specs = []
        for k, e in enumerate(entries):
            try:
                sid, mesh, lms = str(e["id"]), e["mesh"], e["landmarks"]
            except (KeyError, TypeError):
                raise MeshError(f"{path}: specimen {k} needs 'id', 'mesh' and 'landmarks'") from None
            if not all(isinstance(v, int) for v in lms):
                raise MeshError(f"{path}: specimen {sid!r} landmarks must be integers")
            mpath = (path.parent / mesh).resolve()
            if not mpath.is_file():
                raise MeshError(f"{path}: specimen {sid!r} mesh file not found: {mpath}")
            label = e.get("label")
            specs.append(Specimen(sid, mpath, tuple(lms), None if label is None else str(label)))
        return cls(tuple(specs), path.parent)

    @property
    def ids(self) -> tuple:
        return tuple(s.id for s in self.specimens)

    @property
    def labels(self):
        labs = [s.label for s in self.specimens]
        return None if any(l is None for l in labs) else labs


# ------------------------------------------------------------------ config

@dataclass(frozen=True)
class PipelineConfig:
    manifest: Path
    out_dir: Path
    registration: RegistrationConfig = field(default_factory=RegistrationConfig)
    weights: IndexWeights | None = None
    sweep_increment: float = 0.05
    cluster_method: str = "kmeans"
    k: int | None = None
    linkage: str = "average"
    replicates: int = 100
    mds_dim: int = 2
    workers: int = 1
    seed: int = 0
    clip_percentile: float | None = None
    skip_failed: bool = False

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        simplex_grid(self.sweep_increment)
        if self.cluster_method not in ("kmeans", "hierarchical"):
            raise ValueError(f"unknown clustering method {self.cluster_method!r}")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["manifest"] = str(self.manifest)
        d["out_dir"] = str(self.out_dir)
        return d


def simplex_grid(increment: float) -> list[IndexWeights]:
    """All ``(a, b, c)`` on the simplex with coordinates in multiples of ``increment``."""
    if not 0 < increment <= 1:
        raise ValueError("sweep increment must be in (0, 1]")
    m = round(1.0 / increment)
    if abs(m * increment - 1.0) > 1e-9:
        raise ValueError(f"sweep increment {increment} does not divide 1 evenly")
    return [IndexWeights(i / m, j / m, (m - i - j) / m) for i in range(m + 1) for j in range(m + 1 - i)]


# ------------------------------------------------------------- preprocessing

@dataclass(frozen=True, eq=False)
class Prepared:
    id: str
    mesh: TriMesh
    emb: PlanarEmbedding
    intensity: np.ndarray
    fields: ShapeFields
    landmarks: tuple


def prepare(spec: Specimen, clip_percentile=None) -> Prepared:
    mesh = load_mesh(spec.mesh)
    try:
        rep = validate_topology(mesh)
    except MeshError as e:
        raise MeshError(f"specimen {spec.id!r}: {e}") from None
    if not rep.is_simply_connected_open:
        raise MeshError(f"specimen {spec.id!r}: not a simply-connected open surface "
                        f"(chi={rep.euler_characteristic}, {rep.boundary_loop_count} boundary loops)")
    bad = [v for v in spec.landmarks if not 0 <= v < mesh.n_vertices]
    if bad:
        raise MeshError(f"specimen {spec.id!r}: landmark ids out of range {bad}")
    curv = curvature_field(mesh)
    return Prepared(
        spec.id, mesh, lscm(mesh),
        normalize_field(curv.gaussian, "unit", clip_percentile).values,
        ShapeFields.from_curvature(curv, clip_percentile),
        spec.landmarks,
    )


def register_pair(a: Prepared, b: Prepared, config: RegistrationConfig):
    """Register ``a`` onto ``b``; returns the component integrals and a summary."""
    lm = LandmarkCorrespondence(a.landmarks, b.landmarks)
    reg = inconsistent_planar_register(a.emb, b.emb, a.intensity, b.intensity, lm, config)
    comps = shape_index_components(reg, a.fields, b.fields)
    f1, f2 = reg.area_fractions()
    summary = {
        "source": a.id, "target": b.id,
        "iterations": reg.iterations, "converged": reg.converged,
        "omega1_area_fraction": f1, "omega2_area_fraction": f2,
        "max_landmark_residual": float(reg.landmark_residuals().max()),
        "domain_diameter": reg.h.domain.diameter,
        "intensity_trace": [t["intensity"] for t in reg.trace],
        "mean_mu_abs": float(reg.mu_abs[reg.omega1].mean()),
        "final_intensity": reg.trace[-1]["intensity"],
        "components": comps.tolist(),
    }
    return comps, summary


_WORKER_STATE: dict = {}


def _init_worker(prepared, config):
    _WORKER_STATE["prepared"] = prepared
    _WORKER_STATE["config"] = config


def _pair_task(ij):
    i, j = ij
    p = _WORKER_STATE["prepared"]
    t0 = time.perf_counter()
    try:
        comps, summary = register_pair(p[i], p[j], _WORKER_STATE["config"])
    except QCShapeError as e:
        return i, j, None, {"source": p[i].id, "target": p[j].id, "error": f"{type(e).__name__}: {e}"}, \
            time.perf_counter() - t0
    return i, j, comps, summary, time.perf_counter() - t0


def compute_components(prepared, config: RegistrationConfig, workers: int = 1, skip_failed: bool = False):
    """Component integrals for every ordered pair; self-pairs are zero without registering."""
    n = len(prepared)
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    logger.info("registering %d ordered pairs (%d self-pairs short-circuited)", len(pairs), n)
    if workers == 1 or len(pairs) <= 1:
        _init_worker(prepared, config)
        results = [_pair_task(p) for p in pairs]
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(prepared, config)) as ex:
            results = list(ex.map(_pair_task, pairs, chunksize=1))
    comps = np.zeros((3, n, n))
    failed = np.zeros((n, n), dtype=bool)
    summaries, timings = [], []
    for i, j, c, s, dt in results:  # index-ordered reduction
        summaries.append(s)
        timings.append(dt)
        if c is None:
            if not skip_failed:
                raise NumericalError(f"registration {s['source']} -> {s['target']} failed: {s['error']}")
            logger.warning("pair %s -> %s failed: %s", s["source"], s["target"], s["error"])
            failed[i, j] = True
        else:
            comps[:, i, j] = c
    # a failed direction falls back on the reverse one, which min() then picks up
    for i, j in zip(*np.nonzero(failed)):
        if failed[j, i]:
            raise NumericalError(f"both registrations between {prepared[i].id} and {prepared[j].id} failed")
        comps[:, i, j] = comps[:, j, i]
    return ComponentCache(comps, tuple(p.id for p in prepared)), summaries, timings


# --------------------------------------------------------------- clustering

def cluster_matrix(D, k, method="kmeans", linkage="average", replicates=100, seed=0, p=2):
    n = len(D)
    emb = mds(D, min(p, max(n - 1, 1)))
    if method == "kmeans":
        labels = kmeans(emb.points, k, replicates, seed)
    else:
        labels = hierarchical_cluster(D, k, linkage)
    return labels, emb


def _truth_codes(labels):
    return None if labels is None else np.unique(labels, return_inverse=True)[1]


def sweep_weights(cache: ComponentCache, increment: float, truth, k: int,
                  replicates: int = 100, seed: int = 0, method: str = "kmeans",
                  linkage: str = "average", p: int = 2) -> list[dict]:
    """Pairwise accuracy at every simplex grid point, reusing cached components."""
    if cache is None:
        raise MeshError("no cached component integrals to sweep")
    truth = np.asarray(truth)
    rows = []
    for w in simplex_grid(increment):
        D = cache.matrix(w).D
        labels, _ = cluster_matrix(D, k, method, linkage, replicates, seed, p)
        rows.append({"alpha": w.alpha, "beta": w.beta, "gamma": w.gamma,
                     "accuracy": pairwise_accuracy(labels.labels, truth)})
    return rows


def best_rows(rows):
    top = max(r["accuracy"] for r in rows)
    return [r for r in rows if r["accuracy"] == top]


def central_best(rows) -> dict:
    """Tied best grid point nearest the centroid of the tied set.

    Edge points of a plateau flip under small weight changes; the central
    one does not. Ties in distance go to the earlier grid point.
    """
    best = best_rows(rows)
    W = np.array([[r["alpha"], r["beta"], r["gamma"]] for r in best])
    d = np.linalg.norm(W - W.mean(axis=0), axis=1)
    return best[int(np.argmin(d))]


def write_csv_rows(path, rows):
    import csv

    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def _dump(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cluster_report(D, ids, truth_labels, config: PipelineConfig, k, weights=None):
    labels, emb = cluster_matrix(D, k, config.cluster_method, config.linkage,
                                 config.replicates, config.seed, config.mds_dim)
    rep = {"ids": list(ids), **labels.to_dict(), "seed": config.seed,
           "mds_dim": emb.points.shape[1], "stress": emb.stress}
    if weights is not None:
        rep["weights"] = asdict(weights)
    if truth_labels is not None and len(ids) >= 2:
        codes = _truth_codes(truth_labels)
        rep["accuracy"] = pairwise_accuracy(labels.labels, codes)
    return rep, labels, emb


def run_pipeline(config: PipelineConfig) -> Path:
    """Run the full batch and write reports into ``config.out_dir``."""
    t_start = time.perf_counter()
    manifest = DatasetManifest.load(config.manifest)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}

    t0 = time.perf_counter()
    prepared = [prepare(s, config.clip_percentile) for s in manifest.specimens]
    timings["preprocess_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cache, pair_summaries, pair_times = compute_components(
        prepared, config.registration, config.workers, config.skip_failed)
    timings["registration_s"] = time.perf_counter() - t0
    timings["per_pair_s"] = pair_times
    cache.save(out)
    _dump(out / "registrations.json", pair_summaries)

    n = len(prepared)
    truth = manifest.labels
    codes = _truth_codes(truth)
    k = config.k or (len(set(truth)) if truth is not None else 1)
    k = min(k, n)
    summary = {"config": config.to_dict(), "n_specimens": n, "ids": list(manifest.ids),
               "n_registrations": len(pair_summaries), "self_pairs_short_circuited": n, "k": k}

    t0 = time.perf_counter()
    weights = config.weights
    if truth is not None and n >= 2:
        rows = sweep_weights(cache, config.sweep_increment, codes, k, config.replicates,
                             config.seed, config.cluster_method, config.linkage, config.mds_dim)
        write_csv_rows(out / "sweep.csv", rows)
        best = best_rows(rows)
        summary["sweep"] = {"increment": config.sweep_increment, "points": len(rows),
                            "best_accuracy": best[0]["accuracy"], "best_weights": best}
        chosen = central_best(rows)
        summary["sweep"]["chosen_weights"] = chosen
        if weights is None:
            b = chosen
            weights = IndexWeights(b["alpha"], b["beta"], b["gamma"])
    if weights is None:
        weights = IndexWeights(1 / 3, 1 / 3, 1 - 2 / 3)
    dm = cache.matrix(weights)
    dm.to_csv(out / "D.csv")
    rep, labels, emb = cluster_report(dm.D, dm.ids, truth, config, k, weights)
    if truth is not None and n > k:
        try:
            rep["loocv_accuracy"] = loocv(dm.D, codes, k, config.mds_dim, config.replicates, config.seed).accuracy
        except (NumericalError, ValueError) as e:
            rep["loocv_error"] = str(e)
    _dump(out / "clusters.json", rep)
    write_csv_rows(out / "mds.csv", [
        {"id": i, **{f"x{d + 1}": float(x) for d, x in enumerate(row)}} for i, row in zip(dm.ids, emb.points)])
    summary["weights"] = asdict(weights)
    summary["accuracy"] = rep.get("accuracy")
    summary["loocv_accuracy"] = rep.get("loocv_accuracy")

    if truth is not None and n >= 3 and len(prepared[0].landmarks) >= 3:
        try:
            P = procrustes_matrix([p.mesh.vertices[list(p.landmarks)] for p in prepared])
            plab, _ = cluster_matrix(P, k, config.cluster_method, config.linkage,
                                     config.replicates, config.seed, config.mds_dim)
            summary["procrustes_accuracy"] = pairwise_accuracy(plab.labels, codes)
        except ValueError as e:
            summary["procrustes_error"] = str(e)
    timings["clustering_s"] = time.perf_counter() - t0
    timings["total_s"] = time.perf_counter() - t_start
    _dump(out / "summary.json", summary)
    _dump(out / "timings.json", timings)
    return out
