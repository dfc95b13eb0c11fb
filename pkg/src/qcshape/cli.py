"""Command-line entry point: ``python -m qcshape <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import MeshError, NumericalError

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2


def _registration_args(p):
    g = p.add_argument_group("registration")
    g.add_argument("--n-iter", type=int, default=20)
    g.add_argument("--lam", type=float, default=0.1, help="weight of the |mu|^2 regulariser")
    g.add_argument("--smooth-weight", type=float, default=1.0, help="weight of the |grad mu|^2 regulariser")
    g.add_argument("--demons-grid", type=int, default=256)
    g.add_argument("--demons-sigma", type=float, default=4.0)
    g.add_argument("--clip-percentile", type=float, default=None,
                   help="clip curvature at this percentile before normalising")


def _registration_config(a):
    from .register import RegistrationConfig

    return RegistrationConfig(n_iter=a.n_iter, lam=a.lam, smooth_weight=a.smooth_weight,
                              demons_grid=a.demons_grid, demons_sigma=a.demons_sigma)


def _cluster_args(p):
    g = p.add_argument_group("clustering")
    g.add_argument("--k", type=int, default=None, help="cluster count (default: number of truth classes)")
    g.add_argument("--method", choices=("kmeans", "hierarchical"), default="kmeans")
    g.add_argument("--linkage", choices=("single", "complete", "average"), default="average")
    g.add_argument("--replicates", type=int, default=100)
    g.add_argument("--mds-dim", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)


def _weights(text):
    from .dissim import IndexWeights

    try:
        a, b, c = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("weights must be 'alpha,beta,gamma'") from None
    try:
        return IndexWeights(a, b, c)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def build_parser() -> argparse.ArgumentParser:
    from .pipeline import WORKERS_ENV

    parser = argparse.ArgumentParser(prog="qcshape", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check mesh topology")
    p.add_argument("mesh", type=Path)

    p = sub.add_parser("curvature", help="per-vertex curvature CSV")
    p.add_argument("mesh", type=Path)
    p.add_argument("-o", "--out", type=Path, required=True)

    p = sub.add_parser("flatten", help="free-boundary conformal flattening CSV")
    p.add_argument("mesh", type=Path)
    p.add_argument("-o", "--out", type=Path, required=True)
    p.add_argument("--pins", type=int, nargs=2, metavar=("A", "B"))

    p = sub.add_parser("register", help="register one mesh pair")
    p.add_argument("source", type=Path)
    p.add_argument("target", type=Path)
    p.add_argument("landmarks", type=Path, help="file of 'source_id target_id' lines")
    p.add_argument("-o", "--out", type=Path, required=True)
    p.add_argument("--weights", type=_weights, default=None, help="alpha,beta,gamma for the shape index")
    _registration_args(p)

    p = sub.add_parser("pipeline", help="all-pairs registration, dissimilarity and clustering")
    p.add_argument("manifest", type=Path)
    p.add_argument("-o", "--out", type=Path, required=True)
    p.add_argument("--workers", type=int, default=None, help=f"worker processes (default ${WORKERS_ENV} or 1)")
    p.add_argument("--weights", type=_weights, default=None,
                   help="fixed alpha,beta,gamma (default: most central best point of the sweep)")
    p.add_argument("--increment", type=float, default=0.05, help="weight sweep grid increment")
    p.add_argument("--skip-failed", action="store_true")
    _registration_args(p)
    _cluster_args(p)

    p = sub.add_parser("sweep", help="weight sweep from cached component integrals")
    p.add_argument("run_dir", type=Path, help="pipeline output directory")
    p.add_argument("manifest", type=Path, help="manifest with truth labels")
    p.add_argument("--increment", type=float, default=0.05)
    p.add_argument("-o", "--out", type=Path, default=None, help="CSV path (default run_dir/sweep.csv)")
    _cluster_args(p)

    p = sub.add_parser("cluster", help="cluster a dissimilarity matrix CSV")
    p.add_argument("matrix", type=Path)
    p.add_argument("-o", "--out", type=Path, required=True, help="output directory")
    p.add_argument("--manifest", type=Path, default=None, help="manifest with truth labels")
    p.add_argument("--loocv", action="store_true")
    _cluster_args(p)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("-o", "--out", type=Path, required=True)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--per-class", type=int, default=5)
    p.add_argument("--resolution", type=int, default=40)
    p.add_argument("--seed", type=int, default=7)
    return parser


def _print(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_validate(a):
    from .mesh import load_mesh, validate_topology

    _print(validate_topology(load_mesh(a.mesh)).to_dict())


def cmd_curvature(a):
    from .curvature import curvature_field
    from .mesh import load_mesh

    curvature_field(load_mesh(a.mesh)).to_csv(a.out)


def cmd_flatten(a):
    from .conformal import lscm
    from .mesh import load_mesh

    mesh = load_mesh(a.mesh)
    emb = lscm(mesh, *a.pins) if a.pins else lscm(mesh)
    emb.to_csv(a.out)
    _print({"flipped_faces": int(emb.flipped.sum()), "n_vertices": mesh.n_vertices})


def cmd_register(a):
    from .conformal import lscm
    from .curvature import curvature_field
    from .dissim import ShapeFields, shape_index_components
    from .mesh import load_landmarks, load_mesh
    from .pipeline import _dump
    from .register import register_surfaces

    m1, m2 = load_mesh(a.source), load_mesh(a.target)
    lm = load_landmarks(a.landmarks, m1, m2)
    emb1, emb2 = lscm(m1), lscm(m2)
    reg = register_surfaces(m1, m2, lm, _registration_config(a), a.clip_percentile, emb1, emb2)
    a.out.mkdir(parents=True, exist_ok=True)
    rep = reg.report()
    comps = shape_index_components(
        reg, ShapeFields.from_curvature(curvature_field(m1), a.clip_percentile),
        ShapeFields.from_curvature(curvature_field(m2), a.clip_percentile))
    rep["components"] = {"mu": comps[0], "mean_curvature": comps[1], "gaussian_curvature": comps[2]}
    if a.weights is not None:
        rep["delta"] = float(a.weights.as_array() @ comps)
    _dump(a.out / "registration.json", rep)
    reg.h.domain.with_uv(reg.h.image).to_csv(a.out / "map.csv")
    reg.h.mu.to_csv(a.out / "beltrami.csv")
    np.savetxt(a.out / "omega1.csv", reg.omega1.astype(int), fmt="%d")
    np.savetxt(a.out / "omega2.csv", reg.omega2.astype(int), fmt="%d")
    _print({k: rep[k] for k in ("iterations", "converged", "max_landmark_residual",
                                "omega1_area_fraction", "omega2_area_fraction")})


def cmd_pipeline(a):
    from .pipeline import PipelineConfig, default_workers, run_pipeline

    cfg = PipelineConfig(
        manifest=a.manifest, out_dir=a.out, registration=_registration_config(a), weights=a.weights,
        sweep_increment=a.increment, cluster_method=a.method, k=a.k, linkage=a.linkage,
        replicates=a.replicates, mds_dim=a.mds_dim, seed=a.seed,
        workers=a.workers if a.workers is not None else default_workers(),
        clip_percentile=a.clip_percentile, skip_failed=a.skip_failed)
    out = run_pipeline(cfg)
    summary = json.loads((out / "summary.json").read_text())
    _print({k: summary.get(k) for k in ("n_specimens", "n_registrations", "weights", "accuracy",
                                        "loocv_accuracy", "procrustes_accuracy")})


def cmd_sweep(a):
    from .dissim import ComponentCache
    from .pipeline import DatasetManifest, _truth_codes, best_rows, central_best, sweep_weights, write_csv_rows

    cache = ComponentCache.load(a.run_dir)
    man = DatasetManifest.load(a.manifest)
    if man.ids != cache.ids:
        raise MeshError("manifest ids do not match the cached components")
    if man.labels is None:
        raise MeshError("manifest has no truth labels")
    k = a.k or len(set(man.labels))
    rows = sweep_weights(cache, a.increment, _truth_codes(man.labels), k, a.replicates, a.seed,
                         a.method, a.linkage, a.mds_dim)
    write_csv_rows(a.out or a.run_dir / "sweep.csv", rows)
    _print({"points": len(rows), "best": best_rows(rows), "chosen": central_best(rows)})


def cmd_cluster(a):
    from .cluster import loocv
    from .dissim import DissimilarityMatrix
    from .pipeline import DatasetManifest, _dump, _truth_codes, cluster_matrix, pairwise_accuracy, write_csv_rows

    dm = DissimilarityMatrix.from_csv(a.matrix)
    truth = None
    if a.manifest is not None:
        man = DatasetManifest.load(a.manifest)
        if set(man.ids) != set(dm.ids):
            raise MeshError("manifest ids do not match the matrix ids")
        lab = dict(zip(man.ids, man.labels or [None] * len(man.ids)))
        truth = None if man.labels is None else _truth_codes([lab[i] for i in dm.ids])
    k = a.k or (len(set(truth.tolist())) if truth is not None else None)
    if k is None:
        raise MeshError("--k is required without truth labels")
    labels, emb = cluster_matrix(dm.D, k, a.method, a.linkage, a.replicates, a.seed, a.mds_dim)
    rep = {"ids": list(dm.ids), **labels.to_dict(), "seed": a.seed, "stress": emb.stress}
    if truth is not None:
        rep["accuracy"] = pairwise_accuracy(labels.labels, truth)
        if a.loocv:
            rep["loocv_accuracy"] = loocv(dm.D, truth, k, a.mds_dim, a.replicates, a.seed).accuracy
    a.out.mkdir(parents=True, exist_ok=True)
    _dump(a.out / "clusters.json", rep)
    write_csv_rows(a.out / "mds.csv", [
        {"id": i, **{f"x{d + 1}": float(x) for d, x in enumerate(row)}} for i, row in zip(dm.ids, emb.points)])
    _print({k_: rep[k_] for k_ in rep if k_ in ("labels", "accuracy", "loocv_accuracy", "stress")})


def cmd_synth(a):
    from .synth import generate_synthetic

    print(generate_synthetic(a.classes, a.per_class, a.resolution, a.seed, a.out))


COMMANDS = {
    "validate": cmd_validate, "curvature": cmd_curvature, "flatten": cmd_flatten,
    "register": cmd_register, "pipeline": cmd_pipeline, "sweep": cmd_sweep,
    "cluster": cmd_cluster, "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(a.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[a.command](a)
    except NumericalError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (MeshError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
