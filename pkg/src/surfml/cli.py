"""Batch command-line driver for the library.

Subcommands wire the modules into seeded, config-driven pipelines:
ingestion (GML or synthetic), manifold MDS embedding, metric learning,
clustering, kNN evaluation, geodesic queries and the generalization-gap
experiment. Every output file carries the effective-config hash, the seed
and the tool version as header comments, so re-running an identical config
reproduces identical bytes.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .clustering import kmeans_fit
from .errors import InputError, NumericalError
from .geodesic import GeodesicConfig, pairwise_distances, refine_path
from .graph_embed import (
    Dissimilarity,
    GraphDataset,
    graph_distances,
    largest_component,
    load_dissimilarity_csv,
    load_gml,
    mds_embed,
)
from .metric_learning import OptimizerConfig, fit
from .neighbors_eval import knn_classify, nmi, split_eval
from .surfaces import BasePointSet, Surface, get_surface
from .synthetic import (
    gaussian_pair_generator,
    helicoid_two_clusters,
    planted_partition_graph,
)

#: Defaults for every config field; a JSON config file overrides these, and
#: explicitly passed flags override the JSON file.
DEFAULTS = {
    "seed": 0,
    "surface": "euclidean:2",
    "out_dir": "out",
    "threads": 1,  # recorded for provenance; stages are single-threaded
    "dataset": None,
    "tau": 1.0,
    "dim": None,
    "k": 5,
    "kmeans_k": 2,
    "objective": "mmc",
    "lam": 1.0,
    "max_iters": 200,
    "n_target_neighbors": 3,
    "n_intermediate": 16,
    "n_samples": 32,
    "quadrature_points": 16,
    "max_sweeps": 50,
    "rel_tol": 1e-4,
    "splits": 10,
    "test_frac": 0.2,
    "restarts": 10,
    "transform": None,
    "from_point": None,
    "to_point": None,
    "ratio_ns": None,
    "m_values": "25,50,100,200,400",
    "trials": 3,
}


def _load_json_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise InputError(f"config file not found: {path}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise InputError(f"config file {path} is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise InputError(f"config file {path} must hold a JSON object")
    unknown = set(doc) - set(DEFAULTS)
    if unknown:
        raise InputError(f"unknown config fields in {path}: {sorted(unknown)}")
    return doc


def effective_config(args: argparse.Namespace) -> dict:
    """Merge defaults, the JSON config file, and explicit flags (in that order)."""
    cfg = dict(DEFAULTS)
    cfg.update(_load_json_config(getattr(args, "config", None)))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def config_hash(cfg: dict) -> str:
    # out_dir and threads cannot affect results, so they do not affect the hash.
    hashed = {k: v for k, v in cfg.items() if k not in ("out_dir", "threads")}
    blob = json.dumps(hashed, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _header(cfg: dict) -> str:
    return (
        f"# config_hash={config_hash(cfg)}\n"
        f"# seed={cfg['seed']}\n"
        f"# version={__version__}\n"
    )


def _write(cfg: dict, path: Path, body: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_header(cfg) + body)
    print(f"wrote {path}")


def _geo_config(cfg: dict, **overrides) -> GeodesicConfig:
    kw = {
        "n_intermediate": int(cfg["n_intermediate"]),
        "n_samples": int(cfg["n_samples"]),
        "quadrature_points": int(cfg["quadrature_points"]),
        "max_sweeps": int(cfg["max_sweeps"]),
        "rel_tol": float(cfg["rel_tol"]),
        "seed": int(cfg["seed"]),
    }
    kw.update(overrides)
    return GeodesicConfig(**kw)


def _opt_config(cfg: dict) -> OptimizerConfig:
    return OptimizerConfig(
        lam=float(cfg["lam"]),
        max_iters=int(cfg["max_iters"]),
        n_target_neighbors=int(cfg["n_target_neighbors"]),
        seed=int(cfg["seed"]),
    )


# ---------------------------------------------------------------------------
# Dataset resolution
# ---------------------------------------------------------------------------

def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"dataset file not found: {path}")
    return p


def load_graph_dataset(spec: str, seed: int) -> GraphDataset:
    """A graph from a GML path or a synthetic generator spec."""
    if spec == "synthetic:planted-partition":
        return planted_partition_graph(seed=seed)
    if spec.endswith(".gml"):
        return load_gml(_require_file(spec))
    raise InputError(f"not a graph dataset: {spec!r} (expected *.gml or synthetic:planted-partition)")


def load_point_dataset(spec: str, seed: int) -> BasePointSet:
    """Labeled base points from an embedding CSV or a synthetic generator."""
    if spec == "synthetic:helicoid-two-clusters":
        pts, _ = helicoid_two_clusters(seed=seed)
        return pts
    if spec.endswith(".csv"):
        return read_embedding_csv(_require_file(spec))
    raise InputError(
        f"not a point dataset: {spec!r} (expected *.csv or synthetic:helicoid-two-clusters)"
    )


def embedding_csv(node_ids, points: np.ndarray, labels) -> str:
    """Embedding table: node id, base coordinates, label (may be empty)."""
    d = points.shape[1]
    lines = ["node," + ",".join(f"b{i+1}" for i in range(d)) + ",label"]
    labels = labels if labels is not None else [""] * len(node_ids)
    for nid, row, lab in zip(node_ids, points, labels):
        lines.append(f"{nid}," + ",".join(repr(float(v)) for v in row) + f",{lab}")
    return "\n".join(lines) + "\n"


def read_embedding_csv(path: Path) -> BasePointSet:
    rows = []
    labels = []
    node_ids = []
    header = None
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line or line.startswith("#"):
            continue
        if header is None:
            header = line.split(",")
            if header[0] != "node" or header[-1] != "label":
                raise InputError(f"{path}:{lineno}: expected 'node,b1,..,label' header")
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} cells, got {len(cells)}")
        node_ids.append(cells[0])
        try:
            rows.append([float(v) for v in cells[1:-1]])
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric coordinate") from None
        labels.append(cells[-1])
    if not rows:
        raise InputError(f"{path}: no data rows")
    lab = None if all(v == "" for v in labels) else labels
    return BasePointSet(points=np.asarray(rows), labels=lab)


def _trace_csv(trace, column: str) -> str:
    lines = [f"step,{column}"]
    lines += [f"{i},{v!r}" for i, v in enumerate(trace)]
    return "\n".join(lines) + "\n"


def _load_transform(path: str, d: int) -> np.ndarray:
    p = _require_file(path)
    L = np.loadtxt(p, delimiter=",", comments="#", ndmin=2)
    if L.shape != (d, d):
        raise InputError(f"transform in {path} has shape {L.shape}, expected ({d}, {d})")
    return L


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_embed(cfg: dict) -> int:
    if cfg["dataset"] is None:
        raise InputError("embed needs --dataset (a .gml file, a dissimilarity .csv, "
                         "or synthetic:planted-partition)")
    surface = get_surface(cfg["surface"])
    seed = int(cfg["seed"])
    spec = str(cfg["dataset"])
    if spec.endswith(".csv"):
        delta, node_ids = load_dissimilarity_csv(_require_file(spec), tau=float(cfg["tau"]))
        labels = None
    else:
        ds = largest_component(load_graph_dataset(spec, seed))
        delta = graph_distances(ds, tau=float(cfg["tau"]))
        node_ids, labels = ds.node_ids, ds.labels
    base, info = mds_embed(
        surface, delta, tau=float(cfg["tau"]), opt=_opt_config(cfg),
        seed=seed, node_ids=node_ids, geo=_geo_config(cfg),
    )
    out = Path(cfg["out_dir"])
    _write(cfg, out / "embedding.csv", embedding_csv(node_ids, base.points, labels))
    _write(cfg, out / "stress_trace.csv", _trace_csv(info["trace"], "stress"))
    print(f"stress={info['stress']!r} tau={info['tau']!r} n={info['n']}")
    return 0


def cmd_learn(cfg: dict) -> int:
    if cfg["dataset"] is None:
        raise InputError("learn needs --dataset (an embedding .csv or "
                         "synthetic:helicoid-two-clusters)")
    surface = get_surface(cfg["surface"])
    points = load_point_dataset(str(cfg["dataset"]), int(cfg["seed"]))
    if points.labels is None:
        raise InputError("learn needs labeled points")
    kind = str(cfg["objective"])
    if kind not in ("mmc", "lmnn"):
        raise InputError(f"objective must be 'mmc' or 'lmnn', got {kind!r}")
    L, trace = fit(surface, points, objective_kind=kind,
                   opt=_opt_config(cfg), geo=_geo_config(cfg))
    out = Path(cfg["out_dir"])
    body = "\n".join(",".join(repr(float(v)) for v in row) for row in L.matrix) + "\n"
    _write(cfg, out / "transform.csv", body)
    _write(cfg, out / "objective_trace.csv", _trace_csv(trace, "objective"))
    print(f"objective: {trace[0]!r} -> {trace[-1]!r} in {len(trace) - 1} accepted steps")
    return 0


def cmd_cluster(cfg: dict) -> int:
    if cfg["dataset"] is None:
        raise InputError("cluster needs --dataset (an embedding .csv or "
                         "synthetic:helicoid-two-clusters)")
    surface = get_surface(cfg["surface"])
    points = load_point_dataset(str(cfg["dataset"]), int(cfg["seed"]))
    L = None
    if cfg["transform"] is not None:
        L = _load_transform(str(cfg["transform"]), surface.base_dim)
    dist = pairwise_distances(surface, points, transform=L, config=_geo_config(cfg))
    assignment = kmeans_fit(dist, int(cfg["kmeans_k"]),
                            restarts=int(cfg["restarts"]), seed=int(cfg["seed"]))
    out = Path(cfg["out_dir"])
    _write(cfg, out / "assignment.csv", assignment.to_csv())
    report = [f"cost,{assignment.cost!r}"]
    if points.labels is not None:
        score = nmi(assignment.labels.tolist(), points.labels)
        report.append(f"nmi,{score!r}")
        print(f"cost={assignment.cost!r} nmi={score!r}")
    else:
        print(f"cost={assignment.cost!r}")
    _write(cfg, out / "cluster_report.csv", "metric,value\n" + "\n".join(report) + "\n")
    return 0


def _knn_pipeline(surface: Surface, geo: GeodesicConfig, k: int,
                  learn: Optional[str], opt: OptimizerConfig):
    def pipeline(train_pts, train_labels, test_pts):
        L = None
        if learn is not None:
            lt, _ = fit(surface, BasePointSet(train_pts, labels=train_labels),
                        objective_kind=learn, opt=opt, geo=geo)
            L = lt.matrix
        both = np.vstack([train_pts, test_pts])
        full = pairwise_distances(surface, both, transform=L, config=geo)
        n_train = len(train_pts)
        return knn_classify(full[n_train:, :n_train], train_labels, k)

    return pipeline


def cmd_knn(cfg: dict) -> int:
    """The four-cell comparison: {Euclidean, chosen surface} x {plain, learned}."""
    if cfg["dataset"] is None:
        raise InputError("knn needs --dataset (a .gml file or synthetic:planted-partition)")
    seed = int(cfg["seed"])
    ds = largest_component(load_graph_dataset(str(cfg["dataset"]), seed))
    if ds.labels is None:
        raise InputError("knn needs node labels in the dataset")
    delta = graph_distances(ds, tau=float(cfg["tau"]))
    surface = get_surface(cfg["surface"])
    d = surface.base_dim
    geo = _geo_config(cfg)
    opt = _opt_config(cfg)
    k = int(cfg["k"])

    cells = []
    for surf in (get_surface(f"euclidean:{d}"), surface):
        base, _ = mds_embed(surf, delta, tau=float(cfg["tau"]), opt=opt,
                            seed=seed, node_ids=ds.node_ids, geo=geo)
        for learn in (None, str(cfg["objective"])):
            name = surf.name + ("" if learn is None else f"+{learn}")
            report = split_eval(
                base.points, ds.labels, _knn_pipeline(surf, geo, k, learn, opt),
                n_splits=int(cfg["splits"]), test_frac=float(cfg["test_frac"]),
                seed=seed, metadata={"cell": name, "k": k},
            )
            cells.append((name, report))
            print(f"{name}: {report}")
    lines = ["cell,mean_error,std_error"]
    lines += [f"{name},{rep.mean!r},{rep.std!r}" for name, rep in cells]
    _write(cfg, Path(cfg["out_dir"]) / "knn_report.csv", "\n".join(lines) + "\n")
    return 0


def _parse_point(text: str, what: str, d: int) -> np.ndarray:
    try:
        vals = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise InputError(f"{what} must be comma-separated numbers, got {text!r}") from None
    if vals.shape != (d,):
        raise InputError(f"{what} must have {d} coordinates, got {len(vals)}")
    return vals


def cmd_geodesic(cfg: dict) -> int:
    surface = get_surface(cfg["surface"])
    d = surface.base_dim
    if cfg["from_point"] is None or cfg["to_point"] is None:
        raise InputError("geodesic needs --from and --to (base-space coordinates)")
    b1 = _parse_point(str(cfg["from_point"]), "--from", d)
    b2 = _parse_point(str(cfg["to_point"]), "--to", d)
    surface.require_in_domain(b1, "--from")
    surface.require_in_domain(b2, "--to")
    geo = _geo_config(cfg)
    x, y = surface.map(np.vstack([b1, b2]))
    poly, length = refine_path(surface, x, y, geo)
    out = Path(cfg["out_dir"])
    _write(cfg, out / "path.csv", poly.to_csv())
    closed = None
    if surface.closed_form_distance is not None:
        closed = surface.closed_form_distance(x, y)
        print(f"distance={length!r} closed_form={closed!r}")
    else:
        print(f"distance={length!r}")

    if cfg["ratio_ns"] is not None:
        if closed is None:
            raise InputError("--ratio-ns needs a surface with a closed-form distance")
        lines = ["n_intermediate,approx,closed_form,ratio"]
        for tok in str(cfg["ratio_ns"]).split(","):
            try:
                n = int(tok)
            except ValueError:
                raise InputError(f"--ratio-ns must be comma-separated integers, got {tok!r}") from None
            _, ln = refine_path(surface, x, y, dataclasses.replace(geo, n_intermediate=n))
            ratio = ln / closed if closed > 0 else 1.0
            lines.append(f"{n},{ln!r},{closed!r},{ratio!r}")
        _write(cfg, out / "ratio_sweep.csv", "\n".join(lines) + "\n")
    return 0


def cmd_gap_curve(cfg: dict) -> int:
    from .neighbors_eval import generalization_gap_curve

    surface = get_surface(cfg["surface"])
    try:
        m_values = [int(v) for v in str(cfg["m_values"]).split(",")]
    except ValueError:
        raise InputError(f"--m-values must be comma-separated integers, got {cfg['m_values']!r}") from None
    curve = generalization_gap_curve(
        surface, gaussian_pair_generator(d=surface.base_dim), m_values,
        n_trials=int(cfg["trials"]), opt=_opt_config(cfg),
        seed=int(cfg["seed"]), geo=_geo_config(cfg),
    )
    lines = ["m,mean_gap"]
    lines += [f"{m},{g!r}" for m, g in curve]
    _write(cfg, Path(cfg["out_dir"]) / "gap_curve.csv", "\n".join(lines) + "\n")
    for m, g in curve:
        print(f"m={m} gap={g!r}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing and entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surfml",
        description="Metric learning, geodesics, clustering and kNN on single-chart manifolds.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its fields")
        p.add_argument("--seed", type=int)
        p.add_argument("--surface", help="euclidean:<d> | hyperboloid:<d> | helicoid | monge:<name>")
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--threads", type=int, help="recorded in provenance; stages run single-threaded")
        p.add_argument("--n-intermediate", dest="n_intermediate", type=int)
        p.add_argument("--n-samples", dest="n_samples", type=int)
        p.add_argument("--quadrature-points", dest="quadrature_points", type=int)
        p.add_argument("--max-sweeps", dest="max_sweeps", type=int)
        p.add_argument("--rel-tol", dest="rel_tol", type=float)

    p = sub.add_parser("embed", help="graph or dissimilarity CSV -> surface embedding")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--tau", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)

    p = sub.add_parser("learn", help="labeled points -> linear transform")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--objective", choices=["mmc", "lmnn"])
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--n-target-neighbors", dest="n_target_neighbors", type=int)

    p = sub.add_parser("cluster", help="points -> k-means assignment and NMI")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--kmeans-k", dest="kmeans_k", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--transform", help="CSV with a learned d x d transform")

    p = sub.add_parser("knn", help="graph -> four-cell kNN error table")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--tau", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--objective", choices=["mmc", "lmnn"])
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--splits", type=int)
    p.add_argument("--test-frac", dest="test_frac", type=float)

    p = sub.add_parser("geodesic", help="distance and refined path between two base points")
    common(p)
    p.add_argument("--from", dest="from_point", help="comma-separated base coordinates")
    p.add_argument("--to", dest="to_point", help="comma-separated base coordinates")
    p.add_argument("--ratio-ns", dest="ratio_ns",
                   help="comma-separated n values for an approximation-ratio sweep")

    p = sub.add_parser("gap-curve", help="generalization gap vs. sample size")
    common(p)
    p.add_argument("--m-values", dest="m_values")
    p.add_argument("--trials", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)

    return parser


_COMMANDS = {
    "embed": cmd_embed,
    "learn": cmd_learn,
    "cluster": cmd_cluster,
    "knn": cmd_knn,
    "geodesic": cmd_geodesic,
    "gap-curve": cmd_gap_curve,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = effective_config(args)
        return _COMMANDS[args.command](cfg)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
