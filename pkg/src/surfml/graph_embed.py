"""Network ingestion, graph dissimilarities, and embedding onto a surface.

GML files are parsed with a small tolerant reader (unknown keys ignored,
diagnostics carry line numbers), dissimilarities are breadth-first hop
counts, and the embedding minimizes raw stress between surface distances and
scaled graph dissimilarities by gradient descent over the base coordinates.
"""
from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DisconnectedGraphError,
    DomainError,
    GmlParseError,
    InputError,
    NumericalError,
)
from .geodesic import GeodesicConfig, pairwise_distances
from .metric_learning import OptimizerConfig
from .surfaces import BasePointSet, Surface


@dataclass
class GraphDataset:
    """Undirected labeled graph: node ids, per-node class labels, edge list.

    Edges are index pairs into node_ids, deduplicated, with self-loops
    removed.
    """

    node_ids: list
    labels: list
    edges: list
    name: str = ""

    def __post_init__(self):
        n = len(self.node_ids)
        if len(self.labels) != n:
            raise InputError("every node needs a label")
        seen = set()
        clean = []
        for u, v in self.edges:
            if not (0 <= u < n and 0 <= v < n):
                raise InputError(f"edge ({u}, {v}) references a missing node")
            if u == v:
                continue
            key = (min(u, v), max(u, v))
            if key not in seen:
                seen.add(key)
                clean.append(key)
        self.edges = clean

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)


@dataclass
class Dissimilarity:
    """Symmetric nonnegative dissimilarity matrix with its scale factor."""

    matrix: np.ndarray
    tau: float = 1.0

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InputError(f"dissimilarity matrix must be square, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise InputError("dissimilarity matrix has non-finite entries")
        if not np.allclose(m, m.T):
            raise InputError("dissimilarity matrix must be symmetric")
        if np.any(np.abs(np.diagonal(m)) > 0):
            raise InputError("dissimilarity matrix must have a zero diagonal")
        if np.any(m < 0):
            raise InputError("dissimilarity entries must be nonnegative")


# ---------------------------------------------------------------------------
# GML parsing
# ---------------------------------------------------------------------------

def _tokenize_gml(text: str):
    tokens = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        i = 0
        while i < len(line):
            ch = line[i]
            if ch.isspace():
                i += 1
                continue
            if ch == '"':
                j = line.find('"', i + 1)
                if j < 0:
                    raise GmlParseError(f"line {lineno}: unterminated string")
                tokens.append((line[i + 1 : j], lineno, True))
                i = j + 1
                continue
            if ch in "[]":
                tokens.append((ch, lineno, False))
                i += 1
                continue
            j = i
            while j < len(line) and not line[j].isspace() and line[j] not in "[]\"":
                j += 1
            tokens.append((line[i:j], lineno, False))
            i = j
    return tokens


def _coerce(tok: str):
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        return float(tok)
    except ValueError:
        return tok


def _parse_block(tokens, pos):
    """Parse key/value entries until ']' or end; returns (entries, next_pos).

    Entries is a list of (key, value, lineno); values are scalars or nested
    entry lists.
    """
    entries = []
    while pos < len(tokens):
        tok, lineno, quoted = tokens[pos]
        if tok == "]" and not quoted:
            return entries, pos + 1
        if tok == "[" and not quoted:
            raise GmlParseError(f"line {lineno}: unexpected '['")
        key = tok
        pos += 1
        if pos >= len(tokens):
            raise GmlParseError(f"line {lineno}: key {key!r} has no value")
        vtok, vline, vquoted = tokens[pos]
        if vtok == "[" and not vquoted:
            sub, pos = _parse_block(tokens, pos + 1)
            entries.append((key, sub, lineno))
        else:
            entries.append((key, vtok if vquoted else _coerce(vtok), lineno))
            pos += 1
    return entries, pos


def parse_gml(text: str, name: str = "") -> GraphDataset:
    """Parse GML text into a GraphDataset; labels come from each node's
    `value` key when present, else its `label`, else the node id."""
    tokens = _tokenize_gml(text)
    entries, pos = _parse_block(tokens, 0)
    if pos < len(tokens):
        raise GmlParseError(f"line {tokens[pos][1]}: unbalanced ']'")
    graph = None
    for key, value, lineno in entries:
        if key == "graph":
            if not isinstance(value, list):
                raise GmlParseError(f"line {lineno}: 'graph' must open a block")
            graph = value
            break
    if graph is None:
        raise GmlParseError("no 'graph' block found")

    node_ids, labels = [], []
    id_to_index: dict = {}
    raw_edges = []
    for key, value, lineno in graph:
        if key == "node":
            fields = {k: v for k, v, _ in value} if isinstance(value, list) else {}
            if "id" not in fields:
                raise GmlParseError(f"line {lineno}: node without id")
            nid = fields["id"]
            if nid in id_to_index:
                raise GmlParseError(f"line {lineno}: duplicate node id {nid!r}")
            id_to_index[nid] = len(node_ids)
            node_ids.append(nid)
            labels.append(fields.get("value", fields.get("label", nid)))
        elif key == "edge":
            fields = {k: v for k, v, _ in value} if isinstance(value, list) else {}
            if "source" not in fields or "target" not in fields:
                raise GmlParseError(f"line {lineno}: edge without source/target")
            raw_edges.append((fields["source"], fields["target"], lineno))
    edges = []
    for s, t, lineno in raw_edges:
        if s not in id_to_index:
            raise GmlParseError(f"line {lineno}: edge source {s!r} is not a node id")
        if t not in id_to_index:
            raise GmlParseError(f"line {lineno}: edge target {t!r} is not a node id")
        edges.append((id_to_index[s], id_to_index[t]))
    return GraphDataset(node_ids=node_ids, labels=labels, edges=edges, name=name)


def load_gml(path) -> GraphDataset:
    """Load a GML file; directedness flags are ignored (treated undirected)."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise InputError(f"cannot read GML file {path}: {e}") from e
    import os

    return parse_gml(text, name=os.path.splitext(os.path.basename(str(path)))[0])


def _gml_scalar(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return f'"{v}"'


def save_gml(ds: GraphDataset, path=None) -> str:
    """Serialize a GraphDataset to GML; writes to path when given."""
    buf = io.StringIO()
    buf.write("graph [\n")
    for nid, label in zip(ds.node_ids, ds.labels):
        buf.write("  node [\n")
        buf.write(f"    id {_gml_scalar(nid)}\n")
        buf.write(f"    value {_gml_scalar(label)}\n")
        buf.write("  ]\n")
    for u, v in ds.edges:
        buf.write("  edge [\n")
        buf.write(f"    source {_gml_scalar(ds.node_ids[u])}\n")
        buf.write(f"    target {_gml_scalar(ds.node_ids[v])}\n")
        buf.write("  ]\n")
    buf.write("]\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    return text


# ---------------------------------------------------------------------------
# Graph distances
# ---------------------------------------------------------------------------

def _adjacency(ds: GraphDataset) -> list[list[int]]:
    adj = [[] for _ in range(ds.n_nodes)]
    for u, v in ds.edges:
        adj[u].append(v)
        adj[v].append(u)
    return adj


def connected_components(ds: GraphDataset) -> list[list[int]]:
    adj = _adjacency(ds)
    seen = [False] * ds.n_nodes
    comps = []
    for s in range(ds.n_nodes):
        if seen[s]:
            continue
        comp = [s]
        seen[s] = True
        queue = [s]
        while queue:
            u = queue.pop()
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    comp.append(v)
                    queue.append(v)
        comps.append(sorted(comp))
    return comps


def largest_component(ds: GraphDataset) -> GraphDataset:
    comps = connected_components(ds)
    keep = max(comps, key=len)
    index = {old: new for new, old in enumerate(keep)}
    return GraphDataset(
        node_ids=[ds.node_ids[i] for i in keep],
        labels=[ds.labels[i] for i in keep],
        edges=[(index[u], index[v]) for u, v in ds.edges if u in index and v in index],
        name=ds.name,
    )


def graph_distances(ds: GraphDataset, tau: float = 1.0) -> Dissimilarity:
    """Unweighted shortest-path hop counts between all node pairs (BFS)."""
    comps = connected_components(ds)
    if len(comps) > 1:
        sizes = [len(c) for c in comps]
        raise DisconnectedGraphError(
            f"graph {ds.name!r} has {len(comps)} components of sizes {sizes}; "
            "embed the largest component or fix the data"
        )
    n = ds.n_nodes
    adj = _adjacency(ds)
    mat = np.zeros((n, n))
    for s in range(n):
        dist = np.full(n, -1, dtype=int)
        dist[s] = 0
        frontier = [s]
        while frontier:
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if dist[v] < 0:
                        dist[v] = dist[u] + 1
                        nxt.append(v)
            frontier = nxt
        mat[s] = dist
    mat = np.minimum(mat, mat.T)
    return Dissimilarity(matrix=mat, tau=tau)


def load_dissimilarity_csv(path, tau: float = 1.0) -> tuple[Dissimilarity, list]:
    """Read a dissimilarity CSV: header row of node ids, then the matrix."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = [ln for ln in f.read().splitlines() if ln and not ln.startswith("#")]
    except OSError as e:
        raise InputError(f"cannot read dissimilarity CSV {path}: {e}") from e
    ids = lines[0].split(",")
    rows = [list(map(float, ln.split(","))) for ln in lines[1:]]
    mat = np.asarray(rows)
    if mat.shape != (len(ids), len(ids)):
        raise InputError(
            f"dissimilarity CSV shape {mat.shape} does not match {len(ids)} header ids"
        )
    return Dissimilarity(matrix=mat, tau=tau), ids


# ---------------------------------------------------------------------------
# Manifold MDS
# ---------------------------------------------------------------------------

def _node_seed(seed: int, node_id) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(int(seed).to_bytes(8, "little", signed=False))
    h.update(repr(node_id).encode())
    return int.from_bytes(h.digest(), "little")


def _init_coords(node_ids: Sequence, d: int, seed: int) -> np.ndarray:
    # Per-node seeding keyed by node id keeps the stress value invariant to
    # input-order permutations.
    B = np.empty((len(node_ids), d))
    for i, nid in enumerate(node_ids):
        rng = np.random.default_rng(_node_seed(seed, nid))
        B[i] = 0.1 * rng.standard_normal(d)
    return B


def _stress_and_rho(
    surface: Surface, B: np.ndarray, target: np.ndarray, geo: GeodesicConfig
) -> tuple[float, np.ndarray]:
    rho = pairwise_distances(surface, B, config=geo)
    res = rho - target
    iu, ju = np.triu_indices(len(B), k=1)
    return float(np.sum(res[iu, ju] ** 2)), rho


def _stress_gradient(
    surface: Surface,
    B: np.ndarray,
    target: np.ndarray,
    geo: GeodesicConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Gradient of the raw stress w.r.t. all base coordinates.

    Analytic and fully vectorized for the flat and hyperboloid surfaces;
    central finite differences per coordinate otherwise.
    """
    n, d = B.shape
    if surface.kind in ("euclidean", "hyperboloid"):
        rho = pairwise_distances(surface, B, config=geo)
        off = ~np.eye(n, dtype=bool)
        if np.any(rho[off] < 1e-12):
            # Coincident points make the distance non-differentiable; nudge
            # the evaluation point.
            B = B + 1e-8 * rng.standard_normal(B.shape)
            rho = pairwise_distances(surface, B, config=geo)
        R = rho - target
        np.fill_diagonal(R, 0.0)
        if surface.kind == "euclidean":
            with np.errstate(divide="ignore", invalid="ignore"):
                W = np.where(rho > 0, 2.0 * R / rho, 0.0)
            return W.sum(axis=1)[:, None] * B - W @ B
        S = np.atleast_2d(surface.map(B))
        g_diag = np.diagonal(surface.ambient_metric)
        U = -(S * g_diag) @ S.T
        denom = np.sqrt(np.maximum(U * U - 1.0, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            W = np.where(denom > 0, 2.0 * R / denom, 0.0)
        dS = -(W @ S) * g_diag
        J = surface.jacobian_batch(B)
        return np.einsum("nij,ni->nj", J, dS)
    # Generic fallback: finite differences over every coordinate.
    grad = np.zeros_like(B)
    for i in range(n):
        for c in range(d):
            h = 1e-6 * (1.0 + abs(B[i, c]))
            Bp = B.copy()
            Bm = B.copy()
            Bp[i, c] += h
            Bm[i, c] -= h
            sp, _ = _stress_and_rho(surface, Bp, target, geo)
            sm, _ = _stress_and_rho(surface, Bm, target, geo)
            grad[i, c] = (sp - sm) / (2.0 * h)
    return grad


def mds_embed(
    surface: Surface,
    delta: Dissimilarity,
    d: Optional[int] = None,
    tau: Optional[float] = None,
    opt: Optional[OptimizerConfig] = None,
    seed: int = 0,
    node_ids: Optional[Sequence] = None,
    geo: Optional[GeodesicConfig] = None,
) -> tuple[BasePointSet, dict]:
    """Embed a dissimilarity matrix on a surface by minimizing raw stress.

    Stress is the sum over pairs of (surface distance - tau * delta)^2,
    minimized by gradient descent with backtracking line search from a
    seeded Gaussian initialization. Returns the base points and metadata
    with the final stress and the (non-increasing) stress trace. Non-finite
    stress triggers reinitialization, up to 5 times.
    """
    opt = opt or OptimizerConfig()
    geo = geo or GeodesicConfig()
    d = d if d is not None else surface.base_dim
    if surface.base_dim != d:
        raise InputError(f"surface base_dim {surface.base_dim} != requested d {d}")
    tau = delta.tau if tau is None else tau
    n = delta.matrix.shape[0]
    ids = list(node_ids) if node_ids is not None else list(range(n))
    if len(ids) != n:
        raise InputError("node_ids length must match the dissimilarity matrix")
    target = tau * delta.matrix

    def stress(B):
        try:
            s, _ = _stress_and_rho(surface, B, target, geo)
        except DomainError:
            return np.inf
        return s

    last_error = None
    for attempt in range(5):
        rng = np.random.default_rng(np.random.SeedSequence([seed, attempt]))
        B = _init_coords(ids, d, seed + attempt * 7919)
        f = stress(B)
        if not np.isfinite(f):
            last_error = f"non-finite stress at initialization (attempt {attempt})"
            continue
        trace = [f]
        for _ in range(opt.max_iters):
            G = _stress_gradient(surface, B, target, geo, rng)
            gnorm = np.linalg.norm(G)
            if gnorm == 0.0:
                break
            eta = opt.lr_init / max(gnorm, 1.0)
            improved = False
            while eta >= opt.lr_min:
                cand = B - eta * G
                fc = stress(cand)
                if np.isfinite(fc) and fc < f:
                    B, f = cand, fc
                    improved = True
                    break
                eta *= opt.lr_shrink
            if not improved:
                break
            trace.append(f)
            if trace[-2] - trace[-1] < opt.rel_tol * max(trace[-2], 1e-300):
                break
        if np.isfinite(f):
            info = {"stress": f, "trace": trace, "tau": tau, "seed": seed, "n": n}
            return BasePointSet(points=B), info
        last_error = f"non-finite stress during optimization (attempt {attempt})"
    raise NumericalError(f"MDS embedding failed after 5 reinitializations: {last_error}")
