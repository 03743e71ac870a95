"""k-nearest-neighbor classification, evaluation metrics and split machinery."""
from __future__ import annotations

import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InputError
from .geodesic import GeodesicConfig, pairwise_distances
from .metric_learning import OptimizerConfig, minimize_matrix
from .surfaces import BasePointSet, Surface


@dataclass
class EvalReport:
    """Mean +/- std of a metric over evaluation splits, plus provenance."""

    metric: str
    mean: float
    std: float
    values: list[float]
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key in sorted(self.metadata):
            buf.write(f"# {key}={self.metadata[key]}\n")
        buf.write("split,value\n")
        for i, v in enumerate(self.values):
            buf.write(f"{i},{v!r}\n")
        buf.write(f"mean,{self.mean!r}\n")
        buf.write(f"std,{self.std!r}\n")
        return buf.getvalue()

    def __str__(self):
        return f"{self.metric}: {self.mean:.2f} ± {self.std:.2f}"


def knn_classify(dist_test_train: np.ndarray, train_labels: Sequence, k: int) -> list:
    """Majority vote over the k nearest training points per test row.

    dist_test_train has one row per test point and one column per training
    point. Distance ties break toward the lower training index; vote ties
    break toward the class of the nearest neighbor among the tied classes.
    """
    dist = np.atleast_2d(np.asarray(dist_test_train, dtype=float))
    train_labels = list(train_labels)
    if len(train_labels) == 0:
        raise InputError("empty training set")
    if dist.shape[1] != len(train_labels):
        raise InputError(
            f"distance matrix has {dist.shape[1]} columns but {len(train_labels)} train labels"
        )
    if not 1 <= k <= len(train_labels):
        raise InputError(f"k={k} out of range for {len(train_labels)} training points")
    preds = []
    for row in dist:
        order = np.lexsort((np.arange(len(row)), row))  # distance, then index
        nearest = order[:k]
        counts = Counter(train_labels[j] for j in nearest)
        top = max(counts.values())
        tied = {c for c, v in counts.items() if v == top}
        if len(tied) == 1:
            preds.append(next(iter(tied)))
        else:
            for j in nearest:
                if train_labels[j] in tied:
                    preds.append(train_labels[j])
                    break
    return preds


def zero_one_error(pred: Sequence, truth: Sequence) -> float:
    """Fraction of mismatched labels."""
    pred = list(pred)
    truth = list(truth)
    if len(pred) != len(truth):
        raise InputError(f"length mismatch: {len(pred)} vs {len(truth)}")
    if not pred:
        raise InputError("empty input")
    return sum(p != t for p, t in zip(pred, truth)) / len(pred)


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts / n
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def nmi(assignment_a: Sequence, assignment_b: Sequence) -> float:
    """Mutual information normalized by the arithmetic mean of entropies.

    Equals 1 for identical (up to relabeling) non-degenerate assignments and
    0 in the independence limit. When both sides are single-label, the two
    partitions are identical by construction and the value is defined as 1.
    """
    a = list(assignment_a)
    b = list(assignment_b)
    if len(a) != len(b) or not a:
        raise InputError("assignments must be nonempty and of equal length")
    n = len(a)
    cats_a = {c: i for i, c in enumerate(dict.fromkeys(a))}
    cats_b = {c: i for i, c in enumerate(dict.fromkeys(b))}
    table = np.zeros((len(cats_a), len(cats_b)))
    for x, y in zip(a, b):
        table[cats_a[x], cats_b[y]] += 1
    row = table.sum(axis=1)
    col = table.sum(axis=0)
    ha = _entropy(row, n)
    hb = _entropy(col, n)
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    mi = 0.0
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            if table[i, j] > 0:
                mi += (table[i, j] / n) * np.log(n * table[i, j] / (row[i] * col[j]))
    val = mi / (0.5 * (ha + hb))
    return float(min(max(val, 0.0), 1.0))


def stratified_splits(
    labels: Sequence, n_splits: int, test_frac: float, seed: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Repeated stratified holdout splits as (train_idx, test_idx) pairs."""
    labels = list(labels)
    by_class: dict = {}
    for i, y in enumerate(labels):
        by_class.setdefault(y, []).append(i)
    for y, members in by_class.items():
        if len(members) < 2:
            raise InputError(f"class {y!r} has {len(members)} member(s); cannot stratify")
    splits = []
    for child in np.random.SeedSequence(seed).spawn(n_splits):
        rng = np.random.default_rng(child)
        train, test = [], []
        for y in sorted(by_class, key=repr):
            members = np.array(by_class[y])
            perm = rng.permutation(len(members))
            n_test = min(max(1, round(test_frac * len(members))), len(members) - 1)
            test.extend(members[perm[:n_test]])
            train.extend(members[perm[n_test:]])
        splits.append((np.sort(np.array(train)), np.sort(np.array(test))))
    return splits


def split_eval(
    points: np.ndarray,
    labels: Sequence,
    pipeline: Callable[[np.ndarray, list, np.ndarray], list],
    n_splits: int = 10,
    test_frac: float = 0.2,
    seed: int = 0,
    metadata: Optional[dict] = None,
) -> EvalReport:
    """Repeated stratified holdout evaluation of a train-then-predict pipeline.

    pipeline(train_points, train_labels, test_points) must return predicted
    labels for the test points; the reported metric is the 0-1 error.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    labels = list(labels)
    values = []
    for train_idx, test_idx in stratified_splits(labels, n_splits, test_frac, seed):
        preds = pipeline(points[train_idx], [labels[i] for i in train_idx], points[test_idx])
        values.append(zero_one_error(preds, [labels[i] for i in test_idx]))
    meta = {
        "protocol": "repeated stratified holdout",
        "n_splits": n_splits,
        "test_frac": test_frac,
        "seed": seed,
    }
    meta.update(metadata or {})
    return EvalReport(
        metric="zero_one_error",
        mean=float(np.mean(values)),
        std=float(np.std(values)),
        values=values,
        metadata=meta,
    )


# ---------------------------------------------------------------------------
# Empirical generalization-gap scaling
# ---------------------------------------------------------------------------

def pair_hinge_loss(rho: np.ndarray, same: np.ndarray) -> np.ndarray:
    """Per-pair loss: distance for same-class pairs, unit-margin hinge otherwise.

    1-Lipschitz in the distance argument.
    """
    return np.where(same, rho, np.maximum(1.0 - rho, 0.0))


def _pairwise_error(
    surface: Surface,
    L: np.ndarray,
    points: np.ndarray,
    labels: np.ndarray,
    loss: Callable[[np.ndarray, np.ndarray], np.ndarray],
    config: GeodesicConfig,
) -> float:
    rho = pairwise_distances(surface, points, transform=L, config=config)
    same = np.equal.outer(labels, labels)
    iu, ju = np.triu_indices(len(points), k=1)
    return float(np.mean(loss(rho[iu, ju], same[iu, ju])))


def generalization_gap_curve(
    surface: Surface,
    generator: Callable[[int, np.random.Generator], tuple[np.ndarray, Sequence]],
    m_values: Sequence[int],
    n_trials: int = 3,
    opt: Optional[OptimizerConfig] = None,
    seed: int = 0,
    loss: Callable[[np.ndarray, np.ndarray], np.ndarray] = pair_hinge_loss,
    geo: Optional[GeodesicConfig] = None,
) -> list[tuple[int, float]]:
    """Empirical generalization gap of the learned transform vs. sample size.

    For each m, a transform is fit by minimizing the empirical pairwise loss
    on m samples (over transforms renormalized to Frobenius norm sqrt(d)),
    and the gap is the loss on a 10x held-out pool minus the training loss,
    averaged over trials.
    """
    opt = opt or OptimizerConfig()
    geo = geo or GeodesicConfig()
    m_values = list(m_values)
    pool_size = 10 * max(m_values)
    d = surface.base_dim
    sqrt_d = np.sqrt(d)

    def project(L):
        nrm = np.linalg.norm(L, "fro")
        return L if nrm == 0.0 else L * (sqrt_d / nrm)

    gaps = {m: [] for m in m_values}
    for child in np.random.SeedSequence(seed).spawn(n_trials):
        rng = np.random.default_rng(child)
        pool_pts, pool_labels = generator(pool_size, rng)
        pool_labels = np.asarray(pool_labels)
        for m in m_values:
            pts, labels = generator(m, rng)
            labels = np.asarray(labels)

            def train_err(L):
                return _pairwise_error(surface, L, pts, labels, loss, geo)

            L, _ = minimize_matrix(train_err, np.eye(d), opt, project=project)
            pool_err = _pairwise_error(surface, L, pool_pts, pool_labels, loss, geo)
            gaps[m].append(pool_err - train_err(L))
    return [(m, float(np.mean(gaps[m]))) for m in m_values]
