"""Seeded synthetic datasets used by experiments and acceptance checks."""
from __future__ import annotations

import numpy as np

from .graph_embed import GraphDataset
from .surfaces import BasePointSet

#: Radial growth per unit angle of the two-arm spiral dataset.
SPIRAL_PITCH = 0.35
#: Angular extent of each spiral arm (two full windings).
SPIRAL_ANGLES = (0.5 * np.pi, 4.5 * np.pi)


def helicoid_two_clusters(
    n_per_cluster: int = 40, seed: int = 0, noise: float = 0.05
) -> tuple[BasePointSet, np.ndarray]:
    """Two intertwined spiral arms, as helicoid base points and as a flat map.

    Each arm follows r = pitch * angle with a half-turn offset between arms,
    so in the helicoid base plane the arms are two parallel noisy stripes,
    while their planar projection (r cos angle, r sin angle) interleaves the
    arms beyond what any linear transform can separate. Returns the labeled
    base points and the planar projection used by Euclidean baselines.
    """
    rng = np.random.default_rng(seed)
    lo, hi = SPIRAL_ANGLES
    base_rows = []
    labels = []
    for arm, offset in ((0, 0.0), (1, np.pi)):
        theta = rng.uniform(lo, hi, size=n_per_cluster)
        r = SPIRAL_PITCH * theta + noise * rng.standard_normal(n_per_cluster)
        angle = theta + offset + noise * rng.standard_normal(n_per_cluster)
        base_rows.append(np.column_stack([r, angle]))
        labels.extend([arm] * n_per_cluster)
    base = np.vstack(base_rows)
    planar = np.column_stack([base[:, 0] * np.cos(base[:, 1]), base[:, 0] * np.sin(base[:, 1])])
    return BasePointSet(points=base, labels=labels), planar


def gaussian_pair_generator(d: int = 2, separation: float = 2.0):
    """Factory for i.i.d. two-class Gaussian samples in R^d.

    The returned callable has the (m, rng) -> (points, labels) signature the
    generalization-gap experiment expects.
    """

    def generate(m: int, rng: np.random.Generator):
        labels = rng.integers(0, 2, size=m)
        centers = np.zeros((m, d))
        centers[:, 0] = np.where(labels == 1, separation / 2.0, -separation / 2.0)
        return centers + rng.standard_normal((m, d)), labels.tolist()

    return generate


def planted_partition_graph(
    n_nodes: int = 500,
    n_classes: int = 20,
    p_in: float = 0.25,
    p_out: float = 0.008,
    seed: int = 0,
    name: str = "planted-partition",
) -> GraphDataset:
    """Random graph with community structure aligned to node classes.

    Within-class edges appear with probability p_in, cross-class with p_out.
    A spanning chain within and across classes is added so the graph is
    always connected.
    """
    rng = np.random.default_rng(seed)
    labels = [i % n_classes for i in range(n_nodes)]
    edges = set()
    for i in range(n_nodes):
        for j in range(i + 1, n_nodes):
            p = p_in if labels[i] == labels[j] else p_out
            if rng.random() < p:
                edges.add((i, j))
    by_class: dict[int, list[int]] = {}
    for i, y in enumerate(labels):
        by_class.setdefault(y, []).append(i)
    for members in by_class.values():
        for a, b in zip(members, members[1:]):
            edges.add((a, b))
    reps = [members[0] for members in by_class.values()]
    for a, b in zip(reps, reps[1:]):
        edges.add((min(a, b), max(a, b)))
    return GraphDataset(
        node_ids=list(range(n_nodes)),
        labels=labels,
        edges=sorted(edges),
        name=name,
    )
