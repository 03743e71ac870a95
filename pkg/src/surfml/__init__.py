"""Metric learning, geodesics, clustering and kNN evaluation on single-chart
manifolds."""

__version__ = "0.1.0"

from .clustering import ClusterAssignment, cost_of, counting, kmeans_fit
from .geodesic import (
    GeodesicConfig,
    PathPolyline,
    distance,
    pairwise_distances,
    refine_path,
    segment_length,
)
from .graph_embed import (
    Dissimilarity,
    GraphDataset,
    graph_distances,
    largest_component,
    load_gml,
    mds_embed,
    save_gml,
)
from .metric_learning import (
    LinearTransform,
    OptimizerConfig,
    PairSets,
    TripleSet,
    build_pair_sets,
    build_triples,
    fit,
    lmnn_objective,
    mmc_objective,
    select_target_neighbors,
    transformed_distance,
)
from .neighbors_eval import (
    EvalReport,
    generalization_gap_curve,
    knn_classify,
    nmi,
    split_eval,
    zero_one_error,
)
from .surfaces import (
    BasePointSet,
    Surface,
    euclidean_surface,
    get_surface,
    helicoid_surface,
    hyperboloid_integrand,
    hyperboloid_surface,
    monge_patch_surface,
    register_monge_patch,
)

__all__ = [name for name in dir() if not name.startswith("_")]
