"""Coreset selection by clustered gradient matching.

Feature pipeline: store per-sample gradient features in a compact binary
format, sketch high-dimensional gradients with a seeded sign projection,
cluster the features, split the selection budget proportionally across
clusters, and greedily pursue a weighted subset per cluster whose summed
features match the cluster mean.  Baselines, an exhaustive oracle, and
approximation-theory diagnostics ride along for head-to-head comparison.
"""

from .store import (
    FeatureFileError,
    FeatureFileHeader,
    GradientFeatureMatrix,
    SampleManifest,
    SampleRecord,
    concat_feature_files,
    read_features,
    read_header,
    read_manifest,
    stream_feature_rows,
    write_features,
)
from .geometry import (
    AdamState,
    ProjectionSpec,
    adam_direction,
    combine_checkpoints,
    identity_sign_block,
    project_rows,
    rademacher_project,
)
from .cluster import ClusterAssignment, kmeans, nearest_centroid, normalize_rows
from .select import (
    OmpConfig,
    OmpResult,
    SelectionResult,
    SingularSystemError,
    allocate_budget,
    clustered_select,
    matching_error,
    omp_select,
    solve_weights,
)
from .baselines import (
    covering_radius,
    global_omp_select,
    kcenter_greedy,
    score_rank_select,
    uniform_select,
)
from .diagnostics import (
    SubmodularityReport,
    brute_force_optimal,
    cluster_vs_global_report,
    coreset_size_bound,
    gamma_bound,
)
from .synth import BlobSpec, generate_blobs

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "BlobSpec",
    "ClusterAssignment",
    "FeatureFileError",
    "FeatureFileHeader",
    "GradientFeatureMatrix",
    "OmpConfig",
    "OmpResult",
    "ProjectionSpec",
    "SampleManifest",
    "SampleRecord",
    "SelectionResult",
    "SingularSystemError",
    "SubmodularityReport",
    "adam_direction",
    "allocate_budget",
    "brute_force_optimal",
    "cluster_vs_global_report",
    "clustered_select",
    "combine_checkpoints",
    "concat_feature_files",
    "coreset_size_bound",
    "covering_radius",
    "gamma_bound",
    "generate_blobs",
    "global_omp_select",
    "identity_sign_block",
    "kcenter_greedy",
    "kmeans",
    "matching_error",
    "nearest_centroid",
    "normalize_rows",
    "omp_select",
    "project_rows",
    "rademacher_project",
    "read_features",
    "read_header",
    "read_manifest",
    "score_rank_select",
    "solve_weights",
    "stream_feature_rows",
    "uniform_select",
    "write_features",
]
