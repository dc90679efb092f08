"""hyperspot: spatial-domain detection for spatial transcriptomics.

Builds a KNN hypergraph over spots, jointly trains a denoising autoencoder
and a hypergraph-convolutional autoencoder, clusters the fused embedding,
and scores the result with ARI and iLISI.
"""

from .clustering import (
    ClusterAssignment,
    SNNGraph,
    build_snn_graph,
    kmeans,
    leiden_communities,
    modularity,
)
from .dataio import (
    ExpressionMatrix,
    GroundTruthLabels,
    SpatialCoords,
    TissueMask,
    align_coords,
    apply_tissue_mask,
    generate_synthetic,
    load_coords,
    load_expression,
    log1p_normalize,
    write_coords,
    write_expression,
)
from .errors import HyperspotError, NumericError, PipelineError, ValidationError
from .features import (
    CovarianceModel,
    PCAModel,
    TileFeatures,
    TileSet,
    covariance_matrix,
    extract_tiles,
    mahalanobis_distance,
    pca_fit_transform,
    tile_feature_vector,
)
from .hypergraph import (
    DegreeNormalization,
    Hypergraph,
    adjacency_from_incidence,
    build_knn_hypergraph,
    degree_normalization,
    incidence_matrix,
    mahalanobis_gate,
)
from .metrics import MetricReport, adjusted_rand_index, ilisi
from .network import (
    ModelParams,
    TrainingBatch,
    add_noise,
    dae_forward,
    edge_to_node_aggregate,
    hgcn_forward,
    init_model,
    joint_forward_backward,
    joint_loss,
    mse_loss,
    node_to_edge_aggregate,
    similarity_decode,
    weighted_bce_loss,
)
from .pipeline import PipelineConfig, PipelineResult, resolve_config, run_pipeline
from .plotting import plot_domains
from .training import (
    EmbeddingBundle,
    TrainConfig,
    TrainResult,
    gradient_check,
    load_checkpoint,
    save_checkpoint,
    train_joint,
)

__version__ = "0.1.0"

__all__ = [
    "ClusterAssignment",
    "CovarianceModel",
    "DegreeNormalization",
    "EmbeddingBundle",
    "ExpressionMatrix",
    "GroundTruthLabels",
    "Hypergraph",
    "HyperspotError",
    "MetricReport",
    "ModelParams",
    "NumericError",
    "PCAModel",
    "PipelineConfig",
    "PipelineError",
    "PipelineResult",
    "SNNGraph",
    "SpatialCoords",
    "TileFeatures",
    "TileSet",
    "TissueMask",
    "TrainConfig",
    "TrainResult",
    "TrainingBatch",
    "ValidationError",
    "add_noise",
    "adjacency_from_incidence",
    "adjusted_rand_index",
    "align_coords",
    "apply_tissue_mask",
    "build_knn_hypergraph",
    "build_snn_graph",
    "covariance_matrix",
    "dae_forward",
    "degree_normalization",
    "edge_to_node_aggregate",
    "extract_tiles",
    "generate_synthetic",
    "gradient_check",
    "hgcn_forward",
    "ilisi",
    "incidence_matrix",
    "init_model",
    "joint_forward_backward",
    "joint_loss",
    "kmeans",
    "leiden_communities",
    "load_checkpoint",
    "load_coords",
    "load_expression",
    "log1p_normalize",
    "mahalanobis_distance",
    "mahalanobis_gate",
    "modularity",
    "mse_loss",
    "node_to_edge_aggregate",
    "pca_fit_transform",
    "plot_domains",
    "resolve_config",
    "run_pipeline",
    "save_checkpoint",
    "similarity_decode",
    "tile_feature_vector",
    "train_joint",
    "weighted_bce_loss",
    "write_coords",
    "write_expression",
]
