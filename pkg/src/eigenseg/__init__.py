"""Spectral graph partitioning for unsupervised segmentation of feature maps."""

from .affinity import AffinityGraph, build_affinity, degree_vector
from .errors import (
    DataError,
    DegenerateFeatureError,
    DegeneratePartitionError,
    FormatError,
    InfeasibleClusteringError,
    SolverError,
    TruncationError,
)
from .metrics import MatchReport, aggregate, frame_report, iou_per_class
from .partition import (
    ClusterParams,
    SpectralEmbedding,
    fiedler_binary_mask,
    fiedler_saliency,
    kmeans_cluster,
    stack_eigenvectors,
)
from .postprocess import (
    Assignment,
    ContingencyTable,
    contingency,
    match_hungarian,
    match_majority,
    relabel,
    upscale_majority,
    upscale_nearest_exact,
)
from .spectral import (
    Bipartition,
    EigenBasis,
    NormalizedLaplacian,
    build_laplacian,
    ncut_cost,
    smallest_eigenpairs,
)
from .tensor_io import (
    FeatureMap,
    LabelMask,
    SaliencyMap,
    export_eigenvector_image,
    read_feature_map,
    read_mask,
    write_feature_map,
    write_mask,
    write_saliency,
)

__version__ = "0.1.0"
