"""qregion: which image regions matter to a quality predictor, and why.

The toolkit masks positional attention keys over a feature grid to score the
importance of each grid block for a quality prediction, splits blocks into
important and trivial halves, and relates the split to three per-pixel
semantic measures (saliency, spatial frequency, objectness) through a
matching metric and zero-region ablation studies.
"""

from qregion.encoder import (
    EncoderConfig,
    EncoderWeights,
    init_weights,
    load_weights,
    predict,
    predict_masks,
    save_weights,
)
from qregion.evaluation import (
    AblationResult,
    MatchResult,
    ablation_study,
    match_image,
    matching_degree,
    pearson,
    spearman,
    zero_regions,
)
from qregion.features import (
    ImageBuffer,
    baseline_heuristic_score,
    export_feature_matrix,
    extract_builtin,
    import_feature_matrix,
)
from qregion.grid import (
    BlockGrid,
    BlockSet,
    FeatureMatrix,
    GridError,
    block_set_to_feature_mask,
    block_set_to_pixel_regions,
    enumerate_block_subsets,
    partition_grid,
)
from qregion.importance import (
    ImportanceProfile,
    block_importance_dataset,
    block_importance_image,
    masked_prediction_sweep,
    sample_subsets,
    split_half,
)
from qregion.measures import (
    BandDecomposition,
    MeasureMap,
    band_decompose,
    csf_weight,
    frequency_measure,
    fuse_average,
    objectness,
    region_means,
    spectral_residual_saliency,
)

__version__ = "0.1.0"

__all__ = [
    "AblationResult",
    "BandDecomposition",
    "BlockGrid",
    "BlockSet",
    "EncoderConfig",
    "EncoderWeights",
    "FeatureMatrix",
    "GridError",
    "ImageBuffer",
    "ImportanceProfile",
    "MatchResult",
    "MeasureMap",
    "ablation_study",
    "baseline_heuristic_score",
    "band_decompose",
    "block_importance_dataset",
    "block_importance_image",
    "block_set_to_feature_mask",
    "block_set_to_pixel_regions",
    "csf_weight",
    "enumerate_block_subsets",
    "export_feature_matrix",
    "extract_builtin",
    "frequency_measure",
    "fuse_average",
    "import_feature_matrix",
    "init_weights",
    "load_weights",
    "masked_prediction_sweep",
    "match_image",
    "matching_degree",
    "objectness",
    "partition_grid",
    "pearson",
    "predict",
    "predict_masks",
    "region_means",
    "sample_subsets",
    "save_weights",
    "spearman",
    "spectral_residual_saliency",
    "split_half",
    "zero_regions",
]
