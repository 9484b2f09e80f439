"""Mixed-membership block-model recommender.

Users and items each belong to mixtures of latent groups; the probability of
a rating depends only on the pair of groups involved.  The package provides
scalable EM inference for that model, ensemble prediction with cold-start
handling, the standard comparison baselines, a cross-validation harness, and
synthetic generators with known ground truth.
"""

from .analysis import (
    SimilarityReport, group_similarity, profile_similarity,
    write_similarity_report,
)
from .baselines import (
    ItemItemModel, MFConfig, MFModel, item_item_fit, item_item_predict,
    mf_fit, mf_objective, mf_predict, naive_predict,
)
from .core import (
    Dataset, ModelParams, RatingScale, dataset_from_triples, scale_from_labels,
    scale_from_spec, scale_from_values, validate_params,
)
from .data_io import (
    DelimitedFormat, EnsembleSnapshot, ModelSnapshot, ParseError,
    SnapshotError, UserMetadata, parse_metadata, parse_ratings, read_ensemble,
    read_snapshot, write_ensemble, write_ratings, write_report, write_snapshot,
)
from .em import (
    DegenerateSupportError, FitConfig, FitResult, em_step, fit, init_params,
    log_likelihood, responsibility,
)
from .ensemble import (
    Ensemble, cold_start_vector, ensemble_fit, ensemble_predict,
    ensemble_predict_many, estimate, predict_distribution,
)
from .evaluate import (
    EvalConfig, EvalReport, FoldSplit, MethodFoldResult, ScalingPoint,
    accuracy, cross_validate, evaluate_methods, kfold_split, mae,
    scaling_benchmark,
)
from .synthetic import (
    MovieLensLike, SyntheticConfig, generate_synthetic, movielens_like,
    planted_partition_params,
)

__version__ = "0.1.0"
