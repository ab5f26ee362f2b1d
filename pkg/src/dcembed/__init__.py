"""Supervised embeddings for categorical variables in discrete choice models."""

from .dataset import (
    ChoiceDataset,
    DataError,
    EncodingSetSpec,
    RawTable,
    SchemaError,
    SplitSpec,
    filter_and_derive,
    load_raw,
    split,
)
from .encoders import (
    CategoryMap,
    EncoderModel,
    EncodingError,
    VariableEncoding,
    encode,
    fit_dummy,
    fit_pca,
    select_k_by_variance,
)
from .embed_train import (
    EmbeddingNetConfig,
    EmbeddingNetParams,
    TrainRun,
    TrainingError,
    export,
    forward,
    gradient,
    loss,
    run_repeats,
    train,
)
from .mnl import (
    Design,
    EstimationError,
    EstimationResult,
    RankError,
    UtilitySpec,
    assemble_design,
    base_specification,
    estimate,
    log_likelihood,
    metrics,
)
from .projection import ProjectedCoefficient, filter_report, project, project_all
from .mds import MdsLayout, classical_mds, pairwise_distances
from .harness import ExperimentConfig, run_comparison, run_sweep, export_report

__version__ = "0.1.0"
