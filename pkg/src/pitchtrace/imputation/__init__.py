from pitchtrace.imputation.model import (
    Imputer,
    ImputerParams,
    LatentConfig,
    decode,
    distill_step,
    elbo_loss,
    encode,
)
from pitchtrace.imputation.spline import (
    CompletedSequence,
    ObservedSequence,
    Provenance,
    spline_impute,
)
from pitchtrace.imputation.training import (
    TrainConfig,
    impute,
    impute_segment,
    load_imputer,
    random_gap_mask,
    save_imputer,
    train_demonstrator,
    train_imputer,
)

__all__ = [
    "CompletedSequence",
    "Imputer",
    "ImputerParams",
    "LatentConfig",
    "ObservedSequence",
    "Provenance",
    "TrainConfig",
    "decode",
    "distill_step",
    "elbo_loss",
    "encode",
    "impute",
    "impute_segment",
    "load_imputer",
    "random_gap_mask",
    "save_imputer",
    "spline_impute",
    "train_demonstrator",
    "train_imputer",
]
