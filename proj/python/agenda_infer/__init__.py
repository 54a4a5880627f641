"""Active inference of a private binary user attribute from solicited ratings."""

from ._core import (
    Attribute,
    Dataset,
    HyperParams,
    ItemModel,
    Posterior,
    Session,
    UpdateMode,
    auc,
    classify,
    generate_synthetic,
    load_model,
    parse_csv,
    parse_movielens,
    posterior,
    save_model,
    train_mf,
)

__all__ = [
    "Attribute",
    "Dataset",
    "HyperParams",
    "ItemModel",
    "Posterior",
    "Session",
    "UpdateMode",
    "auc",
    "classify",
    "generate_synthetic",
    "load_model",
    "parse_csv",
    "parse_movielens",
    "posterior",
    "save_model",
    "train_mf",
]
