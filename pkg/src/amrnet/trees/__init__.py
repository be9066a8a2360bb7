from .boosting import GbtConfig, GbtModel, fit_gbt, grow_tree, predict_proba_gbt, weighted_log_loss
from .forest import RfConfig, RfModel, fit_random_forest, gini, predict_proba_rf, split_gains
from .tree import DecisionTree, pack_trees, unpack_trees

__all__ = [
    "DecisionTree",
    "GbtConfig",
    "GbtModel",
    "RfConfig",
    "RfModel",
    "fit_gbt",
    "fit_random_forest",
    "gini",
    "grow_tree",
    "pack_trees",
    "predict_proba_gbt",
    "predict_proba_rf",
    "split_gains",
    "unpack_trees",
    "weighted_log_loss",
]
