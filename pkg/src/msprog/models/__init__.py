"""Model zoo: linear/logistic regression, MLP, gradient-boosted trees, TCN."""

from .base import (FAMILIES, FeatureSpaceMismatchError, ModelSpec, TrainedModel,
                   fit, load_model, save_model)
from .gbt import DegenerateTargetsError, GBTClassifier, GBTRegressor
from .gradcheck import numerical_gradient_check
from .grid import DEFAULT_GRIDS, GridSearchResult, grid_cells, grid_search
from .losses import LossSpec, cross_entropy, focal_loss, mse, sigmoid, softmax
from .tcn import TCNConfig, init_tcn, receptive_field, tcn_forward

__all__ = [
    "FAMILIES", "FeatureSpaceMismatchError", "ModelSpec", "TrainedModel",
    "fit", "save_model", "load_model",
    "DegenerateTargetsError", "GBTClassifier", "GBTRegressor",
    "numerical_gradient_check",
    "DEFAULT_GRIDS", "GridSearchResult", "grid_cells", "grid_search",
    "LossSpec", "cross_entropy", "focal_loss", "mse", "sigmoid", "softmax",
    "TCNConfig", "init_tcn", "receptive_field", "tcn_forward",
]
