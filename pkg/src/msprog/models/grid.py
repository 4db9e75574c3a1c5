"""Hyperparameter grids and exhaustive grid search.

The default grids are the published search space; any experiment config can
override them. Cells are enumerated in declared order and ties broken by the
first cell reaching the best validation score.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..evaluation import average_precision, macro_average_precision, rmse
from .base import ModelSpec, TrainedModel, fit
from .losses import LossSpec

DEFAULT_GRIDS: dict[str, dict[str, list]] = {
    "LogisticRegression": {"C": [1e-2, 1e-1, 1.0, 1e1, 1e2]},
    "LinearRegression": {},
    "MLP": {"network_size": [(16, 16), (16, 16, 16), (32, 32)],
            "learning_rate": [0.001, 0.01]},
    "GBTClassifier": {"n_estimators": [100, 150], "learning_rate": [0.001, 0.01],
                      "max_depth": [3, 5]},
    "GBTRegressor": {"n_estimators": [100, 150], "learning_rate": [0.001, 0.01],
                     "max_depth": [3, 5]},
    # learning_rate grid reproduced as published
    "TCN": {"num_filters": [16, 32, 64], "kernel_size": [3, 5],
            "learning_rate": [0.001, 0.05, 0.01], "dropout": [0.0, 0.5]},
}

_HIGHER_IS_BETTER = {"auprc": True, "accuracy": True, "rmse": False}


def grid_cells(grid: dict[str, list]) -> list[dict]:
    """Cartesian product in declared key order; a single empty cell for {}."""
    if not grid:
        return [{}]
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def validation_score(metric: str, task_kind: str, y: np.ndarray, scores: np.ndarray) -> float:
    if metric == "rmse":
        return rmse(y, scores[:, 0])
    if metric == "accuracy":
        pred = (scores[:, 0] > 0.5).astype(int) if scores.shape[1] == 1 \
            else scores.argmax(axis=1)
        return float(np.mean(pred == y))
    if metric == "auprc":
        if task_kind == "binary":
            return average_precision(y.astype(bool), scores[:, 0])
        return macro_average_precision(y.astype(int), scores)
    raise ValueError(f"unknown metric {metric!r}")


@dataclass
class GridSearchResult:
    best_spec: Optional[ModelSpec]
    best_score: float
    best_model: Optional[TrainedModel]
    cells: list[dict] = field(default_factory=list)  # hyperparams, score | error


def grid_search(family: str, grid: Optional[dict], train: tuple, validation: tuple,
                metric: str, task_kind: str, n_classes: int = 1,
                loss: Optional[LossSpec] = None, seed: int = 0,
                fingerprint: str = "") -> GridSearchResult:
    """Exhaustively fit every cell; best by the validation metric.

    Cells whose fit raises are skipped and reported. Ties keep the first
    cell in grid order (strict improvement required to replace the best).
    """
    if grid is None:
        grid = DEFAULT_GRIDS[family]
    cells = grid_cells(grid)
    if not cells:
        raise ValueError("empty grid")
    higher = _HIGHER_IS_BETTER[metric]
    Xt, yt = train
    Xv, yv = validation
    result = GridSearchResult(None, -np.inf if higher else np.inf, None)
    for hp in cells:
        spec = ModelSpec(family=family, task_kind=task_kind, n_classes=n_classes,
                         hyperparams=hp, loss=loss)
        try:
            model = fit(spec, Xt, yt, seed=seed, fingerprint=fingerprint)
            scores = model.predict(Xv, fingerprint)
            score = validation_score(metric, task_kind, yv, scores)
        except Exception as exc:  # cell-level failure: record and move on
            result.cells.append({"hyperparams": hp, "error": f"{type(exc).__name__}: {exc}"})
            continue
        result.cells.append({"hyperparams": hp, "score": score})
        if (higher and score > result.best_score) or (not higher and score < result.best_score):
            result.best_score = score
            result.best_spec = spec
            result.best_model = model
    return result
