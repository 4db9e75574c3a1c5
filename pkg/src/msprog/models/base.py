"""Model zoo surface: specs, fit/predict dispatch, and checkpoints.

A ModelSpec names a family plus hyperparameters, loss and task kind; fit()
returns an immutable TrainedModel whose predict() validates the feature-space
fingerprint before scoring. Binary scores come back as a single positive-class
probability column; multiclass as a simplex row per instance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .gbt import (DegenerateTargetsError, GBTBinaryClassifier, GBTClassifier,
                  GBTRegressor, RegressionTree)
from .linear import (fit_linear_regression, fit_logistic_binary, fit_softmax,
                     predict_linear, predict_logistic, predict_softmax)
from .losses import LossSpec
from .mlp import fit_mlp, mlp_output
from .tcn import TCNConfig, fit_tcn, tcn_output

FAMILIES = ("LinearRegression", "LogisticRegression", "MLP",
            "GBTClassifier", "GBTRegressor", "TCN")
REGRESSION_ONLY = {"LinearRegression", "GBTRegressor"}
CLASSIFICATION_ONLY = {"LogisticRegression", "GBTClassifier"}


class FeatureSpaceMismatchError(ValueError):
    code = "FEATURE_SPACE_MISMATCH"


@dataclass(frozen=True)
class ModelSpec:
    family: str
    task_kind: str                     # regression | binary | multiclass
    n_classes: int = 1
    hyperparams: dict = field(default_factory=dict)
    loss: Optional[LossSpec] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.task_kind not in ("regression", "binary", "multiclass"):
            raise ValueError(f"unknown task kind {self.task_kind!r}")
        if self.family in REGRESSION_ONLY and self.task_kind != "regression":
            raise ValueError(f"{self.family} only fits regression tasks")
        if self.family in CLASSIFICATION_ONLY and self.task_kind == "regression":
            raise ValueError(f"{self.family} only fits classification tasks")
        if self.loss is not None:
            if self.task_kind == "regression" and self.loss.kind != "mse":
                raise ValueError("regression tasks use the MSE loss")
            if self.task_kind != "regression" and self.loss.kind == "mse":
                raise ValueError("classification tasks use cross-entropy or focal loss")

    @property
    def effective_loss(self) -> LossSpec:
        if self.loss is not None:
            return self.loss
        return LossSpec("mse") if self.task_kind == "regression" else LossSpec("cross_entropy")

    def to_dict(self) -> dict:
        return {"family": self.family, "task_kind": self.task_kind,
                "n_classes": self.n_classes, "hyperparams": dict(self.hyperparams),
                "loss": {"kind": self.effective_loss.kind,
                         "gamma": self.effective_loss.gamma,
                         "alpha": self.effective_loss.alpha}}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        loss = d.get("loss")
        return cls(family=d["family"], task_kind=d["task_kind"],
                   n_classes=d.get("n_classes", 1),
                   hyperparams=dict(d.get("hyperparams", {})),
                   loss=LossSpec(**loss) if loss else None)


@dataclass(frozen=True)
class TrainedModel:
    spec: ModelSpec
    payload: dict
    fingerprint: str = ""
    metadata: dict = field(default_factory=dict)

    def predict(self, X: np.ndarray, fingerprint: str = "") -> np.ndarray:
        """Score instances: (n, 1) for regression/binary, (n, k) simplex else."""
        if self.fingerprint and fingerprint and fingerprint != self.fingerprint:
            raise FeatureSpaceMismatchError(
                f"model trained on {self.fingerprint}, got {fingerprint}")
        spec = self.spec
        X = np.asarray(X, dtype=np.float64)
        if spec.family == "LinearRegression":
            return predict_linear(self.payload["theta"], X)[:, None]
        if spec.family == "LogisticRegression":
            if spec.task_kind == "binary":
                return predict_logistic(self.payload["theta"], X)[:, None]
            return predict_softmax(self.payload["theta"], X)
        if spec.family == "MLP":
            out = mlp_output(self.payload["params"], X, spec.task_kind)
            if spec.task_kind == "regression":
                return out
            return out[:, 1:2] if spec.task_kind == "binary" else out
        if spec.family == "GBTRegressor":
            return self.payload["model"].predict(X)[:, None]
        if spec.family == "GBTClassifier":
            probs = self.payload["model"].predict_proba(X)
            return probs[:, 1:2] if spec.task_kind == "binary" else probs
        if spec.family == "TCN":
            out = tcn_output(self.payload["params"], self.payload["config"], X, spec.task_kind)
            if spec.task_kind == "regression":
                return out
            return out[:, 1:2] if spec.task_kind == "binary" else out
        raise AssertionError(spec.family)


def _check_targets(spec: ModelSpec, y: np.ndarray) -> None:
    if spec.task_kind == "regression":
        if np.ptp(y) == 0.0:
            raise DegenerateTargetsError("zero-variance regression target")
    else:
        if len(np.unique(y)) < 2:
            raise DegenerateTargetsError("single-class classification target")


def fit(spec: ModelSpec, X: np.ndarray, y: np.ndarray, seed: int = 0,
        fingerprint: str = "") -> TrainedModel:
    """Train one model; deterministic given (spec, data order, seed)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_targets(spec, y)
    hp = dict(spec.hyperparams)
    loss = spec.effective_loss
    meta: dict = {"seed": seed}

    if spec.family == "LinearRegression":
        theta = fit_linear_regression(X, y)
        return TrainedModel(spec, {"theta": theta}, fingerprint, meta)

    if spec.family == "LogisticRegression":
        C = float(hp.get("C", 1.0))
        if spec.task_kind == "binary":
            theta, converged = fit_logistic_binary(X, y, C=C,
                                                   max_iter=int(hp.get("max_iter", 100)))
            meta["converged"] = converged
            if not converged:
                meta["warning"] = "NONCONVERGENCE"
        else:
            theta = fit_softmax(X, y.astype(np.intp), spec.n_classes, C=C,
                                lr=float(hp.get("learning_rate", 0.1)),
                                epochs=int(hp.get("epochs", 500)), seed=seed)
            meta["converged"] = True
        return TrainedModel(spec, {"theta": theta}, fingerprint, meta)

    if spec.family == "MLP":
        hidden = tuple(hp.get("network_size", (16, 16)))
        n_out = 1 if spec.task_kind == "regression" else max(2, spec.n_classes)
        params, info = fit_mlp(
            X, y if spec.task_kind == "regression" else y.astype(np.intp),
            hidden, spec.task_kind, n_out, loss,
            learning_rate=float(hp.get("learning_rate", 0.001)),
            batch_size=int(hp.get("batch_size", 64)),
            epochs=int(hp.get("epochs", 100)),
            patience=int(hp.get("patience", 10)), seed=seed)
        meta.update(info)
        return TrainedModel(spec, {"params": params}, fingerprint, meta)

    if spec.family in ("GBTRegressor", "GBTClassifier"):
        kwargs = dict(n_estimators=int(hp.get("n_estimators", 100)),
                      learning_rate=float(hp.get("learning_rate", 0.01)),
                      max_depth=int(hp.get("max_depth", 3)),
                      min_leaf=int(hp.get("min_leaf", 1)))
        if spec.family == "GBTRegressor":
            model = GBTRegressor(**kwargs).fit(X, y)
        else:
            model = GBTClassifier(n_classes=max(2, spec.n_classes), **kwargs).fit(X, y)
        meta["stage_losses"] = model.stage_losses
        return TrainedModel(spec, {"model": model}, fingerprint, meta)

    if spec.family == "TCN":
        if X.ndim != 3:
            raise ValueError("TCN expects sequence instances (n, T, F)")
        n_out = 1 if spec.task_kind == "regression" else max(2, spec.n_classes)
        cfg = TCNConfig(n_in=X.shape[2], n_out=n_out,
                        num_filters=int(hp.get("num_filters", 16)),
                        kernel_size=int(hp.get("kernel_size", 3)),
                        levels=int(hp.get("levels", 3)),
                        dropout=float(hp.get("dropout", 0.0)))
        params, info = fit_tcn(
            X, y if spec.task_kind == "regression" else y.astype(np.intp),
            cfg, spec.task_kind, loss,
            learning_rate=float(hp.get("learning_rate", 0.001)),
            batch_size=int(hp.get("batch_size", 64)),
            epochs=int(hp.get("epochs", 100)),
            patience=int(hp.get("patience", 10)), seed=seed)
        meta.update(info)
        return TrainedModel(spec, {"params": params, "config": cfg}, fingerprint, meta)

    raise AssertionError(spec.family)


# ---------------------------------------------------------------------------
# Checkpoints: versioned npz with a JSON header

CHECKPOINT_VERSION = 1


def save_model(model: TrainedModel, path) -> None:
    meta = {"checkpoint_version": CHECKPOINT_VERSION,
            "spec": model.spec.to_dict(),
            "fingerprint": model.fingerprint,
            "metadata": {k: v for k, v in model.metadata.items()
                         if isinstance(v, (int, float, str, bool, list))}}
    arrays: dict[str, np.ndarray] = {}
    spec = model.spec
    if spec.family in ("LinearRegression", "LogisticRegression"):
        arrays["theta"] = model.payload["theta"]
    elif spec.family == "MLP":
        for i, p in enumerate(model.payload["params"]):
            arrays[f"p{i}"] = p
        meta["n_params"] = len(model.payload["params"])
    elif spec.family == "TCN":
        for i, p in enumerate(model.payload["params"]):
            arrays[f"p{i}"] = p
        meta["n_params"] = len(model.payload["params"])
        cfg = model.payload["config"]
        meta["tcn_config"] = {"n_in": cfg.n_in, "n_out": cfg.n_out,
                              "num_filters": cfg.num_filters,
                              "kernel_size": cfg.kernel_size,
                              "levels": cfg.levels, "dropout": cfg.dropout}
    elif spec.family == "GBTRegressor":
        gbt = model.payload["model"]
        meta["gbt"] = {"base": gbt.base, "learning_rate": gbt.learning_rate,
                       "n_trees": len(gbt.trees)}
        for j, tree in enumerate(gbt.trees):
            arrays[f"t{j}"] = np.array(tree.nodes, dtype=np.float64)
    elif spec.family == "GBTClassifier":
        gbt = model.payload["model"]
        boosters = []
        for i, booster in enumerate(gbt.boosters):
            if booster is None:
                boosters.append(None)
                continue
            boosters.append({"base": booster.base,
                             "learning_rate": booster.learning_rate,
                             "n_trees": len(booster.trees)})
            for j, tree in enumerate(booster.trees):
                arrays[f"b{i}t{j}"] = np.array(tree.nodes, dtype=np.float64)
        meta["gbt_ovr"] = {"n_classes": gbt.n_classes, "boosters": boosters}
    np.savez(path, meta=json.dumps(meta, sort_keys=True), **arrays)


def _tree_from_array(arr: np.ndarray) -> RegressionTree:
    tree = RegressionTree()
    tree.nodes = [[int(r[0]), float(r[1]), int(r[2]), int(r[3])] for r in arr]
    return tree


def load_model(path) -> TrainedModel:
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["meta"]))
    if meta.get("checkpoint_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('checkpoint_version')!r}")
    spec = ModelSpec.from_dict(meta["spec"])
    fingerprint = meta.get("fingerprint", "")
    metadata = meta.get("metadata", {})
    if spec.family in ("LinearRegression", "LogisticRegression"):
        payload = {"theta": data["theta"]}
    elif spec.family == "MLP":
        payload = {"params": [data[f"p{i}"] for i in range(meta["n_params"])]}
    elif spec.family == "TCN":
        payload = {"params": [data[f"p{i}"] for i in range(meta["n_params"])],
                   "config": TCNConfig(**meta["tcn_config"])}
    elif spec.family == "GBTRegressor":
        info = meta["gbt"]
        gbt = GBTRegressor(learning_rate=info["learning_rate"])
        gbt.base = info["base"]
        gbt.trees = [_tree_from_array(data[f"t{j}"]) for j in range(info["n_trees"])]
        payload = {"model": gbt}
    elif spec.family == "GBTClassifier":
        info = meta["gbt_ovr"]
        gbt = GBTClassifier(n_classes=info["n_classes"])
        gbt.boosters = []
        for i, binfo in enumerate(info["boosters"]):
            if binfo is None:
                gbt.boosters.append(None)
                continue
            booster = GBTBinaryClassifier(learning_rate=binfo["learning_rate"])
            booster.base = binfo["base"]
            booster.trees = [_tree_from_array(data[f"b{i}t{j}"])
                             for j in range(binfo["n_trees"])]
            gbt.boosters.append(booster)
        payload = {"model": gbt}
    else:
        raise AssertionError(spec.family)
    return TrainedModel(spec, payload, fingerprint, metadata)
