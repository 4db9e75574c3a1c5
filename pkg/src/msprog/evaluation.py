"""Cross-validation plans, the prediction record format, and fold/subgroup metrics.

Average precision is the mean of precision at each positive rank with ties
broken by stable input order (a trapezoidal PR-curve area is available behind
``variant="trapezoid"`` for sensitivity checks). Folds split by subject so no
subject contributes to both sides of a fold. Subgroup cells with members but
an undefined metric propagate NaN; NaN folds are excluded from cross-fold
means and the contributing fold count is reported alongside.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from ._util import canonical_json, rng_stream

AGE_BUCKET_NAMES = ("Age<30", "Age30-50", "Age50-70", "Age>70")
AGE_BUCKET_EDGES = (30.0, 50.0, 70.0)


class TooFewSubjectsError(ValueError):
    code = "TOO_FEW_SUBJECTS"


@dataclass(frozen=True)
class PredictionRecord:
    subject_id: str
    timestamp: int
    label_targets: dict[str, float]
    label_predictions: dict[str, list[float]]
    subgroup_attributes: dict

    def to_dict(self) -> dict:
        return {"subject_id": self.subject_id, "timestamp": self.timestamp,
                "label_targets": dict(sorted(self.label_targets.items())),
                "label_predictions": {k: list(v) for k, v in sorted(self.label_predictions.items())},
                "subgroup_attributes": dict(sorted(self.subgroup_attributes.items()))}

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionRecord":
        return cls(subject_id=d["subject_id"], timestamp=int(d["timestamp"]),
                   label_targets=dict(d.get("label_targets", {})),
                   label_predictions={k: list(v) for k, v in d.get("label_predictions", {}).items()},
                   subgroup_attributes=dict(d.get("subgroup_attributes", {})))


def write_records(path, records: Iterable[PredictionRecord]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(canonical_json(rec.to_dict()))
            fh.write("\n")
            n += 1
    return n


def read_records(path) -> list[PredictionRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(PredictionRecord.from_dict(json.loads(line)))
    return out


# ---------------------------------------------------------------------------
# Fold plans

@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[tuple[str, ...], ...]
    seed: int

    def fold_of(self) -> dict[str, int]:
        return {sid: k for k, fold in enumerate(self.folds) for sid in fold}


def kfold_split(subject_ids: Sequence[str], k: int, seed: int) -> FoldPlan:
    """Subject-level k-fold split: deterministic shuffle, sizes differ by <= 1."""
    ids = list(subject_ids)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate subject ids")
    if len(ids) < k:
        raise TooFewSubjectsError(f"{len(ids)} subjects for k={k}")
    rng = rng_stream(seed, 777)
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    folds = [tuple(part) for part in np.array_split(np.array(shuffled, dtype=object), k)]
    return FoldPlan(folds=tuple(tuple(str(s) for s in fold) for fold in folds), seed=seed)


# ---------------------------------------------------------------------------
# Metrics

def average_precision(targets: Sequence[bool], scores: Sequence[float],
                      variant: str = "mean_precision") -> float:
    """AU-PRC as mean precision at positive ranks (NaN when no positives).

    Ties are broken by stable input order. ``variant="trapezoid"`` integrates
    the PR curve with trapezoids instead, for sensitivity analysis.
    """
    t = np.asarray(targets, dtype=bool)
    s = np.asarray(scores, dtype=np.float64)
    if t.shape != s.shape:
        raise ValueError("targets and scores must align")
    n_pos = int(t.sum())
    if n_pos == 0:
        return float("nan")  # NO_POSITIVES: undefined cell
    order = np.argsort(-s, kind="stable")
    ranked = t[order]
    cum_pos = np.cumsum(ranked)
    ranks = np.arange(1, len(t) + 1)
    precision = cum_pos / ranks
    if variant == "mean_precision":
        return float(precision[ranked].sum() / n_pos)
    if variant == "trapezoid":
        recall = cum_pos / n_pos
        r = np.concatenate([[0.0], recall])
        p = np.concatenate([[1.0], precision])
        return float(np.trapezoid(p, r))
    raise ValueError(f"unknown variant {variant!r}")


def macro_average_precision(targets: Sequence[int], scores: np.ndarray) -> float:
    """Unweighted mean of one-vs-rest AP over classes with >= 1 positive."""
    y = np.asarray(targets, dtype=int)
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError("scores must be (n, k)")
    per_class = []
    for c in range(s.shape[1]):
        mask = y == c
        if mask.any():
            per_class.append(average_precision(mask, s[:, c]))
    if not per_class:
        return float("nan")
    return float(np.mean(per_class))


def rmse(targets: Sequence[float], predictions: Sequence[float]) -> float:
    t = np.asarray(targets, dtype=np.float64)
    p = np.asarray(predictions, dtype=np.float64)
    if t.shape != p.shape or len(t) == 0:
        raise ValueError("need equal-length non-empty vectors")
    return float(np.sqrt(np.mean((t - p) ** 2)))


def accuracy(targets: Sequence[int], predicted: Sequence[int]) -> float:
    t = np.asarray(targets)
    p = np.asarray(predicted)
    if t.shape != p.shape:
        raise ValueError("targets and predictions must align")
    return float(np.mean(t == p))


# ---------------------------------------------------------------------------
# Subgroup-aware evaluation

@dataclass(frozen=True)
class SubgroupScheme:
    sexes: tuple[str, ...] = ("Female", "Male")
    age_bucket_names: tuple[str, ...] = AGE_BUCKET_NAMES
    age_edges: tuple[float, ...] = AGE_BUCKET_EDGES

    def age_bucket(self, age: float) -> str:
        for name, edge in zip(self.age_bucket_names, self.age_edges):
            if age < edge:
                return name
        return self.age_bucket_names[-1]

    def cells(self, record: PredictionRecord) -> list[str]:
        """Subgroup cells a record belongs to; unknown attributes are skipped."""
        out = []
        sex = record.subgroup_attributes.get("Sex")
        if sex in self.sexes:
            out.append(sex)
        age = record.subgroup_attributes.get("Age")
        if isinstance(age, (int, float)) and math.isfinite(age):
            out.append(self.age_bucket(float(age)))
        return out


@dataclass
class MetricsReport:
    rows: list[tuple] = field(default_factory=list)  # task, model, fold, subgroup, metric, value

    def add(self, task, model, fold, subgroup, metric, value):
        self.rows.append((task, model, int(fold), subgroup, metric, float(value)))

    def summary(self) -> dict:
        """Cross-fold mean/std (population) per cell; NaN folds excluded."""
        grouped: dict[tuple, list[float]] = {}
        for task, model, _fold, subgroup, metric, value in self.rows:
            grouped.setdefault((task, model, subgroup, metric), []).append(value)
        out: dict = {}
        for (task, model, subgroup, metric), values in sorted(grouped.items()):
            finite = [v for v in values if not math.isnan(v)]
            if finite:
                mean = float(np.mean(finite))
                std = float(np.std(finite))
                display = f"{mean:.3f} ({std:.3f})"
            else:
                mean = std = float("nan")
                display = "NaN (NaN)"
            out.setdefault(task, {}).setdefault(model, {}).setdefault(subgroup, {})[metric] = {
                "mean": mean, "std": std, "n_folds": len(finite), "display": display}
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["task", "model", "fold", "subgroup", "metric", "value"])
            for task, model, fold, subgroup, metric, value in sorted(self.rows):
                writer.writerow([task, model, fold, subgroup, metric, repr(value)])
            summary = self.summary()
            for task in summary:
                for model in summary[task]:
                    for subgroup in summary[task][model]:
                        for metric, cell in summary[task][model][subgroup].items():
                            writer.writerow([task, model, "summary", subgroup,
                                             metric, cell["display"]])

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, sort_keys=True, indent=2, allow_nan=True)
            fh.write("\n")


def _task_metrics(kind: str) -> list[str]:
    if kind == "regression":
        return ["rmse"]
    if kind == "binary":
        return ["auprc", "accuracy"]
    return ["avg_auprc", "accuracy"]


def _compute(metric: str, kind: str, targets: np.ndarray, preds: list[list[float]]) -> float:
    if metric == "rmse":
        return rmse(targets, [p[0] for p in preds])
    if metric == "auprc":
        return average_precision(targets.astype(bool), [p[0] for p in preds])
    if metric == "avg_auprc":
        return macro_average_precision(targets.astype(int), np.asarray(preds))
    if metric == "accuracy":
        if kind == "binary":
            hard = [int(p[0] > 0.5) for p in preds]
        else:
            hard = [int(np.argmax(p)) for p in preds]
        return accuracy(targets.astype(int), hard)
    raise ValueError(metric)


def evaluate(records: Sequence[PredictionRecord], scheme: SubgroupScheme,
             plan: FoldPlan, model: str = "model",
             task_kinds: Optional[dict[str, str]] = None) -> MetricsReport:
    """Per-task metrics for All and every populated subgroup cell, per fold.

    Task kinds (regression/binary/multiclass) come from ``task_kinds`` or are
    parsed from the task name. A pure function of the record multiset: only
    subgroup membership, fold assignment and label values matter.
    """
    from .labels import parse_task_name  # local import avoids a cycle

    fold_of = plan.fold_of()
    report = MetricsReport()
    tasks = sorted({name for rec in records for name in rec.label_predictions})
    for task in tasks:
        kind = (task_kinds or {}).get(task) or parse_task_name(task).kind
        # fold -> cell -> (targets, predictions)
        bucketed: dict[int, dict[str, tuple[list, list]]] = {}
        for rec in records:
            if task not in rec.label_predictions or task not in rec.label_targets:
                continue
            fold = fold_of.get(rec.subject_id)
            if fold is None:
                raise ValueError(f"subject {rec.subject_id!r} missing from fold plan")
            cells = ["All"] + scheme.cells(rec)
            for cell in cells:
                t, p = bucketed.setdefault(fold, {}).setdefault(cell, ([], []))
                t.append(rec.label_targets[task])
                p.append(rec.label_predictions[task])
        for fold in sorted(bucketed):
            for cell in sorted(bucketed[fold]):
                targets, preds = bucketed[fold][cell]
                for metric in _task_metrics(kind):
                    value = _compute(metric, kind, np.asarray(targets), preds)
                    report.add(task, model, fold, cell, metric, value)
    return report
