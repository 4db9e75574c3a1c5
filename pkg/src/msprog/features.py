"""Model-ready instances from labeled cohorts.

A FeatureSpace fixes the feature order, kind and group per feature. Instances
come in two shapes: window-mean vectors for tabular models and time-bucketed
sequence tensors for the temporal models, both with presence counts so the
zero imputation stays distinguishable from a measured zero.

Leakage discipline: features are drawn only from events at or before the
trigger, targets only from strictly afterwards; build_instances asserts the
disjointness for every emitted instance.

Text/categorical responses are hashed to a stable vocabulary index at the
observation level and treated numerically afterwards; the empty string hashes
to index 0, which makes text imputation coincide with the numeric zero fill.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from ._util import stable_text_index
from .labels import LabelConfig, TaskSpec, parse_task_name, target_observation_times
from .subject import FunctionalTest, Questionnaire, Sex, Subject

GROUP_DEMOGRAPHICS = "Demographics"
GROUP_FUNCTIONAL = "FunctionalTests"
GROUP_QUESTIONNAIRES = "Questionnaires"
GROUP_POMS = "POMs"
GROUP_FULL = "Full"
BASE_GROUPS = (GROUP_DEMOGRAPHICS, GROUP_FUNCTIONAL, GROUP_QUESTIONNAIRES)
ALL_GROUPS = BASE_GROUPS + (GROUP_POMS, GROUP_FULL)

DEMOGRAPHIC_FEATURES = ("age", "sex_female", "sex_male", "height_cm", "weight_kg")


class EmptyFeatureSpaceError(ValueError):
    code = "EMPTY_FEATURE_SPACE"


class LeakageError(AssertionError):
    pass


@dataclass(frozen=True)
class FeatureSpace:
    names: tuple[str, ...]
    kinds: tuple[str, ...]    # numeric | text
    groups: tuple[str, ...]   # one base group per feature
    text_vocab: int = 256

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("feature names must be unique")
        if not (len(self.names) == len(self.kinds) == len(self.groups)):
            raise ValueError("names/kinds/groups must align")
        for g in self.groups:
            if g not in BASE_GROUPS:
                raise ValueError(f"unknown base group {g!r}")

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def group_mask(self, group: str) -> np.ndarray:
        if group == GROUP_FULL:
            return np.ones(len(self.names), dtype=bool)
        if group == GROUP_POMS:
            return np.array([g in (GROUP_FUNCTIONAL, GROUP_QUESTIONNAIRES)
                             for g in self.groups])
        if group in BASE_GROUPS:
            return np.array([g == group for g in self.groups])
        raise ValueError(f"unknown group {group!r}")

    def without(self, names: set[str]) -> "FeatureSpace":
        keep = [i for i, n in enumerate(self.names) if n not in names]
        return FeatureSpace(
            names=tuple(self.names[i] for i in keep),
            kinds=tuple(self.kinds[i] for i in keep),
            groups=tuple(self.groups[i] for i in keep),
            text_vocab=self.text_vocab,
        )

    @property
    def fingerprint(self) -> str:
        blob = "\x1f".join(["|".join(self.names), "|".join(self.kinds),
                            "|".join(self.groups), str(self.text_vocab)])
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def build_feature_space(cohort: Sequence[Subject], text_vocab: int = 256) -> FeatureSpace:
    """Scan a cohort for its observed features plus the broadcast demographics."""
    dynamic: dict[str, tuple[str, str]] = {}   # name -> (kind, group)
    saw_height = saw_weight = False
    for subject in cohort:
        ch = subject.characteristics
        saw_height |= ch.height_cm is not None
        saw_weight |= ch.weight_kg is not None
        for event in subject.all_events():
            for res in event.resources:
                if isinstance(res, FunctionalTest):
                    dynamic.setdefault(res.name, ("numeric", GROUP_FUNCTIONAL))
                elif isinstance(res, Questionnaire):
                    kind = "numeric" if res.numeric_response is not None else "text"
                    dynamic.setdefault(res.name, (kind, GROUP_QUESTIONNAIRES))

    names = ["age", "sex_female", "sex_male"]
    if saw_height:
        names.append("height_cm")
    if saw_weight:
        names.append("weight_kg")
    kinds = ["numeric"] * len(names)
    groups = [GROUP_DEMOGRAPHICS] * len(names)
    for name in sorted(dynamic):
        if name in names:
            raise ValueError(f"feature name collides with a demographic: {name!r}")
        kind, group = dynamic[name]
        names.append(name)
        kinds.append(kind)
        groups.append(group)
    return FeatureSpace(tuple(names), tuple(kinds), tuple(groups), text_vocab)


def exclude_leaky_features(space: FeatureSpace, task: Union[TaskSpec, str],
                           strict_leakage: bool = False,
                           score_categories: Optional[dict[str, Sequence[str]]] = None) -> FeatureSpace:
    """Drop features that would echo the task's own target.

    EDSS-derived tasks lose every EDSS* feature. Score tasks additionally
    lose their constituent tests when ``strict_leakage`` is on (off by
    default: the scores are future aggregates, not present values).
    """
    if isinstance(task, str):
        task = parse_task_name(task)
    drop: set[str] = set()
    if task.family in ("edss_mean", "edss_gt", "edss_severity"):
        drop = {n for n in space.names if n.startswith("EDSS")}
    elif task.family == "score" and strict_leakage and score_categories:
        if task.score_kind == "overall":
            drop = {t for tests in score_categories.values() for t in tests}
        else:
            drop = set(score_categories.get(task.score_kind, ()))
    return space.without(drop) if drop else space


@dataclass(frozen=True)
class TabularInstance:
    subject_id: str
    trigger_t: int
    values: np.ndarray       # (F,) float64, finite
    presence: np.ndarray     # (F,) observation counts
    target: float
    sex: str
    age: Optional[float]
    max_feature_t: int
    min_target_t: float      # +inf when the target window had no observations


@dataclass(frozen=True)
class SequenceInstance:
    subject_id: str
    trigger_t: int
    values: np.ndarray       # (B, F)
    presence: np.ndarray     # (B, F) observation counts
    target: float
    sex: str
    age: Optional[float]
    max_feature_t: int
    min_target_t: float


Instance = Union[TabularInstance, SequenceInstance]


def _observation(res, space: FeatureSpace) -> Optional[tuple[str, float]]:
    if isinstance(res, FunctionalTest):
        return res.name, res.value
    if isinstance(res, Questionnaire):
        if res.numeric_response is not None:
            return res.name, res.numeric_response
        text = res.categorical_response or res.text_response or ""
        return res.name, float(stable_text_index(text, space.text_vocab))
    return None


def _static_features(subject: Subject, space: FeatureSpace):
    ch = subject.characteristics
    values = {"age": ch.age,
              "sex_female": 1.0 if ch.sex is Sex.FEMALE else (0.0 if ch.sex is Sex.MALE else None),
              "sex_male": 1.0 if ch.sex is Sex.MALE else (0.0 if ch.sex is Sex.FEMALE else None),
              "height_cm": ch.height_cm, "weight_kg": ch.weight_kg}
    for name, value in values.items():
        if value is None:
            continue
        try:
            yield space.index(name), float(value)
        except ValueError:
            continue


def build_instances(cohort: Sequence[Subject], task: Union[TaskSpec, str],
                    space: FeatureSpace, mode: str = "tabular",
                    lookback_s: Optional[int] = None,
                    bucket_s: int = 7 * 86_400, n_buckets: int = 26,
                    config: Optional[LabelConfig] = None) -> list[Instance]:
    """One instance per trigger event carrying a target for ``task``.

    Tabular mode averages each feature over [trigger - lookback, trigger]
    (full history when lookback_s is None); sequence mode buckets the same
    window into ``n_buckets`` spans of ``bucket_s`` seconds. Absent values are
    zero after imputation, with presence counts kept alongside.
    """
    if len(space) == 0:
        raise EmptyFeatureSpaceError("feature space has no features")
    if isinstance(task, str):
        task = parse_task_name(task)

    out: list[Instance] = []
    for subject in cohort:
        events = list(subject.all_events())
        triggers = []
        for event in events:
            label_map = getattr(event, task.label_map)
            if task.name in label_map:
                triggers.append((event.timestamp, label_map[task.name]))
        if not triggers:
            continue

        obs = []  # (t, feature index, value)
        for event in events:
            for res in event.resources:
                parsed = _observation(res, space)
                if parsed is None:
                    continue
                name, value = parsed
                try:
                    idx = space.index(name)
                except ValueError:
                    continue  # excluded from this task's space
                obs.append((event.timestamp, idx, value))

        static = list(_static_features(subject, space))
        ch = subject.characteristics

        for trigger_t, target in triggers:
            targets_at = target_observation_times(subject, task, trigger_t, config)
            min_target_t = float(min(targets_at)) if targets_at else float("inf")
            if mode == "tabular":
                lo = float("-inf") if lookback_s is None else trigger_t - lookback_s
                values = np.zeros(len(space))
                counts = np.zeros(len(space))
                max_feature_t = trigger_t
                seen_t = []
                for t, idx, value in obs:
                    if lo <= t <= trigger_t:
                        values[idx] += value
                        counts[idx] += 1
                        seen_t.append(t)
                nz = counts > 0
                values[nz] /= counts[nz]
                for idx, value in static:
                    values[idx] = value
                    counts[idx] = max(counts[idx], 1)
                max_feature_t = max(seen_t) if seen_t else trigger_t
                inst: Instance = TabularInstance(
                    subject.subject_id, trigger_t, values, counts, float(target),
                    ch.sex.value, ch.age, max_feature_t, min_target_t)
            elif mode == "sequence":
                span = n_buckets * bucket_s
                lo = trigger_t - span
                values = np.zeros((n_buckets, len(space)))
                counts = np.zeros((n_buckets, len(space)))
                seen_t = []
                for t, idx, value in obs:
                    if lo <= t <= trigger_t:
                        b = min(n_buckets - 1, (t - lo) // bucket_s)
                        values[b, idx] += value
                        counts[b, idx] += 1
                        seen_t.append(t)
                nz = counts > 0
                values[nz] /= counts[nz]
                for idx, value in static:
                    values[:, idx] = value
                    counts[:, idx] = np.maximum(counts[:, idx], 1)
                max_feature_t = max(seen_t) if seen_t else trigger_t
                inst = SequenceInstance(
                    subject.subject_id, trigger_t, values, counts, float(target),
                    ch.sex.value, ch.age, max_feature_t, min_target_t)
            else:
                raise ValueError(f"unknown mode {mode!r}")

            if not (inst.max_feature_t <= trigger_t < inst.min_target_t):
                raise LeakageError(
                    f"{subject.subject_id}@{trigger_t}: features reach "
                    f"{inst.max_feature_t}, targets start {inst.min_target_t}")
            out.append(inst)
    return out


def apply_feature_group_mask(instance: Instance, group: str, space: FeatureSpace) -> Instance:
    """Zero every feature outside ``group``; shape is unchanged."""
    keep = space.group_mask(group)
    values = instance.values * keep
    presence = instance.presence * keep
    return replace(instance, values=values, presence=presence)


def collapse_sequence(instance: SequenceInstance) -> np.ndarray:
    """Presence-weighted mean over buckets; the tabular view of a sequence."""
    total = instance.presence.sum(axis=0)
    summed = (instance.values * instance.presence).sum(axis=0)
    out = np.zeros_like(total, dtype=np.float64)
    nz = total > 0
    out[nz] = summed[nz] / total[nz]
    return out


def instances_matrix(instances: Sequence[TabularInstance]) -> tuple[np.ndarray, np.ndarray]:
    """Stack tabular instances into (X, y)."""
    X = np.stack([inst.values for inst in instances])
    y = np.array([inst.target for inst in instances])
    return X, y


def instances_tensor(instances: Sequence[SequenceInstance]) -> tuple[np.ndarray, np.ndarray]:
    """Stack sequence instances into (X[n,B,F], y)."""
    X = np.stack([inst.values for inst in instances])
    y = np.array([inst.target for inst in instances])
    return X, y
