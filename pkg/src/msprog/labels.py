"""Label creation: the four task families annotated onto cohorts.

Families
--------
* EDSS-derived: mean score over a future horizon, risk-threshold crossings,
  and the four-way severity category. Triggered at every visit.
* Disability scores: weighted min-max-normalized combinations of functional
  tests per category (cognitive / dexterity / mobility) plus their average,
  predicted over short horizons. Triggered after every new POM.
* Disability progression: three-class worsened/unchanged/improved labels from
  a >=20% deviation of a single feature against a rolling baseline.
* Diagnosis: does the chronologically-first block of N POMs belong to a
  subject with MS.

All horizon windows are half-open [trigger+start, trigger+end) and always
exclude the trigger instant itself, so targets sit strictly in the future of
the trigger (the featurizer asserts this disjointness).

Missing targets follow one of two policies: ``exclude`` drops the instance,
``paper_default`` fills the no-disability default (0).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .subject import ClinicalEvent, FunctionalTest, Questionnaire, Subject, with_labels

DAY_S = 86_400
WEEK_S = 7 * DAY_S
MONTH_S = 30 * DAY_S  # fixed 30-day months; horizon names use month counts

EDSS_NAME = "EDSS"

# Higher raw value = worse (+1) or better (-1). Shipped as explicit config;
# timed tests grow with disability, correct-count tests shrink.
DEFAULT_ORIENTATION = {
    "NHPT": 1, "T25FW": 1, "PASAT": -1, "SDMT": -1,
    "DrawShape": 1, "Pinching": -1, "2MWT": -1, "UTurn": 1, "Balance": 1,
    "SymbolMatch": -1, "IPS": -1, "MoodQ": -1,
}


class SeverityCategory(enum.IntEnum):
    NO_DISABILITY = 0
    MILD = 1
    MODERATE = 2
    SEVERE = 3


class ProgressionState(enum.IntEnum):
    UNCHANGED = 0
    IMPROVED = 1
    WORSENED = 2


@dataclass(frozen=True)
class Horizon:
    """Future window relative to a trigger: offsets in seconds, end exclusive."""

    start_s: int
    end_s: int

    def __post_init__(self):
        if not (0 <= self.start_s < self.end_s):
            raise ValueError(f"horizon requires 0 <= start < end, got {self.start_s}, {self.end_s}")

    @classmethod
    def months(cls, a: int, b: int) -> "Horizon":
        return cls(a * MONTH_S, b * MONTH_S)

    @classmethod
    def weeks(cls, a: int, b: int) -> "Horizon":
        return cls(a * WEEK_S, b * WEEK_S)

    @property
    def name(self) -> str:
        if self.start_s % MONTH_S == 0 and self.end_s % MONTH_S == 0:
            return f"{self.start_s // MONTH_S}-{self.end_s // MONTH_S}mo"
        if self.start_s % WEEK_S == 0 and self.end_s % WEEK_S == 0:
            return f"{self.start_s // WEEK_S}-{self.end_s // WEEK_S}wk"
        return f"{self.start_s}-{self.end_s}s"

    @classmethod
    def from_name(cls, name: str) -> "Horizon":
        if name.endswith("mo"):
            a, b = name[:-2].split("-")
            return cls.months(int(a), int(b))
        if name.endswith("wk"):
            a, b = name[:-2].split("-")
            return cls.weeks(int(a), int(b))
        a, b = name[:-1].split("-")
        return cls(int(a), int(b))

    def contains(self, trigger_t: int, t: int) -> bool:
        """True iff t is a valid target time for this window at trigger_t."""
        return t > trigger_t and trigger_t + self.start_s <= t < trigger_t + self.end_s


@dataclass(frozen=True)
class ScoreWeights:
    """Per-category test weights plus the normalization needed to apply them.

    ``categories`` maps category name -> {test name -> weight >= 0};
    ``orientation`` uses the DEFAULT_ORIENTATION convention; ``norm_stats``
    holds population (min, max) per test. Weights are renormalized over the
    tests actually observed, so they only need to be nonnegative here.
    """

    categories: dict[str, dict[str, float]]
    orientation: dict[str, int]
    norm_stats: dict[str, tuple[float, float]]

    def validate(self) -> None:
        for cat, wmap in self.categories.items():
            if not wmap:
                raise ValueError(f"category {cat!r} has no tests")
            for test, w in wmap.items():
                if w < 0:
                    raise ValueError(f"negative weight for {test!r}")
                lo, hi = self.norm_stats[test]
                if not lo < hi:
                    raise ValueError(f"norm stats for {test!r} need min < max, got {lo}, {hi}")


def uniform_score_weights(categories: dict[str, Sequence[str]],
                          orientation: dict[str, int],
                          norm_stats: dict[str, tuple[float, float]]) -> ScoreWeights:
    """Uniform within-category weights (the default; expert weights are config)."""
    cats = {cat: {t: 1.0 / len(tests) for t in tests} for cat, tests in categories.items()}
    sw = ScoreWeights(categories=cats, orientation=dict(orientation), norm_stats=dict(norm_stats))
    sw.validate()
    return sw


def population_norm_stats(cohort: Sequence[Subject], names: Sequence[str]) -> dict[str, tuple[float, float]]:
    """Population min/max per feature name, over all observations in the cohort."""
    stats: dict[str, tuple[float, float]] = {}
    wanted = set(names)
    for subject in cohort:
        for t, name, value in iter_numeric_observations(subject):
            if name not in wanted:
                continue
            lo, hi = stats.get(name, (math.inf, -math.inf))
            stats[name] = (min(lo, value), max(hi, value))
    return stats


def iter_numeric_observations(subject: Subject):
    """Yield (timestamp, name, value) for every numeric POM observation."""
    for event in subject.all_events():
        for res in event.resources:
            if isinstance(res, FunctionalTest):
                yield event.timestamp, res.name, res.value
            elif isinstance(res, Questionnaire) and res.numeric_response is not None:
                yield event.timestamp, res.name, res.numeric_response


# ---------------------------------------------------------------------------
# EDSS family

def collect_edss(subject: Subject) -> list[tuple[int, float]]:
    return [(t, v) for t, name, v in iter_numeric_observations(subject) if name == EDSS_NAME]


def edss_mean_label(subject: Subject, trigger_t: int, horizon: Horizon,
                    policy: str = "exclude", stat: str = "mean") -> Optional[float]:
    """Mean (or last) EDSS over the horizon window; policy decides empty windows."""
    values = [v for t, v in collect_edss(subject) if horizon.contains(trigger_t, t)]
    if not values:
        return 0.0 if policy == "paper_default" else None
    if stat == "last":
        return values[-1]
    return sum(values) / len(values)


def edss_threshold_label(edss_mean: float, theta: float) -> bool:
    """Strict greater-than, matching the task naming (mean > theta)."""
    return edss_mean > theta


def edss_severity_category(edss_mean: float) -> SeverityCategory:
    """Four-way severity from an EDSS mean in [0, 10].

    The clinical bins are stated on the 0.5 grid; window means fall between
    grid points, so the bins are closed half-open: [0,1.5) no disability,
    [1.5,3) mild, [3,5) moderate, [5,10] severe.
    """
    if not (0.0 <= edss_mean <= 10.0) or not math.isfinite(edss_mean):
        raise ValueError(f"EDSS mean out of range: {edss_mean}")
    if edss_mean < 1.5:
        return SeverityCategory.NO_DISABILITY
    if edss_mean < 3.0:
        return SeverityCategory.MILD
    if edss_mean < 5.0:
        return SeverityCategory.MODERATE
    return SeverityCategory.SEVERE


# ---------------------------------------------------------------------------
# Disability scores (smartphone-style cohorts)

def disability_scores(events: Sequence[ClinicalEvent], weights: ScoreWeights) -> dict[str, Optional[float]]:
    """Category scores in [0,1] (1 = maximal disability) plus their mean.

    Each observed test is min-max normalized with orientation applied; the
    category score is the weight-renormalized combination over tests observed
    in ``events``; categories with no observed test stay None and the overall
    score averages only the defined ones.
    """
    raw: dict[str, list[float]] = {}
    for event in events:
        for res in event.resources:
            if isinstance(res, FunctionalTest):
                raw.setdefault(res.name, []).append(res.value)
            elif isinstance(res, Questionnaire) and res.numeric_response is not None:
                raw.setdefault(res.name, []).append(res.numeric_response)

    out: dict[str, Optional[float]] = {}
    defined: list[float] = []
    for cat, wmap in weights.categories.items():
        num = 0.0
        den = 0.0
        for test, w in wmap.items():
            if test not in raw:
                continue
            lo, hi = weights.norm_stats[test]
            value = sum(raw[test]) / len(raw[test])
            norm = min(1.0, max(0.0, (value - lo) / (hi - lo)))
            if weights.orientation.get(test, 1) < 0:
                norm = 1.0 - norm
            num += w * norm
            den += w
        if den > 0:
            score = num / den
            out[cat] = score
            defined.append(score)
        else:
            out[cat] = None
    out["overall"] = sum(defined) / len(defined) if defined else None
    return out


def score_horizon_label(subject: Subject, trigger_t: int, horizon: Horizon,
                        kind: str, weights: ScoreWeights,
                        policy: str = "exclude") -> Optional[float]:
    """Mean of daily disability scores of one kind over the horizon window."""
    by_day: dict[int, list[ClinicalEvent]] = {}
    for event in subject.all_events():
        if horizon.contains(trigger_t, event.timestamp):
            by_day.setdefault(event.timestamp // DAY_S, []).append(event)
    daily = []
    for day in sorted(by_day):
        score = disability_scores(by_day[day], weights).get(kind)
        if score is not None:
            daily.append(score)
    if not daily:
        return 0.0 if policy == "paper_default" else None
    return sum(daily) / len(daily)


# ---------------------------------------------------------------------------
# Disability progression

def progression_annotate(values: Sequence[float], c: int = 3, threshold: float = 0.2,
                         orientation: int = 1, baseline_mode: str = "running_mean",
                         ewma_alpha: float = 0.3, zero_eps: float = 1e-9) -> list[ProgressionState]:
    """Annotate each point of one feature's series against a rolling baseline.

    The first ``c`` points establish the baseline and emit Unchanged. Every
    later point is compared through the orientation-adjusted relative change
    (v - b) / |b|: above +threshold is Worsened, below -threshold Improved.
    The baseline then absorbs the new point (running mean by default, EWMA
    behind config). A baseline at zero falls back to an absolute epsilon
    comparison, since relative change is undefined there.
    """
    if c < 1:
        raise ValueError("warmup count must be >= 1")
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    states: list[ProgressionState] = []
    mean = 0.0
    count = 0
    ewma: Optional[float] = None
    for i, v in enumerate(values):
        if i < c:
            states.append(ProgressionState.UNCHANGED)
        else:
            b = ewma if (baseline_mode == "ewma" and ewma is not None) else mean
            if abs(b) < zero_eps:
                delta = orientation * (v - b)
                if delta > zero_eps:
                    states.append(ProgressionState.WORSENED)
                elif delta < -zero_eps:
                    states.append(ProgressionState.IMPROVED)
                else:
                    states.append(ProgressionState.UNCHANGED)
            else:
                rel = orientation * (v - b) / abs(b)
                if rel > threshold:
                    states.append(ProgressionState.WORSENED)
                elif rel < -threshold:
                    states.append(ProgressionState.IMPROVED)
                else:
                    states.append(ProgressionState.UNCHANGED)
        count += 1
        mean += (v - mean) / count
        if baseline_mode == "ewma":
            ewma = v if ewma is None else ewma_alpha * v + (1 - ewma_alpha) * ewma
        if count == c and baseline_mode == "ewma":
            ewma = mean  # warmup baseline is the plain mean in both modes
    return states


def progression_horizon_label(annotations: Sequence[tuple[int, ProgressionState]],
                              trigger_t: int, horizon: Horizon,
                              policy: str = "exclude") -> Optional[ProgressionState]:
    """Aggregate per-timestamp states over a window: Worsened > Improved > Unchanged."""
    in_window = [s for t, s in annotations if horizon.contains(trigger_t, t)]
    if not in_window:
        return ProgressionState.UNCHANGED if policy == "paper_default" else None
    if ProgressionState.WORSENED in in_window:
        return ProgressionState.WORSENED
    if ProgressionState.IMPROVED in in_window:
        return ProgressionState.IMPROVED
    return ProgressionState.UNCHANGED


# ---------------------------------------------------------------------------
# Diagnosis from the first N POMs

def iter_poms(subject: Subject):
    """Yield (timestamp, resource) for every POM in chronological order."""
    for event in subject.all_events():
        for res in event.resources:
            if isinstance(res, (FunctionalTest, Questionnaire)):
                yield event.timestamp, res


def diagnosis_instance(subject: Subject, n_tests: int) -> Optional[tuple[int, bool]]:
    """Trigger time of the Nth POM and the MS target; None with fewer POMs."""
    if subject.characteristics.has_ms is None:
        raise ValueError(f"subject {subject.subject_id!r} has no MS ground truth")
    seen = 0
    for t, _res in iter_poms(subject):
        seen += 1
        if seen == n_tests:
            return t, subject.characteristics.has_ms
    return None


# ---------------------------------------------------------------------------
# Task registry and cohort annotation

@dataclass(frozen=True)
class TaskSpec:
    """One named prediction task: how to compute its target and read its label."""

    name: str
    kind: str                      # regression | binary | multiclass
    n_classes: int = 1
    horizon: Optional[Horizon] = None
    family: str = ""               # edss_mean | edss_gt | edss_severity | score | prog | diag
    threshold: float = 0.0         # edss_gt
    score_kind: str = ""           # score
    feature: str = ""              # prog
    n_poms: int = 0                # diag

    @property
    def label_map(self) -> str:
        return "regression_labels" if self.kind == "regression" else "classification_labels"


def parse_task_name(name: str) -> TaskSpec:
    head, _, tail = name.partition("@")
    if head == "edss_mean":
        return TaskSpec(name, "regression", horizon=Horizon.from_name(tail), family="edss_mean")
    if head.startswith("edss_gt"):
        return TaskSpec(name, "binary", 2, Horizon.from_name(tail), "edss_gt",
                        threshold=float(head[len("edss_gt"):]))
    if head == "edss_severity":
        return TaskSpec(name, "multiclass", 4, Horizon.from_name(tail), "edss_severity")
    if head.startswith("score_"):
        return TaskSpec(name, "regression", horizon=Horizon.from_name(tail), family="score",
                        score_kind=head[len("score_"):])
    if head.startswith("prog_"):
        return TaskSpec(name, "multiclass", 3, Horizon.from_name(tail), "prog",
                        feature=head[len("prog_"):])
    if head == "diag":
        return TaskSpec(name, "binary", 2, None, "diag", n_poms=int(tail.lstrip("n")))
    raise ValueError(f"unrecognized task name {name!r}")


@dataclass(frozen=True)
class LabelConfig:
    edss_horizons: tuple[Horizon, ...] = ()
    edss_thresholds: tuple[float, ...] = (3.0, 5.0)
    edss_mean_task: bool = True
    edss_severity_task: bool = True
    score_horizons: tuple[Horizon, ...] = ()
    score_kinds: tuple[str, ...] = ("cognitive", "dexterity", "mobility", "overall")
    score_categories: dict[str, tuple[str, ...]] = field(default_factory=dict)
    progression_features: tuple[str, ...] = ()
    progression_horizons: tuple[Horizon, ...] = ()
    progression_warmup: int = 3
    progression_threshold: float = 0.2
    diagnosis_counts: tuple[int, ...] = ()
    missing_policy: str = "exclude"   # or paper_default
    edss_stat: str = "mean"           # or last
    baseline_mode: str = "running_mean"
    orientation: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_ORIENTATION))

    @classmethod
    def from_dict(cls, d: dict) -> "LabelConfig":
        def horizons(key):
            return tuple(Horizon.from_name(h) for h in d.get(key, ()))
        return cls(
            edss_horizons=horizons("edss_horizons"),
            edss_thresholds=tuple(d.get("edss_thresholds", (3.0, 5.0))),
            edss_mean_task=d.get("edss_mean_task", True),
            edss_severity_task=d.get("edss_severity_task", True),
            score_horizons=horizons("score_horizons"),
            score_kinds=tuple(d.get("score_kinds", ("cognitive", "dexterity", "mobility", "overall"))),
            score_categories={k: tuple(v) for k, v in d.get("score_categories", {}).items()},
            progression_features=tuple(d.get("progression_features", ())),
            progression_horizons=horizons("progression_horizons"),
            progression_warmup=d.get("progression_warmup", 3),
            progression_threshold=d.get("progression_threshold", 0.2),
            diagnosis_counts=tuple(d.get("diagnosis_counts", ())),
            missing_policy=d.get("missing_policy", "exclude"),
            edss_stat=d.get("edss_stat", "mean"),
            baseline_mode=d.get("baseline_mode", "running_mean"),
            orientation={**DEFAULT_ORIENTATION, **d.get("orientation", {})},
        )

    def tasks(self) -> list[TaskSpec]:
        out: list[TaskSpec] = []
        for h in self.edss_horizons:
            if self.edss_mean_task:
                out.append(parse_task_name(f"edss_mean@{h.name}"))
            for theta in self.edss_thresholds:
                out.append(parse_task_name(f"edss_gt{theta:g}@{h.name}"))
            if self.edss_severity_task:
                out.append(parse_task_name(f"edss_severity@{h.name}"))
        for h in self.score_horizons:
            for kind in self.score_kinds:
                out.append(parse_task_name(f"score_{kind}@{h.name}"))
        for h in self.progression_horizons:
            for feat in self.progression_features:
                out.append(parse_task_name(f"prog_{feat}@{h.name}"))
        for n in self.diagnosis_counts:
            out.append(parse_task_name(f"diag@n{n}"))
        return out


def _score_weights(config: LabelConfig, cohort: Sequence[Subject]) -> Optional[ScoreWeights]:
    if not config.score_categories:
        return None
    names = [t for tests in config.score_categories.values() for t in tests]
    stats = population_norm_stats(cohort, names)
    usable = {cat: tuple(t for t in tests if t in stats and stats[t][0] < stats[t][1])
              for cat, tests in config.score_categories.items()}
    usable = {cat: tests for cat, tests in usable.items() if tests}
    if not usable:
        return None
    return uniform_score_weights(usable, config.orientation,
                                 {t: stats[t] for tests in usable.values() for t in tests})


def target_observation_times(subject: Subject, task: TaskSpec, trigger_t: int,
                             config: Optional[LabelConfig] = None) -> list[int]:
    """Timestamps that can contribute to ``task``'s target at ``trigger_t``.

    Used by the featurizer to assert feature/target disjointness; the label
    functions above and this helper share Horizon.contains so the window
    semantics cannot drift apart.
    """
    if task.family in ("edss_mean", "edss_gt", "edss_severity"):
        return [t for t, _v in collect_edss(subject) if task.horizon.contains(trigger_t, t)]
    if task.family == "score":
        return [e.timestamp for e in subject.all_events()
                if task.horizon.contains(trigger_t, e.timestamp)]
    if task.family == "prog":
        return [t for t, name, _v in iter_numeric_observations(subject)
                if name == task.feature and task.horizon.contains(trigger_t, t)]
    if task.family == "diag":
        return []  # target is static, nothing future contributes
    raise ValueError(f"unknown task family {task.family!r}")


def annotate_subject(subject: Subject, config: LabelConfig,
                     weights: Optional[ScoreWeights] = None) -> Subject:
    """Compute every configured task at every trigger event of one subject."""
    policy = config.missing_policy
    tasks = config.tasks()
    labels: dict[int, tuple[dict[str, int], dict[str, float]]] = {}

    def slot(t: int):
        if t not in labels:
            labels[t] = ({}, {})
        return labels[t]

    events = list(subject.all_events())
    pom_events = [e.timestamp for e in events
                  if any(isinstance(r, (FunctionalTest, Questionnaire)) for r in e.resources)]

    prog_annotations: dict[str, list[tuple[int, ProgressionState]]] = {}
    for task in tasks:
        if task.family == "prog" and task.feature not in prog_annotations:
            series = [(t, v) for t, name, v in iter_numeric_observations(subject)
                      if name == task.feature]
            states = progression_annotate(
                [v for _t, v in series], c=config.progression_warmup,
                threshold=config.progression_threshold,
                orientation=config.orientation.get(task.feature, 1),
                baseline_mode=config.baseline_mode)
            prog_annotations[task.feature] = list(zip((t for t, _v in series), states))

    for task in tasks:
        if task.family in ("edss_mean", "edss_gt", "edss_severity"):
            for event in events:
                t = event.timestamp
                mean = edss_mean_label(subject, t, task.horizon, policy=policy,
                                       stat=config.edss_stat)
                if mean is None:
                    continue
                cls, reg = slot(t)
                if task.family == "edss_mean":
                    reg[task.name] = mean
                elif task.family == "edss_gt":
                    cls[task.name] = int(edss_threshold_label(mean, task.threshold))
                else:
                    cls[task.name] = int(edss_severity_category(min(10.0, max(0.0, mean))))
        elif task.family == "score":
            if weights is None:
                continue
            for t in pom_events:
                value = score_horizon_label(subject, t, task.horizon, task.score_kind,
                                            weights, policy=policy)
                if value is None:
                    continue
                slot(t)[1][task.name] = value
        elif task.family == "prog":
            annotations = prog_annotations[task.feature]
            for t in pom_events:
                state = progression_horizon_label(annotations, t, task.horizon, policy=policy)
                if state is None:
                    continue
                slot(t)[0][task.name] = int(state)
        elif task.family == "diag":
            if subject.characteristics.has_ms is None:
                continue
            hit = diagnosis_instance(subject, task.n_poms)
            if hit is None:
                continue
            t, target = hit
            slot(t)[0][task.name] = int(target)

    return with_labels(subject, labels)


def annotate_cohort(cohort: Sequence[Subject], config: LabelConfig) -> list[Subject]:
    weights = _score_weights(config, cohort)
    return [annotate_subject(s, config, weights) for s in cohort]


def label_histogram(cohort: Sequence[Subject]) -> dict[str, dict[str, int]]:
    """Count label values per task over a labeled cohort (prevalence tables)."""
    hist: dict[str, dict[str, int]] = {}
    for subject in cohort:
        for event in subject.all_events():
            for name, value in event.classification_labels.items():
                hist.setdefault(name, {})
                key = str(value)
                hist[name][key] = hist[name].get(key, 0) + 1
            for name, value in event.regression_labels.items():
                hist.setdefault(name, {})
                hist[name]["n"] = hist[name].get("n", 0) + 1
    return {name: dict(sorted(counts.items())) for name, counts in sorted(hist.items())}
