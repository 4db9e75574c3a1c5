"""Deterministic synthetic cohorts with a latent disability trajectory.

Each subject carries a latent score L(t) in [0, 10] (random walk with drift);
every emitted measurement is a monotone noisy transform of L, so downstream
models have recoverable signal. Clinic-style cohorts emit quarterly visits
with an EDSS reading, four functional tests and sparser questionnaires;
smartphone-style cohorts emit daily sessions of seven tests plus a mood
question, have MS and control arms, and thin out under a weekly attrition
hazard.

Generation is reproducible bit-for-bit across platforms: all randomness come
from per-subject Philox substreams keyed by (seed, subject index), so subject
N is identical no matter how many others are generated or in what order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from ._util import rng_stream
from .subject import (ClinicalEvent, Episode, FunctionalTest, Questionnaire,
                      Sex, Subject, SubjectCharacteristics, validate_subject)
from .labels import DAY_S, label_histogram

CLINIC = "clinic"
SMARTPHONE = "smartphone"

AGE_BUCKETS = ((18.0, 30.0), (30.0, 50.0), (50.0, 70.0), (70.0, 85.0))


@dataclass(frozen=True)
class GeneratorConfig:
    n_subjects: int = 100
    style: str = CLINIC
    seed: int = 0
    followup_days: int = 900
    # clinic cadence
    visit_interval_days: float = 90.0
    visit_jitter_days: float = 7.0
    # smartphone cadence
    session_probability: float = 0.85
    test_probability: float = 0.9
    mood_probability: float = 0.9
    weekly_attrition_hazard: float = 0.02
    control_fraction: float = 0.4716
    # latent trajectory
    latent_start_mean: float = 2.5
    latent_start_sd: float = 1.8
    drift_per_year: float = 0.3
    latent_noise_sd: float = 0.25
    test_noise_sd: float = 1.0
    questionnaire_rate: float = 0.1
    age_signal: float = 1.0      # latent-start shift per (age-40)/30 years
    # demographics
    female_fraction: float = 0.66
    age_bucket_weights: tuple[float, float, float, float] = (0.12, 0.55, 0.30, 0.03)

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be >= 1")
        if self.style not in (CLINIC, SMARTPHONE):
            raise ValueError(f"unknown style {self.style!r}")
        for name in ("session_probability", "test_probability", "mood_probability",
                     "weekly_attrition_hazard", "control_fraction",
                     "questionnaire_rate", "female_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {v}")
        if abs(sum(self.age_bucket_weights) - 1.0) > 1e-9:
            raise ValueError("age_bucket_weights must sum to 1")

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        if "age_bucket_weights" in d:
            d["age_bucket_weights"] = tuple(d["age_bucket_weights"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["age_bucket_weights"] = list(self.age_bucket_weights)
        return d


def _quantize_edss(x: float) -> float:
    return min(10.0, max(0.0, round(x * 2.0) / 2.0))


def _latent_path(rng: np.random.Generator, l0: float, drift_per_year: float,
                 noise_sd: float, times_days: np.ndarray) -> np.ndarray:
    """Latent trajectory sampled at the given day offsets."""
    l = np.empty(len(times_days))
    walk = 0.0
    prev = 0.0
    for i, day in enumerate(times_days):
        dt_years = max(0.0, (day - prev)) / 365.0
        walk += rng.normal(0.0, noise_sd * math.sqrt(dt_years)) if dt_years > 0 else 0.0
        l[i] = min(10.0, max(0.0, l0 + drift_per_year * (day / 365.0) + walk))
        prev = day
    return l


def _demographics(rng: np.random.Generator, cfg: GeneratorConfig,
                  has_ms: Optional[bool]) -> SubjectCharacteristics:
    sex = Sex.FEMALE if rng.random() < cfg.female_fraction else Sex.MALE
    bucket = int(rng.choice(len(AGE_BUCKETS), p=np.asarray(cfg.age_bucket_weights)))
    lo, hi = AGE_BUCKETS[bucket]
    age = float(round(rng.uniform(lo, hi), 1))
    return SubjectCharacteristics(sex=sex, age=age, has_ms=has_ms)


def _clinic_subject(idx: int, cfg: GeneratorConfig) -> Subject:
    rng = rng_stream(cfg.seed, idx)
    ch = _demographics(rng, cfg, has_ms=None)
    l0 = rng.normal(cfg.latent_start_mean + cfg.age_signal * (ch.age - 40.0) / 30.0,
                    cfg.latent_start_sd)
    l0 = min(10.0, max(0.0, l0))

    visit_days = [0.0]
    while True:
        gap = cfg.visit_interval_days + rng.normal(0.0, cfg.visit_jitter_days)
        nxt = visit_days[-1] + max(30.0, gap)
        if nxt > cfg.followup_days:
            break
        visit_days.append(nxt)
    days = np.array(visit_days)
    latent = _latent_path(rng, l0, cfg.drift_per_year, cfg.latent_noise_sd, days)

    sd = cfg.test_noise_sd
    episodes = []
    for day, l in zip(days, latent):
        resources = [
            FunctionalTest("EDSS", "clinician", _quantize_edss(l + rng.normal(0.0, 0.35)), "points"),
            FunctionalTest("NHPT", "dexterity", round(18.0 + 2.5 * l + sd * rng.normal(), 2), "s"),
            FunctionalTest("T25FW", "mobility", round(4.0 + 1.8 * l + 0.8 * sd * rng.normal(), 2), "s"),
            FunctionalTest("PASAT", "cognition", round(55.0 - 3.5 * l + 2.0 * sd * rng.normal(), 1), "count"),
            FunctionalTest("SDMT", "cognition", round(58.0 - 3.8 * l + 2.0 * sd * rng.normal(), 1), "count"),
        ]
        for qname, value in (("KFSS", min(6.0, max(0.0, 0.55 * l + 0.4 * rng.normal()))),
                             ("SF12", 52.0 - 3.2 * l + 3.0 * rng.normal()),
                             ("BDI", max(0.0, 4.0 + 2.2 * l + 2.5 * rng.normal()))):
            if rng.random() < cfg.questionnaire_rate:
                resources.append(Questionnaire(qname, "questionnaire",
                                               numeric_response=round(value, 2)))
        event = ClinicalEvent(timestamp=int(day) * DAY_S, resources=tuple(resources))
        episodes.append(Episode(events=(event,)))

    return Subject(subject_id=f"C{idx:05d}", characteristics=ch, episodes=tuple(episodes))


_PHONE_TESTS = (
    # name, category, base, slope (latent units), noise scale, higher-is-better
    ("DrawShape", "dexterity", 2.0, 0.8, 1.0, False),
    ("Pinching", "dexterity", 30.0, -2.0, 1.0, True),
    ("2MWT", "mobility", 180.0, -12.0, 5.0, True),
    ("UTurn", "mobility", 4.0, 0.9, 1.0, False),
    ("Balance", "mobility", 1.0, 0.7, 0.8, False),
    ("SymbolMatch", "cognition", 40.0, -3.0, 2.0, True),
    ("IPS", "cognition", 50.0, -3.5, 2.0, True),
)


def _smartphone_subject(idx: int, cfg: GeneratorConfig) -> Subject:
    rng = rng_stream(cfg.seed, idx)
    ms_count = cfg.n_subjects - int(round(cfg.n_subjects * cfg.control_fraction))
    has_ms = idx < ms_count
    ch = _demographics(rng, cfg, has_ms=has_ms)

    if cfg.weekly_attrition_hazard > 0:
        u = rng.random()
        active_weeks = int(math.floor(math.log(max(u, 1e-300)) /
                                      math.log(1.0 - cfg.weekly_attrition_hazard)))
    else:
        active_weeks = cfg.followup_days // 7 + 1
    active_days = min(cfg.followup_days, active_weeks * 7)

    if has_ms:
        l0 = min(10.0, max(0.0, rng.normal(
            cfg.latent_start_mean + cfg.age_signal * (ch.age - 40.0) / 30.0,
            cfg.latent_start_sd)))
        drift = cfg.drift_per_year
    else:
        l0 = min(2.0, max(0.0, rng.normal(0.4, 0.3)))
        drift = 0.0

    episodes = []
    walk = 0.0
    sd = cfg.test_noise_sd
    for day in range(active_days):
        walk += rng.normal(0.0, cfg.latent_noise_sd * math.sqrt(1.0 / 365.0))
        if rng.random() >= cfg.session_probability:
            continue
        l = min(10.0, max(0.0, l0 + drift * day / 365.0 + walk))
        events = []
        offset = 9 * 3600
        for name, category, base, slope, noise, _hib in _PHONE_TESTS:
            if rng.random() < cfg.test_probability:
                value = round(base + slope * l + noise * sd * rng.normal(), 2)
                events.append(ClinicalEvent(
                    timestamp=day * DAY_S + offset,
                    resources=(FunctionalTest(name, category, value, ""),)))
            offset += 600
        if rng.random() < cfg.mood_probability:
            mood = int(min(5, max(1, round(4.2 - 0.5 * l + 0.8 * rng.normal()))))
            events.append(ClinicalEvent(
                timestamp=day * DAY_S + offset,
                resources=(Questionnaire("MoodQ", "mood", numeric_response=float(mood)),)))
        if events:
            episodes.append(Episode(events=tuple(events)))

    return Subject(subject_id=f"P{idx:05d}", characteristics=ch, episodes=tuple(episodes))


def generate_cohort(config: GeneratorConfig) -> list[Subject]:
    """Generate the configured cohort; deterministic for a fixed seed."""
    build = _clinic_subject if config.style == CLINIC else _smartphone_subject
    cohort = []
    for idx in range(config.n_subjects):
        subject = build(idx, config)
        report = validate_subject(subject)
        if report:  # generator bug, not a data condition
            raise AssertionError(f"generated subject failed validation: {report}")
        cohort.append(subject)
    return cohort


def summarize_cohort(cohort: Sequence[Subject]) -> dict:
    """Pure summary used by calibration and the acceptance suite."""
    sex_hist: dict[str, int] = {}
    feature_obs: dict[str, int] = {}
    ms = 0
    ms_known = 0
    for subject in cohort:
        sex_hist[subject.characteristics.sex.value] = \
            sex_hist.get(subject.characteristics.sex.value, 0) + 1
        if subject.characteristics.has_ms is not None:
            ms_known += 1
            ms += int(subject.characteristics.has_ms)
        for event in subject.all_events():
            for res in event.resources:
                if isinstance(res, (FunctionalTest, Questionnaire)):
                    feature_obs[res.name] = feature_obs.get(res.name, 0) + 1
    return {
        "subjects": len(cohort),
        "sex_histogram": dict(sorted(sex_hist.items())),
        "ms_fraction": (ms / ms_known) if ms_known else None,
        "feature_observations": dict(sorted(feature_obs.items())),
        "label_histogram": label_histogram(cohort),
    }
