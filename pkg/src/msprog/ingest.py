"""Adapters from raw delimited-text exports to the common subject format.

Two episode styles cover the clinic-visit and smartphone shapes: PerVisit
groups everything sharing a visit timestamp into one single-event episode,
FixedBucket(d) groups events into disjoint d-second spans. Row-level parse
failures are collected, not fatal, up to a configurable fraction.
"""

from __future__ import annotations

import calendar
import csv
import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Optional, Sequence

from .subject import (ClinicalEvent, Episode, FunctionalTest, GenericResource,
                      Questionnaire, Resource, Sex, Subject,
                      SubjectCharacteristics, validate_subject)

PER_VISIT = "per_visit"
FIXED_BUCKET = "fixed_bucket"


class IngestError(ValueError):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


@dataclass(frozen=True)
class ColumnSpec:
    kind: str                 # functional_test | questionnaire | generic
    name: str
    category: str = ""
    unit: str = ""
    response: str = "numeric"  # questionnaire: numeric | text | categorical


@dataclass(frozen=True)
class AdapterMapping:
    subject_id_column: str
    timestamp_column: str
    timestamp_format: str = "epoch_seconds"   # or a strptime format
    episode_rule: str = PER_VISIT
    bucket_duration_s: int = 86_400
    rebase: str = "cohort_start"              # or "first_event" (per subject)
    static_columns: dict[str, str] = field(default_factory=dict)
    columns: dict[str, ColumnSpec] = field(default_factory=dict)
    row_failure_abort_fraction: float = 0.5

    def __post_init__(self):
        if self.episode_rule not in (PER_VISIT, FIXED_BUCKET):
            raise IngestError("BAD_EPISODE_RULE", self.episode_rule)
        if self.episode_rule == FIXED_BUCKET and self.bucket_duration_s <= 0:
            raise IngestError("BAD_BUCKET_DURATION", str(self.bucket_duration_s))
        sources = [self.subject_id_column, self.timestamp_column]
        sources += list(self.static_columns.values())
        sources += list(self.columns.keys())
        dupes = {c for c in sources if sources.count(c) > 1}
        if dupes:
            raise IngestError("DUPLICATE_SOURCE_COLUMN", ", ".join(sorted(dupes)))

    @classmethod
    def from_dict(cls, d: dict) -> "AdapterMapping":
        rule = d.get("episode_rule", {"kind": PER_VISIT})
        columns = {
            src: ColumnSpec(kind=spec["kind"], name=spec["name"],
                            category=spec.get("category", ""), unit=spec.get("unit", ""),
                            response=spec.get("response", "numeric"))
            for src, spec in d.get("columns", {}).items()
        }
        return cls(
            subject_id_column=d["subject_id_column"],
            timestamp_column=d["timestamp_column"],
            timestamp_format=d.get("timestamp_format", "epoch_seconds"),
            episode_rule=rule.get("kind", PER_VISIT),
            bucket_duration_s=int(rule.get("duration_s", 86_400)),
            rebase=d.get("rebase", "cohort_start"),
            static_columns=dict(d.get("static_columns", {})),
            columns=columns,
            row_failure_abort_fraction=float(d.get("row_failure_abort_fraction", 0.5)),
        )


@dataclass
class IngestionSummary:
    rows_read: int = 0
    rows_mapped: int = 0
    rows_failed: int = 0
    resources_mapped: int = 0
    subjects: int = 0
    unmapped_columns: list[str] = field(default_factory=list)
    failures: dict[str, int] = field(default_factory=dict)

    def record_failure(self, code: str):
        self.rows_failed += 1
        self.failures[code] = self.failures.get(code, 0) + 1

    def to_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_mapped": self.rows_mapped,
            "rows_failed": self.rows_failed,
            "resources_mapped": self.resources_mapped,
            "subjects": self.subjects,
            "unmapped_columns": sorted(self.unmapped_columns),
            "failures": dict(sorted(self.failures.items())),
        }


def _parse_timestamp(cell: str, fmt: str) -> int:
    if fmt == "epoch_seconds":
        return int(float(cell))
    dt = datetime.strptime(cell, fmt)
    return calendar.timegm(dt.timetuple())


_SEX_VALUES = {"f": Sex.FEMALE, "female": Sex.FEMALE, "m": Sex.MALE, "male": Sex.MALE}
_BOOL_VALUES = {"1": True, "true": True, "yes": True, "0": False, "false": False, "no": False}


def _parse_static(field_name: str, cell: str):
    cell = cell.strip()
    if not cell:
        return None
    if field_name == "sex":
        return _SEX_VALUES.get(cell.lower(), Sex.UNKNOWN)
    if field_name == "has_ms":
        return _BOOL_VALUES.get(cell.lower())
    if field_name in ("age", "height_cm", "weight_kg"):
        return float(cell)
    return cell


def _cell_to_resource(spec: ColumnSpec, cell: str) -> Resource:
    if spec.kind == "functional_test":
        value = float(cell)
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {cell!r}")
        return FunctionalTest(name=spec.name, category=spec.category, value=value, unit=spec.unit)
    if spec.kind == "questionnaire":
        kwargs = {"name": spec.name, "category": spec.category}
        if spec.response == "numeric":
            value = float(cell)
            if not math.isfinite(value):
                raise ValueError(f"non-finite value {cell!r}")
            kwargs["numeric_response"] = value
        elif spec.response == "categorical":
            kwargs["categorical_response"] = cell
        else:
            kwargs["text_response"] = cell
        return Questionnaire(**kwargs)
    return GenericResource(key=spec.name, payload=cell)


def ingest_cohort(files: Sequence, mapping: AdapterMapping) -> tuple[list[Subject], IngestionSummary]:
    """Parse CSV exports into validated Subjects.

    Returns the cohort sorted by subject id plus an ingestion summary. Raises
    IngestError(MISSING_COLUMN) when a header lacks a mapped column and
    TOO_MANY_ROW_FAILURES when more than the configured fraction of rows
    fail to parse.
    """
    summary = IngestionSummary()
    # subject -> {abs timestamp -> [resources]}
    observations: dict[str, dict[int, list[Resource]]] = {}
    statics: dict[str, dict[str, object]] = {}

    mapped_sources = set(mapping.columns) | set(mapping.static_columns.values())
    mapped_sources |= {mapping.subject_id_column, mapping.timestamp_column}

    for path in files:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in sorted(mapped_sources) if c not in header]
            if missing:
                raise IngestError("MISSING_COLUMN", f"{path}: {', '.join(missing)}")
            for col in header:
                if col not in mapped_sources and col not in summary.unmapped_columns:
                    summary.unmapped_columns.append(col)
            for row in reader:
                summary.rows_read += 1
                sid = (row.get(mapping.subject_id_column) or "").strip()
                if not sid:
                    summary.record_failure("MISSING_SUBJECT_ID")
                    continue
                raw_ts = (row.get(mapping.timestamp_column) or "").strip()
                try:
                    ts = _parse_timestamp(raw_ts, mapping.timestamp_format)
                except (ValueError, TypeError):
                    summary.record_failure("UNPARSEABLE_TIMESTAMP")
                    continue
                try:
                    resources = [
                        _cell_to_resource(spec, row[src].strip())
                        for src, spec in mapping.columns.items()
                        if (row.get(src) or "").strip()
                    ]
                except (ValueError, TypeError):
                    summary.record_failure("UNPARSEABLE_VALUE")
                    continue
                static = statics.setdefault(sid, {})
                for field_name, src in mapping.static_columns.items():
                    if field_name not in static:
                        parsed = _parse_static(field_name, row.get(src) or "")
                        if parsed is not None:
                            static[field_name] = parsed
                summary.rows_mapped += 1
                summary.resources_mapped += len(resources)
                if resources:
                    observations.setdefault(sid, {}).setdefault(ts, []).extend(resources)

    total = summary.rows_read
    if total and summary.rows_failed / total > mapping.row_failure_abort_fraction:
        raise IngestError("TOO_MANY_ROW_FAILURES",
                          f"{summary.rows_failed}/{total} rows failed")

    cohort_start = min((min(times) for times in observations.values()), default=0)

    subjects = []
    for sid in sorted(observations):
        times = observations[sid]
        origin = min(times) if mapping.rebase == "first_event" else cohort_start
        events = [
            ClinicalEvent(timestamp=t - origin, resources=tuple(times[t]))
            for t in sorted(times)
        ]
        episodes = _build_episodes(events, mapping)
        ch = _characteristics(statics.get(sid, {}))
        subject = Subject(subject_id=sid, characteristics=ch, episodes=episodes)
        report = validate_subject(subject)
        if report:
            raise IngestError("INVALID_SUBJECT",
                              f"{sid}: {', '.join(v.code for v in report)}")
        subjects.append(subject)

    summary.subjects = len(subjects)
    return subjects, summary


def _characteristics(static: dict) -> SubjectCharacteristics:
    return SubjectCharacteristics(
        sex=static.get("sex", Sex.UNKNOWN),
        age=static.get("age"),
        race=static.get("race"),
        country=static.get("country"),
        height_cm=static.get("height_cm"),
        weight_kg=static.get("weight_kg"),
        has_ms=static.get("has_ms"),
    )


def _build_episodes(events: list[ClinicalEvent], mapping: AdapterMapping) -> tuple[Episode, ...]:
    if mapping.episode_rule == PER_VISIT:
        return tuple(Episode(events=(e,)) for e in events)
    buckets: dict[int, list[ClinicalEvent]] = {}
    for e in events:
        buckets.setdefault(e.timestamp // mapping.bucket_duration_s, []).append(e)
    return tuple(Episode(events=tuple(buckets[b])) for b in sorted(buckets))


# ---------------------------------------------------------------------------
# Population feature sparsity

@dataclass(frozen=True)
class SparsityTable:
    """Counts of subjects with >=1 observation of a feature per time bucket."""

    bucket_duration_s: int
    counts: dict[tuple[str, int], int]

    def count(self, feature: str, bucket: int) -> int:
        return self.counts.get((feature, bucket), 0)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["feature", "bucket_index", "count"])
            for (feature, bucket) in sorted(self.counts):
                writer.writerow([feature, bucket, self.counts[(feature, bucket)]])


def compute_feature_sparsity(cohort: Sequence[Subject], bucket_duration_s: int) -> SparsityTable:
    """Population-level observation counts per (feature, bucket)."""
    if bucket_duration_s <= 0:
        raise ValueError("bucket duration must be > 0")
    counts: dict[tuple[str, int], int] = {}
    for subject in cohort:
        seen: set[tuple[str, int]] = set()
        for event in subject.all_events():
            bucket = event.timestamp // bucket_duration_s
            for res in event.resources:
                if isinstance(res, (FunctionalTest, Questionnaire)):
                    seen.add((res.name, bucket))
        for key in seen:
            counts[key] = counts.get(key, 0) + 1
    return SparsityTable(bucket_duration_s=bucket_duration_s, counts=counts)
