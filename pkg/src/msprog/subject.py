"""Common subject representation: types, validation, and the JSONL codec.

Every other stage of the pipeline consumes only these types. All of them are
frozen dataclasses, so cohorts can be shared freely between workers; the
validation and codec functions are pure.

Timestamps are integer seconds relative to a per-cohort epoch (study start
for clinic-style data, app-join for smartphone-style data).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional, Union

SCHEMA_VERSION = 1


class Sex(enum.Enum):
    FEMALE = "Female"
    MALE = "Male"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class SubjectCharacteristics:
    sex: Sex = Sex.UNKNOWN
    age: Optional[float] = None          # years at enrollment
    race: Optional[str] = None
    country: Optional[str] = None
    height_cm: Optional[float] = None
    weight_kg: Optional[float] = None
    has_ms: Optional[bool] = None        # present only for cohorts with controls


@dataclass(frozen=True)
class FunctionalTest:
    name: str
    category: str
    value: float
    unit: str = ""


@dataclass(frozen=True)
class Questionnaire:
    name: str
    category: str
    text_response: Optional[str] = None
    numeric_response: Optional[float] = None
    categorical_response: Optional[str] = None


@dataclass(frozen=True)
class GenericResource:
    key: str
    payload: str = ""


Resource = Union[FunctionalTest, Questionnaire, GenericResource]


@dataclass(frozen=True)
class ClinicalEvent:
    """A set of coinciding resources recorded at one timestamp.

    Label maps start empty and are filled by the label stage, which returns
    new events rather than mutating these.
    """

    timestamp: int
    resources: tuple[Resource, ...] = ()
    classification_labels: dict[str, int] = field(default_factory=dict)
    regression_labels: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Episode:
    events: tuple[ClinicalEvent, ...] = ()

    @property
    def start(self) -> int:
        return self.events[0].timestamp


@dataclass(frozen=True)
class Subject:
    subject_id: str
    characteristics: SubjectCharacteristics = field(default_factory=SubjectCharacteristics)
    episodes: tuple[Episode, ...] = ()

    def all_events(self) -> Iterator[ClinicalEvent]:
        for episode in self.episodes:
            yield from episode.events


@dataclass(frozen=True)
class Violation:
    code: str
    path: str
    detail: str = ""


ValidationReport = list


class InvalidSubjectError(ValueError):
    """Raised when an operation requires a clean validation report."""

    def __init__(self, subject_id: str, report: list[Violation]):
        self.report = report
        codes = ", ".join(v.code for v in report)
        super().__init__(f"subject {subject_id!r} failed validation: {codes}")


class MalformedRecordError(ValueError):
    code = "MALFORMED_RECORD"

    def __init__(self, message: str, offset: int = 0):
        self.offset = offset
        super().__init__(f"{self.code} at byte {offset}: {message}")


class SchemaVersionError(ValueError):
    code = "SCHEMA_VERSION_MISMATCH"

    def __init__(self, found):
        super().__init__(f"{self.code}: expected v={SCHEMA_VERSION}, found v={found!r}")


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def validate_subject(subject: Subject) -> list[Violation]:
    """Check every type invariant; returns one Violation per breach.

    Violations are data, not failures: an empty list means the subject is
    valid. The input is never mutated.
    """
    out: list[Violation] = []

    if not subject.subject_id:
        out.append(Violation("EMPTY_SUBJECT_ID", "subject_id"))

    ch = subject.characteristics
    if ch.age is not None and not (0 <= ch.age <= 120):
        out.append(Violation("AGE_OUT_OF_RANGE", "characteristics.age", str(ch.age)))
    if ch.height_cm is not None and not (0 < ch.height_cm <= 272):
        out.append(Violation("HEIGHT_OUT_OF_RANGE", "characteristics.height_cm", str(ch.height_cm)))
    if ch.weight_kg is not None and not (0 < ch.weight_kg <= 650):
        out.append(Violation("WEIGHT_OUT_OF_RANGE", "characteristics.weight_kg", str(ch.weight_kg)))

    prev_start: Optional[int] = None
    prev_end: Optional[int] = None
    for i, episode in enumerate(subject.episodes):
        epath = f"episodes[{i}]"
        if not episode.events:
            out.append(Violation("EMPTY_EPISODE", epath))
            continue
        start = episode.start
        if prev_start is not None:
            if start == prev_start:
                out.append(Violation("DUPLICATE_EPISODE_TIME", epath, str(start)))
            elif start < prev_start:
                out.append(Violation("EPISODES_OUT_OF_ORDER", epath, f"{start} < {prev_start}"))
        if prev_end is not None and start < prev_end:
            out.append(Violation("EPISODE_OVERLAP", epath, f"{start} < {prev_end}"))
        prev_start = start
        prev_end = episode.events[-1].timestamp

        prev_t: Optional[int] = None
        for j, event in enumerate(episode.events):
            vpath = f"{epath}.events[{j}]"
            if event.timestamp < 0:
                out.append(Violation("NEGATIVE_TIMESTAMP", vpath, str(event.timestamp)))
            if prev_t is not None:
                if event.timestamp < prev_t:
                    out.append(Violation("EVENTS_OUT_OF_ORDER", vpath, f"{event.timestamp} < {prev_t}"))
                elif event.timestamp == prev_t:
                    # coinciding resources belong in one event by construction
                    out.append(Violation("DUPLICATE_EVENT_TIME", vpath, str(event.timestamp)))
            prev_t = event.timestamp
            if not event.resources:
                out.append(Violation("EMPTY_RESOURCES", vpath))
            for r, res in enumerate(event.resources):
                rpath = f"{vpath}.resources[{r}]"
                if isinstance(res, FunctionalTest):
                    if not res.name:
                        out.append(Violation("EMPTY_TEST_NAME", rpath))
                    if not _finite(res.value):
                        out.append(Violation("NONFINITE_VALUE", rpath, repr(res.value)))
                elif isinstance(res, Questionnaire):
                    if not res.name:
                        out.append(Violation("EMPTY_TEST_NAME", rpath))
                    if (res.text_response is None and res.numeric_response is None
                            and res.categorical_response is None):
                        out.append(Violation("EMPTY_QUESTIONNAIRE_RESPONSE", rpath))
                    if res.numeric_response is not None and not _finite(res.numeric_response):
                        out.append(Violation("NONFINITE_VALUE", rpath, repr(res.numeric_response)))
    return out


# ---------------------------------------------------------------------------
# JSONL codec (schema v1; field names are fixed for golden tests)

_SEX_TO_STR = {Sex.FEMALE: "Female", Sex.MALE: "Male", Sex.UNKNOWN: "Unknown"}
_STR_TO_SEX = {v: k for k, v in _SEX_TO_STR.items()}


def _characteristics_to_dict(ch: SubjectCharacteristics) -> dict:
    d: dict = {}
    if ch.sex is not Sex.UNKNOWN:
        d["sex"] = _SEX_TO_STR[ch.sex]
    for key, val in (("age", ch.age), ("race", ch.race), ("country", ch.country),
                     ("height_cm", ch.height_cm), ("weight_kg", ch.weight_kg),
                     ("has_ms", ch.has_ms)):
        if val is not None:
            d[key] = val
    return d


def _resource_to_dict(res: Resource) -> dict:
    if isinstance(res, FunctionalTest):
        d = {"kind": "functional_test", "name": res.name, "category": res.category,
             "value": res.value}
        if res.unit:
            d["unit"] = res.unit
        return d
    if isinstance(res, Questionnaire):
        d = {"kind": "questionnaire", "name": res.name, "category": res.category}
        if res.text_response is not None:
            d["text"] = res.text_response
        if res.numeric_response is not None:
            d["numeric"] = res.numeric_response
        if res.categorical_response is not None:
            d["categorical"] = res.categorical_response
        return d
    return {"kind": "generic", "key": res.key, "payload": res.payload}


def _event_to_dict(event: ClinicalEvent) -> dict:
    d: dict = {"t": event.timestamp,
               "resources": [_resource_to_dict(r) for r in event.resources]}
    if event.classification_labels:
        d["classification_labels"] = dict(sorted(event.classification_labels.items()))
    if event.regression_labels:
        d["regression_labels"] = dict(sorted(event.regression_labels.items()))
    return d


def encode_subject(subject: Subject) -> str:
    """Encode one subject as a single JSON line (no trailing newline).

    Byte-deterministic: identical subjects encode to identical lines.
    Rejects subjects that fail validation.
    """
    report = validate_subject(subject)
    if report:
        raise InvalidSubjectError(subject.subject_id, report)
    record = {
        "v": SCHEMA_VERSION,
        "subject_id": subject.subject_id,
        "characteristics": _characteristics_to_dict(subject.characteristics),
        "episodes": [
            {"events": [_event_to_dict(e) for e in ep.events]}
            for ep in subject.episodes
        ],
    }
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _resource_from_dict(d: dict) -> Resource:
    kind = d.get("kind")
    if kind == "functional_test":
        return FunctionalTest(name=d["name"], category=d.get("category", ""),
                              value=float(d["value"]), unit=d.get("unit", ""))
    if kind == "questionnaire":
        num = d.get("numeric")
        return Questionnaire(name=d["name"], category=d.get("category", ""),
                             text_response=d.get("text"),
                             numeric_response=float(num) if num is not None else None,
                             categorical_response=d.get("categorical"))
    if kind == "generic":
        return GenericResource(key=d["key"], payload=d.get("payload", ""))
    raise KeyError(f"unknown resource kind {kind!r}")


def decode_subject(line: str) -> Subject:
    """Inverse of :func:`encode_subject`.

    Raises SchemaVersionError on an unknown version tag and
    MalformedRecordError (with byte offset) on anything else unreadable.
    """
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecordError(exc.msg, offset=exc.pos) from exc
    if not isinstance(record, dict):
        raise MalformedRecordError("record is not an object")
    version = record.get("v")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(version)
    try:
        ch_d = record.get("characteristics", {})
        ch = SubjectCharacteristics(
            sex=_STR_TO_SEX.get(ch_d.get("sex", "Unknown"), Sex.UNKNOWN),
            age=ch_d.get("age"),
            race=ch_d.get("race"),
            country=ch_d.get("country"),
            height_cm=ch_d.get("height_cm"),
            weight_kg=ch_d.get("weight_kg"),
            has_ms=ch_d.get("has_ms"),
        )
        episodes = tuple(
            Episode(events=tuple(
                ClinicalEvent(
                    timestamp=int(e["t"]),
                    resources=tuple(_resource_from_dict(r) for r in e["resources"]),
                    classification_labels=dict(e.get("classification_labels", {})),
                    regression_labels=dict(e.get("regression_labels", {})),
                )
                for e in ep["events"]
            ))
            for ep in record.get("episodes", [])
        )
        return Subject(subject_id=record["subject_id"], characteristics=ch,
                       episodes=episodes)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecordError(str(exc)) from exc


def write_cohort(path, subjects: Iterable[Subject]) -> int:
    """Write a JSONL cohort file; returns the number of subjects written."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for subject in subjects:
            fh.write(encode_subject(subject))
            fh.write("\n")
            n += 1
    return n


def read_cohort(path) -> list[Subject]:
    subjects = []
    offset = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            stripped = line.strip()
            if stripped:
                try:
                    subjects.append(decode_subject(stripped))
                except MalformedRecordError as exc:
                    raise MalformedRecordError(str(exc), offset=offset + exc.offset) from exc
            offset += len(line.encode("utf-8"))
    return subjects


def with_labels(subject: Subject,
                labels: dict[int, tuple[dict[str, int], dict[str, float]]]) -> Subject:
    """Return a copy of ``subject`` whose events carry the given label maps.

    ``labels`` is keyed by event timestamp; events without an entry keep
    empty maps. Existing labels on an event are merged (new names win).
    """
    episodes = []
    for ep in subject.episodes:
        events = []
        for ev in ep.events:
            cls, reg = labels.get(ev.timestamp, ({}, {}))
            if cls or reg:
                events.append(replace(
                    ev,
                    classification_labels={**ev.classification_labels, **cls},
                    regression_labels={**ev.regression_labels, **reg},
                ))
            else:
                events.append(ev)
        episodes.append(Episode(events=tuple(events)))
    return replace(subject, episodes=tuple(episodes))
