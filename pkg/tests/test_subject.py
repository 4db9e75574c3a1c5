"""Subject representation: validation codes, codec round-trips, ordering."""

import dataclasses
import math

import pytest
from hypothesis import given, settings, strategies as st

from msprog.subject import (ClinicalEvent, Episode, FunctionalTest, GenericResource,
                            InvalidSubjectError, MalformedRecordError, Questionnaire,
                            SchemaVersionError, Sex, Subject, SubjectCharacteristics,
                            decode_subject, encode_subject, validate_subject)


def make_subject(**kwargs):
    base = dict(
        subject_id="S1",
        characteristics=SubjectCharacteristics(sex=Sex.FEMALE, age=35.0),
        episodes=(
            Episode((ClinicalEvent(0, (FunctionalTest("NHPT", "dexterity", 21.3, "s"),)),)),
            Episode((ClinicalEvent(7 * 86400, (
                Questionnaire("KFSS", "questionnaire", numeric_response=2.0),
                GenericResource("note", "stable"),)),)),
        ))
    base.update(kwargs)
    return Subject(**base)


def test_valid_subject_has_empty_report():
    assert validate_subject(make_subject()) == []


# One targeted mutation per type invariant, each naming its violation code.
MUTATIONS = [
    ("EMPTY_SUBJECT_ID", lambda s: dataclasses.replace(s, subject_id="")),
    ("AGE_OUT_OF_RANGE", lambda s: dataclasses.replace(
        s, characteristics=SubjectCharacteristics(age=150.0))),
    ("HEIGHT_OUT_OF_RANGE", lambda s: dataclasses.replace(
        s, characteristics=SubjectCharacteristics(height_cm=300.0))),
    ("WEIGHT_OUT_OF_RANGE", lambda s: dataclasses.replace(
        s, characteristics=SubjectCharacteristics(weight_kg=0.0))),
    ("DUPLICATE_EPISODE_TIME", lambda s: dataclasses.replace(
        s, episodes=(s.episodes[0], s.episodes[0]))),
    ("EPISODES_OUT_OF_ORDER", lambda s: dataclasses.replace(
        s, episodes=(s.episodes[1], s.episodes[0]))),
    ("EMPTY_EPISODE", lambda s: dataclasses.replace(
        s, episodes=s.episodes + (Episode(()),))),
    ("EVENTS_OUT_OF_ORDER", lambda s: dataclasses.replace(
        s, episodes=(Episode((ClinicalEvent(100, s.episodes[0].events[0].resources),
                              ClinicalEvent(50, s.episodes[1].events[0].resources))),))),
    ("DUPLICATE_EVENT_TIME", lambda s: dataclasses.replace(
        s, episodes=(Episode((ClinicalEvent(100, s.episodes[0].events[0].resources),
                              ClinicalEvent(100, s.episodes[1].events[0].resources))),))),
    ("NEGATIVE_TIMESTAMP", lambda s: dataclasses.replace(
        s, episodes=(Episode((ClinicalEvent(-5, s.episodes[0].events[0].resources),)),))),
    ("EMPTY_RESOURCES", lambda s: dataclasses.replace(
        s, episodes=(Episode((ClinicalEvent(0, ()),)),))),
    ("NONFINITE_VALUE", lambda s: dataclasses.replace(
        s, episodes=(Episode((ClinicalEvent(0, (
            FunctionalTest("NHPT", "dexterity", math.nan, "s"),)),)),))),
    ("EMPTY_TEST_NAME", lambda s: dataclasses.replace(
        s, episodes=(Episode((ClinicalEvent(0, (
            FunctionalTest("", "dexterity", 1.0, "s"),)),)),))),
    ("EMPTY_QUESTIONNAIRE_RESPONSE", lambda s: dataclasses.replace(
        s, episodes=(Episode((ClinicalEvent(0, (
            Questionnaire("KFSS", "questionnaire"),)),)),))),
    ("EPISODE_OVERLAP", lambda s: dataclasses.replace(
        s, episodes=(Episode((ClinicalEvent(0, s.episodes[0].events[0].resources),
                              ClinicalEvent(10 * 86400, s.episodes[0].events[0].resources))),
                     Episode((ClinicalEvent(3 * 86400, s.episodes[1].events[0].resources),))))),
]


@pytest.mark.parametrize("code,mutate", MUTATIONS, ids=[m[0] for m in MUTATIONS])
def test_each_invariant_maps_to_its_code(code, mutate):
    report = validate_subject(mutate(make_subject()))
    assert code in {v.code for v in report}


def test_violation_carries_path():
    bad = dataclasses.replace(make_subject(), episodes=(
        Episode((ClinicalEvent(0, (FunctionalTest("NHPT", "d", math.inf, "s"),)),)),))
    (violation,) = [v for v in validate_subject(bad) if v.code == "NONFINITE_VALUE"]
    assert violation.path == "episodes[0].events[0].resources[0]"


def test_round_trip_identity():
    s = make_subject()
    assert decode_subject(encode_subject(s)) == s


def test_encode_deterministic():
    assert encode_subject(make_subject()) == encode_subject(make_subject())


def test_optional_fields_omitted_and_round_trip():
    s = make_subject(characteristics=SubjectCharacteristics())
    line = encode_subject(s)
    assert "age" not in line and "height_cm" not in line and "sex" not in line
    assert decode_subject(line) == s


def test_labels_round_trip():
    event = ClinicalEvent(0, (FunctionalTest("EDSS", "clinician", 3.0, "points"),),
                          classification_labels={"edss_gt3@0-6mo": 1},
                          regression_labels={"edss_mean@0-6mo": 3.5})
    s = make_subject(episodes=(Episode((event,)),))
    assert decode_subject(encode_subject(s)) == s


def test_encode_rejects_invalid_subject():
    bad = dataclasses.replace(make_subject(), subject_id="")
    with pytest.raises(InvalidSubjectError) as exc:
        encode_subject(bad)
    assert any(v.code == "EMPTY_SUBJECT_ID" for v in exc.value.report)


def test_truncated_line_is_malformed():
    line = encode_subject(make_subject())
    with pytest.raises(MalformedRecordError):
        decode_subject(line[: len(line) // 2])


def test_unknown_schema_version_rejected():
    line = encode_subject(make_subject()).replace('"v":1', '"v":2')
    with pytest.raises(SchemaVersionError):
        decode_subject(line)


def test_malformed_reports_byte_offset():
    with pytest.raises(MalformedRecordError) as exc:
        decode_subject('{"v":1,"subject_id":')
    assert exc.value.offset > 0


def test_flattened_events_nondecreasing(clinic_cohort):
    for subject in clinic_cohort:
        times = [e.timestamp for e in subject.all_events()]
        assert times == sorted(times)


# -- property: round-trip over generated subjects ---------------------------

resources = st.one_of(
    st.builds(FunctionalTest,
              name=st.sampled_from(["NHPT", "T25FW", "EDSS"]),
              category=st.just("t"),
              value=st.floats(-1e6, 1e6, allow_nan=False),
              unit=st.sampled_from(["", "s"])),
    st.builds(Questionnaire,
              name=st.sampled_from(["KFSS", "BDI"]),
              category=st.just("q"),
              numeric_response=st.floats(0, 100, allow_nan=False)),
    st.builds(GenericResource, key=st.sampled_from(["note", "trial"]),
              payload=st.text(max_size=20)),
)


@st.composite
def subjects(draw):
    n_episodes = draw(st.integers(0, 4))
    t = 0
    episodes = []
    for _ in range(n_episodes):
        t += draw(st.integers(1, 10_000))
        n_events = draw(st.integers(1, 3))
        events = []
        for _ in range(n_events):
            events.append(ClinicalEvent(t, tuple(draw(st.lists(resources, min_size=1, max_size=3)))))
            t += draw(st.integers(1, 500))
        episodes.append(Episode(tuple(events)))
    ch = SubjectCharacteristics(
        sex=draw(st.sampled_from(list(Sex))),
        age=draw(st.one_of(st.none(), st.floats(0, 120, allow_nan=False))),
        has_ms=draw(st.one_of(st.none(), st.booleans())))
    return Subject(subject_id=draw(st.text(min_size=1, max_size=8)),
                   characteristics=ch, episodes=tuple(episodes))


@settings(max_examples=60, deadline=None)
@given(subjects())
def test_round_trip_property(subject):
    if validate_subject(subject):
        return  # only valid subjects are encodable
    line = encode_subject(subject)
    assert decode_subject(line) == subject
    assert encode_subject(decode_subject(line)) == line
