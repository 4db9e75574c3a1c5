import pytest

from msprog import labels, synth


@pytest.fixture(scope="session")
def clinic_cohort():
    cfg = synth.GeneratorConfig(n_subjects=40, style="clinic", seed=314,
                                followup_days=900)
    return synth.generate_cohort(cfg)


@pytest.fixture(scope="session")
def labeled_clinic(clinic_cohort):
    cfg = labels.LabelConfig(
        edss_horizons=(labels.Horizon.months(0, 6), labels.Horizon.months(6, 12)),
        edss_thresholds=(3.0, 5.0),
        progression_features=("NHPT", "T25FW"),
        progression_horizons=(labels.Horizon.months(0, 6),),
        missing_policy="exclude")
    return labels.annotate_cohort(clinic_cohort, cfg)


@pytest.fixture(scope="session")
def phone_cohort():
    cfg = synth.GeneratorConfig(n_subjects=30, style="smartphone", seed=59,
                                followup_days=120, weekly_attrition_hazard=0.02)
    return synth.generate_cohort(cfg)
