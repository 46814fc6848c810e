import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snow.agents import OrchestratorConfig, orchestrate
from snow.llm import LLMClient
from snow.outcome import label_cohort
from snow.regions import REGIONS, canonical_region
from snow.synth import (
    AGGREGATE_ORDER, OBSTACLES, ConfigError, GeneratorConfig, ManifestMismatchError, generate, hand_aggregates,
    mock_rules, region_label,
)
from snow.synth.mock import DROPOUT, PERCENT_OVERFLOW, REGION_SHIFT, UNIT_SWAP, classify, corrupt

from oracles import region_aggregates

LENGTH_PHRASE = re.compile(r"tumor length (\d+(?:\.\d+)?) mm of a (\d+(?:\.\d+)?) mm core")


def test_same_seed_same_bytes():
    a = generate(GeneratorConfig(n_patients=20, seed=7))
    b = generate(GeneratorConfig(n_patients=20, seed=7))
    assert a.cohort_text() == b.cohort_text()
    assert a.manifest_text() == b.manifest_text()
    assert a.cfg_features == b.cfg_features
    assert generate(GeneratorConfig(n_patients=20, seed=8)).cohort_text() != a.cohort_text()


def test_infeasible_prevalence():
    with pytest.raises(ConfigError) as ei:
        GeneratorConfig(n_patients=10, bf_prevalence=0.01)
    assert "achievable range" in str(ei.value)


def test_unknown_obstacle():
    with pytest.raises(ConfigError):
        GeneratorConfig(obstacles={"typos": True})


def test_length_phrases_need_division(cohort):
    hits = [m for p in cohort.patients for n in p.notes for m in LENGTH_PHRASE.finditer(n.text)]
    assert hits
    for m in hits:
        assert 0 < float(m.group(1)) <= float(m.group(2))


def test_units_obstacle_off():
    sc = generate(GeneratorConfig(n_patients=40, seed=1, obstacles={"unit_mm_cm_mixing": False}))
    text = "\n".join(n.text for p in sc.patients for n in p.notes)
    assert not LENGTH_PHRASE.search(text) and " cm core" not in text


def test_all_obstacles_off_is_plain():
    sc = generate(GeneratorConfig(n_patients=20, seed=1, obstacles={k: False for k in OBSTACLES}))
    bx = [n.text for p in sc.patients for n in p.notes if n.kind == "biopsy_report"]
    assert all("NEGATIVE FOR MALIGNANCY" not in t for t in bx)


def test_labels_round_trip(cohort):
    labels = label_cohort(cohort.patients)
    assert {l.patient_id: l.label for l in labels} == cohort.manifest.labels()
    assert sum(l.label for l in labels) == 11


def test_prevalence_exact_for_other_sizes():
    sc = generate(GeneratorConfig(n_patients=60, seed=2, bf_prevalence=0.2))
    assert sum(l.label for l in label_cohort(sc.patients)) == 12


def test_hand_aggregates_match_oracle(cohort):
    for pid, e in cohort.manifest.patients.items():
        want = region_aggregates(e["regions"], e["scalars"]["total_cores_count"])
        got = hand_aggregates(e["regions"], e["scalars"]["total_cores_count"])
        assert got == pytest.approx(want), pid
        assert {k: e["aggregates"][k] for k in AGGREGATE_ORDER} == pytest.approx(want)


@pytest.mark.parametrize("region", REGIONS)
@pytest.mark.parametrize("alias", range(5))
def test_region_aliases_canonicalize(region, alias):
    assert canonical_region(region_label(region, alias)) == region


def test_mismatched_manifest(cohort, small_cohort):
    with pytest.raises(ManifestMismatchError):
        mock_rules(cohort.manifest, cohort=small_cohort.patients)


def test_clean_mock_always_proceeds(small_cohort):
    res = orchestrate(small_cohort.patients, LLMClient(mock_rules(small_cohort.manifest)), OrchestratorConfig())
    for loop in res.loops.values():
        assert [e["verdict"] for e in loop.events] == ["proceed"]


truth_maps = st.dictionaries(st.sampled_from(REGIONS[:8]), st.sampled_from([0.0, 5.0, 20.0, 35.0, 60.0]),
                             min_size=2)


@settings(max_examples=200, deadline=None)
@given(truth_maps, st.floats(0, 0.999))
def test_corruptions_are_classified(truth, draw):
    for kind in (DROPOUT, UNIT_SWAP, PERCENT_OVERFLOW, REGION_SHIFT):
        got = corrupt(kind, truth, draw)
        kinds = classify(got, truth)
        if got == truth:
            assert kinds == set()
        elif kind == REGION_SHIFT:
            assert kinds == {REGION_SHIFT} or kinds <= {DROPOUT, UNIT_SWAP, PERCENT_OVERFLOW, "unexplained"}
        else:
            assert kinds == {kind}


def test_positives_have_higher_signal(cohort):
    ps = cohort.manifest.patients
    pos = [e["signal_logit"] for e in ps.values() if e["label"] == 1]
    neg = [e["signal_logit"] for e in ps.values() if e["label"] == 0]
    assert np.mean(pos) > np.mean(neg) + 1.0
