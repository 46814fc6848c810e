"""Implementation outputs against values frozen from the reference oracles."""

import json
from datetime import date
from pathlib import Path

import numpy as np
import pytest

from snow.evaluation import auc_roc
from snow.outcome import label_cohort, label_prostatectomy, label_prostatectomy_sensitivity, label_radiation
from snow.rfg import truncated_svd

from freeze_oracles import SVD_SHAPES, auc_case, svd_matrix
from oracles import random_psa_series

FROZEN = json.loads((Path(__file__).parent / "data" / "frozen_oracles.json").read_text())
END = date.fromisoformat(FROZEN["psa_end"])


def _iso(result):
    return None if result.event_date is None else result.event_date.isoformat()


@pytest.mark.parametrize("case", FROZEN["psa"], ids=lambda c: f"psa{c['seed']}")
def test_psa_labels(case):
    psa = random_psa_series(np.random.default_rng(case["seed"]), END)
    assert _iso(label_radiation(psa, END)) == case["radiation"]
    assert _iso(label_prostatectomy(psa, END)) == case["prostatectomy"]
    assert _iso(label_prostatectomy(psa, END, strict=False)) == case["prostatectomy_nonstrict"]
    assert _iso(label_prostatectomy_sensitivity(psa, END)) == case["sensitivity"]


def test_auc_values():
    for case in FROZEN["auc"]:
        s, y = auc_case(case["seed"])
        assert abs(auc_roc(s, y) - case["auc"]) <= 1e-12


def test_svd_errors():
    for case, (n, m, k) in zip(FROZEN["svd"], SVD_SHAPES):
        A = svd_matrix(case["seed"], n, m)
        scores, model = truncated_svd(A, k, seed=0)
        err = np.linalg.norm(A - scores @ model.components)
        assert abs(err - case["error"]) <= 1e-6


def test_cohort_labels_and_aggregates(cohort):
    frozen = FROZEN["cohort_seed0"]
    assert sum(l.label for l in label_cohort(cohort.patients)) == frozen["positives"]
    assert sum(l.label for l in label_cohort(cohort.patients, "sensitivity")) == frozen["positives_sensitivity"]
    for pid, want in frozen["aggregates"].items():
        assert cohort.manifest.patients[pid]["aggregates"] == pytest.approx(want), pid
