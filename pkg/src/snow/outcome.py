"""Biochemical-failure labels from post-treatment PSA series.

Radiation: failure at the first sample within five years whose PSA is at
least 2 ng/mL above the running post-treatment nadir.

Prostatectomy: failure at the first sample within five years with PSA >= 0.4
whose following sample is higher (strictly, by default). The sensitivity
variant lowers the threshold to 0.2 and only asks that the following sample
also be >= 0.2.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import date
from typing import Sequence

from .cohort import FIVE_YEARS, PatientRecord, PsaSample

RADIATION_RISE = 2.0
PROSTATECTOMY_THRESHOLD = 0.4
SENSITIVITY_THRESHOLD = 0.2

RULES = ("radiation_nadir_plus_2", "prostatectomy_0_4_rising", "prostatectomy_0_2_confirmed")


class NoPostTreatmentDataError(ValueError):
    def __init__(self, patient_id: str | None = None):
        self.patient_id = patient_id
        who = f"{patient_id}: " if patient_id else ""
        super().__init__(f"{who}no PSA samples after treatment end")


@dataclass(frozen=True)
class BfLabel:
    patient_id: str
    label: int
    event_date: date | None
    rule_used: str
    warnings: tuple[str, ...] = field(default=(), compare=False)


def post_treatment_series(psa: Sequence[PsaSample], treatment_end: date) -> list[PsaSample]:
    """Samples strictly after treatment end, in date order."""
    return sorted((s for s in psa if s.date > treatment_end), key=lambda s: s.date)


def running_nadirs(psa: Sequence[PsaSample], treatment_end: date) -> list[float]:
    series = post_treatment_series(psa, treatment_end)
    if not series:
        raise NoPostTreatmentDataError()
    out, low = [], float("inf")
    for s in series:
        low = min(low, s.value)
        out.append(low)
    return out


def post_treatment_nadir(psa: Sequence[PsaSample], treatment_end: date) -> float:
    return running_nadirs(psa, treatment_end)[-1]


def _in_window(s: PsaSample, treatment_end: date) -> bool:
    return s.date - treatment_end <= FIVE_YEARS


def label_radiation(psa: Sequence[PsaSample], treatment_end: date, patient_id: str = "") -> BfLabel:
    series = post_treatment_series(psa, treatment_end)
    if not series:
        raise NoPostTreatmentDataError(patient_id or None)
    low = float("inf")
    for s in series:
        if not _in_window(s, treatment_end):
            break
        low = min(low, s.value)
        if s.value >= low + RADIATION_RISE:
            return BfLabel(patient_id, 1, s.date, RULES[0])
    return BfLabel(patient_id, 0, None, RULES[0])


def _label_confirmed(
    psa, treatment_end, patient_id, threshold, rule, confirm, subsequent: str
) -> BfLabel:
    series = post_treatment_series(psa, treatment_end)
    if not series:
        raise NoPostTreatmentDataError(patient_id or None)
    warns = []
    for i, s in enumerate(series):
        if not _in_window(s, treatment_end):
            break
        if s.value < threshold:
            continue
        later = series[i + 1 :] if subsequent == "any" else series[i + 1 : i + 2]
        if not later:
            warns.append(f"indeterminate tail: qualifying sample on {s.date.isoformat()} has no subsequent sample")
            continue
        if any(confirm(s.value, nxt.value) for nxt in later):
            return BfLabel(patient_id, 1, s.date, rule, tuple(warns))
    return BfLabel(patient_id, 0, None, rule, tuple(warns))


def label_prostatectomy(
    psa: Sequence[PsaSample],
    treatment_end: date,
    patient_id: str = "",
    strict: bool = True,
    subsequent: str = "next",
) -> BfLabel:
    """``strict`` requires the following PSA to be strictly higher; ``subsequent``
    is "next" (immediately following sample) or "any" (any later sample)."""
    rising = (lambda a, b: b > a) if strict else (lambda a, b: b >= a)
    return _label_confirmed(psa, treatment_end, patient_id, PROSTATECTOMY_THRESHOLD, RULES[1], rising, subsequent)


def label_prostatectomy_sensitivity(
    psa: Sequence[PsaSample], treatment_end: date, patient_id: str = "", subsequent: str = "next"
) -> BfLabel:
    return _label_confirmed(
        psa, treatment_end, patient_id, SENSITIVITY_THRESHOLD, RULES[2],
        lambda a, b: b >= SENSITIVITY_THRESHOLD, subsequent,
    )


def label_patient(p: PatientRecord, ruleset: str = "main", strict: bool = True) -> BfLabel:
    end = p.treatment.end
    if p.treatment.kind == "radiation":
        return label_radiation(p.psa, end, p.patient_id)
    if ruleset == "main":
        return label_prostatectomy(p.psa, end, p.patient_id, strict=strict)
    if ruleset == "sensitivity":
        return label_prostatectomy_sensitivity(p.psa, end, p.patient_id)
    raise ValueError(f"unknown ruleset {ruleset!r}")


class LabelingError(ValueError):
    def __init__(self, failures: list[tuple[str, Exception]]):
        self.failures = failures
        super().__init__("; ".join(f"{pid}: {exc}" for pid, exc in failures))


def label_cohort(patients: Sequence[PatientRecord], ruleset: str = "main", strict: bool = True) -> list[BfLabel]:
    labels, failures = [], []
    for p in patients:
        try:
            labels.append(label_patient(p, ruleset, strict))
        except NoPostTreatmentDataError as exc:
            failures.append((p.patient_id, exc))
    if failures:
        raise LabelingError(failures)
    return labels


def prevalence(labels: Sequence[BfLabel]) -> dict:
    n = len(labels)
    pos = sum(l.label for l in labels)
    by_rule: dict[str, int] = {}
    for l in labels:
        by_rule[l.rule_used] = by_rule.get(l.rule_used, 0) + 1
    return {"n": n, "positives": pos, "prevalence": pos / n if n else None, "by_rule": dict(sorted(by_rule.items()))}


def labels_csv(labels: Sequence[BfLabel]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["patient_id", "label", "event_date", "rule_used"])
    for l in labels:
        w.writerow([l.patient_id, l.label, l.event_date.isoformat() if l.event_date else "", l.rule_used])
    return buf.getvalue()


def read_labels_csv(path) -> dict[str, int]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["patient_id"]: int(row["label"]) for row in csv.DictReader(fh)}
