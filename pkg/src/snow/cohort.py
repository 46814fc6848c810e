"""Patient records, cohort file IO, inclusion criteria and feature-matrix assembly."""

from __future__ import annotations

import csv
import fnmatch
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .regions import REGION_INDEX, SYSTEMATIC_REGIONS

# "> 5 years" is a fixed day count so leap years never move a boundary.
FIVE_YEARS = timedelta(days=1826)

TREATMENT_KINDS = ("radiation", "prostatectomy")
NOTE_KINDS = ("biopsy_report", "progress_note")

BASELINE_FIELDS = ("age", "charlson_index", "max_pre_psa", "race", "ethnicity", "language", "stage")
SENSITIVE_FIELDS = ("race", "ethnicity", "language")

# Graded categories are encoded as ordinal integers; everything else one-hot.
ORDINAL_SCALES: dict[str, tuple[str, ...]] = {
    "stage": ("t1", "t2", "t3"),
}


class CohortError(ValueError):
    """Raised for malformed cohort documents; ``violations`` lists every problem found."""

    def __init__(self, violations: Sequence[tuple[str, str, str]]):
        self.violations = list(violations)
        lines = [f"{pid}: {fld}: {msg}" for pid, fld, msg in self.violations]
        super().__init__("invalid cohort:\n  " + "\n  ".join(lines))


class DuplicatePatientError(CohortError):
    pass


class NotEvaluableError(ValueError):
    pass


class ConflictingValueError(ValueError):
    pass


@dataclass(frozen=True)
class PsaSample:
    date: date
    value: float


@dataclass(frozen=True)
class Treatment:
    kind: str
    start: date
    end: date | None


@dataclass(frozen=True)
class ClinicalNote:
    note_id: str
    patient_id: str
    date: date
    kind: str
    text: str


@dataclass
class PatientRecord:
    patient_id: str
    treatment: Treatment
    treatments: list[Treatment] = field(default_factory=list)
    structured: dict = field(default_factory=dict)
    psa: list[PsaSample] = field(default_factory=list)
    notes: list[ClinicalNote] = field(default_factory=list)

    @property
    def treatment_kind(self) -> str:
        return self.treatment.kind

    @property
    def treatment_end(self) -> date | None:
        return self.treatment.end

    def pre_treatment_notes(self) -> list[ClinicalNote]:
        return [n for n in self.notes if n.date <= self.treatment.start]


@dataclass(frozen=True)
class Provenance:
    note_id: str
    agent: str
    iteration: int = 0


@dataclass(frozen=True)
class FeatureValue:
    """One extracted value. ``value`` is a float, a category string, or None for missing."""

    patient_id: str
    feature: str
    subgroup: str | None
    value: float | str | None
    provenance: Provenance

    @property
    def key(self) -> tuple[str, str, str | None]:
        return (self.patient_id, self.feature, self.subgroup)

    @property
    def is_missing(self) -> bool:
        return self.value is None


def qualified_name(feature: str, subgroup: str | None) -> str:
    return feature if subgroup is None else f"{feature}.{subgroup}"


def base_feature(column: str) -> str:
    return column.split("=", 1)[0].split(".", 1)[0]


# ---------------------------------------------------------------------------
# Cohort file IO


def _parse_date(raw, pid: str, fld: str, out: list) -> date | None:
    if raw is None:
        out.append((pid, fld, "missing date"))
        return None
    try:
        return date.fromisoformat(str(raw))
    except ValueError:
        out.append((pid, fld, f"not an ISO-8601 date: {raw!r}"))
        return None


def _parse_treatment(raw, pid: str, fld: str, out: list) -> Treatment | None:
    if not isinstance(raw, Mapping):
        out.append((pid, fld, "expected an object"))
        return None
    kind = raw.get("kind")
    if kind not in TREATMENT_KINDS:
        out.append((pid, f"{fld}.kind", f"unknown treatment kind {kind!r}"))
    start = _parse_date(raw.get("start"), pid, f"{fld}.start", out)
    end = _parse_date(raw.get("end"), pid, f"{fld}.end", out)
    if start and end and end < start:
        out.append((pid, f"{fld}.end", "treatment ends before it starts"))
    if kind not in TREATMENT_KINDS or start is None or end is None:
        return None
    return Treatment(kind, start, end)


def parse_cohort(doc: Mapping) -> list[PatientRecord]:
    """Build records from an already-decoded cohort document, enforcing all invariants."""
    if not isinstance(doc, Mapping) or not isinstance(doc.get("patients"), list):
        raise CohortError([("<cohort>", "patients", "expected {'patients': [...]}")])
    violations: list[tuple[str, str, str]] = []
    records: list[PatientRecord] = []
    seen: dict[str, int] = {}
    duplicates = []
    for idx, raw in enumerate(doc["patients"]):
        pid = str(raw.get("id", f"<index {idx}>")) if isinstance(raw, Mapping) else f"<index {idx}>"
        if not isinstance(raw, Mapping) or "id" not in raw:
            violations.append((pid, "id", "missing patient id"))
            continue
        if pid in seen:
            duplicates.append((pid, "id", f"duplicate patient id (records {seen[pid]} and {idx})"))
            continue
        seen[pid] = idx
        before = len(violations)
        treatment = _parse_treatment(raw.get("treatment"), pid, "treatment", violations)
        others = []
        for j, t in enumerate(raw.get("treatments", []) or []):
            parsed = _parse_treatment(t, pid, f"treatments[{j}]", violations)
            if parsed:
                others.append(parsed)
        structured = raw.get("structured", {}) or {}
        if not isinstance(structured, Mapping):
            violations.append((pid, "structured", "expected an object"))
            structured = {}
        psa = []
        for j, s in enumerate(raw.get("psa", []) or []):
            d = _parse_date(s.get("date") if isinstance(s, Mapping) else None, pid, f"psa[{j}].date", violations)
            v = s.get("value") if isinstance(s, Mapping) else None
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v) or v < 0:
                violations.append((pid, f"psa[{j}].value", f"PSA must be a non-negative number, got {v!r}"))
                continue
            if d is not None:
                psa.append(PsaSample(d, float(v)))
        psa.sort(key=lambda s: s.date)
        for a, b in zip(psa, psa[1:]):
            if a.date == b.date:
                violations.append((pid, "psa", f"two samples on {a.date.isoformat()}"))
        notes = []
        for j, n in enumerate(raw.get("notes", []) or []):
            if not isinstance(n, Mapping):
                violations.append((pid, f"notes[{j}]", "expected an object"))
                continue
            d = _parse_date(n.get("date"), pid, f"notes[{j}].date", violations)
            kind = n.get("kind")
            text = n.get("text")
            if kind not in NOTE_KINDS:
                violations.append((pid, f"notes[{j}].kind", f"unknown note kind {kind!r}"))
            if not isinstance(text, str) or not text.strip():
                violations.append((pid, f"notes[{j}].text", "note text is empty"))
            if "id" not in n:
                violations.append((pid, f"notes[{j}].id", "missing note id"))
            if d is not None and kind in NOTE_KINDS and isinstance(text, str) and text.strip() and "id" in n:
                notes.append(ClinicalNote(str(n["id"]), pid, d, kind, text))
        if len(violations) == before and treatment is not None:
            records.append(PatientRecord(pid, treatment, others, dict(structured), psa, notes))
    note_ids: dict[str, str] = {}
    for rec in records:
        for n in rec.notes:
            if n.note_id in note_ids:
                violations.append((rec.patient_id, "notes", f"note id {n.note_id} already used by {note_ids[n.note_id]}"))
            note_ids[n.note_id] = rec.patient_id
    if duplicates:
        raise DuplicatePatientError(duplicates + violations)
    if violations:
        raise CohortError(violations)
    return records


def load_cohort(path: str | Path) -> list[PatientRecord]:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CohortError([("<cohort>", "<file>", f"not valid JSON: {exc}")]) from exc
    return parse_cohort(doc)


def _treatment_doc(t: Treatment) -> dict:
    return {"kind": t.kind, "start": t.start.isoformat(), "end": t.end.isoformat() if t.end else None}


def cohort_document(patients: Iterable[PatientRecord]) -> dict:
    return {
        "patients": [
            {
                "id": p.patient_id,
                "treatment": _treatment_doc(p.treatment),
                "treatments": [_treatment_doc(t) for t in p.treatments],
                "structured": dict(p.structured),
                "psa": [{"date": s.date.isoformat(), "value": s.value} for s in p.psa],
                "notes": [
                    {"id": n.note_id, "date": n.date.isoformat(), "kind": n.kind, "text": n.text}
                    for n in p.notes
                ],
            }
            for p in patients
        ]
    }


def dumps_json(doc) -> str:
    """Canonical JSON text used for every file this package writes."""
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def save_cohort(patients: Iterable[PatientRecord], path: str | Path) -> None:
    Path(path).write_text(dumps_json(cohort_document(patients)), encoding="utf-8")


# ---------------------------------------------------------------------------
# Inclusion criteria


@dataclass(frozen=True)
class Eligibility:
    patient_id: str
    eligible: bool
    reasons: tuple[str, ...] = ()


def check_inclusion(
    p: PatientRecord,
    biopsy_core_min: int = 12,
    core_counts: Mapping[str, int] | None = None,
) -> Eligibility:
    """Apply the three cohort inclusion criteria.

    ``core_counts`` maps biopsy note ids to the number of systematic regions
    recorded in them (from the generator manifest or extraction output);
    notes without an entry count as zero.
    """
    if p.treatment.end is None:
        raise NotEvaluableError(f"{p.patient_id}: treatment end date missing")
    end = p.treatment.end
    reasons = []
    if not any(s.date - end > FIVE_YEARS for s in p.psa):
        reasons.append("follow_up")
    counts = core_counts or {}
    biopsies = [n for n in p.notes if n.kind == "biopsy_report" and n.date <= p.treatment.start]
    if not any(counts.get(n.note_id, 0) >= biopsy_core_min for n in biopsies):
        reasons.append("biopsy_cores")
    # Window measured from the end of the first treatment.
    later = list(p.treatments)
    if p.treatment in later:
        later.remove(p.treatment)
    for t in later:
        if t.start >= p.treatment.start and t.start - end <= FIVE_YEARS:
            reasons.append("subsequent_treatment")
            break
    return Eligibility(p.patient_id, not reasons, tuple(reasons))


def systematic_core_count(regions: Iterable[str]) -> int:
    return len(set(regions) & set(SYSTEMATIC_REGIONS))


# ---------------------------------------------------------------------------
# Feature matrix


@dataclass(frozen=True)
class FeatureMatrix:
    patient_ids: tuple[str, ...]
    columns: tuple[str, ...]
    values: np.ndarray  # float64, NaN marks missing

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True).reshape(len(self.patient_ids), len(self.columns))
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("duplicate column names")
        if len(set(self.patient_ids)) != len(self.patient_ids):
            raise ValueError("duplicate patient ids")

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def select(self, columns: Sequence[str]) -> "FeatureMatrix":
        idx = [self.columns.index(c) for c in columns]
        return FeatureMatrix(self.patient_ids, tuple(columns), self.values[:, idx])

    def reindex(self, patient_ids: Sequence[str]) -> "FeatureMatrix":
        """Rows in the given order; patients absent here become all-missing rows."""
        pos = {p: i for i, p in enumerate(self.patient_ids)}
        out = np.full((len(patient_ids), len(self.columns)), np.nan)
        for i, pid in enumerate(patient_ids):
            if pid in pos:
                out[i] = self.values[pos[pid]]
        return FeatureMatrix(tuple(patient_ids), self.columns, out)

    def hstack(self, other: "FeatureMatrix") -> "FeatureMatrix":
        other = other.reindex(self.patient_ids)
        return FeatureMatrix(self.patient_ids, self.columns + other.columns, np.hstack([self.values, other.values]))

    def equals(self, other: "FeatureMatrix") -> bool:
        return (
            self.patient_ids == other.patient_ids
            and self.columns == other.columns
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("patient_id",) + self.columns)
        for pid, row in zip(self.patient_ids, self.values):
            w.writerow([pid] + [format_number(v) for v in row])
        return buf.getvalue()

    def to_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="utf-8")

    @classmethod
    def from_csv(cls, path: str | Path) -> "FeatureMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][0] != "patient_id":
            raise ValueError(f"{path}: first column must be patient_id")
        header = tuple(rows[0][1:])
        ids, vals = [], []
        for r in rows[1:]:
            ids.append(r[0])
            vals.append([float(x) if x != "" else np.nan for x in r[1:]])
        return cls(tuple(ids), header, np.array(vals, dtype=float).reshape(len(ids), len(header)))


def format_number(v: float) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _subgroup_sort_key(subgroup: str | None):
    if subgroup is None:
        return (0, 0, "")
    if subgroup in REGION_INDEX:
        return (1, REGION_INDEX[subgroup], subgroup)
    return (2, 0, subgroup)


def assemble_matrix(
    values: Iterable[FeatureValue],
    patients: Sequence[str],
    columns: Sequence[str] | None = None,
    ordinal: Mapping[str, Sequence[str]] = ORDINAL_SCALES,
) -> FeatureMatrix:
    """Pivot feature values into a patient x column matrix.

    ``columns`` gives the base-feature order; features not listed follow in
    lexicographic order. Within a feature, scalar columns precede region
    columns in canonical region order. String values become one-hot columns
    ``feature=category`` (lexicographic) unless the feature has an ordinal scale.
    """
    merged: dict[tuple, FeatureValue] = {}
    for fv in sorted(values, key=lambda v: (v.key[0], v.key[1], v.key[2] or "", repr(v.value), repr(v.provenance))):
        prev = merged.get(fv.key)
        if prev is None:
            merged[fv.key] = fv
        elif prev.value != fv.value:
            raise ConflictingValueError(
                f"conflicting values for {fv.key}: {prev.value!r} ({prev.provenance}) "
                f"vs {fv.value!r} ({fv.provenance})"
            )
    patient_pos = {p: i for i, p in enumerate(patients)}
    if len(patient_pos) != len(patients):
        raise ValueError("duplicate patient ids")

    # column layout: (feature, subgroup) -> categories seen (None for numeric)
    slots: dict[tuple[str, str | None], set | None] = {}
    for (pid, feat, sub), fv in merged.items():
        if pid not in patient_pos:
            continue
        slot = slots.setdefault((feat, sub), None)
        if isinstance(fv.value, str) and feat not in ordinal:
            slots[(feat, sub)] = (slot or set()) | {fv.value}

    order = {f: i for i, f in enumerate(columns or ())}
    keys = sorted(slots, key=lambda k: (order.get(k[0], len(order)), k[0] if k[0] not in order else "", _subgroup_sort_key(k[1])))
    col_names: list[str] = []
    col_of: dict[tuple, int | dict] = {}
    for k in keys:
        cats = slots[k]
        name = qualified_name(*k)
        if cats is None:
            col_of[k] = len(col_names)
            col_names.append(name)
        else:
            col_of[k] = {}
            for c in sorted(cats):
                col_of[k][c] = len(col_names)
                col_names.append(f"{name}={c}")

    out = np.full((len(patients), len(col_names)), np.nan)
    for (pid, feat, sub), fv in merged.items():
        if pid not in patient_pos or fv.value is None:
            continue
        row = patient_pos[pid]
        target = col_of[(feat, sub)]
        if isinstance(target, dict):
            for c, j in target.items():
                out[row, j] = 1.0 if fv.value == c else 0.0
        elif isinstance(fv.value, str):
            scale = list(ordinal[feat])
            if fv.value not in scale:
                raise ValueError(f"{pid}: {feat} value {fv.value!r} not on ordinal scale {scale}")
            out[row, target] = float(scale.index(fv.value) + 1)
        else:
            out[row, target] = float(fv.value)
    return FeatureMatrix(tuple(patients), tuple(col_names), out)


def exclude_columns(m: FeatureMatrix, names: Sequence[str]) -> FeatureMatrix:
    """Drop columns whose full name or base feature name matches any glob pattern."""
    keep = list(m.columns)
    for pat in names:
        hits = [c for c in keep if fnmatch.fnmatchcase(c, pat) or fnmatch.fnmatchcase(base_feature(c), pat)]
        if not hits:
            warnings.warn(f"exclusion pattern {pat!r} matched no columns", UserWarning, stacklevel=2)
        keep = [c for c in keep if c not in hits]
    if not keep and m.columns:
        warnings.warn("all columns excluded", UserWarning, stacklevel=2)
    return m.select(keep)


# ---------------------------------------------------------------------------
# Baseline features and cohort summaries


def baseline_values(patients: Iterable[PatientRecord], fields: Sequence[str] = BASELINE_FIELDS) -> list[FeatureValue]:
    out = []
    for p in patients:
        for f in fields:
            v = p.structured.get(f)
            if isinstance(v, bool):
                v = float(v)
            elif isinstance(v, (int, float)):
                v = float(v)
            out.append(FeatureValue(p.patient_id, f, None, v, Provenance("structured", "baseline", 0)))
    return out


def baseline_matrix(patients: Sequence[PatientRecord], fields: Sequence[str] = BASELINE_FIELDS) -> FeatureMatrix:
    return assemble_matrix(baseline_values(patients, fields), [p.patient_id for p in patients], columns=fields)


def summarize(
    patients: Sequence[PatientRecord],
    continuous: Sequence[str] = ("age", "charlson_index", "max_pre_psa"),
    categorical: Sequence[str] = ("race", "stage", "grade_group"),
) -> dict:
    """Cohort summary laid out as a patient-characteristics table: mean, SD, median for
    continuous fields and count / percent for categorical ones."""
    out: dict = {"n": len(patients), "continuous": {}, "categorical": {}}
    for f in continuous:
        xs = np.array([float(p.structured[f]) for p in patients if isinstance(p.structured.get(f), (int, float))])
        out["continuous"][f] = {
            "count": int(xs.size),
            "mean": float(xs.mean()) if xs.size else None,
            "sd": float(xs.std(ddof=1)) if xs.size > 1 else None,
            "median": float(np.median(xs)) if xs.size else None,
        }
    for f in categorical:
        counts: dict[str, int] = {}
        for p in patients:
            v = p.structured.get(f)
            if v is not None:
                counts[str(v)] = counts.get(str(v), 0) + 1
        out["categorical"][f] = {
            k: {"count": c, "percent": 100.0 * c / len(patients)} for k, c in sorted(counts.items())
        }
    return out
