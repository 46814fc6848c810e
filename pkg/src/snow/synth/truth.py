"""Ground-truth manifest access and hand-coded reference computations.

The aggregate and derived-feature functions here are written directly
against the manifest layout and share no code with the aggregation language
or the clinician post-processing rules, so they can serve as oracles for both.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

from ..cohort import FeatureMatrix, FeatureValue, Provenance, assemble_matrix
from ..regions import REGIONS, region_side

REGION_FIELDS = {
    "gleason_score_primary": "gleason_primary",
    "gleason_score_secondary": "gleason_secondary",
    "gleason_score_sum": "gleason_sum",
    "tumor_percentage": "tumor_percentage",
    "cancer_presence": "cancer_present",
}
SCALAR_FIELDS = ("total_cores_count", "intraductal_carcinoma_presence", "prostate_volume", "psa_pre_biopsy")
AGGREGATE_ORDER = (
    "max_gleason_score_primary",
    "max_gleason_score_secondary",
    "max_gleason_score_sum",
    "max_tumor_percentage",
    "positive_cores_count",
    "percentage_positive_cores",
    "bilateral_disease",
)
SNOW_COLUMNS = tuple(REGION_FIELDS) + SCALAR_FIELDS + AGGREGATE_ORDER


def region_value(region: dict, feature: str) -> float:
    """Coded value of one sampled region; benign regions code every field as 0."""
    if feature == "cancer_presence":
        return float(region["cancer_present"])
    if not region["cancer_present"]:
        return 0.0
    return float(region[REGION_FIELDS[feature]])


def hand_aggregates(regions: dict[str, dict], total_cores: float | None) -> dict[str, float | None]:
    """Reference aggregate values computed with plain loops."""
    sampled = [r for r in REGIONS if r in regions]
    out: dict[str, float | None] = {}
    for name, feat in (
        ("max_gleason_score_primary", "gleason_score_primary"),
        ("max_gleason_score_secondary", "gleason_score_secondary"),
        ("max_gleason_score_sum", "gleason_score_sum"),
        ("max_tumor_percentage", "tumor_percentage"),
    ):
        best = None
        for r in sampled:
            v = region_value(regions[r], feat)
            if best is None or v > best:
                best = v
        out[name] = best
    positives = None
    for r in sampled:
        positives = (positives or 0.0) + (1.0 if regions[r]["cancer_present"] else 0.0)
    out["positive_cores_count"] = positives
    if positives is None or total_cores is None or total_cores == 0:
        out["percentage_positive_cores"] = None
    else:
        out["percentage_positive_cores"] = 100 * positives / total_cores
    left = [regions[r]["cancer_present"] for r in sampled if region_side(r) == "left"]
    right = [regions[r]["cancer_present"] for r in sampled if region_side(r) == "right"]
    left_any = any(left) if left else None
    right_any = any(right) if right else None
    if left_any is False or right_any is False:
        out["bilateral_disease"] = 0.0
    elif left_any is None or right_any is None:
        out["bilateral_disease"] = None
    else:
        out["bilateral_disease"] = 1.0
    return out


def grade_group_reference(primary: int, secondary: int) -> int | None:
    total = primary + secondary
    if primary == 0 or secondary == 0:
        return None
    if total <= 6:
        return 1
    if total == 7:
        return 2 if primary <= 3 else 3
    if total == 8:
        return 4
    return 5


class Manifest:
    """Read-only view over a generator manifest document."""

    def __init__(self, doc: dict):
        self.doc = doc
        self.patients: dict[str, dict] = doc["patients"]
        self.note_owner: dict[str, str] = {}
        for pid, p in self.patients.items():
            self.note_owner[p["biopsy_note_id"]] = pid
            for nid in p.get("progress_note_ids", []):
                self.note_owner[nid] = pid

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    @property
    def patient_ids(self) -> list[str]:
        return list(self.patients)

    def labels(self, ruleset: str = "main") -> dict[str, int]:
        key = "label" if ruleset == "main" else "label_sensitivity"
        return {pid: p[key] for pid, p in self.patients.items()}

    def core_counts(self) -> dict[str, int]:
        return {p["biopsy_note_id"]: p["systematic_cores"] for p in self.patients.values()}

    def has_feature(self, feature: str) -> bool:
        return feature in REGION_FIELDS or feature in SCALAR_FIELDS or feature in AGGREGATE_ORDER

    def note_truth(self, note_id: str, feature: str) -> dict[str | None, float | None]:
        """True values a perfect extractor would return for ``feature`` from this note."""
        pid = self.note_owner.get(note_id)
        if pid is None:
            raise KeyError(f"note {note_id} is not in the manifest")
        p = self.patients[pid]
        if note_id != p["biopsy_note_id"]:
            return {}
        if feature in REGION_FIELDS:
            return {r: region_value(p["regions"][r], feature) for r in REGIONS if r in p["regions"]}
        if feature in SCALAR_FIELDS:
            return {None: p["scalars"][feature]}
        return {}

    def patient_truth(self, pid: str, feature: str) -> dict[str | None, float | None]:
        p = self.patients[pid]
        if feature in AGGREGATE_ORDER:
            return {None: p["aggregates"][feature]}
        return self.note_truth(p["biopsy_note_id"], feature)

    def feature_values(self, features: Sequence[str] = SNOW_COLUMNS) -> list[FeatureValue]:
        out = []
        for pid, p in self.patients.items():
            for f in features:
                for sub, v in self.patient_truth(pid, f).items():
                    out.append(FeatureValue(pid, f, sub, v, Provenance(p["biopsy_note_id"], "manifest", 0)))
        return out

    def matrix(self, features: Sequence[str] = SNOW_COLUMNS, patients: Iterable[str] | None = None) -> FeatureMatrix:
        ids = list(patients) if patients is not None else self.patient_ids
        return assemble_matrix(self.feature_values(features), ids, columns=features)
