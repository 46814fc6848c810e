"""Clinician-guided extraction: expert prompt templates plus fixed clinical rules.

Feature definitions live in a JSON file (``data/clfg_features.json`` by
default) so prompts can be edited without touching code. Every definition
sharing a template is answered by one model call per note; the patient-level
values are then derived with the deterministic rules below.
"""

from __future__ import annotations

import json
import logging
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .cohort import ClinicalNote, FeatureMatrix, FeatureValue, PatientRecord, Provenance, assemble_matrix
from .llm.client import NOTE_CLOSE, NOTE_OPEN, ChatRequest, LLMClient, SchemaError
from .regions import REGIONS, SYSTEMATIC_REGIONS, UnknownRegionError, canonical_region
from .agents.prompts import CLFG_SYSTEM

log = logging.getLogger(__name__)

PLACEHOLDERS = ("note", "note_id", "note_date")
POSTRULES = (
    "grade_group",
    "max_gleason",
    "percent_pattern_45",
    "percent_positive_regions",
    "max_percent_involved",
    "none",
)
REGION_FIELDS = ("cancer_present", "gleason_primary", "gleason_secondary", "percent_involved")
DEFAULT_GRADE_GROUPS = {
    "sum_le_6": 1,
    "sum_7_primary_le_3": 2,
    "sum_7_primary_ge_4": 3,
    "sum_8": 4,
    "sum_ge_9": 5,
}
DEFAULT_PATTERN_WEIGHTS = {"both": 1.0, "one": 0.5, "none": 0.0}


class ClfgDefinitionError(ValueError):
    pass


def template_fields(template: str) -> set[str]:
    try:
        return {f for _, f, _, _ in string.Formatter().parse(template) if f is not None}
    except ValueError as exc:
        raise ClfgDefinitionError(f"malformed template: {exc}") from exc


@dataclass(frozen=True)
class ClinicianFeatureDef:
    name: str
    template: str
    schema_id: str = "clfg_extraction"
    postrule: str = "none"
    region_field: str | None = None  # postrule "none": report this field per region

    def __post_init__(self):
        if not self.name.isidentifier():
            raise ClfgDefinitionError(f"feature name {self.name!r} is not an identifier")
        if self.postrule not in POSTRULES:
            raise ClfgDefinitionError(f"{self.name}: unknown postrule {self.postrule!r}")
        unknown = template_fields(self.template) - set(PLACEHOLDERS)
        if unknown:
            raise ClfgDefinitionError(f"{self.name}: template uses undocumented placeholders {sorted(unknown)}")
        if "note" not in template_fields(self.template):
            raise ClfgDefinitionError(f"{self.name}: template never includes the note")
        if self.postrule == "none" and self.region_field not in REGION_FIELDS:
            raise ClfgDefinitionError(f"{self.name}: postrule none needs region_field in {REGION_FIELDS}")

    def render(self, note: ClinicalNote) -> str:
        return self.template.format(
            note=f"{NOTE_OPEN}{note.text}{NOTE_CLOSE}", note_id=note.note_id, note_date=note.date.isoformat()
        )


@dataclass(frozen=True)
class ClfgConfig:
    defs: tuple[ClinicianFeatureDef, ...]
    note_kinds: tuple[str, ...] = ("biopsy_report",)
    grade_groups: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_GRADE_GROUPS))
    pattern_weights: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_PATTERN_WEIGHTS))

    def __post_init__(self):
        names = [d.name for d in self.defs]
        if not names:
            raise ClfgDefinitionError("no feature definitions")
        if len(set(names)) != len(names):
            raise ClfgDefinitionError("duplicate feature names")
        if set(self.grade_groups) != set(DEFAULT_GRADE_GROUPS):
            raise ClfgDefinitionError(f"grade group mapping needs keys {sorted(DEFAULT_GRADE_GROUPS)}")
        if set(self.grade_groups.values()) != {1, 2, 3, 4, 5}:
            raise ClfgDefinitionError("grade group mapping must cover groups 1-5")
        if set(self.pattern_weights) != set(DEFAULT_PATTERN_WEIGHTS):
            raise ClfgDefinitionError(f"pattern weights need keys {sorted(DEFAULT_PATTERN_WEIGHTS)}")
        if any(not 0.0 <= w <= 1.0 for w in self.pattern_weights.values()):
            raise ClfgDefinitionError("pattern weights must lie in [0, 1]")

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.defs]


def parse_defs(doc: Mapping) -> ClfgConfig:
    shared = doc.get("template")
    defs = []
    for item in doc.get("features", []):
        template = item.get("template", shared)
        if template is None:
            raise ClfgDefinitionError(f"{item.get('name')}: no template")
        defs.append(ClinicianFeatureDef(
            item["name"], template, item.get("schema", "clfg_extraction"),
            item.get("postrule", "none"), item.get("region_field"),
        ))
    return ClfgConfig(
        tuple(defs),
        tuple(doc.get("note_kinds", ("biopsy_report",))),
        dict(doc.get("grade_group_mapping", DEFAULT_GRADE_GROUPS)),
        dict(doc.get("pattern_45_weights", DEFAULT_PATTERN_WEIGHTS)),
    )


def load_defs(path: str | Path | None = None) -> ClfgConfig:
    if path is None:
        text = resources.files("snow").joinpath("data/clfg_features.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_defs(json.loads(text))


# -- clinical rules ----------------------------------------------------------

def _pattern(v) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v <= 5:
        raise ValueError(f"Gleason pattern must be an integer in 0..5, got {v!r}")
    return v


def derive_grade_group(primary: int, secondary: int, mapping: Mapping[str, int] = DEFAULT_GRADE_GROUPS) -> int | None:
    """Grade group of a Gleason pattern pair; None when either pattern is 0 (benign)."""
    p, s = _pattern(primary), _pattern(secondary)
    if p == 0 or s == 0:
        return None
    total = p + s
    if total <= 6:
        return mapping["sum_le_6"]
    if total == 7:
        return mapping["sum_7_primary_le_3"] if p <= 3 else mapping["sum_7_primary_ge_4"]
    if total == 8:
        return mapping["sum_8"]
    return mapping["sum_ge_9"]


def derive_max_gleason(cores: Iterable[tuple[int, int]]) -> tuple[int, int] | None:
    """Highest-scoring core by pattern sum, ties broken by the higher primary pattern."""
    best = None
    for p, s in cores:
        p, s = _pattern(p), _pattern(s)
        if p == 0 or s == 0:
            continue
        if best is None or (p + s, p) > (best[0] + best[1], best[0]):
            best = (p, s)
    return best


def derive_percent_pattern_45(
    cores: Iterable[tuple[int, int, float]], weights: Mapping[str, float] = DEFAULT_PATTERN_WEIGHTS
) -> float | None:
    """Mean over non-benign cores of (pattern 4/5 weight) x percent involved."""
    total, n = 0.0, 0
    for p, s, pct in cores:
        p, s = _pattern(p), _pattern(s)
        if pct is not None and not 0.0 <= pct <= 100.0:
            raise ValueError(f"percent involved {pct!r} outside [0, 100]")
        if p == 0 or s == 0 or pct is None:
            continue
        high = (p >= 4) + (s >= 4)
        total += (weights["none"], weights["one"], weights["both"])[high] * pct
        n += 1
    return total / n if n else None


# -- extraction --------------------------------------------------------------

def parse_regions(payload: Mapping, warnings: list[str], note_id: str = "") -> dict[str, dict]:
    """Canonicalize the region list of a response; unknown or repeated labels are dropped with a warning."""
    out: dict[str, dict] = {}
    for item in payload.get("regions", []):
        try:
            region = canonical_region(item["region"])
        except UnknownRegionError as exc:
            warnings.append(f"{note_id}: {exc}")
            continue
        rec = {f: item.get(f) for f in REGION_FIELDS}
        if region in out and out[region] != rec:
            warnings.append(f"{note_id}: region {region} reported twice with different findings; first kept")
            continue
        out[region] = rec
    return out


def _positive(rec: dict) -> bool:
    return rec.get("cancer_present") == 1


def _core(rec: dict) -> tuple[int, int] | None:
    p, s = rec.get("gleason_primary"), rec.get("gleason_secondary")
    if not _positive(rec) or p is None or s is None:
        return None
    return (p, s)


def derive_features(regions: Mapping[str, dict], defn: ClinicianFeatureDef, cfg: ClfgConfig) -> dict[str | None, float | None]:
    """Values of one definition for one note, keyed by subgroup (None for scalar)."""
    positive = {r: rec for r, rec in regions.items() if _positive(rec)}
    cores = [c for c in map(_core, positive.values()) if c is not None]
    rule = defn.postrule
    if rule == "none":
        return {r: (None if regions[r].get(defn.region_field) is None else float(regions[r][defn.region_field]))
                for r in REGIONS if r in regions}
    if not regions:
        return {None: None}
    if rule == "grade_group":
        best = derive_max_gleason(cores)
        return {None: None if best is None else float(derive_grade_group(*best, mapping=cfg.grade_groups))}
    if rule == "max_gleason":
        best = derive_max_gleason(cores)
        return {None: None if best is None else float(sum(best))}
    if rule == "percent_pattern_45":
        trip = [(c[0], c[1], positive[r].get("percent_involved")) for r, c in
                ((r, _core(rec)) for r, rec in positive.items()) if c is not None]
        v = derive_percent_pattern_45(trip, cfg.pattern_weights)
        return {None: v}
    if rule == "percent_positive_regions":
        sys_reported = [r for r in SYSTEMATIC_REGIONS if r in regions]
        if not sys_reported:
            return {None: None}
        return {None: 100.0 * sum(_positive(regions[r]) for r in sys_reported) / len(sys_reported)}
    if rule == "max_percent_involved":
        pcts = [rec["percent_involved"] for rec in positive.values() if rec.get("percent_involved") is not None]
        return {None: max(pcts) if pcts else None}
    raise AssertionError(rule)


def extract_clfg(
    client: LLMClient,
    note: ClinicalNote,
    cfg: ClfgConfig,
    seed: int = 0,
    warnings: list[str] | None = None,
) -> list[FeatureValue]:
    """All clinician-guided features of one note, one model call per distinct template."""
    warnings = [] if warnings is None else warnings
    groups: dict[tuple[str, str], list[ClinicianFeatureDef]] = {}
    for d in cfg.defs:
        groups.setdefault((d.template, d.schema_id), []).append(d)
    out: list[FeatureValue] = []
    prov = Provenance(note.note_id, "clfg", 0)
    for (_, schema_id), defs in groups.items():
        req = ChatRequest(
            "clfg", CLFG_SYSTEM, defs[0].render(note), schema_id, seed=seed,
            context={"note_id": note.note_id, "features": [d.name for d in defs]},
        )
        try:
            payload = client.complete_structured(req)
        except SchemaError as exc:
            raise SchemaError(f"{note.note_id} [{', '.join(d.name for d in defs)}]: {exc}", exc.last_raw) from exc
        regions = parse_regions(payload, warnings, note.note_id)
        for d in defs:
            for sub, v in derive_features(regions, d, cfg).items():
                out.append(FeatureValue(note.patient_id, d.name, sub, None if v is None else round(v, 6), prov))
    return out


def clfg_values(
    patients: Sequence[PatientRecord],
    client: LLMClient,
    cfg: ClfgConfig | None = None,
    seed: int = 0,
    jobs: int = 1,
) -> tuple[list[FeatureValue], list[str]]:
    """Patient-level values; with several eligible notes the latest one with a value wins."""
    cfg = cfg or load_defs()
    notes = [n for p in patients for n in p.pre_treatment_notes() if n.kind in cfg.note_kinds]
    per_note: list[list[str]] = [[] for _ in notes]

    def one(i: int) -> list[FeatureValue]:
        return extract_clfg(client, notes[i], cfg, seed, per_note[i])

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(one, range(len(notes))))
    else:
        results = [one(i) for i in range(len(notes))]
    warnings = [w for ws in per_note for w in ws]
    best: dict[tuple, FeatureValue] = {}
    order = sorted(range(len(notes)), key=lambda i: (notes[i].date, notes[i].note_id))
    for i in order:
        for fv in results[i]:
            if fv.key not in best or fv.value is not None:
                best[fv.key] = fv
    return list(best.values()), warnings


def clfg_matrix(
    patients: Sequence[PatientRecord],
    client: LLMClient,
    cfg: ClfgConfig | None = None,
    seed: int = 0,
    jobs: int = 1,
) -> tuple[FeatureMatrix, list[str]]:
    cfg = cfg or load_defs()
    values, warnings = clfg_values(patients, client, cfg, seed, jobs)
    ids = [p.patient_id for p in patients]
    return assemble_matrix(values, ids, columns=cfg.names), warnings
