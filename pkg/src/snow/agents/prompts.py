"""Prompt text for each agent role.

Note text is always wrapped in note markers so the cassette key keeps it
byte-exact while the surrounding prose may be reflowed freely.
"""

from __future__ import annotations

import json
from typing import Mapping, Sequence

from ..cohort import ClinicalNote
from ..llm.client import NOTE_CLOSE, NOTE_OPEN
from ..regions import REGIONS
from .specs import FeatureSpec

DISCOVERY_SYSTEM = """You design structured variables for an outcome prediction model.
Read the clinical notes and propose variables a clinician would extract from them.
Skip anything already available as structured data (listed below).
Mark variables that repeat per anatomical region with the region labels they apply to,
and mark variables that are computed from other variables as aggregated, naming their sources.
Reply with JSON: {"features": [{"name", "description", "instructions", "subgroups",
"aggregated", "aggregation_sources", "note_kinds", "value_kind"}]}."""

EXTRACTION_SYSTEM = """You extract one variable from one clinical note.
Follow the extraction instructions exactly. Use only the canonical subgroup labels given.
Report null when the note does not contain the value.
Reply with JSON: {"values": [{"subgroup": <label or null>, "value": <number or null>}]}."""

VALIDATION_SYSTEM = """You review extracted values against the notes they came from.
Judge accuracy, completeness and consistency across the sample, then give one verdict:
"proceed" (values are good), "remove" (the variable cannot be extracted reliably),
"re_extract" (extraction must be repeated with the revised instructions you supply), or
"post_process" (values need a deterministic transformation you describe).
Reply with JSON: {"verdict", "revised_instructions", "rationale"}; revised_instructions is
required for re_extract and post_process and null otherwise."""

POST_PROCESS_SYSTEM = """You clean extracted values by emitting transformation operations.
Allowed operations: identity; relabel (mapping of subgroup labels); scale (factor, optional
where_gt threshold); length_to_percent (core_length_mm); clip (lo, hi); bin (edges);
set (value). Each operation may target one note_id and one subgroup.
Reply with JSON: {"operations": [...]}."""

CLFG_SYSTEM = """You abstract prostate biopsy reports for a research registry.
Reply with JSON: {"regions": [{"region", "cancer_present", "gleason_primary",
"gleason_secondary", "percent_involved"}]}."""


def quote_note(note: ClinicalNote) -> str:
    return f"[note {note.note_id}, {note.kind}, {note.date.isoformat()}]\n{NOTE_OPEN}{note.text}{NOTE_CLOSE}"


def discovery_user(notes: Sequence[ClinicalNote], outcome: str, structured: Sequence[str]) -> str:
    head = (
        f"Prediction target: {outcome}\n"
        f"Structured fields already available: {', '.join(structured) or 'none'}\n"
        f"Canonical region labels: {', '.join(REGIONS)}\n\nNotes:\n"
    )
    return head + "\n\n".join(quote_note(n) for n in notes)


def extraction_user(note: ClinicalNote, spec: FeatureSpec) -> str:
    subs = ", ".join(spec.subgroups) if spec.subgroups else "none (single value, subgroup null)"
    return (
        f"Variable: {spec.name}\nDescription: {spec.description}\n"
        f"Instructions: {spec.instructions}\nSubgroups: {subs}\n\n{quote_note(note)}"
    )


def _fmt_values(values: Mapping) -> str:
    return json.dumps({("value" if k is None else k): v for k, v in values.items()}, sort_keys=True)


def validation_user(spec: FeatureSpec, sample: Sequence[tuple[ClinicalNote, Mapping]]) -> str:
    parts = [
        f"Variable: {spec.name}\nDescription: {spec.description}\nCurrent instructions: {spec.instructions}\n"
        f"Sample of {len(sample)} notes with extracted values follows."
    ]
    for note, values in sample:
        parts.append(f"{quote_note(note)}\nExtracted: {_fmt_values(values)}")
    return "\n\n".join(parts)


def post_process_user(spec: FeatureSpec, instructions: str, values: Mapping[str, Mapping]) -> str:
    rows = "\n".join(f"{nid}: {_fmt_values(v)}" for nid, v in sorted(values.items()))
    return (
        f"Variable: {spec.name} ({spec.value_kind})\nTransformation requested: {instructions}\n"
        f"Current values by note:\n{rows}"
    )
