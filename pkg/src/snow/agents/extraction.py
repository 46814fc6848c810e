"""Feature extraction agent."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from ..cohort import ClinicalNote, FeatureValue, Provenance
from ..llm.client import ChatRequest, LLMClient
from ..regions import UnknownRegionError, canonical_region
from . import prompts
from .specs import FeatureSpec

log = logging.getLogger(__name__)

# note id -> subgroup (None for scalar features) -> value
NoteValues = dict[str, dict[str | None, FeatureValue]]


@dataclass
class ExtractionResult:
    values: list[FeatureValue]
    quarantined: list[tuple[str, object, object]] = field(default_factory=list)  # (note id, subgroup, value)
    warnings: list[str] = field(default_factory=list)


def _number(raw) -> float | None:
    if raw is None:
        return None
    if isinstance(raw, (bool, int, float)):
        return float(raw) if math.isfinite(raw) else None
    text = str(raw).strip().rstrip("%").strip()
    try:
        v = float(text)
    except ValueError:
        raise ValueError(f"non-numeric value {raw!r}") from None
    return v if math.isfinite(v) else None


def extract(client: LLMClient, note: ClinicalNote, spec: FeatureSpec, iteration: int = 0, seed: int = 0) -> ExtractionResult:
    if spec.aggregated:
        raise ValueError(f"{spec.name} is aggregated and is computed, not extracted")
    if spec.status != "extracting":
        raise ValueError(f"{spec.name} is {spec.status}, not extracting")
    req = ChatRequest(
        "extraction",
        prompts.EXTRACTION_SYSTEM,
        prompts.extraction_user(note, spec),
        "extraction",
        seed=seed,
        context={
            "note_id": note.note_id,
            "feature": spec.name,
            "subgroups": list(spec.subgroups),
            "instructions": spec.instructions,
            "revision": spec.revision,
        },
    )
    payload = client.complete_structured(req)
    prov = Provenance(note.note_id, "extraction", iteration)
    out = ExtractionResult([])
    seen: dict[str | None, float | None] = {}
    allowed = set(spec.subgroups)
    for item in payload["values"]:
        raw_sub, raw_val = item["subgroup"], item["value"]
        if spec.subgroups:
            try:
                sub = canonical_region(raw_sub) if raw_sub else None
            except UnknownRegionError:
                sub = None
            if sub not in allowed:
                out.quarantined.append((note.note_id, raw_sub, raw_val))
                out.warnings.append(f"{note.note_id}/{spec.name}: unknown subgroup {raw_sub!r} quarantined")
                continue
        else:
            if raw_sub not in (None, ""):
                out.quarantined.append((note.note_id, raw_sub, raw_val))
                out.warnings.append(f"{note.note_id}/{spec.name}: scalar feature got subgroup {raw_sub!r}")
                continue
            sub = None
        try:
            val = _number(raw_val)
        except ValueError as exc:
            out.quarantined.append((note.note_id, raw_sub, raw_val))
            out.warnings.append(f"{note.note_id}/{spec.name}: {exc}")
            continue
        if sub in seen:
            if seen[sub] != val:
                out.warnings.append(f"{note.note_id}/{spec.name}: repeated subgroup {sub!r}, first value kept")
            continue
        seen[sub] = val
        out.values.append(FeatureValue(note.patient_id, spec.name, sub, val, prov))
    if not spec.subgroups and None not in seen:
        out.values.append(FeatureValue(note.patient_id, spec.name, None, None, prov))
    for w in out.warnings:
        log.warning(w)
    return out


def extract_all(
    client: LLMClient,
    notes: Sequence[ClinicalNote],
    spec: FeatureSpec,
    iteration: int = 0,
    seed: int = 0,
    jobs: int = 1,
) -> tuple[NoteValues, list[str]]:
    """Extract ``spec`` from every note; results come back in note order whatever ``jobs`` is."""
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda n: extract(client, n, spec, iteration, seed), notes))
    else:
        results = [extract(client, n, spec, iteration, seed) for n in notes]
    values: NoteValues = {}
    warnings: list[str] = []
    for note, res in zip(notes, results):
        values[note.note_id] = {fv.subgroup: fv for fv in res.values}
        warnings.extend(res.warnings)
    return values, warnings


def plain(values: NoteValues) -> dict[str, dict[str | None, float | None]]:
    return {nid: {sub: fv.value for sub, fv in per.items()} for nid, per in values.items()}
