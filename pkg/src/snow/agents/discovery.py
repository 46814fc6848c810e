"""Feature discovery agent."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .._seeding import derive_seed
from ..cohort import ClinicalNote
from ..llm.client import ChatRequest, LLMClient
from ..regions import UnknownRegionError, canonical_region
from . import prompts
from .specs import FeatureSpec, feature_id

DISCOVERY_SAMPLE = 20


class EmptyDiscoveryError(RuntimeError):
    pass


@dataclass
class DiscoveryResult:
    specs: list[FeatureSpec]
    rejected: list[tuple[str, str]] = field(default_factory=list)  # (proposed name, reason)


def _fold(name: str) -> str:
    """Comparison key: case, spaces, hyphens and underscores are ignored."""
    return feature_id(name).replace("_", "")


def dedupe_proposals(proposals: Iterable[dict], structured: Sequence[str]) -> DiscoveryResult:
    """Turn raw proposals into specs, dropping structured-field collisions and duplicates."""
    taken = {_fold(s) for s in structured}
    seen: set[str] = set()
    specs, rejected = [], []
    for raw in proposals:
        name = str(raw.get("name", ""))
        key = _fold(name)
        if not key:
            rejected.append((name, "empty name"))
            continue
        if key in taken:
            rejected.append((name, "available as structured data"))
            continue
        if key in seen:
            rejected.append((name, "duplicate of an earlier proposal"))
            continue
        try:
            subs = tuple(canonical_region(s) for s in raw.get("subgroups") or ())
            spec = FeatureSpec.from_dict({**raw, "subgroups": subs})
        except (UnknownRegionError, ValueError) as exc:
            rejected.append((name, f"invalid proposal: {exc}"))
            continue
        if len(set(subs)) != len(subs):
            rejected.append((name, "repeated subgroup labels"))
            continue
        seen.add(key)
        specs.append(spec)
    return DiscoveryResult(specs, rejected)


def sample_notes(notes: Sequence[ClinicalNote], k: int = DISCOVERY_SAMPLE, seed: int = 0) -> list[ClinicalNote]:
    ordered = sorted(notes, key=lambda n: n.note_id)
    if len(ordered) <= k:
        return ordered
    rng = np.random.default_rng(derive_seed(seed, "discovery"))
    idx = sorted(rng.choice(len(ordered), size=k, replace=False))
    return [ordered[i] for i in idx]


def discover(
    client: LLMClient,
    notes_sample: Sequence[ClinicalNote],
    outcome: str,
    structured: Sequence[str],
    seed: int = 0,
) -> DiscoveryResult:
    if not notes_sample:
        raise ValueError("discovery needs at least one note")
    req = ChatRequest(
        "discovery",
        prompts.DISCOVERY_SYSTEM,
        prompts.discovery_user(notes_sample, outcome, structured),
        "discovery",
        seed=seed,
        context={"note_ids": [n.note_id for n in notes_sample], "structured": list(structured)},
    )
    payload = client.complete_structured(req)
    result = dedupe_proposals(payload["features"], structured)
    if not result.specs:
        raise EmptyDiscoveryError("discovery proposed no usable features")
    return result
