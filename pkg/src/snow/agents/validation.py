"""Feature validation agent."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .._seeding import derive_seed
from ..cohort import ClinicalNote
from ..llm.client import ChatRequest, LLMClient
from . import prompts
from .specs import FeatureSpec

VERDICTS = ("proceed", "remove", "re_extract", "post_process")
NEEDS_INSTRUCTIONS = ("re_extract", "post_process")
SAMPLE_SIZE = 10


@dataclass(frozen=True)
class ValidationDecision:
    verdict: str
    revised_instructions: str | None
    rationale: str

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")
        has = bool(self.revised_instructions and self.revised_instructions.strip())
        if has != (self.verdict in NEEDS_INSTRUCTIONS):
            raise ValueError(f"verdict {self.verdict} {'requires' if not has else 'must not carry'} revised instructions")

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "revised_instructions": self.revised_instructions, "rationale": self.rationale}


def draw_sample(note_ids: Sequence[str], size: int, seed: int, feature: str, iteration: int) -> list[str]:
    """Seeded sample of at most ``size`` note ids, returned in id order."""
    ids = sorted(note_ids)
    if len(ids) <= size:
        return ids
    rng = np.random.default_rng(derive_seed(seed, "validation", feature, iteration))
    return [ids[i] for i in sorted(rng.choice(len(ids), size=size, replace=False))]


def validate(
    client: LLMClient,
    spec: FeatureSpec,
    sample: Sequence[tuple[ClinicalNote, Mapping]],
    seed: int = 0,
    iteration: int = 0,
) -> ValidationDecision:
    req = ChatRequest(
        "validation",
        prompts.VALIDATION_SYSTEM,
        prompts.validation_user(spec, sample),
        "validation",
        seed=seed,
        context={
            "feature": spec.name,
            "instructions": spec.instructions,
            "iteration": iteration,
            "sample": [{"note_id": n.note_id, "values": dict(v)} for n, v in sample],
        },
    )
    payload = client.complete_structured(req)
    return ValidationDecision(payload["verdict"], payload.get("revised_instructions"), payload["rationale"])
