"""Validation loop: a bounded state machine around extraction and review.

Each validation round increments the iteration counter, so every path
through the machine reaches ``accepted`` or ``removed`` within
``max_iterations`` rounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from ..cohort import ClinicalNote
from ..llm.client import LLMClient
from .extraction import NoteValues, extract_all, plain
from .postprocess import post_process
from .specs import FeatureSpec
from .validation import SAMPLE_SIZE, ValidationDecision, draw_sample, validate

MAX_ITERATIONS = 3
TERMINAL = ("accepted", "removed")
STATES = ("validating", "re_extract", "post_process") + TERMINAL


@dataclass(frozen=True)
class LoopState:
    feature: str
    iteration: int = 0
    max_iterations: int = MAX_ITERATIONS
    status: str = "validating"
    history: tuple[tuple[str, int], ...] = ()
    budget_exhausted: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not 0 <= self.iteration <= self.max_iterations:
            raise ValueError("iteration outside [0, max_iterations]")
        if self.status not in STATES:
            raise ValueError(f"unknown loop status {self.status!r}")

    @property
    def terminal(self) -> bool:
        return self.status in TERMINAL


def transition(state: LoopState, verdict: str) -> LoopState:
    """Next state after one validation round returned ``verdict``."""
    if state.terminal:
        raise ValueError(f"{state.feature} is already {state.status}")
    it = state.iteration + 1
    history = state.history + ((verdict, it),)
    if verdict == "proceed":
        return replace(state, iteration=it, status="accepted", history=history)
    if verdict == "remove":
        return replace(state, iteration=it, status="removed", history=history)
    if verdict not in ("re_extract", "post_process"):
        raise ValueError(f"unknown verdict {verdict!r}")
    if it >= state.max_iterations:
        return replace(state, iteration=it, status="removed", history=history, budget_exhausted=True)
    return replace(state, iteration=it, status=verdict, history=history)


@dataclass
class LoopResult:
    spec: FeatureSpec
    state: LoopState
    values: NoteValues
    initial_values: NoteValues
    events: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def run_validation_loop(
    client: LLMClient,
    spec: FeatureSpec,
    notes: Sequence[ClinicalNote],
    max_iterations: int = MAX_ITERATIONS,
    sample_size: int = SAMPLE_SIZE,
    seed: int = 0,
    jobs: int = 1,
) -> LoopResult:
    if spec.aggregated:
        raise ValueError(f"{spec.name} is aggregated; it does not go through extraction")
    by_id: Mapping[str, ClinicalNote] = {n.note_id: n for n in notes}
    spec.status = "extracting"
    values, warnings = extract_all(client, notes, spec, 0, seed, jobs)
    initial = values
    state = LoopState(spec.name, max_iterations=max_iterations)
    events: list[dict] = []
    while not state.terminal:
        spec.status = "validating"
        current = plain(values)
        picked = draw_sample(list(current), min(sample_size, len(current)), seed, spec.name, state.iteration)
        decision: ValidationDecision = validate(
            client, spec, [(by_id[nid], current[nid]) for nid in picked], seed, state.iteration
        )
        state = transition(state, decision.verdict)
        events.append({"iteration": state.iteration, "sample": picked, **decision.to_dict()})
        if state.status == "re_extract":
            spec.revise(decision.revised_instructions)
            spec.status = "extracting"
            values, more = extract_all(client, notes, spec, state.iteration, seed, jobs)
            warnings.extend(more)
        elif state.status == "post_process":
            values, ops = post_process(client, spec, values, decision.revised_instructions, by_id, state.iteration, seed)
            events[-1]["operations"] = len(ops)
    spec.status = state.status
    if state.status == "removed":
        spec.removal_reason = "budget_exhausted" if state.budget_exhausted else f"validator: {events[-1]['rationale']}"
    return LoopResult(spec, state, values, initial, events, warnings)
