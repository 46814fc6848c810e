"""Ground-truth responder for the mock backend.

Extraction answers come from the manifest, corrupted at rate epsilon. Each
feature has one systematic failure mode, drawn per (seed, feature), and each
note is hit independently. Validation compares the sampled values against
the manifest and names the failure. Post-processing emits the inverse edit.
These are test-harness devices; a live model only sees note text.
"""

from __future__ import annotations

import math
import threading
from typing import Iterable, Mapping

from .._seeding import derive_seed, unit_draw
from ..agents.specs import REFERENCE_PROGRAMS, reference_specs
from ..llm.backends import MockBackend
from ..llm.client import ChatRequest
from ..regions import REGIONS, display_region
from .truth import Manifest

DROPOUT, UNIT_SWAP, REGION_SHIFT, PERCENT_OVERFLOW = "dropout", "unit_swap", "region_shift", "percent_overflow"
FAILURE_MODES = {
    "tumor_percentage": (DROPOUT, UNIT_SWAP, REGION_SHIFT, PERCENT_OVERFLOW),
    "prostate_volume": (DROPOUT, UNIT_SWAP),
    "gleason_score_primary": (DROPOUT, REGION_SHIFT),
    "gleason_score_secondary": (DROPOUT, REGION_SHIFT),
    "gleason_score_sum": (DROPOUT, REGION_SHIFT),
    "cancer_presence": (DROPOUT, REGION_SHIFT),
}
# Phrases a validator puts in revised instructions; a re-extraction that
# receives them no longer makes the matching mistake.
FIX_PHRASES = {
    DROPOUT: "never leave a field blank",
    UNIT_SWAP: "unit conversion",
}
REEXTRACT_GUIDANCE = {
    DROPOUT: "Report a value for every region listed in the report and never leave a field blank; "
             "benign or unmentioned findings are coded 0.",
    UNIT_SWAP: "Apply unit conversion before reporting: express lengths in mm (1 cm = 10 mm) and "
               "percentages on a 0-100 scale.",
}
POSTPROCESS_GUIDANCE = {
    REGION_SHIFT: "Relabel region names: values were attached to the neighbouring region; "
                  "map each value back to its canonical region.",
    PERCENT_OVERFLOW: "Normalize percentages: some values were scaled by 10 from mixed mm/cm notation; "
                      "rescale them by 0.1 so every percentage lies in 0-100.",
}


class ManifestMismatchError(ValueError):
    pass


def failure_mode(seed: int, feature: str) -> str:
    modes = FAILURE_MODES.get(feature, (DROPOUT,))
    return modes[derive_seed(seed, "mode", feature) % len(modes)]


def _close(a: float | None, b: float | None) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-9)


def corrupt(kind: str, truth: dict, draw: float) -> dict:
    """Apply one failure mode to a note's true values; ``draw`` picks the dropped key."""
    out = dict(truth)
    keys = list(truth)
    if not keys:
        return out
    if kind == DROPOUT:
        present = [k for k in keys if truth[k] is not None]
        if present:
            out[present[int(draw * len(present))]] = None
    elif kind == UNIT_SWAP:
        out = {k: (round(v / 10, 6) if v else v) for k, v in truth.items()}
    elif kind == PERCENT_OVERFLOW:
        out = {k: (round(v * 10, 6) if v else v) for k, v in truth.items()}
    elif kind == REGION_SHIFT:
        if len(keys) > 1:
            out = {keys[(i + 1) % len(keys)]: truth[k] for i, k in enumerate(keys)}
    else:
        raise ValueError(f"unknown failure mode {kind!r}")
    return out


def classify(got: Mapping, truth: Mapping) -> set[str]:
    """Failure modes that explain the differences between ``got`` and ``truth``."""
    diffs = [k for k in set(truth) | set(got) if not _close(got.get(k), truth.get(k))]
    if not diffs:
        return set()
    kinds = set()
    if set(got) == set(truth) and sorted(v for v in got.values() if v is not None) == sorted(
        v for v in truth.values() if v is not None
    ) and all(got[k] is not None for k in diffs):
        return {REGION_SHIFT}
    for k in diffs:
        g, t = got.get(k), truth.get(k)
        if g is None:
            kinds.add(DROPOUT)
        elif t is not None and _close(g, t / 10):
            kinds.add(UNIT_SWAP)
        elif t is not None and _close(g, t * 10):
            kinds.add(PERCENT_OVERFLOW)
        else:
            kinds.add("unexplained")
    return kinds


class ManifestResponder:
    def __init__(
        self,
        manifest: Manifest,
        epsilon: float = 0.0,
        seed: int = 0,
        extra_proposals: Iterable[dict] = (),
        bad_programs: Mapping[str, list[str]] | None = None,
        forced_verdict: str | None = None,
        clfg_epsilon: float | None = None,
    ):
        if not 0 <= epsilon < 1:
            raise ValueError("epsilon must lie in [0, 1)")
        self.manifest = manifest
        self.epsilon = epsilon
        self.seed = seed
        self.extra_proposals = list(extra_proposals)
        self.bad_programs = dict(bad_programs or {})
        self.forced_verdict = forced_verdict
        self.clfg_epsilon = epsilon if clfg_epsilon is None else clfg_epsilon
        self.log: list[dict] = []
        self._lock = threading.Lock()

    def _record(self, **entry) -> None:
        with self._lock:
            self.log.append(entry)

    def respond(self, req: ChatRequest, messages: list[dict]) -> dict | str:
        handler = {
            "discovery": self._discovery,
            "extraction": self._extraction,
            "validation": self._validation,
            "post_process": self._post_process,
            "aggregation": self._aggregation,
        }.get(req.role_tag)
        if handler is None and req.role_tag.startswith("clfg"):
            handler = self._clfg
        if handler is None:
            raise ValueError(f"mock has no rule for role {req.role_tag!r}")
        return handler(dict(req.context), messages)

    # -- discovery ---------------------------------------------------------
    def _discovery(self, ctx: dict, messages) -> dict:
        specs = [s.to_dict() for s in reference_specs()]
        return {"features": specs + list(self.extra_proposals)}

    # -- extraction --------------------------------------------------------
    def extracted(self, note_id: str, feature: str, instructions: str, revision: int) -> tuple[dict, str | None]:
        truth = self.manifest.note_truth(note_id, feature)
        if not truth or not self.manifest.has_feature(feature):
            return truth, None
        hit = unit_draw(self.seed, "corrupt", note_id, feature) < self.epsilon
        kind = failure_mode(self.seed, feature)
        if not hit or FIX_PHRASES.get(kind, "\0") in instructions.lower():
            return truth, None
        return corrupt(kind, truth, unit_draw(self.seed, "drop", note_id, feature)), kind

    def _extraction(self, ctx: dict, messages) -> dict:
        note_id, feature = ctx["note_id"], ctx["feature"]
        values, kind = self.extracted(note_id, feature, ctx.get("instructions", ""), ctx.get("revision", 0))
        self._record(role="extraction", note_id=note_id, feature=feature, revision=ctx.get("revision", 0),
                     corrupted=kind is not None, kind=kind)
        return {"values": [{"subgroup": k, "value": v} for k, v in values.items()]}

    # -- validation --------------------------------------------------------
    def _validation(self, ctx: dict, messages) -> dict:
        feature = ctx["feature"]
        if self.forced_verdict is not None:
            v = self.forced_verdict
            return {
                "verdict": v,
                "revised_instructions": (ctx.get("instructions") or "retry") + " Re-read the note."
                if v in ("re_extract", "post_process") else None,
                "rationale": "forced verdict",
            }
        if not self.manifest.has_feature(feature):
            return {"verdict": "remove", "revised_instructions": None,
                    "rationale": "no support for this feature in the sampled notes"}
        kinds: set[str] = set()
        for item in ctx["sample"]:
            truth = self.manifest.note_truth(item["note_id"], feature)
            kinds |= classify(item["values"], truth)
        base = ctx.get("instructions", "")
        if not kinds:
            return {"verdict": "proceed", "revised_instructions": None, "rationale": "sampled values match the notes"}
        fix = sorted(kinds & set(REEXTRACT_GUIDANCE))
        if fix:
            guidance = " ".join(REEXTRACT_GUIDANCE[k] for k in fix)
            return {"verdict": "re_extract", "revised_instructions": f"{base} {guidance}".strip(),
                    "rationale": f"errors of type {', '.join(fix)} in the sample"}
        post = sorted(kinds & set(POSTPROCESS_GUIDANCE))
        if post:
            return {"verdict": "post_process", "revised_instructions": " ".join(POSTPROCESS_GUIDANCE[k] for k in post),
                    "rationale": f"systematic {', '.join(post)} in the sample"}
        return {"verdict": "re_extract", "revised_instructions": f"{base} Re-read each note carefully.".strip(),
                "rationale": "values disagree with the notes"}

    # -- post-processing ---------------------------------------------------
    def _post_process(self, ctx: dict, messages) -> dict:
        feature, text = ctx["feature"], ctx.get("instructions", "").lower()
        ops: list[dict] = []
        for note_id in sorted(ctx["values"]):
            got = ctx["values"][note_id]
            truth = self.manifest.note_truth(note_id, feature) if self.manifest.has_feature(feature) else {}
            kinds = classify(got, truth)
            if REGION_SHIFT in kinds and "relabel" in text:
                keys = [k for k in truth]
                mapping = {keys[(i + 1) % len(keys)]: keys[i] for i in range(len(keys))}
                ops.append({"op": "relabel", "note_id": note_id, "mapping": mapping})
            if PERCENT_OVERFLOW in kinds and ("normaliz" in text or "rescale" in text):
                for k in sorted(got, key=str):
                    if truth.get(k) is not None and got.get(k) is not None and _close(got[k], truth[k] * 10) \
                            and not _close(got[k], truth[k]):
                        ops.append({"op": "scale", "note_id": note_id, "subgroup": k, "factor": 0.1})
        return {"operations": ops or [{"op": "identity"}]}

    # -- aggregation -------------------------------------------------------
    def _aggregation(self, ctx: dict, messages) -> dict:
        feature = ctx["feature"]
        bad = self.bad_programs.get(feature, [])
        attempt = ctx.get("attempt", 0)
        if attempt < len(bad):
            return {"program": bad[attempt]}
        program = REFERENCE_PROGRAMS.get(feature)
        if program is None:
            return {"program": "0 / 0"}
        return {"program": program}

    # -- clinician-guided extraction ---------------------------------------
    def _clfg(self, ctx: dict, messages) -> dict:
        note_id = ctx["note_id"]
        pid = self.manifest.note_owner.get(note_id)
        if pid is None or self.manifest.patients[pid]["biopsy_note_id"] != note_id:
            return {"regions": []}
        regions = self.manifest.patients[pid]["regions"]
        out = []
        for r in REGIONS:
            if r not in regions:
                continue
            reg = regions[r]
            pos = reg["cancer_present"]
            out.append({
                "region": display_region(r),
                "cancer_present": pos,
                "gleason_primary": reg["gleason_primary"] if pos else 0,
                "gleason_secondary": reg["gleason_secondary"] if pos else 0,
                "percent_involved": reg["tumor_percentage"] if pos else 0.0,
            })
        hit = unit_draw(self.seed, "clfg", note_id) < self.clfg_epsilon
        kind = None
        if hit and out:
            kind = (DROPOUT, UNIT_SWAP)[derive_seed(self.seed, "clfg-mode", note_id) % 2]
            if kind == DROPOUT:
                out.pop(int(unit_draw(self.seed, "clfg-drop", note_id) * len(out)))
            else:
                for item in out:
                    item["percent_involved"] = round(item["percent_involved"] / 10, 6)
        self._record(role="clfg", note_id=note_id, corrupted=kind is not None, kind=kind)
        return {"regions": out}


def check_cohort(manifest: Manifest, patients) -> None:
    problems = []
    for p in patients:
        entry = manifest.patients.get(p.patient_id)
        if entry is None:
            problems.append(f"{p.patient_id}: not in manifest")
            continue
        ids = {n.note_id for n in p.notes}
        want = {entry["biopsy_note_id"], *entry.get("progress_note_ids", ())}
        if not want <= ids:
            problems.append(f"{p.patient_id}: notes {sorted(want - ids)} missing from cohort")
        elif p.treatment.kind != entry["treatment"]:
            problems.append(f"{p.patient_id}: treatment {p.treatment.kind} but manifest says {entry['treatment']}")
    if problems:
        raise ManifestMismatchError("manifest does not describe this cohort: " + "; ".join(problems[:5]))


def mock_rules(manifest: Manifest, epsilon: float = 0.0, seed: int = 0, cohort=None, **options) -> MockBackend:
    """Mock backend answering every agent role from ``manifest``."""
    if cohort is not None:
        check_cohort(manifest, cohort)
    return MockBackend(ManifestResponder(manifest, epsilon, seed, **options))
