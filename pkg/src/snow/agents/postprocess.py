"""Post-processing agent and the executor for its transformation operations.

The agent answers with a list of operations from a closed vocabulary; the
executor applies them deterministically. Nothing the model writes is run as
code.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from typing import Mapping, Sequence

from ..cohort import ClinicalNote, FeatureValue, Provenance
from ..llm.client import ChatRequest, LLMClient
from ..regions import UnknownRegionError, canonical_region
from . import prompts
from .extraction import NoteValues, plain
from .specs import FeatureSpec

OPERATIONS = ("identity", "relabel", "scale", "length_to_percent", "clip", "bin", "set")
DECIMALS = 6


class PostProcessError(ValueError):
    def __init__(self, message: str, keys: Sequence[tuple[str, object]] = ()):
        self.keys = list(keys)
        super().__init__(message + (f": {self.keys[:10]}" if self.keys else ""))


def _targets(op: dict, values: dict[str, dict]) -> list[tuple[str, object]]:
    notes = [op["note_id"]] if "note_id" in op else sorted(values)
    out = []
    for nid in notes:
        if nid not in values:
            raise PostProcessError(f"operation {op['op']} names unknown note", [(nid, None)])
        subs = [op["subgroup"]] if "subgroup" in op else list(values[nid])
        for sub in subs:
            if sub not in values[nid]:
                raise PostProcessError(f"operation {op['op']} names unknown subgroup", [(nid, sub)])
            out.append((nid, sub))
    return out


def _canon(label, spec: FeatureSpec):
    if not spec.subgroups:
        raise PostProcessError(f"relabel on scalar feature {spec.name}")
    try:
        return canonical_region(str(label))
    except UnknownRegionError as exc:
        raise PostProcessError(f"relabel uses unknown region {label!r}") from exc


def _relabel(op: dict, values: dict[str, dict], spec: FeatureSpec) -> None:
    mapping = {_canon(k, spec): _canon(v, spec) for k, v in op.get("mapping", {}).items()}
    notes = [op["note_id"]] if "note_id" in op else sorted(values)
    for nid in notes:
        if nid not in values:
            raise PostProcessError("relabel names unknown note", [(nid, None)])
        cur = values[nid]
        # keys that are not themselves canonical (raw model labels) are mapped too
        moved: dict = {}
        for sub, v in cur.items():
            key = _canon(sub, spec) if sub not in spec.subgroups else sub
            target = mapping.get(key, key)
            if target in moved:
                raise PostProcessError("relabel maps two values onto one subgroup", [(nid, target)])
            moved[target] = v
        if set(moved) - set(spec.subgroups):
            raise PostProcessError("relabel produced labels outside the feature's subgroups",
                                   [(nid, s) for s in sorted(set(moved) - set(spec.subgroups))])
        values[nid] = moved


def apply_operations(values: Mapping[str, Mapping], ops: Sequence[dict], spec: FeatureSpec) -> dict[str, dict]:
    """Apply ``ops`` in order to ``{note_id: {subgroup: value}}`` and check the result."""
    out = {nid: dict(per) for nid, per in values.items()}
    for op in ops:
        kind = op.get("op")
        if kind not in OPERATIONS:
            raise PostProcessError(f"unknown operation {kind!r}")
        if kind == "identity":
            continue
        if kind == "relabel":
            _relabel(op, out, spec)
            continue
        for nid, sub in _targets(op, out):
            v = out[nid][sub]
            if kind == "set":
                out[nid][sub] = op.get("value")
                continue
            if v is None:
                continue
            if kind == "scale":
                if "where_gt" in op and not v > op["where_gt"]:
                    continue
                v = v * op["factor"]
            elif kind == "length_to_percent":
                v = 100.0 * v / op["core_length_mm"]
            elif kind == "clip":
                v = min(max(v, op.get("lo", -math.inf)), op.get("hi", math.inf))
            elif kind == "bin":
                edges = list(op["edges"])
                if edges != sorted(edges):
                    raise PostProcessError("bin edges must be ascending", [(nid, sub)])
                v = float(bisect_right(edges, v))
            out[nid][sub] = v
    for per in out.values():
        for sub, v in per.items():
            if v is not None:
                per[sub] = round(float(v), DECIMALS)
    check_values(out, spec)
    return out


def check_values(values: Mapping[str, Mapping], spec: FeatureSpec) -> None:
    bad = []
    for nid, per in sorted(values.items()):
        for sub, v in per.items():
            if v is None:
                continue
            ok = math.isfinite(v)
            if spec.value_kind == "percentage":
                ok = ok and 0.0 <= v <= 100.0
            elif spec.value_kind == "binary":
                ok = ok and v in (0.0, 1.0)
            elif spec.value_kind == "count":
                ok = ok and v >= 0 and float(v).is_integer()
            if not ok:
                bad.append((nid, sub))
    if bad:
        raise PostProcessError(f"post-processed {spec.name} violates its {spec.value_kind} range", bad)


def post_process(
    client: LLMClient,
    spec: FeatureSpec,
    values: NoteValues,
    instructions: str,
    notes: Mapping[str, ClinicalNote],
    iteration: int,
    seed: int = 0,
) -> tuple[NoteValues, list[dict]]:
    current = plain(values)
    req = ChatRequest(
        "post_process",
        prompts.POST_PROCESS_SYSTEM,
        prompts.post_process_user(spec, instructions, current),
        "post_process",
        seed=seed,
        context={"feature": spec.name, "instructions": instructions, "values": current},
    )
    ops = client.complete_structured(req)["operations"]
    new = apply_operations(current, ops, spec)
    out: NoteValues = {}
    for nid, per in new.items():
        pid = notes[nid].patient_id
        prov = Provenance(nid, "post_process", iteration)
        out[nid] = {sub: FeatureValue(pid, spec.name, sub, v, prov) for sub, v in per.items()}
    return out, ops
