"""End-to-end agentic feature generation over a cohort.

Discovery runs once. Every base feature goes through its own validation
loop; aggregated features wait until their sources are settled and are then
computed with vetted aggregation programs.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..aggdsl import evaluate, patient_values
from ..aggdsl.codegen import CodegenResult, generate_program
from ..cohort import (
    BASELINE_FIELDS,
    FeatureMatrix,
    FeatureValue,
    PatientRecord,
    Provenance,
    assemble_matrix,
    dumps_json,
    format_number,
)
from ..llm.client import LLMClient
from .discovery import DISCOVERY_SAMPLE, DiscoveryResult, discover, sample_notes
from .extraction import NoteValues
from .loop import MAX_ITERATIONS, LoopResult, run_validation_loop
from .specs import FeatureSpec
from .validation import SAMPLE_SIZE

log = logging.getLogger(__name__)

DEFAULT_OUTCOME = "biochemical failure within five years after the end of primary prostate cancer treatment"
REPORT_COLUMNS = ("Feature Name", "Specific Subgroups", "Description", "Instructions", "Agg.", "Agg. Source")


@dataclass
class OrchestratorConfig:
    seed: int = 0
    max_iterations: int = MAX_ITERATIONS
    sample_size: int = SAMPLE_SIZE
    discovery_sample: int = DISCOVERY_SAMPLE
    outcome: str = DEFAULT_OUTCOME
    structured_features: tuple[str, ...] = BASELINE_FIELDS
    jobs: int = 1

    def __post_init__(self):
        self.structured_features = tuple(self.structured_features)
        if self.max_iterations < 1 or self.sample_size < 1 or self.discovery_sample < 1 or self.jobs < 1:
            raise ValueError("iteration, sample and job counts must be positive")


@dataclass
class RunResult:
    matrix: FeatureMatrix
    pre_loop_matrix: FeatureMatrix
    specs: list[FeatureSpec]
    values: list[FeatureValue]
    discovery: DiscoveryResult
    loops: dict[str, LoopResult]
    codegen: dict[str, CodegenResult]
    report: dict
    manifest: dict
    timings: dict
    warnings: list[str] = field(default_factory=list)


def merge_note_values(values: NoteValues, notes_by_id: dict, warnings: list[str]) -> list[FeatureValue]:
    """One value per (patient, feature, subgroup): the latest note with a non-missing value wins."""
    best: dict[tuple, FeatureValue] = {}
    order = sorted(values, key=lambda nid: (notes_by_id[nid].date, nid))
    for nid in order:
        for fv in values[nid].values():
            prev = best.get(fv.key)
            if prev is None or prev.value is None:
                best[fv.key] = fv
            elif fv.value is not None:
                if fv.value != prev.value:
                    warnings.append(f"{fv.key}: {prev.value} from {prev.provenance.note_id} replaced by "
                                    f"{fv.value} from {nid}")
                best[fv.key] = fv
    return [best[k] for k in sorted(best, key=lambda k: (k[0], k[1], k[2] or ""))]


def _aggregate_order(aggs: Sequence[FeatureSpec]) -> tuple[list[FeatureSpec], dict[str, str]]:
    """Topological order of aggregates; returns (order, removal reasons for cyclic ones).

    Sources that are not aggregates are ready immediately; whether they were
    accepted is checked later.
    """
    pending = {s.name: s for s in aggs}
    order, failed = [], {}
    while pending:
        progressed = False
        for name, spec in list(pending.items()):
            if not any(src in pending for src in spec.aggregation_sources):
                order.append(spec)
                del pending[name]
                progressed = True
        if not progressed:
            for name in pending:
                failed[name] = "dependency cycle among aggregated features"
            break
    return order, failed


def report_row(spec: FeatureSpec, loop: LoopResult | None = None, codegen: CodegenResult | None = None) -> dict:
    row = {
        "Feature Name": spec.display_name,
        "Specific Subgroups": list(spec.subgroups),
        "Description": spec.description,
        "Instructions": spec.instructions,
        "Agg.": spec.aggregated,
        "Agg. Source": [s.replace("_", " ") for s in spec.aggregation_sources],
        "status": spec.status,
        "revision": spec.revision,
        "instruction_history": list(spec.instruction_history),
        "program": spec.program,
        "removal_reason": spec.removal_reason,
    }
    if loop is not None:
        row["decisions"] = loop.events
        row["budget_exhausted"] = loop.state.budget_exhausted
    if codegen is not None:
        row["codegen_attempts"] = codegen.attempts
    return row


def orchestrate(
    patients: Sequence[PatientRecord],
    client: LLMClient,
    config: OrchestratorConfig | None = None,
    backend_kind: str = "unknown",
) -> RunResult:
    cfg = config or OrchestratorConfig()
    t0 = time.perf_counter()
    warnings: list[str] = []
    notes = [n for p in patients for n in p.pre_treatment_notes()]
    notes_by_id = {n.note_id: n for n in notes}
    patient_ids = [p.patient_id for p in patients]

    disc = discover(client, sample_notes(notes, cfg.discovery_sample, cfg.seed), cfg.outcome,
                    cfg.structured_features, cfg.seed)
    t_disc = time.perf_counter()
    specs = disc.specs
    base = [s for s in specs if not s.aggregated]
    aggs = [s for s in specs if s.aggregated]

    def run(spec: FeatureSpec) -> LoopResult | None:
        targets = [n for n in notes if n.kind in spec.note_kinds]
        if not targets:
            spec.status = "removed"
            spec.removal_reason = "no notes of the requested kinds"
            return None
        # notes are extracted in parallel inside a loop; loops run one after another
        return run_validation_loop(client, spec, targets, cfg.max_iterations, cfg.sample_size, cfg.seed, cfg.jobs)

    results = [run(s) for s in base]
    loops = {s.name: r for s, r in zip(base, results) if r is not None}
    t_loop = time.perf_counter()

    final: dict[str, list[FeatureValue]] = {}
    initial: list[FeatureValue] = []
    for name, res in loops.items():
        warnings.extend(res.warnings)
        initial.extend(merge_note_values(res.initial_values, notes_by_id, []))
        if res.spec.status == "accepted":
            final[name] = merge_note_values(res.values, notes_by_id, warnings)

    # aggregated features, sources first
    by_name = {s.name: s for s in specs}
    codegens: dict[str, CodegenResult] = {}
    order, failed = _aggregate_order(aggs)
    for name, reason in failed.items():
        by_name[name].status, by_name[name].removal_reason = "removed", reason
    for spec in order:
        bad = [src for src in spec.aggregation_sources if by_name.get(src) is None or by_name[src].status != "accepted"]
        if bad:
            spec.status = "removed"
            spec.removal_reason = f"dependency_failure: source(s) {', '.join(bad)} not accepted"
            log.warning("%s removed: %s", spec.name, spec.removal_reason)
            continue
        sources = {src: (by_name[src].subgroups or None) for src in spec.aggregation_sources}
        cg = generate_program(client, spec, sources, cfg.seed)
        codegens[spec.name] = cg
        if not cg.accepted:
            spec.status, spec.removal_reason = "removed", cg.removal_reason
            continue
        spec.program = cg.program.source
        src_values = [fv for src in spec.aggregation_sources for fv in final[src]]
        grouped = patient_values(src_values)
        prov: dict[str, tuple[set, int]] = {}
        for fv in src_values:
            ids, it = prov.get(fv.patient_id, (set(), 0))
            ids.add(fv.provenance.note_id)
            prov[fv.patient_id] = (ids, max(it, fv.provenance.iteration))
        out = []
        for pid in patient_ids:
            value, warns = evaluate(cg.program, grouped.get(pid, {}))
            warnings.extend(f"{pid}/{spec.name}: {w}" for w in warns)
            ids, it = prov.get(pid, (set(), 0))
            out.append(FeatureValue(pid, spec.name, None, value,
                                    Provenance("+".join(sorted(ids)) or "none", "aggregation", it)))
        final[spec.name] = out
        spec.status = "accepted"
    t_agg = time.perf_counter()

    accepted = [s.name for s in specs if s.status == "accepted"]
    values = [fv for name in accepted for fv in final[name]]
    matrix = assemble_matrix(values, patient_ids, columns=accepted)
    pre_matrix = assemble_matrix(initial, patient_ids, columns=[s.name for s in base])
    report = {"columns": list(REPORT_COLUMNS),
              "features": [report_row(s, loops.get(s.name), codegens.get(s.name)) for s in specs]}
    manifest = {
        "seed": cfg.seed,
        "backend": backend_kind,
        "config": {**asdict(cfg), "structured_features": list(cfg.structured_features)},
        "patients": len(patient_ids),
        "notes": len(notes),
        "discovery": {
            "proposed": len(specs) + len(disc.rejected),
            "accepted_specs": [s.name for s in specs],
            "rejected": [list(r) for r in disc.rejected],
        },
        "features": {
            s.name: {
                "status": s.status,
                "aggregated": s.aggregated,
                "revision": s.revision,
                "removal_reason": s.removal_reason,
                "decisions": [list(h) for h in loops[s.name].state.history] if s.name in loops else [],
                "budget_exhausted": loops[s.name].state.budget_exhausted if s.name in loops else False,
            }
            for s in specs
        },
        "counts": {
            "accepted": len(accepted),
            "removed": sum(s.status == "removed" for s in specs),
            "matrix_columns": len(matrix.columns),
            "missing_cells": int(matrix.missing_mask.sum()),
        },
        "llm": {"calls": client.calls, "repairs": client.repairs},
        "warnings": sorted(set(warnings)),
    }
    timings = {
        "discovery_s": round(t_disc - t0, 4),
        "validation_loops_s": round(t_loop - t_disc, 4),
        "aggregation_s": round(t_agg - t_loop, 4),
        "total_s": round(time.perf_counter() - t0, 4),
    }
    return RunResult(matrix, pre_matrix, specs, values, disc, loops, codegens, report, manifest, timings, warnings)


def cell_error_rate(m: FeatureMatrix, reference: FeatureMatrix) -> float:
    """Fraction of reference cells that ``m`` gets wrong; absent columns count as missing."""
    got = m.reindex(reference.patient_ids)
    errors = 0
    for j, col in enumerate(reference.columns):
        truth = reference.values[:, j]
        cur = got.column(col) if col in got.columns else np.full(len(truth), np.nan)
        both = ~np.isnan(truth) & ~np.isnan(cur)
        errors += int(np.sum(np.isnan(truth) != np.isnan(cur)))
        errors += int(np.sum(~np.isclose(truth[both], cur[both], rtol=0, atol=1e-9)))
    return errors / reference.values.size if reference.values.size else 0.0


def values_csv(values: Sequence[FeatureValue]) -> str:
    lines = ["patient_id,feature,subgroup,value,note_id,agent,iteration"]
    for fv in sorted(values, key=lambda v: (v.patient_id, v.feature, v.subgroup or "")):
        lines.append(",".join([fv.patient_id, fv.feature, fv.subgroup or "", format_number(fv.value),
                               fv.provenance.note_id, fv.provenance.agent, str(fv.provenance.iteration)]))
    return "\n".join(lines) + "\n"


def write_run(result: RunResult, out_dir: str | Path, timings: bool = False) -> dict[str, Path]:
    """Write the run outputs. Wall-clock timings vary between runs, so they are only
    written when asked for; everything else is byte-identical for identical inputs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "matrix": out / "features.csv",
        "pre_loop_matrix": out / "features_pre_loop.csv",
        "values": out / "feature_values.csv",
        "report": out / "feature_specs.json",
        "manifest": out / "run_manifest.json",
    }
    result.matrix.to_csv(paths["matrix"])
    result.pre_loop_matrix.to_csv(paths["pre_loop_matrix"])
    paths["values"].write_text(values_csv(result.values), encoding="utf-8")
    paths["report"].write_text(dumps_json(result.report), encoding="utf-8")
    paths["manifest"].write_text(dumps_json(result.manifest), encoding="utf-8")
    if timings:
        paths["timings"] = out / "timings.json"
        paths["timings"].write_text(json.dumps(result.timings, indent=2) + "\n", encoding="utf-8")
    return paths
