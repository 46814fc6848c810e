"""Command line entry point: ``snow synth | label | run | eval``.

Settings come from an optional JSON config (``--config``) with flags taking
precedence. Exit codes: 0 success, 1 runtime failure, 2 configuration or
usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from . import __version__
from .agents.orchestrator import OrchestratorConfig, orchestrate, write_run
from .clfg import ClfgDefinitionError, clfg_matrix, load_defs
from .cohort import CohortError, FeatureMatrix, baseline_matrix, check_inclusion, dumps_json, load_cohort
from .evaluation import CvConfig, ModelConfig, repeat_seeds, write_reports
from .featuresets import FEATURE_SETS, FeatureSetError, FeatureSources, parse_feature_set
from .llm.backends import Cassette, LiveBackend, ReplayBackend
from .llm.client import LLMClient, LLMError
from .outcome import LabelingError, label_cohort, labels_csv, prevalence, read_labels_csv
from .rfg import patient_document
from .synth import ConfigError as SynthConfigError
from .synth import GeneratorConfig, Manifest, generate, mock_rules

log = logging.getLogger("snow")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
BACKENDS = ("mock", "replay", "live")
PIPELINES = ("snow", "clfg")

_NUM = {"type": "number"}
_INT = {"type": "integer"}
_STR = {"type": "string"}
_PATH = {"type": ["string", "null"]}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "cohort": _PATH,
        "manifest": _PATH,
        "labels": _PATH,
        "out": _PATH,
        "seed": _INT,
        "jobs": {"type": "integer", "minimum": 1},
        "ruleset": {"enum": ["main", "sensitivity"]},
        "synth": {"type": "object"},
        "backend": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": list(BACKENDS)},
                "epsilon": {"type": "number", "minimum": 0, "maximum": 1},
                "cassette": _PATH,
                "base_url": _STR,
                "model": _STR,
                "requests_per_minute": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "agents": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "pipeline": {"enum": list(PIPELINES)},
                "max_iterations": {"type": "integer", "minimum": 1},
                "sample_size": {"type": "integer", "minimum": 1},
                "discovery_sample": {"type": "integer", "minimum": 1},
                "clfg_defs": _PATH,
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "feature_sets": {"type": "array", "items": _STR, "minItems": 1},
                "seeds": {"oneOf": [{"type": "array", "items": _INT, "minItems": 1}, _STR]},
                "outer_folds": {"type": "integer", "minimum": 2},
                "inner_folds": {"type": "integer", "minimum": 2},
                "penalties": {"type": "array", "items": {"enum": ["l1", "l2"]}, "minItems": 1},
                "lambda_grid": {"type": "array", "items": _NUM, "minItems": 1},
                "strength": {"enum": ["inverse", "direct"]},
                "per_seed": {"enum": ["mean", "pooled"]},
                "max_iter": {"type": "integer", "minimum": 0},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "permute": {"type": "boolean"},
                "rfg_rank": {"type": "integer", "minimum": 1},
                "rfg_min_df": {"type": "integer", "minimum": 1},
                "snow_matrix": _PATH,
                "clfg_matrix": _PATH,
                "cfg_import": _PATH,
            },
        },
    },
}


class UsageError(Exception):
    pass


def parse_seeds(text: str | Sequence[int]) -> tuple[int, ...]:
    """``"0..49"`` (inclusive), ``"1,4,9"`` or a list of ints."""
    if not isinstance(text, str):
        return tuple(int(s) for s in text)
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        try:
            if ".." in part:
                lo, hi = part.split("..")
                if int(hi) < int(lo):
                    raise UsageError(f"empty seed range {part!r}")
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
        except ValueError:
            raise UsageError(f"bad seed specification {text!r}") from None
    if not out:
        raise UsageError("no seeds given")
    return tuple(out)


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file {p} does not exist")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {p} is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "(top level)"
        raise UsageError(f"config {p}: {where}: {exc.message}") from exc
    return doc


def _pick(flag, config_value, default=None):
    return flag if flag is not None else (config_value if config_value is not None else default)


def _existing_file(path: str | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"{what} path is required")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} {p} does not exist")
    return p


def output_dir(flag: str | None, cfg: dict, command: str) -> Path:
    """An explicit output directory must already exist; otherwise a timestamped one is created under ./runs."""
    chosen = _pick(flag, cfg.get("out"))
    if chosen is not None:
        p = Path(chosen)
        if not p.is_dir():
            raise UsageError(f"output directory {p} does not exist")
        return p
    p = Path("runs") / f"{time.strftime('%Y%m%d-%H%M%S')}-{command}"
    p.mkdir(parents=True, exist_ok=True)
    return p


def _eligible(patients, manifest: Manifest | None):
    if manifest is None:
        return patients
    counts = manifest.core_counts()
    kept = [p for p in patients if check_inclusion(p, core_counts=counts).eligible]
    if len(kept) < len(patients):
        log.warning("%d of %d patients fail the inclusion criteria and are skipped",
                    len(patients) - len(kept), len(patients))
    return kept


# -- subcommands -----------------------------------------------------------

def cmd_synth(args, cfg: dict) -> int:
    settings = dict(cfg.get("synth", {}))
    for flag, key in (("n", "n_patients"), ("seed", "seed"), ("prevalence", "bf_prevalence"),
                      ("signal_scale", "signal_scale"), ("mock_error_rate", "mock_error_rate")):
        v = getattr(args, flag)
        if v is not None:
            settings[key] = v
    if "seed" not in settings and cfg.get("seed") is not None:
        settings["seed"] = cfg["seed"]
    try:
        gcfg = GeneratorConfig.from_dict(settings)
    except (SynthConfigError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    out = output_dir(args.out, cfg, "synth")
    paths = generate(gcfg).write(out)
    for name, p in paths.items():
        print(f"{name}: {p}")
    return EXIT_OK


def cmd_label(args, cfg: dict) -> int:
    cohort = _existing_file(_pick(args.cohort, cfg.get("cohort")), "cohort")
    ruleset = _pick(args.ruleset, cfg.get("ruleset"), "main")
    patients = load_cohort(cohort)
    labels = label_cohort(patients, ruleset)
    out = output_dir(args.out, cfg, "label")
    path = out / ("labels.csv" if ruleset == "main" else f"labels_{ruleset}.csv")
    path.write_text(labels_csv(labels), encoding="utf-8")
    stats = prevalence(labels)
    print(f"labels: {path} ({stats['positives']} of {stats['n']} positive)")
    return EXIT_OK


def make_client(args, cfg: dict, manifest: Manifest | None, seed: int) -> tuple[LLMClient, str]:
    bcfg = cfg.get("backend", {})
    kind = _pick(args.backend, bcfg.get("kind"), "mock")
    if kind == "mock":
        if manifest is None:
            raise UsageError("the mock backend needs --manifest")
        eps = _pick(args.epsilon, bcfg.get("epsilon"), 0.0)
        if not 0.0 <= eps <= 1.0:
            raise UsageError("epsilon must lie in [0, 1]")
        return LLMClient(mock_rules(manifest, epsilon=eps, seed=seed)), "mock"
    cassette = _pick(args.cassette, bcfg.get("cassette"))
    if kind == "replay":
        if cassette is None:
            raise UsageError("the replay backend needs --cassette")
        if not Path(cassette).is_file():
            raise UsageError(f"cassette {cassette} does not exist")
        return LLMClient(ReplayBackend(cassette)), "replay"
    base_url = _pick(args.base_url, bcfg.get("base_url"))
    model = _pick(args.model, bcfg.get("model"))
    if not base_url or not model:
        raise UsageError("the live backend needs --base-url and --model")
    backend = LiveBackend(base_url, model, cassette=Cassette(cassette) if cassette else None,
                          requests_per_minute=bcfg.get("requests_per_minute", 60.0))
    return LLMClient(backend), "live_http"


def cmd_run(args, cfg: dict) -> int:
    acfg = cfg.get("agents", {})
    cohort = _existing_file(_pick(args.cohort, cfg.get("cohort")), "cohort")
    manifest_path = _pick(args.manifest, cfg.get("manifest"))
    manifest = Manifest.load(_existing_file(manifest_path, "manifest")) if manifest_path else None
    seed = _pick(args.seed, cfg.get("seed"), 0)
    jobs = _pick(args.jobs, cfg.get("jobs"), 1)
    pipeline = _pick(args.pipeline, acfg.get("pipeline"), "snow")
    try:
        ocfg = OrchestratorConfig(
            seed=seed,
            max_iterations=_pick(args.max_iterations, acfg.get("max_iterations"), OrchestratorConfig.max_iterations),
            sample_size=_pick(args.sample_size, acfg.get("sample_size"), OrchestratorConfig.sample_size),
            discovery_sample=acfg.get("discovery_sample", OrchestratorConfig.discovery_sample),
            jobs=jobs,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    defs_path = _pick(args.clfg_defs, acfg.get("clfg_defs"))
    if defs_path is not None:
        _existing_file(defs_path, "CLFG definitions")
    patients = _eligible(load_cohort(cohort), manifest)
    client, kind = make_client(args, cfg, manifest, seed)
    out = output_dir(args.out, cfg, "run")
    if pipeline == "snow":
        result = orchestrate(patients, client, ocfg, kind)
        paths = write_run(result, out, timings=args.timings)
        c = result.manifest["counts"]
        print(f"features: {paths['matrix']} ({c['accepted']} accepted, {c['removed']} removed, "
              f"{c['matrix_columns']} columns)")
        print(f"spec report: {paths['report']}")
        return EXIT_OK
    try:
        defs = load_defs(defs_path)
    except (ClfgDefinitionError, KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"CLFG definitions: {exc}") from exc
    t0 = time.perf_counter()
    m, warnings = clfg_matrix(patients, client, defs, seed, jobs)
    elapsed = time.perf_counter() - t0
    m.to_csv(out / "clfg_features.csv")
    (out / "clfg_manifest.json").write_text(dumps_json({
        "seed": seed, "backend": kind, "patients": len(patients), "features": defs.names,
        "llm": {"calls": client.calls, "repairs": client.repairs}, "warnings": sorted(set(warnings)),
    }), encoding="utf-8")
    if args.timings:
        (out / "timings.json").write_text(json.dumps({"clfg_s": round(elapsed, 4)}, indent=2) + "\n", encoding="utf-8")
    print(f"features: {out / 'clfg_features.csv'} ({len(m.columns)} columns)")
    return EXIT_OK


def cmd_eval(args, cfg: dict) -> int:
    ecfg = cfg.get("eval", {})
    labels_given = args.feature_sets or ecfg.get("feature_sets") or ["baseline", "baseline+snow"]
    sets = [s.strip() for s in (labels_given.split(",") if isinstance(labels_given, str) else labels_given) if s.strip()]
    try:
        needed = {parse_feature_set(s)[0] for s in sets}
    except FeatureSetError as exc:
        raise UsageError(str(exc)) from exc
    if len(set(sets)) != len(sets):
        raise UsageError("feature sets repeat")
    seeds = parse_seeds(_pick(args.seeds, ecfg.get("seeds"), "0..49"))
    jobs = _pick(args.jobs, cfg.get("jobs"), 1)
    seed = _pick(args.seed, cfg.get("seed"), 0)
    try:
        cv = CvConfig(ecfg.get("outer_folds", 3), ecfg.get("inner_folds", 3), seeds,
                      per_seed=ecfg.get("per_seed", "mean"))
        model_kw = {k: ecfg[k] for k in ("penalties", "lambda_grid", "max_iter", "tol", "strength") if k in ecfg}
        model = ModelConfig(**model_kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    cohort = _existing_file(_pick(args.cohort, cfg.get("cohort")), "cohort")
    manifest_path = _pick(args.manifest, cfg.get("manifest"))
    manifest = Manifest.load(_existing_file(manifest_path, "manifest")) if manifest_path else None
    paths = {
        "snow": _pick(args.snow_matrix, ecfg.get("snow_matrix")),
        "clfg": _pick(args.clfg_matrix, ecfg.get("clfg_matrix")),
        "cfg-import": _pick(args.cfg_import, ecfg.get("cfg_import")),
    }
    for block, p in paths.items():
        if p is not None:
            _existing_file(p, f"{block} matrix")
    for block in needed & {"snow", "clfg", "cfg-import"}:
        if paths[block] is None and (block == "cfg-import" or manifest is None):
            flag = {"snow": "--snow-matrix", "clfg": "--clfg-matrix", "cfg-import": "--cfg-import"}[block]
            raise UsageError(f"feature set with {block} needs {flag}" + ("" if block == "cfg-import" else " or --manifest"))
    labels_path = _pick(args.labels, cfg.get("labels"))
    if labels_path is not None:
        _existing_file(labels_path, "labels")
    out = output_dir(args.out, cfg, "eval")

    patients = _eligible(load_cohort(cohort), manifest)
    ids = tuple(p.patient_id for p in patients)
    if labels_path is not None:
        table = read_labels_csv(labels_path)
        absent = [pid for pid in ids if pid not in table]
        if absent:
            raise UsageError(f"labels file lacks {len(absent)} patients, e.g. {absent[:3]}")
        y = np.array([table[pid] for pid in ids], dtype=float)
    else:
        y = np.array([l.label for l in label_cohort(patients, _pick(args.ruleset, cfg.get("ruleset"), "main"))],
                     dtype=float)

    sources = FeatureSources(ids, baseline_matrix(patients), rfg_rank=ecfg.get("rfg_rank", 20),
                             rfg_min_df=ecfg.get("rfg_min_df", 2))
    for block in ("snow", "clfg", "cfg-import"):
        if block not in needed:
            continue
        if paths[block] is not None:
            sources.blocks[block] = FeatureMatrix.from_csv(paths[block])
        elif block == "snow":
            client = LLMClient(mock_rules(manifest, seed=seed))
            sources.blocks[block] = orchestrate(patients, client, OrchestratorConfig(seed=seed, jobs=jobs), "mock").matrix
        else:
            client = LLMClient(mock_rules(manifest, seed=seed))
            sources.blocks[block] = clfg_matrix(patients, client, load_defs(), seed, jobs)[0]
    if "rfg" in needed:
        sources.documents = [patient_document(p) for p in patients]

    permute = bool(args.permute or ecfg.get("permute", False))
    reports = []
    for label in sets:
        X, cols, text = sources.build(label, seed)
        t0 = time.perf_counter()
        rep = repeat_seeds(X, y, label, model, cv, text, jobs, permute=permute)
        rep.n_features = len(cols)
        reports.append(rep)
        sd = "n/a" if rep.sd is None else f"{rep.sd:.3f}"
        print(f"{label:<28} mean AUC {rep.mean:.3f} +/- {sd} over {len(seeds)} seeds "
              f"({len(cols)} features, {time.perf_counter() - t0:.1f}s)")
    written = write_reports(reports, out)
    print(f"summary: {written['summary']}")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="snow", description="Feature generation from clinical notes and AUC evaluation.")
    ap.add_argument("--version", action="version", version=f"snow {__version__}")
    ap.add_argument("--config", help="JSON config file; flags override it")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, cohort=True):
        p.add_argument("--out", help="existing output directory (default: new ./runs/<timestamp>-<command>)")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)
        if cohort:
            p.add_argument("--cohort", help="cohort JSON")
            p.add_argument("--manifest", help="generator manifest (enables the mock backend and inclusion checks)")

    p = sub.add_parser("synth", help="generate a synthetic cohort and its ground-truth manifest")
    common(p, cohort=False)
    p.add_argument("--n", type=int, help="number of patients")
    p.add_argument("--prevalence", type=float)
    p.add_argument("--signal-scale", type=float)
    p.add_argument("--mock-error-rate", type=float)

    p = sub.add_parser("label", help="label biochemical failure from PSA series")
    common(p)
    p.add_argument("--ruleset", choices=("main", "sensitivity"))

    p = sub.add_parser("run", help="generate note features with the agentic or clinician-guided pipeline")
    common(p)
    p.add_argument("--pipeline", choices=PIPELINES)
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--epsilon", type=float, help="mock extraction error rate")
    p.add_argument("--cassette", help="recorded responses (replay) or where to record them (live)")
    p.add_argument("--base-url")
    p.add_argument("--model")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--sample-size", type=int)
    p.add_argument("--clfg-defs", help="clinician feature definition file")
    p.add_argument("--timings", action="store_true", help="also write wall-clock timings.json (varies between runs)")

    p = sub.add_parser("eval", help="nested cross-validated AUC of feature sets")
    common(p)
    p.add_argument("--labels", help="labels CSV (default: label the cohort)")
    p.add_argument("--ruleset", choices=("main", "sensitivity"))
    p.add_argument("--feature-sets", help=f"comma separated; valid: {', '.join(FEATURE_SETS)}")
    p.add_argument("--seeds", help="e.g. 0..49 or 1,2,3")
    p.add_argument("--snow-matrix")
    p.add_argument("--clfg-matrix")
    p.add_argument("--cfg-import", help="CSV of manually curated features")
    p.add_argument("--permute", action="store_true", default=None, help="null model: permute labels per seed")
    return ap


COMMANDS = {"synth": cmd_synth, "label": cmd_label, "run": cmd_run, "eval": cmd_eval}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if getattr(args, "jobs", None) is not None and args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"snow {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LabelingError, CohortError, LLMError, FeatureSetError, ValueError, OSError, RuntimeError) as exc:
        print(f"snow {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
