"""Synthetic prostate cancer cohort with a ground-truth manifest."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .._seeding import rng_for
from ..cohort import (
    FIVE_YEARS,
    ClinicalNote,
    PatientRecord,
    PsaSample,
    Treatment,
    cohort_document,
    dumps_json,
    format_number,
)
from ..outcome import label_patient
from ..regions import REGIONS, SYSTEMATIC_REGIONS
from .config import GeneratorConfig
from .render import draw_style, render_biopsy, render_progress_note, render_referral_note
from .truth import AGGREGATE_ORDER, Manifest, grade_group_reference, hand_aggregates

MANIFEST_FORMAT = "snow-synth-manifest/1"
MAX_PSA_ATTEMPTS = 200

_PATTERNS = {
    1: ((3, 3),),
    2: ((3, 4),),
    3: ((4, 3),),
    4: ((4, 4), (3, 5), (5, 3)),
    5: ((4, 5), (5, 4), (5, 5)),
}
_RACES = (("White", "Asian", "Black", "Other"), (0.748, 0.11, 0.07, 0.072))
_ETHNICITIES = (("Non-Hispanic", "Hispanic"), (0.9, 0.1))
_LANGUAGES = (("English", "Spanish", "Other"), (0.92, 0.04, 0.04))
_INSTITUTIONS = ("Valley Community Hospital", "Northside Medical Center", "Bay Regional Pathology")


class GenerationError(RuntimeError):
    pass


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def _choice(rng: np.random.Generator, options: tuple) -> str:
    names, probs = options
    return names[int(rng.choice(len(names), p=probs))]


def _regions(rng: np.random.Generator, z: float, units: str, anterior_rate: float) -> dict[str, dict]:
    sampled = list(SYSTEMATIC_REGIONS)
    for side in ("left", "right"):
        if rng.random() < anterior_rate:
            sampled.append(f"{side}_anterior_apex")
    sampled = [r for r in REGIONS if r in sampled]
    p_pos = _sigmoid(-0.5 + 1.4 * z)
    positive = [r for r in sampled if rng.random() < p_pos]
    if not positive:
        positive = [sampled[int(rng.integers(len(sampled)))]]
    top_grade = int(np.clip(round(2.6 + 1.25 * z + rng.normal(0, 0.6)), 1, 5))
    lead = positive[int(rng.integers(len(positive)))]
    frac_mean = _sigmoid(-0.3 + 0.8 * z)
    out = {}
    for r in sampled:
        core = int(rng.integers(10, 19))
        reg = {"cancer_present": 0, "core_length_mm": core}
        if r in positive:
            grade = top_grade if r == lead else max(1, top_grade - int(rng.binomial(2, 0.35)))
            opts = _PATTERNS[grade]
            p, s = opts[int(rng.integers(len(opts)))]
            frac = float(rng.beta(2 * frac_mean * 3, 2 * (1 - frac_mean) * 3))
            reg.update(cancer_present=1, gleason_primary=p, gleason_secondary=s, gleason_sum=p + s)
            if units == "percent":
                reg["tumor_length_mm"] = None
                reg["tumor_percentage"] = float(np.clip(round(100 * frac), 1, 100))
            else:
                t = float(np.clip(round(frac * core, 1), 0.5, core))
                reg["tumor_length_mm"] = t
                reg["tumor_percentage"] = round(100 * t / core, 1)
        else:
            reg.update(gleason_primary=0, gleason_secondary=0, gleason_sum=0, tumor_percentage=0.0,
                       tumor_length_mm=None)
        reg["intraductal"] = False
        out[r] = reg
    return out


def _max_gleason(regions: dict[str, dict]) -> tuple[int, int]:
    best = (0, 0)
    for r in regions.values():
        if r["cancer_present"]:
            cand = (r["gleason_primary"], r["gleason_secondary"])
            if (sum(cand), cand[0]) > (sum(best), best[0]):
                best = cand
    return best


def _percent_pattern_45(regions: dict[str, dict]) -> float | None:
    acc, n = 0.0, 0
    for r in regions.values():
        if r["cancer_present"]:
            high = (r["gleason_primary"] >= 4) + (r["gleason_secondary"] >= 4)
            acc += (1.0, 0.5, 0.0)[2 - high] * r["tumor_percentage"]
            n += 1
    return acc / n if n else None


@dataclass
class _Draft:
    pid: str
    z: float
    kind: str
    biopsy_date: date
    start: date
    end: date
    structured: dict
    regions: dict
    scalars: dict
    style: dict
    notes: list


def _draft_patient(cfg: GeneratorConfig, idx: int) -> _Draft:
    pid = f"P{idx + 1:04d}"
    rng = rng_for(cfg.seed, "patient", idx)
    style = draw_style(rng, cfg.obstacles)
    z = float(rng.normal())
    kind = "prostatectomy" if rng.random() < cfg.prostatectomy_fraction else "radiation"
    biopsy_date = date(2005, 1, 1) + timedelta(days=int(rng.integers(0, 3300)))
    start = biopsy_date + timedelta(days=int(rng.integers(40, 121)))
    end = start + timedelta(days=int(rng.integers(55, 64))) if kind == "radiation" else start
    age = round(float(np.clip(rng.normal(68.5, 8.4), 45, 89)), 1)
    max_pre = round(float(math.exp(rng.normal(math.log(6.2) + 0.3 * z, 0.75))), 1)
    max_pre = max(max_pre, 0.5)
    psa_bx = round(max_pre * float(rng.uniform(0.7, 1.0)), 1)
    stage = None
    if rng.random() >= cfg.stage_missing_rate:
        logits = np.array([0.0, -0.5 + 0.8 * z, -2.2 + 1.2 * z])
        probs = np.exp(logits) / np.exp(logits).sum()
        stage = ("t1", "t2", "t3")[int(rng.choice(3, p=probs))]
    structured = {
        "age": age,
        "charlson_index": int(np.clip(round(rng.normal(5.2, 2.0)), 0, 15)),
        "max_pre_psa": max_pre,
        "race": _choice(rng, _RACES),
        "ethnicity": _choice(rng, _ETHNICITIES),
        "language": _choice(rng, _LANGUAGES),
        "stage": stage,
    }
    regions = _regions(rng, z, style.units, cfg.anterior_apex_rate)
    intraductal = int(rng.random() < _sigmoid(-2.2 + 1.0 * z))
    if intraductal:
        pos = [r for r in REGIONS if r in regions and regions[r]["cancer_present"]]
        host = max(pos, key=lambda r: (regions[r]["gleason_sum"], -REGIONS.index(r)))
        regions[host]["intraductal"] = True
    scalars = {
        "total_cores_count": float(len(regions)),
        "intraductal_carcinoma_presence": float(intraductal),
        "prostate_volume": round(float(math.exp(rng.normal(math.log(40), 0.35))), 1),
        "psa_pre_biopsy": psa_bx,
    }
    bx_id, pn_id, ref_id = f"{pid}-bx", f"{pid}-pn1", f"{pid}-pn0"
    bx_text = render_biopsy(
        {
            "age": int(age),
            "date": biopsy_date.isoformat(),
            "accession": f"SP-{biopsy_date.year % 100:02d}-{int(rng.integers(1000, 99999)):05d}",
            "institution": _INSTITUTIONS[int(rng.integers(len(_INSTITUTIONS)))],
            "psa_pre_biopsy": psa_bx,
            "prostate_volume": scalars["prostate_volume"],
            "total_cores": len(regions),
        },
        regions,
        style,
    )
    positives = sum(r["cancer_present"] for r in regions.values())
    pn_date = start - timedelta(days=int(rng.integers(5, 30)))
    pn_text = render_progress_note(
        {
            "age": int(age),
            "date": pn_date.isoformat(),
            "max_pre_psa": max_pre,
            "stage": stage,
            "treatment": kind,
            "charlson": structured["charlson_index"],
            "gleason": _max_gleason(regions),
            "positives": positives,
            "total_cores": len(regions),
        },
        rng,
    )
    ref_date = biopsy_date - timedelta(days=int(rng.integers(14, 60)))
    notes = [
        ClinicalNote(ref_id, pid, ref_date, "progress_note",
                     render_referral_note({"date": ref_date.isoformat(), "psa_pre_biopsy": psa_bx})),
        ClinicalNote(bx_id, pid, biopsy_date, "biopsy_report", bx_text),
        ClinicalNote(pn_id, pid, pn_date, "progress_note", pn_text),
    ]
    return _Draft(pid, z, kind, biopsy_date, start, end, structured, regions, scalars, style.to_dict(), notes)


def _signal_inputs(d: _Draft, aggregates: dict) -> dict[str, float]:
    return {
        "percentage_positive_cores": aggregates["percentage_positive_cores"],
        "max_gleason_score_sum": aggregates["max_gleason_score_sum"],
        "max_tumor_percentage": aggregates["max_tumor_percentage"],
        "intraductal_carcinoma_presence": d.scalars["intraductal_carcinoma_presence"],
        "prostate_volume": d.scalars["prostate_volume"],
        "max_pre_psa": math.log(d.structured["max_pre_psa"]),
        "age": d.structured["age"],
    }


def planted_labels(inputs: list[dict[str, float]], cfg: GeneratorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Exactly ``cfg.n_positive`` labels, drawn without replacement with weights exp(logit).

    The logit is a sparse linear model over standardized true features.
    """
    n = len(inputs)
    logits = np.zeros(n)
    for name, coef in cfg.signal.items():
        x = np.array([row[name] for row in inputs], dtype=float)
        sd = x.std()
        if sd > 0:
            logits += coef * (x - x.mean()) / sd
    logits *= cfg.signal_scale
    gumbel = rng_for(cfg.seed, "labels").gumbel(size=n)
    order = np.argsort(-(logits + gumbel), kind="stable")
    labels = np.zeros(n, dtype=int)
    labels[order[: cfg.n_positive]] = 1
    return labels, logits


def _post_dates(rng: np.random.Generator, end: date) -> list[date]:
    out = []
    for j in range(14):
        offset = 60 + 180 * j + int(rng.integers(-20, 21))
        out.append(end + timedelta(days=offset))
    return out


def _in_window(d: date, end: date) -> bool:
    return end < d and d - end <= FIVE_YEARS


def _radiation_series(rng, dates, end, pre, label) -> tuple[list[float], str, int | None]:
    nadir = float(rng.uniform(0.1, 1.5))
    vals = []
    for j in range(len(dates)):
        decay = (pre - nadir) * math.exp(-j / 1.2) * float(rng.uniform(0.9, 1.0))
        vals.append(nadir + decay if decay > 0.05 * nadir else nadir * float(rng.uniform(1.0, 1.3)))
    window = [j for j, d in enumerate(dates) if _in_window(d, end)]
    event = None
    pattern = "stable_nadir"
    if label:
        event = int(rng.choice([j for j in window if j >= 3]))
        base = min(vals[: event])
        for j in range(event, len(vals)):
            vals[j] = base + 2.2 + 0.8 * (j - event) + float(rng.uniform(0, 0.4))
        pattern = "nadir_plus_2_rise"
    elif rng.random() < 0.3:
        for j, d in enumerate(dates):
            if d - end > FIVE_YEARS:
                vals[j] = min(vals) + 2.5 + 0.5 * j
        pattern = "late_rise_after_window"
    return [round(v, 2) for v in vals], pattern, event


def _prostatectomy_series(rng, dates, end, label) -> tuple[list[float], str, int | None]:
    vals = [float(rng.uniform(0.01, 0.08)) for _ in dates]
    window = [j for j, d in enumerate(dates) if _in_window(d, end)]
    event = None
    pattern = "undetectable"
    if label:
        event = int(rng.choice([j for j in window if j >= 1]))
        v = float(rng.uniform(0.4, 0.8))
        for j in range(event, len(vals)):
            vals[j] = v
            v *= float(rng.uniform(1.2, 1.8))
        pattern = "rising_above_0_4"
    else:
        u = rng.random()
        j = int(rng.choice(window[1:-1]))
        if u < 0.2:
            vals[j] = float(rng.uniform(0.2, 0.35))
            pattern = "single_blip"
        elif u < 0.28:
            vals[j] = float(rng.uniform(0.2, 0.3))
            vals[j + 1] = float(rng.uniform(0.2, 0.35))
            pattern = "low_confirmed_rise"
        elif u < 0.33:
            vals[j] = float(rng.uniform(0.45, 0.7))
            vals[j + 1] = vals[j] * float(rng.uniform(0.3, 0.8))
            pattern = "high_unconfirmed"
    return [round(v, 2) for v in vals], pattern, event


def _psa(cfg: GeneratorConfig, d: _Draft, label: int) -> tuple[list[PsaSample], dict]:
    pre = d.structured["max_pre_psa"]
    for attempt in range(MAX_PSA_ATTEMPTS):
        rng = rng_for(cfg.seed, "psa", d.pid, attempt)
        pre_samples = [
            PsaSample(d.biopsy_date - timedelta(days=int(rng.integers(200, 400))), round(pre * 0.6, 1)),
            PsaSample(d.biopsy_date - timedelta(days=int(rng.integers(3, 10))), d.scalars["psa_pre_biopsy"]),
            PsaSample(d.start - timedelta(days=int(rng.integers(1, 5))), pre),
        ]
        dates = _post_dates(rng, d.end)
        if d.kind == "radiation":
            vals, pattern, event = _radiation_series(rng, dates, d.end, pre, label)
        else:
            vals, pattern, event = _prostatectomy_series(rng, dates, d.end, label)
        psa = pre_samples + [PsaSample(dt, v) for dt, v in zip(dates, vals)]
        rec = PatientRecord(d.pid, Treatment(d.kind, d.start, d.end), [Treatment(d.kind, d.start, d.end)],
                            dict(d.structured), psa, list(d.notes))
        got = label_patient(rec, "main")
        if got.label == label:
            sens = label_patient(rec, "sensitivity")
            return psa, {
                "pattern": pattern,
                "event_date": got.event_date.isoformat() if got.event_date else None,
                "attempt": attempt,
                "label_sensitivity": sens.label,
            }
    raise GenerationError(f"{d.pid}: could not simulate a PSA series with label {label}")


@dataclass
class SyntheticCohort:
    patients: list[PatientRecord]
    manifest: Manifest
    cfg_features: str  # CSV text of the curated (ground-truth) clinician feature set

    def cohort_text(self) -> str:
        return dumps_json(cohort_document(self.patients))

    def manifest_text(self) -> str:
        return dumps_json(self.manifest.doc)

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        if not out.is_dir():
            raise FileNotFoundError(f"output directory {out} does not exist")
        paths = {"cohort": out / "cohort.json", "manifest": out / "manifest.json", "cfg": out / "cfg_features.csv"}
        paths["cohort"].write_text(self.cohort_text(), encoding="utf-8")
        paths["manifest"].write_text(self.manifest_text(), encoding="utf-8")
        paths["cfg"].write_text(self.cfg_features, encoding="utf-8")
        return paths


CFG_COLUMNS = (
    "grade_group_max_gleason",
    "max_gleason_sum",
    "percent_positive_regions",
    "max_percent_involved",
    "percent_pattern_45",
    "intraductal_carcinoma",
)


def _cfg_row(d: _Draft) -> list:
    positive = [r for r in d.regions.values() if r["cancer_present"]]
    sys_regions = [r for name, r in d.regions.items() if name in SYSTEMATIC_REGIONS]
    p, s = _max_gleason(d.regions)
    return [
        grade_group_reference(p, s),
        p + s if positive else None,
        100 * sum(r["cancer_present"] for r in sys_regions) / len(sys_regions),
        max((r["tumor_percentage"] for r in positive), default=None),
        _percent_pattern_45(d.regions),
        int(d.scalars["intraductal_carcinoma_presence"]),
    ]


def generate(cfg: GeneratorConfig) -> SyntheticCohort:
    drafts = [_draft_patient(cfg, i) for i in range(cfg.n_patients)]
    aggregates = [hand_aggregates(d.regions, d.scalars["total_cores_count"]) for d in drafts]
    labels, logits = planted_labels([_signal_inputs(d, a) for d, a in zip(drafts, aggregates)], cfg)
    patients, entries = [], {}
    for d, agg, label, logit in zip(drafts, aggregates, labels, logits):
        psa, psa_info = _psa(cfg, d, int(label))
        tr = Treatment(d.kind, d.start, d.end)
        patients.append(PatientRecord(d.pid, tr, [tr], dict(d.structured), psa, list(d.notes)))
        entries[d.pid] = {
            "biopsy_note_id": f"{d.pid}-bx",
            "progress_note_ids": [f"{d.pid}-pn0", f"{d.pid}-pn1"],
            "treatment": d.kind,
            "regions": d.regions,
            "scalars": d.scalars,
            "aggregates": {k: agg[k] for k in AGGREGATE_ORDER},
            "systematic_cores": sum(1 for r in d.regions if r in SYSTEMATIC_REGIONS),
            "latent_severity": round(d.z, 6),
            "signal_logit": round(float(logit), 6),
            "style": d.style,
            "psa": {k: psa_info[k] for k in ("pattern", "event_date", "attempt")},
            "label": int(label),
            "label_sensitivity": int(psa_info["label_sensitivity"]),
        }
    doc = {"format": MANIFEST_FORMAT, "config": cfg.to_dict(), "patients": entries}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["patient_id", *CFG_COLUMNS])
    for d in drafts:
        w.writerow([d.pid] + [format_number(v) if v is not None else "" for v in _cfg_row(d)])
    return SyntheticCohort(patients, Manifest(doc), buf.getvalue())
