"""Render ground-truth biopsy findings into free-text reports.

Each report draws one style per obstacle (region naming, separators,
combined cores, outside-slide layout, length units, negation wording). The
renderer audits its own output and refuses any report from which a truth
value cannot be read back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cohort import format_number
from ..regions import REGIONS, UnknownRegionError, canonical_region

UNIT_STYLES = ("percent", "mm", "cm", "mixed")
NEGATIONS = (
    "BENIGN PROSTATIC GLANDS AND STROMA",
    "NO ADENOCARCINOMA IDENTIFIED",
    "NEGATIVE FOR MALIGNANCY",
    "Benign prostatic tissue, no significant abnormalities",
    "NO EVIDENCE OF CARCINOMA",
)
GLEASON_FORMS = (
    "PROSTATIC ADENOCARCINOMA, GLEASON {p}+{s}={t}",
    "ADENOCARCINOMA, GLEASON SCORE {t} ({p}+{s})",
    "Adenocarcinoma of prostate, Gleason grade {p}+{s} (score {t})",
)
PERCENT_FORMS = (
    ", COMPRISING {pct}% OF THE CORE",
    ", INVOLVING {pct}% OF THE TISSUE",
    "; tumor occupies {pct}% of core",
)
STAGE_TEXT = {"t1": ("cT1c",), "t2": ("cT2a", "cT2b", "cT2c"), "t3": ("cT3a", "cT3b")}


class RenderError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoteStyle:
    alias: int = 0
    separator: int = 0
    combine: bool = False
    outside: bool = False
    units: str = "percent"
    negation: int = 0
    gleason_form: int = 0
    percent_form: int = 0
    header_form: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def draw_style(rng: np.random.Generator, obstacles: dict[str, bool]) -> NoteStyle:
    # always consume the same number of draws so toggles do not shift the stream
    u = rng.random(9)
    return NoteStyle(
        alias=int(u[0] * 5) if obstacles["region_alias_styles"] else 0,
        separator=int(u[1] * 5) if obstacles["separator_styles"] else 0,
        combine=bool(u[2] < 0.5) if obstacles["combined_core_reporting"] else False,
        outside=bool(u[3] < 0.25) if obstacles["outside_slide_layout"] else False,
        units=UNIT_STYLES[int(u[4] * 4)] if obstacles["unit_mm_cm_mixing"] else "percent",
        negation=int(u[5] * 5) if obstacles["negation_phrasings"] else 0,
        gleason_form=int(u[6] * 3),
        percent_form=int(u[7] * 3),
        header_form=int(u[8] * 3),
    )


_LEVEL_WORDS = {
    0: {"apex": "APEX", "mid": "MID", "base": "BASE"},
    2: {"apex": "APEX", "mid": "MID", "base": "BASE"},
    4: {"apex": "APICAL", "mid": "MIDGLAND", "base": "BASAL"},
}


def region_label(region: str, alias: int) -> str:
    side, rest = region.split("_", 1)
    if rest == "anterior_apex":
        return (
            f"{side.upper()} ANTERIOR APEX",
            f"{side.capitalize()} anterior apex",
            f"{'LT' if side == 'left' else 'RT'} ANT APEX",
            f"{side.upper()} APEX, ANTERIOR",
            f"{side[0].upper()}. TRANSITION ZONE",
        )[alias]
    level, pos = rest.split("_")
    if alias == 0:
        return f"{side.upper()} {level.upper()} {pos.upper()}"
    if alias == 1:
        return f"{side.capitalize()} {level}, {pos}"
    if alias == 2:
        return f"{'LT' if side == 'left' else 'RT'} {level.upper()} {pos[:3].upper()}"
    if alias == 3:
        return f"{side.upper()} {pos.upper()} {level.upper()}"
    return f"{side[0].upper()}. {_LEVEL_WORDS[4][level]} {pos.upper()}"


def _entry_head(i: int, label: str, style: NoteStyle) -> str:
    if style.outside:
        return f"Slide {i + 1} [{label}]:"
    return (
        f"{chr(65 + i)}. {label}:",
        f"{i + 1}) {label}:",
        f"- {label}:",
        f"PART {i + 1}: {label} --",
        f"{label}\n  ",
    )[style.separator]


def _cm(mm: float) -> str:
    return format_number(round(mm / 10, 3))


def extent_text(region: dict, style: NoteStyle) -> str:
    t, c = region.get("tumor_length_mm"), region["core_length_mm"]
    if t is None:
        return PERCENT_FORMS[style.percent_form].format(pct=format_number(region["tumor_percentage"]))
    if style.units == "mm":
        return f"; tumor length {format_number(t)} mm of a {format_number(c)} mm core"
    if style.units == "cm":
        return f"; tumor measures {_cm(t)} cm in a {_cm(c)} cm core"
    return f"; {format_number(t)} mm of tumor in a {_cm(c)} cm core"


def diagnosis_text(region: dict, style: NoteStyle) -> str:
    if not region["cancer_present"]:
        return NEGATIONS[style.negation]
    p, s = region["gleason_primary"], region["gleason_secondary"]
    text = GLEASON_FORMS[style.gleason_form].format(p=p, s=s, t=p + s) + extent_text(region, style)
    if region.get("intraductal"):
        text += ", WITH INTRADUCTAL CARCINOMA"
    return text


def _groups(regions: dict[str, dict], style: NoteStyle) -> list[tuple[str, ...]]:
    order = [r for r in REGIONS if r in regions]
    if not style.combine:
        return [(r,) for r in order]
    out: list[tuple[str, ...]] = []
    i = 0
    while i < len(order):
        a = order[i]
        if i + 1 < len(order):
            b = order[i + 1]
            if (not regions[a]["cancer_present"] and not regions[b]["cancer_present"]
                    and a.split("_")[0] == b.split("_")[0]):
                out.append((a, b))
                i += 2
                continue
        out.append((a,))
        i += 1
    return out


def render_biopsy(ctx: dict, regions: dict[str, dict], style: NoteStyle) -> str:
    """``ctx`` carries age, date, accession, psa_pre_biopsy, prostate_volume, total_cores."""
    psa = format_number(ctx["psa_pre_biopsy"])
    vol = format_number(ctx["prostate_volume"])
    n = ctx["total_cores"]
    lines = []
    if style.outside:
        lines += [
            "PATHOLOGY CONSULTATION - OUTSIDE SLIDE REVIEW",
            f"Slides received from {ctx['institution']} (outside accession {ctx['accession']}).",
            f"Date received: {ctx['date']}",
            "",
            f"History: {ctx['age']} year old male, PSA {psa} ng/mL, gland volume estimated at {vol} cc.",
            f"{n} slides reviewed, one core per slide.",
            "",
            "INTERPRETATION:",
        ]
    else:
        lines += [
            ("SURGICAL PATHOLOGY REPORT", "Prostate needle biopsy report", "PATHOLOGY REPORT - PROSTATE")[style.header_form],
            f"Accession: {ctx['accession']}    Date: {ctx['date']}",
            "",
            "CLINICAL HISTORY:",
            (
                f"{ctx['age']}-year-old man with elevated PSA ({psa} ng/mL).",
                f"Pre-biopsy PSA {psa} ng/mL. Age {ctx['age']}.",
                f"{ctx['age']} yo M, PSA = {psa}.",
            )[style.header_form],
            "OPERATIVE FINDINGS:",
            (f"Prostate volume: {vol} mL.", f"Volume = {vol} cc", f"TRUS gland volume {vol} cc.")[style.header_form],
            f"Specimens: {n} needle cores submitted.",
            "",
            "FINAL DIAGNOSIS:",
        ]
    entries = []
    for i, group in enumerate(_groups(regions, style)):
        labels = [region_label(r, style.alias) for r in group]
        head_label = " & ".join(labels) + (f" ({len(group)} CORES)" if len(group) > 1 else "")
        diag = diagnosis_text(regions[group[0]], style)
        entries.append((group, labels, diag))
        lines.append(_entry_head(i, head_label, style) + ("" if style.separator == 4 and not style.outside else " ") + diag)
    text = "\n".join(lines) + "\n"
    audit(text, ctx, regions, entries, style)
    return text


def audit(text: str, ctx: dict, regions: dict[str, dict], entries, style: NoteStyle) -> None:
    """Check that every truth value can be read back from the rendered text."""
    seen = []
    for group, labels, diag in entries:
        for r, label in zip(group, labels):
            try:
                got = canonical_region(label)
            except UnknownRegionError as exc:
                raise RenderError(f"label {label!r} does not resolve: {exc}") from exc
            if got != r:
                raise RenderError(f"label {label!r} resolves to {got}, expected {r}")
            seen.append(r)
            reg = regions[r]
            if not reg["cancer_present"]:
                if diag not in NEGATIONS:
                    raise RenderError(f"benign region {r} rendered as {diag!r}")
                continue
            p, s = reg["gleason_primary"], reg["gleason_secondary"]
            if f"{p}+{s}" not in diag or str(p + s) not in diag:
                raise RenderError(f"gleason pattern for {r} missing from {diag!r}")
            if reg.get("tumor_length_mm") is None:
                needed = [format_number(reg["tumor_percentage"]) + "%"]
            elif style.units == "mm":
                needed = [f"{format_number(reg['tumor_length_mm'])} mm", f"{format_number(reg['core_length_mm'])} mm"]
            elif style.units == "cm":
                needed = [f"{_cm(reg['tumor_length_mm'])} cm", f"{_cm(reg['core_length_mm'])} cm"]
            else:
                needed = [f"{format_number(reg['tumor_length_mm'])} mm", f"{_cm(reg['core_length_mm'])} cm"]
            for piece in needed:
                if piece not in diag:
                    raise RenderError(f"extent {piece!r} for {r} missing from {diag!r}")
    if sorted(seen) != sorted(regions):
        raise RenderError("rendered regions differ from sampled regions")
    for piece in (format_number(ctx["psa_pre_biopsy"]), format_number(ctx["prostate_volume"]), str(ctx["total_cores"])):
        if piece not in text:
            raise RenderError(f"scalar {piece!r} missing from report")


def render_progress_note(ctx: dict, rng: np.random.Generator) -> str:
    """Clinic note written shortly before treatment.

    ``ctx`` carries age, date, max_pre_psa, stage (or None), treatment,
    charlson, gleason (p, s), positives, total_cores.
    """
    p, s = ctx["gleason"]
    lines = [
        "UROLOGY CLINIC NOTE",
        f"Date: {ctx['date']}",
        f"{ctx['age']} year old man with newly diagnosed prostate adenocarcinoma.",
        f"Biopsy showed Gleason {p}+{s}={p + s} disease in {ctx['positives']} of {ctx['total_cores']} cores.",
        f"Most recent PSA {format_number(ctx['max_pre_psa'])} ng/mL.",
    ]
    if ctx["stage"] is not None:
        choices = STAGE_TEXT[ctx["stage"]]
        lines.append(f"Digital rectal exam consistent with clinical stage {choices[int(rng.integers(len(choices)))]}.")
    else:
        lines.append("Digital rectal exam deferred.")
    lines.append(f"Comorbidities reviewed; Charlson index {ctx['charlson']}.")
    plan = {
        "radiation": "external beam radiation therapy with androgen deprivation",
        "prostatectomy": "robotic radical prostatectomy",
    }[ctx["treatment"]]
    lines.append(f"Options discussed at length. Plan: {plan}.")
    return "\n".join(lines) + "\n"


def render_referral_note(ctx: dict) -> str:
    return (
        "UROLOGY NEW PATIENT VISIT\n"
        f"Date: {ctx['date']}\n"
        f"Referred for elevated PSA of {format_number(ctx['psa_pre_biopsy'])} ng/mL. "
        "No urinary complaints. Plan: transrectal ultrasound guided biopsy.\n"
    )
