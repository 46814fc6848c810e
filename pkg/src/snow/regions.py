"""Canonical prostate biopsy regions and free-text region name canonicalization.

Reports name the same region many ways ("LEFT APEX LAT", "Lt lateral apex",
"L. APICAL LATERAL"). Everything downstream joins on the canonical
snake_case labels defined here.
"""

from __future__ import annotations

import re

SIDES = ("left", "right")
ZONES = (
    "apex_medial",
    "apex_lateral",
    "mid_medial",
    "mid_lateral",
    "base_medial",
    "base_lateral",
    "anterior_apex",
)

REGIONS: tuple[str, ...] = tuple(f"{side}_{zone}" for side in SIDES for zone in ZONES)
SYSTEMATIC_REGIONS: tuple[str, ...] = tuple(r for r in REGIONS if not r.endswith("anterior_apex"))
REGION_INDEX = {r: i for i, r in enumerate(REGIONS)}

# Whole-phrase aliases that token parsing cannot resolve.
ALIASES = {
    "lapex": "left_apex_medial",
    "rapex": "right_apex_medial",
    "left transition zone apex": "left_anterior_apex",
    "right transition zone apex": "right_anterior_apex",
}

_SIDE_TOKENS = {
    "left": "left", "l": "left", "lt": "left", "lft": "left", "sinistra": "left",
    "right": "right", "r": "right", "rt": "right", "rgt": "right",
}
_LEVEL_TOKENS = {
    "apex": "apex", "apical": "apex", "apx": "apex",
    "mid": "mid", "middle": "mid", "midgland": "mid", "mid-gland": "mid",
    "base": "base", "basal": "base", "bas": "base",
}
_POSITION_TOKENS = {
    "medial": "medial", "med": "medial",
    "lateral": "lateral", "lat": "lateral",
}
_ANTERIOR_TOKENS = {"anterior", "ant", "transition", "tz"}


class UnknownRegionError(ValueError):
    pass


def canonical_region(text: str) -> str:
    """Map a free-text region name to one of the 14 canonical labels.

    Raises UnknownRegionError when the text does not name exactly one region.
    """
    raw = text.strip().lower()
    if raw in REGION_INDEX:
        return raw
    cleaned = re.sub(r"[^a-z\- ]+", " ", raw.replace("_", " ")).strip()
    cleaned = re.sub(r"\s+", " ", cleaned)
    if cleaned in ALIASES:
        return ALIASES[cleaned]
    side = level = position = None
    anterior = False
    for tok in re.split(r"[ ]+", cleaned):
        tok = tok.strip("-")
        if not tok:
            continue
        if tok in _SIDE_TOKENS and side is None:
            side = _SIDE_TOKENS[tok]
        elif tok in _LEVEL_TOKENS:
            level = _LEVEL_TOKENS[tok]
        elif tok in _POSITION_TOKENS:
            position = _POSITION_TOKENS[tok]
        elif tok in _ANTERIOR_TOKENS:
            anterior = True
        elif tok in ("prostate", "core", "cores", "zone", "region", "of", "the", "and"):
            continue
        else:
            raise UnknownRegionError(f"unrecognized token {tok!r} in region {text!r}")
    if side is None:
        raise UnknownRegionError(f"no side in region {text!r}")
    if anterior:
        if level not in (None, "apex") or position is not None:
            raise UnknownRegionError(f"ambiguous anterior region {text!r}")
        return f"{side}_anterior_apex"
    if level is None or position is None:
        raise UnknownRegionError(f"incomplete region {text!r}")
    return f"{side}_{level}_{position}"


def region_side(region: str) -> str:
    return region.split("_", 1)[0]


def display_region(region: str) -> str:
    """'left_apex_medial' -> 'left apex medial'."""
    return region.replace("_", " ")
