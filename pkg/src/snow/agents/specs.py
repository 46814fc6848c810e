"""Feature specifications and the reference prostate-biopsy feature table."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from ..regions import REGIONS

STATUSES = ("proposed", "extracting", "validating", "accepted", "removed")

_BENIGN = "Benign regions (e.g. 'BENIGN PROSTATIC GLANDS AND STROMA') are coded 0."


def feature_id(name: str) -> str:
    """Normalize a proposed name: case, spaces, hyphens and underscores collapse."""
    return re.sub(r"[^a-z0-9]+", "_", name.strip().lower()).strip("_")


@dataclass
class FeatureSpec:
    name: str
    description: str = ""
    instructions: str = ""
    subgroups: tuple[str, ...] = ()
    aggregated: bool = False
    aggregation_sources: tuple[str, ...] = ()
    note_kinds: tuple[str, ...] = ("biopsy_report", "progress_note")
    status: str = "proposed"
    revision: int = 0
    instruction_history: list[str] = field(default_factory=list)
    value_kind: str = "number"  # number | binary | count | percentage
    program: str | None = None
    removal_reason: str | None = None

    def __post_init__(self):
        self.name = feature_id(self.name)
        self.subgroups = tuple(self.subgroups)
        self.aggregation_sources = tuple(feature_id(s) for s in self.aggregation_sources)
        self.note_kinds = tuple(self.note_kinds)
        if self.aggregated and not self.aggregation_sources:
            raise ValueError(f"aggregated feature {self.name} has no aggregation sources")
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if not self.instruction_history and self.instructions:
            self.instruction_history = [self.instructions]

    @property
    def display_name(self) -> str:
        return self.name.replace("_", " ")

    def revise(self, instructions: str) -> None:
        self.instructions = instructions
        self.instruction_history.append(instructions)
        self.revision += 1

    def copy(self) -> "FeatureSpec":
        return replace(self, instruction_history=list(self.instruction_history))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "instructions": self.instructions,
            "subgroups": list(self.subgroups),
            "aggregated": self.aggregated,
            "aggregation_sources": list(self.aggregation_sources),
            "note_kinds": list(self.note_kinds),
            "value_kind": self.value_kind,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(
            name=d["name"],
            description=d.get("description", ""),
            instructions=d.get("instructions", ""),
            subgroups=tuple(d.get("subgroups") or ()),
            aggregated=bool(d.get("aggregated", False)),
            aggregation_sources=tuple(d.get("aggregation_sources") or ()),
            note_kinds=tuple(d.get("note_kinds") or ("biopsy_report", "progress_note")),
            value_kind=d.get("value_kind", "number"),
        )


_BIOPSY = ("biopsy_report",)

REFERENCE_TABLE: tuple[dict, ...] = (
    dict(
        name="gleason score primary",
        subgroups=REGIONS,
        description="Primary Gleason pattern (1-5) for each prostate region; the predominant pattern observed.",
        instructions="Extract the first number of the Gleason pattern (the 4 in 'Gleason 4+3=7') for each region. " + _BENIGN,
    ),
    dict(
        name="gleason score secondary",
        subgroups=REGIONS,
        description="Secondary Gleason pattern (1-5) for each prostate region.",
        instructions="Extract the second number of the Gleason pattern (the 3 in 'Gleason 4+3=7') for each region. " + _BENIGN,
    ),
    dict(
        name="gleason score sum",
        subgroups=REGIONS,
        description="Total Gleason score (2-10) for each prostate region.",
        instructions="Extract the total Gleason score (the 7 in 'Gleason 4+3=7') for each region. " + _BENIGN,
    ),
    dict(
        name="tumor percentage",
        subgroups=REGIONS,
        value_kind="percentage",
        description="Percentage of the core involved by tumor for each prostate region.",
        instructions="Extract the percentage from phrases such as 'COMPRISING 50% OF THE CORE'. " + _BENIGN,
    ),
    dict(
        name="cancer presence",
        subgroups=REGIONS,
        value_kind="binary",
        description="Whether cancer is present in each prostate region.",
        instructions="Code 1 if cancer is found in the region (e.g. 'PROSTATIC ADENOCARCINOMA'), 0 if the region is benign.",
    ),
    dict(
        name="total cores count",
        value_kind="count",
        description="Total number of biopsy regions sampled.",
        instructions="Count the regions sampled in the report.",
    ),
    dict(
        name="intraductal carcinoma presence",
        value_kind="binary",
        description="Presence of intraductal carcinoma.",
        instructions="Code 1 if 'INTRADUCTAL CARCINOMA' appears in any region description, otherwise 0.",
    ),
    dict(
        name="prostate volume",
        description="Prostate volume in cubic centimeters measured at biopsy.",
        instructions="Extract the number following 'Volume =' or similar phrasing in the operative findings.",
    ),
    dict(
        name="psa pre biopsy",
        description="PSA level immediately before biopsy.",
        instructions="Extract the most recent PSA value in the clinical history before the biopsy date.",
    ),
    dict(
        name="max gleason score primary",
        aggregated=True,
        aggregation_sources=("gleason score primary",),
        description="Maximum primary Gleason pattern across sampled regions.",
        instructions="Maximum of the primary Gleason pattern across all sampled regions.",
    ),
    dict(
        name="max gleason score secondary",
        aggregated=True,
        aggregation_sources=("gleason score secondary",),
        description="Maximum secondary Gleason pattern across sampled regions.",
        instructions="Maximum of the secondary Gleason pattern across all sampled regions.",
    ),
    dict(
        name="max gleason score sum",
        aggregated=True,
        aggregation_sources=("gleason score sum",),
        description="Maximum total Gleason score across sampled regions.",
        instructions="Maximum of the total Gleason score across all sampled regions.",
    ),
    dict(
        name="max tumor percentage",
        aggregated=True,
        value_kind="percentage",
        aggregation_sources=("tumor percentage",),
        description="Maximum percentage of a core involved by tumor.",
        instructions="Maximum tumor percentage across all sampled regions.",
    ),
    dict(
        name="positive cores count",
        aggregated=True,
        value_kind="count",
        aggregation_sources=("cancer presence",),
        description="Number of sampled regions positive for cancer.",
        instructions="Count the regions with any cancer finding.",
    ),
    dict(
        name="percentage positive cores",
        aggregated=True,
        value_kind="percentage",
        aggregation_sources=("positive cores count", "total cores count"),
        description="Percentage of sampled regions positive for cancer.",
        instructions="(positive cores count / total cores count) * 100.",
    ),
    dict(
        name="bilateral disease",
        aggregated=True,
        value_kind="binary",
        aggregation_sources=("cancer presence",),
        description="Cancer on both the left and right sides.",
        instructions="Code 1 if cancer is found in at least one region on each side, otherwise 0.",
    ),
)

# Reference aggregation programs, keyed by feature id.
REFERENCE_PROGRAMS: dict[str, str] = {
    "max_gleason_score_primary": "max(gleason_score_primary.*)",
    "max_gleason_score_secondary": "max(gleason_score_secondary.*)",
    "max_gleason_score_sum": "max(gleason_score_sum.*)",
    "max_tumor_percentage": "max(tumor_percentage.*)",
    "positive_cores_count": "count_nonzero(cancer_presence.*)",
    "percentage_positive_cores": "100 * positive_cores_count / total_cores_count",
    "bilateral_disease": "any(cancer_presence.left_*) and any(cancer_presence.right_*)",
}


def reference_specs() -> list[FeatureSpec]:
    """Fresh copies of the 16 reference feature specifications."""
    out = []
    for row in REFERENCE_TABLE:
        row = dict(row)
        row.setdefault("note_kinds", _BIOPSY)
        out.append(FeatureSpec(**row))
    return out


BASE_FEATURES = tuple(s.name for s in reference_specs() if not s.aggregated)
AGGREGATE_FEATURES = tuple(s.name for s in reference_specs() if s.aggregated)
REGION_FEATURES = tuple(s.name for s in reference_specs() if s.subgroups)
