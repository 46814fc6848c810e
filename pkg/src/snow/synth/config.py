"""Generator configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

OBSTACLES = (
    "region_alias_styles",
    "separator_styles",
    "combined_core_reporting",
    "outside_slide_layout",
    "unit_mm_cm_mixing",
    "negation_phrasings",
)

# Log-odds weight per standardized true feature. Only the first five come
# from the notes; the last two are baseline (structured) fields, kept weak so
# note-derived features carry most of the signal.
DEFAULT_SIGNAL = {
    "percentage_positive_cores": 1.2,
    "max_gleason_score_sum": 1.0,
    "max_tumor_percentage": 0.7,
    "intraductal_carcinoma_presence": 0.6,
    "prostate_volume": -0.4,
    "max_pre_psa": 0.35,
    "age": 0.1,
}


class ConfigError(ValueError):
    pass


@dataclass
class GeneratorConfig:
    n_patients: int = 147
    seed: int = 0
    bf_prevalence: float = 0.075
    obstacles: dict[str, bool] = field(default_factory=lambda: {k: True for k in OBSTACLES})
    signal: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_SIGNAL))
    signal_scale: float = 1.0
    mock_error_rate: float = 0.0
    prostatectomy_fraction: float = 0.5
    anterior_apex_rate: float = 0.3
    stage_missing_rate: float = 0.09

    def __post_init__(self):
        if self.n_patients < 2:
            raise ConfigError("n_patients must be at least 2")
        if not 0 < self.bf_prevalence < 1:
            raise ConfigError("bf_prevalence must lie in (0, 1)")
        if not 0 <= self.mock_error_rate < 1:
            raise ConfigError("mock_error_rate must lie in [0, 1)")
        unknown = set(self.obstacles) - set(OBSTACLES)
        if unknown:
            raise ConfigError(f"unknown obstacle toggles: {sorted(unknown)}")
        self.obstacles = {k: bool(self.obstacles.get(k, True)) for k in OBSTACLES}
        unknown = set(self.signal) - set(DEFAULT_SIGNAL)
        if unknown:
            raise ConfigError(f"signal refers to unknown features: {sorted(unknown)}")
        k = self.n_positive
        if k < 1 or k > self.n_patients - 1:
            lo, hi = 0.5 / self.n_patients, (self.n_patients - 0.5) / self.n_patients
            raise ConfigError(
                f"prevalence {self.bf_prevalence} gives {k} positives of {self.n_patients}; "
                f"achievable range is [{lo:.4f}, {hi:.4f})"
            )

    @property
    def n_positive(self) -> int:
        return int(round(self.n_patients * self.bf_prevalence))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown generator settings: {sorted(extra)}")
        return cls(**d)
