"""Synthetic cohorts, ground-truth manifests and the manifest-backed mock backend."""

from .config import DEFAULT_SIGNAL, OBSTACLES, ConfigError, GeneratorConfig
from .generator import CFG_COLUMNS, GenerationError, SyntheticCohort, generate, planted_labels
from .mock import ManifestMismatchError, ManifestResponder, failure_mode, mock_rules
from .render import RenderError, region_label
from .truth import AGGREGATE_ORDER, SNOW_COLUMNS, Manifest, hand_aggregates

__all__ = [
    "AGGREGATE_ORDER", "CFG_COLUMNS", "ConfigError", "DEFAULT_SIGNAL", "GenerationError", "GeneratorConfig",
    "Manifest", "ManifestMismatchError", "ManifestResponder", "OBSTACLES", "RenderError", "SNOW_COLUMNS",
    "SyntheticCohort", "failure_mode", "generate", "hand_aggregates", "mock_rules", "planted_labels",
    "region_label",
]
