"""The feature generation agents and their orchestrator."""

from .discovery import DiscoveryResult, EmptyDiscoveryError, dedupe_proposals, discover, sample_notes
from .extraction import ExtractionResult, extract, extract_all
from .loop import LoopResult, LoopState, run_validation_loop, transition
from .orchestrator import OrchestratorConfig, RunResult, cell_error_rate, orchestrate, write_run
from .postprocess import PostProcessError, apply_operations, post_process
from .specs import REFERENCE_PROGRAMS, FeatureSpec, feature_id, reference_specs
from .validation import ValidationDecision, draw_sample, validate

__all__ = [
    "DiscoveryResult", "EmptyDiscoveryError", "ExtractionResult", "FeatureSpec", "LoopResult", "LoopState",
    "OrchestratorConfig", "PostProcessError", "REFERENCE_PROGRAMS", "RunResult", "ValidationDecision",
    "apply_operations", "cell_error_rate", "dedupe_proposals", "discover", "draw_sample", "extract",
    "extract_all", "feature_id", "orchestrate", "post_process", "reference_specs", "run_validation_loop",
    "sample_notes", "transition", "validate", "write_run",
]
