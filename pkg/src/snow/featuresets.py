"""Named feature sets for evaluation: baseline plus one block of note-derived features."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from .cohort import FeatureMatrix
from .evaluation.cv import TextFeatures
from .rfg import DEFAULT_MIN_DF, DEFAULT_RANK, VARIANTS, RfgFeaturizer, parse_variant

BLOCKS = ("snow", "clfg", "cfg-import")
FEATURE_SETS = ("baseline",) + tuple(f"baseline+{b}" for b in BLOCKS) + tuple(f"baseline+rfg:{v}" for v in VARIANTS)


class FeatureSetError(ValueError):
    pass


def parse_feature_set(label: str) -> tuple[str, str | None]:
    """``"baseline+rfg:tfidf-3"`` to ("rfg", "tfidf-3"); ``"baseline"`` to ("baseline", None)."""
    if label == "baseline":
        return "baseline", None
    if not label.startswith("baseline+"):
        raise FeatureSetError(f"unknown feature set {label!r}; valid: {', '.join(FEATURE_SETS)}")
    block = label[len("baseline+"):]
    if block in BLOCKS:
        return block, None
    if block.startswith("rfg:"):
        try:
            parse_variant(block[4:])
        except ValueError:
            raise FeatureSetError(f"unknown feature set {label!r}; valid: {', '.join(FEATURE_SETS)}") from None
        return "rfg", block[4:]
    raise FeatureSetError(f"unknown feature set {label!r}; valid: {', '.join(FEATURE_SETS)}")


@dataclass
class FeatureSources:
    """Everything a feature set may draw from, aligned on ``patient_ids``."""

    patient_ids: tuple[str, ...]
    baseline: FeatureMatrix
    blocks: dict[str, FeatureMatrix] = field(default_factory=dict)
    documents: Sequence[str] | None = None
    rfg_rank: int = DEFAULT_RANK
    rfg_min_df: int = DEFAULT_MIN_DF

    def needs(self, label: str) -> str:
        return parse_feature_set(label)[0]

    def build(self, label: str, seed: int = 0) -> tuple[np.ndarray, tuple[str, ...], TextFeatures | None]:
        """Design matrix, its column names, and the text block to fit per fold (RFG only)."""
        block, variant = parse_feature_set(label)
        base = self.baseline.reindex(self.patient_ids)
        if block == "baseline":
            return base.values, base.columns, None
        if block == "rfg":
            if self.documents is None:
                raise FeatureSetError(f"{label} needs patient documents")
            factory = partial(RfgFeaturizer.from_variant, variant, rank=self.rfg_rank, min_df=self.rfg_min_df, seed=seed)
            weighting, n_max = parse_variant(variant)
            cols = base.columns + tuple(f"rfg_{weighting}{n_max}_svd{i}" for i in range(self.rfg_rank))
            return base.values, cols, TextFeatures(list(self.documents), factory)
        if block not in self.blocks:
            raise FeatureSetError(f"{label} needs the {block} feature matrix")
        other = self.blocks[block]
        missing = set(self.patient_ids) - set(other.patient_ids)
        if missing:
            raise FeatureSetError(f"{block} matrix lacks {len(missing)} patients, e.g. {sorted(missing)[:3]}")
        clash = set(base.columns) & set(other.columns)
        if clash:
            other = FeatureMatrix(other.patient_ids, tuple(f"{block}:{c}" for c in other.columns), other.values)
        m = base.hstack(other)
        return m.values, m.columns, None
