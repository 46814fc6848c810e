from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


class UndefinedAucError(ValueError):
    pass


def auc_roc(scores, labels) -> float:
    """Mann-Whitney AUC: (concordant + 0.5 * tied positive/negative pairs) / (n_pos * n_neg)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-d and the same length")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAucError(f"AUC needs both classes (positives={n_pos}, negatives={n_neg})")
    ranks = rankdata(s)  # average ranks give ties half credit
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))
