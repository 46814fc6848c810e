"""Train-only imputation and standardization."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


def rows_fingerprint(rows) -> str:
    return hashlib.sha256(np.asarray(sorted(int(r) for r in rows), dtype=np.int64).tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class MeanImputer:
    means: np.ndarray
    empty_columns: tuple[int, ...] = ()


def mean_impute_fit(X: np.ndarray) -> MeanImputer:
    X = np.asarray(X, dtype=float)
    observed = ~np.isnan(X)
    counts = observed.sum(axis=0)
    sums = np.where(observed, X, 0.0).sum(axis=0)
    empty = tuple(int(j) for j in np.flatnonzero(counts == 0))
    if empty:
        log.warning("columns %s have no observed training values; imputing 0", list(empty))
    means = np.divide(sums, counts, out=np.zeros(X.shape[1]), where=counts > 0)
    return MeanImputer(means, empty)


def mean_impute_apply(imp: MeanImputer, X: np.ndarray) -> np.ndarray:
    X = np.array(X, dtype=float)
    if X.shape[1] != len(imp.means):
        raise ValueError("column count differs from the fitted imputer")
    miss = np.isnan(X)
    X[miss] = np.broadcast_to(imp.means, X.shape)[miss]
    return X


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray


def standardize_fit(X: np.ndarray) -> Standardizer:
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    return Standardizer(mean, np.where(sd > 1e-12, sd, 1.0))


def standardize_apply(st: Standardizer, X: np.ndarray) -> np.ndarray:
    return (X - st.mean) / st.scale
