"""Nested cross-validation with a leakage guard.

Every fitted artifact (imputation means, standardization, text vocabulary and
SVD, the chosen penalty) comes from the training partition of the split it
is used on; ``LeakageGuard`` checks this on every fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .._seeding import derive_seed
from ..rfg import corpus_fingerprint
from .logreg import LogRegFit, ModelConfig, fit_logreg
from .metrics import auc_roc
from .preprocess import mean_impute_apply, mean_impute_fit, rows_fingerprint, standardize_apply, standardize_fit

PER_SEED_STATISTICS = ("mean", "pooled")


class StratificationError(ValueError):
    pass


class LeakageError(AssertionError):
    pass


@dataclass(frozen=True)
class CvConfig:
    outer_folds: int = 3
    inner_folds: int = 3
    seeds: tuple[int, ...] = tuple(range(50))
    stratified: bool = True
    per_seed: str = "mean"

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.outer_folds < 2 or self.inner_folds < 2:
            raise ValueError("fold counts must be at least 2")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if self.per_seed not in PER_SEED_STATISTICS:
            raise ValueError(f"per_seed must be one of {PER_SEED_STATISTICS}")


class Featurizer(Protocol):
    fit_fingerprint: str | None

    def fit(self, docs: Sequence[str]) -> "Featurizer": ...

    def transform(self, docs: Sequence[str]) -> np.ndarray: ...


@dataclass
class TextFeatures:
    """Per-patient documents plus a factory for a featurizer fitted inside each training split."""

    docs: Sequence[str]
    factory: Callable[[], Featurizer]


class LeakageGuard:
    def __init__(self):
        self.records: list[tuple[str, str]] = []

    def check(self, artifact: str, fit_rows, train, test) -> None:
        fit, tr, te = set(map(int, fit_rows)), set(map(int, train)), set(map(int, test))
        if tr & te:
            raise LeakageError(f"{artifact}: training and evaluation rows overlap")
        if not fit <= tr or fit & te:
            raise LeakageError(f"{artifact}: fitted on rows outside the training partition")
        self.records.append((artifact, rows_fingerprint(fit)))


def stratified_folds(y, k: int, seed: int, stratified: bool = True) -> list[np.ndarray]:
    """Test-index arrays of k folds; each class is shuffled and dealt round robin."""
    y = np.asarray(y)
    rng = np.random.default_rng(derive_seed(seed, "folds", k))
    if not stratified:
        return [np.sort(f) for f in np.array_split(rng.permutation(len(y)), k)]
    n_pos, n_neg = int((y == 1).sum()), int((y == 0).sum())
    if n_pos < k or n_neg < k:
        raise StratificationError(
            f"cannot stratify {k} folds with {n_pos} positives and {n_neg} negatives"
        )
    order = np.concatenate([rng.permutation(np.flatnonzero(y == 1)), rng.permutation(np.flatnonzero(y == 0))])
    return [np.sort(order[i::k]) for i in range(k)]


def _prepare(X, train, test, text: TextFeatures | None, guard: LeakageGuard) -> tuple[np.ndarray, np.ndarray]:
    imp = mean_impute_fit(X[train])
    guard.check("imputation", train, train, test)
    Xtr, Xte = mean_impute_apply(imp, X[train]), mean_impute_apply(imp, X[test])
    if text is not None:
        docs_tr = [text.docs[i] for i in train]
        feat = text.factory().fit(docs_tr)
        if feat.fit_fingerprint != corpus_fingerprint(docs_tr):
            raise LeakageError("text featurizer was not fitted on the training documents")
        guard.check("text featurizer", train, train, test)
        Ztr = feat.transform(docs_tr)
        Zte = feat.transform([text.docs[i] for i in test])
        if feat.fit_fingerprint != corpus_fingerprint(docs_tr):
            raise LeakageError("text featurizer changed while transforming")
        Xtr, Xte = np.hstack([Xtr, Ztr]), np.hstack([Xte, Zte])
    st = standardize_fit(Xtr)
    guard.check("standardization", train, train, test)
    return standardize_apply(st, Xtr), standardize_apply(st, Xte)


def _path(Xtr, ytr, penalty: str, cfg: ModelConfig) -> list[LogRegFit]:
    """Fits along the ascending lambda grid, each warm-started from the previous one."""
    fits, prev = [], None
    for lam in cfg.lambda_grid:
        prev = fit_logreg(Xtr, ytr, penalty, lam, cfg.max_iter, cfg.tol, cfg.strength, warm_start=prev)
        fits.append(prev)
    return fits


@dataclass
class FoldResult:
    seed: int
    fold: int
    auc: float
    penalty: str
    lam: float
    inner_auc: float
    converged: bool
    n_train: int
    n_test: int


@dataclass
class NestedCvResult:
    seed: int
    folds: list[FoldResult]
    oof_scores: np.ndarray
    labels: np.ndarray
    per_seed: str = "mean"
    guard: LeakageGuard = field(default_factory=LeakageGuard, repr=False)

    @property
    def fold_aucs(self) -> list[float]:
        return [f.auc for f in self.folds]

    @property
    def seed_auc(self) -> float:
        if self.per_seed == "pooled":
            return auc_roc(self.oof_scores, self.labels)
        return float(np.mean(self.fold_aucs))


def select_model(X, y, train, cfg: ModelConfig, cv: CvConfig, seed: int, text, guard) -> tuple[str, float, float]:
    """Inner grid search over (penalty, lambda) by mean validation AUC.

    Ties go to the earlier candidate: penalties in config order, then smaller
    lambda (stronger regularization).
    """
    inner = stratified_folds(y[train], cv.inner_folds, seed, cv.stratified)
    scores = {(p, lam): [] for p in cfg.penalties for lam in cfg.lambda_grid}
    for val_local in inner:
        tr = np.setdiff1d(train, train[val_local])
        val = train[val_local]
        Xtr, Xval = _prepare(X, tr, val, text, guard)
        for p in cfg.penalties:
            for fit in _path(Xtr, y[tr], p, cfg):
                scores[(p, fit.lam)].append(auc_roc(fit.decision_function(Xval), y[val]))
    best, best_auc = None, -np.inf
    for key, vals in scores.items():
        m = float(np.mean(vals))
        if m > best_auc + 1e-12:
            best, best_auc = key, m
    return best[0], best[1], best_auc


def nested_cv(
    X,
    y,
    model: ModelConfig | None = None,
    cv: CvConfig | None = None,
    seed: int = 0,
    text: TextFeatures | None = None,
) -> NestedCvResult:
    model = model or ModelConfig()
    cv = cv or CvConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != len(y):
        raise ValueError("matrix rows and labels differ in length")
    if text is not None and len(text.docs) != len(y):
        raise ValueError("document count differs from label count")
    guard = LeakageGuard()
    oof = np.full(len(y), np.nan)
    results = []
    for k, test in enumerate(stratified_folds(y, cv.outer_folds, seed, cv.stratified)):
        train = np.setdiff1d(np.arange(len(y)), test)
        penalty, lam, inner_auc = select_model(X, y, train, model, cv, derive_seed(seed, "inner", k), text, guard)
        Xtr, Xte = _prepare(X, train, test, text, guard)
        fit = fit_logreg(Xtr, y[train], penalty, lam, model.max_iter, model.tol, model.strength)
        scores = fit.decision_function(Xte)
        oof[test] = scores
        results.append(FoldResult(seed, k, auc_roc(scores, y[test]), penalty, lam, inner_auc, fit.converged,
                                  len(train), len(test)))
    return NestedCvResult(seed, results, oof, y, cv.per_seed, guard)
