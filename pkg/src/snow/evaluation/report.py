"""Seed repetition and report files."""

from __future__ import annotations

import csv
import io
import json
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .._seeding import derive_seed
from .cv import CvConfig, FoldResult, NestedCvResult, TextFeatures, nested_cv
from .logreg import ModelConfig


class SeedFailure(RuntimeError):
    def __init__(self, seed: int, cause: BaseException):
        self.seed = seed
        super().__init__(f"seed {seed} failed: {cause}")


@dataclass
class AucReport:
    feature_set: str
    seeds: list[int]
    seed_aucs: list[float]
    folds: list[FoldResult]
    n_features: int = 0

    @property
    def mean(self) -> float:
        return float(np.mean(self.seed_aucs))

    @property
    def sd(self) -> float | None:
        """Sample SD across seeds; None (not applicable) for a single seed."""
        return float(np.std(self.seed_aucs, ddof=1)) if len(self.seed_aucs) > 1 else None

    def quantiles(self) -> dict[str, float]:
        q = np.quantile(self.seed_aucs, [0.0, 0.25, 0.5, 0.75, 1.0])
        return dict(zip(("min", "q1", "median", "q3", "max"), (float(v) for v in q)))

    def summary(self) -> dict:
        return {
            "feature_set": self.feature_set,
            "n_seeds": len(self.seeds),
            "n_features": self.n_features,
            "mean": round(self.mean, 6),
            "sd": None if self.sd is None else round(self.sd, 6),
            "quantiles": {k: round(v, 6) for k, v in self.quantiles().items()},
        }


def permuted_labels(y, seed: int) -> np.ndarray:
    """Labels shuffled with a permutation that depends only on ``seed``."""
    return np.random.default_rng(derive_seed(seed, "null-permutation")).permutation(np.asarray(y))


def _one(args) -> NestedCvResult:
    X, y, model, cv, seed, text, permute = args
    try:
        return nested_cv(X, permuted_labels(y, seed) if permute else y, model, cv, seed, text)
    except Exception as exc:
        raise SeedFailure(seed, exc) from exc


def repeat_seeds(
    X,
    y,
    feature_set: str,
    model: ModelConfig | None = None,
    cv: CvConfig | None = None,
    text: TextFeatures | None = None,
    jobs: int = 1,
    permute: bool = False,
) -> AucReport:
    """Nested CV once per seed; seeds are processed in sorted order so the report ignores their listing order.

    With ``permute`` every seed sees its own random relabeling (null model).
    """
    model = model or ModelConfig()
    cv = cv or CvConfig()
    seeds = sorted(cv.seeds)
    jobs_args = [(X, y, model, cv, s, text, permute) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_one, jobs_args))
    else:
        results = [_one(a) for a in jobs_args]
    n_feat = int(np.asarray(X).shape[1])
    return AucReport(feature_set, seeds, [r.seed_auc for r in results], [f for r in results for f in r.folds], n_feat)


def slug(label: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", label.lower()).strip("_")


def per_seed_csv(report: AucReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "auc", "fold_aucs", "chosen_penalties", "chosen_lambdas"])
    by_seed: dict[int, list[FoldResult]] = {}
    for f in report.folds:
        by_seed.setdefault(f.seed, []).append(f)
    for seed, auc in zip(report.seeds, report.seed_aucs):
        folds = sorted(by_seed[seed], key=lambda f: f.fold)
        w.writerow([seed, f"{auc:.6f}", ";".join(f"{f.auc:.6f}" for f in folds),
                    ";".join(f.penalty for f in folds), ";".join(f"{f.lam:g}" for f in folds)])
    return buf.getvalue()


def per_fold_csv(reports: Sequence[AucReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature_set", "seed", "fold", "auc", "chosen_penalty", "chosen_lambda", "inner_auc", "converged"])
    for r in reports:
        for f in sorted(r.folds, key=lambda f: (f.seed, f.fold)):
            w.writerow([r.feature_set, f.seed, f.fold, f"{f.auc:.6f}", f.penalty, f"{f.lam:g}",
                        f"{f.inner_auc:.6f}", int(f.converged)])
    return buf.getvalue()


def plot_data_csv(reports: Sequence[AucReport]) -> str:
    """Long format, one row per (feature set, seed), plus quantile columns for box plots."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature_set", "seed", "auc", "min", "q1", "median", "q3", "max"])
    for r in reports:
        q = r.quantiles()
        for seed, auc in zip(r.seeds, r.seed_aucs):
            w.writerow([r.feature_set, seed, f"{auc:.6f}"] + [f"{q[k]:.6f}" for k in ("min", "q1", "median", "q3", "max")])
    return buf.getvalue()


def write_reports(reports: Sequence[AucReport], out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    for r in reports:
        p = out / f"per_seed_{slug(r.feature_set)}.csv"
        p.write_text(per_seed_csv(r), encoding="utf-8")
        paths[f"per_seed:{r.feature_set}"] = p
    paths["per_fold"] = out / "per_fold.csv"
    paths["per_fold"].write_text(per_fold_csv(reports), encoding="utf-8")
    paths["plot_data"] = out / "plot_data.csv"
    paths["plot_data"].write_text(plot_data_csv(reports), encoding="utf-8")
    paths["summary"] = out / "summary.json"
    paths["summary"].write_text(json.dumps({"feature_sets": [r.summary() for r in reports]}, indent=2) + "\n",
                                encoding="utf-8")
    return paths
