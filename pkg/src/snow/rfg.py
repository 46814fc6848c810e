"""Bag-of-words note features: preprocessing, n-gram vocabularies, TF-IDF and
randomized truncated SVD.

Everything that is fitted (vocabulary, idf, SVD projection) lives in
``RfgFeaturizer`` so the evaluation harness can fit it on training folds only.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .cohort import ClinicalNote, PatientRecord

log = logging.getLogger(__name__)

WEIGHTINGS = ("count", "tfidf")
N_MAX_CHOICES = (2, 3, 4)
DEFAULT_MIN_DF = 2
DEFAULT_RANK = 20
OVERSAMPLING = 10
POWER_ITERATIONS = 7
MAX_POWER_ITERATIONS = 500
ENERGY_TOL = 1e-12

# Common English function words.
STOPWORDS = frozenset("""
a about above after again against all am an and any are as at be because been before being below
between both but by can could did do does doing down during each few for from further had has have
having he her here hers herself him himself his how i if in into is it its itself just me more most
my myself no nor not now of off on once only or other our ours ourselves out over own same she
should so some such than that the their theirs them themselves then there these they this those
through to too under until up very was we were what when where which while who whom why will with
would you your yours yourself yourselves
""".split())

_TOKEN = re.compile(r"[a-z0-9]+")

# (suffix, replacement, minimum stem length left after stripping); first match wins
_SUFFIX_RULES = (
    ("sses", "ss", 2),
    ("ies", "y", 2),
    ("ss", "ss", 0),
    ("us", "us", 0),
    ("is", "is", 0),
    ("ings", "", 3),
    ("ing", "", 3),
    ("edly", "", 3),
    ("ed", "", 3),
    ("ly", "", 3),
    ("s", "", 3),
)


class VocabularyError(ValueError):
    pass


def stem(token: str) -> str:
    """Strip one common English inflectional suffix; digits and short words pass through."""
    if token.isdigit() or len(token) <= 3:
        return token
    for suffix, repl, min_stem in _SUFFIX_RULES:
        if token.endswith(suffix):
            base = token[: len(token) - len(suffix)]
            if len(base) >= min_stem:
                return base + repl
            return token
    return token


def preprocess(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop stopwords, stem."""
    return [stem(t) for t in _TOKEN.findall(text.lower()) if t not in STOPWORDS]


def ngrams(tokens: Sequence[str], n_max: int) -> list[str]:
    out = []
    for n in range(1, n_max + 1):
        out.extend(" ".join(tokens[i:i + n]) for i in range(len(tokens) - n + 1))
    return out


def corpus_fingerprint(docs: Iterable[str]) -> str:
    h = hashlib.sha256()
    for d in docs:
        h.update(hashlib.sha256(d.encode("utf-8")).digest())
    return h.hexdigest()


@dataclass(frozen=True)
class Vocabulary:
    index: dict[str, int]
    n_max: int
    df: np.ndarray
    n_docs: int
    fingerprint: str

    def __len__(self) -> int:
        return len(self.index)

    @property
    def idf(self) -> np.ndarray:
        return np.log((1.0 + self.n_docs) / (1.0 + self.df)) + 1.0


def fit_vocab(corpus: Sequence[str], n_max: int = 2, min_df: int = DEFAULT_MIN_DF) -> Vocabulary:
    if not corpus:
        raise VocabularyError("cannot fit a vocabulary on an empty corpus")
    if n_max < 1:
        raise VocabularyError("n_max must be at least 1")
    counts: dict[str, int] = {}
    for doc in corpus:
        for g in set(ngrams(preprocess(doc), n_max)):
            counts[g] = counts.get(g, 0) + 1
    kept = sorted(g for g, c in counts.items() if c >= min_df)
    if not kept:
        raise VocabularyError(f"no n-gram reaches document frequency {min_df}")
    return Vocabulary(
        {g: i for i, g in enumerate(kept)},
        n_max,
        np.array([counts[g] for g in kept], dtype=float),
        len(corpus),
        corpus_fingerprint(corpus),
    )


@dataclass(frozen=True)
class DocVector:
    indices: np.ndarray
    weights: np.ndarray
    weighting: str

    def dense(self, size: int) -> np.ndarray:
        out = np.zeros(size)
        out[self.indices] = self.weights
        return out


def vectorize(doc: str, vocab: Vocabulary, weighting: str = "count") -> DocVector:
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}")
    tf: dict[int, int] = {}
    for g in ngrams(preprocess(doc), vocab.n_max):
        j = vocab.index.get(g)
        if j is not None:
            tf[j] = tf.get(j, 0) + 1
    idx = np.array(sorted(tf), dtype=np.int64)
    w = np.array([tf[j] for j in idx], dtype=float)
    if weighting == "tfidf" and len(idx):
        w = w * vocab.idf[idx]
        w = w / np.linalg.norm(w)
    return DocVector(idx, w, weighting)


def vectorize_corpus(docs: Sequence[str], vocab: Vocabulary, weighting: str = "count") -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for i, d in enumerate(docs):
        v = vectorize(d, vocab, weighting)
        rows.extend([i] * len(v.indices))
        cols.extend(v.indices.tolist())
        vals.extend(v.weights.tolist())
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(docs), len(vocab)))


@dataclass(frozen=True)
class SvdModel:
    components: np.ndarray  # k x V, orthonormal rows
    singular_values: np.ndarray
    power_iterations: int

    @property
    def k(self) -> int:
        return len(self.singular_values)

    def transform(self, X) -> np.ndarray:
        return np.asarray(X @ self.components.T)


def truncated_svd(X, k: int, seed: int = 0, oversampling: int = OVERSAMPLING,
                  power_iterations: int = POWER_ITERATIONS) -> tuple[np.ndarray, SvdModel]:
    """Rank-k SVD by seeded randomized subspace iteration.

    Runs at least ``power_iterations`` rounds and keeps iterating until the
    captured top-k energy stops changing, so slowly decaying spectra still
    converge. Returns (scores = U_k S_k, model).
    """
    n, m = X.shape
    if not 1 <= k <= min(n, m):
        raise ValueError(f"k={k} must lie in [1, {min(n, m)}] for a {n}x{m} matrix")
    A = X.tocsr() if sp.issparse(X) else np.asarray(X, dtype=float)
    ell = min(k + oversampling, min(n, m))
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(A @ rng.standard_normal((m, ell)))
    prev = None
    it = 0
    while True:
        it += 1
        Z, _ = np.linalg.qr(A.T @ Q)
        Q, _ = np.linalg.qr(A @ Z)
        s = np.linalg.svd(np.asarray((A.T @ Q).T), compute_uv=False)
        energy = float(np.sum(s[:k] ** 2))
        done = prev is not None and abs(energy - prev) <= ENERGY_TOL * max(energy, 1e-300)
        prev = energy
        if (it >= power_iterations and done) or it >= MAX_POWER_ITERATIONS:
            break
    B = np.asarray((A.T @ Q).T)
    Ub, s, Vt = np.linalg.svd(B, full_matrices=False)
    Vt = Vt[:k]
    # deterministic signs: largest-magnitude loading of each component positive
    flip = np.sign(Vt[np.arange(k), np.argmax(np.abs(Vt), axis=1)])
    flip[flip == 0] = 1.0
    Vt = Vt * flip[:, None]
    model = SvdModel(Vt, s[:k], it)
    return model.transform(A), model


# -- per-patient documents ---------------------------------------------------

def patient_document(patient: PatientRecord, context_kinds: Sequence[str] = ("progress_note",),
                     report_kinds: Sequence[str] = ("biopsy_report",)) -> str:
    """Biopsy report(s) plus the pre-treatment clinical note closest to treatment start."""
    pre = patient.pre_treatment_notes()
    reports = [n for n in pre if n.kind in report_kinds]
    context = [n for n in pre if n.kind in context_kinds]
    chosen: list[ClinicalNote] = list(reports)
    if context:
        start = patient.treatment.start
        chosen.append(min(context, key=lambda n: ((start - n.date).days, n.note_id)))
    chosen.sort(key=lambda n: (n.date, n.note_id))
    return "\n\n".join(n.text for n in chosen)


def parse_variant(variant: str) -> tuple[str, int]:
    """``"count-2"`` or ``"tfidf-4"`` to (weighting, n_max)."""
    try:
        weighting, n = variant.split("-")
        n_max = int(n)
    except ValueError:
        raise ValueError(f"bad variant {variant!r}; expected <count|tfidf>-<2|3|4>") from None
    if weighting not in WEIGHTINGS or n_max not in N_MAX_CHOICES:
        raise ValueError(f"bad variant {variant!r}; expected <count|tfidf>-<2|3|4>")
    return weighting, n_max


VARIANTS = tuple(f"{w}-{n}" for w in WEIGHTINGS for n in N_MAX_CHOICES)


@dataclass
class RfgFeaturizer:
    """Fits vocabulary, weighting and SVD on training documents, then projects any document."""

    weighting: str = "tfidf"
    n_max: int = 2
    rank: int = DEFAULT_RANK
    min_df: int = DEFAULT_MIN_DF
    seed: int = 0
    vocab: Vocabulary | None = field(default=None, init=False)
    svd: SvdModel | None = field(default=None, init=False)

    @classmethod
    def from_variant(cls, variant: str, **kw) -> "RfgFeaturizer":
        weighting, n_max = parse_variant(variant)
        return cls(weighting=weighting, n_max=n_max, **kw)

    @property
    def fit_fingerprint(self) -> str | None:
        return None if self.vocab is None else self.vocab.fingerprint

    def fit(self, docs: Sequence[str]) -> "RfgFeaturizer":
        self.vocab = fit_vocab(docs, self.n_max, self.min_df)
        X = vectorize_corpus(docs, self.vocab, self.weighting)
        k = min(self.rank, *X.shape)
        if k < self.rank:
            log.info("SVD rank reduced from %d to %d for a %dx%d matrix", self.rank, k, *X.shape)
        _, self.svd = truncated_svd(X, k, self.seed)
        return self

    def transform(self, docs: Sequence[str]) -> np.ndarray:
        if self.vocab is None or self.svd is None:
            raise RuntimeError("featurizer is not fitted")
        return self.svd.transform(vectorize_corpus(docs, self.vocab, self.weighting))

    def column_names(self) -> list[str]:
        k = self.svd.k if self.svd is not None else self.rank
        return [f"rfg_{self.weighting}{self.n_max}_svd{i}" for i in range(k)]
