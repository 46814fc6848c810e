import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snow.rfg import (
    VARIANTS, RfgFeaturizer, VocabularyError, fit_vocab, ngrams, parse_variant, patient_document, preprocess,
    stem, truncated_svd, vectorize, vectorize_corpus,
)

from oracles import best_rank_k_error


def test_preprocess_example():
    assert preprocess("The Gleason scores were 7") == ["gleason", "score", "7"]


def test_preprocess_empty_and_stopwords():
    assert preprocess("") == []
    assert preprocess("the and of was were") == []


@pytest.mark.parametrize("word,want", [
    ("scores", "score"), ("glasses", "glass"), ("biopsies", "biopsy"), ("involving", "involv"),
    ("measured", "measur"), ("prostatic", "prostatic"), ("stroma", "stroma"), ("carcinomas", "carcinoma"),
    ("gleason", "gleason"), ("focus", "focus"), ("cores", "core"), ("was", "was"), ("1234", "1234"),
])
def test_stemmer_rules(word, want):
    assert stem(word) == want


def test_bigram_kept_at_min_df():
    vocab = fit_vocab(["tumor volume high", "low tumor volume"], n_max=2, min_df=2)
    assert "tumor volume" in vocab.index


def test_no_trigrams_with_n_max_2(cohort):
    docs = [patient_document(p) for p in cohort.patients[:20]]
    vocab = fit_vocab(docs, n_max=2)
    assert max(len(g.split()) for g in vocab.index) == 2


def test_vocab_size_matches_enumeration(cohort):
    docs = [patient_document(p) for p in cohort.patients[:30]]
    for n_max in (2, 3):
        df = {}
        for d in docs:
            toks = preprocess(d)
            grams = set()
            for n in range(1, n_max + 1):
                for i in range(len(toks) - n + 1):
                    grams.add(tuple(toks[i:i + n]))
            for g in grams:
                df[g] = df.get(g, 0) + 1
        assert len(fit_vocab(docs, n_max=n_max, min_df=2)) == sum(1 for c in df.values() if c >= 2)


def test_empty_vocabulary():
    with pytest.raises(VocabularyError):
        fit_vocab(["alpha beta", "gamma delta"], min_df=2)
    with pytest.raises(VocabularyError):
        fit_vocab([])


def test_counts_match_manual(cohort):
    docs = [patient_document(p) for p in cohort.patients[:15]]
    vocab = fit_vocab(docs, n_max=2)
    doc = docs[3]
    v = vectorize(doc, vocab, "count").dense(len(vocab))
    grams = ngrams(preprocess(doc), 2)
    for g, j in vocab.index.items():
        assert v[j] == grams.count(g)


def test_idf_lowest_for_ubiquitous():
    docs = ["common rare1 rare1", "common rare2 rare2", "common rare1 rare2"]
    vocab = fit_vocab(docs, n_max=1, min_df=1)
    idf = vocab.idf
    assert idf[vocab.index["common"]] == idf.min()
    assert idf[vocab.index["common"]] < idf[vocab.index["rare1"]]


def test_out_of_vocabulary_doc():
    vocab = fit_vocab(["alpha beta", "alpha beta"], n_max=1)
    for w in ("count", "tfidf"):
        v = vectorize("zeta eta", vocab, w)
        assert not v.dense(len(vocab)).any()


def test_tfidf_rows_unit_norm(cohort):
    docs = [patient_document(p) for p in cohort.patients[:15]]
    X = vectorize_corpus(docs, fit_vocab(docs), "tfidf")
    assert np.allclose(np.sqrt(X.multiply(X).sum(axis=1)).A1, 1.0)


def test_svd_close_to_exact():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((50, 80))
    scores, model = truncated_svd(A, 10, seed=1)
    approx = scores @ model.components
    err = np.linalg.norm(A - approx)
    assert err - best_rank_k_error(A, 10) <= 1e-6


def test_svd_full_rank_reconstructs():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((12, 5)) @ rng.standard_normal((5, 30))
    scores, model = truncated_svd(A, 5)
    assert np.linalg.norm(A - scores @ model.components) <= 1e-8


def test_svd_diagonal():
    d = np.array([0.5, 3.0, 2.0, 7.0, 1.0])
    _, model = truncated_svd(np.diag(d), 5)
    assert np.allclose(model.singular_values, np.sort(d)[::-1])


def test_svd_rank_checked():
    with pytest.raises(ValueError):
        truncated_svd(np.ones((4, 6)), 5)
    with pytest.raises(ValueError):
        truncated_svd(np.ones((4, 6)), 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 40), st.integers(5, 40))
def test_svd_components_orthonormal(seed, n, m):
    A = np.random.default_rng(seed).standard_normal((n, m))
    k = min(n, m) // 2 or 1
    _, model = truncated_svd(A, k, seed=seed)
    assert np.allclose(model.components @ model.components.T, np.eye(k), atol=1e-8)


def test_svd_deterministic():
    A = np.random.default_rng(2).standard_normal((20, 30))
    a = truncated_svd(A, 4, seed=5)[0]
    b = truncated_svd(A, 4, seed=5)[0]
    assert np.array_equal(a, b)


def test_featurizer_fit_transform(cohort):
    docs = [patient_document(p) for p in cohort.patients[:40]]
    f = RfgFeaturizer.from_variant("tfidf-3", rank=8).fit(docs[:30])
    Z = f.transform(docs[30:])
    assert Z.shape == (10, 8)
    assert f.column_names()[0] == "rfg_tfidf3_svd0"
    with pytest.raises(RuntimeError):
        RfgFeaturizer().transform(docs)


def test_rank_clamped(cohort):
    docs = [patient_document(p) for p in cohort.patients[:6]]
    f = RfgFeaturizer(rank=20).fit(docs)
    assert f.svd.k == 6


def test_variants():
    assert len(VARIANTS) == 6
    assert parse_variant("count-4") == ("count", 4)
    with pytest.raises(ValueError):
        parse_variant("tfidf-5")


def test_patient_document_is_pre_treatment(cohort):
    p = cohort.patients[0]
    doc = patient_document(p)
    bx = next(n for n in p.notes if n.kind == "biopsy_report")
    assert bx.text in doc
    for n in p.notes:
        if n.date > p.treatment.start:
            assert n.text not in doc
