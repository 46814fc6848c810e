import numpy as np
import pytest

from snow.cohort import FeatureMatrix
from snow.featuresets import FEATURE_SETS, FeatureSetError, FeatureSources, parse_feature_set
from snow.rfg import RfgFeaturizer

IDS = ("a", "b", "c")
BASE = FeatureMatrix(IDS, ("age", "psa"), np.array([[60.0, 4.0], [70.0, np.nan], [65.0, 9.0]]))


def test_parse_labels():
    assert parse_feature_set("baseline") == ("baseline", None)
    assert parse_feature_set("baseline+snow") == ("snow", None)
    assert parse_feature_set("baseline+cfg-import") == ("cfg-import", None)
    assert parse_feature_set("baseline+rfg:tfidf-3") == ("rfg", "tfidf-3")
    for label in FEATURE_SETS:
        parse_feature_set(label)


@pytest.mark.parametrize("bad", ["snow", "baseline+xyz", "baseline+rfg:tfidf-9", "baseline+rfg:bm25-2", ""])
def test_unknown_labels_list_valid_ones(bad):
    with pytest.raises(FeatureSetError, match="valid: baseline"):
        parse_feature_set(bad)


def test_baseline_only():
    X, cols, text = FeatureSources(IDS, BASE).build("baseline")
    assert cols == ("age", "psa") and text is None
    np.testing.assert_array_equal(X, BASE.values)


def test_block_is_aligned_and_prefixed_on_clash():
    other = FeatureMatrix(("c", "a", "b"), ("psa", "gleason"), np.array([[1.0, 9.0], [2.0, 7.0], [3.0, 8.0]]))
    X, cols, _ = FeatureSources(IDS, BASE, {"snow": other}).build("baseline+snow")
    assert cols == ("age", "psa", "snow:psa", "snow:gleason")
    np.testing.assert_array_equal(X[:, 2:], [[2.0, 7.0], [3.0, 8.0], [1.0, 9.0]])


def test_missing_block_or_patients():
    src = FeatureSources(IDS, BASE)
    with pytest.raises(FeatureSetError, match="needs the clfg"):
        src.build("baseline+clfg")
    src.blocks["clfg"] = FeatureMatrix(("a",), ("x",), np.ones((1, 1)))
    with pytest.raises(FeatureSetError, match="lacks 2 patients"):
        src.build("baseline+clfg")


def test_rfg_returns_text_factory():
    src = FeatureSources(IDS, BASE, rfg_rank=2, rfg_min_df=1)
    with pytest.raises(FeatureSetError, match="documents"):
        src.build("baseline+rfg:count-2")
    src.documents = ["gleason four plus three", "benign prostate tissue", "gleason three plus three"]
    X, cols, text = src.build("baseline+rfg:count-2", seed=5)
    assert X.shape == (3, 2) and cols[-2:] == ("rfg_count2_svd0", "rfg_count2_svd1")
    f = text.factory()
    assert isinstance(f, RfgFeaturizer) and (f.weighting, f.n_max, f.rank, f.seed) == ("count", 2, 2, 5)
    assert f.fit(src.documents).transform(src.documents).shape == (3, 2)
