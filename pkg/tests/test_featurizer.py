import random
from collections import Counter

import numpy as np
import pytest
from pydantic import ValidationError

from devanagari_clf.models.schemas import FeaturizerConfig, Normalization
from devanagari_clf.utils.featurizer import (
    char_ngrams, dump_sparse, featurize, featurize_split, hash64, raw_counts, to_matrix
)
from tests.conftest import CLASS_ALPHABETS, make_split, make_text

RAW = Normalization.NONE


def _sliced_ngrams(text, n_min, n_max):
    return [text[i:i + n] for n in range(n_min, n_max + 1) for i in range(len(text) - n + 1)]


def test_empty_text_is_zero_vector():
    config = FeaturizerConfig(dimension=2 ** 10)
    vector = featurize("", config)
    assert vector.entries == {}
    assert vector.dimension == 2 ** 10


def test_repeated_unigram_counts():
    config = FeaturizerConfig(n_min=1, n_max=1, normalize=RAW)
    vector = featurize("अअ", config)
    assert list(vector.entries.values()) == [2.0]
    assert list(vector.entries) == [hash64("अ") % config.dimension]


def test_matches_independent_counter():
    config = FeaturizerConfig(n_min=1, n_max=2, dimension=2 ** 18, normalize=RAW)
    text = "नमस्ते"
    expected = Counter()
    for gram in _sliced_ngrams(text, 1, 2):
        expected[hash64(gram) % config.dimension] += 1.0
    assert featurize(text, config).entries == dict(expected)


def test_ngrams_cover_all_orders():
    assert char_ngrams("abc", 1, 3) == ["a", "b", "c", "ab", "bc", "abc"]
    assert char_ngrams("ab", 3, 3) == []


def test_collisions_add_up():
    config = FeaturizerConfig(n_min=1, n_max=3, dimension=2, normalize=RAW)
    text = "कखगघ कख"
    grams = _sliced_ngrams(text, 1, 3)
    vector = featurize(text, config)
    assert sum(vector.entries.values()) == len(grams)
    for bucket, value in vector.entries.items():
        assert value == sum(1 for gram in grams if hash64(gram) % 2 == bucket)


def test_l2_normalization_preserves_argmax():
    raw = FeaturizerConfig(n_min=1, n_max=3, dimension=2 ** 12, normalize=RAW)
    l2 = raw.model_copy(update={"normalize": Normalization.L2})
    rng = random.Random(5)
    for _ in range(20):
        text = make_text(CLASS_ALPHABETS[rng.randrange(5)], rng)
        counts = featurize(text, raw)
        unit = featurize(text, l2)
        assert unit.norm() == pytest.approx(1.0, abs=1e-12)
        assert max(counts.entries, key=counts.entries.get) == max(unit.entries, key=unit.entries.get)


def test_deterministic_and_nfc():
    config = FeaturizerConfig(dimension=2 ** 14)
    assert featurize("राम सीता", config) == featurize("राम सीता", config)
    # U+0958 is decomposed by NFC
    assert featurize("\u0958", config) == featurize("\u0915\u093c", config)


def test_lowercase_option():
    config = FeaturizerConfig(dimension=2 ** 10, lowercase=True)
    assert featurize("ABC", config) == featurize("abc", config)
    assert raw_counts("ABC", config.model_copy(update={"lowercase": False})) != raw_counts("abc", config)


def test_split_order_follows_examples(schema_a):
    config = FeaturizerConfig(dimension=2 ** 12)
    split = make_split(schema_a, [3, 3, 3, 3, 3], seed=11)
    vectors = featurize_split(split, config)
    permutation = np.random.default_rng(0).permutation(len(split))
    shuffled = split.model_copy(update={"examples": [split.examples[i] for i in permutation]})
    assert featurize_split(shuffled, config) == [vectors[i] for i in permutation]


def test_to_matrix_and_dump(schema_a):
    config = FeaturizerConfig(dimension=2 ** 10, normalize=RAW)
    vectors = [featurize("अअ", config.model_copy(update={"n_max": 1})), featurize("", config)]
    matrix = to_matrix(vectors, config.dimension)
    assert matrix.shape == (2, 2 ** 10)
    assert matrix.sum() == 2.0
    assert matrix[1].nnz == 0
    bucket = hash64("अ") % config.dimension
    assert dump_sparse(vectors[0]) == f"{bucket}:2.0"


def test_config_validation():
    with pytest.raises(ValidationError):
        FeaturizerConfig(dimension=1000)
    with pytest.raises(ValidationError):
        FeaturizerConfig(n_min=3, n_max=2)
    with pytest.raises(ValidationError):
        FeaturizerConfig(n_max=9)
    with pytest.raises(ValidationError):
        FeaturizerConfig(n_min=0)
