"""Hashed character n-gram features.

Bucket function (fixed, never change silently): BLAKE2b with an 8-byte digest
(hashlib.blake2b(data, digest_size=8, person=b"devclf-ngram")) over the UTF-8
bytes of the n-gram, read as an unsigned little-endian 64-bit integer, then
taken modulo the configured dimension. Text is NFC-normalized first.
"""

import hashlib
import logging
import unicodedata
from functools import lru_cache
from typing import Dict, List, Sequence

import numpy as np
from nltk.util import ngrams
from scipy.sparse import csr_matrix

from devanagari_clf.models.schemas import DatasetSplit, FeaturizerConfig, FeatureVector, Normalization

logger = logging.getLogger(__name__)

HASH_PERSON = b"devclf-ngram"


@lru_cache(maxsize=1 << 20)
def hash64(ngram: str) -> int:
    """Unsigned 64-bit hash of an n-gram"""
    digest = hashlib.blake2b(ngram.encode("utf-8"), digest_size=8, person=HASH_PERSON).digest()
    return int.from_bytes(digest, "little")


def char_ngrams(text: str, n_min: int, n_max: int) -> List[str]:
    """All character n-grams of the code-point sequence, shortest order first"""
    chars = list(text)
    grams = []
    for n in range(n_min, n_max + 1):
        grams.extend("".join(gram) for gram in ngrams(chars, n))
    return grams


def prepare_text(text: str, config: FeaturizerConfig) -> str:
    text = unicodedata.normalize("NFC", text)
    return text.lower() if config.lowercase else text


def raw_counts(text: str, config: FeaturizerConfig) -> Dict[int, float]:
    """Bucket counts before normalization; colliding n-grams add up"""
    counts: Dict[int, float] = {}
    for gram in char_ngrams(prepare_text(text, config), config.n_min, config.n_max):
        bucket = hash64(gram) % config.dimension
        counts[bucket] = counts.get(bucket, 0.0) + 1.0
    return counts


def featurize(text: str, config: FeaturizerConfig) -> FeatureVector:
    """Map text to a sparse hashed n-gram vector"""
    counts = raw_counts(text, config)
    if config.normalize == Normalization.L2 and counts:
        norm = float(np.sqrt(sum(value * value for value in counts.values())))
        counts = {index: value / norm for index, value in counts.items()}
    return FeatureVector(dimension=config.dimension, entries=dict(sorted(counts.items())))


def featurize_split(split: DatasetSplit, config: FeaturizerConfig) -> List[FeatureVector]:
    return [featurize(text, config) for text in split.texts]


def to_matrix(vectors: Sequence[FeatureVector], dimension: int) -> csr_matrix:
    """Stack vectors into an (n, dimension) CSR matrix, row order preserved"""
    indptr = [0]
    indices: List[int] = []
    data: List[float] = []
    for vector in vectors:
        if vector.dimension != dimension:
            raise ValueError(f"vector dimension {vector.dimension} != {dimension}")
        indices.extend(vector.entries.keys())
        data.extend(vector.entries.values())
        indptr.append(len(indices))
    return csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(vectors), dimension),
    )


def dump_sparse(vector: FeatureVector) -> str:
    """Debug format: space-separated index:value pairs"""
    return " ".join(f"{index}:{value!r}" for index, value in vector.entries.items())
