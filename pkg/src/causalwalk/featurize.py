"""Signed feature hashing for claims and evidence sentences."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

__all__ = [
    "FeaturizerConfig",
    "featurize_sentence",
    "featurize_pair",
    "pair_components",
    "tokenize",
    "hash_feature",
    "HashingPairFeaturizer",
]

# marker prefix keeps synthetic features out of the word n-gram namespace
_MARK = "\x1f"


@dataclass(frozen=True)
class FeaturizerConfig:
    dim: int = 256
    ngram_orders: frozenset[int] = field(default_factory=lambda: frozenset({1, 2}))
    hash_seed: int = 0
    lowercase: bool = True
    pair_weight: float = 0.5
    overlap_weight: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "ngram_orders", frozenset(int(n) for n in self.ngram_orders))
        if self.dim < 8:
            raise ValueError(f"featurizer dim must be >= 8, got {self.dim}")
        if not self.ngram_orders or min(self.ngram_orders) < 1:
            raise ValueError(f"ngram_orders must be non-empty and >= 1, got {sorted(self.ngram_orders)}")
        if not 0 <= self.hash_seed < 2**64:
            raise ValueError("hash_seed must fit in an unsigned 64-bit integer")
        if self.pair_weight < 0 or self.overlap_weight < 0:
            raise ValueError("cross feature weights must be non-negative")


@lru_cache(maxsize=1 << 16)
def hash_feature(feature: str, seed: int, dim: int) -> tuple[int, float]:
    """Map a feature string to ``(bucket, sign)``.

    The 64-bit digest is keyed BLAKE2b; the bucket is the digest modulo
    ``dim`` and the sign comes from the top bit.
    """
    digest = hashlib.blake2b(
        feature.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "little")
    ).digest()
    h = int.from_bytes(digest, "little")
    return h % dim, (-1.0 if h >> 63 else 1.0)


def tokenize(text: str, lowercase: bool = True) -> list[str]:
    return (text.lower() if lowercase else text).split()


def _ngrams(tokens: list[str], orders) -> list[str]:
    out = []
    for n in sorted(orders):
        for i in range(len(tokens) - n + 1):
            out.append(" ".join(tokens[i : i + n]))
    return out


def _hashed(features, config: FeaturizerConfig) -> np.ndarray:
    v = np.zeros(config.dim)
    for f in features:
        idx, sign = hash_feature(f, config.hash_seed, config.dim)
        v[idx] += sign
    return v


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.sqrt(v @ v)
    return v / norm if norm > 0 else np.zeros_like(v)


def featurize_sentence(text: str, config: FeaturizerConfig = FeaturizerConfig()) -> np.ndarray:
    """Unit-norm hashed n-gram vector of ``text``; zero when nothing hashes."""
    tokens = tokenize(text, config.lowercase)
    return _unit(_hashed(_ngrams(tokens, config.ngram_orders), config))


def _align(evidence: list[str], claim: list[str]) -> list[int | None]:
    """Claim position of each evidence token, or None.

    A token occurring several times in the claim takes the first occurrence
    after the previously aligned position, falling back to its first one.
    """
    positions: dict[str, list[int]] = {}
    for j, tok in enumerate(claim):
        positions.setdefault(tok, []).append(j)
    out: list[int | None] = []
    last = -1
    for tok in evidence:
        cands = positions.get(tok)
        if not cands:
            out.append(None)
            continue
        j = next((p for p in cands if p > last), cands[0])
        out.append(j)
        last = j
    return out


def _cross_features(evidence: list[str], claim: list[str]) -> tuple[list[str], list[str]]:
    pairs = [f"{_MARK}x{e}{_MARK}{c}" for e in evidence for c in claim]
    aligned = [j for j in _align(evidence, claim) if j is not None]
    overlap = []
    for j in aligned:
        overlap.append(f"{_MARK}match")
        overlap.append(f"{_MARK}match@{j}")
    # order of the aligned claim positions, as in-evidence bigrams
    overlap += [f"{_MARK}seq@{a}>{b}" for a, b in zip(aligned[:-1], aligned[1:])]
    return pairs, overlap


def pair_components(evidence: str, claim: str, config: FeaturizerConfig = FeaturizerConfig()):
    """Return ``(sentence_sum, cross)`` before the final normalization.

    ``sentence_sum`` is the sum of the two sentence vectors and is symmetric
    in its arguments; ``cross`` holds the ordered evidence-to-claim features:
    token pairs, overlap indicators keyed by claim position, and bigrams over
    the claim positions of overlapping tokens taken in evidence order.
    """
    sentence_sum = featurize_sentence(evidence, config) + featurize_sentence(claim, config)
    e_tok = tokenize(evidence, config.lowercase)
    c_tok = tokenize(claim, config.lowercase)
    pairs, overlap = _cross_features(e_tok, c_tok)
    cross = config.pair_weight * _unit(_hashed(pairs, config))
    cross = cross + config.overlap_weight * _unit(_hashed(overlap, config))
    return sentence_sum, cross


def featurize_pair(evidence: str, claim: str, config: FeaturizerConfig = FeaturizerConfig()) -> np.ndarray:
    """Claim-conditioned evidence vector; unit norm unless everything cancels."""
    sentence_sum, cross = pair_components(evidence, claim, config)
    return _unit(sentence_sum + cross)


class HashingPairFeaturizer(BaseEstimator, TransformerMixin):
    """Stateless transformer turning ``(claim, evidences)`` records into graphs.

    ``transform`` returns a list of :class:`~causalwalk.graph.ClaimEvidenceGraph`.
    """

    def __init__(self, dim=256, ngram_orders=(1, 2), hash_seed=0, lowercase=True,
                 pair_weight=0.5, overlap_weight=4.0, max_evidence=20):
        self.dim = dim
        self.ngram_orders = ngram_orders
        self.hash_seed = hash_seed
        self.lowercase = lowercase
        self.pair_weight = pair_weight
        self.overlap_weight = overlap_weight
        self.max_evidence = max_evidence

    def config(self) -> FeaturizerConfig:
        return FeaturizerConfig(
            dim=self.dim,
            ngram_orders=frozenset(self.ngram_orders),
            hash_seed=self.hash_seed,
            lowercase=self.lowercase,
            pair_weight=self.pair_weight,
            overlap_weight=self.overlap_weight,
        )

    def fit(self, X=None, y=None):
        self.config()
        return self

    def transform(self, X):
        from .graph import as_graphs

        return as_graphs(X, self.config(), max_evidence=self.max_evidence)
