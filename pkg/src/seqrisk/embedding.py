"""Post-embedding providers: a seeded hashing featurizer and a precomputed loader.

Both expose `dim` and `embed_post(post)`; providers are immutable after
construction and embedding is pure, so instances are safe to share.
"""
from __future__ import annotations

import hashlib
import re

import numpy as np

_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")


class EmbeddingLookupError(KeyError):
    pass


class EmbeddingFormatError(ValueError):
    pass


def hash_featurize(text: str, dim: int = 64, seed: int = 13) -> np.ndarray:
    """Signed bag-of-words feature hashing, L2-normalized when nonzero.

    Tokens are lowercased alphanumeric runs; each token hashes (stably across
    processes, via blake2b keyed on the seed) to a coordinate and a sign.
    Token order never matters and the empty text maps to the zero vector.
    """
    if dim < 8:
        raise ValueError("dim must be >= 8")
    v = np.zeros(dim)
    for token in _TOKEN_SPLIT.split(text.lower()):
        if not token:
            continue
        digest = hashlib.blake2b(
            token.encode("utf-8"), digest_size=8, key=str(seed).encode()
        ).digest()
        h = int.from_bytes(digest, "little")
        idx = (h >> 1) % dim
        sign = 1.0 if (h & 1) else -1.0
        v[idx] += sign
    norm = np.linalg.norm(v)
    if norm > 0:
        v /= norm
    return v


class HashEmbedder:
    """Deterministic, dependency-free stand-in for a pretrained sentence encoder."""

    def __init__(self, dim: int = 64, seed: int = 13):
        if dim < 8:
            raise ValueError("dim must be >= 8")
        self.dim = dim
        self.seed = seed

    def embed(self, text: str) -> np.ndarray:
        return hash_featurize(text, self.dim, self.seed)

    def embed_post(self, post) -> np.ndarray:
        return self.embed(post.text)

    def spec_string(self) -> str:
        return "hash"


class PrecomputedEmbedder:
    """Resolves embeddings by post_id from vectors computed offline."""

    def __init__(self, vectors: dict, dim: int):
        self.vectors = vectors
        self.dim = dim

    def embed_post(self, post) -> np.ndarray:
        return self.embed_id(post.post_id)

    def embed_id(self, post_id: str) -> np.ndarray:
        try:
            return self.vectors[post_id]
        except KeyError:
            raise EmbeddingLookupError(f"no embedding for post_id {post_id!r}") from None

    def spec_string(self) -> str:
        return f"file:{getattr(self, 'path', '?')}"


def load_precomputed(path, expected_ids=None) -> PrecomputedEmbedder:
    """Load `post_id v1 v2 ...` lines; all rows must share one dimension."""
    vectors = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            post_id, vals = parts[0], parts[1:]
            if not vals:
                raise EmbeddingFormatError(f"line {lineno}: no vector values")
            if dim is None:
                dim = len(vals)
            elif len(vals) != dim:
                raise EmbeddingFormatError(
                    f"line {lineno}: dimension {len(vals)} != {dim}"
                )
            try:
                vectors[post_id] = np.array([float(x) for x in vals])
            except ValueError:
                raise EmbeddingFormatError(f"line {lineno}: non-numeric value") from None
    if dim is None:
        raise EmbeddingFormatError("empty embedding file")
    provider = PrecomputedEmbedder(vectors, dim)
    provider.path = str(path)
    if expected_ids is not None:
        for pid in expected_ids:
            if pid not in vectors:
                raise EmbeddingLookupError(f"no embedding for post_id {pid!r}")
    return provider


def make_embedder(spec: str, dim: int = 64, seed: int = 13):
    """Build a provider from a CLI-style spec: "hash" or "file:<path>"."""
    if spec == "hash":
        return HashEmbedder(dim=dim, seed=seed)
    if spec.startswith("file:"):
        return load_precomputed(spec[len("file:"):])
    raise ValueError(f"unknown embedder spec {spec!r}")
