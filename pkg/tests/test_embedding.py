import numpy as np
import pytest

from seqrisk.embedding import (EmbeddingFormatError, EmbeddingLookupError,
                               HashEmbedder, hash_featurize, load_precomputed,
                               make_embedder)


class TestHashFeaturize:
    def test_empty_text_is_zero(self):
        assert np.all(hash_featurize("") == 0)

    def test_deterministic(self):
        a = hash_featurize("the quick brown fox", 64, seed=5)
        b = hash_featurize("the quick brown fox", 64, seed=5)
        assert np.array_equal(a, b)

    def test_seed_changes_vector(self):
        a = hash_featurize("hello world", 64, seed=1)
        b = hash_featurize("hello world", 64, seed=2)
        assert not np.array_equal(a, b)

    def test_unit_norm_or_zero(self):
        rng = np.random.default_rng(0)
        words = ["alpha", "beta", "gamma", "delta", "eps"]
        for _ in range(200):
            text = " ".join(rng.choice(words, size=rng.integers(0, 8)))
            n = np.linalg.norm(hash_featurize(text, 32))
            assert n == 0 or n == pytest.approx(1.0, abs=1e-9)

    def test_token_order_invariance(self):
        a = hash_featurize("one two three", 64)
        b = hash_featurize("three one two", 64)
        assert np.allclose(a, b)

    def test_repetition_keeps_direction(self):
        a = hash_featurize("alpha", 64)
        b = hash_featurize("alpha alpha", 64)
        assert np.allclose(a, b)

    def test_case_and_punctuation_folding(self):
        assert np.allclose(hash_featurize("Hello, World!", 64),
                           hash_featurize("hello world", 64))

    def test_min_dim(self):
        with pytest.raises(ValueError):
            hash_featurize("x", 4)


class TestPrecomputed:
    def test_lookup(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("p1 1.0 2.0\np2 3.0 4.0\n")
        provider = load_precomputed(path)
        assert provider.dim == 2
        assert np.allclose(provider.embed_id("p1"), [1.0, 2.0])

    def test_unknown_id(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("p1 1.0 2.0\n")
        provider = load_precomputed(path)
        with pytest.raises(EmbeddingLookupError, match="nope"):
            provider.embed_id("nope")

    def test_mixed_dimensions(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("p1 " + " ".join(["0.1"] * 16) + "\n"
                        "p2 " + " ".join(["0.1"] * 32) + "\n")
        with pytest.raises(EmbeddingFormatError, match="line 2"):
            load_precomputed(path)

    def test_expected_ids_checked(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("p1 1.0\n")
        with pytest.raises(EmbeddingLookupError, match="p9"):
            load_precomputed(path, expected_ids=["p1", "p9"])


class TestMakeEmbedder:
    def test_hash_spec(self):
        provider = make_embedder("hash", dim=32)
        assert isinstance(provider, HashEmbedder)
        assert provider.dim == 32

    def test_file_spec(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("p1 1.0 2.0\n")
        provider = make_embedder(f"file:{path}")
        assert provider.dim == 2

    def test_unknown_spec(self):
        with pytest.raises(ValueError):
            make_embedder("magic")
