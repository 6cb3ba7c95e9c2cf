import numpy as np
import pytest

from goalfuse.errors import ContractError
from goalfuse.fusion import Telemetry, fuse, normalized, top_k, validate_probability_map

from .oracles import brute_force_rank


def random_prob_map(rng, labels):
    raw = {label: float(rng.random()) + 1e-6 for label in labels}
    return normalized(raw)


class TestFuse:
    def test_product_arithmetic(self):
        p = {"a": 0.5, "b": 0.3, "c": 0.2}
        q = {"a": 0.2, "b": 0.3, "c": 0.5}
        out = fuse(p, q)
        assert out["a"] == pytest.approx(10 / 29, abs=1e-12)
        assert out["b"] == pytest.approx(9 / 29, abs=1e-12)
        assert out["c"] == pytest.approx(10 / 29, abs=1e-12)

    def test_uniform_cofactor_is_identity(self):
        rng = np.random.default_rng(0)
        labels = ["a", "b", "c", "d", "e"]
        p = random_prob_map(rng, labels)
        u = {label: 1 / len(labels) for label in labels}
        out = fuse(p, u)
        for label in labels:
            assert out[label] == pytest.approx(p[label], abs=1e-12)

    def test_annihilation_falls_back_to_uniform(self):
        tel = Telemetry()
        out = fuse({"a": 1.0, "b": 0.0}, {"a": 0.0, "b": 1.0}, tel)
        assert out == {"a": 0.5, "b": 0.5}
        assert tel.counts["fusion_annihilation_fallback"] == 1

    def test_commutative(self):
        rng = np.random.default_rng(1)
        labels = [f"l{i}" for i in range(8)]
        for _ in range(200):
            p = random_prob_map(rng, labels)
            q = random_prob_map(rng, labels)
            a, b = fuse(p, q), fuse(q, p)
            for label in labels:
                assert a[label] == pytest.approx(b[label], abs=1e-12)

    def test_zero_absorption(self):
        p = {"a": 0.6, "b": 0.4, "c": 0.0}
        q = {"a": 0.1, "b": 0.9, "c": 0.0}
        out = fuse(p, q)
        assert out["c"] == 0.0

    def test_label_mismatch_rejected(self):
        with pytest.raises(ContractError):
            fuse({"a": 1.0}, {"b": 1.0})

    def test_output_is_distribution(self):
        rng = np.random.default_rng(2)
        labels = [f"l{i}" for i in range(6)]
        for _ in range(100):
            out = fuse(random_prob_map(rng, labels), random_prob_map(rng, labels))
            validate_probability_map(out)


class TestTopK:
    def test_sorted_by_probability(self):
        assert top_k({"a": 0.5, "b": 0.3, "c": 0.2}, 2) == ["a", "b"]

    def test_tie_breaks_lexicographic(self):
        assert top_k({"b": 0.4, "a": 0.4, "c": 0.2}, 1) == ["a"]

    def test_truncates_to_population(self):
        assert top_k({"a": 0.5, "b": 0.3, "c": 0.2}, 10) == ["a", "b", "c"]

    def test_k_must_be_positive(self):
        with pytest.raises(ContractError):
            top_k({"a": 1.0}, 0)

    def test_argmax_invariance_under_uniform_fusion(self):
        rng = np.random.default_rng(3)
        labels = [f"l{i}" for i in range(7)]
        for _ in range(200):
            p = random_prob_map(rng, labels)
            u = {label: 1 / len(labels) for label in labels}
            assert top_k(fuse(p, u), len(labels)) == top_k(p, len(labels))


class TestRankDominance:
    """With the physical map zero outside a region holding the truth and
    uniform inside it, fusing can only improve the truth's rank over the
    semantic map. Verified against a brute-force full-sort oracle."""

    def test_dominance_on_randomized_instances(self):
        rng = np.random.default_rng(4)
        for _ in range(500):
            n = int(rng.integers(2, 7))
            labels = [f"obj{i}" for i in range(n)]
            truth = labels[int(rng.integers(0, n))]
            p_llm = random_prob_map(rng, labels)
            region_size = int(rng.integers(1, n + 1))
            region = set(rng.choice(labels, size=region_size, replace=False))
            region.add(truth)
            p_traj = {
                label: (1.0 / len(region) if label in region else 0.0)
                for label in labels
            }
            fused = fuse(p_llm, p_traj)
            rank_fused = brute_force_rank(fused, truth)
            rank_llm = brute_force_rank(p_llm, truth)
            assert rank_fused <= rank_llm
            assert rank_fused <= len(region)
