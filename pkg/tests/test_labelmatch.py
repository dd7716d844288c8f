from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctrlaudit.errors import ValidationError
from ctrlaudit.labelmatch import (
    EmbeddingTable,
    MatchTable,
    Vocabulary,
    levenshtein,
    lexical_similarity,
    match_lexical,
    match_semantic,
    normalize_label,
)


def oracle_levenshtein(a: str, b: str) -> int:
    """Textbook recursive edit distance, independent of the DP implementation."""

    @lru_cache(maxsize=None)
    def dist(i: int, j: int) -> int:
        if i == 0:
            return j
        if j == 0:
            return i
        return min(
            dist(i - 1, j) + 1,
            dist(i, j - 1) + 1,
            dist(i - 1, j - 1) + (a[i - 1] != b[j - 1]),
        )

    return dist(len(a), len(b))


def oracle_cosine(u: list[float], v: list[float]) -> float:
    dot = sum(x * y for x, y in zip(u, v))
    nu = math.sqrt(sum(x * x for x in u))
    nv = math.sqrt(sum(x * x for x in v))
    return dot / (nu * nv)


class TestNormalize:
    def test_collapses_separators_and_case(self):
        assert normalize_label("Jumpstyle_Dancing ") == "jumpstyle dancing"

    def test_identity(self):
        assert normalize_label("cartwheeling") == "cartwheeling"

    def test_blank_is_error(self):
        with pytest.raises(ValidationError, match="empty"):
            normalize_label("   ")

    def test_mixed_runs(self):
        assert normalize_label("a-_  b--c") == "a b c"


class TestVocabulary:
    def test_from_text_skips_blank_lines(self):
        vocab = Vocabulary.from_text("v", "alpha\n\nBeta_Two\n")
        assert vocab.labels == ("alpha", "beta two")

    def test_duplicates_after_normalization_rejected(self):
        with pytest.raises(ValidationError, match="duplicate"):
            Vocabulary.from_text("v", "push_up\nPush Up\n")


class TestEmbeddingTable:
    def test_round_trip_and_dim(self):
        table = EmbeddingTable.from_csv("label,v0,v1\njog,1.0,0.0\nyoga,0.0,2.0\n")
        assert table.dim == 2
        assert table.vector("jog").tolist() == [1.0, 0.0]

    def test_inconsistent_dim_rejected(self):
        with pytest.raises(ValidationError, match="dimension"):
            EmbeddingTable.from_csv("label,v0,v1\na,1.0,0.0\nb,1.0,0.0,3.0\n")

    def test_zero_norm_rejected(self):
        with pytest.raises(ValidationError, match="zero norm"):
            EmbeddingTable.from_csv("label,v0\na,0.0\n")

    def test_missing_label_named(self):
        table = EmbeddingTable.from_csv("label,v0\na,1.0\n")
        with pytest.raises(ValidationError, match="'b'"):
            table.vector("b")


class TestMatchSemantic:
    def test_identical_embedding_scores_one(self):
        emb = EmbeddingTable.from_csv("label,v0,v1\nsrc,3.0,4.0\ntgt,3.0,4.0\n")
        table = match_semantic(Vocabulary("s", ("src",)), Vocabulary("t", ("tgt",)), emb, 1, 0.9)
        entry = table.entries["src"]
        assert entry.targets == ("tgt",)
        assert entry.scores[0] == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_goes_unmatched(self):
        emb = EmbeddingTable.from_csv("label,v0,v1\nsrc,1.0,0.0\ntgt,0.0,1.0\n")
        table = match_semantic(Vocabulary("s", ("src",)), Vocabulary("t", ("tgt",)), emb, 1, 0.5)
        assert table.unmatched == ("src",)
        assert table.entries == {}

    def test_matches_brute_force_ranking(self):
        # 3x3 toy: oracle is exhaustive pairwise cosine computed independently
        vectors = {
            "s1": [1.0, 0.2],
            "s2": [0.3, 1.0],
            "s3": [-1.0, 0.1],
            "t1": [1.0, 0.0],
            "t2": [0.5, 0.9],
            "t3": [0.0, -1.0],
        }
        rows = ["label,v0,v1"] + [f"{k},{v[0]},{v[1]}" for k, v in vectors.items()]
        emb = EmbeddingTable.from_csv("\n".join(rows) + "\n")
        source = Vocabulary("s", ("s1", "s2", "s3"))
        target = Vocabulary("t", ("t1", "t2", "t3"))
        k, threshold = 2, -1.0
        table = match_semantic(source, target, emb, k=k, threshold=threshold)
        for src in source.labels:
            sims = [
                (oracle_cosine(vectors[src], vectors[tgt]), idx)
                for idx, tgt in enumerate(target.labels)
            ]
            expected = sorted(sims, key=lambda p: (-p[0], p[1]))[:k]
            entry = table.entries[src]
            assert entry.targets == tuple(target.labels[idx] for _, idx in expected)
            for got, (want, _) in zip(entry.scores, expected):
                assert got == pytest.approx(want, abs=1e-12)

    def test_missing_embedding_label_is_error(self):
        emb = EmbeddingTable.from_csv("label,v0\nsrc,1.0\n")
        with pytest.raises(ValidationError, match="tgt"):
            match_semantic(Vocabulary("s", ("src",)), Vocabulary("t", ("tgt",)), emb, 1, 0.5)

    def test_bad_params_rejected(self):
        emb = EmbeddingTable.from_csv("label,v0\na,1.0\n")
        vocab = Vocabulary("v", ("a",))
        with pytest.raises(ValidationError):
            match_semantic(vocab, vocab, emb, k=0, threshold=0.5)
        with pytest.raises(ValidationError):
            match_semantic(vocab, vocab, emb, k=1, threshold=1.5)


class TestMatchLexical:
    def test_jog_vs_jogging(self):
        # dist("jog", "jogging") = 4 inserts -> similarity 1 - 4/7
        assert oracle_levenshtein("jog", "jogging") == 4
        expected = 1.0 - 4.0 / 7.0
        table = match_lexical(
            Vocabulary("s", ("jog",)), Vocabulary("t", ("jogging",)), 1, expected - 1e-9
        )
        assert table.entries["jog"].scores[0] == pytest.approx(expected)
        table2 = match_lexical(
            Vocabulary("s", ("jog",)), Vocabulary("t", ("jogging",)), 1, expected + 1e-9
        )
        assert table2.unmatched == ("jog",)

    def test_identical_strings(self):
        table = match_lexical(Vocabulary("s", ("drink",)), Vocabulary("t", ("drink",)), 1, 1.0)
        assert table.entries["drink"].scores == (1.0,)

    def test_disjoint_strings_score_zero(self):
        assert oracle_levenshtein("drink", "yoga") == 5
        assert lexical_similarity("drink", "yoga") == 0.0
        table = match_lexical(Vocabulary("s", ("drink",)), Vocabulary("t", ("yoga",)), 1, 0.01)
        assert table.unmatched == ("drink",)

    def test_empty_vocabulary_is_error(self):
        with pytest.raises(ValidationError, match="non-empty"):
            match_lexical(Vocabulary("s", ()), Vocabulary("t", ("x",)), 1, 0.5)

    @settings(max_examples=200, deadline=None)
    @given(
        a=st.text(alphabet="abcdef ", min_size=0, max_size=8),
        b=st.text(alphabet="abcdef ", min_size=0, max_size=8),
    )
    def test_levenshtein_matches_oracle_and_is_symmetric(self, a, b):
        assert levenshtein(a, b) == oracle_levenshtein(a, b)
        assert levenshtein(a, b) == levenshtein(b, a)

    @settings(max_examples=100, deadline=None)
    @given(
        u=st.lists(st.floats(min_value=-5, max_value=5), min_size=3, max_size=3),
        v=st.lists(st.floats(min_value=-5, max_value=5), min_size=3, max_size=3),
    )
    def test_cosine_symmetry_and_self_similarity(self, u, v):
        from hypothesis import assume

        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        assume(nu > 1e-6 and nv > 1e-6)
        emb = EmbeddingTable({"u": np.array(u), "v": np.array(v)})
        one = match_semantic(Vocabulary("s", ("u",)), Vocabulary("t", ("v",)), emb, 1, -1.0)
        two = match_semantic(Vocabulary("s", ("v",)), Vocabulary("t", ("u",)), emb, 1, -1.0)
        assert one.entries["u"].scores[0] == pytest.approx(two.entries["v"].scores[0], abs=1e-12)
        self_match = match_semantic(Vocabulary("s", ("u",)), Vocabulary("t", ("u",)), emb, 1, -1.0)
        assert self_match.entries["u"].scores[0] == pytest.approx(1.0, abs=1e-12)


class TestIsCorrect:
    @pytest.fixture
    def table(self) -> MatchTable:
        return match_lexical(
            Vocabulary("s", ("cartwheel", "zzzzqq")),
            Vocabulary("t", ("cartwheeling", "capoeira")),
            k=1,
            threshold=0.6,
        )

    def test_membership_true(self, table):
        assert table.is_correct("cartwheeling", "cartwheel") is True

    def test_wrong_label_false(self, table):
        assert table.is_correct("capoeira", "cartwheel") is False

    def test_unmatched_action_false_and_counted(self, table):
        assert "zzzzqq" in table.unmatched
        before = table.unmatched_queries
        assert table.is_correct("anything", "zzzzqq") is False
        assert table.unmatched_queries == before + 1

    def test_unknown_action_raises(self, table):
        with pytest.raises(ValidationError, match="absent"):
            table.is_correct("anything", "never seen")

    def test_case_and_whitespace_invariance(self, table):
        assert table.is_correct("Cartwheeling", "Cartwheel") is True
        assert table.is_correct(" cartwheeling ", "CARTWHEEL") is True

    def test_scores_respect_threshold_and_order(self, table):
        for entry in table.entries.values():
            assert list(entry.scores) == sorted(entry.scores, reverse=True)
            assert all(s >= 0.6 for s in entry.scores)

    def test_json_round_trip(self, table):
        again = MatchTable.from_json(table.to_json())
        assert again.entries == table.entries
        assert again.unmatched == table.unmatched
