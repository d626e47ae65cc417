import math

import numpy as np
import pytest

from kgforge._text import TfidfStats
from kgforge.errors import UnknownId
from kgforge.label import IntentEntity
from kgforge.relate import (
    PolicyEntity,
    Relation,
    discover_relations,
    relation_metrics,
    tfidf_cosine,
)


class MapProvider:
    """Embeds texts through a fixed lookup table (planted embeddings)."""

    kind = "map"

    def __init__(self, table):
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        self.dim = len(next(iter(self.table.values())))

    def embed(self, texts):
        return np.stack([self.table[t] for t in texts])


def intent(i, label):
    return IntentEntity(f"i{i}", label, [i], 1)


def policy(i, title, body=""):
    return PolicyEntity(f"p{i}", title, body)


class TestTfidfCosine:
    def test_identical(self):
        stats = TfidfStats(["a b c", "d e"])
        assert abs(tfidf_cosine("a b c", "a b c", stats) - 1.0) < 1e-9

    def test_disjoint(self):
        stats = TfidfStats(["a b", "c d"])
        assert tfidf_cosine("a b", "c d", stats) == 0.0

    def test_three_document_hand_corpus(self):
        stats = TfidfStats(["a b a", "b c", "c d"])
        # hand application of tf * (ln((1+N)/(1+df)) + 1), L2-normalised
        idf_a = math.log(4 / 2) + 1
        idf_b = math.log(4 / 3) + 1
        q = (idf_a, idf_b)
        d = (2 * idf_a, idf_b)
        expected = (q[0] * d[0] + q[1] * d[1]) / (math.hypot(*q) * math.hypot(*d))
        got = tfidf_cosine("a b", "a b a", stats)
        assert abs(got - expected) < 1e-12
        assert abs(got - 0.9591463953147306) < 1e-9

    def test_out_of_vocabulary_query(self):
        stats = TfidfStats(["a b"])
        assert tfidf_cosine("zzz", "a b", stats) == 0.0


def unit(*values):
    v = np.asarray(values, dtype=np.float64)
    return v / np.linalg.norm(v)


class TestDiscoverRelations:
    def test_identical_embedding_rank_one(self):
        table = {
            "hủy lớp": unit(1, 0, 0),
            "Quy định rút môn": unit(1, 0, 0),
            "Nội quy": unit(0, 1, 0),
        }
        intents = [intent(0, "hủy lớp")]
        policies = [policy(0, "Quy định rút môn"), policy(1, "Nội quy")]
        rels = discover_relations(intents, policies, MapProvider(table), threshold=0.32)
        assert rels[0].policy_id == "p0"
        assert rels[0].embed_score == pytest.approx(1.0)
        assert rels[0].rank == 1

    def test_orthogonal_policies_leave_intent_non_associative(self):
        table = {"xin giấy": unit(1, 0), "Nội quy": unit(0, 1)}
        intents = [intent(0, "xin giấy")]
        policies = [policy(0, "Nội quy")]
        rels = discover_relations(intents, policies, MapProvider(table), threshold=0.32)
        assert rels == []
        report = relation_metrics(rels, intents, policies)
        assert report.n_non_associative == 1

    def test_threshold_inclusive_at_exact_value(self):
        y = math.sqrt(1.0 - 0.32 * 0.32)
        table = {"mượn phòng": np.array([1.0, 0.0]), "Quy định phòng học": np.array([0.32, y])}
        intents = [intent(0, "mượn phòng")]
        policies = [policy(0, "Quy định phòng học")]
        rels = discover_relations(intents, policies, MapProvider(table), threshold=0.32)
        assert len(rels) == 1
        assert rels[0].embed_score == 0.32

    def test_every_relation_meets_threshold(self):
        rng = np.random.default_rng(4)
        table = {}
        intents, policies = [], []
        for i in range(8):
            intents.append(intent(i, f"intent {i}"))
            table[f"intent {i}"] = unit(*rng.normal(size=6))
        for j in range(12):
            policies.append(policy(j, f"policy {j}", f"body {j}"))
            table[f"policy {j} body {j}"] = unit(*rng.normal(size=6))
        rels = discover_relations(intents, policies, MapProvider(table), threshold=0.1)
        assert all(r.embed_score >= 0.1 for r in rels)

    def test_ranks_are_unique_permutation(self):
        rng = np.random.default_rng(5)
        table = {"cùng nhóm": unit(*rng.normal(size=4))}
        policies = []
        for j in range(6):
            policies.append(policy(j, f"chủ đề {j}", "nội dung chung"))
            table[f"chủ đề {j} nội dung chung"] = unit(*(rng.normal(size=4) * 0.1 + table["cùng nhóm"]))
        intents = [intent(0, "cùng nhóm")]
        rels = discover_relations(intents, policies, MapProvider(table), threshold=-0.5, top_k=4)
        assert sorted(r.rank for r in rels) == [1, 2, 3, 4]

    def test_policy_embedding_text_truncated_at_512_tokens(self):
        seen = []

        class Spy:
            kind = "spy"
            dim = 2

            def embed(self, texts):
                seen.extend(texts)
                return np.tile(np.array([1.0, 0.0]), (len(texts), 1))

        body = " ".join(f"w{i}" for i in range(600))
        discover_relations([intent(0, "q")], [policy(0, "title", body)], Spy(), threshold=0.0)
        policy_text = seen[1]
        assert len(policy_text.split()) == 1 + 512
        assert policy_text.split()[-1] == "w511"

    def test_bruteforce_pair_equality_and_monotonicity(self):
        rng = np.random.default_rng(11)
        intents = [intent(i, f"nhu cầu {i}") for i in range(10)]
        policies = [policy(j, f"quy định {j}", f"điều khoản {j}") for j in range(15)]
        table = {f"nhu cầu {i}": unit(*rng.normal(size=8)) for i in range(10)}
        table.update(
            {f"quy định {j} điều khoản {j}": unit(*rng.normal(size=8)) for j in range(15)}
        )
        provider = MapProvider(table)
        ivecs = np.stack([table[f"nhu cầu {i}"] for i in range(10)])
        pvecs = np.stack([table[f"quy định {j} điều khoản {j}"] for j in range(15)])
        sims = ivecs @ pvecs.T

        prev_pairs = None
        for tau in (0.9, 0.5, 0.32, 0.1):
            rels = discover_relations(intents, policies, provider, threshold=tau, top_k=10)
            got = {(r.intent_id, r.policy_id) for r in rels}
            want = set()
            for i in range(10):
                cands = sorted(
                    (j for j in range(15) if sims[i, j] >= tau),
                    key=lambda j: (-sims[i, j], f"p{j}"),
                )[:10]
                want |= {(f"i{i}", f"p{j}") for j in cands}
            assert got == want
            if prev_pairs is not None:
                assert prev_pairs <= got  # lowering tau only adds pairs
            prev_pairs = got

    def test_rerank_orders_by_blend(self):
        # two policies with equal cosine; tf-idf similarity must break the tie
        table = {
            "nộp học phí": unit(1, 1),
            "Gia hạn học phí học phí sinh viên": unit(1, 1),
            "Quy chế thi cử nghiêm túc": unit(1, 1),
        }
        intents = [intent(0, "nộp học phí")]
        policies = [
            policy(7, "Quy chế thi", "cử nghiêm túc"),
            policy(9, "Gia hạn học phí", "học phí sinh viên"),
        ]
        rels = discover_relations(intents, policies, MapProvider(table), threshold=0.0)
        by_rank = sorted(rels, key=lambda r: r.rank)
        assert by_rank[0].policy_id == "p9"  # shares "học phí" with the label


class TestRelationMetrics:
    def _mirror_table2(self):
        intents = [intent(i, f"t {i}") for i in range(243)]
        policies = [policy(j, f"p {j}") for j in range(237)]
        rels = []
        linked = 243 - 53
        k = 0
        while len(rels) < 613:
            rels.append(Relation(f"i{k % linked}", f"p{k % 237}", 0.5, 0.5, 1))
            k += 1
        gold = [(f"i{linked + j}", f"p{j}") for j in range(22)]
        return intents, policies, rels, gold

    def test_table2_field_layout(self):
        intents, policies, rels, gold = self._mirror_table2()
        report = relation_metrics(rels, intents, policies, gold)
        assert report.to_table() == {
            "entity_pair": ["Intent", "Policy"],
            "no_of_entities": [243, 237],
            "discovered_relationships": 613,
            "non_associative_intents": 53,
            "overlooked_intents": 22,
        }

    def test_gold_with_other_relations_not_overlooked(self):
        intents = [intent(0, "a"), intent(1, "b")]
        policies = [policy(0, "x"), policy(1, "y")]
        rels = [Relation("i0", "p1", 0.9, 0.9, 1)]
        report = relation_metrics(rels, intents, policies, gold=[("i0", "p0")])
        assert report.n_overlooked == 0

    def test_empty_gold_leaves_overlooked_unset(self):
        intents = [intent(0, "a")]
        policies = [policy(0, "x")]
        report = relation_metrics([], intents, policies, gold=None)
        assert report.n_overlooked is None
        assert "overlooked_intents" not in report.to_table()

    def test_unknown_ids(self):
        intents = [intent(0, "a")]
        policies = [policy(0, "x")]
        with pytest.raises(UnknownId):
            relation_metrics([Relation("i9", "p0", 1, 1, 1)], intents, policies)
        with pytest.raises(UnknownId):
            relation_metrics([], intents, policies, gold=[("i0", "p9")])

    def test_empty_policy_title_rejected(self):
        with pytest.raises(ValueError):
            PolicyEntity("p", "", "body")
