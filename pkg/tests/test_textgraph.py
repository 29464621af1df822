"""Graph-construction tests against brute-force oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bioie.corpus import (
    Document,
    EmbeddingTable,
    attach_dependencies,
    build_vocabulary,
    tokenize,
)
from bioie.textgraph import (
    CorpusGraphs,
    WordPairStats,
    build_corpus_graphs,
    build_semantic_graph,
    build_sequence_graph,
    build_syntactic_graph,
    dump_graphs,
    project_adjacency,
)

LN_10_9 = 0.10536051565782630


def doc_from(words, doc_id="d0"):
    text = " ".join(words)
    return Document(doc_id, "synthetic", text, tokenize(text), [])


def table_for(vocab, rows):
    dim = len(next(iter(rows.values())))
    vectors = np.zeros((vocab.size, dim))
    for tok, vec in rows.items():
        vectors[vocab.id(tok)] = vec
    return EmbeddingTable(dim, vectors, 1.0)


def brute_force_pmi(docs, vocab, window):
    """Window enumeration oracle, written independently of the builder."""
    windows = []
    for doc in docs:
        ids = [vocab.id(t.surface) for t in doc.tokens if vocab.id(t.surface) > 1]
        if not ids:
            continue
        if len(ids) <= window:
            windows.append(ids)
        else:
            windows.extend(ids[s:s + window] for s in range(len(ids) - window + 1))
    total = len(windows)
    weights = {}
    if total == 0:
        return weights
    vocab_ids = sorted({i for w in windows for i in w})
    for a_pos, a in enumerate(vocab_ids):
        for b in vocab_ids[a_pos + 1:]:
            n_ab = sum(1 for w in windows if a in w and b in w)
            if n_ab == 0:
                continue
            p_ab = n_ab / total
            p_a = sum(1 for w in windows if a in w) / total
            p_b = sum(1 for w in windows if b in w) / total
            val = math.log(p_ab / (p_a * p_b))
            if val > 0:
                weights[(a, b)] = val
    return weights


class TestSemanticGraph:
    def test_identical_vectors_make_edge(self):
        docs = [doc_from(["alpha", "beta"])]
        vocab = build_vocabulary(docs)
        table = table_for(vocab, {"alpha": [1.0, 0.0], "beta": [2.0, 0.0]})
        stats = build_semantic_graph(docs, table, vocab, theta=0.9)
        assert stats.weight(vocab.id("alpha"), vocab.id("beta")) == 1.0

    def test_orthogonal_vectors_no_edge(self):
        docs = [doc_from(["alpha", "beta"])]
        vocab = build_vocabulary(docs)
        table = table_for(vocab, {"alpha": [1.0, 0.0], "beta": [0.0, 1.0]})
        stats = build_semantic_graph(docs, table, vocab, theta=0.5)
        assert len(stats) == 0

    def test_per_document_vectors_fractional_weight(self):
        docs = [doc_from(["alpha", "beta"], "d0"), doc_from(["alpha", "beta"], "d1")]
        vocab = build_vocabulary(docs)
        a, b = vocab.id("alpha"), vocab.id("beta")
        per_doc = {
            "d0": {a: np.array([1.0, 0.0]), b: np.array([1.0, 0.0])},
            "d1": {a: np.array([1.0, 0.0]), b: np.array([0.0, 1.0])},
        }
        stats = build_semantic_graph(docs, per_doc, vocab, theta=0.9)
        assert stats.weight(a, b) == pytest.approx(0.5)

    def test_zero_norm_vector_skipped(self, caplog):
        docs = [doc_from(["alpha", "beta"])]
        vocab = build_vocabulary(docs)
        table = table_for(vocab, {"alpha": [0.0, 0.0], "beta": [1.0, 0.0]})
        with caplog.at_level("WARNING"):
            stats = build_semantic_graph(docs, table, vocab, theta=0.5)
        assert len(stats) == 0
        assert "zero-norm" in caplog.text

    def test_invalid_theta(self):
        with pytest.raises(ValueError):
            build_semantic_graph([], EmbeddingTable(2, np.zeros((2, 2)), 0.0),
                                 build_vocabulary([]), theta=1.5)

    @given(st.integers(0, 500))
    @settings(max_examples=25, deadline=None)
    def test_raising_theta_never_adds_edges(self, seed):
        rng = np.random.default_rng(seed)
        words = [f"w{i}" for i in range(6)]
        docs = [doc_from(list(rng.choice(words, size=5)), f"d{k}")
                for k in range(4)]
        vocab = build_vocabulary(docs)
        table = EmbeddingTable(
            3, np.abs(rng.uniform(0.1, 1.0, (vocab.size, 3))), 1.0)
        low = build_semantic_graph(docs, table, vocab, theta=0.5)
        high = build_semantic_graph(docs, table, vocab, theta=0.8)
        assert set(high.weights) <= set(low.weights)


class TestSyntacticGraph:
    def test_single_edge_full_weight(self):
        doc = attach_dependencies(doc_from(["the", "cat"]), None)
        vocab = build_vocabulary([doc])
        stats = build_syntactic_graph([doc], vocab)
        assert stats.weight(vocab.id("the"), vocab.id("cat")) == 1.0

    def test_no_edges_empty_stats(self):
        docs = [doc_from(["a", "b"])]  # no dep edges attached
        vocab = build_vocabulary(docs)
        assert len(build_syntactic_graph(docs, vocab)) == 0

    def test_three_of_four_cooccurrence_docs(self):
        linked = [attach_dependencies(doc_from(["x", "y"], f"d{i}"), None)
                  for i in range(3)]
        # fourth doc contains both words but no dependency between them
        free = doc_from(["x", "z", "y"], "d3")
        free.dep_edges = [(0, 1, "adj")]
        docs = linked + [free]
        vocab = build_vocabulary(docs)
        stats = build_syntactic_graph(docs, vocab)
        assert stats.weight(vocab.id("x"), vocab.id("y")) == pytest.approx(0.75)


class TestSequenceGraph:
    def test_negative_pmi_clipped(self):
        docs = [doc_from(["a", "b", "c", "a"])]
        vocab = build_vocabulary(docs)
        stats = build_sequence_graph(docs, vocab, window=2)
        # pmi(a, b) = ln(3/4) < 0 -> clipped to zero
        assert stats.weight(vocab.id("a"), vocab.id("b")) == 0.0

    def test_hand_enumerated_value(self):
        docs = [doc_from(["a", "b", "x", "y", "a", "b"])]
        vocab = build_vocabulary(docs)
        stats = build_sequence_graph(docs, vocab, window=2)
        assert stats.weight(vocab.id("a"), vocab.id("b")) == pytest.approx(
            LN_10_9, abs=1e-12)

    def test_single_word_corpus(self):
        docs = [doc_from(["solo"])]
        vocab = build_vocabulary(docs)
        assert len(build_sequence_graph(docs, vocab, window=5)) == 0

    def test_window_too_small(self):
        with pytest.raises(ValueError):
            build_sequence_graph([], build_vocabulary([]), window=1)

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_matches_brute_force_exactly(self, seed):
        rng = np.random.default_rng(seed)
        words = [f"w{i}" for i in range(rng.integers(2, 9))]
        docs = []
        for k in range(rng.integers(1, 4)):
            length = int(rng.integers(1, 68))
            docs.append(doc_from(list(rng.choice(words, size=length)), f"d{k}"))
        window = int(rng.integers(2, 12))
        vocab = build_vocabulary(docs)
        stats = build_sequence_graph(docs, vocab, window)
        assert stats.weights == brute_force_pmi(docs, vocab, window)


class TestProjection:
    def graphs_for(self, docs, vocab, window=2):
        table = EmbeddingTable(2, np.zeros((vocab.size, 2)), 0.0)
        return build_corpus_graphs(docs, table, vocab, theta=0.9, window=window)

    def test_single_token(self):
        docs = [doc_from(["only"])]
        vocab = build_vocabulary(docs)
        adj = project_adjacency(docs[0], self.graphs_for(docs, vocab), vocab)
        for kind in ("semantic", "syntactic", "sequence"):
            assert np.array_equal(adj[kind].matrix, [[1.0]])
            assert np.array_equal(adj[kind].degree, [1.0])

    def test_no_corpus_edge_gives_identity(self):
        docs = [doc_from(["p", "q"])]
        vocab = build_vocabulary(docs)
        graphs = self.graphs_for(docs, vocab)
        adj = project_adjacency(docs[0], graphs, vocab)
        assert np.array_equal(adj["semantic"].matrix, np.eye(2))

    def test_known_sequence_weight_projected(self):
        docs = [doc_from(["a", "b", "x", "y", "a", "b"], "big")]
        vocab = build_vocabulary(docs)
        graphs = self.graphs_for(docs, vocab)
        two = doc_from(["a", "b"], "small")
        adj = project_adjacency(two, graphs, vocab)["sequence"]
        expected = np.array([[1.0, LN_10_9], [LN_10_9, 1.0]])
        assert np.allclose(adj.matrix, expected, atol=1e-12)
        assert np.allclose(adj.degree, [1 + LN_10_9, 1 + LN_10_9], atol=1e-12)

    def test_pad_isolated(self):
        from bioie.corpus import normalize_length
        base = doc_from([f"t{i}" for i in range(10)])
        doc = normalize_length(base)
        vocab = build_vocabulary([doc])
        graphs = self.graphs_for([doc], vocab, window=3)
        adj = project_adjacency(doc, graphs, vocab)["sequence"]
        assert np.array_equal(adj.matrix[10:], np.eye(50)[10:])

    @given(st.integers(0, 300))
    @settings(max_examples=25, deadline=None)
    def test_symmetric_positive_diagonal_degrees(self, seed):
        rng = np.random.default_rng(seed)
        words = [f"w{i}" for i in range(5)]
        docs = [doc_from(list(rng.choice(words, size=int(rng.integers(1, 20)))),
                         f"d{k}") for k in range(3)]
        vocab = build_vocabulary(docs)
        graphs = self.graphs_for(docs, vocab, window=3)
        for doc in docs:
            for adj in project_adjacency(doc, graphs, vocab).values():
                assert np.array_equal(adj.matrix, adj.matrix.T)
                assert np.all(np.diag(adj.matrix) > 0)
                assert np.all(adj.degree >= 1.0)


class TestWordPairStatsInvariants:
    def test_symmetric_lookup_and_nonnegative(self):
        docs = [doc_from(["a", "b", "a", "b", "c"])]
        vocab = build_vocabulary(docs)
        stats = build_sequence_graph(docs, vocab, window=3)
        for (a, b), w in stats.weights.items():
            assert w >= 0
            assert stats.weight(a, b) == stats.weight(b, a)


def test_dump_graphs_sorted_and_diffable(tmp_path):
    docs = [doc_from(["b", "a", "b", "a"])]
    vocab = build_vocabulary(docs)
    docs = [attach_dependencies(d, None) for d in docs]
    table = EmbeddingTable(2, np.ones((vocab.size, 2)), 1.0)
    graphs = build_corpus_graphs(docs, table, vocab, theta=0.9, window=2)
    out = tmp_path / "graphs.tsv"
    dump_graphs(graphs, vocab, out)
    lines = out.read_text().splitlines()
    assert lines == sorted(lines)
    assert all(len(line.split("\t")) == 4 for line in lines)
