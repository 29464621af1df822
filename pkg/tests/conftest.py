"""Shared fixtures: small synthetic task data and model configs."""

import numpy as np
import pytest

from bioie.corpus import build_vocabulary, normalize_corpus, random_embeddings, synth_corpus
from bioie.layers import ModelConfig
from bioie.textgraph import build_corpus_graphs
from bioie.training import TaskData


def build_synth_task(counts, seed, d_w=24, theta=0.9, window=5,
                     normalize=True, style="a"):
    corpus = synth_corpus(counts, seed, style=style)
    docs, instances = corpus.documents, corpus.instances
    for doc in docs:
        doc.dep_edges = [(i, i + 1, "adj") for i in range(len(doc.tokens) - 1)]
    if normalize:
        docs, instances = normalize_corpus(docs, instances)
    vocab = build_vocabulary(docs)
    embeddings = random_embeddings(vocab, d_w, seed=seed)
    graphs = build_corpus_graphs(docs, embeddings, vocab, theta=theta,
                                 window=window)
    task = instances[0].task
    return TaskData({d.id: d for d in docs}, instances,
                    instances[0].label_set, vocab, embeddings, graphs, task)


SMALL_CONFIG_KWARGS = dict(d_w=24, d_p=8, max_dist=60, hidden=16, heads=4,
                           gcn_layers=1, dropout=0.2)


@pytest.fixture(scope="session")
def tiny_task():
    """20 candidate instances (10 positive) over 10 synthetic reports."""
    return build_synth_task({"Size": 10}, seed=3)


@pytest.fixture(scope="session")
def small_config(tiny_task):
    return ModelConfig(label_count=len(tiny_task.label_set),
                       **SMALL_CONFIG_KWARGS)
