"""Model-assembly tests: init, variants, forward, loss, parameter counts."""

import math
from dataclasses import replace

import numpy as np
import pytest

import bioie.autodiff as ad
from bioie.layers import ModelConfig
from bioie.pipeline import (
    ABLATION_VARIANTS,
    count_parameters,
    encode_instances,
    forward,
    init_model,
    loss,
    make_variant,
    parameter_group_counts,
    predict_proba,
)
from bioie.training import make_optimizer

from conftest import build_synth_task


def encode_all(task, config):
    return encode_instances(task.instances, task.documents, task.vocab,
                            task.graphs, config)


class TestInitModel:
    def test_same_seed_bitwise_identical(self, tiny_task, small_config):
        a = init_model(small_config, tiny_task.vocab, tiny_task.embeddings,
                       seed=5, label_set=tiny_task.label_set)
        b = init_model(small_config, tiny_task.vocab, tiny_task.embeddings,
                       seed=5, label_set=tiny_task.label_set)
        assert set(a.params) == set(b.params)
        for name in a.params:
            assert np.array_equal(a.params[name].data, b.params[name].data)

    def test_no_gcn_registry_has_no_gcn_names(self, tiny_task, small_config):
        cfg = make_variant(small_config, "no_gcn")
        model = init_model(cfg, tiny_task.vocab, tiny_task.embeddings,
                           seed=0, label_set=tiny_task.label_set)
        assert not any(name.startswith("gcn.") for name in model.params)

    def test_attention_output_projection_shape(self, tiny_task):
        cfg = ModelConfig(hidden=128, heads=8, label_count=2)
        model = init_model(cfg, tiny_task.vocab, None, seed=0,
                           label_set=tiny_task.label_set)
        assert model.params["attn.wo"].shape == (256, 256)

    def test_pretrained_table_frozen(self, tiny_task, small_config):
        model = init_model(small_config, tiny_task.vocab, tiny_task.embeddings,
                           seed=0, label_set=tiny_task.label_set)
        assert "embed.word" in model.buffers
        assert not model.buffers["embed.word"].requires_grad
        unfrozen = init_model(make_variant(small_config, "no_pretrained"),
                              tiny_task.vocab, tiny_task.embeddings, seed=0,
                              label_set=tiny_task.label_set)
        assert "embed.word" in unfrozen.params


class TestMakeVariant:
    def test_full_unchanged(self, small_config):
        assert make_variant(small_config, "full") == small_config

    def test_no_position_narrows_token_width(self):
        cfg = make_variant(ModelConfig(d_w=100, d_p=20), "no_position")
        assert cfg.token_width == 100

    def test_unknown_variant(self, small_config):
        with pytest.raises(ValueError, match="variant"):
            make_variant(small_config, "no_dropout")

    def test_seven_variants_distinct_parameter_counts(self, tiny_task):
        base = ModelConfig(label_count=2)  # full-size defaults
        counts = {}
        for variant in ABLATION_VARIANTS:
            model = init_model(make_variant(base, variant), tiny_task.vocab,
                               None, seed=0, label_set=tiny_task.label_set)
            counts[variant] = count_parameters(model)
        assert len(set(counts.values())) == len(ABLATION_VARIANTS)


class TestCountParameters:
    def test_single_affine(self, tiny_task):
        cfg = ModelConfig(d_w=4, d_p=2, hidden=2, heads=1, gcn_layers=1,
                          label_count=2, attention="none", use_gcn=False,
                          use_position=False)
        model = init_model(cfg, tiny_task.vocab, None, seed=0,
                           label_set=tiny_task.label_set)
        assert model.params["clf.w"].size + model.params["clf.b"].size == \
            cfg.d_model * 2 + 2

    def test_no_gcn_delta_is_group_plus_narrowing(self, tiny_task, small_config):
        full = init_model(small_config, tiny_task.vocab, tiny_task.embeddings,
                          seed=0, label_set=tiny_task.label_set)
        lean = init_model(make_variant(small_config, "no_gcn"), tiny_task.vocab,
                          tiny_task.embeddings, seed=0,
                          label_set=tiny_task.label_set)
        gcn_group = parameter_group_counts(full)["gcn"]
        narrowing = small_config.d_model * small_config.label_count
        assert count_parameters(full) - count_parameters(lean) == \
            gcn_group + narrowing

    def test_counting_idempotent(self, tiny_task, small_config):
        model = init_model(small_config, tiny_task.vocab, tiny_task.embeddings,
                           seed=0, label_set=tiny_task.label_set)
        assert count_parameters(model) == count_parameters(model)


class TestForward:
    def model_and_batch(self, task, config, seed=0):
        model = init_model(config, task.vocab, task.embeddings, seed=seed,
                           label_set=task.label_set)
        return model, encode_all(task, config)

    def test_logit_shape(self, tiny_task, small_config):
        model, enc = self.model_and_batch(tiny_task, small_config)
        with ad.no_grad():
            logits = forward(model, enc[:4], "eval")
        assert logits.shape == (4, 2)

    def test_finite_logits_and_loss(self, tiny_task, small_config):
        model, enc = self.model_and_batch(tiny_task, small_config)
        ad.reset_tape()
        out = loss(model, enc[:4], "train")
        assert np.isfinite(out.item())
        ad.reset_tape()

    def test_batch_invariance(self, tiny_task, small_config):
        model, enc = self.model_and_batch(tiny_task, small_config)
        with ad.no_grad():
            batched = forward(model, enc[:5], "eval").data
            singles = np.vstack([forward(model, [e], "eval").data
                                 for e in enc[:5]])
        assert np.max(np.abs(batched - singles)) < 1e-10

    def test_eval_mode_deterministic_bitwise(self, tiny_task, small_config):
        model, enc = self.model_and_batch(tiny_task, small_config)
        with ad.no_grad():
            a = forward(model, enc[:3], "eval").data
            b = forward(model, enc[:3], "eval").data
        assert np.array_equal(a, b)

    def test_softmax_rows_valid_distribution(self, tiny_task, small_config):
        model, enc = self.model_and_batch(tiny_task, small_config)
        probs = predict_proba(model, enc[:6])
        assert np.max(np.abs(probs.sum(axis=1) - 1.0)) < 1e-12
        assert np.all(probs >= 0)

    def test_every_variant_trains_one_step(self, tiny_task, small_config):
        for variant in ABLATION_VARIANTS:
            cfg = make_variant(small_config, variant)
            model = init_model(cfg, tiny_task.vocab, tiny_task.embeddings,
                               seed=1, label_set=tiny_task.label_set)
            enc = encode_all(tiny_task, cfg)
            frozen_before = {n: t.data.copy() for n, t in model.buffers.items()}
            params_before = {n: t.data.copy() for n, t in model.params.items()}
            opt = make_optimizer(model, lr=1e-3)
            ad.reset_tape()
            out = loss(model, enc[:4], "train")
            ad.backward(out)
            opt.step()
            ad.reset_tape()
            for name, before in frozen_before.items():
                assert np.array_equal(model.buffers[name].data, before), \
                    f"{variant}: frozen tensor {name} changed"
            assert any(not np.array_equal(model.params[n].data, params_before[n])
                       for n in params_before), f"{variant}: nothing trained"


class TestLoss:
    def test_uniform_logits_log2(self, tiny_task, small_config):
        model = init_model(small_config, tiny_task.vocab, tiny_task.embeddings,
                           seed=0, label_set=tiny_task.label_set)
        model.params["clf.w"].data[:] = 0.0
        model.params["clf.b"].data[:] = 0.0
        enc = encode_all(tiny_task, small_config)
        with ad.no_grad():
            out = loss(model, enc[:4], "eval")
        assert abs(out.item() - math.log(2)) < 1e-12

    def test_separated_logits_near_zero_loss(self, tiny_task, small_config):
        model = init_model(small_config, tiny_task.vocab, tiny_task.embeddings,
                           seed=0, label_set=tiny_task.label_set)
        enc = encode_all(tiny_task, small_config)
        with ad.no_grad():
            logits = forward(model, enc[:2], "eval").data
        rigged = ad.Tensor(np.array([[40.0, -40.0], [-40.0, 40.0]]))
        targets = [0, 1]
        assert ad.cross_entropy(rigged, targets).item() < 1e-8

    def test_full_pipeline_gradients(self, tiny_task, small_config):
        """Gradients through the whole forward match central differences."""
        model = init_model(small_config, tiny_task.vocab, tiny_task.embeddings,
                           seed=2, label_set=tiny_task.label_set)
        enc = encode_all(tiny_task, small_config)[:2]

        def f(_):
            return loss(model, enc, "eval")

        rng = np.random.default_rng(0)
        for name in ("lstm.fw.wx", "attn.head0.wq", "gcn.layer0.semantic.w",
                     "clf.w", "embed.pos_head"):
            err = ad.grad_check(f, model.params[name], epsilon=1e-5,
                                samples=4, rng=rng)
            assert err <= 1e-4, f"{name}: {err}"


class TestSemanticRebuild:
    def test_encoder_states_feed_semantic_graph(self, tiny_task, small_config):
        """Second-pass mode: per-document encoder states replace the
        static table when rebuilding the semantic graph."""
        from bioie.pipeline import word_states_from_bilstm
        from bioie.textgraph import build_semantic_graph

        model = init_model(small_config, tiny_task.vocab, tiny_task.embeddings,
                           seed=0, label_set=tiny_task.label_set)
        docs = list(tiny_task.documents.values())[:4]
        states = word_states_from_bilstm(model, docs)
        assert set(states) == {d.id for d in docs}
        stats = build_semantic_graph(docs, states, tiny_task.vocab, theta=0.95)
        for (a, b), w in stats.weights.items():
            assert 0.0 < w <= 1.0
            assert a < b
