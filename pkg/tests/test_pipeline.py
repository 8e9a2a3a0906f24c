"""
Full model, training loop and evaluation.
"""

import os

import numpy as np
import pytest

import config
from occflow.checkpoint import read_weights
from occflow.errors import ConfigError, ContractError, VersionError
from occflow.model import OccFlowNet, empty_inputs, input_memory_bytes, model_offset_flow_correlation
from occflow.nn import count_parameters
from occflow.rasterizer import build_sample
from occflow.scenario_gen import ScenarioSpec, generate, make_dataset
from occflow.scene import ModelConfig
from occflow.tensor import Tensor, get_default_dtype
from occflow.trainer import build_model, evaluate, evaluate_oracle, predict_dataset, score, train


@pytest.fixture
def micro_sample(micro_cfg):
    return build_sample(generate(3, ScenarioSpec(n_agents=2, n_occluded=1, motion="mixed"), micro_cfg), micro_cfg.n_max)


@pytest.fixture
def micro_data(micro_cfg):
    return make_dataset([0, 1], ScenarioSpec(n_agents=2, motion="linear"), micro_cfg)


# =============================================================================
# Model
# =============================================================================

class TestModel:
    def test_output_shapes(self, micro_cfg, micro_sample):
        out = OccFlowNet(micro_cfg, 0)(micro_sample.inputs)
        assert out.obs_logits.shape == out.occ_logits.shape == (2, 32, 32)
        assert out.flow.shape == (2, 32, 32, 2)
        assert out.offsets.shape == (2, 2, 2, 2)

    def test_predictions_are_probabilities(self, micro_cfg, micro_sample):
        preds = OccFlowNet(micro_cfg, 0).predict(micro_sample.inputs)
        assert len(preds) == 2
        assert np.all((preds.obs >= 0) & (preds.obs <= 1))
        assert np.all((preds.occ >= 0) & (preds.occ <= 1))

    def test_seeded_init_is_deterministic(self, micro_cfg, micro_sample):
        a = OccFlowNet(micro_cfg, 7).predict(micro_sample.inputs)
        b = OccFlowNet(micro_cfg, 7).predict(micro_sample.inputs)
        np.testing.assert_array_equal(a.obs, b.obs)
        np.testing.assert_array_equal(a.flow, b.flow)

    def test_empty_scene(self, micro_cfg):
        preds = OccFlowNet(micro_cfg, 0).predict(empty_inputs(micro_cfg))
        assert np.all(np.isfinite(preds.flow))

    def test_ablations_drop_modules(self, micro_cfg, micro_sample):
        full = count_parameters(OccFlowNet(micro_cfg, 0))
        no_fg = OccFlowNet(ModelConfig.preset("micro", use_fg_msa=False), 0)
        no_vec = OccFlowNet(ModelConfig.preset("micro", use_vector_encoding=False), 0)
        assert count_parameters(no_fg) < full
        assert count_parameters(no_vec) < full
        assert no_fg(micro_sample.inputs).offsets is None
        assert no_vec.predict(micro_sample.inputs).flow.shape == (2, 32, 32, 2)

    def test_wrong_input_names_stage(self, micro_cfg):
        inputs = empty_inputs(micro_cfg)
        inputs.occupancy = np.zeros((4, 32, 32))
        with pytest.raises(ConfigError, match="visual: patch_embed"):
            OccFlowNet(micro_cfg, 0)(inputs)

    def test_per_step_modules_own_their_parameters(self, desk_cfg):
        model = OccFlowNet(desk_cfg, 0)
        assert len(model.cross) == len(model.fg_msa.out) == len(model.fg_msa.kv_proj) == desk_cfg.T_f
        for group in (model.cross, model.fg_msa.out, model.fg_msa.kv_proj):
            owned = [{id(p) for p in m.parameters()} for m in group]
            assert all(a.isdisjoint(b) for i, a in enumerate(owned) for b in owned[i + 1:])
        stages = (model.visual.stage1, model.visual.stage2, model.visual.stage3)
        assert [(s.wsa.attn.heads, s.swsa.attn.heads) for s in stages] == [(3, 3), (6, 6), (12, 12)]
        assert model.trajectory.dim == model.fg_msa.dim == 4 * desk_cfg.C

    def test_input_memory(self, micro_cfg):
        # 3·32·32 bits, 5·32·32 int16 values, 3·3·6 + 3·3 vector floats
        assert input_memory_bytes(micro_cfg) == 384 + 2 * 5120 + 4 * 63

    def test_correlation_is_bounded(self, micro_cfg, micro_sample):
        r = model_offset_flow_correlation(OccFlowNet(micro_cfg, 0), micro_sample)
        assert -1.0 <= r <= 1.0

    @pytest.mark.parametrize("training", [True, False])
    def test_correlation_keeps_mode(self, micro_cfg, micro_sample, training):
        model = OccFlowNet(micro_cfg, 0).train(training)
        model_offset_flow_correlation(model, micro_sample)
        assert all(m.training is training for m in model.modules())

    def test_float32_precision(self, micro_sample):
        cfg = ModelConfig.preset("micro", precision="float32")
        model = build_model(cfg)
        assert model.decoder.occ_head.weight.data.dtype == np.float32
        assert np.all(np.isfinite(model.predict(micro_sample.inputs).obs))

    def test_float32_model_leaves_default_dtype(self, micro_data):
        cfg = ModelConfig.preset("micro", precision="float32", epochs=1)
        model = train(cfg, micro_data, max_steps=1).model
        assert get_default_dtype() is np.float64
        assert Tensor(np.zeros(3)).data.dtype == np.float64
        assert all(p.data.dtype == np.float32 for p in model.parameters())


# =============================================================================
# Training
# =============================================================================

class TestTrain:
    def test_checkpoint_per_epoch(self, tmp_path, micro_data):
        cfg = ModelConfig.preset("micro", epochs=2)
        result = train(cfg, micro_data, seed=0, out_dir=str(tmp_path))
        assert result.steps == 4
        assert [os.path.basename(p) for p in result.checkpoints] == ["epoch_000.ofk", "epoch_001.ofk"]
        digest, state = read_weights(result.checkpoint)
        assert digest == cfg.digest()
        assert set(state) == {n for n, _ in result.model.named_parameters()}

    def test_same_seed_same_losses(self, micro_data):
        cfg = ModelConfig.preset("micro", epochs=1)
        a = train(cfg, micro_data, seed=5)
        b = train(cfg, micro_data, seed=5)
        assert a.losses == b.losses

    def test_max_steps(self, micro_data):
        result = train(ModelConfig.preset("micro", epochs=5), micro_data, max_steps=3)
        assert result.steps == 3 and len(result.losses) == 3

    def test_gradient_accumulation_runs(self, micro_data):
        result = train(ModelConfig.preset("micro", epochs=1, grad_accum=2), micro_data)
        assert all(np.isfinite(result.losses))

    def test_parameters_change(self, micro_cfg, micro_data):
        before = build_model(micro_cfg, 0).state_dict()
        after = train(ModelConfig.preset("micro", epochs=1), micro_data, seed=0).model.state_dict()
        assert any(not np.array_equal(before[k], after[k]) for k in before)

    def test_empty_dataset(self, micro_cfg):
        with pytest.raises(ContractError):
            train(micro_cfg, [])


# =============================================================================
# Evaluation
# =============================================================================

class TestEvaluate:
    def test_oracle_is_perfect(self, micro_data):
        report = evaluate_oracle(micro_data)
        assert report.observed_auc == pytest.approx(1.0)
        assert report.observed_soft_iou == pytest.approx(1.0)
        assert report.flow_epe == 0.0

    def test_checkpoint_matches_model(self, tmp_path, micro_data):
        cfg = ModelConfig.preset("micro", epochs=1)
        result = train(cfg, micro_data, seed=1, out_dir=str(tmp_path))
        from_model = evaluate(result.model, micro_data)
        from_file = evaluate(result.checkpoint, micro_data, cfg)
        assert from_model.to_json() == from_file.to_json()

    def test_checkpoint_needs_config(self, micro_data):
        with pytest.raises(ContractError):
            evaluate("whatever.ofk", micro_data)

    def test_checkpoint_from_other_config(self, tmp_path, micro_data):
        result = train(ModelConfig.preset("micro", epochs=1), micro_data, out_dir=str(tmp_path))
        with pytest.raises(VersionError):
            evaluate(result.checkpoint, micro_data, ModelConfig.preset("micro", C=12))

    def test_scoring_is_thread_independent(self, monkeypatch, micro_cfg, micro_data):
        preds = predict_dataset(build_model(micro_cfg), micro_data)
        pairs = [(p, s.targets) for p, s in zip(preds, micro_data)]
        serial = score(pairs).to_json()
        monkeypatch.setattr(config, "THREADS", 2)
        assert score(pairs).to_json() == serial
