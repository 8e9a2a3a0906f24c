"""
Offset head, flow-guided attention and trajectory cross-attention.
"""

import math

import numpy as np

from occflow.attention import msa
from occflow.fusion import FlowGuidedAttention, OffsetHead, TrajectoryCrossAttention
from occflow.gradcheck import randomize_offsets
from occflow.scene import ModelConfig
from occflow.tensor import Tensor, finite_difference_check


def _h3(rng, cfg):
    h = cfg.feature_sizes[2]
    return Tensor(rng.normal(size=(1, h, h, cfg.latent)))


# =============================================================================
# Offsets
# =============================================================================

class TestOffsetHead:
    def test_starts_at_identity(self, rng, micro_cfg):
        offsets = OffsetHead(micro_cfg, rng)(_h3(rng, micro_cfg))
        assert offsets.shape == (2, 2, 2, 2)
        np.testing.assert_array_equal(offsets.data, np.zeros((2, 2, 2, 2)))

    def test_tanh_scaling(self, rng, desk_cfg):
        head = OffsetHead(desk_cfg, rng)
        head.fc2.bias.data[...] = math.atanh(0.5)
        offsets = head(_h3(rng, desk_cfg)).data
        assert desk_cfg.fg_offset_scale == 2.0
        np.testing.assert_allclose(offsets, np.full((4, 4, 4, 2), 1.0), atol=1e-12)

    def test_bounded_by_scale(self, rng, micro_cfg):
        head = OffsetHead(micro_cfg, rng)
        randomize_offsets(head, rng, scale=50.0)
        offsets = head(_h3(rng, micro_cfg)).data
        assert np.all(np.abs(offsets) <= micro_cfg.fg_offset_scale)

    def test_step_channel_layout(self, rng, micro_cfg):
        head = OffsetHead(micro_cfg, rng)
        head.fc2.bias.data[...] = [0.1, 0.2, 0.3, 0.4]
        offsets = head(_h3(rng, micro_cfg)).data
        np.testing.assert_allclose(offsets[1, 0, 1], np.tanh([0.3, 0.4]) * micro_cfg.fg_offset_scale)


# =============================================================================
# Flow-guided attention
# =============================================================================

class TestFlowGuidedAttention:
    def test_one_map_per_future_step(self, rng, micro_cfg):
        outs = FlowGuidedAttention(micro_cfg, rng)(_h3(rng, micro_cfg), None)
        assert len(outs) == micro_cfg.T_f
        assert all(o.shape == (1, 2, 2, 24) for o in outs)

    def test_zero_offsets_match_plain_attention(self, rng, desk_cfg):
        layer = FlowGuidedAttention(desk_cfg, rng)
        h3 = _h3(rng, desk_cfg)
        zero = Tensor(np.zeros((desk_cfg.T_f, 4, 4, 2)))
        warped = layer(h3, zero)
        plain = layer(h3, None)
        for a, b in zip(warped, plain):
            np.testing.assert_allclose(a.data, b.data, atol=1e-12)

    def test_head_matches_manual_attention(self, rng, micro_cfg):
        layer = FlowGuidedAttention(micro_cfg, rng)
        h3 = _h3(rng, micro_cfg)
        tokens = h3.data.reshape(4, 24)
        q = tokens @ layer.q_proj.weight.data + layer.q_proj.bias.data
        kv = tokens @ layer.kv_proj[1].weight.data + layer.kv_proj[1].bias.data
        bias = layer.bias().data[1:2]
        expected = msa(q[:, 24:], kv[:, :24], kv[:, 24:], 1, bias=bias, w_o=layer.out[1]).data
        np.testing.assert_allclose(layer.attend(h3, None)[1].data.reshape(4, 24), expected, atol=1e-12)

    def test_offsets_change_keys(self, rng, micro_cfg):
        layer = FlowGuidedAttention(micro_cfg, rng)
        h3 = _h3(rng, micro_cfg)
        moved = Tensor(np.full((2, 2, 2, 2), 0.5))
        assert not np.allclose(layer(h3, moved)[0].data, layer(h3, None)[0].data)

    def test_bypass_ignores_offsets(self, rng):
        cfg = ModelConfig.preset("micro", use_fg_msa=False)
        layer = FlowGuidedAttention(cfg, rng)
        h3 = _h3(rng, cfg)
        moved = Tensor(np.full((2, 2, 2, 2), 0.5))
        np.testing.assert_array_equal(layer(h3, moved)[0].data, layer(h3, None)[0].data)

    def test_gradient_through_offsets(self, rng, micro_cfg):
        layer = FlowGuidedAttention(micro_cfg, rng)
        h3 = _h3(rng, micro_cfg)
        w = rng.normal(size=(1, 2, 2, 24))
        start = rng.uniform(0.2, 0.8, size=(2, 2, 2, 2))
        err = finite_difference_check(lambda t: (layer(h3, t)[1] * w).sum(), start, floor=1e-6)
        assert err < 1e-4


# =============================================================================
# Cross-attention
# =============================================================================

class TestTrajectoryCrossAttention:
    def test_no_agents_passes_queries(self, rng, micro_cfg):
        layer = TrajectoryCrossAttention(micro_cfg, rng)
        h_o = _h3(rng, micro_cfg)
        off = Tensor(rng.normal(size=(2, 2, 2)))
        agents = Tensor(rng.normal(size=(3, 24)))
        out = layer(h_o, off, agents, np.zeros(3, dtype=bool))
        np.testing.assert_array_equal(out.data, layer.queries(h_o, off).data)

    def test_agents_shift_queries(self, rng, micro_cfg):
        layer = TrajectoryCrossAttention(micro_cfg, rng)
        h_o = _h3(rng, micro_cfg)
        off = Tensor(np.zeros((2, 2, 2)))
        agents = Tensor(rng.normal(size=(3, 24)))
        out = layer(h_o, off, agents, np.array([True, False, False])).data
        assert out.shape == (1, 2, 2, 24)
        assert not np.allclose(out, layer.queries(h_o, off).data)

    def test_masked_agents_do_not_leak(self, rng, micro_cfg):
        layer = TrajectoryCrossAttention(micro_cfg, rng)
        h_o = _h3(rng, micro_cfg)
        off = Tensor(np.zeros((2, 2, 2)))
        agents = rng.normal(size=(3, 24))
        mask = np.array([True, True, False])
        base = layer(h_o, off, Tensor(agents), mask).data
        agents[2] = 1e3
        np.testing.assert_allclose(layer(h_o, off, Tensor(agents), mask).data, base, atol=1e-12)

    def test_agent_order_does_not_matter(self, rng, micro_cfg):
        layer = TrajectoryCrossAttention(micro_cfg, rng)
        h_o = _h3(rng, micro_cfg)
        off = Tensor(rng.normal(size=(2, 2, 2)))
        agents = rng.normal(size=(3, 24))
        mask = np.array([True, True, False])
        perm = np.array([2, 0, 1])
        base = layer(h_o, off, Tensor(agents), mask).data
        permuted = layer(h_o, off, Tensor(agents[perm]), mask[perm]).data
        np.testing.assert_allclose(permuted, base, atol=1e-12)
