"""
Pyramid decoder and prediction heads.
"""

import numpy as np
import pytest
from scipy.special import expit

from occflow.decoder import PyramidDecoder, to_predictions
from occflow.errors import ConfigError
from occflow.tensor import Tensor


def _features(rng, cfg, steps=None):
    s1, s2, s3 = cfg.feature_sizes
    return (
        Tensor(rng.normal(size=(steps or cfg.T_f, s3, s3, cfg.latent))),
        Tensor(rng.normal(size=(1, s2, s2, 2 * cfg.C))),
        Tensor(rng.normal(size=(1, s1, s1, cfg.C))),
    )


class TestPyramidDecoder:
    def test_full_resolution_heads(self, rng, micro_cfg):
        occ, flow = PyramidDecoder(micro_cfg, rng)(*_features(rng, micro_cfg))
        assert occ.shape == flow.shape == (2, 32, 32, 2)

    def test_level_widths(self, rng, micro_cfg):
        dec = PyramidDecoder(micro_cfg, rng)
        widths = [conv.weight.shape[2:] for conv in dec.levels]
        assert widths == [(24, 8), (8, 6), (6, 4), (4, 4)]
        assert dec.res2.weight.shape == (1, 1, 12, 8)
        assert dec.res1.weight.shape == (1, 1, 6, 6)

    def test_steps_share_weights(self, rng, micro_cfg):
        dec = PyramidDecoder(micro_cfg, rng)
        fused, h2, h1 = _features(rng, micro_cfg)
        both, _ = dec(fused, h2, h1)
        single, _ = dec(fused[1:2], h2, h1)
        np.testing.assert_allclose(both.data[1], single.data[0], atol=1e-12)

    def test_one_cell_reaches_only_its_cone(self, rng, desk_cfg):
        dec = PyramidDecoder(desk_cfg, rng)
        fused, h2, h1 = _features(rng, desk_cfg)
        base_occ, base_flow = dec(fused, h2, h1)
        bumped = fused.data.copy()
        bumped[1, 0, 0] += 5.0
        occ, flow = dec(Tensor(bumped), h2, h1)
        diff = np.concatenate([occ.data - base_occ.data, flow.data - base_flow.data], axis=-1)
        changed = np.abs(diff).max(axis=-1) > 1e-12
        # four rounds of x2 upsample then 3x3 conv: cell 0 reaches output rows and columns 0..30
        assert not changed[[0, 2, 3]].any()
        assert changed[1, :31, :31].any()
        assert not changed[1, 31:].any()
        assert not changed[1, :, 31:].any()

    def test_residual_mismatch(self, rng, micro_cfg):
        dec = PyramidDecoder(micro_cfg, rng)
        fused, h2, h1 = _features(rng, micro_cfg)
        with pytest.raises(ConfigError, match="res1"):
            dec(fused, h2, Tensor(np.zeros((1, 4, 4, micro_cfg.C))))


class TestPredictions:
    def test_sigmoid_split(self, rng):
        logits = rng.normal(size=(2, 4, 4, 2))
        flow = rng.normal(size=(2, 4, 4, 2))
        preds = to_predictions(logits, flow)
        np.testing.assert_allclose(preds.obs, expit(logits[..., 0]))
        np.testing.assert_allclose(preds.occ, expit(logits[..., 1]))
        np.testing.assert_array_equal(preds.flow, flow)
        assert len(preds) == 2

    def test_probabilities_in_range(self):
        preds = to_predictions(np.array([[[[-800.0, 800.0]]]]), np.zeros((1, 1, 1, 2)))
        assert preds.obs.item() == 0.0 and preds.occ.item() == 1.0
