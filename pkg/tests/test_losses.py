"""
Loss terms and their weighted combination.
"""

import math

import numpy as np
import pytest

from occflow.losses import (
    WARP_EPS,
    bce_loss,
    flow_l1_loss,
    focal_loss,
    previous_occupancy,
    total_loss,
    warp_loss,
)
from occflow.rasterizer import build_targets
from occflow.scene import ModelConfig
from occflow.tensor import Tensor, finite_difference_check

LN2 = math.log(2.0)


class TestBCE:
    def test_zero_logit(self):
        assert bce_loss(np.zeros(1), np.ones(1)).item() == pytest.approx(LN2, abs=1e-15)

    def test_sums_over_cells(self):
        assert bce_loss(np.zeros((3, 4)), np.zeros((3, 4))).item() == pytest.approx(12 * LN2)

    def test_stable_for_large_logits(self):
        value = bce_loss(np.array([800.0, -800.0]), np.array([0.0, 1.0])).item()
        assert value == pytest.approx(1600.0)

    def test_targets_get_no_gradient(self, rng):
        err = finite_difference_check(lambda z: bce_loss(z, np.array([1.0, 0.0, 1.0])), rng.normal(size=3))
        assert err < 1e-6


class TestFocal:
    def test_positive_at_zero_logit(self):
        assert focal_loss(np.zeros(1), np.ones(1)).item() == pytest.approx(0.25 * 0.25 * LN2, abs=1e-15)

    def test_negative_at_zero_logit(self):
        assert focal_loss(np.zeros(1), np.zeros(1)).item() == pytest.approx(0.75 * 0.25 * LN2, abs=1e-15)

    def test_gamma_zero_is_weighted_bce(self, rng):
        z, t = rng.normal(size=6), (rng.uniform(size=6) > 0.5).astype(float)
        expected = sum((0.25 if ti else 0.75) * bce_loss(np.array([zi]), np.array([ti])).item() for zi, ti in zip(z, t))
        assert focal_loss(z, t, gamma=0.0).item() == pytest.approx(expected, rel=1e-12)

    def test_confident_hits_are_discounted(self):
        easy = focal_loss(np.array([4.0]), np.ones(1)).item()
        assert easy < 1e-3 * bce_loss(np.array([4.0]), np.ones(1)).item()

    def test_gradient(self, rng):
        t = np.array([1.0, 0.0, 1.0, 0.0])
        assert finite_difference_check(lambda z: focal_loss(z, t), rng.normal(size=4), floor=1e-6) < 1e-4


class TestWarpLoss:
    def test_perfect_flow_is_near_zero(self, translating_box):
        t = build_targets(translating_box)
        value = warp_loss(previous_occupancy(t), t.obs, t.flow, t.obs).item()
        cells = t.obs.size
        assert value == pytest.approx(-cells * math.log(1.0 - WARP_EPS), rel=1e-6)

    def test_zero_flow_is_penalised(self, translating_box):
        t = build_targets(translating_box)
        good = warp_loss(previous_occupancy(t), t.obs, t.flow, t.obs).item()
        bad = warp_loss(previous_occupancy(t), t.obs, np.zeros_like(t.flow), t.obs).item()
        assert bad > good + 10.0

    def test_previous_occupancy(self, translating_box):
        t = build_targets(translating_box)
        prev = previous_occupancy(t)
        assert prev.shape == t.obs.shape
        np.testing.assert_array_equal(prev[0], t.current_obs)
        np.testing.assert_array_equal(prev[2], t.obs[1])


class TestFlowL1:
    def test_occupied_cells_only(self):
        flow = np.zeros((1, 2, 2, 2))
        flow[0, 0, 0] = (1.0, -2.0)
        flow[0, 1, 1] = (5.0, 5.0)
        occupied = np.array([[[1.0, 0.0], [0.0, 0.0]]])
        assert flow_l1_loss(flow, np.zeros_like(flow), occupied).item() == 3.0


class TestTotalLoss:
    def test_weights_and_normalisation(self, rng, translating_box):
        t = build_targets(translating_box)
        cfg = ModelConfig.preset("micro")
        obs = Tensor(rng.normal(size=t.obs.shape))
        occ = Tensor(rng.normal(size=t.occ.shape))
        flow = Tensor(rng.normal(size=t.flow.shape))
        total, terms = total_loss(obs, occ, flow, t, cfg)
        T_f, h, w = t.obs.shape
        expected = (1000 * terms["obs"] + 1000 * terms["occ"] + 1000 * terms["warp"] + terms["focal"]) / (h * w * T_f)
        assert total.item() == pytest.approx(expected, rel=1e-12)
        assert terms["total"] == total.item()
        assert "flow_l1" not in terms

    def test_optional_flow_regression(self, rng, translating_box):
        t = build_targets(translating_box)
        cfg = ModelConfig.preset("micro", w_flow_l1=2.0)
        obs, occ = Tensor(np.zeros(t.obs.shape)), Tensor(np.zeros(t.occ.shape))
        flow = Tensor(np.zeros(t.flow.shape))
        _, with_l1 = total_loss(obs, occ, flow, t, cfg)
        _, without = total_loss(obs, occ, flow, t, ModelConfig.preset("micro"))
        assert with_l1["flow_l1"] == pytest.approx(3 * 8 * 2.0)
        T_f, h, w = t.obs.shape
        assert with_l1["total"] - without["total"] == pytest.approx(2.0 * with_l1["flow_l1"] / (h * w * T_f))

    def test_backward_reaches_every_stream(self, rng, translating_box):
        t = build_targets(translating_box)
        obs = Tensor(rng.normal(size=t.obs.shape), requires_grad=True)
        occ = Tensor(rng.normal(size=t.occ.shape), requires_grad=True)
        flow = Tensor(rng.normal(0.0, 0.3, size=t.flow.shape), requires_grad=True)
        total, _ = total_loss(obs, occ, flow, t)
        total.backward()
        assert all(g is not None and np.any(g != 0) for g in (obs.grad, occ.grad, flow.grad))
