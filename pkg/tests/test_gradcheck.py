"""
Finite-difference audit of the differentiable blocks.
"""

import numpy as np
import pytest

from occflow.gradcheck import (
    FLOOR,
    TOLERANCE,
    GradCheckResult,
    check_bilinear_warp,
    check_end_to_end,
    check_fg_msa,
    check_losses,
    check_msa,
    check_shifted_window,
    count_failures,
    fractional_indices,
    run_gradient_suite,
)
from occflow.warp import mesh_grid


class TestHelpers:
    def test_fractional_indices_avoid_integers(self, rng):
        idx = fractional_indices(rng, 5, 5)
        frac = idx - np.floor(idx)
        assert np.all((frac > 0.19) & (frac < 0.81))
        assert np.all(np.abs(idx - mesh_grid(5, 5)) < 2.0)

    def test_result_pass_fail(self):
        assert GradCheckResult("ok", 1e-7).passed
        assert not GradCheckResult("bad", 1e-2).passed
        assert not GradCheckResult("nan", float("nan")).passed
        assert count_failures([GradCheckResult("a", 1.0), GradCheckResult("b", 0.0)]) == 1

    def test_constants(self):
        assert (TOLERANCE, FLOOR) == (1e-4, 1e-6)


class TestBlocks:
    @pytest.mark.parametrize("check", [check_msa, check_shifted_window, check_bilinear_warp, check_losses])
    def test_block_gradients(self, check):
        results = check(np.random.default_rng(0))
        assert results
        assert [r.name for r in results if not r.passed] == []

    def test_flow_guided_attention(self):
        results = check_fg_msa(np.random.default_rng(1), max_coords=20)
        assert [r.name for r in results if not r.passed] == []

    def test_end_to_end(self):
        (result,) = check_end_to_end(seed=0, max_coords=8)
        assert result.passed, result.error

    @pytest.mark.slow
    def test_full_suite(self):
        assert count_failures(run_gradient_suite(seed=3)) == 0
