import numpy as np
import pytest

from uedkit.errors import TrainingError
from uedkit.nn import (
    Tensor,
    build_extractor,
    count_flops,
    count_params,
    extractor_config,
)
from uedkit.nn.kan import KanLayer, KanLayerConfig
from uedkit.nn.layers import Linear
from uedkit.nn.models import cnn1d_config, cnn2d_config
from uedkit.nn.optim import Adam, AdamState, adam_step
from uedkit.rng import Rng


class TestAdam:
    def test_zero_grad_no_motion(self):
        state = AdamState()
        params = np.array([1.0, -2.0, 3.0])
        out = adam_step(state, params, np.zeros(3))
        assert np.array_equal(out, params)

    def test_first_step_closed_form(self):
        # m_hat = g, v_hat = g^2  =>  delta = -lr * g / (|g| + eps)
        state = AdamState(lr=1e-3)
        g = np.array([0.5, -0.02, 3.0])
        params = np.zeros(3)
        out = adam_step(state, params, g)
        expected = -1e-3 * g / (np.abs(g) + 1e-8)
        assert np.max(np.abs(out - expected)) < 1e-12

    def test_quadratic_converges(self):
        # f(w) = w^2, 500 steps from w=1
        state = AdamState(lr=1e-2)
        w = np.array([1.0])
        for _ in range(500):
            w = adam_step(state, w, 2.0 * w)
        assert abs(w[0]) < 1e-2

    def test_non_finite_grads_raise(self):
        with pytest.raises(TrainingError):
            adam_step(AdamState(), np.zeros(2), np.array([np.nan, 0.0]))

    def test_optimizer_class_matches_functional(self):
        rng = Rng(1)
        t = Tensor(rng.normal(size=7), requires_grad=True)
        g = Rng(2).normal(size=7)
        start = t.data.copy()
        t.grad = g.copy()
        Adam([t], lr=1e-3).step()
        expected = adam_step(AdamState(lr=1e-3), start, g)
        assert np.max(np.abs(t.data - expected)) < 1e-15


class TestParamCounts:
    def test_kan_raw_spline_count_matches_table(self):
        cfg = extractor_config("kan", "raw_iq", feature_size=20, trace_len=256, kan_grid=10)
        model = build_extractor(cfg, Rng(3))
        counts = count_params(model)
        assert counts.spline_coefficients == 512 * 20 * 14 == 143_360
        # w_b and w_s add 2 * 512 * 20 on top
        assert counts.total == 143_360 + 2 * 512 * 20

    def test_kan_constellation_spline_count_matches_table(self):
        cfg = extractor_config("kan", "constellation", feature_size=20, grid_k=60, kan_grid=6)
        model = build_extractor(cfg, Rng(4))
        assert count_params(model).spline_coefficients == 3600 * 20 * 10 == 720_000

    def test_linear_layer_closed_form(self):
        lin = Linear(20, 512, Rng(5))
        assert sum(p.data.size for p in lin.params()) == 20 * 512 + 512 == 10_752

    def test_cnn1d_total_in_published_band(self):
        model = build_extractor(extractor_config("cnn1d", "raw_iq"), Rng(6))
        assert 70_000 <= count_params(model).total <= 90_000

    def test_cnn2d_total_in_published_band(self):
        model = build_extractor(extractor_config("cnn2d", "constellation"), Rng(7))
        assert 150_000 <= count_params(model).total <= 210_000

    def test_spline_count_invariant(self):
        layer = KanLayer(KanLayerConfig(9, 7, 5), Rng(8))
        assert layer.coef.data.size == 9 * 7 * (5 + 4)

    def test_bypass_included_in_total(self):
        cfg = extractor_config("kan", "raw_iq", svd_init=True)
        model = build_extractor(cfg, Rng(9))
        base_cfg = extractor_config("kan", "raw_iq")
        base = build_extractor(base_cfg, Rng(9))
        assert count_params(model).total == count_params(base).total + 512 * 20 + 20


class TestFlops:
    def test_linear_closed_form(self):
        assert count_flops(build_extractor(extractor_config("pca", "raw_iq"), Rng(1))) == 2 * 512 * 20 + 512

    def test_cnn1d_within_factor_two_of_1m(self):
        flops = count_flops(build_extractor(extractor_config("cnn1d", "raw_iq"), Rng(2)))
        assert 0.5e6 <= flops <= 2e6

    def test_cnn2d_within_factor_two_of_11m(self):
        flops = count_flops(build_extractor(extractor_config("cnn2d", "constellation"), Rng(3)))
        assert 5.5e6 <= flops <= 22e6

    def test_kan_constellation_within_factor_two_of_1p8m(self):
        flops = count_flops(build_extractor(extractor_config("kan", "constellation"), Rng(4)))
        assert 0.9e6 <= flops <= 3.6e6
