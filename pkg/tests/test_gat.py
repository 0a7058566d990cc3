import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphagg.errors import ConfigError, ShapeError
from graphagg.gat import (
    FrameGraph,
    GatLayerParams,
    gat_forward,
    gat_head_forward,
    gat_param_count,
    init_gat_params,
)
from graphagg.tensor_core import add, grad_check, mul, sum_all

from oracles import naive_gat_head


def _head(rng, f, h):
    return rng.standard_normal((f, h)), rng.standard_normal((2 * h, 1))


class TestFrameGraph:
    def test_rejects_empty(self):
        with pytest.raises(ShapeError):
            FrameGraph(np.zeros((0, 3)))
        with pytest.raises(ShapeError):
            FrameGraph(np.zeros(3))

    def test_feature_map_flattening_is_filters_major(self):
        fmap = np.arange(2 * 3 * 4, dtype=float).reshape(2, 3, 4)  # filters, freq, time
        g = FrameGraph.from_feature_map(fmap)
        assert g.node_features.shape == (4, 6)
        np.testing.assert_array_equal(g.node_features[1], fmap[:, :, 1].reshape(-1))


class TestHeadForward:
    def test_single_node(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((1, 3))
        W, g = _head(rng, 3, 2)
        out, attn = gat_head_forward(x, W, g)
        assert attn.value.tolist() == [[1.0]]
        np.testing.assert_allclose(out.value, x @ W, rtol=0, atol=1e-15)

    def test_identical_nodes_attend_uniformly(self):
        rng = np.random.default_rng(1)
        x = np.tile(rng.standard_normal((1, 3)), (5, 1))
        W, g = _head(rng, 3, 2)
        out, attn = gat_head_forward(x, W, g)
        np.testing.assert_allclose(attn.value, 0.2, atol=1e-15)
        np.testing.assert_allclose(out.value, np.tile(x[:1] @ W, (5, 1)), atol=1e-14)

    def test_fixed_instance_matches_pairwise_loop(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((3, 2))
        W, g = _head(rng, 2, 2)
        out, attn = gat_head_forward(x, W, g)
        ref_out, ref_attn = naive_gat_head(x.tolist(), W.tolist(), g.tolist())
        np.testing.assert_allclose(out.value, ref_out, rtol=0, atol=1e-12)
        np.testing.assert_allclose(attn.value, ref_attn, rtol=0, atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_matches_pairwise_loop(self, n, f, h, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, f))
        W, g = _head(rng, f, h)
        out, attn = gat_head_forward(x, W, g)
        ref_out, ref_attn = naive_gat_head(x.tolist(), W.tolist(), g.tolist())
        np.testing.assert_allclose(out.value, ref_out, rtol=0, atol=1e-12)
        np.testing.assert_allclose(attn.value, ref_attn, rtol=0, atol=1e-12)
        np.testing.assert_allclose(attn.value.sum(axis=1), 1.0, atol=1e-10)
        assert np.all(attn.value > 0)

    def test_gamma_as_row_vector(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((4, 3))
        W, g = _head(rng, 3, 2)
        a, _ = gat_head_forward(x, W, g)
        b, _ = gat_head_forward(x, W, g.T)
        np.testing.assert_array_equal(a.value, b.value)

    def test_shape_errors(self):
        rng = np.random.default_rng(3)
        W, g = _head(rng, 3, 2)
        with pytest.raises(ShapeError):
            gat_head_forward(np.ones((4, 2)), W, g)
        with pytest.raises(ShapeError):
            gat_head_forward(np.ones((4, 3)), W, g[:3])
        with pytest.raises(ShapeError):
            gat_head_forward(np.zeros((0, 3)), W, g)


class TestMultiHead:
    def test_one_head_is_the_head(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((5, 3))
        p = init_gat_params(3, 4, 1, rng)
        np.testing.assert_array_equal(gat_forward(x, p).value, gat_head_forward(x, p.W[0], p.gamma[0])[0].value)

    def test_tied_heads_duplicate_output(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((5, 3))
        W, g = _head(rng, 3, 2)
        one = gat_forward(x, GatLayerParams([W], [g])).value
        two = gat_forward(x, GatLayerParams([W, W], [g, g])).value
        np.testing.assert_array_equal(two, np.hstack([one, one]))

    def test_permutation_equivariance_fixed_seed(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((5, 3))
        p = init_gat_params(3, 4, 2, rng)
        perm = rng.permutation(5)
        np.testing.assert_allclose(gat_forward(x[perm], p).value, gat_forward(x, p).value[perm], atol=1e-10)

    def test_output_width(self):
        rng = np.random.default_rng(7)
        p = init_gat_params(3, 8, 4, rng)
        assert p.out_dim == 8 and p.heads == 4 and p.in_dim == 3
        assert gat_forward(rng.standard_normal((6, 3)), p).shape == (6, 8)

    def test_indivisible_heads(self):
        with pytest.raises(ConfigError):
            init_gat_params(3, 5, 2, np.random.default_rng(0))

    def test_initialisation_bounds(self):
        p = init_gat_params(9, 8, 2, np.random.default_rng(0))
        assert all(np.abs(w).max() <= np.sqrt(1 / 9) for w in p.W)
        assert all(np.abs(g).max() <= np.sqrt(1 / 8) for g in p.gamma)

    @pytest.mark.parametrize("seed", range(5))
    def test_gradients(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((4, 3))
        p = init_gat_params(3, 4, 2, rng)
        r = rng.standard_normal((4, 4))

        def loss(x_, w0, w1, g0, g1):
            out = gat_forward(x_, GatLayerParams([w0, w1], [g0, g1]))
            return add(sum_all(mul(out, r)), sum_all(mul(out, out)))

        assert grad_check(loss, [x, *p.W, *p.gamma], eps=1e-5) < 1e-5


class TestParamCount:
    @pytest.mark.parametrize("f,fp,h,expected", [(4, 4, 1, 24), (4, 4, 2, 24), (1, 1, 1, 3)])
    def test_hand_counts(self, f, fp, h, expected):
        assert gat_param_count(f, fp, h) == expected

    def test_matches_allocation(self):
        p = init_gat_params(5, 6, 3, np.random.default_rng(0))
        assert gat_param_count(5, 6, 3) == sum(a.size for a in p.W + p.gamma)

    def test_divisibility(self):
        with pytest.raises(ConfigError):
            gat_param_count(4, 6, 4)
