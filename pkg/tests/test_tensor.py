import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lwganet import oracles
from lwganet.selftest import CONV_GRID
from lwganet.tensor import (
    BNParams,
    ConvSpec,
    ShapeError,
    activation,
    batchnorm_infer,
    bilinear_resize,
    concat_channels,
    conv2d,
    global_avg_pool,
    mhsa,
    softmax_rows,
    split_channels,
)

finite = st.floats(-10, 10, allow_nan=False, width=32)


# --- conv2d -----------------------------------------------------------------


def test_conv_pointwise_scaling():
    x = np.ones((1, 1, 3, 3), np.float32)
    out = conv2d(x, np.full((1, 1, 1, 1), 2.0, np.float32), None, ConvSpec(1, 1, bias=False))
    assert np.array_equal(out, np.full((1, 1, 3, 3), 2.0, np.float32))


def test_conv_sliding_window_sum():
    x = np.array([1, 2, 3, 4, 5], np.float32).reshape(1, 1, 1, 5)
    w = np.ones((1, 1, 1, 3), np.float32)
    # pad 1 on both axes, so a 1x3 kernel over a 1-row input keeps one row
    spec = ConvSpec(1, 1, (1, 3), padding=1, bias=False)
    out = conv2d(x, w, None, spec)
    assert out.shape == (1, 1, 3, 5)
    assert out[0, 0, 1].tolist() == [3, 6, 9, 12, 9]
    assert out[0, 0, 0].tolist() == [0] * 5


def test_conv_strided_grouped_matches_naive():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((2, 4, 9, 9)).astype(np.float32)
    w = rng.standard_normal((8, 2, 3, 3)).astype(np.float32)
    b = rng.standard_normal(8).astype(np.float32)
    got = conv2d(x, w, b, ConvSpec(4, 8, (3, 3), stride=2, padding=1, groups=2))
    ref = oracles.naive_conv2d(x, w, b, stride=2, padding=1, groups=2)
    assert got.shape == (2, 8, 5, 5)
    np.testing.assert_allclose(got, ref, atol=1e-5)


@pytest.mark.parametrize("stride,pad,dil,groups", CONV_GRID)
def test_conv_grid_matches_naive(stride, pad, dil, groups):
    rng = np.random.default_rng(stride * 100 + pad * 10 + dil + groups)
    x = rng.standard_normal((2, 8, 12, 12)).astype(np.float32)
    w = rng.standard_normal((8, 8 // groups, 3, 3)).astype(np.float32) * 0.3
    b = rng.standard_normal(8).astype(np.float32)
    got = conv2d(x, w, b, ConvSpec(8, 8, (3, 3), stride, pad, dil, groups))
    np.testing.assert_allclose(got, oracles.naive_conv2d(x, w, b, stride, pad, dil, groups), atol=1e-5)


def test_conv_errors_name_axis():
    x = np.zeros((1, 3, 5, 5), np.float32)
    with pytest.raises(ShapeError) as e:
        conv2d(x, np.zeros((4, 4, 3, 3), np.float32), None, ConvSpec(4, 4, (3, 3), bias=False))
    assert e.value.axis == "channels"
    with pytest.raises(ShapeError) as e:
        conv2d(x, np.zeros((4, 3, 3, 3), np.float32), None, ConvSpec(3, 4, (7, 7), bias=False))
    assert e.value.axis == "weight"
    with pytest.raises(ShapeError) as e:
        conv2d(x, np.zeros((4, 3, 7, 7), np.float32), None, ConvSpec(3, 4, (7, 7), bias=False))
    assert e.value.axis == "spatial"
    with pytest.raises(ShapeError):
        ConvSpec(6, 4, groups=4)


def test_conv_bitwise_repeatable():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 8, 16, 16)).astype(np.float32)
    w = rng.standard_normal((16, 8, 3, 3)).astype(np.float32)
    spec = ConvSpec(8, 16, (3, 3), padding=1, bias=False)
    assert np.array_equal(conv2d(x, w, None, spec), conv2d(x, w, None, spec))


# --- batchnorm ---------------------------------------------------------------


def test_bn_identity():
    x = np.random.default_rng(0).standard_normal((2, 3, 4, 4)).astype(np.float32)
    np.testing.assert_allclose(batchnorm_infer(x, BNParams.identity(3)), x, atol=1e-6)


def test_bn_default_eps_rescales():
    x = np.ones((1, 2, 1, 1), np.float32)
    p = BNParams(np.ones(2), np.zeros(2), np.zeros(2), np.ones(2))
    np.testing.assert_allclose(batchnorm_infer(x, p), 1 / math.sqrt(1 + 1e-5), rtol=1e-7)


def test_bn_scale_annihilation():
    x = np.random.default_rng(0).standard_normal((1, 2, 3, 3)).astype(np.float32)
    p = BNParams(np.zeros(2), np.full(2, 5.0), np.zeros(2), np.ones(2))
    assert np.all(batchnorm_infer(x, p) == 5.0)


def test_bn_closed_form():
    p = BNParams(np.array([2.0]), np.array([1.0]), np.array([3.0]), np.array([4.0]), eps=0.0)
    assert batchnorm_infer(np.full((1, 1, 1, 1), 7.0), p)[0, 0, 0, 0] == 5.0


def test_bn_matches_formula_and_checks_length():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 4, 3, 3)).astype(np.float32)
    g, b, m = (rng.standard_normal(4) for _ in range(3))
    v = rng.random(4) + 0.1
    got = batchnorm_infer(x, BNParams(g, b, m, v))
    np.testing.assert_allclose(got, oracles.naive_bn(x, g, b, m, v, 1e-5), atol=1e-5)
    with pytest.raises(ShapeError):
        batchnorm_infer(x, BNParams.identity(3))
    with pytest.raises(ValueError):
        BNParams(np.ones(2), np.zeros(2), np.zeros(2), np.array([1.0, -1.0]))


# --- activations -------------------------------------------------------------


def test_relu_sigmoid():
    assert activation(np.array([-1.0, 0.0, 2.0]), "relu").tolist() == [0, 0, 2]
    assert activation(np.array([0.0]), "sigmoid")[0] == 0.5
    big = activation(np.array([-1e4, 1e4], np.float32), "sigmoid")
    assert np.all(np.isfinite(big)) and big[0] == 0.0 and big[1] == 1.0


def test_gelu_exact_erf():
    assert activation(np.array([0.0]), "gelu")[0] == 0.0
    g = activation(np.array([1.5, -1.5]), "gelu")
    # x*Phi(x) - (-x)*Phi(-x) = x*(Phi(x) + Phi(-x)) = x
    assert abs(g[0] - g[1] - 1.5) < 1e-6
    xs = np.linspace(-5, 5, 41).astype(np.float32)
    np.testing.assert_allclose(activation(xs, "gelu"), oracles.naive_gelu(xs), atol=1e-6)
    # tanh approximation differs by ~1e-4 around |x|~2; make sure we are not using it
    tanh_approx = 0.5 * 2.0 * (1 + np.tanh(math.sqrt(2 / math.pi) * (2.0 + 0.044715 * 8)))
    assert abs(activation(np.array([2.0]), "gelu")[0] - tanh_approx) > 1e-5


def test_unknown_activation():
    with pytest.raises(ValueError):
        activation(np.zeros(1), "swish")


# --- split / concat ----------------------------------------------------------


def test_split_ordering():
    x = np.arange(8, dtype=np.float32).reshape(1, 8, 1, 1) * np.ones((1, 8, 2, 2), np.float32)
    parts = split_channels(x)
    assert [sorted(set(p.ravel().tolist())) for p in parts] == [[0, 1], [2, 3], [4, 5], [6, 7]]


def test_split_rejects_non_multiple_of_four():
    with pytest.raises(ShapeError, match="channels not divisible by 4"):
        split_channels(np.zeros((1, 6, 2, 2), np.float32))


def test_concat_spatial_mismatch():
    with pytest.raises(ShapeError):
        concat_channels([np.zeros((1, 2, 3, 3), np.float32), np.zeros((1, 2, 3, 4), np.float32)])


@given(
    st.integers(1, 3).map(lambda k: 4 * k),
    st.integers(1, 5),
    st.integers(1, 5),
    st.integers(0, 2**32 - 1),
)
def test_split_concat_roundtrip(c, h, w, seed):
    x = np.random.default_rng(seed).standard_normal((2, c, h, w)).astype(np.float32)
    back = concat_channels(split_channels(x))
    assert back.tobytes() == x.tobytes()


# --- softmax -----------------------------------------------------------------


def test_softmax_closed_forms():
    np.testing.assert_allclose(softmax_rows(np.full((1, 5), 3.7)), 0.2, atol=1e-7)
    np.testing.assert_allclose(softmax_rows(np.array([[0.0, math.log(3)]])), [[0.25, 0.75]], atol=1e-7)
    s = softmax_rows(np.array([[1e4, 0.0]], np.float32))
    assert np.all(np.isfinite(s)) and abs(s.sum() - 1) < 1e-6


@given(arrays(np.float32, (3, 6), elements=finite), st.floats(-50, 50, allow_nan=False, width=32))
def test_softmax_rows_sum_and_shift_invariance(x, shift):
    s = softmax_rows(x)
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-6)
    np.testing.assert_allclose(softmax_rows(x + np.float32(shift)), s, atol=1e-6)


# --- attention ---------------------------------------------------------------


def test_mhsa_single_token_is_value_path():
    rng = np.random.default_rng(0)
    d = 4
    x = rng.standard_normal((1, 1, d)).astype(np.float32)
    wq, wk, wv, wo = (rng.standard_normal((d, d)).astype(np.float32) for _ in range(4))
    np.testing.assert_allclose(mhsa(x, 2, wq, wk, wv, wo)[0, 0], wo @ (wv @ x[0, 0]), atol=1e-5)


def test_mhsa_zero_scores_average_values():
    rng = np.random.default_rng(1)
    d, t = 4, 5
    x = rng.standard_normal((1, t, d)).astype(np.float32)
    z = np.zeros((d, d), np.float32)
    wv, wo = (rng.standard_normal((d, d)).astype(np.float32) for _ in range(2))
    out = mhsa(x, 4, z, z, wv, wo)
    expected = wo @ (wv @ x[0].mean(axis=0))
    np.testing.assert_allclose(out[0], np.tile(expected, (t, 1)), atol=1e-5)


def test_mhsa_small_integer_instance_matches_loop():
    x = np.array([[[1, 0], [0, 1], [1, 1]]], np.float32)
    wq = np.array([[1, 0], [0, 1]], np.float32)
    wk = np.array([[0, 1], [1, 0]], np.float32)
    wv = np.array([[2, 0], [1, 1]], np.float32)
    wo = np.array([[1, -1], [0, 1]], np.float32)
    np.testing.assert_allclose(mhsa(x, 1, wq, wk, wv, wo), oracles.naive_attention(x, 1, wq, wk, wv, wo), atol=1e-5)


def test_mhsa_head_split_error():
    with pytest.raises(ShapeError):
        mhsa(np.zeros((1, 2, 6), np.float32), 4, *(np.zeros((6, 6)),) * 4)


# --- resize / pooling --------------------------------------------------------


def test_resize_identity_bitwise():
    x = np.random.default_rng(0).standard_normal((1, 2, 5, 7)).astype(np.float32)
    x[0, 0, 0, 0] = -0.0
    assert bilinear_resize(x, 5, 7).tobytes() == x.tobytes()


def test_resize_constant_fill():
    assert np.all(bilinear_resize(np.full((1, 1, 1, 1), 2.5, np.float32), 4, 4) == 2.5)


def test_resize_2x2_half_pixel_values():
    x = np.array([[0, 1], [2, 3]], np.float32).reshape(1, 1, 2, 2)
    # hand-derived: sample coords {0, .25, .75, 1} on each axis, value = 2*y + x
    expected = np.array(
        [[0, 0.25, 0.75, 1], [0.5, 0.75, 1.25, 1.5], [1.5, 1.75, 2.25, 2.5], [2, 2.25, 2.75, 3]], np.float32
    )
    got = bilinear_resize(x, 4, 4)[0, 0]
    np.testing.assert_allclose(got, expected, atol=1e-6)
    np.testing.assert_allclose(got, oracles.naive_bilinear(x, 4, 4)[0, 0], atol=1e-6)


@settings(max_examples=30)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 9), st.integers(1, 9), st.integers(0, 1000))
def test_resize_matches_naive(h, w, oh, ow, seed):
    x = np.random.default_rng(seed).standard_normal((1, 2, h, w)).astype(np.float32)
    np.testing.assert_allclose(bilinear_resize(x, oh, ow), oracles.naive_bilinear(x, oh, ow), atol=1e-5)


def test_global_avg_pool():
    assert global_avg_pool(np.full((1, 2, 3, 3), 4.0, np.float32)).ravel().tolist() == [4.0, 4.0]
    checker = (np.indices((4, 4)).sum(axis=0) % 2).astype(np.float32).reshape(1, 1, 4, 4)
    assert global_avg_pool(checker)[0, 0, 0, 0] == 0.5
    x = np.random.default_rng(0).standard_normal((2, 3, 5, 6)).astype(np.float32)
    ref = [[sum(float(v) for v in x[n, c].ravel()) / 30 for c in range(3)] for n in range(2)]
    np.testing.assert_allclose(global_avg_pool(x)[:, :, 0, 0], ref, atol=1e-6)
