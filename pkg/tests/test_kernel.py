import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from colordet import kernel as K
from colordet.errors import InvalidInputError
from colordet.kernel import ConvSpec

from oracles import conv2d_loops, count_windows


def test_identity_conv():
    x = np.random.default_rng(0).normal(size=(1, 1, 5, 6))
    out = K.conv2d(x, np.ones((1, 1, 1, 1)), ConvSpec(1, 1, (1, 1)))
    np.testing.assert_array_equal(out, x)


def test_ones_conv_sums_to_four():
    out = K.conv2d(np.ones((1, 1, 2, 2)), np.ones((1, 1, 2, 2)), ConvSpec(1, 1, (2, 2)))
    assert out.shape == (1, 1, 1, 1)
    assert out[0, 0, 0, 0] == 4.0


def test_stem_shape_227_pad1():
    spec = ConvSpec(3, 64, (7, 7), stride=2, padding=1)
    assert spec.output_hw(227, 227) == (112, 112)


def test_bias_added():
    spec = ConvSpec(1, 2, (1, 1), bias=True)
    out = K.conv2d(np.zeros((1, 1, 2, 2)), np.zeros((2, 1, 1, 1)), spec, b=np.array([1.0, -2.0]))
    assert np.all(out[0, 0] == 1.0) and np.all(out[0, 1] == -2.0)


@pytest.mark.parametrize("pad", [0, 1, (1, 2, 0, 1)])
@pytest.mark.parametrize("stride", [1, 2, 3])
def test_conv_matches_loops(pad, stride):
    rng = np.random.default_rng(stride)
    x = rng.normal(size=(2, 3, 7, 8))
    w = rng.normal(size=(4, 3, 3, 2))
    spec = ConvSpec(3, 4, (3, 2), stride, pad)
    pads = K._pads(pad)
    np.testing.assert_allclose(K.conv2d(x, w, spec), conv2d_loops(x, w, stride, pads), atol=1e-12)


def test_conv_channel_mismatch():
    with pytest.raises(InvalidInputError):
        K.conv2d(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 1, 1)), ConvSpec(3, 1, (1, 1)))
    with pytest.raises(InvalidInputError):
        K.conv2d(np.zeros((1, 3, 4, 4)), np.zeros((1, 3, 2, 2)), ConvSpec(3, 1, (1, 1)))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
def test_conv_is_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, 1, 2, 6, 5))
    w = rng.normal(size=(3, 2, 3, 3))
    spec = ConvSpec(2, 3, (3, 3), 1, 1)
    lhs = K.conv2d(a * x + b * y, w, spec)
    rhs = a * K.conv2d(x, w, spec) + b * K.conv2d(y, w, spec)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(
    st.integers(1, 20), st.integers(1, 20), st.integers(1, 5), st.integers(1, 4),
    st.integers(0, 3), st.integers(0, 3),
)
def test_output_shape_matches_window_walk(h, w, k, stride, p0, p1):
    spec = ConvSpec(1, 1, (k, k), stride, (p0, p1, p0, p1))
    expect = (count_windows(h, k, stride, p0, p1), count_windows(w, k, stride, p0, p1))
    if min(expect) < 1:
        with pytest.raises(InvalidInputError):
            K.conv2d(np.zeros((1, 1, h, w)), np.zeros((1, 1, k, k)), spec)
        return
    assert spec.output_hw(h, w) == expect
    assert K.conv2d(np.zeros((1, 1, h, w)), np.zeros((1, 1, k, k)), spec).shape[2:] == expect


def test_pools_constant():
    x = np.full((1, 2, 6, 6), 3.5)
    np.testing.assert_array_equal(K.max_pool(x, 3, 2, 1), 3.5)
    np.testing.assert_array_equal(K.avg_pool(x, 3, 1), 3.5)


def test_pool_table_shapes():
    assert K.max_pool(np.zeros((1, 64, 112, 112)), 3, 2, 1).shape == (1, 64, 56, 56)
    assert K.avg_pool(np.zeros((1, 2048, 7, 7)), 7, 1).shape == (1, 2048, 1, 1)


def test_max_pool_padding_never_wins():
    x = -np.ones((1, 1, 3, 3))
    assert np.all(K.max_pool(x, 3, 2, 1) == -1.0)


def test_relu_add_upsample():
    np.testing.assert_array_equal(K.relu(np.array([-1.0, 2.0])), [0.0, 2.0])
    x = np.random.default_rng(1).normal(size=(1, 2, 3, 3))
    np.testing.assert_array_equal(K.add(x, np.zeros_like(x)), x)
    up = K.upsample_nearest(np.full((1, 1, 1, 1), 7.0), 2)
    assert up.shape == (1, 1, 2, 2) and np.all(up == 7.0)
    with pytest.raises(InvalidInputError):
        K.add(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 3)))
    with pytest.raises(InvalidInputError):
        K.upsample_nearest(x, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 4))
def test_upsample_then_pool_roundtrip(seed, factor):
    x = np.random.default_rng(seed).normal(size=(2, 3, 4, 5))
    back = K.max_pool(K.upsample_nearest(x, factor), factor, factor)
    np.testing.assert_array_equal(back, x)


def test_tensor_dump_roundtrip(tmp_path):
    x = np.random.default_rng(2).normal(size=(1, 2, 3, 4))
    K.save_tensor(x, tmp_path / "t.bin")
    np.testing.assert_array_equal(K.load_tensor(tmp_path / "t.bin"), x)
