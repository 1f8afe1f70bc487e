import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from pifo.errors import (BadMagicError, ShapeError, StateError, TruncatedFileError,
                         UnsupportedVersionError, UsageError)
from pifo.nn import checkpoint as ckpt
from pifo.nn.optim import AdamState, adam_step
from pifo.nn.params import LayerSpec, ParamSet, apply_layers, init_params, merge, mlp_layers
from pifo.nn.tensor import (Tensor, activation, backward, clip, conv2d, conv_output_size, dense,
                            gradients, minimum, no_grad, sigmoid, sum_)

from oracles import FD_RTOL, central_difference, naive_conv2d, relative_errors


def leaf(a):
    return Tensor(np.array(a, dtype=float), requires_grad=True)


# ---- dense ---------------------------------------------------------------

def test_dense_identity_and_zero_input():
    x = Tensor([[0.3, -0.7]])
    y = dense(x, Tensor(np.eye(2)), Tensor(np.zeros(2)))
    np.testing.assert_array_equal(y.data, [[0.3, -0.7]])
    b = np.array([0.25, -1.5])
    y0 = dense(Tensor(np.zeros((1, 2))), Tensor(np.ones((2, 2))), Tensor(b))
    np.testing.assert_array_equal(y0.data[0], b)


def test_dense_hand_arithmetic():
    y = dense(Tensor([[1.0, 1.0]]), Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([1.0, 1.0]))
    np.testing.assert_array_equal(y.data, [[4.0, 8.0]])


def test_dense_shape_error_names_operands():
    with pytest.raises(ShapeError, match=r"x.*weight|weight.*x"):
        dense(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))), Tensor(np.zeros(4)))
    with pytest.raises(ShapeError, match="bias"):
        dense(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 3))), Tensor(np.zeros(5)))


# ---- conv ----------------------------------------------------------------

def test_conv_identity_kernel_and_constant_field():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 1, 6, 7))
    y = conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))), Tensor(np.zeros(1)), 1)
    np.testing.assert_array_equal(y.data, x)
    c, bias = 0.75, -0.125
    y = conv2d(Tensor(np.full((1, 1, 5, 5), c)), Tensor(np.ones((1, 1, 3, 3))), Tensor([bias]), 1)
    np.testing.assert_array_equal(y.data, np.full((1, 1, 3, 3), 9 * c + bias))


@pytest.mark.parametrize("k,stride", [(3, 1), (3, 2), (4, 2), (8, 4), (2, 2), (3, 3), (5, 2)])
def test_conv_matches_nested_loop_exactly_on_integers(k, stride):
    # small integers keep every partial sum exact, so any summation order agrees bit for bit
    rng = np.random.default_rng(k * 10 + stride)
    x = rng.integers(-3, 4, size=(2, 3, 12, 11)).astype(float)
    kern = rng.integers(-3, 4, size=(4, 3, k, k)).astype(float)
    b = rng.integers(-3, 4, size=4).astype(float)
    y = conv2d(Tensor(x), Tensor(kern), Tensor(b), stride)
    np.testing.assert_array_equal(y.data, naive_conv2d(x, kern, b, stride))


def test_conv_random_8x8_stride2_matches_sliding_sum():
    rng = np.random.default_rng(3)
    x, kern, b = rng.normal(size=(1, 1, 8, 8)), rng.normal(size=(1, 1, 3, 3)), rng.normal(size=1)
    y = conv2d(Tensor(x), Tensor(kern), Tensor(b), 2)
    assert y.shape == (1, 1, 3, 3)
    np.testing.assert_allclose(y.data, naive_conv2d(x, kern, b, 2), rtol=0, atol=1e-12)


def test_conv_shape_errors():
    with pytest.raises(ShapeError, match="kernel"):
        conv2d(Tensor(np.zeros((1, 1, 3, 3))), Tensor(np.zeros((1, 1, 4, 4))), Tensor(np.zeros(1)), 1)
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.zeros((1, 2, 8, 8))), Tensor(np.zeros((1, 3, 3, 3))), Tensor(np.zeros(1)), 1)
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.zeros((1, 1, 8, 8))), Tensor(np.zeros((1, 1, 3, 3))), Tensor(np.zeros(1)), 0)
    assert conv_output_size(64, 8, 4) == 15 and conv_output_size(15, 4, 2) == 6


# ---- activations ---------------------------------------------------------

def test_activation_values():
    assert activation(Tensor([0.0]), "tanh").item() == 0.0
    np.testing.assert_array_equal(activation(Tensor([-5.0, 5.0]), "relu").data, [0.0, 5.0])
    assert activation(Tensor([0.0]), "sigmoid").item() == 0.5


def test_sigmoid_strictly_inside_unit_interval():
    s = sigmoid(Tensor([-1e4, -800.0, 0.0, 800.0, 1e4])).data
    assert np.all(s > 0.0) and np.all(s < 1.0) and np.all(np.isfinite(s))


def test_clip_and_minimum_gradients():
    a = leaf([-2.0, 0.5, 3.0])
    backward(sum_(clip(a, -1.0, 1.0)), [a])
    np.testing.assert_array_equal(a.grad, [0.0, 1.0, 0.0])
    a, b = leaf([1.0, 2.0]), leaf([3.0, 1.0])
    backward(sum_(minimum(a, b)), [a, b])
    np.testing.assert_array_equal(a.grad, [1.0, 0.0])
    np.testing.assert_array_equal(b.grad, [0.0, 1.0])


# ---- backward ------------------------------------------------------------

def test_linear_gradient_is_input():
    x = np.array([[0.5, -2.0, 3.0]])
    w, b = leaf(np.ones((2, 3))), leaf(np.zeros(2))
    backward(sum_(dense(Tensor(x), w, b)), [w, b])
    np.testing.assert_array_equal(w.grad, np.tile(x, (2, 1)))
    np.testing.assert_array_equal(b.grad, [1.0, 1.0])


def test_unused_parameter_gets_zero_grad():
    w, b, unused = leaf(np.ones((2, 3))), leaf(np.zeros(2)), leaf(np.full(4, 7.0))
    unused.grad += 5.0
    backward(sum_(dense(Tensor(np.ones((1, 3))), w, b)), [w, b, unused])
    np.testing.assert_array_equal(unused.grad, np.zeros(4))


def test_backward_without_forward_is_usage_error():
    with pytest.raises(UsageError):
        backward(Tensor(1.0), [])
    w = leaf([1.0])
    with no_grad():
        loss = sum_(w * 2.0)
    with pytest.raises(UsageError):
        backward(loss, [w])


def test_backward_needs_scalar():
    w = leaf([1.0, 2.0])
    with pytest.raises(ShapeError):
        backward(w * 2.0, [w])


def test_accumulation_is_explicit():
    w = leaf([1.0, 2.0])
    backward(sum_(w * 3.0), [w])
    backward(sum_(w * 3.0), [w])
    np.testing.assert_array_equal(w.grad, [3.0, 3.0])
    backward(sum_(w * 3.0), [w], accumulate=True)
    np.testing.assert_array_equal(w.grad, [6.0, 6.0])


def test_gradients_is_pure():
    w = leaf([1.0, 2.0])
    loss = sum_(w * w)
    g1 = gradients(loss)[id(w)]
    g2 = gradients(loss)[id(w)]
    np.testing.assert_array_equal(g1, g2)
    assert not w.grad.any()


def _fd_check(loss_fn, arrays, rng, samples=12):
    """Compare backward() with central differences on a random subset of every array."""
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    backward(loss_fn(*tensors), tensors)
    worst = 0.0
    for t, a in zip(tensors, arrays):
        idx = rng.choice(a.size, size=min(samples, a.size), replace=False)

        def f():
            with no_grad():
                return loss_fn(*[Tensor(x) for x in arrays]).item()

        num = central_difference(f, a, idx)
        worst = max(worst, relative_errors(t.grad.reshape(-1)[idx], num).max())
    return worst


def test_two_layer_net_matches_finite_differences():
    rng = np.random.default_rng(11)
    layers = mlp_layers([5, 7, 3], "tanh")
    params = init_params(layers, seed=4)
    x = rng.normal(size=(6, 5))
    names = list(params)

    def loss_fn(*ts):
        ps = ParamSet()
        for n, t in zip(names, ts):
            dict.__setitem__(ps, n, t)
        y = apply_layers(ps, layers, Tensor(x))
        return sum_(y * y) * 0.5

    arrays = [params[n].data.copy() + rng.normal(scale=0.1, size=params[n].shape) for n in names]
    assert _fd_check(loss_fn, arrays, rng) < FD_RTOL


# ---- adam ----------------------------------------------------------------

def test_adam_zero_grad_leaves_params():
    ps = ParamSet()
    ps["w"] = Tensor([1.0, -2.0])
    st_ = AdamState.for_params(ps, 1e-3)
    adam_step(ps, st_)
    np.testing.assert_array_equal(ps["w"].data, [1.0, -2.0])
    assert st_.step == 1


def test_adam_first_step_is_lr_times_sign():
    ps = ParamSet()
    ps["w"] = Tensor([0.0, 0.0, 0.0])
    ps["w"].grad[:] = [2.0, -0.5, 1e3]
    st_ = AdamState.for_params(ps, 0.01)
    adam_step(ps, st_)
    np.testing.assert_allclose(ps["w"].data, [-0.01, 0.01, -0.01], rtol=1e-6)
    np.testing.assert_array_equal(ps["w"].grad, [2.0, -0.5, 1e3])


def test_adam_scalar_recurrence():
    ps = ParamSet()
    ps["p"] = Tensor([0.5])
    st_ = AdamState.for_params(ps, 0.05)
    grads = [0.3, -1.2, 0.7, 0.0, 2.5]
    p, m, v = 0.5, 0.0, 0.0
    b1, b2, eps, lr = 0.9, 0.999, 1e-8, 0.05
    for t, g in enumerate(grads, 1):
        ps["p"].grad[:] = g
        adam_step(ps, st_)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        assert ps["p"].data[0] == pytest.approx(p, rel=1e-14, abs=1e-15)
    assert st_.step == len(grads)


def test_adam_rejects_mismatched_state():
    ps = ParamSet()
    ps["w"] = Tensor(np.zeros(3))
    st_ = AdamState.for_params(ps, 1e-3)
    ps["w"] = Tensor(np.zeros(4))
    with pytest.raises(StateError):
        adam_step(ps, st_)
    ps2 = ParamSet()
    ps2["other"] = Tensor(np.zeros(3))
    with pytest.raises(StateError):
        adam_step(ps2, AdamState.for_params(ps, 1e-3))


# ---- init ----------------------------------------------------------------

def test_init_deterministic_zero_bias_and_bounded():
    layers = [LayerSpec("fc0", "dense", 10, 20), LayerSpec("c", "conv", 3, 4, kernel=3, stride=1)]
    a, b = init_params(layers, 5), init_params(layers, 5)
    assert ckpt.encode(a) == ckpt.encode(b)
    assert ckpt.encode(a) != ckpt.encode(init_params(layers, 6))
    assert not a["fc0/bias"].data.any() and not a["c/bias"].data.any()
    assert np.abs(a["fc0/weight"].data).max() <= math.sqrt(1 / 10)
    assert np.abs(a["c/weight"].data).max() <= math.sqrt(1 / 27)


def test_init_weight_mean_statistical_bound():
    n_in, n_out = 100, 1000
    w = init_params([LayerSpec("fc", "dense", n_in, n_out)], 123)["fc/weight"].data
    bound = math.sqrt(1 / n_in)
    sigma = bound / math.sqrt(3)  # std of uniform(-bound, bound)
    assert abs(w.mean()) < 3 * sigma / math.sqrt(w.size)
    assert w.std() == pytest.approx(sigma, rel=0.02)


def test_paramset_merge_rejects_duplicates_and_keeps_order():
    a, b = ParamSet(), ParamSet()
    a["x"] = Tensor([1.0])
    b["y"] = Tensor([2.0])
    assert list(merge(a, b)) == ["x", "y"]
    with pytest.raises(KeyError):
        merge(a, a)
    for t in merge(a, b).values():
        assert t.grad.shape == t.data.shape


# ---- checkpoints ---------------------------------------------------------

def _f32_params(seed=0):
    rng = np.random.default_rng(seed)
    ps = ParamSet()
    ps["policy/fc0/weight"] = Tensor(rng.normal(size=(3, 4)).astype(np.float32))
    ps["policy/log_std"] = Tensor(np.float32([-0.5, 0.25]))
    ps["value/fc0/bias"] = Tensor(np.zeros(3))
    ps["disc/conv0/weight"] = Tensor(rng.normal(size=(2, 4, 3, 3)).astype(np.float32))
    return ps


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    ps = _f32_params()
    path = tmp_path / "a.pifo"
    ckpt.save_checkpoint(ps, path)
    back = ckpt.load_checkpoint(path)
    assert list(back) == list(ps)
    for n in ps:
        assert back[n].data.dtype == np.float64
        assert back[n].data.tobytes() == ps[n].data.tobytes()


def test_checkpoint_layout():
    ps = ParamSet()
    ps["ab"] = Tensor(np.float32([[1.5, -2.0]]))
    buf = ckpt.encode(ps)
    expected = (b"PIFO" + struct.pack("<II", 1, 1) + struct.pack("<H", 2) + b"ab"
                + struct.pack("<B", 2) + struct.pack("<II", 1, 2) + struct.pack("<2f", 1.5, -2.0))
    assert buf == expected


def test_checkpoint_stores_f32():
    ps = ParamSet()
    ps["w"] = Tensor([0.1])
    back = ckpt.decode(ckpt.encode(ps))
    assert back["w"].data[0] == float(np.float32(0.1))


def test_checkpoint_errors(tmp_path):
    buf = ckpt.encode(_f32_params())
    with pytest.raises(BadMagicError):
        ckpt.decode(b"XXXX" + buf[4:])
    with pytest.raises(UnsupportedVersionError):
        ckpt.decode(buf[:4] + struct.pack("<I", 2) + buf[8:])
    with pytest.raises(TruncatedFileError):
        ckpt.decode(buf[:-3])
    with pytest.raises(TruncatedFileError):
        ckpt.decode(buf[:30])
    bad = tmp_path / "bad.pifo"
    bad.write_bytes(b"XXXX" + buf[4:])
    with pytest.raises(BadMagicError, match="bad.pifo"):
        ckpt.load_checkpoint(bad)


# ---- properties ----------------------------------------------------------

finite = st.floats(-10, 10, allow_nan=False, width=64)


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 5)), elements=finite),
       st.integers(1, 4), st.integers(0, 2**31))
def test_dense_shape_algebra_and_finiteness(x, n_out, seed):
    rng = np.random.default_rng(seed)
    w = leaf(rng.normal(size=(n_out, x.shape[1])))
    b = leaf(rng.normal(size=n_out))
    y = activation(dense(Tensor(x), w, b), "tanh")
    assert y.shape == (x.shape[0], n_out)
    backward(sum_(y), [w, b])
    assert np.all(np.isfinite(y.data)) and np.all(np.isfinite(w.grad))
    np.testing.assert_array_equal(y.data, activation(dense(Tensor(x), w, b), "tanh").data)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(5, 12), st.integers(1, 4),
       st.integers(1, 3), st.integers(0, 2**31))
def test_conv_property_matches_oracle(cin, cout, size, k, stride, seed):
    k = min(k, size)
    rng = np.random.default_rng(seed)
    x = rng.integers(-4, 5, size=(2, cin, size, size + 1)).astype(float)
    kern = rng.integers(-4, 5, size=(cout, cin, k, k)).astype(float)
    b = rng.integers(-4, 5, size=cout).astype(float)
    y = conv2d(Tensor(x), Tensor(kern), Tensor(b), stride)
    np.testing.assert_array_equal(y.data, naive_conv2d(x, kern, b, stride))


@settings(max_examples=30, deadline=None)
@given(st.dictionaries(st.text(st.characters(min_codepoint=33, max_codepoint=0x2FFF), min_size=1, max_size=12),
                       hnp.arrays(np.float32, hnp.array_shapes(min_dims=0, max_dims=3, max_side=4),
                                  elements=st.floats(-1e6, 1e6, width=32)),
                       max_size=5))
def test_checkpoint_roundtrip_property(entries):
    ps = ParamSet()
    for name, arr in entries.items():
        ps[name] = Tensor(arr.astype(np.float64))
    back = ckpt.decode(ckpt.encode(ps))
    assert list(back) == list(ps)
    for n in ps:
        assert back[n].shape == ps[n].shape
        assert back[n].data.tobytes() == ps[n].data.tobytes()
