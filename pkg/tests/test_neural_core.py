import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import conv_loop, finite_difference, local_loop, lstm_step_loop, rel_error
from topicast import nn
from topicast.nn import functional as F
from topicast.nn.tensorio import TensorFileError, dump_tensors, parse_tensors

FD_TOL = 1e-4
SEEDS = range(10)


def check_grads(build, arrays, rng):
    """FD-check d(sum(out * proj))/d(array) for every array in ``arrays``."""
    proj = {}

    def scalar():
        out = build([nn.constant(a) for a in arrays]).data
        if "p" not in proj:
            proj["p"] = rng.normal(size=out.shape)
        return float(np.sum(out * proj["p"]))

    scalar()
    params = [nn.parameter(a.copy()) for a in arrays]
    out = build(params)
    nn.backward(out, proj["p"])
    fd = finite_difference(scalar, arrays)
    for p, g in zip(params, fd):
        assert rel_error(p.grad, g) < FD_TOL


# dense ------------------------------------------------------------------------


def test_dense_identity():
    x = np.array([[0.3, -2.0, 5.0]])
    np.testing.assert_array_equal(nn.dense_forward(x, np.eye(3), np.zeros(3)), x)


def test_dense_hand_example():
    out = nn.dense_forward(np.array([1.0, 2.0]), np.array([[1.0, 1.0]]), np.array([0.5]))
    assert out.tolist() == [3.5]


def test_dense_relu_clips():
    out = nn.dense_forward(np.array([-1.0, 2.0]), np.eye(2), np.zeros(2), "relu")
    assert out.tolist() == [0.0, 2.0]


def test_dense_shape_mismatch():
    with pytest.raises(nn.ShapeError):
        nn.dense_forward(np.ones(3), np.ones((2, 2)), np.zeros(2))


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("act", ["identity", "tanh", "sigmoid"])
def test_dense_gradients(seed, act):
    rng = np.random.default_rng(seed)
    n_in, n_out = rng.integers(1, 5, size=2)
    arrays = [rng.normal(size=(3, n_in)), rng.normal(size=(n_out, n_in)), rng.normal(size=n_out)]
    check_grads(lambda t: F.dense(t[0], t[1], t[2], act), arrays, rng)


# lstm -------------------------------------------------------------------------


def lstm_params(rng, n_in, n):
    return rng.normal(size=(n_in, 4 * n)), rng.normal(size=(n, 4 * n)), rng.normal(size=4 * n)


def test_lstm_zero_params():
    h, c = nn.lstm_step_forward(np.ones(3), np.zeros(2), np.zeros(2), np.zeros((3, 8)), np.zeros((2, 8)), np.zeros(8))
    assert not h.any() and not c.any()


def test_lstm_carry_when_saturated():
    n = 3
    b = np.zeros(4 * n)
    b[n:2 * n] = 100.0
    b[:n] = -100.0
    c0 = np.array([0.4, -1.2, 2.0])
    _, c = nn.lstm_step_forward(np.ones(2), np.zeros(n), c0, np.zeros((2, 4 * n)), np.zeros((n, 4 * n)), b)
    np.testing.assert_allclose(c[0], c0, atol=1e-12)


def test_lstm_step_matches_loop(rng):
    wx, wh, b = lstm_params(rng, 3, 2)
    x, h, c = rng.normal(size=3), rng.normal(size=2), rng.normal(size=2)
    h2, c2 = nn.lstm_step_forward(x, h, c, wx, wh, b)
    eh, ec = lstm_step_loop(x, h, c, wx, wh, b)
    np.testing.assert_allclose(h2[0], eh, atol=1e-12)
    np.testing.assert_allclose(c2[0], ec, atol=1e-12)


def test_lstm_sequence_matches_repeated_steps(rng):
    wx, wh, b = lstm_params(rng, 2, 3)
    xs = rng.normal(size=(2, 4, 2))
    hs = F.lstm(nn.constant(xs), *map(nn.constant, (wx, wh, b))).data
    h, c = np.zeros((2, 3)), np.zeros((2, 3))
    for t in range(4):
        h, c = nn.lstm_step_forward(xs[:, t], h, c, wx, wh, b)
        np.testing.assert_allclose(hs[:, t], h, atol=1e-12)


@pytest.mark.parametrize("seed", SEEDS)
def test_lstm_step_gradients(seed):
    rng = np.random.default_rng(seed)
    n_in, n = rng.integers(1, 4, size=2)
    arrays = [rng.normal(size=(2, n_in)), rng.normal(size=(2, n)), rng.normal(size=(2, n)),
              *lstm_params(rng, n_in, n)]

    def build(t):
        h, c = F.lstm_step(*t)
        return F.concat([h, c], axis=1)

    check_grads(build, arrays, rng)


@pytest.mark.parametrize("seed", SEEDS)
def test_lstm_bptt_gradients(seed):
    rng = np.random.default_rng(100 + seed)
    n_in, n, T = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 5)
    arrays = [rng.normal(size=(2, T, n_in)), *lstm_params(rng, n_in, n)]
    check_grads(lambda t: F.lstm(*t), arrays, rng)


def test_lstm_shape_mismatch():
    with pytest.raises(nn.ShapeError):
        nn.lstm_step_forward(np.ones(3), np.zeros(2), np.zeros(2), np.zeros((4, 8)), np.zeros((2, 8)), np.zeros(8))


# conv / local -----------------------------------------------------------------


def test_conv_identity_kernel(rng):
    x = rng.normal(size=(1, 3, 4))
    np.testing.assert_array_equal(nn.conv2d_forward(x, np.ones((1, 1, 1, 1))), x)


def test_conv_constant_input():
    out = nn.conv2d_forward(np.full((1, 3, 3), 1.5), np.ones((1, 1, 2, 2)))
    assert out.shape == (1, 2, 2) and np.all(out == 6.0)


def test_conv_matches_loop(rng):
    x = rng.normal(size=(1, 4, 4))
    w = rng.normal(size=(1, 1, 3, 3))
    np.testing.assert_allclose(nn.conv2d_forward(x, w), conv_loop(x, w, np.zeros(1)), atol=1e-12)


def test_conv_multichannel_matches_loop(rng):
    x = rng.normal(size=(3, 5, 4))
    w, b = rng.normal(size=(2, 3, 2, 3)), rng.normal(size=2)
    np.testing.assert_allclose(nn.conv2d_forward(x, w, b), conv_loop(x, w, b), atol=1e-12)


def test_local_matches_loop(rng):
    x = rng.normal(size=(2, 4, 3))
    w, b = rng.normal(size=(6, 3, 2, 2, 2)), rng.normal(size=(6, 3))
    np.testing.assert_allclose(nn.local2d_forward(x, w, b), local_loop(x, w, b), atol=1e-12)


def test_local_equal_banks_equals_conv(rng):
    x = rng.normal(size=(5, 2, 4, 5))
    w, b = rng.normal(size=(3, 2, 2, 2)), rng.normal(size=3)
    tied = np.broadcast_to(w, (12,) + w.shape).copy()
    out_local = nn.local2d_forward(x, tied, np.broadcast_to(b, (12, 3)).copy())
    assert np.array_equal(out_local, nn.conv2d_forward(x, w, b))


def test_local_single_position_equals_conv(rng):
    x = rng.normal(size=(1, 1, 1))
    w = rng.normal(size=(1, 1, 1, 1))
    assert np.array_equal(nn.local2d_forward(x, w[None]), nn.conv2d_forward(x, w))


def test_filter_larger_than_input():
    with pytest.raises(nn.ShapeError):
        nn.conv2d_forward(np.ones((1, 2, 2)), np.ones((1, 1, 3, 1)))
    with pytest.raises(nn.ShapeError):
        nn.local2d_forward(np.ones((1, 2, 2)), np.ones((1, 1, 1, 3, 1)))


def test_local_bank_count_checked():
    with pytest.raises(nn.ShapeError):
        nn.local2d_forward(np.ones((1, 3, 3)), np.ones((3, 1, 1, 2, 2)))


@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5))
def test_param_counts(cin, cout, fr, fc, rows, cols):
    if fr > rows or fc > cols:
        return
    conv = nn.conv2d_param_count(cin, cout, fr, fc)
    local = nn.local2d_param_count(cin, cout, fr, fc, rows, cols)
    npos = (rows - fr + 1) * (cols - fc + 1)
    assert local == npos * conv
    assert local >= conv and (local > conv) == (npos > 1)


@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(1, 4), st.integers(1, 4),
       st.integers(1, 4), st.integers(1, 4))
def test_conv_local_shape_algebra(n, cin, cout, rows, cols, fr, fc):
    if fr > rows or fc > cols:
        return
    x = np.zeros((n, cin, rows, cols))
    expect = (n, cout, rows - fr + 1, cols - fc + 1)
    assert nn.conv2d_forward(x, np.zeros((cout, cin, fr, fc))).shape == expect
    npos = expect[2] * expect[3]
    assert nn.local2d_forward(x, np.zeros((npos, cout, cin, fr, fc))).shape == expect


@pytest.mark.parametrize("seed", SEEDS)
def test_conv_gradients(seed):
    rng = np.random.default_rng(200 + seed)
    cin, cout, fr, fc = rng.integers(1, 3, size=4)
    R, C = fr + rng.integers(0, 3), fc + rng.integers(0, 3)
    arrays = [rng.normal(size=(2, cin, R, C)), rng.normal(size=(cout, cin, fr, fc)), rng.normal(size=cout)]
    check_grads(lambda t: F.conv2d(*t), arrays, rng)


@pytest.mark.parametrize("seed", SEEDS)
def test_local_gradients(seed):
    rng = np.random.default_rng(300 + seed)
    cin, cout, fr, fc = rng.integers(1, 3, size=4)
    R, C = fr + rng.integers(0, 3), fc + rng.integers(0, 3)
    npos = (R - fr + 1) * (C - fc + 1)
    arrays = [rng.normal(size=(2, cin, R, C)), rng.normal(size=(npos, cout, cin, fr, fc)),
              rng.normal(size=(npos, cout))]
    check_grads(lambda t: F.local2d(*t), arrays, rng)


@pytest.mark.parametrize("seed", SEEDS)
def test_loss_gradients(seed):
    rng = np.random.default_rng(400 + seed)
    target = rng.random(6)
    for loss in nn.LOSSES.values():
        check_grads(lambda t: loss(t[0], target), [rng.random(6)], rng)


# dropout / l2 -----------------------------------------------------------------


def test_dropout_rate_zero_identity(rng):
    x = rng.normal(size=50)
    assert np.array_equal(F.dropout(x, 0.0, True, 1).data, x)
    assert np.array_equal(F.dropout(x, 0.7, False, 1).data, x)


def test_dropout_statistics():
    x = np.ones(100_000)
    out = F.dropout(x, 0.5, True, 7).data
    assert abs(np.mean(out != 0) - 0.5) < 0.01
    assert abs(out.mean() - 1.0) < 0.02


def test_dropout_reproducible():
    x = np.ones(1000)
    assert np.array_equal(F.dropout(x, 0.3, True, 5).data, F.dropout(x, 0.3, True, 5).data)


@pytest.mark.parametrize("rate", [1.0, -0.1, 1.5])
def test_dropout_bad_rate(rate):
    with pytest.raises(ValueError):
        F.dropout(np.ones(3), rate, True, 0)


def test_dropout_gradient_uses_mask():
    p = nn.parameter(np.ones(200))
    out = F.dropout(p, 0.4, True, 3)
    nn.backward(out, np.ones(200))
    assert np.array_equal(p.grad, out.data)


def test_l2_zero_lambda():
    p = nn.parameter([3.0, -1.0])
    pen = F.l2_penalty([p], 0.0)
    nn.backward(pen)
    assert pen.data == 0.0 and not p.grad.any()


def test_l2_hand_example():
    p = nn.parameter([2.0])
    pen = F.l2_penalty([p], 0.5)
    nn.backward(pen)
    assert float(pen.data) == 2.0 and p.grad.tolist() == [2.0]


def test_l2_even(rng):
    w = rng.normal(size=(3, 3))
    a = F.l2_penalty([nn.parameter(w)], 0.1).data
    assert a == F.l2_penalty([nn.parameter(-w)], 0.1).data


# autodiff plumbing ------------------------------------------------------------


def test_identity_composition_passes_gradient(rng):
    p = nn.parameter(rng.normal(size=(2, 3)))
    out = F.reshape(F.reshape(p, (3, 2)), (2, 3))
    g = rng.normal(size=(2, 3))
    nn.backward(out, g)
    assert np.array_equal(p.grad, g)


def test_zero_upstream_zero_grads(rng):
    w = nn.parameter(rng.normal(size=(2, 3)))
    b = nn.parameter(np.zeros(2))
    out = F.dense(rng.normal(size=(4, 3)), w, b, "tanh")
    nn.backward(out, np.zeros(out.shape))
    assert not w.grad.any() and not b.grad.any()


def test_shared_parameter_accumulates():
    p = nn.parameter([1.0, 2.0])
    out = F.total(F.add(p, p))
    nn.backward(out)
    assert p.grad.tolist() == [2.0, 2.0]


def test_graph_cycle_detected():
    a = nn.parameter([1.0])
    b = F.scale(a, 2.0)
    c = F.scale(b, 3.0)
    b.parents = (c,)
    with pytest.raises(nn.GraphError):
        nn.backward(c)


def test_non_finite_trips():
    with pytest.raises(nn.NonFiniteError):
        nn.Tensor([np.nan])
    with pytest.raises(nn.NonFiniteError):
        F.scale(nn.parameter([1e308]), 10.0)


# adam -------------------------------------------------------------------------


def test_adam_zero_gradient_no_change():
    w = np.array([1.0, -2.0])
    state = nn.AdamState()
    nn.adam_step({"w": w}, {"w": np.zeros(2)}, state, lr=0.1)
    assert w.tolist() == [1.0, -2.0]


def test_adam_descends_on_square():
    w = np.array([1.0])
    nn.adam_step({"w": w}, {"w": 2 * w}, nn.AdamState(), lr=0.1)
    assert abs(w[0]) < 1.0
    assert w[0] == pytest.approx(0.9, abs=1e-6)


def test_adam_deterministic(rng):
    start = rng.normal(size=5)

    def run():
        w = start.copy()
        st_ = nn.AdamState()
        for i in range(20):
            nn.adam_step({"w": w}, {"w": np.sin(w * (i + 1))}, st_, lr=0.01)
        return w

    assert np.array_equal(run(), run())


def test_adam_bad_lr():
    with pytest.raises(ValueError):
        nn.adam_step({}, {}, nn.AdamState(), lr=0.0)


# tensor files -----------------------------------------------------------------


def test_tensor_file_round_trip(tmp_path, rng):
    tensors = {"layer.W": rng.normal(size=(3, 4)), "layer.b": np.zeros(4), "ids": np.arange(5)}
    path = tmp_path / "ck.tns"
    nn.save_tensors(path, tensors)
    back = nn.load_tensors(path)
    assert sorted(back) == sorted(tensors)
    for k in tensors:
        assert np.array_equal(back[k], tensors[k]) and back[k].shape == tensors[k].shape
    assert dump_tensors(back) == path.read_bytes()


def test_tensor_file_rejects_garbage():
    with pytest.raises(TensorFileError):
        parse_tensors(b"not a tensor file")
    buf = dump_tensors({"a": np.ones(3)})
    with pytest.raises(TensorFileError):
        parse_tensors(buf[:-4])
