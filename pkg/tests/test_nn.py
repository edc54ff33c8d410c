import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from specshift import nn
from specshift.nn import Tape, Tensor


def grad_of(fn, *arrays_in):
    """Output of ``fn`` and input gradients under an all-ones upstream."""
    ts = [Tensor(a, requires_grad=True) for a in arrays_in]
    with Tape() as tape:
        out = fn(*ts)
        loss = nn.matmul(nn.matmul(Tensor(np.ones((1, out.shape[0]))), out), Tensor(np.ones((out.shape[1], 1))))
    tape.backward(loss)
    return out, [t.grad for t in ts]


def test_relu_example():
    out, (g,) = grad_of(nn.relu, np.array([[-1.0, 2.0]]))
    assert out.data.tolist() == [[0.0, 2.0]]
    assert g.tolist() == [[0.0, 1.0]]


def test_softmax_example():
    assert nn.row_softmax(Tensor([[0.0, 0.0]])).data.tolist() == [[0.5, 0.5]]


def test_cross_entropy_example():
    assert nn.cross_entropy_from_logits(Tensor([[0.0, 0.0]]), [0]).item() == pytest.approx(math.log(2), abs=1e-15)


def test_shape_error_message():
    with pytest.raises(nn.ShapeError, match=r"shape error matmul"):
        nn.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_numeric_overflow():
    big = Tensor([[1e308]])
    with pytest.raises(nn.NumericError, match="numeric overflow in scale"):
        nn.scale(big, 10.0)


def test_global_max_tie_goes_to_lowest_row():
    _, (g,) = grad_of(nn.global_max_rows, np.array([[1.0, 5.0], [1.0, 2.0], [0.0, 5.0]]))
    assert g.tolist() == [[1.0, 1.0], [0.0, 0.0], [0.0, 0.0]]


def test_softmax_large_inputs_stable():
    out = nn.row_softmax(Tensor([[1000.0, 1000.0, -1000.0]]))
    np.testing.assert_allclose(out.data, [[0.5, 0.5, 0.0]], atol=1e-15)


finite_rows = arrays(np.float64, (3, 4), elements=st.floats(-30, 30))


@settings(max_examples=100)
@given(finite_rows, st.floats(-50, 50))
def test_softmax_rows_and_shift(x, c):
    a = nn.row_softmax(Tensor(x)).data
    b = nn.row_softmax(Tensor(x + c)).data
    assert np.all(np.abs(a.sum(axis=1) - 1) <= 1e-12)
    assert np.max(np.abs(a - b)) <= 1e-12


# gradcheck of every primitive at smooth points


rng = np.random.default_rng(0)
X = rng.normal(size=(4, 3))
W = rng.normal(size=(3, 2))
B = rng.normal(size=(1, 2))
K = rng.normal(size=(4, 1))


def _reduce(t):
    # fixed random projection so every output entry matters
    proj = np.random.default_rng(99).normal(size=(t.shape[1], 1))
    return nn.global_mean_rows(nn.matmul(t, Tensor(proj)))


PRIMITIVES = {
    "matmul": (lambda p: _reduce(nn.matmul(p["x"], p["w"])), {"x": X, "w": W}),
    "add": (lambda p: _reduce(nn.add(p["x"], p["y"])), {"x": X, "y": X[::-1].copy()}),
    "add_bias": (lambda p: _reduce(nn.add_bias(p["x"], p["b"])), {"x": X @ W, "b": B}),
    "scale": (lambda p: _reduce(nn.scale(p["x"], -2.5)), {"x": X}),
    "transpose": (lambda p: _reduce(nn.transpose(p["x"])), {"x": X}),
    "relu": (lambda p: _reduce(nn.relu(p["x"])), {"x": X + np.sign(X) * 0.1}),
    "row_softmax": (lambda p: _reduce(nn.row_softmax(p["x"], scale=3.0)), {"x": X}),
    "global_max_rows": (lambda p: _reduce(nn.global_max_rows(p["x"])), {"x": X}),
    "global_mean_rows": (lambda p: _reduce(nn.global_mean_rows(p["x"])), {"x": X}),
    "scale_rows": (lambda p: _reduce(nn.scale_rows(p["x"], p["k"])), {"x": X, "k": K}),
    "cross_entropy": (lambda p: nn.cross_entropy_from_logits(p["x"], [0, 2, 1, 2]), {"x": X}),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradcheck(name):
    fn, params = PRIMITIVES[name]
    assert nn.gradcheck(fn, params) < 1e-4


def test_gradcheck_quadratic():
    w = rng.normal(size=(3, 3))

    def half_sq(p):
        flat = nn.matmul(Tensor(np.ones((1, 3))), p["w"])
        return nn.scale(nn.matmul(flat, nn.transpose(flat)), 0.5)

    # d/dW of 0.5*||1^T W||^2, a smooth quadratic
    assert nn.gradcheck(half_sq, {"w": w}) < 1e-9


def test_gradcheck_softmax_cross_entropy():
    def loss(p):
        probs = nn.row_softmax(nn.matmul(p["x"], p["w"]))
        return nn.cross_entropy_from_logits(probs, [1, 0, 1, 1])

    assert nn.gradcheck(loss, {"x": X, "w": W}) < 1e-6


def test_gradient_accumulates_across_uses():
    x = Tensor([[2.0]], requires_grad=True)
    with Tape() as tape:
        y = nn.add(nn.scale(x, 3.0), nn.matmul(x, x))
    tape.backward(y)
    assert x.grad.tolist() == [[7.0]]


# Adam


def test_adam_first_step():
    p = {"w": np.array([[0.0]])}
    nn.adam_step(p, {"w": np.array([[1.0]])}, nn.AdamState())
    assert p["w"][0, 0] == pytest.approx(-0.001 / (1 + 1e-8), rel=1e-12)


def test_adam_zero_grad():
    p = {"w": np.array([[0.3, -0.2]])}
    state = nn.AdamState()
    nn.adam_step(p, {"w": np.zeros((1, 2))}, state)
    assert p["w"].tolist() == [[0.3, -0.2]] and state.t == 1


def test_adam_matches_closed_form():
    g = 0.7
    p = {"w": np.array([[1.0]])}
    state = nn.AdamState()
    m = v = 0.0
    theta = 1.0
    steps = []
    for t in range(1, 6):
        before = p["w"][0, 0]
        nn.adam_step(p, {"w": np.array([[g]])}, state)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        theta -= 1e-3 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert p["w"][0, 0] == pytest.approx(theta, rel=1e-14)
        steps.append(abs(p["w"][0, 0] - before))
    assert steps[1] <= steps[0] * (1 + 1e-6)


# Glorot


def test_glorot_bound_and_determinism():
    w = nn.glorot_init(1, 5, np.random.default_rng(0))
    assert np.all(np.abs(w) <= 1.0)
    assert np.array_equal(w, nn.glorot_init(1, 5, np.random.default_rng(0)))


def test_glorot_moments():
    w = nn.glorot_init(200, 500, np.random.default_rng(1))
    bound = math.sqrt(6 / 700)
    sigma = bound / math.sqrt(3) / math.sqrt(w.size)
    assert abs(w.mean()) < 3 * sigma
    assert np.all(np.abs(w) <= bound)


# parameter files


def test_params_round_trip(tmp_path):
    params = {"W0": rng.normal(size=(3, 4)), "b0": rng.normal(size=(1, 4)), "wA": np.zeros((2, 1))}
    nn.save_params(params, tmp_path / "p.bin")
    back = nn.load_params(tmp_path / "p.bin")
    assert list(back) == list(params)
    for k in params:
        assert back[k].tobytes() == params[k].tobytes()


def test_params_bad_magic(tmp_path):
    (tmp_path / "p.bin").write_bytes(b"NOTMAGIC" + b"\0" * 8)
    with pytest.raises(ValueError, match="not a parameter file"):
        nn.load_params(tmp_path / "p.bin")


def test_params_layout(tmp_path):
    nn.save_params({"ab": np.array([[1.5]])}, tmp_path / "p.bin")
    raw = (tmp_path / "p.bin").read_bytes()
    assert raw == b"SSPARAM1" + b"\x01\0\0\0" + b"\x02\0ab" + b"\x01\0\0\0\x01\0\0\0" + np.float64(1.5).tobytes()
