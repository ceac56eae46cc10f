import numpy as np
import pytest

import prbcast.autodiff as ad
from prbcast import kernels
from prbcast.autodiff import Tape, Tensor, backward, grad_check
from prbcast.errors import ContractError, NumericError, ParseError, ShapeError

TOL = 1e-4


def _pos(rng, *shape):
    return rng.uniform(0.5, 2.0, shape)


def _weights(rng, *shape):
    return rng.normal(size=shape)


PRIMITIVES = {
    "add": (lambda a, b: ad.reduce_sum(ad.add(a, b) * ad.add(a, b)), [(3, 4), (4,)]),
    "sub": (lambda a, b: ad.reduce_sum(ad.square(ad.sub(a, b))), [(3, 4), (3, 1)]),
    "mul": (lambda a, b: ad.reduce_sum(ad.mul(a, b)), [(2, 3), (2, 3)]),
    "div": (lambda a, b: ad.reduce_sum(ad.div(a, b)), [(2, 3), "pos:2,3"]),
    "matmul": (lambda a, b: ad.reduce_sum(ad.tanh(ad.matmul(a, b))), [(3, 4), (4, 2)]),
    "matmul_batched": (lambda a, b: ad.reduce_sum(ad.tanh(ad.matmul(a, b))), [(2, 3, 4), (2, 4, 2)]),
    "matmul_broadcast": (lambda a, b: ad.reduce_sum(ad.tanh(ad.matmul(a, b))), [(2, 3, 4), (4, 5)]),
    "neg": (lambda a: ad.reduce_sum(ad.neg(a) * a * a), [(5,)]),
    "tanh": (lambda a: ad.reduce_sum(ad.tanh(a)), [(3, 3)]),
    "sigmoid": (lambda a: ad.reduce_sum(ad.sigmoid(a) * a), [(3, 3)]),
    "relu": (lambda a: ad.reduce_sum(ad.relu(a) * a), [(4, 4)]),
    "softplus": (lambda a: ad.reduce_sum(ad.softplus(a) * a), [(3, 3)]),
    "exp": (lambda a: ad.reduce_sum(ad.exp(a)), [(3, 3)]),
    "log": (lambda a: ad.reduce_sum(ad.log(a)), ["pos:3,3"]),
    "sqrt": (lambda a: ad.reduce_sum(ad.sqrt(a)), ["pos:3,3"]),
    "square": (lambda a: ad.reduce_sum(ad.square(a)), [(3, 3)]),
    "softmax": (lambda a, w: ad.reduce_sum(ad.softmax(a) * w), [(2, 5), (2, 5)]),
    "reduce_sum_axis": (lambda a: ad.reduce_sum(ad.square(ad.reduce_sum(a, axis=1, keepdims=True))), [(3, 4)]),
    "reduce_mean": (lambda a: ad.reduce_sum(ad.square(ad.reduce_mean(a, axis=0))), [(3, 4)]),
    "reshape": (lambda a, w: ad.reduce_sum(ad.reshape(a, (4, 3)) * w), [(3, 4), (4, 3)]),
    "transpose": (lambda a, w: ad.reduce_sum(ad.transpose(a, (0, 2, 1)) * w), [(2, 3, 4), (2, 4, 3)]),
    "slice": (lambda a: ad.reduce_sum(ad.square(a[:, 1:3])), [(3, 4)]),
    "concat": (lambda a, b: ad.reduce_sum(ad.tanh(ad.concat([a, b], axis=1))), [(2, 3), (2, 2)]),
    "stack": (lambda a, b: ad.reduce_sum(ad.square(ad.stack([a, b], axis=1)) * 0.5), [(2, 3), (2, 3)]),
}


def _inputs(rng, specs):
    out = []
    for s in specs:
        if isinstance(s, str):
            out.append(_pos(rng, *map(int, s.split(":")[1].split(","))))
        else:
            out.append(_weights(rng, *s))
    return out


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients(name, rng):
    fn, specs = PRIMITIVES[name]
    if name == "relu":
        x = _weights(rng, 4, 4)
        x[np.abs(x) < 0.05] = 0.3     # keep away from the kink
        assert grad_check(fn, [x]) < TOL
        return
    assert grad_check(fn, _inputs(rng, specs)) < TOL


@pytest.mark.parametrize("backend", ["python", "cython"])
def test_lstm_cell_gradient(backend, rng):
    if backend == "cython" and kernels.compiled_backend is None:
        pytest.skip("compiled kernels not built")
    kernels.use_backend(backend)
    try:
        B, I, H = 3, 2, 4
        args = [rng.normal(size=(B, I)), rng.normal(size=(B, H)), rng.normal(size=(B, H)),
                rng.normal(size=(I + H, 4 * H)) * 0.5, rng.normal(size=4 * H) * 0.1]
        w1, w2 = rng.normal(size=(B, H)), rng.normal(size=(B, H))

        def fn(x, h, c, W, b):
            h1, c1 = ad.lstm_cell(x, h, c, W, b)
            h2, c2 = ad.lstm_cell(x, h1, c1, W, b)
            return ad.reduce_sum(h2 * w1 + c2 * w2)

        assert grad_check(fn, args) < TOL
    finally:
        kernels.use_backend("cython" if kernels.compiled_backend is not None else "python")


def test_backends_agree(rng):
    if kernels.compiled_backend is None:
        pytest.skip("compiled kernels not built")
    py, cy = kernels.python_backend, kernels.compiled_backend
    for B, I, H in [(1, 1, 3), (7, 5, 40), (32, 41, 40)]:
        x, h, c = rng.normal(size=(B, I)), rng.normal(size=(B, H)), rng.normal(size=(B, H))
        W, b = rng.normal(size=(I + H, 4 * H)), rng.normal(size=4 * H)
        fp, fc = py.lstm_cell_forward(x, h, c, W, b), cy.lstm_cell_forward(x, h, c, W, b)
        for a, z in zip(fp, fc):
            np.testing.assert_allclose(a, z, rtol=1e-12, atol=1e-13)
        dh, dc = rng.normal(size=(B, H)), rng.normal(size=(B, H))
        bp = py.lstm_cell_backward(dh, dc, c, W, *fp[2:])
        bc = cy.lstm_cell_backward(dh, dc, c, W, *fc[2:])
        for a, z in zip(bp, bc):
            np.testing.assert_allclose(a, z, rtol=1e-11, atol=1e-12)
    e = rng.normal(size=1000)
    np.testing.assert_allclose(py.ar1_filter(e, 0.8), cy.ar1_filter(e, 0.8), rtol=1e-13, atol=1e-13)


def test_ar1_filter_recurrence():
    e = np.array([1.0, 0.0, 0.0, 2.0])
    out = kernels.ar1_filter(e, 0.5)
    assert out.tolist() == [1.0, 0.5, 0.25, 2.125]


def test_shared_input_accumulates():
    x = Tensor(np.array([3.0]), requires_grad=True)
    with Tape() as tape:
        y = ad.reduce_sum(x * x + x)
    g = backward(tape, y, [x])
    assert g[x].tolist() == [7.0]


def test_unreached_param_gets_zero():
    x = Tensor(np.ones(2), requires_grad=True)
    z = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = ad.reduce_sum(x * 2.0)
    g = backward(tape, y, [x, z])
    assert g[z].tolist() == [0.0, 0.0, 0.0]


def test_reflected_ops_with_ndarray():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    with Tape() as tape:
        y = ad.reduce_sum(np.array([1.0, 1.0]) - x)
    assert backward(tape, y, [x])[x].tolist() == [-1.0, -1.0]


def test_non_scalar_loss_rejected():
    x = Tensor(np.ones(2), requires_grad=True)
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(ContractError):
        backward(tape, y)


def test_non_finite_raises():
    with pytest.raises(NumericError, match="exp"):
        ad.exp(Tensor(np.array([1000.0])))
    with pytest.raises(NumericError):
        ad.log(Tensor(np.array([-1.0])))


def test_shape_errors():
    with pytest.raises(ShapeError):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError):
        ad.lstm_cell(np.ones((2, 1)), np.ones((2, 3)), np.ones((2, 3)), np.ones((4, 11)), np.ones(12))


def test_no_tape_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with Tape() as tape:
        ad.exp(Tensor(np.ones(2)))
    assert len(tape) == 0
    ad.exp(x)         # outside a tape: fine, nothing recorded


def test_adam_single_step_matches_hand_computation():
    p = {"w": Tensor(np.array([1.0]), requires_grad=True)}
    state = ad.AdamState(lr=0.1)
    ad.adam_step(p, {"w": np.array([0.5])}, state)
    # m_hat = 0.5, v_hat = 0.25 -> update = lr * 0.5 / (0.5 + eps)
    assert p["w"].data[0] == pytest.approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8), abs=1e-15)


def test_adam_minimizes_quadratic():
    w = Tensor(np.array([5.0, -3.0]), requires_grad=True)
    state = ad.AdamState(lr=0.1)
    for _ in range(500):
        with Tape() as tape:
            loss = ad.reduce_sum(ad.square(w - np.array([1.0, 2.0])))
        g = backward(tape, loss, [w])
        ad.adam_step({"w": w}, {"w": g[w]}, state)
    np.testing.assert_allclose(w.data, [1.0, 2.0], atol=1e-3)


def test_adam_shape_mismatch():
    with pytest.raises(ShapeError):
        ad.adam_step({"w": Tensor(np.ones(2))}, {"w": np.ones(3)}, ad.AdamState())


def test_clip_grad_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert ad.clip_grad_norm(g, 1.0) == 5.0
    assert np.hypot(g["a"][0], g["b"][0]) == pytest.approx(1.0)
    g = {"a": np.array([0.3])}
    ad.clip_grad_norm(g, 1.0)
    assert g["a"][0] == 0.3


def test_checkpoint_round_trip(tmp_path, rng):
    params = {"w": rng.normal(size=(3, 2)), "b": rng.normal(size=2)}
    ad.save_checkpoint(tmp_path / "c.json", "sff", {"kind": "sff"}, params, {"final_loss": 1.5})
    doc = ad.load_checkpoint(tmp_path / "c.json")
    assert doc["kind"] == "sff" and doc["meta"] == {"final_loss": 1.5}
    for k in params:
        assert doc["params"][k].tobytes() == params[k].tobytes()
    text = ad.dump_checkpoint("sff", {"kind": "sff"}, params)
    assert text == ad.dump_checkpoint("sff", {"kind": "sff"}, params)
    with pytest.raises(ParseError):
        ad.parse_checkpoint('{"format": "other"}')
