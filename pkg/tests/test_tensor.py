import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from edgewise.tensor import (
    Parameters,
    Tape,
    adam_step,
    backward,
    dumps_checkpoint,
    finite_diff_check,
    glorot_init,
    loads_checkpoint,
)
from oracles import central_diff


# -- glorot ---------------------------------------------------------------------

def test_glorot_bound_single_entry():
    w = glorot_init(1, 1, seed=7)
    assert w.shape == (1, 1)
    assert abs(w[0, 0]) <= math.sqrt(3)


def test_glorot_deterministic():
    np.testing.assert_array_equal(glorot_init(3, 3, 7), glorot_init(3, 3, 7))


def test_glorot_mean_near_zero():
    w = glorot_init(100, 100, seed=1)
    assert abs(w.mean()) < 0.02
    # uniform on [-a, a] has variance a^2 / 3
    a2 = 6 / 200
    assert abs(w.var() - a2 / 3) < 0.05 * a2 / 3


@pytest.mark.parametrize("shape", [(0, 3), (3, 0)])
def test_glorot_rejects_zero_dim(shape):
    with pytest.raises(ValueError):
        glorot_init(*shape, seed=0)


# -- backward basics -------------------------------------------------------------

def _grad_of(fn, x0):
    tp = Tape()
    x = tp.variable(x0, name="x")
    out = fn(tp, x)
    backward(tp, out)
    return x.grad


def test_identity_gradient():
    g = _grad_of(lambda tp, x: x, 2.0)
    assert g[0, 0] == 1.0


def test_tanh_gradient_at_zero():
    g = _grad_of(lambda tp, x: tp.tanh(x), 0.0)
    assert g[0, 0] == 1.0


def test_backward_requires_scalar():
    tp = Tape()
    x = tp.variable(np.ones((2, 2)))
    with pytest.raises(ValueError):
        backward(tp, tp.tanh(x))


def test_sum_sigmoid_affine_matches_finite_differences():
    rng = np.random.default_rng(3)
    w0 = rng.normal(size=(3, 3))
    v = rng.normal(size=(1, 3))
    params = Parameters()
    params.add("W", w0)

    def f(tp, p):
        return tp.sum(tp.sigmoid(tp.affine(tp.constant(v), tp.param(p, "W"))))

    tp = Tape()
    grads = backward(tp, f(tp, params))
    numeric = central_diff(lambda w: float((1 / (1 + np.exp(-(v @ w)))).sum()), w0.copy())
    rel = np.abs(grads["W"] - numeric) / np.maximum(np.abs(numeric), 1e-8)
    assert rel.max() < 1e-4


# -- every primitive against finite differences -------------------------------------

def _check_primitive(build, shapes, rng, tol=1e-6):
    params = Parameters()
    for k, s in enumerate(shapes):
        params.add(f"x{k}", rng.normal(size=s))

    def loss(tp, p):
        nodes = [tp.param(p, f"x{k}") for k in range(len(shapes))]
        out = build(tp, *nodes)
        # random projection so every output entry matters
        proj = np.random.default_rng(99).normal(size=out.shape)
        return tp.sum(tp.mul(out, tp.constant(proj)))

    report = finite_diff_check(params, loss, h=1e-5, tol=tol)
    assert report.passed, report.max_error


SEG = np.array([0, 0, 1, 2, 2, 2])

PRIMITIVES = {
    "affine": (lambda tp, x, w, b: tp.affine(x, w, b), [(4, 3), (3, 2), (1, 2)]),
    "add": (lambda tp, a, b: tp.add(a, b), [(3, 2), (3, 2)]),
    "sub": (lambda tp, a, b: tp.sub(a, b), [(3, 2), (3, 2)]),
    "mul": (lambda tp, a, b: tp.mul(a, b), [(3, 2), (3, 2)]),
    "mul_col": (lambda tp, a, b: tp.mul(a, b), [(3, 4), (3, 1)]),
    "scale": (lambda tp, a: tp.scale(a, -1.7, 0.3), [(2, 2)]),
    "square": (lambda tp, a: tp.square(a), [(2, 3)]),
    "sigmoid": (lambda tp, a: tp.sigmoid(a), [(3, 3)]),
    "tanh": (lambda tp, a: tp.tanh(a), [(3, 3)]),
    "row_sum": (lambda tp, a: tp.row_sum(a), [(3, 4)]),
    "sum": (lambda tp, a: tp.sum(a), [(3, 4)]),
    "mean": (lambda tp, a: tp.mean(a), [(3, 4)]),
    "softmax_rows": (lambda tp, a: tp.softmax_rows(a), [(3, 4)]),
    "segment_softmax": (lambda tp, a: tp.segment_softmax(a, SEG, 4), [(6, 1)]),
    "segment_sum": (lambda tp, a: tp.segment_sum(a, SEG, 4), [(6, 3)]),
    "gather": (lambda tp, a: tp.gather(a, [2, 0, 2, 1]), [(3, 2)]),
    "concat": (lambda tp, a, b: tp.concat([a, b]), [(3, 2), (3, 1)]),
    "minmax": (lambda tp, a, b: tp.minmax(a, b), [(3, 4), (3, 4)]),
    "cosine_rows": (lambda tp, a, b: tp.cosine_rows(a, b), [(4, 3), (4, 3)]),
    "bce_soft": (
        lambda tp, a, b: tp.bce(tp.sigmoid(a), tp.sigmoid(b)),
        [(3, 2), (3, 2)],
    ),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients(name):
    build, shapes = PRIMITIVES[name]
    for trial in range(5):
        _check_primitive(build, shapes, np.random.default_rng(1000 * trial + len(name)))


def test_relu_gradient_away_from_kink():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(4, 4))
    x[np.abs(x) < 0.1] += 0.5
    params = Parameters()
    params.add("x", x)
    report = finite_diff_check(params, lambda tp, p: tp.sum(tp.relu(tp.param(p, "x"))))
    assert report.passed


def test_primitives_over_many_random_trials():
    # 100+ trials across the smooth primitives at the tight tolerance
    names = [n for n in sorted(PRIMITIVES) if n != "minmax"]
    trials = 0
    for t in range(6):
        for name in names:
            build, shapes = PRIMITIVES[name]
            _check_primitive(build, shapes, np.random.default_rng(t * 7919 + len(name)))
            trials += 1
    assert trials >= 100


# -- invariants ------------------------------------------------------------------------

def test_backward_is_linear():
    rng = np.random.default_rng(11)
    params = Parameters()
    params.add("W", rng.normal(size=(3, 2)))
    x = rng.normal(size=(4, 3))

    def f(tp, p):
        return tp.sum(tp.tanh(tp.affine(tp.constant(x), tp.param(p, "W"))))

    def g(tp, p):
        return tp.sum(tp.square(tp.sigmoid(tp.affine(tp.constant(x), tp.param(p, "W")))))

    tp = Tape()
    gf = backward(tp, f(tp, params))["W"]
    tp = Tape()
    gg = backward(tp, g(tp, params))["W"]
    tp = Tape()
    both = backward(tp, tp.add(f(tp, params), g(tp, params)))["W"]
    np.testing.assert_allclose(both, gf + gg, rtol=0, atol=1e-12)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8), st.floats(-100, 100))
def test_softmax_rows_sum_and_shift(row, shift):
    tp = Tape(grad=False)
    x = np.array([row])
    s = tp.softmax_rows(tp.constant(x)).value
    s2 = tp.softmax_rows(tp.constant(x + shift)).value
    assert abs(s.sum() - 1) < 1e-9
    np.testing.assert_allclose(s, s2, atol=1e-9)


def test_softmax_no_overflow():
    tp = Tape(grad=False)
    s = tp.softmax_rows(tp.constant([[1000.0, 1000.0, -1000.0]])).value
    np.testing.assert_allclose(s, [[0.5, 0.5, 0.0]])


def test_segment_softmax_empty_segment_and_sums():
    tp = Tape(grad=False)
    s = tp.segment_softmax(tp.constant([[1.0], [2.0], [3.0]]), np.array([0, 0, 2]), 3).value
    assert abs(s[0, 0] + s[1, 0] - 1) < 1e-12
    assert s[2, 0] == 1.0


def test_deterministic_gradients():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(5, 4))
    w = rng.normal(size=(4, 3))

    def run():
        params = Parameters()
        params.add("W", w)
        tp = Tape()
        out = tp.sum(tp.softmax_rows(tp.affine(tp.constant(x), tp.param(params, "W"))))
        out = tp.add(out, tp.sum(tp.square(tp.param(params, "W"))))
        return backward(tp, out)["W"]

    assert run().tobytes() == run().tobytes()


def test_unused_parameter_gets_zero_gradient():
    params = Parameters()
    params.add("a", [[1.0]])
    params.add("b", [[2.0]])
    tp = Tape()
    tp.param(params, "b")
    grads = backward(tp, tp.square(tp.param(params, "a")))
    assert grads["b"][0, 0] == 0.0
    assert grads["a"][0, 0] == 2.0


def test_cosine_zero_norm_gives_zero_and_no_gradient():
    tp = Tape()
    a = tp.variable([[0.0, 0.0]])
    b = tp.variable([[1.0, 2.0]])
    c = tp.cosine_rows(a, b)
    assert c.item() == 0.0
    backward(tp, c)
    assert not a.grad.any() and not b.grad.any()


# -- finite_diff_check ---------------------------------------------------------------

def test_quadratic_loss_check_is_tight():
    rng = np.random.default_rng(0)
    params = Parameters()
    params.add("W", rng.normal(size=(4, 3)))
    target = rng.normal(size=(4, 3))
    report = finite_diff_check(
        params,
        lambda tp, p: tp.sum(tp.square(tp.sub(tp.param(p, "W"), tp.constant(target)))),
        tol=1e-6,
    )
    assert report.passed and report.worst < 1e-6


def test_constant_loss_has_zero_errors():
    params = Parameters()
    params.add("W", np.ones((2, 2)))
    report = finite_diff_check(params, lambda tp, p: tp.constant(3.0))
    assert report.passed
    assert all(v == 0 for v in report.max_error.values())


def test_non_finite_loss_is_diagnosed():
    params = Parameters()
    params.add("W", np.ones((1, 1)))
    report = finite_diff_check(params, lambda tp, p: tp.constant(np.inf))
    assert not report.passed and "non-finite" in report.diagnostic


def test_wrong_gradient_is_caught():
    params = Parameters()
    params.add("W", np.array([[0.7]]))

    def bad(tp, p):
        w = tp.param(p, "W")
        # forward says w^2 but the recorded vjp claims 3w
        return tp._op(w.value**2, (w,), lambda g: (3 * w.value * g,))

    assert not finite_diff_check(params, bad).passed


# -- adam -----------------------------------------------------------------------------

def test_adam_zero_gradient_keeps_params():
    params = Parameters()
    params.add("W", np.arange(6.0).reshape(2, 3))
    before = params["W"].copy()
    adam_step(params, {"W": np.zeros((2, 3))})
    np.testing.assert_array_equal(params["W"], before)
    assert params.steps["W"] == 1


@pytest.mark.parametrize("g", [0.5, -3.0, 1e-3])
def test_adam_first_step_closed_form(g):
    lr, eps = 1e-3, 1e-8
    params = Parameters()
    params.add("W", np.zeros((2, 2)))
    adam_step(params, {"W": np.full((2, 2), g)}, lr=lr, eps=eps)
    # m_hat = g, v_hat = g^2 after bias correction
    expected = -lr * g / (abs(g) + eps)
    np.testing.assert_allclose(params["W"], expected, rtol=1e-9)


def test_adam_shape_mismatch():
    params = Parameters()
    params.add("W", np.zeros((2, 2)))
    with pytest.raises(ValueError):
        adam_step(params, {"W": np.zeros((2, 3))})


def test_adam_deterministic():
    def run():
        rng = np.random.default_rng(4)
        params = Parameters()
        params.add("W", rng.normal(size=(3, 3)))
        for _ in range(20):
            adam_step(params, {"W": rng.normal(size=(3, 3))})
        return params["W"]

    assert run().tobytes() == run().tobytes()


def test_adam_moment_shapes_follow_params():
    params = Parameters()
    params.add("A", np.zeros((2, 5)))
    assert params.first_moment["A"].shape == params.second_moment["A"].shape == (2, 5)


# -- checkpoints -------------------------------------------------------------------------

def test_checkpoint_roundtrip_is_lossless():
    rng = np.random.default_rng(8)
    params = Parameters()
    params.add("a", rng.normal(size=(3, 4)) * 1e-300)
    params.add("b", rng.normal(size=(1, 7)))
    params.add("c", [[1 / 3, math.pi]])
    conf = {"model": {"x": 1}}
    text = dumps_checkpoint(params, conf)
    doc = json.loads(text)
    assert doc["version"] == 1 and set(doc["parameters"]["a"]) == {"rows", "cols", "data"}
    back, conf2 = loads_checkpoint(text)
    assert conf2 == conf
    for name in params:
        assert back[name].tobytes() == params[name].tobytes()
    assert dumps_checkpoint(back, conf2) == text


def test_checkpoint_rejects_other_config():
    params = Parameters()
    params.add("a", [[1.0]])
    text = dumps_checkpoint(params, {"model": {"input_dim": 3}})
    with pytest.raises(ValueError):
        loads_checkpoint(text, expected_config={"model": {"input_dim": 4}})


def test_checkpoint_rejects_tampered_hash():
    params = Parameters()
    params.add("a", [[1.0]])
    doc = json.loads(dumps_checkpoint(params, {"k": 1}))
    doc["config"]["k"] = 2
    with pytest.raises(ValueError):
        loads_checkpoint(json.dumps(doc))
