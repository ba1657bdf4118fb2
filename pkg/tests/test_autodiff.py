import numpy as np
import pytest

from conftest import finite_difference, gradient_error, rel_err
from specfid import autodiff as ad
from specfid.autodiff import PRIMITIVES, VJP_EMITS, Tape, backward, grad
from specfid.errors import NumericError
from specfid.ganlab import MlpNet, gradient_penalty


def test_sigmoid_at_zero():
    tape = Tape()
    assert ad.sigmoid(tape.leaf(np.zeros(1))).value[0] == 0.5


def test_identity_matmul():
    tape = Tape()
    x = tape.leaf(np.arange(6.0).reshape(3, 2))
    assert np.array_equal(ad.matmul(tape.constant(np.eye(3)), x).value, x.value)


def test_tanh_derivative_at_zero():
    tape = Tape()
    x = tape.leaf(np.zeros(1))
    (g,) = grad(ad.sum(ad.tanh(x)), [x])
    numeric = finite_difference(lambda v: float(np.tanh(v).sum()), np.zeros(1))
    assert g.value[0] == pytest.approx(1.0)
    assert g.value[0] == pytest.approx(numeric[0], abs=1e-9)


def test_sum_of_squares():
    tape = Tape()
    x = tape.leaf(np.array([1.0, 2.0, 3.0]))
    grads = backward(ad.sum(ad.square(x)))
    assert np.allclose(grads[x.index].value, [2.0, 4.0, 6.0])
    assert np.allclose(tape.nodes[x.index].grad, [2.0, 4.0, 6.0])


def _weighted(out, seed=3):
    weights = np.random.default_rng(seed).standard_normal(out.shape)
    return ad.sum(ad.mul(out, out.tape.constant(weights)))


_UNARY = {
    "relu": ad.relu,
    "leaky_relu": ad.leaky_relu,
    "tanh": ad.tanh,
    "sigmoid": ad.sigmoid,
    "square": ad.square,
    "sqrt_eps": ad.sqrt_eps,
    "log_eps": ad.log_eps,
    "transpose": ad.transpose,
    "reciprocal": ad.reciprocal,
    "reshape": lambda x: ad.reshape(x, (x.shape[1], x.shape[0])),
    "clamp_min": lambda x: ad.clamp_min(x, 0.0),
    "sum_rows": lambda x: ad.sum(x, axis=1),
    "sum_cols": lambda x: ad.sum(x, axis=0),
    "expand": lambda x: ad.expand(ad.sum(x, axis=0), x.shape, axis=0),
}


def _away_from_kinks(rng, shape):
    # positive and bounded away from zero keeps relu, log, sqrt and 1/x smooth
    signs = rng.choice([-1.0, 1.0], size=shape)
    return signs * rng.uniform(0.3, 2.0, size=shape)


@pytest.mark.parametrize("op", sorted(_UNARY))
def test_unary_primitive_gradients(rng, op):
    positive = op in ("sqrt_eps", "log_eps", "reciprocal")
    for _ in range(5):
        x = _away_from_kinks(rng, (3, 4))
        if positive:
            x = np.abs(x)
        assert gradient_error(lambda tape, leaves: _weighted(_UNARY[op](leaves[0])), [x]) < 1e-5


@pytest.mark.parametrize(
    "op",
    [
        lambda a, b: ad.add(a, b),
        lambda a, b: ad.sub(a, b),
        lambda a, b: ad.mul(a, b),
        lambda a, b: ad.matmul(a, ad.transpose(b)),
    ],
    ids=["add", "sub", "mul", "matmul"],
)
def test_binary_primitive_gradients(rng, op):
    for _ in range(5):
        a, b = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
        assert gradient_error(lambda tape, leaves: _weighted(op(*leaves)), [a, b]) < 1e-5


def test_affine_and_bias_gradients(rng):
    x, w = rng.standard_normal((5, 3)), rng.standard_normal((3, 2))
    b, c = rng.standard_normal(2), rng.standard_normal(3)

    def build(tape, leaves):
        x_t, w_t, b_t, c_t = leaves
        return ad.add(_weighted(ad.affine(x_t, w_t, b_t)), _weighted(ad.bias_add(x_t, c_t), seed=4))

    assert gradient_error(build, [x, w, b, c]) < 1e-5


def test_mean_gradient(rng):
    x = rng.standard_normal((4, 3))
    assert gradient_error(lambda tape, leaves: ad.mean(ad.square(leaves[0])), [x]) < 1e-5


def test_mlp_gradients_match_finite_differences(rng):
    for _ in range(50):
        net = MlpNet.init((4, 6, 3), rng, hidden="tanh", output="sigmoid")
        batch = rng.standard_normal((5, 4))

        def build(tape, leaves):
            out = net.forward(tape.constant(batch), leaves)
            return ad.mean(ad.square(out))

        assert gradient_error(build, net.params) < 1e-5


def test_gradient_norm_double_backward(rng):
    w_value = rng.standard_normal(4)
    tape = Tape()
    w = tape.leaf(w_value)
    x = tape.leaf(rng.standard_normal(4))
    (gx,) = grad(ad.sum(ad.mul(w, x)), [x], create_graph=True)
    (gw,) = grad(ad.sum(ad.square(gx)), [w])
    assert np.allclose(gw.value, 2.0 * w_value, atol=1e-12)


def test_gradient_penalty_parameter_gradients(rng):
    for _ in range(10):
        critic = MlpNet.init((6, 5, 1), rng, hidden="tanh", output="none")
        mixed = rng.standard_normal((4, 6))

        def build(tape, leaves):
            interpolates = tape.leaf(mixed)
            return gradient_penalty(interpolates, critic.forward(interpolates, leaves))

        assert gradient_error(build, critic.params) < 1e-4


def test_second_order_graph_uses_only_primitives(rng):
    tape = Tape()
    critic = MlpNet.init((3, 4, 1), rng, hidden="leaky_relu")
    params = critic.bind(tape)
    interpolates = tape.leaf(rng.standard_normal((2, 3)))
    x = ad.log_eps(ad.add(ad.square(interpolates), 1.0))
    scores = ad.sigmoid(critic.forward(x, params))
    penalty = gradient_penalty(interpolates, scores)
    grad(penalty, params)
    assert {node.op for node in tape.nodes} <= PRIMITIVES | {"leaf"}


def test_vjp_table_is_closed():
    assert set(VJP_EMITS) == PRIMITIVES
    for emitted in VJP_EMITS.values():
        assert emitted <= PRIMITIVES


def test_scalar_lifting(rng):
    tape = Tape()
    x = tape.leaf(rng.standard_normal((2, 2)))
    y = 2.0 * x - 1.0
    assert np.allclose(y.value, 2.0 * x.value - 1.0)
    (g,) = grad(ad.sum(y), [x])
    assert np.allclose(g.value, 2.0)


def test_unreachable_leaf_gets_zeros():
    tape = Tape()
    x = tape.leaf(np.ones(3))
    unused = tape.leaf(np.ones(2))
    gx, gu = grad(ad.sum(x), [x, unused])
    assert np.array_equal(gx.value, np.ones(3))
    assert np.array_equal(gu.value, np.zeros(2))


def test_shared_subexpression_accumulates():
    tape = Tape()
    x = tape.leaf(np.array([3.0]))
    y = ad.mul(x, x)
    (g,) = grad(ad.sum(ad.add(y, y)), [x])
    assert g.value[0] == pytest.approx(12.0)


def test_gradient_of_intermediate():
    tape = Tape()
    x = tape.leaf(np.array([1.0, 2.0]))
    h = ad.square(x)
    (gh,) = grad(ad.sum(ad.mul(h, 3.0)), [h])
    assert np.allclose(gh.value, 3.0)


def test_constants_are_not_recorded():
    tape = Tape()
    c = tape.constant(np.ones(2))
    out = ad.tanh(c)
    assert not out.recorded
    assert tape.nodes == []


def test_non_scalar_root_rejected():
    tape = Tape()
    x = tape.leaf(np.ones(3))
    with pytest.raises(ValueError):
        backward(ad.square(x))


def test_shape_mismatch_rejected():
    tape = Tape()
    with pytest.raises(ValueError):
        ad.add(tape.leaf(np.ones(3)), tape.leaf(np.ones(4)))
    with pytest.raises(ValueError):
        ad.matmul(tape.leaf(np.ones((2, 3))), tape.leaf(np.ones((2, 3))))


def test_non_finite_values_raise():
    tape = Tape()
    with pytest.raises(NumericError):
        ad.reciprocal(tape.leaf(np.zeros(1)))
    with pytest.raises(NumericError):
        tape.leaf(np.array([np.nan]))


def test_rel_err_helper():
    assert rel_err(np.array([1.0]), np.array([1.0])) == 0.0
    assert rel_err(np.array([2.0]), np.array([1.0])) == pytest.approx(0.5)
