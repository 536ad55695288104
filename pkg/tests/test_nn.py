import numpy as np
import pytest
from gradcases import CASES

from labelmia import ArgumentError, NumericError
from labelmia.nn import Adam, BatchNorm1d, Dropout, Linear, Parameter, Sequential, Tensor, dropout, \
    forward_backward, no_grad
from labelmia.nn import autograd as ag
from labelmia.nn.gradcheck import check_gradients, numeric_grad


@pytest.mark.parametrize("name", sorted(CASES))
@pytest.mark.parametrize("seed", range(5))
def test_layer_gradients(name, seed):
    rng = np.random.default_rng([seed, 7])
    loss_fn, tensors = CASES[name](rng)
    assert check_gradients(loss_fn, tensors) < 1e-4


@pytest.mark.parametrize("op", ["exp", "log", "relu", "elu", "sigmoid", "leaky_relu", "div", "mean"])
def test_elementwise_gradients(op):
    rng = np.random.default_rng(3)
    x = Tensor(rng.uniform(0.5, 2.0, size=(3, 4)) * rng.choice([-1, 1], size=(3, 4)),
               requires_grad=True)
    y = Tensor(rng.uniform(1.0, 2.0, size=(1, 4)), requires_grad=True)
    if op == "log":
        x.data = np.abs(x.data)
    fns = {"div": lambda: ag.sum(ag.div(x, y)), "mean": lambda: ag.mean(ag.mul(x, x))}
    fn = fns.get(op, lambda: ag.sum(ag.mul(getattr(ag, op)(x), x)))
    assert check_gradients(fn, [x, y] if op == "div" else [x]) < 1e-5


def test_broadcast_add_gradient():
    rng = np.random.default_rng(0)
    a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=3), requires_grad=True)
    assert check_gradients(lambda: ag.sum(ag.mul(ag.add(a, b), a)), [a, b]) < 1e-6


def test_segment_and_take_rows_gradients():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(5, 2)), requires_grad=True)
    idx = np.array([0, 0, 3, 4, 1])
    seg = np.array([1, 0, 1, 2, 2])
    fn = lambda: ag.sum(ag.mul(ag.segment_sum(ag.take_rows(x, idx), seg, 3), 1.7))  # noqa: E731
    assert check_gradients(fn, [x]) < 1e-6


def test_uniform_logits_loss_is_log_c():
    for c in (2, 5, 7):
        layer = Linear(4, c, np.random.default_rng(0))
        layer.weight.data[:] = 0.0
        x = Tensor(np.random.default_rng(1).normal(size=(6, 4)))
        loss = forward_backward(layer, x, np.zeros(6, dtype=int))
        assert loss == pytest.approx(np.log(c), abs=1e-12)


def test_identity_mse_is_zero():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    loss = ag.mse_loss(x, x.data.copy())
    loss.backward()
    assert float(loss.data) == 0.0
    assert np.all(x.grad == 0.0)


def test_5x4_linear_ce_gradient_elementwise():
    rng = np.random.default_rng(11)
    layer = Linear(5, 4, rng)
    x = Tensor(rng.normal(size=(7, 5)))
    t = rng.integers(0, 4, 7)
    layer.zero_grad()
    ag.softmax_cross_entropy(layer(x), t).backward()
    num = numeric_grad(lambda: float(ag.softmax_cross_entropy(layer(x), t).data), layer.weight.data)
    rel = np.abs(layer.weight.grad - num) / np.maximum(np.abs(num), 1e-8)
    assert rel.max() < 1e-4


def test_adam_zero_gradient_leaves_params():
    p = Parameter(np.array([1.0, -2.0]))
    Adam([p], lr=0.1).step([np.zeros(2)])
    assert np.array_equal(p.data, [1.0, -2.0])


def test_adam_first_step_moves_by_lr():
    p = Parameter(np.array([1.0]))
    Adam([p], lr=0.1).step([np.array([1.0])])
    assert p.data[0] == pytest.approx(0.9, abs=1e-6)


def test_adam_weight_decay_shrinks():
    p = Parameter(np.array([1.0]))
    Adam([p], lr=0.1, weight_decay=0.5).step([np.array([0.0])])
    assert p.data[0] < 1.0


def test_adam_zero_lr_bitwise_unchanged():
    rng = np.random.default_rng(2)
    p = Parameter(rng.normal(size=(3, 3)))
    before = p.data.tobytes()
    opt = Adam([p], lr=0.0, weight_decay=0.5)
    for _ in range(5):
        opt.step([rng.normal(size=(3, 3))])
    assert p.data.tobytes() == before


def test_adam_rejects_non_finite():
    p = Parameter(np.zeros(2))
    with pytest.raises(NumericError):
        Adam([p]).step([np.array([np.nan, 0.0])])


def test_batchnorm_constant_column_equals_shift():
    bn = BatchNorm1d(2)
    bn.beta.data = np.array([0.3, -1.0])
    x = np.column_stack([np.full(5, 4.0), np.arange(5.0)])
    out = bn(Tensor(x)).data
    assert np.allclose(out[:, 0], 0.3)


def test_batchnorm_standardized_input_passthrough():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(200, 3))
    x = (x - x.mean(0)) / x.std(0)
    out = BatchNorm1d(3)(Tensor(x)).data
    assert np.allclose(out, x, atol=1e-5)


def test_batchnorm_needs_two_rows_and_eval_uses_running_stats():
    bn = BatchNorm1d(2, name="bn")
    with pytest.raises(NumericError) as info:
        bn(Tensor(np.ones((1, 2))))
    assert info.value.layer == "bn"
    bn(Tensor(np.array([[0.0, 2.0], [2.0, 4.0]])))
    assert np.allclose(bn.running_mean, [0.1, 0.3])
    bn.eval()
    one = bn(Tensor(np.array([[1.0, 3.0]]))).data
    assert one.shape == (1, 2) and np.isfinite(one).all()


def test_dropout_rate_zero_and_eval_are_identity():
    x = Tensor(np.arange(12.0).reshape(3, 4))
    assert np.array_equal(dropout(x, 0.0, None).data, x.data)
    assert np.array_equal(dropout(x, 0.7, None, training=False).data, x.data)


def test_dropout_fraction_concentrates():
    x = Tensor(np.ones((100, 100)))
    out = dropout(x, 0.5, np.random.default_rng(0)).data
    frac = np.mean(out == 0.0)
    assert 0.47 <= frac <= 0.53
    assert np.allclose(out[out != 0], 2.0)


def test_dropout_reproducible_and_validated():
    x = Tensor(np.ones((10, 10)))
    a = dropout(x, 0.3, np.random.default_rng(5)).data
    b = dropout(x, 0.3, np.random.default_rng(5)).data
    assert a.tobytes() == b.tobytes()
    with pytest.raises(ArgumentError):
        Dropout(1.0)
    with pytest.raises(ArgumentError):
        Dropout(0.5)(x)


def test_softmax_rows_sum_to_one():
    from labelmia.graph import softmax_rows

    z = np.random.default_rng(0).normal(scale=50, size=(20, 6))
    assert np.allclose(softmax_rows(z).sum(1), 1.0, atol=1e-9)


def test_non_finite_activation_names_layer():
    layer = Linear(2, 2, np.random.default_rng(0), name="fc")
    layer.weight.data[0, 0] = np.inf
    with pytest.raises(NumericError) as info:
        layer(Tensor(np.ones((1, 2))))
    assert info.value.layer == "fc"


def test_no_grad_builds_no_graph():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with no_grad():
        y = ag.mul(x, 2.0)
    assert not y.requires_grad


def test_shape_mismatch_raises():
    with pytest.raises(ArgumentError):
        ag.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ArgumentError):
        ag.softmax_cross_entropy(Tensor(np.ones((2, 3))), [0, 1, 2])


def test_sequential_mlp_learns_xor():
    rng = np.random.default_rng(0)
    from labelmia.nn import Activation

    net = Sequential(Linear(2, 8, rng), Activation("relu"), Linear(8, 1, rng))
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    y = np.array([0, 1, 1, 0])
    opt = Adam(net.parameters(), lr=0.05)
    for _ in range(500):
        forward_backward(net, Tensor(X), y, loss="bce")
        opt.step()
    with no_grad():
        pred = net(Tensor(X)).data[:, 0] > 0
    assert np.array_equal(pred.astype(int), y)
