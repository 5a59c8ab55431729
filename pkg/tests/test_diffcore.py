import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurotune.diffcore import (
    SGD,
    Adam,
    Graph,
    GraphReleasedError,
    MissingGradientError,
    Module,
    NonFiniteError,
    Parameter,
    Tensor,
    finite_diff_check,
    forward,
    load_checkpoint,
    make_optimizer,
    ops,
    save_checkpoint,
)
from neurotune.diffcore.checkpoint import decode_tensors, encode_tensors
from neurotune.diffcore.tensor import topological_order
from neurotune.modelzoo.layers import BatchNorm, Conv2d, GroupNorm, LayerNorm, Linear


def away_from_zero(rng, shape, lo=0.2):
    return rng.uniform(lo, 1.5, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def projected(fn, *shapes, rng, positive=False):
    """Tensors for ``shapes`` and a scalar loss sum(fn(*tensors) * R)."""
    ts = [Tensor(rng.uniform(0.3, 2.0, s) if positive else away_from_zero(rng, s), requires_grad=True) for s in shapes]
    out_shape = fn(*ts).shape
    weights = rng.standard_normal(out_shape)

    def loss():
        return ops.sum(ops.mul(fn(*ts), weights))

    return loss, ts


UNARY = {
    "neg": ops.neg,
    "exp": ops.exp,
    "tanh": ops.tanh,
    "relu": ops.relu,
    "elu": ops.elu,
    "gelu": ops.gelu,
    "softmax": lambda a: ops.softmax(a, axis=-1),
    "log_softmax": lambda a: ops.log_softmax(a, axis=0),
    "sum_axis": lambda a: ops.sum(a, axis=1, keepdims=True),
    "mean_axis": lambda a: ops.mean(a, axis=0),
    "reshape": lambda a: ops.reshape(a, (-1,)),
    "flatten": lambda a: ops.flatten(a, 1),
    "transpose": lambda a: ops.transpose(a, (2, 0, 1)),
    "swapaxes": lambda a: ops.swapaxes(a, 0, 2),
    "getitem_slice": lambda a: a[:, 1:3],
    "getitem_fancy": lambda a: a[np.array([0, 2, 0]), :, 1],
    "normalize": lambda a: ops.normalize(a, (1, 2)),
    "avg_pool_last": lambda a: ops.avg_pool_last(a, 2, 1),
    "power": lambda a: ops.power(a, 3.0),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients(name, rng):
    loss, ts = projected(UNARY[name], (3, 4, 5), rng=rng)
    report = finite_diff_check(loss, ts)
    assert report.max_error < 1e-4, report.errors


def test_log_gradient(rng):
    loss, ts = projected(ops.log, (3, 4), rng=rng, positive=True)
    assert finite_diff_check(loss, ts).max_error < 1e-4


BINARY = {
    "add_broadcast": (ops.add, (3, 4), (4,)),
    "sub": (ops.sub, (3, 4), (3, 1)),
    "mul_broadcast": (ops.mul, (2, 3, 4), (3, 4)),
    "div": (ops.div, (3, 4), (3, 4)),
    "matmul": (ops.matmul, (3, 4), (4, 2)),
    "matmul_batched": (ops.matmul, (2, 3, 4), (4, 5)),
    "concat": (lambda a, b: ops.concat([a, b], axis=1), (3, 2), (3, 4)),
}


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_gradients(name, rng):
    fn, sa, sb = BINARY[name]
    loss, ts = projected(fn, sa, sb, rng=rng)
    assert finite_diff_check(loss, ts).max_error < 1e-4


def test_cross_entropy_gradient(rng):
    logits = Tensor(rng.standard_normal((6, 3)), requires_grad=True)
    labels = rng.integers(0, 3, 6)
    assert finite_diff_check(lambda: ops.cross_entropy(logits, labels), [logits]).max_error < 1e-4
    single = Tensor(rng.standard_normal((6, 1)), requires_grad=True)
    binary = rng.integers(0, 2, 6)
    assert finite_diff_check(lambda: ops.cross_entropy(single, binary), [single]).max_error < 1e-4


def test_layer_norm_gradient(rng):
    x = Tensor(rng.standard_normal((2, 3, 6)), requires_grad=True)
    w = Tensor(rng.standard_normal(6), requires_grad=True)
    b = Tensor(rng.standard_normal(6), requires_grad=True)
    r = rng.standard_normal((2, 3, 6))
    report = finite_diff_check(lambda: ops.sum(ops.mul(ops.layer_norm(x, w, b), r)), [x, w, b])
    assert report.max_error < 1e-4


def test_dropout_gradient_fixed_mask(rng):
    x = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
    r = rng.standard_normal((4, 5))
    report = finite_diff_check(
        lambda: ops.sum(ops.mul(ops.dropout(x, 0.5, np.random.default_rng(0), True), r)), [x]
    )
    assert report.max_error < 1e-4


@pytest.mark.parametrize(
    "stride,padding,groups",
    [(1, 0, 1), ((1, 2), ((0, 1), (2, 1)), 1), (2, 1, 2), (1, (0, 2), 4)],
)
def test_conv2d_gradient(stride, padding, groups, rng):
    x = Tensor(rng.standard_normal((2, 4, 5, 7)), requires_grad=True)
    w = Tensor(rng.standard_normal((4, 4 // groups, 2, 3)) * 0.5, requires_grad=True)
    b = Tensor(rng.standard_normal(4), requires_grad=True)
    out = ops.conv2d(x, w, b, stride, padding, groups)
    r = rng.standard_normal(out.shape)
    report = finite_diff_check(lambda: ops.sum(ops.mul(ops.conv2d(x, w, b, stride, padding, groups), r)), [x, w, b])
    assert report.max_error < 1e-4


def test_conv_1x4x4_kernel(rng):
    conv = Conv2d(1, 1, (4, 4))
    conv.reset_parameters(rng)
    x = rng.standard_normal((2, 1, 6, 6))
    r = rng.standard_normal((2, 1, 3, 3))
    report = finite_diff_check(lambda: ops.sum(ops.mul(conv(Tensor(x)), r)), dict(conv.named_parameters()))
    assert report.max_error < 1e-4


def test_norm_modules_gradients(rng):
    x = Tensor(rng.standard_normal((3, 4, 2, 5)), requires_grad=True)
    for layer in (BatchNorm(4), GroupNorm(2, 4)):
        layer.weight.data = rng.standard_normal(4)
        layer.bias.data = rng.standard_normal(4)
        r = rng.standard_normal(x.shape)
        params = {"x": x, **dict(layer.named_parameters())}
        assert finite_diff_check(lambda: ops.sum(ops.mul(layer(x), r)), params).max_error < 1e-4


def test_conv_and_matmul_match_numpy(rng):
    x = rng.standard_normal((1, 1, 3, 3))
    w = rng.standard_normal((1, 1, 2, 2))
    out = ops.conv2d(Tensor(x), Tensor(w)).data
    expected = np.array([[np.sum(x[0, 0, i : i + 2, j : j + 2] * w[0, 0]) for j in range(2)] for i in range(2)])
    np.testing.assert_allclose(out[0, 0], expected, rtol=1e-13)


def test_closed_forms():
    assert ops.elu(Tensor(np.array([-1.0]))).item() == pytest.approx(np.exp(-1) - 1, abs=1e-15)
    x = np.random.default_rng(0).standard_normal((5, 2))
    lin = Linear(2, 2)
    lin.weight.data = np.eye(2)
    lin.bias.data = np.zeros(2)
    np.testing.assert_array_equal(lin(Tensor(x)).data, x)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12))
def test_softmax_rows_sum_to_one(values):
    p = ops.softmax(Tensor(np.array([values])), axis=-1).data
    assert abs(p.sum() - 1.0) < 1e-12


def test_sum_of_squares_gradient_exact(rng):
    w = Tensor(rng.standard_normal(7), requires_grad=True)
    ops.sum(ops.mul(w, w)).backward()
    np.testing.assert_array_equal(w.grad, 2 * w.data)


def test_frozen_tensor_gets_no_grad(rng):
    w = Tensor(rng.standard_normal(3), requires_grad=True)
    frozen = Tensor(rng.standard_normal(3), requires_grad=False)
    ops.sum(ops.mul(w, frozen)).backward()
    assert frozen.grad is None and w.grad is not None


def test_backward_twice_raises(rng):
    w = Tensor(rng.standard_normal(3), requires_grad=True)
    loss = ops.sum(ops.exp(w))
    loss.backward()
    with pytest.raises(GraphReleasedError):
        loss.backward()


def test_non_finite_is_error():
    with pytest.raises(NonFiniteError):
        ops.log(Tensor(np.array([0.0, 1.0])))
    with pytest.raises(NonFiniteError):
        ops.div(Tensor(np.array([1.0])), Tensor(np.array([0.0])))


def test_graph_visits_each_node_once(rng):
    # a diamond: x feeds two branches that rejoin
    x = Tensor(rng.standard_normal(4), requires_grad=True)
    a = ops.exp(x)
    y = ops.sum(ops.add(ops.mul(a, a), ops.tanh(a)))
    order = topological_order(y)
    assert len(order) == len({id(n) for n in order})
    graph = Graph.trace(y)
    assert graph.op_counts()["exp"] == 1
    y.backward()
    ea = np.exp(x.data)
    np.testing.assert_allclose(x.grad, (2 * ea + (1 - np.tanh(ea) ** 2)) * ea, rtol=1e-12)


def test_forward_returns_graph_and_is_deterministic(rng):
    class Net(Module):
        def __init__(self):
            super().__init__()
            self.fc = Linear(4, 3)

        def forward(self, x):
            return ops.dropout(self.fc(Tensor(x)), 0.5, self._rng, self.training)

    net = Net()
    net.fc.reset_parameters(rng)
    x = rng.standard_normal((2, 4))
    out1, graph = forward(net, x, np.random.default_rng(7))
    out2, _ = forward(net, x, np.random.default_rng(7))
    np.testing.assert_array_equal(out1.data, out2.data)
    assert "matmul" in graph.op_counts()


def test_three_layer_mlp_gradcheck(rng):
    l1, l2, l3 = Linear(5, 8), Linear(8, 6), Linear(6, 3)
    for layer in (l1, l2, l3):
        layer.reset_parameters(rng, std=0.5)
    x = rng.standard_normal((4, 5))
    y = rng.integers(0, 3, 4)
    params = {f"l{i}.{n}": p for i, layer in enumerate((l1, l2, l3)) for n, p in layer.named_parameters()}
    report = finite_diff_check(lambda: ops.cross_entropy(l3(ops.gelu(l2(ops.tanh(l1(Tensor(x)))))), y), params)
    assert report.max_error < 1e-4


def test_linear_regression_gradcheck(rng):
    x = rng.standard_normal((5, 2))
    t = rng.standard_normal((5, 1))
    lin = Linear(2, 1)
    lin.reset_parameters(rng, std=0.5)

    def loss():
        d = ops.sub(lin(Tensor(x)), t)
        return ops.mean(ops.mul(d, d))

    assert finite_diff_check(loss, dict(lin.named_parameters())).max_error < 1e-6


def test_zero_everything_gives_zero_grads():
    lin = Linear(3, 2)
    report = finite_diff_check(
        lambda: ops.mean(ops.power(ops.sub(lin(Tensor(np.zeros((4, 3)))), np.zeros((4, 2))), 2.0)),
        dict(lin.named_parameters()),
    )
    assert report.max_error == 0.0


def test_sgd_examples():
    w = Parameter(np.array([1.0]))
    w.grad = np.array([2.0])
    SGD([w], lr=0.1).step()
    assert w.data[0] == pytest.approx(0.8, abs=1e-15)
    w.grad = np.zeros(1)
    before = w.data.copy()
    SGD([w], lr=0.1).step()
    np.testing.assert_array_equal(w.data, before)


def test_adam_matches_hand_update(rng):
    w0 = rng.standard_normal(4)
    w = Parameter(w0.copy())
    opt = Adam([w], lr=1e-3)
    grads = [rng.standard_normal(4) for _ in range(3)]
    m = np.zeros(4)
    v = np.zeros(4)
    ref = w0.copy()
    for t, g in enumerate(grads, start=1):
        w.grad = g.copy()
        opt.step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 1e-3 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(w.data, ref, rtol=1e-14, atol=1e-15)
        if t == 1:
            np.testing.assert_allclose(np.abs(w0 - w.data), 1e-3, rtol=1e-4)
    assert opt.state.step == 3
    assert opt.state.m[0].shape == w.shape


def test_optimizer_only_touches_trainable_and_requires_grads(rng):
    a = Parameter(rng.standard_normal(3))
    frozen = Parameter(rng.standard_normal(3), requires_grad=False)
    before = frozen.data.copy()
    opt = make_optimizer("adam", [a, frozen], 1e-2)
    with pytest.raises(MissingGradientError):
        opt.step()
    for _ in range(5):
        a.grad = np.ones(3)
        opt.step()
    np.testing.assert_array_equal(frozen.data, before)


def test_dropout_eval_identity_and_train_unbiased():
    x = Tensor(np.ones(200_000))
    np.testing.assert_array_equal(ops.dropout(x, 0.5, np.random.default_rng(0), False).data, x.data)
    out = ops.dropout(x, 0.5, np.random.default_rng(0), True).data
    assert abs(out.mean() - 1.0) < 0.01
    assert set(np.unique(out)) <= {0.0, 2.0}


def test_checkpoint_roundtrip(tmp_path, rng):
    tensors = {"b.weight": rng.standard_normal((3, 4)), "a": rng.standard_normal(5), "scalar": np.array(2.5)}
    save_checkpoint(tmp_path / "ck", tensors)
    back = load_checkpoint(tmp_path / "ck")
    assert list(back) == list(tensors)
    for k in tensors:
        np.testing.assert_array_equal(back[k], tensors[k].astype(np.float32).astype(np.float64))
    blob = encode_tensors({k: v.astype(np.float32) for k, v in back.items()})
    assert encode_tensors(decode_tensors(blob)) == blob


def test_state_dict_roundtrip(rng):
    a, b = Linear(3, 2), Linear(3, 2)
    a.reset_parameters(rng)
    b.load_state_dict(a.state_dict())
    x = rng.standard_normal((2, 3))
    np.testing.assert_array_equal(a(Tensor(x)).data, b(Tensor(x)).data)
    with pytest.raises(KeyError):
        b.load_state_dict({"weight": a.weight.data})


def test_layernorm_module_normalizes(rng):
    ln = LayerNorm(6)
    out = ln(Tensor(rng.standard_normal((4, 6)) * 5 + 3)).data
    np.testing.assert_allclose(out.mean(axis=-1), 0, atol=1e-12)
    np.testing.assert_allclose(out.std(axis=-1), 1, atol=1e-4)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_frozen_tensor_bit_identical_after_steps(seed):
    rng = np.random.default_rng(seed)
    lin = Linear(3, 2)
    lin.reset_parameters(rng)
    lin.bias.requires_grad = False
    bias0 = lin.bias.data.copy()
    opt = Adam(lin.parameters(), lr=1e-2)
    for _ in range(3):
        opt.zero_grad()
        ops.sum(lin(Tensor(rng.standard_normal((4, 3))))).backward()
        opt.step()
    np.testing.assert_array_equal(lin.bias.data, bias0)
