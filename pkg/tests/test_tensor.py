import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spoofdet.tensor import (
    AttentionParams,
    ConfigurationError,
    DimensionError,
    InputError,
    Tape,
    Tensor,
    UsageError,
    conv2d,
    cross_entropy,
    gelu,
    grad_check,
    inject_fault,
    layer_norm,
    matmul,
    maxpool2,
    multi_head_attention,
    relu,
    set_debug,
    softmax,
)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def weighted_sum(t, w):
    """Scalar probe: a fixed random projection of a tensor-valued op."""
    return (t * w).sum()


def attention_params(rng, d):
    shapes = [(d, d), (d,), (d, d), (d, d), (d,), (d, d), (d,)]
    return AttentionParams(*[Tensor(rng.normal(size=s)) for s in shapes])


# -- matmul ------------------------------------------------------------------

def test_matmul_identity(rng):
    b = rng.normal(size=(3, 3))
    np.testing.assert_array_equal(matmul(Tensor(np.eye(3)), Tensor(b)).data, b)


def test_matmul_hand_example():
    out = matmul(Tensor([[1, 2], [3, 4]]), Tensor([[1], [1]]))
    np.testing.assert_array_equal(out.data, [[3], [7]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_gradcheck(rng):
    a, b = Tensor(rng.normal(size=(4, 5))), Tensor(rng.normal(size=(5, 3)))
    w = Tensor(rng.normal(size=(4, 3)))
    assert grad_check(lambda: weighted_sum(matmul(a, b), w), [a, b]) < 1e-6


def test_matmul_backward_rule(rng):
    a, b = Tensor(rng.normal(size=(2, 3)), requires_grad=True), Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    g = rng.normal(size=(2, 4))
    with Tape() as tape:
        out = matmul(a, b)
    tape.backward(out, g)
    np.testing.assert_allclose(a.grad, g @ b.data.T)
    np.testing.assert_allclose(b.grad, a.data.T @ g)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_matmul_associative(m, k, n, p, seed):
    r = np.random.default_rng(seed)
    a, b, c = (Tensor(r.normal(size=s)) for s in [(m, k), (k, n), (n, p)])
    left = matmul(matmul(a, b), c).data
    right = matmul(a, matmul(b, c)).data
    assert np.abs(left - right).max() < 1e-9


# -- conv2d --------------------------------------------------------------------

def test_conv_constant_field_interior_is_nine():
    out = conv2d(Tensor(np.ones((1, 5, 5))), Tensor(np.ones((1, 1, 3, 3))), Tensor([0.0]))
    np.testing.assert_array_equal(out.data[0, 1:-1, 1:-1], 9.0)
    assert out.data[0, 0, 0] == 4.0  # corner sees 2x2 of the image


def test_conv_zero_kernels_gives_bias(rng):
    out = conv2d(Tensor(rng.normal(size=(2, 6, 6))), Tensor(np.zeros((3, 2, 3, 3))), Tensor([0.5, -1.0, 2.0]))
    for c, b in enumerate([0.5, -1.0, 2.0]):
        np.testing.assert_array_equal(out.data[c], b)


def test_conv_matches_direct_loop(rng):
    x = rng.normal(size=(2, 5, 4))
    k = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    ref = np.zeros((3, 5, 4))
    for o in range(3):
        for i in range(5):
            for j in range(4):
                ref[o, i, j] = (xp[:, i : i + 3, j : j + 3] * k[o]).sum() + b[o]
    np.testing.assert_allclose(conv2d(Tensor(x), Tensor(k), Tensor(b)).data, ref, atol=1e-12)


def test_conv_channel_mismatch():
    with pytest.raises(DimensionError):
        conv2d(Tensor(np.ones((2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))), Tensor([0.0]))


def test_conv_gradcheck(rng):
    x = Tensor(rng.normal(size=(2, 8, 8)))
    k = Tensor(rng.normal(size=(3, 2, 3, 3)))
    b = Tensor(rng.normal(size=3))
    w = Tensor(rng.normal(size=(3, 8, 8)))
    assert grad_check(lambda: weighted_sum(conv2d(x, k, b), w), [x, k, b]) < 1e-6


def test_conv_batched_equals_unbatched(rng):
    x = rng.normal(size=(3, 2, 6, 6))
    k, b = Tensor(rng.normal(size=(4, 2, 3, 3))), Tensor(rng.normal(size=4))
    batched = conv2d(Tensor(x), k, b).data
    for i in range(3):
        np.testing.assert_allclose(batched[i], conv2d(Tensor(x[i]), k, b).data, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(3, 12), st.integers(3, 12), st.integers(1, 4))
def test_conv_preserves_spatial_shape(c, h, w, c_out):
    out = conv2d(Tensor(np.ones((c, h, w))), Tensor(np.ones((c_out, c, 3, 3))), Tensor(np.zeros(c_out)))
    assert out.shape == (c_out, h, w)


# -- maxpool -------------------------------------------------------------------

def test_maxpool_single_window():
    assert maxpool2(Tensor([[1.0, 2.0], [3.0, 4.0]])).data.tolist() == [[4.0]]


def test_maxpool_tie_routes_gradient_to_first_index():
    x = Tensor(np.full((1, 4, 4), 2.5), requires_grad=True)
    with Tape() as tape:
        out = maxpool2(x)
        loss = out.sum()
    tape.backward(loss)
    np.testing.assert_array_equal(out.data, 2.5)
    expected = np.zeros((4, 4))
    expected[::2, ::2] = 1.0
    np.testing.assert_array_equal(x.grad[0], expected)


def test_maxpool_odd_extent():
    with pytest.raises(DimensionError):
        maxpool2(Tensor(np.ones((1, 3, 4))))


def test_maxpool_gradcheck_unique_maxima(rng):
    x = Tensor(rng.permutation(64).reshape(1, 8, 8) / 10.0)  # distinct values, gaps >> eps
    w = Tensor(rng.normal(size=(1, 4, 4)))
    assert grad_check(lambda: weighted_sum(maxpool2(x), w), [x]) < 1e-6


def test_gradcheck_skips_coordinates_on_a_kink():
    # x[0] sits 1e-6 from the relu kink; x[1] and x[2] are far from it
    x = Tensor(np.array([1e-6, 0.7, -0.4]))
    stats = {}
    assert grad_check(lambda: (relu(x) * Tensor(np.array([3.0, 2.0, 1.0]))).sum(), [x], stats=stats) < 1e-9
    assert stats == {"checked": 2, "skipped": 1}


def test_gradcheck_near_tie_in_pool_is_skipped_not_hidden():
    # left window: near tie; right window: clear winner 0.9
    x = Tensor(np.array([[[1.0, 1.0 + 1e-7, 0.1, 0.9], [0.0, 0.2, 0.3, 0.4]]]))
    stats = {}
    err = grad_check(lambda: maxpool2(x).sum(), [x], stats=stats)
    assert stats["skipped"] == 2 and err < 1e-9
    with inject_fault("maxpool2"):
        assert grad_check(lambda: maxpool2(x).sum(), [x]) > 1e-2


def test_gradcheck_all_coordinates_on_kinks_is_a_failure():
    x = Tensor(np.array([1e-7, -1e-7]))
    assert grad_check(lambda: relu(x).sum(), [x]) == float("inf")


# -- activations ---------------------------------------------------------------

def test_relu_values():
    assert relu(Tensor([-1.0, 0.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]


def test_gelu_fixed_point():
    assert gelu(Tensor([0.0])).data[0] == 0.0


def test_gelu_gradcheck(rng):
    x = Tensor(rng.normal(size=(4, 5)) * 2)
    w = Tensor(rng.normal(size=(4, 5)))
    assert grad_check(lambda: weighted_sum(gelu(x), w), [x]) < 1e-6


def test_relu_gradcheck_away_from_kink(rng):
    v = rng.normal(size=20)
    v[np.abs(v) < 1e-3] = 0.5
    x, w = Tensor(v), Tensor(rng.normal(size=20))
    assert grad_check(lambda: weighted_sum(relu(x), w), [x]) < 1e-6


# -- layer norm ----------------------------------------------------------------

def test_layer_norm_constant_row_is_zero():
    out = layer_norm(Tensor(np.full((2, 5), 3.0)), Tensor(np.ones(5)), Tensor(np.zeros(5)))
    np.testing.assert_array_equal(out.data, 0.0)


def test_layer_norm_standardized_row():
    out = layer_norm(Tensor([[1.0, -1.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)))
    np.testing.assert_allclose(out.data, [[1.0, -1.0]], atol=1e-5)


def test_layer_norm_statistics(rng):
    x = rng.normal(3.0, 4.0, size=(6, 32))
    out = layer_norm(Tensor(x), Tensor(np.ones(32)), Tensor(np.full(32, 0.25))).data
    np.testing.assert_allclose(out.mean(axis=-1), 0.25, atol=1e-12)
    np.testing.assert_allclose((out - 0.25).std(axis=-1), 1.0, atol=1e-4)


def test_layer_norm_gradcheck(rng):
    x, g, s = Tensor(rng.normal(size=(3, 7))), Tensor(rng.normal(size=7)), Tensor(rng.normal(size=7))
    w = Tensor(rng.normal(size=(3, 7)))
    assert grad_check(lambda: weighted_sum(layer_norm(x, g, s), w), [x, g, s]) < 1e-5


# -- softmax -------------------------------------------------------------------

def test_softmax_uniform():
    np.testing.assert_allclose(softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3)


def test_softmax_stable_for_large_inputs():
    out = softmax(Tensor([1000.0, 0.0])).data
    assert np.isfinite(out).all()
    np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-300)


def test_softmax_gradcheck(rng):
    x, c = Tensor(rng.normal(size=5)), Tensor(rng.normal(size=5))
    assert grad_check(lambda: (softmax(x) * c).sum(), [x]) < 1e-6


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 9)), elements=st.floats(-700, 700)))
def test_softmax_rows_sum_to_one(x):
    out = softmax(Tensor(x)).data
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)


# -- attention -----------------------------------------------------------------

def test_attention_single_token(rng):
    p = attention_params(rng, 4)
    x = rng.normal(size=(1, 4))
    out, weights = multi_head_attention(Tensor(x), p, heads=2)
    np.testing.assert_array_equal(weights.data, np.ones((2, 1, 1)))
    v = x @ p.wv.data + p.bv.data
    np.testing.assert_allclose(out.data, v @ p.wo.data + p.bo.data, atol=1e-12)


def test_attention_identical_tokens_uniform(rng):
    p = attention_params(rng, 8)
    x = np.tile(rng.normal(size=(1, 8)), (5, 1))
    _, weights = multi_head_attention(Tensor(x), p, heads=4)
    np.testing.assert_allclose(weights.data, 1 / 5, atol=1e-15)


def test_attention_head_divisibility(rng):
    with pytest.raises(ConfigurationError):
        multi_head_attention(Tensor(rng.normal(size=(3, 6))), attention_params(rng, 6), heads=4)


def test_attention_gradcheck_all_parameters(rng):
    x = Tensor(rng.normal(size=(3, 4)))
    p = attention_params(rng, 4)
    w = Tensor(rng.normal(size=(3, 4)))
    err = grad_check(lambda: weighted_sum(multi_head_attention(x, p, heads=2)[0], w), [x, *p])
    assert err < 1e-5


# -- cross entropy -------------------------------------------------------------

@pytest.mark.parametrize("label", [0, 1])
def test_cross_entropy_uniform_logits(label):
    assert cross_entropy(Tensor([[0.0, 0.0]]), [label]).item() == pytest.approx(np.log(2), abs=1e-15)


def test_cross_entropy_confident_correct():
    assert cross_entropy(Tensor([[30.0, -30.0]]), [0]).item() < 1e-25


def test_cross_entropy_rejects_bad_label():
    with pytest.raises(InputError):
        cross_entropy(Tensor([[0.0, 1.0]]), [2])


def test_cross_entropy_gradcheck(rng):
    logits = Tensor(rng.normal(size=(4, 2)) * 3)
    assert grad_check(lambda: cross_entropy(logits, [0, 1, 1, 0]), [logits]) < 1e-6
    assert grad_check(lambda: cross_entropy(logits, [0, 1, 1, 0], class_weights=[1.0, 4.0]), [logits]) < 1e-6


def test_cross_entropy_class_weights_are_a_weighted_mean():
    logits = np.array([[2.0, -1.0], [0.5, 0.3], [-1.0, 1.0]])
    y = [0, 1, 1]
    nll = -np.log(np.exp(logits[np.arange(3), y]) / np.exp(logits).sum(axis=1))
    w = np.array([1.0, 3.0, 3.0])
    assert cross_entropy(Tensor(logits), y, [1.0, 3.0]).item() == pytest.approx((w * nll).sum() / w.sum())


# -- grad_check harness and tape -----------------------------------------------

def test_grad_check_linear_function_is_exact(rng):
    x = Tensor(rng.normal(size=6))
    c = Tensor(rng.normal(size=6))
    assert grad_check(lambda: (x * c).sum(), [x]) < 1e-10


def test_grad_check_requires_scalar(rng):
    x = Tensor(rng.normal(size=3))
    with pytest.raises(UsageError):
        grad_check(lambda: x * 2.0, [x])


def test_grad_check_detects_corrupted_backward(rng):
    x = Tensor(rng.normal(size=(3, 7)))
    g, s = Tensor(np.ones(7)), Tensor(np.zeros(7))
    w = Tensor(rng.normal(size=(3, 7)))
    with inject_fault("layer_norm"):
        assert grad_check(lambda: weighted_sum(layer_norm(x, g, s), w), [x]) > 1e-2


PRIMITIVE_CASES = {
    "matmul": lambda r: ([(3, 4), (4, 2)], lambda a, b: matmul(a, b)),
    "conv2d": lambda r: ([(2, 5, 5), (2, 2, 3, 3), (2,)], lambda x, k, b: conv2d(x, k, b)),
    "gelu": lambda r: ([(4, 3)], lambda x: gelu(x)),
    "layer_norm": lambda r: ([(3, 6), (6,), (6,)], lambda x, g, s: layer_norm(x, g, s)),
    "softmax": lambda r: ([(3, 5)], lambda x: softmax(x)),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVE_CASES))
@pytest.mark.parametrize("rep", range(10))
def test_randomized_primitive_gradchecks(name, rep):
    r = np.random.default_rng([rep, len(name)])
    shapes, op = PRIMITIVE_CASES[name](r)
    inputs = [Tensor(r.normal(size=s)) for s in shapes]
    probe = Tensor(r.normal(size=op(*inputs).shape))
    assert grad_check(lambda: weighted_sum(op(*inputs), probe), inputs) < 1e-4


def test_backward_visits_nodes_in_reverse_order(rng):
    x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    with Tape() as tape:
        y = relu(x)
        z = softmax(y)
        loss = z.sum()
    assert [n.name for n in tape.nodes] == ["relu", "softmax", "sum"]
    seen = []
    for node in tape.nodes:
        inner = node.backward
        node.backward = lambda g, inner=inner, name=node.name: (seen.append(name), inner(g))[1]
    tape.backward(loss)
    assert seen == ["sum", "softmax", "relu"]


def test_backward_does_not_mutate_forward_values(rng):
    x = Tensor(rng.normal(size=(2, 4, 4)), requires_grad=True)
    k = Tensor(rng.normal(size=(3, 2, 3, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=3), requires_grad=True)
    with Tape() as tape:
        h = conv2d(x, k, b)
        a = gelu(h)
        loss = softmax(a.reshape(3, 16)).sum()
    snapshot = [n.output.data.copy() for n in tape.nodes]
    inputs = [t.data.copy() for t in (x, k, b)]
    tape.backward(loss)
    for node, before in zip(tape.nodes, snapshot):
        np.testing.assert_array_equal(node.output.data, before)
    for t, before in zip((x, k, b), inputs):
        np.testing.assert_array_equal(t.data, before)


def test_leaves_reachable_from_loss_get_gradients(rng):
    a = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
    b = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
    unused = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
    with Tape() as tape:
        loss = matmul(a, b).sum()
        _ = unused * 2.0
    tape.backward(loss)
    assert a.grad.shape == a.shape and b.grad.shape == b.shape
    assert unused.grad is None


def test_ops_outside_tape_are_not_recorded(rng):
    x = Tensor(rng.normal(size=3), requires_grad=True)
    y = relu(x)
    assert y.tape_id is None and not y.requires_grad


def test_tape_is_confined_to_its_thread(rng):
    x = Tensor(rng.normal(size=3), requires_grad=True)
    errors = []
    with Tape() as tape:
        def worker():
            # a fresh thread has no active tape, so nothing is recorded
            errors.append(relu(x).tape_id)
        t = threading.Thread(target=worker)
        t.start()
        t.join()
    assert errors == [None]
    assert tape.nodes == []


def test_debug_mode_flags_nan():
    set_debug(True)
    try:
        with pytest.raises(FloatingPointError):
            relu(Tensor([np.nan]))
    finally:
        set_debug(False)


def test_shape_invariants():
    t = Tensor(np.zeros((2, 3)))
    assert t.data.size == 6
    with pytest.raises(DimensionError):
        Tensor(np.zeros((0, 3)))
