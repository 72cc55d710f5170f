import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tdomt import numerics as nx
from tdomt.numerics import (
    DimensionError,
    DomainError,
    TapeError,
    Tensor,
    gradients_match,
    numeric_grad,
    relative_error,
)


def leaf(a):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)


def check_grad(params, loss_fn, tol=1e-6):
    for p in params:
        p.grad = None
    with nx.recording() as tape:
        loss = loss_fn()
        tape.backward(loss)
    for p in params:
        num = numeric_grad(p, lambda: loss_fn().item())
        err = relative_error(p.grad, num)
        assert err < tol, (p.name, err)


# ---------------------------------------------------------------- matmul

def test_matmul_identity():
    out = nx.matmul(Tensor(np.eye(2)), Tensor(np.array([[2.0, 3.0], [4.0, 5.0]])))
    np.testing.assert_array_equal(out.data, [[2, 3], [4, 5]])


def test_matmul_small_product():
    out = nx.matmul(Tensor(np.array([[1.0, 2.0]])), Tensor(np.array([[3.0], [4.0]])))
    assert out.data.tolist() == [[11.0]]


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
        nx.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))


def test_matmul_gradient_finite_differences():
    rng = np.random.default_rng(0)
    a, b = leaf(rng.normal(size=(3, 4))), leaf(rng.normal(size=(4, 2)))
    check_grad([a, b], lambda: nx.total(nx.matmul(a, b)))


def test_batched_matmul_gradient():
    rng = np.random.default_rng(1)
    a, b = leaf(rng.normal(size=(2, 3, 4))), leaf(rng.normal(size=(4, 5)))
    w = rng.normal(size=(2, 3, 5))
    check_grad([a, b], lambda: nx.total(nx.mul(nx.matmul(a, b), w)))
    c = leaf(rng.normal(size=(2, 5, 3)))
    check_grad([a, c], lambda: nx.total(nx.mul(nx.matmul(nx.matmul(a, b), c), 0.3)))


# ---------------------------------------------------------------- softmax

def test_softmax_uniform():
    np.testing.assert_allclose(nx.softmax(Tensor(np.zeros(3)), axis=-1).data, [1 / 3] * 3)


@given(arrays(np.float64, (4, 5), elements=st.floats(-30, 30)), st.floats(-50, 50))
@settings(max_examples=50, deadline=None)
def test_softmax_shift_invariance_and_normalization(x, c):
    a = nx.softmax(Tensor(x), axis=-1).data
    b = nx.softmax(Tensor(x + c), axis=-1).data
    np.testing.assert_allclose(a, b, atol=1e-6)
    np.testing.assert_allclose(a.sum(axis=-1), 1.0, atol=1e-6)
    assert np.all(a >= 0)


def test_softmax_gradient():
    rng = np.random.default_rng(2)
    x = leaf(rng.normal(size=(3, 4)))
    w = rng.normal(size=(3, 4))
    check_grad([x], lambda: nx.total(nx.mul(nx.softmax(x, axis=-1), w)))


def test_softmax_masked_bias_gives_exact_zero():
    bias = np.array([[0.0, -np.inf, 0.0]])
    p = nx.softmax(Tensor(np.array([[1.0, 5.0, 2.0]])), axis=-1, bias=bias).data
    assert p[0, 1] == 0.0
    np.testing.assert_allclose(p.sum(), 1.0)


# ---------------------------------------------------------------- layer norm

def test_layer_norm_constant_input_gives_bias():
    bias = np.array([0.5, -1.0, 2.0])
    y = nx.layer_norm(Tensor(np.full(3, 7.0)), Tensor(np.ones(3)), Tensor(bias), 1e-5)
    np.testing.assert_allclose(y.data, bias)


def test_layer_norm_normalized_input_unchanged():
    y = nx.layer_norm(Tensor(np.array([1.0, -1.0])), Tensor(np.ones(2)), Tensor(np.zeros(2)), 1e-12)
    np.testing.assert_allclose(y.data, [1.0, -1.0], atol=1e-9)


def test_layer_norm_rejects_nonpositive_epsilon():
    with pytest.raises(DomainError):
        nx.layer_norm(Tensor(np.ones(2)), Tensor(np.ones(2)), Tensor(np.zeros(2)), 0.0)


def test_layer_norm_gradient():
    rng = np.random.default_rng(3)
    x, g, b = leaf(rng.normal(size=(2, 5))), leaf(rng.normal(size=5)), leaf(rng.normal(size=5))
    w = rng.normal(size=(2, 5))
    check_grad([x, g, b], lambda: nx.total(nx.mul(nx.layer_norm(x, g, b, 1e-5), w)))


# ---------------------------------------------------------------- cosine

def test_cosine_similarity_cases():
    v = Tensor(np.array([0.3, -2.0, 1.5]))
    assert nx.cosine_similarity(v, v).item() == pytest.approx(1.0)
    assert nx.cosine_similarity(Tensor(np.array([1.0, 0.0])), Tensor(np.array([0.0, 1.0]))).item() == 0.0
    assert nx.cosine_similarity(v, Tensor(-v.data)).item() == pytest.approx(-1.0)


def test_cosine_similarity_zero_vector():
    with pytest.raises(DomainError):
        nx.cosine_similarity(Tensor(np.zeros(3)), Tensor(np.ones(3)))


def test_cosine_similarity_gradient():
    rng = np.random.default_rng(4)
    u, v = leaf(rng.normal(size=4)), leaf(rng.normal(size=4))
    check_grad([u, v], lambda: nx.cosine_similarity(u, v))


@given(arrays(np.float64, 4, elements=st.floats(-10, 10)), arrays(np.float64, 4, elements=st.floats(-10, 10)))
@settings(max_examples=50, deadline=None)
def test_cosine_similarity_bounded(u, v):
    if np.linalg.norm(u) < 1e-6 or np.linalg.norm(v) < 1e-6:
        return
    c = nx.cosine_similarity(Tensor(u), Tensor(v)).item()
    assert -1 - 1e-12 <= c <= 1 + 1e-12


# ---------------------------------------------------------------- other primitives

@pytest.mark.parametrize(
    "build",
    [
        lambda a, w: nx.total(nx.mul(nx.exp(a), w)),
        lambda a, w: nx.total(nx.mul(nx.log(nx.add(nx.mul(a, a), 1.0)), w)),
        lambda a, w: nx.total(nx.mul(nx.relu(a), w)),
        lambda a, w: nx.total(nx.mul(nx.transpose(nx.reshape(a, (4, 3)), (1, 0)), w.reshape(3, 4))),
        lambda a, w: nx.total(nx.mul(nx.concat([a, nx.mul(a, 2.0)], axis=0), np.concatenate([w, w]))),
        lambda a, w: nx.total(nx.mul(nx.sum_axis(a, 1), w[:, 0])),
        lambda a, w: nx.total(nx.mul(nx.index(a, (np.array([0, 2, 0]),)), w[[0, 1, 2]])),
        lambda a, w: nx.total(nx.mul(nx.l2_normalize(a), w)),
        lambda a, w: nx.total(nx.masked_fill(nx.mul(a, w), w > 0, 0.0)),
    ],
)
def test_primitive_gradients(build):
    rng = np.random.default_rng(5)
    a = leaf(rng.normal(size=(3, 4)) + 0.1)
    w = rng.normal(size=(3, 4))
    check_grad([a], lambda: build(a, w))


def test_embedding_gradient_accumulates_repeated_ids():
    table = leaf(np.arange(12.0).reshape(4, 3))
    with nx.recording() as tape:
        loss = nx.total(nx.embedding(table, np.array([[1, 1, 3]])))
        tape.backward(loss)
    np.testing.assert_array_equal(table.grad, [[0, 0, 0], [2, 2, 2], [0, 0, 0], [1, 1, 1]])


def test_cross_entropy_gradient_with_smoothing_and_weights():
    rng = np.random.default_rng(6)
    logits = leaf(rng.normal(size=(2, 3, 5)))
    targets = np.array([[1, 4, 0], [2, 2, 3]])
    weights = np.array([[1, 1, 0], [1, 0, 1]], dtype=float)
    check_grad([logits], lambda: nx.cross_entropy(logits, targets, weights, 0.1))


def test_dropout_is_seeded_and_scaled():
    x = Tensor(np.ones((50, 40)))
    a = nx.dropout(x, 0.5, np.random.default_rng(0)).data
    b = nx.dropout(x, 0.5, np.random.default_rng(0)).data
    np.testing.assert_array_equal(a, b)
    assert set(np.unique(a)) == {0.0, 2.0}
    assert nx.dropout(x, 0.5, None) is x


# ---------------------------------------------------------------- tape

def test_backward_sum_gives_ones():
    w = leaf([1.0, -2.0, 3.0])
    with nx.recording() as tape:
        tape.backward(nx.total(w))
    np.testing.assert_array_equal(w.grad, [1, 1, 1])


def test_backward_inner_product_gives_twice_w():
    w = leaf([1.0, -2.0, 3.0])
    with nx.recording() as tape:
        tape.backward(nx.dot(w, w))
    np.testing.assert_array_equal(w.grad, 2 * w.data)


def test_backward_twice_raises():
    w = leaf([1.0, 2.0])
    with nx.recording() as tape:
        loss = nx.total(w)
        tape.backward(loss)
        with pytest.raises(TapeError):
            tape.backward(loss)


def test_backward_requires_scalar():
    w = leaf([1.0, 2.0])
    with nx.recording() as tape:
        with pytest.raises(TapeError):
            tape.backward(nx.mul(w, 2.0))


def test_backward_rejects_detached_loss():
    w = leaf([1.0, 2.0])
    loss = nx.total(w)  # no tape active: nothing recorded
    with nx.recording() as tape:
        with pytest.raises(TapeError):
            tape.backward(loss)


def test_unused_parameter_gets_zero_gradient():
    w, unused = leaf([1.0, 2.0]), leaf([5.0])
    with nx.recording() as tape:
        out = nx.total(w)
        nx.mul(unused, 3.0)  # recorded but not on the path to the loss
        tape.backward(out)
    np.testing.assert_array_equal(unused.grad, [0.0])


def test_forward_is_deterministic():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(4, 6)).astype(np.float32)
    w = rng.normal(size=(6, 3)).astype(np.float32)
    a = nx.softmax(nx.matmul(Tensor(x), Tensor(w)), axis=-1).data
    b = nx.softmax(nx.matmul(Tensor(x), Tensor(w)), axis=-1).data
    assert a.tobytes() == b.tobytes()


# ---------------------------------------------------------------- gradcheck helpers

def test_relative_error_and_match():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_error(np.ones(3), np.ones(3)) == 0.0
    assert gradients_match(np.ones(3), np.ones(3) * (1 + 1e-6))
    # identically-zero gradient: both sides are round-off, matched absolutely
    assert gradients_match(np.array([1e-17, 0.0]), np.array([3e-11, -2e-11]))
    assert not gradients_match(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
