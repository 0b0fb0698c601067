import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from _helpers import OP_NAMES, op_grad_error

from causalwalk import autodiff as ad
from causalwalk.autodiff import ShapeError, Tensor, apply, backward, grad_check


def triple_loop_matmul(A, B):
    n, k = A.shape
    k2, m = B.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += A[i, t] * B[t, j]
            out[i, j] = s
    return out


def central_difference(f, x, h=1e-5):
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


# ---------------------------------------------------------------- forward values


def test_add_values():
    out = apply("add", Tensor([1.0, 2.0]), Tensor([3.0, 4.0]))
    np.testing.assert_array_equal(out.data, [4.0, 6.0])


def test_softmax_of_equal_logits_is_uniform():
    out = apply("row-softmax", Tensor([0.0, 0.0, 0.0]))
    np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-15)


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(2, 3)), rng.normal(size=(3, 2))
    out = apply("matmul", Tensor(A), Tensor(B))
    assert np.abs(out.data - triple_loop_matmul(A, B)).max() < 1e-12


def test_softmax_is_stable_for_large_logits():
    out = ad.softmax(Tensor([[1000.0, 1000.0, -1000.0]]))
    np.testing.assert_allclose(out.data, [[0.5, 0.5, 0.0]], atol=1e-15)


def test_sigmoid_saturates_without_overflow():
    with np.errstate(over="raise"):
        out = ad.sigmoid(Tensor([-800.0, 0.0, 800.0]))
    np.testing.assert_allclose(out.data, [0.0, 0.5, 1.0])


def test_sum_and_mean_are_scalars():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    assert ad.tsum(x).shape == (1,) and ad.tsum(x).item() == 15.0
    assert ad.mean(x).item() == 2.5


def test_select_gathers_rows():
    x = Tensor(np.arange(6.0).reshape(3, 2))
    np.testing.assert_array_equal(ad.select(x, [2, 0, 2]).data, [[4, 5], [0, 1], [4, 5]])


def test_concat_along_columns():
    a, b = Tensor(np.ones((2, 1))), Tensor(np.zeros((2, 2)))
    np.testing.assert_array_equal(ad.concat([a, b], axis=1).data, [[1, 0, 0], [1, 0, 0]])


@pytest.mark.parametrize(
    "op,args",
    [
        ("add", ((2, 3), (3, 2))),
        ("sub", ((2,), (3,))),
        ("elementwise-mul", ((1, 2), (2, 1))),
        ("matmul", ((2, 3), (2, 3))),
    ],
)
def test_shape_mismatch_names_op_and_shapes(op, args):
    a, b = (Tensor(np.zeros(s)) for s in args)
    with pytest.raises(ShapeError) as err:
        apply(op, a, b)
    msg = str(err.value)
    assert str(args[0]) in msg and str(args[1]) in msg
    assert op.split("-")[-1] in msg


def test_unknown_op_kind():
    with pytest.raises(ValueError, match="unknown op-kind"):
        apply("conv2d", Tensor([1.0]))


def test_no_broadcasting():
    with pytest.raises(ShapeError):
        ad.add(Tensor(np.ones((2, 2))), Tensor(np.ones((1, 2))))


# ---------------------------------------------------------------- backward


def test_quadratic_gradient():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    backward(ad.tsum(ad.mul(x, x)))
    np.testing.assert_array_equal(x.grad, [2.0, 4.0, 6.0])


def test_log_softmax_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    x0 = rng.normal(size=4)
    x = Tensor(x0, requires_grad=True)
    backward(ad.select(ad.reshape(ad.log(ad.softmax(x)), (4, 1)), [0]))

    def f(v):
        e = np.exp(v - v.max())
        return np.log(e[0] / e.sum())

    num = central_difference(f, x0)
    rel = np.abs(x.grad - num) / (np.abs(x.grad) + np.abs(num) + 1e-8)
    assert rel.max() < 1e-4


def test_reused_tensor_accumulates_both_paths():
    x = Tensor([[2.0]], requires_grad=True)
    y = ad.add(ad.scale(x, 3.0), ad.mul(x, x))
    backward(y)
    assert x.grad[0, 0] == pytest.approx(3.0 + 2 * 2.0)


def test_non_scalar_loss_rejected():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ShapeError):
        backward(ad.scale(x, 2.0))


def test_constant_never_accumulates():
    c = Tensor([[1.0, 2.0]])
    w = Tensor([[1.0], [1.0]], requires_grad=True)
    backward(ad.matmul(c, w))
    assert c.grad is None
    np.testing.assert_array_equal(w.grad, [[1.0], [2.0]])


def test_no_grad_records_nothing():
    w = Tensor([[1.0]], requires_grad=True)
    with ad.no_grad():
        y = ad.scale(w, 2.0)
    assert y._parents == ()
    with pytest.raises(ValueError):
        backward(y)


def test_backward_is_deterministic():
    rng = np.random.default_rng(3)
    W = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    x = Tensor(rng.normal(size=(2, 3)))

    def run():
        W.zero_grad()
        backward(ad.tsum(ad.tanh(ad.matmul(ad.matmul(x, W), W))))
        return W.grad.copy()

    np.testing.assert_array_equal(run(), run())


def test_repeated_backward_on_fresh_tapes_accumulates_into_leaves():
    w = Tensor([[1.0]], requires_grad=True)
    backward(ad.scale(w, 2.0))
    backward(ad.scale(w, 3.0))
    assert w.grad[0, 0] == 5.0


# ---------------------------------------------------------------- grad_check


def test_grad_check_of_sum_is_exact():
    x = Tensor(np.random.default_rng(0).normal(size=(3, 2)))
    assert grad_check(ad.tsum, x) < 1e-10


def test_grad_check_rejects_non_finite():
    x = Tensor([[-1.0]])
    with pytest.raises(FloatingPointError):
        with np.errstate(invalid="ignore"):
            grad_check(lambda t: ad.tsum(ad.log(t)), x)


def test_grad_check_rejects_bad_step():
    with pytest.raises(ValueError):
        grad_check(ad.tsum, Tensor([1.0]), h=0.0)


@pytest.mark.parametrize("op", OP_NAMES)
def test_every_op_passes_grad_check_on_twenty_inputs(op):
    for trial in range(20):
        assert op_grad_error(op, trial) < 1e-4, (op, trial)


def test_every_listed_op_kind_is_registered():
    required = {
        "matmul", "add", "sub", "elementwise-mul", "concat", "row-softmax", "sigmoid", "tanh",
        "relu", "log", "mean", "sum", "scalar-mul", "embedding-select", "transpose",
    }
    assert required <= set(ad.OPS)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)),
              elements=st.floats(-50, 50, allow_nan=False)))
def test_softmax_rows_are_distributions(x):
    p = ad.softmax(Tensor(x)).data
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (2, 3), elements=st.floats(-5, 5, allow_nan=False)),
       arrays(np.float64, (3, 2), elements=st.floats(-5, 5, allow_nan=False)))
def test_matmul_property_against_triple_loop(a, b):
    assert np.abs(ad.matmul(Tensor(a), Tensor(b)).data - triple_loop_matmul(a, b)).max() < 1e-12
