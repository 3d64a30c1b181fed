import math

import numpy as np
import pytest

from gradcheck import check_gradients
from segnn import autodiff as ad
from segnn.autodiff import (
    AdamState,
    BatchNormState,
    Parameter,
    Tensor,
    adam_step,
    recording,
    zero_grads,
)
from segnn.errors import SegnnError, ShapeError
from segnn.sparse import CsrMatrix

RNG = np.random.default_rng(20240811)


def _scalarize(out, weights):
    # Fixed random projection turns any (n, d) output into a scalar loss.
    return ad.sum_cols(ad.sum_rows(ad.mul(out, Tensor(weights))))


def _rand(*shape):
    return RNG.normal(size=shape)


def _rand_pos(*shape):
    return np.abs(RNG.normal(size=shape)) + 0.5


def _random_csr(n, m, density=0.4):
    dense = RNG.normal(size=(n, m)) * (RNG.random(size=(n, m)) < density)
    return CsrMatrix.from_dense(dense)


A_FIXED = _random_csr(5, 4)
SEGMENTS = np.array([0, 0, 1, 1, 1, 2], dtype=np.int64)


# Each case returns (builder, input arrays); the builder must be pure per call.
def _case_matmul():
    w = _rand(3, 4)
    return lambda ts: _scalarize(ad.matmul(ts[0], ts[1]), w), [_rand(3, 5), _rand(5, 4)]


def _case_spmm():
    w = _rand(5, 3)
    return lambda ts: _scalarize(ad.spmm(A_FIXED, ts[0]), w), [_rand(4, 3)]


def _case_add():
    w = _rand(3, 4)
    return lambda ts: _scalarize(ad.add(ts[0], ts[1]), w), [_rand(3, 4), _rand(3, 4)]


def _case_sub():
    w = _rand(3, 4)
    return lambda ts: _scalarize(ad.sub(ts[0], ts[1]), w), [_rand(3, 4), _rand(3, 4)]


def _case_mul():
    w = _rand(3, 4)
    return lambda ts: _scalarize(ad.mul(ts[0], ts[1]), w), [_rand(3, 4), _rand(3, 4)]


def _case_div():
    w = _rand(3, 4)
    return (
        lambda ts: _scalarize(ad.div(ts[0], ts[1]), w),
        [_rand(3, 4), _rand_pos(3, 4)],
    )


def _case_scale():
    w = _rand(2, 3)
    return lambda ts: _scalarize(ad.scale(ts[0], -1.7), w), [_rand(2, 3)]


def _case_add_const():
    w = _rand(2, 3)
    return lambda ts: _scalarize(ad.add_const(ts[0], 0.37), w), [_rand(2, 3)]


def _case_add_bias_row():
    w = _rand(4, 3)
    return (
        lambda ts: _scalarize(ad.add_bias_row(ts[0], ts[1]), w),
        [_rand(4, 3), _rand(1, 3)],
    )


def _case_relu():
    w = _rand(4, 3)
    return lambda ts: _scalarize(ad.relu(ts[0]), w), [_rand(4, 3)]


def _case_prelu():
    w = _rand(4, 3)
    return (
        lambda ts: _scalarize(ad.prelu(ts[0], ts[1]), w),
        [_rand(4, 3), np.array([[0.25]])],
    )


def _case_sigmoid():
    w = _rand(3, 3)
    return lambda ts: _scalarize(ad.sigmoid(ts[0]), w), [_rand(3, 3)]


def _case_sqrt():
    w = _rand(3, 3)
    return lambda ts: _scalarize(ad.sqrt(ts[0]), w), [_rand_pos(3, 3)]


def _case_concat_cols():
    w = _rand(3, 7)
    return (
        lambda ts: _scalarize(ad.concat_cols([ts[0], ts[1], ts[2]]), w),
        [_rand(3, 2), _rand(3, 4), _rand(3, 1)],
    )


def _case_sum_rows():
    w = _rand(1, 4)
    return lambda ts: _scalarize(ad.sum_rows(ts[0]), w), [_rand(5, 4)]


def _case_mean_rows():
    w = _rand(1, 4)
    return lambda ts: _scalarize(ad.mean_rows(ts[0]), w), [_rand(5, 4)]


def _case_sum_cols():
    w = _rand(5, 1)
    return lambda ts: _scalarize(ad.sum_cols(ts[0]), w), [_rand(5, 4)]


def _case_segment_sum_rows():
    w = _rand(3, 4)
    return (
        lambda ts: _scalarize(ad.segment_sum_rows(ts[0], SEGMENTS, 3), w),
        [_rand(6, 4)],
    )


def _case_segment_mean_rows():
    w = _rand(3, 4)
    return (
        lambda ts: _scalarize(ad.segment_mean_rows(ts[0], SEGMENTS, 3), w),
        [_rand(6, 4)],
    )


def _case_bce_loss():
    y = Tensor((RNG.random(size=(6, 1)) < 0.5).astype(float))
    return lambda ts: ad.bce_loss(ts[0], y), [_rand(6, 1)]


def _case_batchnorm_train():
    w = _rand(6, 4)

    def build(ts):
        state = BatchNormState.initial(4)
        return _scalarize(ad.batchnorm(ts[0], ts[1], ts[2], state, True), w)

    return build, [_rand(6, 4), _rand_pos(1, 4), _rand(1, 4)]


def _case_batchnorm_eval():
    w = _rand(6, 4)
    state = BatchNormState.initial(4)
    state.running_mean = _rand(1, 4)
    state.running_var = _rand_pos(1, 4)

    def build(ts):
        return _scalarize(ad.batchnorm(ts[0], ts[1], ts[2], state, False), w)

    return build, [_rand(6, 4), _rand_pos(1, 4), _rand(1, 4)]


PRIMITIVE_CASES = {
    "matmul": _case_matmul,
    "spmm": _case_spmm,
    "add": _case_add,
    "sub": _case_sub,
    "mul": _case_mul,
    "div": _case_div,
    "scale": _case_scale,
    "add_const": _case_add_const,
    "add_bias_row": _case_add_bias_row,
    "relu": _case_relu,
    "prelu": _case_prelu,
    "sigmoid": _case_sigmoid,
    "sqrt": _case_sqrt,
    "concat_cols": _case_concat_cols,
    "sum_rows": _case_sum_rows,
    "mean_rows": _case_mean_rows,
    "sum_cols": _case_sum_cols,
    "segment_sum_rows": _case_segment_sum_rows,
    "segment_mean_rows": _case_segment_mean_rows,
    "bce_loss": _case_bce_loss,
    "batchnorm_train": _case_batchnorm_train,
    "batchnorm_eval": _case_batchnorm_eval,
}


@pytest.mark.parametrize("name", sorted(PRIMITIVE_CASES))
def test_primitive_gradients_match_finite_differences(name):
    build, arrays = PRIMITIVE_CASES[name]()
    check_gradients(build, arrays)


def test_relu_values():
    out = ad.relu(Tensor([[-1.0, 2.0]]))
    assert np.array_equal(out.values, [[0.0, 2.0]])


def test_sigmoid_and_bce_reference_values():
    assert ad.sigmoid(Tensor([[0.0]])).item() == 0.5
    loss = ad.bce_loss(Tensor([[0.0]]), Tensor([[1.0]]))
    assert loss.item() == pytest.approx(math.log(2.0), abs=1e-12)


def test_bce_nonnegative_and_saturating():
    rng = np.random.default_rng(7)
    for _ in range(50):
        z = rng.normal(size=(4, 1)) * 5
        y = (rng.random(size=(4, 1)) < 0.5).astype(float)
        assert ad.bce_loss(Tensor(z), Tensor(y)).item() >= 0.0
    # saturated-correct limit approaches zero
    big = ad.bce_loss(Tensor([[40.0]]), Tensor([[1.0]])).item()
    assert 0.0 <= big < 1e-12


def test_spmm_identity():
    x = RNG.normal(size=(4, 3))
    out = ad.spmm(CsrMatrix.identity(4), Tensor(x))
    assert np.array_equal(out.values, x)


def test_spmm_matches_dense_matmul_on_random_instances():
    rng = np.random.default_rng(123)
    for _ in range(100):
        n, m, d = rng.integers(1, 12, size=3)
        dense = rng.normal(size=(n, m)) * (rng.random(size=(n, m)) < 0.5)
        x = rng.normal(size=(m, d))
        got = CsrMatrix.from_dense(dense).matmul_dense(x)
        assert np.max(np.abs(got - dense @ x)) < 1e-12


def test_backward_sum_gives_ones():
    w = Parameter(RNG.normal(size=(3, 4)), "w")
    with recording() as tape:
        loss = ad.sum_cols(ad.sum_rows(w))
    tape.backward(loss)
    assert np.array_equal(w.grad, np.ones((3, 4)))


def test_backward_logistic_matches_analytic():
    x = 1.3
    y = 1.0
    w = Parameter([[0.4]], "w")
    with recording() as tape:
        z = ad.scale(w, x)
        loss = ad.bce_loss(z, Tensor([[y]]))
    tape.backward(loss)
    sigma = 1.0 / (1.0 + math.exp(-0.4 * x))
    assert w.grad[0, 0] == pytest.approx((sigma - y) * x, abs=1e-12)


def test_backward_three_layer_mlp_finite_difference():
    rng = np.random.default_rng(99)
    x = Tensor(rng.normal(size=(6, 5)))
    y = Tensor((rng.random(size=(6, 1)) < 0.5).astype(float))
    shapes = [(5, 8), (1, 8), (8, 8), (1, 8), (8, 1), (1, 1)]
    arrays = [rng.normal(size=s) * 0.5 for s in shapes]

    def build(ts):
        h = ad.relu(ad.add_bias_row(ad.matmul(x, ts[0]), ts[1]))
        h = ad.relu(ad.add_bias_row(ad.matmul(h, ts[2]), ts[3]))
        z = ad.add_bias_row(ad.matmul(h, ts[4]), ts[5])
        return ad.bce_loss(z, y)

    check_gradients(build, arrays)


def test_backward_twice_raises():
    w = Parameter([[1.0]], "w")
    with recording() as tape:
        loss = ad.scale(w, 2.0)
    tape.backward(loss)
    with pytest.raises(SegnnError, match="twice"):
        tape.backward(loss)


def test_backward_nonscalar_loss_raises():
    w = Parameter(RNG.normal(size=(2, 2)), "w")
    with recording() as tape:
        out = ad.relu(w)
    with pytest.raises(ShapeError):
        tape.backward(out)


def test_backward_detached_loss_raises():
    w = Parameter([[1.0]], "w")
    with recording() as tape:
        ad.scale(w, 2.0)
    detached = Tensor([[3.0]])
    with pytest.raises(SegnnError, match="detached"):
        tape.backward(detached)


def test_shape_mismatch_reports_both_shapes():
    with pytest.raises(ShapeError) as err:
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
    assert "(2, 3)" in str(err.value) and "(4, 2)" in str(err.value)


def test_adam_zero_gradient_leaves_parameters_unchanged():
    p = Parameter([[1.0, -2.0]], "p")
    p.grad = np.zeros((1, 2))
    before = p.values.copy()
    adam_step([p], AdamState(), lr=0.1)
    assert np.array_equal(p.values, before)


def test_adam_first_step_is_signed_lr():
    p = Parameter([[1.0, -2.0, 3.0]], "p")
    p.grad = np.array([[0.5, -1.5, 2.0]])
    before = p.values.copy()
    adam_step([p], AdamState(eps=1e-16), lr=1e-3)
    delta = p.values - before
    assert np.allclose(delta, -1e-3 * np.sign(p.grad), atol=1e-9)


def test_adam_is_deterministic():
    def run():
        rng = np.random.default_rng(5)
        p = Parameter(rng.normal(size=(3, 3)), "p")
        state = AdamState()
        for _ in range(25):
            with recording() as tape:
                loss = ad.sum_cols(ad.sum_rows(ad.mul(p, p)))
            tape.backward(loss)
            adam_step([p], state, lr=1e-2)
            zero_grads([p])
        return p.values

    assert np.array_equal(run(), run())
