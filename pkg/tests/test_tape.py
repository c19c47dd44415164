"""Adjoint correctness of every tape primitive against finite differences."""

import numpy as np
import pytest

from metaswarm import tape as td
from metaswarm.errors import NumericError, ShapeError


def _fd_max_err(build, theta, step=1e-5):
    return td.grad_check(build, theta, step)


def test_tanh_at_origin_value_and_adjoint():
    t = td.Tape()
    x = t.param(np.zeros((1, 1)))
    y = td.tanh(x)
    assert y.item() == 0.0
    grads = t.backward(y)
    assert grads[x.nid][0, 0] == pytest.approx(1.0)


def test_softmax_of_equal_scores_is_uniform():
    y = td.softmax(td.Tensor(np.zeros((4, 1))), axis=0)
    np.testing.assert_allclose(y.data.ravel(), [0.25, 0.25, 0.25, 0.25])


def test_square_derivative_at_three():
    t = td.Tape()
    x = t.param(np.array([[3.0]]))
    grads = t.backward(td.mul(x, x))
    assert grads[x.nid][0, 0] == pytest.approx(6.0)


def test_sum_of_identity_matvec_gradient():
    t = td.Tape()
    x = t.param(np.array([[1.0], [2.0]]))
    loss = td.sum_all(td.matmul(td.Tensor(np.eye(2)), x))
    grads = t.backward(loss)
    np.testing.assert_allclose(grads[x.nid], [[1.0], [1.0]])


def test_squared_norm_gradient():
    t = td.Tape()
    x = t.param(np.array([[1.0], [-2.0]]))
    grads = t.backward(td.sqnorm(x))
    np.testing.assert_allclose(grads[x.nid], [[2.0], [-4.0]])


def test_random_five_parameter_composite_matches_fd():
    rng = np.random.default_rng(7)
    theta = {
        "W": rng.uniform(-2, 2, (3, 3)),
        "u": rng.uniform(-2, 2, (3, 1)),
        "v": rng.uniform(-2, 2, (3, 1)),
        "M": rng.uniform(-2, 2, (3, 3)),
        "w": rng.uniform(-2, 2, (3, 1)),
    }

    def build(t, p):
        h = td.tanh(td.matmul(p["W"], p["u"]))
        s = td.softmax(td.matmul(p["M"], td.add(h, p["v"])), axis=0)
        return td.sum_all(td.mul(s, p["w"]))

    assert _fd_max_err(build, theta) < 1e-6


def test_quadratic_bowl_grad_check_is_nearly_exact():
    theta = {"x": np.array([[0.7], [-1.3], [2.1]])}

    def build(t, p):
        return td.sqnorm(p["x"])

    assert _fd_max_err(build, theta) < 1e-9


def test_elementwise_binaries_match_fd():
    rng = np.random.default_rng(3)
    theta = {"a": rng.uniform(-2, 2, (2, 3)), "b": rng.uniform(0.5, 2.0, (2, 3)), "s": rng.uniform(0.5, 2.0, (1, 1))}

    def build(t, p):
        y = td.div(td.mul(td.add(p["a"], p["s"]), td.sub(p["b"], p["s"])), p["b"])
        return td.sum_all(td.mul(y, y))

    assert _fd_max_err(build, theta) < 1e-6


def test_unary_chain_matches_fd():
    rng = np.random.default_rng(11)
    theta = {"x": rng.uniform(0.2, 2.0, (4, 1))}

    def build(t, p):
        y = td.add(td.sigmoid(p["x"]), td.exp(td.neg(p["x"])))
        return td.sum_all(td.mul(td.log(p["x"]), y))

    assert _fd_max_err(build, theta) < 1e-6


def test_sum_axis_and_transpose_match_fd():
    rng = np.random.default_rng(5)
    theta = {"x": rng.uniform(-2, 2, (3, 4))}

    def build(t, p):
        rows = td.sum_axis(p["x"], axis=1)
        cols = td.sum_axis(td.transpose(p["x"]), axis=1)
        return td.add(td.sqnorm(rows), td.sqnorm(cols))

    assert _fd_max_err(build, theta) < 1e-6


def test_stack_and_slice_match_fd():
    rng = np.random.default_rng(13)
    theta = {"a": rng.uniform(-2, 2, (2, 2)), "b": rng.uniform(-2, 2, (2, 2))}

    def build(t, p):
        v = td.vstack([p["a"], p["b"]])
        h = td.hstack([p["a"], td.slice_rows(v, 1, 3)])
        return td.sqnorm(td.slice_cols(h, 1, 3))

    assert _fd_max_err(build, theta) < 1e-6


def test_softmax_axis_gradients_match_fd():
    rng = np.random.default_rng(17)
    theta = {"x": rng.uniform(-2, 2, (3, 3)), "w": rng.uniform(-2, 2, (3, 3))}

    def build(t, p):
        y0 = td.softmax(p["x"], axis=0)
        y1 = td.softmax(p["x"], axis=1)
        return td.sum_all(td.mul(td.add(y0, y1), p["w"]))

    assert _fd_max_err(build, theta) < 1e-6


def test_pairwise_sqdist_values_match_brute_force():
    rng = np.random.default_rng(19)
    x = rng.uniform(-2, 2, (4, 3))
    d = td.pairwise_sqdist(td.Tensor(x)).data
    for i in range(4):
        for j in range(4):
            assert d[i, j] == pytest.approx(np.sum((x[i] - x[j]) ** 2), abs=1e-12)


def test_pairwise_sqdist_gradient_matches_fd():
    rng = np.random.default_rng(19)
    w = rng.uniform(-2, 2, (4, 4))
    theta = {"x": rng.uniform(-2, 2, (4, 3))}

    def build(t, p):
        return td.sum_all(td.mul(td.exp(td.mul(td.pairwise_sqdist(p["x"]), td.Tensor(-0.1))), td.Tensor(w)))

    assert _fd_max_err(build, theta) < 1e-6


def test_cross_sqdist_values_and_gradient():
    rng = np.random.default_rng(23)
    u = rng.uniform(-2, 2, (5, 3))
    x0 = rng.uniform(-2, 2, (4, 3))
    d = td.cross_sqdist(td.Tensor(x0), u).data
    for i in range(4):
        for j in range(5):
            assert d[i, j] == pytest.approx(np.sum((x0[i] - u[j]) ** 2), abs=1e-12)
    w = rng.uniform(-2, 2, (4, 5))

    def build(t, p):
        return td.sum_all(td.mul(td.exp(td.mul(td.cross_sqdist(p["x"], u), td.Tensor(-0.1))), td.Tensor(w)))

    assert _fd_max_err(build, {"x": x0}) < 1e-6


def test_solve_psd_value_and_gradients():
    rng = np.random.default_rng(29)
    base = rng.uniform(-1, 1, (4, 4))
    theta = {"r": base, "b": rng.uniform(-1, 1, (4, 1))}

    def build(t, p):
        a = td.add(td.matmul(td.transpose(p["r"]), p["r"]), td.Tensor(0.5 * np.eye(4)))
        return td.sqnorm(td.solve_psd(a, p["b"]))

    spd = base.T @ base + 0.5 * np.eye(4)
    rhs = theta["b"]
    direct = np.linalg.solve(spd, rhs)
    t = td.Tape()
    sol = td.solve_psd(td.Tensor(spd), t.param(rhs))
    np.testing.assert_allclose(sol.data, direct, rtol=1e-12)
    assert _fd_max_err(build, theta) < 1e-6


def test_solve_psd_rejects_indefinite_matrix():
    with pytest.raises(NumericError):
        td.solve_psd(td.Tensor(np.array([[1.0, 0.0], [0.0, -1.0]])), td.Tensor(np.ones((2, 1))))


def test_softmax_gradient_sums_to_zero_with_uniform_upstream():
    rng = np.random.default_rng(31)
    t = td.Tape()
    x = t.param(rng.uniform(-2, 2, (5, 1)))
    y = td.softmax(x, axis=0)
    grads = t.backward(td.sum_all(y))
    assert abs(grads[x.nid].sum()) < 1e-12


def test_backward_is_idempotent():
    rng = np.random.default_rng(37)
    t = td.Tape()
    x = t.param(rng.uniform(-2, 2, (3, 1)))
    loss = td.sqnorm(td.tanh(td.matmul(td.Tensor(rng.uniform(-1, 1, (3, 3))), x)))
    first = t.backward(loss)[x.nid]
    second = t.backward(loss)[x.nid]
    np.testing.assert_array_equal(first, second)


def test_backward_rejects_non_scalar_loss():
    t = td.Tape()
    x = t.param(np.ones((2, 1)))
    with pytest.raises(ShapeError):
        t.backward(td.mul(x, x))


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError) as err:
        td.add(td.Tensor(np.ones((2, 2))), td.Tensor(np.ones((3, 1))))
    assert "(2, 2)" in str(err.value) and "(3, 1)" in str(err.value)


def test_matmul_shape_mismatch_rejected():
    with pytest.raises(ShapeError):
        td.matmul(td.Tensor(np.ones((2, 3))), td.Tensor(np.ones((2, 3))))


def test_unreachable_parameter_gets_zero_gradient_of_its_shape():
    t = td.Tape()
    x = t.param(np.ones((2, 1)))
    unused = t.param(np.ones((3, 2)))
    grads = t.backward(td.sqnorm(x))
    assert grads[unused.nid].shape == (3, 2)
    assert np.all(grads[unused.nid] == 0.0)


def test_operands_from_different_tapes_rejected():
    t1, t2 = td.Tape(), td.Tape()
    a = t1.param(np.ones((2, 1)))
    b = t2.param(np.ones((2, 1)))
    with pytest.raises(ValueError):
        td.add(a, b)


def test_scalar_broadcast_against_matrix():
    t = td.Tape()
    s = t.param(np.array([[2.0]]))
    m = td.Tensor(np.arange(6, dtype=float).reshape(2, 3))
    loss = td.sum_all(td.mul(s, m))
    assert loss.item() == pytest.approx(30.0)
    grads = t.backward(loss)
    assert grads[s.nid][0, 0] == pytest.approx(15.0)


def test_external_scalar_and_vector_adjoints():
    # y = g(x)^T g(x) with g supplied externally along with its jacobian
    def build(t, p):
        x = p["x"]
        xv = x.data.ravel()
        gval = np.array([xv[0] ** 2, np.sin(xv[1])])
        jac = np.array([[2 * xv[0], 0.0], [0.0, np.cos(xv[1])]])
        g = td.external_vector(x, gval, lambda: jac)
        val = td.external_scalar(x, float(xv[0] * xv[1]), np.array([xv[1], xv[0]]))
        return td.add(td.sqnorm(g), val)

    theta = {"x": np.array([[0.8], [-0.4]])}
    assert _fd_max_err(build, theta) < 1e-6
