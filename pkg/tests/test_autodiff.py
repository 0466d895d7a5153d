import numpy as np
import pytest

from siamnas.autodiff import (AdamState, DimensionError, Tape, TrainingError,
                              adam_step)
from helpers import assert_grad_close, finite_difference


def _grad_of(build, arr):
    """Analytic gradient of the scalar produced by build(tape, var_node)."""
    tape = Tape()
    x = tape.var(arr)
    loss = build(tape, x)
    tape.backward(loss)
    return x.grad


class TestMatmul:
    def test_identity(self):
        tape = Tape()
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = tape.matmul(tape.var(np.eye(2)), tape.var(x))
        assert np.array_equal(out.value, x)

    def test_hand_checked(self):
        tape = Tape()
        out = tape.matmul(tape.var([[1.0, 2.0], [3.0, 4.0]]),
                          tape.var([[1.0], [1.0]]))
        assert np.array_equal(out.value, [[3.0], [7.0]])

    def test_shape_mismatch_names_both_shapes(self):
        tape = Tape()
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
            tape.matmul(tape.var(np.zeros((2, 3))), tape.var(np.zeros((2, 2))))

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(-1, 1, (3, 4))
        b = rng.uniform(-1, 1, (4, 2))

        def run():
            tape = Tape()
            na, nb = tape.var(a), tape.var(b)
            loss = tape.mse_loss(tape.matmul(na, nb), np.ones((3, 2)))
            return tape, na, nb, loss

        tape, na, nb, loss = run()
        tape.backward(loss)
        fd_a = finite_difference(lambda: run()[3].value[0, 0], a)
        fd_b = finite_difference(lambda: run()[3].value[0, 0], b)
        assert_grad_close(na.grad, fd_a, rtol=1e-6, name="a")
        assert_grad_close(nb.grad, fd_b, rtol=1e-6, name="b")


class TestRowSoftmax:
    def test_uniform_on_constant_row(self):
        tape = Tape()
        out = tape.row_softmax(tape.var([[0.0, 0.0, 0.0]]), np.ones((1, 3)))
        assert np.allclose(out.value, [[1 / 3, 1 / 3, 1 / 3]])

    def test_masked_entries_are_zero(self):
        tape = Tape()
        out = tape.row_softmax(tape.var([[10.0, 10.0, 99.0]]),
                               np.array([[1.0, 1.0, 0.0]]))
        assert np.allclose(out.value, [[0.5, 0.5, 0.0]])

    def test_all_zero_mask_row_is_zero(self):
        tape = Tape()
        out = tape.row_softmax(tape.var([[1.0, 2.0]]), np.zeros((1, 2)))
        assert np.array_equal(out.value, [[0.0, 0.0]])

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(-100, 100, (5, 5))
        mask = (rng.random((5, 5)) < 0.5).astype(float)
        mask[0] = 1.0
        tape = Tape()
        out = tape.row_softmax(tape.var(a), mask)
        sums = out.value.sum(axis=1)
        for i in range(5):
            expected = 1.0 if mask[i].any() else 0.0
            assert sums[i] == pytest.approx(expected)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(-1, 1, (3, 3))
        mask = (rng.random((3, 3)) < 0.6).astype(float)
        w = rng.uniform(-1, 1, (3, 3))

        def run():
            tape = Tape()
            na = tape.var(a)
            out = tape.matmul(tape.row_softmax(na, mask),
                              tape.var(w, requires_grad=False))
            loss = tape.mse_loss(out, np.zeros((3, 3)))
            return tape, na, loss

        tape, na, loss = run()
        tape.backward(loss)
        fd = finite_difference(lambda: run()[2].value[0, 0], a)
        assert_grad_close(na.grad, fd, rtol=1e-5)


class TestElementwise:
    def test_relu(self):
        tape = Tape()
        out = tape.relu(tape.var([[-1.0, 2.0]]))
        assert np.array_equal(out.value, [[0.0, 2.0]])

    def test_mse_of_identical_is_zero_with_zero_gradient(self):
        x = np.array([[0.3, -0.7]])
        tape = Tape()
        nx = tape.var(x)
        loss = tape.mse_loss(nx, x)
        tape.backward(loss)
        assert loss.value[0, 0] == 0.0
        assert np.array_equal(nx.grad, np.zeros_like(x))

    def test_hadamard_gradient(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(-1, 1, (2, 3))
        b = rng.uniform(-1, 1, (2, 3))

        def run():
            tape = Tape()
            na, nb = tape.var(a), tape.var(b)
            loss = tape.mse_loss(tape.hadamard(na, nb), np.ones((2, 3)))
            return tape, na, loss

        tape, na, loss = run()
        tape.backward(loss)
        fd = finite_difference(lambda: run()[2].value[0, 0], a)
        assert_grad_close(na.grad, fd, rtol=1e-6)

    def test_mean_pool_rows_shape_and_grad(self):
        a = np.arange(6.0).reshape(3, 2)
        tape = Tape()
        na = tape.var(a)
        pooled = tape.mean_pool_rows(na)
        assert pooled.shape == (1, 2)
        loss = tape.sum_all(pooled)
        tape.backward(loss)
        assert np.allclose(na.grad, np.full((3, 2), 1 / 3))

    def test_shape_mismatch(self):
        tape = Tape()
        with pytest.raises(DimensionError):
            tape.add(tape.var(np.zeros((2, 2))), tape.var(np.zeros((3, 2))))


class TestBackward:
    def test_sum_gradient_is_all_ones(self):
        w = np.random.default_rng(4).uniform(-1, 1, (3, 3))
        tape = Tape()
        nw = tape.var(w)
        tape.backward(tape.sum_all(nw))
        assert np.array_equal(nw.grad, np.ones((3, 3)))

    def test_linear_regression_closed_form(self):
        rng = np.random.default_rng(5)
        w = rng.uniform(-1, 1, (2, 3))
        x = rng.uniform(-1, 1, (3, 1))
        y = rng.uniform(-1, 1, (2, 1))
        tape = Tape()
        nw = tape.var(w)
        loss = tape.mse_loss(tape.matmul(nw, tape.const(x)), y)
        tape.backward(loss)
        expected = 2.0 * (w @ x - y) @ x.T / y.size
        assert np.allclose(nw.grad, expected)

    def test_non_scalar_loss_rejected(self):
        tape = Tape()
        node = tape.var(np.zeros((2, 2)))
        with pytest.raises(ValueError, match="1x1"):
            tape.backward(node)

    def test_fan_out_accumulates(self):
        tape = Tape()
        x = tape.var([[2.0]])
        loss = tape.sum_all(tape.add(x, x))
        tape.backward(loss)
        assert x.grad[0, 0] == 2.0


class TestFiniteness:
    @pytest.mark.parametrize("trial", range(20))
    def test_random_op_chain_gradcheck(self, trial):
        rng = np.random.default_rng(100 + trial)
        a = rng.uniform(-1, 1, (3, 3))
        b = rng.uniform(-1, 1, (3, 3))
        mask = (rng.random((3, 3)) < 0.7).astype(float)

        def run():
            tape = Tape()
            na, nb = tape.var(a), tape.var(b)
            h = tape.relu(tape.matmul(na, nb))
            s = tape.row_softmax(tape.hadamard(h, tape.const(mask)), mask)
            out = tape.mean_pool_rows(tape.add(s, na))
            loss = tape.mse_loss(out, np.full((1, 3), 0.3))
            return tape, na, loss

        tape, na, loss = run()
        tape.backward(loss)
        fd = finite_difference(lambda: run()[2].value[0, 0], a)
        assert_grad_close(na.grad, fd)

    def test_no_nan_for_large_inputs(self):
        rng = np.random.default_rng(6)
        a = rng.uniform(-100, 100, (4, 4))
        tape = Tape()
        out = tape.row_softmax(tape.var(a), np.ones((4, 4)))
        assert np.all(np.isfinite(out.value))

    def test_replay_determinism(self):
        rng = np.random.default_rng(7)
        a = rng.uniform(-1, 1, (3, 3))

        def run():
            tape = Tape()
            na = tape.var(a)
            loss = tape.mse_loss(tape.relu(tape.matmul(na, na)),
                                 np.zeros((3, 3)))
            tape.backward(loss)
            return loss.value.copy(), na.grad.copy()

        v1, g1 = run()
        v2, g2 = run()
        assert np.array_equal(v1, v2)
        assert np.array_equal(g1, g2)


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = {"w": np.array([[1.0, 2.0]])}
        state = AdamState()
        adam_step(p, {"w": np.zeros((1, 2))}, state, lr=0.1)
        assert np.array_equal(p["w"], [[1.0, 2.0]])

    def test_constant_gradient_decreases_param(self):
        p = {"w": np.array([[1.0]])}
        state = AdamState()
        prev = [1.0]
        for _ in range(10):
            adam_step(p, {"w": np.array([[1.0]])}, state, lr=0.01)
            assert p["w"][0, 0] < prev[0]
            prev[0] = p["w"][0, 0]

    def test_determinism_over_100_steps(self):
        def run():
            rng = np.random.default_rng(8)
            p = {"w": rng.uniform(-1, 1, (4, 4))}
            state = AdamState()
            for _ in range(100):
                g = {"w": rng.uniform(-1, 1, (4, 4))}
                adam_step(p, g, state, lr=1e-3)
            return p["w"]

        assert np.array_equal(run(), run())

    def test_non_finite_gradient_names_parameter(self):
        p = {"bad": np.array([[1.0]])}
        with pytest.raises(TrainingError, match="bad"):
            adam_step(p, {"bad": np.array([[np.nan]])}, AdamState(), lr=0.1)
