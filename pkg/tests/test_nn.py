import math

import numpy as np
import pytest

from fedkd.nn import (
    AdamState,
    ModelParams,
    adam_step,
    backward,
    cross_entropy_loss,
    fit_minibatches,
    forward,
    init_params,
    kl_distill_loss,
    softmax_temp,
)
from _oracles import adam_scalar_trace, fd_grad, mlp_reference, rel_err


def tiny_net(seed=0, dims=(5, 4, 3)):
    return init_params(*dims, seed)


def scalar_net(w1=1.0, w2=1.0, w3=1.0):
    return ModelParams(
        weights=(np.array([[w1]]), np.array([[w2]]), np.array([[w3]])),
        biases=(np.zeros(1), np.zeros(1), np.zeros(1)),
    )


class TestModelParams:
    def test_dims_derived_from_shapes(self):
        p = tiny_net()
        assert p.dims == (5, 4, 3)

    def test_rejects_mismatched_chain(self):
        with pytest.raises(ValueError):
            ModelParams(
                weights=(np.zeros((4, 5)), np.zeros((4, 3)), np.zeros((3, 4))),
                biases=(np.zeros(4), np.zeros(4), np.zeros(3)),
            )

    def test_rejects_nonfinite(self):
        w = np.zeros((4, 5))
        w[0, 0] = np.nan
        with pytest.raises(ValueError):
            ModelParams(
                weights=(w, np.zeros((4, 4)), np.zeros((3, 4))),
                biases=(np.zeros(4), np.zeros(4), np.zeros(3)),
            )

    def test_arrays_roundtrip(self):
        p = tiny_net()
        q = ModelParams.from_arrays(p.arrays())
        for a, b in zip(p.arrays(), q.arrays()):
            assert np.array_equal(a, b)

    def test_copy_is_deep(self):
        p = tiny_net()
        q = p.copy()
        q.weights[0][0, 0] += 1.0
        assert p.weights[0][0, 0] != q.weights[0][0, 0]


class TestInitParams:
    def test_deterministic_for_fixed_seed(self):
        a = init_params(7, 8, 3, 42)
        b = init_params(7, 8, 3, 42)
        for x, y in zip(a.arrays(), b.arrays()):
            assert np.array_equal(x, y)

    def test_seeds_differ(self):
        a = init_params(7, 8, 3, 1)
        b = init_params(7, 8, 3, 2)
        assert any(not np.array_equal(x, y) for x, y in zip(a.arrays(), b.arrays()))

    @pytest.mark.parametrize("dims", [(0, 4, 3), (5, 0, 3), (5, 4, 0), (-1, 4, 3)])
    def test_nonpositive_dim_rejected(self, dims):
        with pytest.raises(ValueError):
            init_params(*dims, 0)

    def test_biases_zero_and_weights_bounded(self):
        p = init_params(10, 6, 4, 3)
        for b in p.biases:
            assert np.all(b == 0.0)
        for w in p.weights:
            limit = math.sqrt(6.0 / (w.shape[0] + w.shape[1]))
            assert np.all(np.abs(w) <= limit)
            assert np.abs(w).max() > 0.1 * limit


class TestForward:
    def test_zero_params_give_zero_logits(self, kernel_backend):
        p = ModelParams(
            weights=(np.zeros((4, 5)), np.zeros((4, 4)), np.zeros((3, 4))),
            biases=(np.zeros(4), np.zeros(4), np.zeros(3)),
        )
        z = forward(p, np.random.default_rng(0).normal(size=(6, 5)))
        assert np.array_equal(z, np.zeros((6, 3)))

    def test_relu_clamps_negative_input(self, kernel_backend):
        z = forward(scalar_net(), np.array([[-1.0]]))
        assert z[0, 0] == 0.0

    def test_positive_input_passes_through_unit_chain(self, kernel_backend):
        z = forward(scalar_net(), np.array([[2.5]]))
        assert z[0, 0] == 2.5

    def test_matches_straight_line_reference(self, kernel_backend):
        rng = np.random.default_rng(123)
        p = init_params(9, 6, 4, 7)
        x = rng.normal(size=(4, 9))
        expected = mlp_reference(p.weights, p.biases, x)
        assert np.allclose(forward(p, x), expected, rtol=0.0, atol=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            forward(tiny_net(), np.zeros((3, 6)))

    def test_empty_batch(self, kernel_backend):
        assert forward(tiny_net(), np.zeros((0, 5))).shape == (0, 3)


class TestSoftmaxTemp:
    def test_uniform_logits_uniform_probs(self):
        for t in (0.5, 1.0, 1.5, 10.0):
            p = softmax_temp(np.full(7, 3.3), t)
            assert np.allclose(p, np.full(7, 1.0 / 7.0), atol=1e-12)

    def test_two_logit_value(self):
        # independent scalar evaluation of exp(z)/sum for z = [1, 2]
        e1, e2 = math.exp(1.0), math.exp(2.0)
        expected = [e1 / (e1 + e2), e2 / (e1 + e2)]
        got = softmax_temp(np.array([1.0, 2.0]), 1.0)
        assert np.allclose(got, expected, atol=1e-12)
        assert np.allclose(got, [0.26894, 0.73106], atol=1e-4)

    def test_high_temperature_flattens(self):
        p = softmax_temp(np.array([1.0, 2.0]), 1e6)
        assert np.allclose(p, [0.5, 0.5], atol=1e-5)

    @pytest.mark.parametrize("t", [0.0, -1.0])
    def test_nonpositive_temperature_rejected(self, t):
        with pytest.raises(ValueError):
            softmax_temp(np.array([1.0, 2.0]), t)

    def test_simplex_and_overflow_safety(self):
        z = np.array([[1000.0, 1001.0, 999.0], [-1000.0, 0.0, 1000.0]])
        p = softmax_temp(z, 1.5)
        assert np.all(p >= 0.0)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert np.isfinite(p).all()

    def test_shift_invariance(self):
        rng = np.random.default_rng(5)
        z = rng.normal(size=(4, 6))
        for c in (-17.0, 3.25):
            assert np.allclose(
                softmax_temp(z, 1.5), softmax_temp(z + c, 1.5), atol=1e-12
            )


class TestCrossEntropy:
    def test_confident_correct_prediction_near_zero_loss(self):
        z = np.array([[50.0, 0.0, 0.0]])
        loss, _ = cross_entropy_loss(z, [0])
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_uniform_logits_log_c(self):
        for c in (2, 7, 11):
            z = np.zeros((5, c))
            loss, _ = cross_entropy_loss(z, np.zeros(5, dtype=int))
            assert loss == pytest.approx(math.log(c), abs=1e-12)

    def test_grad_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        z = rng.normal(size=(6, 4))
        y = rng.integers(0, 4, size=6)
        _, grad = cross_entropy_loss(z, y)
        fd = fd_grad(lambda: cross_entropy_loss(z, y)[0], z)
        assert rel_err(grad, fd) < 1e-6

    def test_out_of_range_label_rejected(self):
        z = np.zeros((2, 3))
        with pytest.raises(ValueError):
            cross_entropy_loss(z, [0, 3])
        with pytest.raises(ValueError):
            cross_entropy_loss(z, [-1, 0])


class TestKLDistill:
    def test_student_equals_teacher_zero_loss(self):
        z = np.random.default_rng(3).normal(size=(5, 7))
        loss, grad = kl_distill_loss(z, z.copy(), 1.5)
        assert loss == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(grad, 0.0, atol=1e-15)

    def test_onehot_teacher_uniform_student_log2(self):
        # KL([1, 0] || [0.5, 0.5]) = ln 2, teacher peak approximated by a
        # large logit gap
        loss, _ = kl_distill_loss(np.array([0.0, 0.0]), np.array([60.0, 0.0]), 1.0)
        assert loss == pytest.approx(math.log(2.0), abs=1e-8)

    def test_grad_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        zs = rng.normal(size=(5, 6))
        zt = rng.normal(size=(5, 6))
        _, grad = kl_distill_loss(zs, zt, 1.5)
        fd = fd_grad(lambda: kl_distill_loss(zs, zt, 1.5)[0], zs)
        assert rel_err(grad, fd) < 1e-6

    def test_grad_has_no_extra_temperature_scaling(self):
        # grad must equal (p_s - p_t) / (T n) exactly, with no squared-T factor
        rng = np.random.default_rng(17)
        zs = rng.normal(size=(4, 5))
        zt = rng.normal(size=(4, 5))
        t = 1.5
        _, grad = kl_distill_loss(zs, zt, t)
        direct = (softmax_temp(zs, t) - softmax_temp(zt, t)) / (t * zs.shape[0])
        assert np.allclose(grad, direct, atol=1e-15)

    def test_nonnegative(self):
        rng = np.random.default_rng(19)
        for _ in range(50):
            zs = rng.normal(size=(3, 4)) * 3
            zt = rng.normal(size=(3, 4)) * 3
            loss, _ = kl_distill_loss(zs, zt, 1.5)
            assert loss >= -1e-15

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            kl_distill_loss(np.zeros((2, 3)), np.zeros((2, 4)), 1.0)

    def test_nonpositive_temperature_rejected(self):
        with pytest.raises(ValueError):
            kl_distill_loss(np.zeros((2, 3)), np.zeros((2, 3)), 0.0)


class TestBackward:
    def test_zero_grad_logits_zero_param_grads(self, kernel_backend):
        p = tiny_net()
        g = backward(p, np.random.default_rng(0).normal(size=(4, 5)), np.zeros((4, 3)))
        for a in g.arrays():
            assert np.array_equal(a, np.zeros_like(a))

    def test_full_jacobian_against_finite_differences(self, kernel_backend):
        rng = np.random.default_rng(21)
        p = init_params(5, 4, 3, 2)
        x = rng.normal(size=(6, 5))
        upstream = rng.normal(size=(6, 3))
        # scalar objective sum(logits * upstream) has d/dlogits = upstream
        grads = backward(p, x, upstream)
        for analytic, param in zip(grads.arrays(), p.arrays()):
            fd = fd_grad(lambda: float((forward(p, x) * upstream).sum()), param)
            assert rel_err(analytic, fd) < 1e-4

    def test_duplicated_rows_under_mean_reduction(self, kernel_backend):
        rng = np.random.default_rng(23)
        p = init_params(5, 4, 3, 4)
        x1 = rng.normal(size=(1, 5))
        x2 = np.vstack([x1, x1])
        _, g1 = cross_entropy_loss(forward(p, x1), [1])
        _, g2 = cross_entropy_loss(forward(p, x2), [1, 1])
        b1 = backward(p, x1, g1)
        b2 = backward(p, x2, g2)
        for a, b in zip(b1.arrays(), b2.arrays()):
            assert np.allclose(a, b, atol=1e-15)

    def test_shape_mismatch_rejected(self):
        p = tiny_net()
        with pytest.raises(ValueError):
            backward(p, np.zeros((4, 5)), np.zeros((3, 3)))
        with pytest.raises(ValueError):
            backward(p, np.zeros((4, 6)), np.zeros((4, 3)))


class TestAdamStep:
    def test_zero_gradient_leaves_params(self, kernel_backend):
        p = tiny_net()
        zero = ModelParams.from_arrays([np.zeros_like(a) for a in p.arrays()])
        updated, state = adam_step(p, zero, AdamState.init(p, lr0=0.01))
        assert state.step == 1
        for a, b in zip(p.arrays(), updated.arrays()):
            assert np.array_equal(a, b)

    def test_first_step_magnitude_is_lr(self, kernel_backend):
        p = scalar_net(w1=0.0)
        g = scalar_net(w1=1.0)
        updated, _ = adam_step(p, g, AdamState.init(p, lr0=0.001))
        expected = adam_scalar_trace([1.0], [0.001])[0]
        assert updated.weights[0][0, 0] == pytest.approx(expected, rel=1e-12)
        assert updated.weights[0][0, 0] == pytest.approx(-0.001, rel=1e-6)

    def test_matches_scalar_recurrence_over_steps(self, kernel_backend):
        p = scalar_net(w1=0.0)
        state = AdamState.init(p, lr0=0.01)
        grads = [1.0, 0.5, -0.25, 2.0, 1.0]
        for g in grads:
            p, state = adam_step(p, scalar_net(w1=g), state)
        expected = adam_scalar_trace(grads, [0.01] * len(grads))[-1]
        assert p.weights[0][0, 0] == pytest.approx(expected, rel=1e-12)
        assert state.step == len(grads)

    def test_two_ticks_scale_lr_by_09025(self, kernel_backend):
        p0 = scalar_net(w1=0.0)
        g = scalar_net(w1=1.0)
        base, _ = adam_step(p0, g, AdamState.init(p0, lr0=0.001, decay=0.05))
        ticked, _ = adam_step(p0, g, AdamState.init(p0, lr0=0.001, decay=0.05), ticks=2)
        assert ticked.weights[0][0, 0] == pytest.approx(
            0.9025 * base.weights[0][0, 0], rel=1e-12
        )

    def test_inputs_not_mutated(self, kernel_backend):
        p = tiny_net()
        before = [a.copy() for a in p.arrays()]
        g = ModelParams.from_arrays([np.ones_like(a) for a in p.arrays()])
        state = AdamState.init(p)
        adam_step(p, g, state)
        for a, b in zip(p.arrays(), before):
            assert np.array_equal(a, b)
        for m in state.m:
            assert np.array_equal(m, np.zeros_like(m))


class TestFitMinibatches:
    def blob_data(self, n=120, seed=0):
        rng = np.random.default_rng(seed)
        centers = np.array([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]])
        y = rng.integers(0, 3, size=n)
        x = centers[y] + rng.normal(scale=0.4, size=(n, 3))
        return x, y

    def test_zero_epochs_returns_copy(self):
        p = tiny_net(dims=(3, 4, 3))
        x, y = self.blob_data()
        out, state = fit_minibatches(p, x, y, epochs=0, batch_size=32, seed=1)
        assert state.step == 0
        for a, b in zip(p.arrays(), out.arrays()):
            assert np.array_equal(a, b)
            assert a is not b

    def test_deterministic(self, kernel_backend):
        p = tiny_net(dims=(3, 8, 3))
        x, y = self.blob_data()
        a, _ = fit_minibatches(p, x, y, epochs=3, batch_size=32, seed=[4, 9])
        b, _ = fit_minibatches(p, x, y, epochs=3, batch_size=32, seed=[4, 9])
        for u, v in zip(a.arrays(), b.arrays()):
            assert np.array_equal(u, v)

    def test_seed_changes_trajectory(self, kernel_backend):
        p = tiny_net(dims=(3, 8, 3))
        x, y = self.blob_data()
        a, _ = fit_minibatches(p, x, y, epochs=1, batch_size=16, seed=[4, 9])
        b, _ = fit_minibatches(p, x, y, epochs=1, batch_size=16, seed=[4, 10])
        assert any(not np.array_equal(u, v) for u, v in zip(a.arrays(), b.arrays()))

    def test_state_counts_minibatch_steps(self, kernel_backend):
        p = tiny_net(dims=(3, 8, 3))
        x, y = self.blob_data(n=100)
        _, state = fit_minibatches(p, x, y, epochs=3, batch_size=32, seed=[4])
        assert state.step == 3 * 4  # ceil(100 / 32) batches per epoch

    def test_cross_entropy_descends(self, kernel_backend):
        p = init_params(3, 16, 3, 5)
        x, y = self.blob_data(n=240)
        before, _ = cross_entropy_loss(forward(p, x), y)
        trained, _ = fit_minibatches(
            p, x, y, epochs=2, batch_size=64, lr0=0.01, seed=[7]
        )
        after, _ = cross_entropy_loss(forward(trained, x), y)
        assert after < before

    def test_kl_objective_descends(self, kernel_backend):
        rng = np.random.default_rng(31)
        student = init_params(3, 16, 4, 6)
        teacher = init_params(3, 16, 4, 7)
        x = rng.normal(size=(200, 3))
        t_logits = forward(teacher, x)
        before, _ = kl_distill_loss(forward(student, x), t_logits, 1.5)
        tuned, _ = fit_minibatches(
            student, x, t_logits, objective="kl", temperature=1.5,
            epochs=3, batch_size=64, lr0=0.01, seed=[8],
        )
        after, _ = kl_distill_loss(forward(tuned, x), t_logits, 1.5)
        assert after < before

    def test_tick_decay_matches_manual_lr(self, kernel_backend):
        # one epoch at start_tick=2 must equal one epoch at lr0 * 0.95^2
        p = init_params(3, 8, 3, 9)
        x, y = self.blob_data(n=64, seed=2)
        ticked, _ = fit_minibatches(
            p, x, y, epochs=1, batch_size=32, lr0=0.001, decay=0.05,
            seed=[3], start_tick=2,
        )
        manual, _ = fit_minibatches(
            p, x, y, epochs=1, batch_size=32, lr0=0.001 * 0.95**2, decay=0.05,
            seed=[3], start_tick=0,
        )
        for a, b in zip(ticked.arrays(), manual.arrays()):
            assert np.allclose(a, b, rtol=1e-12, atol=0.0)

    def test_unknown_objective_rejected(self):
        p = tiny_net(dims=(3, 4, 3))
        x, y = self.blob_data(n=10)
        with pytest.raises(ValueError):
            fit_minibatches(p, x, y, objective="mse", epochs=1, batch_size=4, seed=0)

    def test_label_shape_mismatch_rejected(self):
        p = tiny_net(dims=(3, 4, 3))
        x, y = self.blob_data(n=10)
        with pytest.raises(ValueError):
            fit_minibatches(p, x, y[:-1], epochs=1, batch_size=4, seed=0)
