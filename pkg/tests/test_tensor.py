"""Autodiff engine: forward semantics and gradients vs. finite differences."""

import numpy as np
import pytest

from avsr import tensor as T
from avsr.tensor import AdamW, Graph, Tensor, backward

from conftest import central_diff, max_rel_err


def grad_of(build, x: Tensor) -> np.ndarray:
    """Analytic gradient of sum(build()) w.r.t. x."""
    x.zero_grad()
    with Graph():
        loss = build().sum()
    backward(loss)
    return x.grad


def fd_of(build, x: Tensor, h: float = 1e-5) -> np.ndarray:
    return central_diff(lambda: float(build().data.sum()), x.data, h=h)


class TestMatmul:
    def test_identity(self):
        a = Tensor(np.eye(2))
        b = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(T.matmul(a, b).data, b.data)

    def test_selector_row(self):
        out = T.matmul(Tensor([[1.0, 0.0]]), Tensor([[5.0], [7.0]]))
        assert out.data.tolist() == [[5.0]]

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 2\)"):
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))

    def test_gradient_matches_central_difference(self, rng):
        a = Tensor(rng.normal(size=(3, 4)))
        b = Tensor(rng.normal(size=(4, 2)))
        build = lambda: T.matmul(a, b)
        for x in (a, b):
            assert max_rel_err(grad_of(build, x), fd_of(build, x)) < 1e-6

    def test_batched_gradient(self, rng):
        a = Tensor(rng.normal(size=(2, 3, 4)))
        b = Tensor(rng.normal(size=(4, 5)))
        build = lambda: T.matmul(a, b)
        for x in (a, b):
            assert max_rel_err(grad_of(build, x), fd_of(build, x)) < 1e-6


class TestSoftmax:
    def test_uniform_input(self):
        out = T.softmax(Tensor([0.0, 0.0, 0.0]), axis=0)
        assert np.allclose(out.data, 1.0 / 3.0)

    def test_large_input_no_overflow(self):
        out = T.softmax(Tensor([1000.0, 0.0]), axis=0)
        assert np.isfinite(out.data).all()
        assert out.data[0] == pytest.approx(1.0)

    def test_slices_sum_to_one(self, rng):
        x = Tensor(rng.normal(scale=50.0, size=(4, 7)))
        sums = T.softmax(x, axis=1).data.sum(axis=1)
        assert np.abs(sums - 1.0).max() < 1e-9

    def test_gradient_matches_central_difference(self, rng):
        x = Tensor(rng.normal(size=(2, 5)))
        w = Tensor(rng.normal(size=(2, 5)))
        build = lambda: T.mul(T.softmax(x, axis=1), w)
        assert max_rel_err(grad_of(build, x), fd_of(build, x)) < 1e-6

    def test_log_softmax_gradient(self, rng):
        x = Tensor(rng.normal(size=(3, 4)))
        w = Tensor(rng.normal(size=(3, 4)))
        build = lambda: T.mul(T.log_softmax(x, axis=1), w)
        assert max_rel_err(grad_of(build, x), fd_of(build, x)) < 1e-6


class TestConv1d:
    def test_identity_kernel(self, rng):
        x = Tensor(rng.normal(size=(6, 3)))
        kern = Tensor(np.eye(3)[None, :, :])  # k=1, identity over channels
        out = T.conv1d(x, kern, stride=1, padding=0)
        assert np.allclose(out.data, x.data)

    def test_hand_unrolled(self):
        x = Tensor(np.array([[1.0], [2.0], [3.0], [4.0]]))
        kern = Tensor(np.ones((3, 1, 1)))
        out = T.conv1d(x, kern, stride=1, padding=1)
        assert out.data.ravel().tolist() == [3.0, 6.0, 9.0, 7.0]

    def test_stride2_length(self, rng):
        x = Tensor(rng.normal(size=(8, 2)))
        kern = Tensor(rng.normal(size=(3, 2, 5)))
        assert T.conv1d(x, kern, stride=2, padding=1).shape == (4, 5)

    def test_empty_output_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            T.conv1d(Tensor(np.zeros((2, 1))), Tensor(np.zeros((5, 1, 1))))

    @pytest.mark.parametrize("stride,padding", [(1, 1), (2, 1), (1, 0)])
    def test_gradient_matches_central_difference(self, rng, stride, padding):
        x = Tensor(rng.normal(size=(7, 3)))
        kern = Tensor(rng.normal(size=(3, 3, 4)))
        bias = Tensor(rng.normal(size=(4,)))
        build = lambda: T.conv1d(x, kern, bias=bias, stride=stride, padding=padding)
        for p in (x, kern, bias):
            assert max_rel_err(grad_of(build, p), fd_of(build, p)) < 1e-6

    def test_depthwise_gradient(self, rng):
        x = Tensor(rng.normal(size=(6, 4)))
        kern = Tensor(rng.normal(size=(5, 4)))
        build = lambda: T.depthwise_conv1d(x, kern)
        for p in (x, kern):
            assert max_rel_err(grad_of(build, p), fd_of(build, p)) < 1e-6


class TestElementwise:
    def test_sigmoid_symmetry_point(self):
        assert T.sigmoid(Tensor([0.0])).data[0] == 0.5

    def test_sigmoid_open_interval(self):
        out = T.sigmoid(Tensor([-30.0, 30.0])).data
        assert 0.0 < out[0] < 1.0 and 0.0 < out[1] < 1.0

    def test_sigmoid_extreme_inputs_stay_finite(self):
        out = T.sigmoid(Tensor([-800.0, 800.0])).data
        assert np.isfinite(out).all()
        assert (out >= 0.0).all() and (out <= 1.0).all()

    def test_relu_definition(self):
        out = T.relu(Tensor([-3.0, 3.0]))
        assert out.data.tolist() == [0.0, 3.0]

    def test_mul_gradient(self, rng):
        a = Tensor(rng.normal(size=(4, 4)))
        b = Tensor(rng.normal(size=(4, 4)))
        build = lambda: T.mul(a, b)
        for x in (a, b):
            assert max_rel_err(grad_of(build, x), fd_of(build, x)) < 1e-6

    def test_add_shape_mismatch(self):
        with pytest.raises(ValueError, match="broadcast"):
            T.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))

    @pytest.mark.parametrize("op", [T.add, T.sub, T.relu, T.sigmoid])
    def test_unary_binary_gradients(self, rng, op):
        a = Tensor(rng.normal(size=(3, 5)))
        b = Tensor(rng.normal(size=(3, 5)))
        build = (lambda: op(a)) if op in (T.relu, T.sigmoid) else (lambda: op(a, b))
        assert max_rel_err(grad_of(build, a), fd_of(build, a)) < 1e-6

    def test_bias_broadcast_gradient(self, rng):
        x = Tensor(rng.normal(size=(4, 3)))
        b = Tensor(rng.normal(size=(3,)))
        build = lambda: T.add(x, b)
        assert max_rel_err(grad_of(build, b), fd_of(build, b)) < 1e-6

    def test_scale_gradient(self, rng):
        x = Tensor(rng.normal(size=(3, 3)))
        build = lambda: T.scale(x, -2.5)
        assert max_rel_err(grad_of(build, x), fd_of(build, x)) < 1e-6


class TestLayernorm:
    def test_constant_slice(self):
        out = T.layernorm(Tensor([[5.0, 5.0, 5.0]]))
        assert np.allclose(out.data, 0.0)

    def test_already_normalized(self):
        out = T.layernorm(Tensor([[1.0, -1.0]]), eps=1e-5)
        assert np.allclose(out.data, [[1.0, -1.0]], atol=1e-5)

    def test_singleton_axis_rejected(self):
        with pytest.raises(ValueError, match=">= 2"):
            T.layernorm(Tensor([[1.0]]))

    def test_gradient_matches_central_difference(self, rng):
        x = Tensor(rng.normal(size=(2, 6)))
        w = Tensor(rng.normal(size=(2, 6)))
        build = lambda: T.mul(T.layernorm(x), w)
        assert max_rel_err(grad_of(build, x), fd_of(build, x)) < 1e-5


class TestBackward:
    def test_sum_gradient_is_ones(self, rng):
        x = Tensor(rng.normal(size=(3, 2)))
        with Graph():
            loss = x.sum()
        backward(loss)
        assert np.array_equal(x.grad, np.ones((3, 2)))

    def test_quadratic(self):
        x = Tensor([1.0, 2.0])
        with Graph():
            loss = T.mul(x, x).sum()
        backward(loss)
        assert x.grad.tolist() == [2.0, 4.0]

    def test_non_scalar_rejected(self, rng):
        x = Tensor(rng.normal(size=(3,)))
        with Graph() as g:
            y = T.relu(x)
        with pytest.raises(ValueError, match="scalar"):
            g.backward(y)

    def test_detached_loss_rejected(self):
        loss = Tensor(1.0)
        with pytest.raises(ValueError, match="graph"):
            backward(loss)

    def test_shared_parameter_accumulates(self, rng):
        # x feeds two branches; its gradient is the sum of both contributions
        x = Tensor(rng.normal(size=(2, 2)))
        build = lambda: T.add(T.mul(x, x), T.scale(x, 3.0))
        assert max_rel_err(grad_of(build, x), fd_of(build, x)) < 1e-6

    def test_unreachable_parameter_keeps_zero_grad(self, rng):
        x = Tensor(rng.normal(size=(2,)))
        other = Tensor(rng.normal(size=(2,)))
        with Graph():
            T.relu(other)  # recorded but not on the loss path
            loss = x.sum()
        backward(loss)
        assert np.array_equal(other.grad, np.zeros(2))

    def test_no_graph_means_no_recording(self):
        x = Tensor([1.0, 2.0])
        y = T.relu(x)
        assert y._graph is None and y.node_id is None


class TestReshapeViews:
    def test_concat_reshape_transpose_rows_pick_gradients(self, rng):
        a = Tensor(rng.normal(size=(3, 4)))
        b = Tensor(rng.normal(size=(2, 4)))
        idx = np.array([0, 2, 2])
        pick_idx = np.array([1, 0, 3, 2, 1])

        def build():
            c = T.concat([a, b], axis=0)                      # [5, 4]
            r = T.reshape(T.transpose(c, (1, 0)), (5, 4))     # shuffle layout
            gathered = T.rows(r, idx)                         # [3, 4]
            picked = T.pick(r, pick_idx)                      # [5]
            return T.add(gathered.sum(keepdims=True).mean(), picked.sum(keepdims=True))

        for x in (a, b):
            assert max_rel_err(grad_of(build, x), fd_of(build, x)) < 1e-6

    def test_reduce_axis_gradients(self, rng):
        x = Tensor(rng.normal(size=(3, 4)))
        build = lambda: T.mul(x.mean(axis=1, keepdims=True), x.sum(axis=1, keepdims=True))
        assert max_rel_err(grad_of(build, x), fd_of(build, x)) < 1e-6


class TestDeterminism:
    def test_bit_identical_forward_backward(self):
        def run():
            rng = np.random.default_rng(7)
            x = Tensor(rng.normal(size=(5, 3)))
            w = Tensor(rng.normal(size=(3, 3)))
            with Graph():
                loss = T.mul(T.softmax(T.matmul(x, w), axis=1),
                             T.sigmoid(x @ w)).sum()
            backward(loss)
            return loss.item(), x.grad.copy(), w.grad.copy()

        l1, gx1, gw1 = run()
        l2, gx2, gw2 = run()
        assert l1 == l2
        assert np.array_equal(gx1, gx2) and np.array_equal(gw1, gw2)

    def test_finite_outputs_on_finite_inputs(self, rng):
        x = Tensor(rng.normal(scale=100.0, size=(6, 6)))
        out = T.log_softmax(T.layernorm(T.sigmoid(T.matmul(x, x))), axis=1)
        assert np.isfinite(out.data).all()


class TestAdamW:
    def test_zero_grad_zero_decay_is_fixed_point(self):
        p = Tensor([1.5, -2.0])
        opt = AdamW({"p": p}, lr=0.1, weight_decay=0.0)
        opt.step()
        assert p.data.tolist() == [1.5, -2.0]
        assert opt.step_count == 1

    def test_first_step_magnitude_is_lr(self):
        # bias correction makes the very first update ~= lr for constant grad 1
        p = Tensor([0.0])
        opt = AdamW({"p": p}, lr=0.01, eps=1e-8, weight_decay=0.0)
        p._accum(np.array([1.0]))
        opt.step()
        assert p.data[0] == pytest.approx(-0.01, rel=1e-6)

    def test_decoupled_decay(self):
        p = Tensor([2.0])
        opt = AdamW({"p": p}, lr=0.01, weight_decay=0.1)
        opt.step()
        assert p.data[0] == pytest.approx(2.0 * (1.0 - 0.001))

    def test_zero_grad_clears_buffers(self):
        p = Tensor([1.0])
        p._accum(np.array([5.0]))
        opt = AdamW({"p": p})
        opt.zero_grad()
        assert np.array_equal(p.grad, [0.0])

    def test_parameter_init_range(self):
        rng = np.random.default_rng(0)
        p = T.parameter(rng, (50, 16), fan_in=16)
        assert np.abs(p.data).max() <= 0.25
