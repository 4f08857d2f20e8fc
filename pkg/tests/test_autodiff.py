"""Tape correctness: frozen hand values plus finite-difference oracles."""

import numpy as np
import pytest

from ibol_lab.autodiff import Adam, ParamVector, Tensor, concat, grad_check, log_mean_exp


class TestLogMeanExp:
    def test_single_value_is_identity(self):
        for c in (-3.0, 0.0, 17.5):
            assert log_mean_exp([c]) == pytest.approx(c, abs=1e-12)

    def test_equal_values(self):
        assert log_mean_exp([2.5, 2.5, 2.5]) == pytest.approx(2.5, abs=1e-12)

    def test_two_values(self):
        # exp(0)=1, exp(log 3)=3 -> mean 2.
        assert log_mean_exp([0.0, np.log(3.0)]) == pytest.approx(np.log(2.0), abs=1e-12)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            log_mean_exp([])

    def test_bounds_and_jensen(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            v = rng.normal(scale=5.0, size=rng.integers(1, 20))
            lme = log_mean_exp(v)
            assert v.max() - np.log(v.size) - 1e-12 <= lme <= v.max() + 1e-12
            assert lme >= v.mean() - 1e-12

    def test_large_values_stable(self):
        assert np.isfinite(log_mean_exp([1000.0, 1000.0]))

    def test_tensor_axis_version_matches(self):
        rng = np.random.default_rng(7)
        m = rng.normal(size=(5, 9))
        got = Tensor(m).log_mean_exp(axis=1).data
        want = np.array([log_mean_exp(row) for row in m])
        np.testing.assert_allclose(got, want, atol=1e-12)


class TestBackwardBasics:
    def test_quadratic_gradient(self):
        pv = ParamVector()
        x = pv.add("x", np.array([1.0, -2.0, 3.0]))
        loss = (x.square().sum()) * 0.5
        loss.backward()
        np.testing.assert_allclose(x.grad, x.data)

    def test_constant_function_zero_gradient(self):
        pv = ParamVector()
        pv.add("x", np.array([1.0, 2.0]))
        err = grad_check(lambda: Tensor(np.array(3.14)) * 1.0 + 0.0, pv)
        assert err == 0.0

    def test_broadcast_add_bias(self):
        pv = ParamVector()
        b = pv.add("b", np.array([0.5, -0.5]))
        x = Tensor(np.ones((4, 2)))
        loss = (x + b).sum()
        loss.backward()
        np.testing.assert_allclose(b.grad, [4.0, 4.0])

    def test_diamond_graph_accumulates_once(self):
        pv = ParamVector()
        x = pv.add("x", np.array([2.0]))
        y = x * x + x * 3.0  # dy/dx = 2x + 3 = 7
        y.sum().backward()
        np.testing.assert_allclose(x.grad, [7.0])

    def test_matmul_gradients(self):
        rng = np.random.default_rng(0)
        pv = ParamVector()
        w = pv.add("w", rng.normal(size=(3, 2)))
        a = rng.normal(size=(5, 3))
        err = grad_check(lambda: (Tensor(a) @ w).tanh().square().sum(), pv)
        assert err < 1e-6

    def test_reductions_with_axis(self):
        rng = np.random.default_rng(1)
        pv = ParamVector()
        x = pv.add("x", rng.normal(size=(4, 3)))
        err = grad_check(lambda: (x.mean(axis=0).square().sum()
                                  + x.sum(axis=1).mean()), pv)
        assert err < 1e-6

    def test_unary_chain(self):
        rng = np.random.default_rng(2)
        pv = ParamVector()
        x = pv.add("x", rng.uniform(0.2, 0.8, size=6))
        def fn():
            t = x
            return (t.log().exp().sigmoid().softplus().sum()
                    + t.atanh().sum() + t.gammaln().sum()
                    + t.relu().sum() + t.pow(1.7).sum())
        assert grad_check(fn, pv) < 1e-6

    def test_clip_gradient_masks_outside(self):
        pv = ParamVector()
        x = pv.add("x", np.array([-2.0, 0.5, 3.0]))
        x.clip(-1.0, 1.0).sum().backward()
        np.testing.assert_allclose(x.grad, [0.0, 1.0, 0.0])

    def test_concat_narrow_reshape(self):
        rng = np.random.default_rng(3)
        pv = ParamVector()
        a = pv.add("a", rng.normal(size=(2, 3)))
        b = pv.add("b", rng.normal(size=(2, 2)))
        def fn():
            c = concat([a, b], axis=1)
            return (c.narrow(1, 1, 3).reshape(6).square().sum()
                    + c.narrow(-1, 0, 2).sum())
        assert grad_check(fn, pv) < 1e-6

    def test_log_mean_exp_gradient(self):
        rng = np.random.default_rng(4)
        pv = ParamVector()
        v = pv.add("v", rng.normal(size=(3, 5)))
        assert grad_check(lambda: v.log_mean_exp(axis=1).sum(), pv) < 1e-6


class TestGradCheckContract:
    def test_eps_out_of_range_rejected(self):
        pv = ParamVector()
        pv.add("x", np.array([1.0]))
        with pytest.raises(ValueError):
            grad_check(lambda: pv["x"].sum(), pv, eps=1e-2)

    def test_non_finite_function_value(self):
        pv = ParamVector()
        x = pv.add("x", np.array([0.0]))
        with pytest.raises(FloatingPointError):
            grad_check(lambda: x.log().sum(), pv)


class TestParamVector:
    def test_grad_shapes_match(self):
        rng = np.random.default_rng(5)
        pv = ParamVector()
        pv.add("w", rng.normal(size=(4, 3)))
        pv.add("b", rng.normal(size=3))
        for _, t in pv:
            assert t.grad.shape == t.data.shape

    def test_duplicate_name_rejected(self):
        pv = ParamVector()
        pv.add("w", np.zeros(2))
        with pytest.raises(ValueError):
            pv.add("w", np.zeros(2))

    def test_clone_and_polyak(self):
        pv = ParamVector()
        pv.add("w", np.full(3, 1.0))
        target = pv.clone()
        pv["w"].data[...] = 2.0
        target.polyak_from(pv, tau=0.005)
        np.testing.assert_allclose(target["w"].data, 0.995 * 1.0 + 0.005 * 2.0)

    def test_load_shape_mismatch(self):
        pv = ParamVector()
        pv.add("w", np.zeros(3))
        with pytest.raises(ValueError):
            pv.load_data({"w": np.zeros((3, 1))})

    def test_check_finite(self):
        pv = ParamVector()
        pv.add("w", np.zeros(3))
        pv["w"].data[1] = np.nan
        with pytest.raises(FloatingPointError):
            pv.check_finite()


class TestAdam:
    def test_descends_quadratic(self):
        pv = ParamVector()
        x = pv.add("x", np.array([5.0, -4.0]))
        opt = Adam(pv, lr=0.1)
        for _ in range(500):
            pv.zero_grad()
            loss = x.square().sum() * 0.5
            loss.backward()
            opt.step()
        np.testing.assert_allclose(x.data, 0.0, atol=1e-3)

    def test_first_step_is_lr_sized(self):
        pv = ParamVector()
        x = pv.add("x", np.array([10.0]))
        opt = Adam(pv, lr=0.01)
        pv.zero_grad()
        (x * 3.0).sum().backward()
        opt.step()
        # Adam's first update has magnitude ~= lr regardless of gradient scale.
        np.testing.assert_allclose(x.data, [10.0 - 0.01], atol=1e-6)
