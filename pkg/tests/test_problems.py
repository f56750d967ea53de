import numpy as np
import pytest

from dadm.nets import ContractError
from dadm.problems import (bounded_example, get_problem, pde_residual,
                           unbounded_example, BsdeProblem)


class TestBoundedExample:
    def test_value_d1_T2(self):
        prob = bounded_example(1, T=2.0)
        u0 = prob.exact_u(0.0, np.array([1.0]))
        assert u0 == pytest.approx(np.e * np.cos(1.0))
        assert u0 == pytest.approx(1.468693, abs=1e-6)

    def test_value_d10_T1(self):
        prob = bounded_example(10, T=1.0)
        u0 = prob.exact_u(0.0, np.ones(10))
        assert u0 == pytest.approx(np.exp(0.5) * np.cos(10.0))
        assert u0 == pytest.approx(-1.3834, abs=1e-4)

    def test_terminal_consistency(self):
        prob = bounded_example(3, T=1.5)
        xs = np.random.default_rng(0).normal(size=(1000, 3))
        np.testing.assert_allclose(prob.exact_u(prob.T, xs), prob.g(xs),
                                   atol=1e-12)

    def test_exact_gradient_matches_fd(self):
        prob = bounded_example(2, T=1.0)
        xs = np.random.default_rng(1).normal(size=(50, 2))
        grad = prob.exact_grad_u(0.3, xs)
        h = 1e-6
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (prob.exact_u(0.3, xs + e) - prob.exact_u(0.3, xs - e)) / (2 * h)
            np.testing.assert_allclose(grad[:, i], fd, atol=1e-6)

    def test_generator_partials_match_fd(self):
        prob = bounded_example(2, T=1.0)
        gen = np.random.default_rng(2)
        x = gen.normal(size=(20, 2))
        y = gen.normal(size=20)
        z = gen.normal(size=(20, 2))
        h = 1e-6
        fd_y = (prob.f(0.4, x, y + h, z) - prob.f(0.4, x, y - h, z)) / (2 * h)
        np.testing.assert_allclose(prob.f_dy(0.4, x, y, z), fd_y, atol=1e-6)
        for l in range(2):
            e = np.zeros(2)
            e[l] = h
            fd_z = (prob.f(0.4, x, y, z + e) - prob.f(0.4, x, y, z - e)) / (2 * h)
            np.testing.assert_allclose(prob.f_dz(0.4, x, y, z)[:, l], fd_z,
                                       atol=1e-6)

    def test_exact_z_scaling(self):
        # Z = (grad u) sigma with sigma = (sigma/sqrt(d)) I
        prob = bounded_example(4, T=1.0, sigma=0.8)
        x = np.ones((1, 4))
        z = prob.exact_z(0.0, x)
        grad = prob.exact_grad_u(0.0, x)
        np.testing.assert_allclose(z, grad * 0.8 / 2.0)


class TestUnboundedExample:
    def test_value_d1(self):
        prob = unbounded_example(1, T=1.0)
        u0 = prob.exact_u(0.0, np.array([0.5]))
        assert u0 == pytest.approx(0.5 + np.cos(0.5))
        assert u0 == pytest.approx(1.377583, abs=1e-6)

    def test_value_d8(self):
        prob = unbounded_example(8, T=1.0)
        u0 = prob.exact_u(0.0, np.full(8, 0.5))
        assert u0 == pytest.approx(0.5 + np.cos(18.0))
        assert u0 == pytest.approx(1.160317, abs=1e-6)

    def test_terminal_consistency(self):
        prob = unbounded_example(4, T=1.0)
        xs = np.random.default_rng(3).normal(size=(1000, 4))
        np.testing.assert_allclose(prob.exact_u(prob.T, xs), prob.g(xs),
                                   atol=1e-12)

    def test_exact_gradient_matches_fd_off_kinks(self):
        prob = unbounded_example(3, T=1.0)
        gen = np.random.default_rng(4)
        xs = gen.normal(size=(100, 3))
        xs = xs[np.all(np.abs(xs) > 1e-3, axis=1)]
        grad = prob.exact_grad_u(0.2, xs)
        h = 1e-7
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            fd = (prob.exact_u(0.2, xs + e) - prob.exact_u(0.2, xs - e)) / (2 * h)
            np.testing.assert_allclose(grad[:, i], fd, atol=1e-6)


class TestPdeResidual:
    def test_heat_equation_polynomial(self):
        # u = |x|^2 + 2 d (T - t) solves u_t + tr(D^2 u) = 0 with sigma=sqrt(2) I
        d = 3
        prob = BsdeProblem(
            d=d, T=1.0, x0=np.zeros(d),
            drift=lambda t, x: np.zeros_like(np.asarray(x, dtype=float)),
            diffusion=lambda t, x: np.sqrt(2.0) * np.eye(d),
            f=lambda t, x, y, z: np.zeros(np.shape(y)),
            g=lambda x: np.sum(np.asarray(x) ** 2, axis=-1),
            exact_u=lambda t, x: np.sum(np.asarray(x) ** 2, axis=-1)
            + 2.0 * d * (1.0 - t))
        # central differences are exact for quadratics, so a coarse step
        # avoids the 1/h^2 roundoff amplification
        res = pde_residual(prob, 0.5, np.array([0.3, -0.2, 1.1]), fd_step=1e-2)
        assert abs(res.value) <= 1e-8

    def test_bounded_example_solves_pde(self):
        prob = bounded_example(1, T=1.0)
        res = pde_residual(prob, 0.5, np.array([0.3]), fd_step=1e-4)
        assert abs(res.value) <= 1e-5

    def test_bounded_example_d_scaled(self):
        prob = bounded_example(10, T=1.0)
        x = np.random.default_rng(5).normal(size=10)
        res = pde_residual(prob, 0.4, x, fd_step=1e-4)
        assert abs(res.value) <= 1e-5

    def test_unbounded_example_smooth_region(self):
        prob = unbounded_example(2, T=1.0)
        res = pde_residual(prob, 0.5, np.array([0.7, 1.2]), fd_step=1e-4)
        assert abs(res.value) <= 1e-5

    def test_derived_k_at_50_random_points(self):
        gen = np.random.default_rng(6)
        for prob in (unbounded_example(1), unbounded_example(3)):
            count = 0
            while count < 25:
                t = gen.uniform(0.05, 0.95)
                x = gen.normal(size=prob.d)
                if np.any(np.abs(x) < 1e-3):     # kink band excluded
                    continue
                res = pde_residual(prob, t, x, fd_step=1e-4)
                assert abs(res.value) <= 1e-4
                count += 1

    def test_requires_exact_solution(self):
        prob = BsdeProblem(
            d=1, T=1.0, x0=np.zeros(1),
            drift=lambda t, x: np.zeros_like(np.asarray(x, dtype=float)),
            diffusion=lambda t, x: np.eye(1),
            f=lambda t, x, y, z: np.zeros(np.shape(y)),
            g=lambda x: np.sum(x, axis=-1))
        with pytest.raises(ContractError):
            pde_residual(prob, 0.5, np.zeros(1))


class TestSelection:
    def test_lookup_by_key(self):
        prob = get_problem("bounded", 2, T=1.5)
        assert prob.name == "bounded" and prob.d == 2 and prob.T == 1.5

    def test_overrides(self):
        prob = get_problem("bounded", 1, T=2.0, mu=0.5, sigma=2.0, x0=0.3)
        np.testing.assert_allclose(prob.x0, [0.3])
        np.testing.assert_allclose(prob.drift(0.0, np.zeros((1, 1))), 0.5)

    def test_unknown_key(self):
        with pytest.raises(ContractError):
            get_problem("mystery", 1)
