"""Independent oracles and property checks: finite-difference gradient
verification, the input-gradient bound for weight-constrained nets, the
Gauss-Hermite conditional-expectation oracle and the L2 time-regularity
diagnostic for Z."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nets as nn
from .nets import ContractError, ShallowNet, WeightConstraint
from .problems import BsdeProblem
from .sde import Rng, TimeGrid, make_uniform_grid, simulate_paths


@dataclass
class GradCheckReport:
    max_rel_error: float
    max_abs_error: float
    worst_index: int
    step: float

    def passed(self, tol: float) -> bool:
        return self.max_rel_error <= tol


def finite_diff_check(loss_function, params: ShallowNet, step: float = 1e-6) -> GradCheckReport:
    """Compare the analytic gradient of loss_function against central finite
    differences, coordinate by coordinate.

    loss_function maps a ShallowNet to (loss, ParamGradient) and must be
    deterministic (evaluate it on a frozen batch).
    """
    _, grad = loss_function(params)
    analytic = grad.get_flat()
    theta = params.get_flat()
    fd = np.empty_like(theta)
    probe = params.copy()
    for k in range(theta.size):
        h = step * (1.0 + abs(theta[k]))
        tp = theta.copy(); tp[k] += h
        probe.set_flat(tp)
        lp = loss_function(probe)[0]
        tm = theta.copy(); tm[k] -= h
        probe.set_flat(tm)
        lm = loss_function(probe)[0]
        if not (np.isfinite(lp) and np.isfinite(lm)):
            raise ContractError(f"non-finite loss probing coordinate {k}")
        fd[k] = (lp - lm) / (2.0 * h)
    abs_err = np.abs(analytic - fd)
    scale = np.maximum(np.abs(fd), max(1e-6 * np.abs(fd).max(initial=0.0), 1e-10))
    rel = abs_err / scale
    worst = int(np.argmax(rel))
    return GradCheckReport(float(rel[worst]), float(abs_err.max()), worst, step)


def derivative_bound_check(net: ShallowNet, constraint: WeightConstraint,
                           n_probes: int = 10_000, seed: int = 0,
                           probe_scale: float = 3.0):
    """Check sup_x |D_x U| <= gamma^2 for a projected tanh net by random probing.

    The bound is an algebraic identity (|D_x U| <= max_i |a_i| sum_i |c_i|
    sup|rho'| with sup|tanh'| = 1), so this can never fail on a projected net.
    Returns (ok, worst observed |D_x U|).
    """
    gen = np.random.Generator(np.random.Philox(key=seed))
    xs = gen.normal(0.0, probe_scale, size=(n_probes, net.input_dim))
    D = nn.grad_input(net, xs)[:, 0, :]
    worst = float(np.linalg.norm(D, axis=-1).max())
    return worst <= constraint.gamma ** 2 + 1e-12, worst


def conditional_expectation_oracle(problem: BsdeProblem, grid: TimeGrid, i: int,
                                   x: float, n_nodes: int = 64) -> float:
    """E[g(X_N) | X_i = x] for a d=1 problem with constant coefficients and
    f = 0, by Gauss-Hermite quadrature of the Gaussian Euler transition."""
    if problem.d != 1:
        raise ContractError("oracle supports d = 1 only")
    t_i = float(grid.times[i])
    x_arr = np.array([[float(x)]])
    b0 = float(np.asarray(problem.drift(t_i, x_arr)).ravel()[0])
    s0 = float(np.asarray(problem.diffusion(t_i, x_arr)).ravel()[0])
    # constant-coefficient precondition: probe at another state/time
    t_mid = float(grid.times[min(i + 1, grid.n_steps)])
    x_probe = x_arr + 1.234
    if not (np.allclose(problem.drift(t_mid, x_probe), b0)
            and np.allclose(np.asarray(problem.diffusion(t_mid, x_probe)).ravel()[0], s0)):
        raise ContractError("oracle requires constant coefficients")
    tau = grid.horizon - t_i
    if tau <= 0.0:
        return float(np.asarray(problem.g(x_arr)).ravel()[0])
    nodes, weights = np.polynomial.hermite.hermgauss(n_nodes)
    pts = (float(x) + b0 * tau + s0 * np.sqrt(2.0 * tau) * nodes)[:, None]
    vals = np.asarray(problem.g(pts), dtype=float).ravel()
    return float(np.sum(weights * vals) / np.sqrt(np.pi))


@dataclass
class ZRegularityEstimate:
    value: float
    n_steps: int
    n_paths: int
    sub_points: int


def z_regularity_estimate(problem: BsdeProblem, grid: TimeGrid, M: int, rng: Rng,
                          sub_points: int = 20) -> ZRegularityEstimate:
    """Monte Carlo estimate of the L2 time-regularity of Z over the grid,
    using the exact Z and replacing its conditional time-average on each
    interval by the pathwise sub-grid average."""
    if problem.exact_grad_u is None:
        raise ContractError("z_regularity_estimate requires an exact solution")
    N = grid.n_steps
    fine = make_uniform_grid(N * sub_points, grid.horizon)
    if not np.allclose(fine.times[::sub_points], grid.times):
        raise ContractError("sub-grid refinement requires a uniform grid")
    batch = simulate_paths(problem, fine, M, rng)
    total = np.zeros(M)
    for i in range(N):
        lo = i * sub_points
        zs = []
        for j in range(lo, lo + sub_points):
            t = float(fine.times[j])
            zs.append(problem.exact_z(t, batch.X[:, j]))
        zs = np.stack(zs, axis=1)               # (M, sub, d)
        zbar = zs.mean(axis=1, keepdims=True)
        dt_sub = fine.steps[lo]
        total += np.sum((zs - zbar) ** 2, axis=(1, 2)) * dt_sub
    return ZRegularityEstimate(float(total.mean()), N, M, sub_points)
