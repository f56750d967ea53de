"""The four solver schemes: DADM (multistep, Z by differentiating the next
step's trained net), DBDP1 (separate Y and Z nets per step), DBDP2 (one-step,
Z by differentiating the net being trained) and the global Deep BSDE scheme.

All losses are empirical means over a path batch and return their exact
parameter gradients; training uses fresh batches each iteration.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import nets as nn
from .nets import ContractError, ParamGradient, ShallowNet
from .optim import (LossSmoother, TrainConfig, make_state, scheduler_update,
                    step, warm_start)
from .problems import BsdeProblem
from .sde import PathBatch, Rng, TimeGrid, simulate_paths

BLOWUP_FACTOR = 1e6


@dataclass
class TrainedStack:
    """Trained nets U_0..U_{N-1} plus the terminal representation of g.

    The Z accessor realises Z_i(x) = sigma(t_i, x)^T D_x U_{i+1}(x) for
    i < N-1 and sigma^T grad g at the last step (analytic gradient when the
    problem carries one, otherwise the gradient of a fitted terminal net).
    """

    problem: BsdeProblem
    grid: TimeGrid
    nets: List[Optional[ShallowNet]]
    terminal_net: Optional[ShallowNet] = None

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    def _terminal_value(self, x):
        if self.terminal_net is not None:
            return nn.forward(self.terminal_net, x)[..., 0]
        return self.problem.g(x)

    def _terminal_grad(self, x):
        if self.problem.grad_g is not None:
            return self.problem.grad_g(x)
        if self.terminal_net is not None:
            return nn.grad_input(self.terminal_net, x)[..., 0, :]
        raise ContractError("no terminal gradient available")

    def u(self, i: int, x) -> np.ndarray:
        """U_i(x) for i in 0..N; i = N is the terminal condition."""
        if i == self.n_steps:
            return self._terminal_value(x)
        net = self.nets[i]
        if net is None:
            raise ContractError(f"step {i} is not trained")
        return nn.forward(net, x)[..., 0]

    def z(self, i: int, x) -> np.ndarray:
        """Z_i(x) = sigma(t_i, x)^T D_x U_{i+1}(x), total on 0..N-1."""
        if not 0 <= i < self.n_steps:
            raise ContractError("step index out of range")
        t = float(self.grid.times[i])
        if i == self.n_steps - 1:
            grad = self._terminal_grad(x)
        else:
            net = self.nets[i + 1]
            if net is None:
                raise ContractError(f"step {i + 1} is not trained")
            grad = nn.grad_input(net, x)[..., 0, :]
        return self.problem.sigma_t_dot(t, x, grad)


@dataclass
class SolveResult:
    y0: float
    z0: np.ndarray
    step_losses: List[float]            # final loss per trained step (backward order)
    converged: bool
    wall_time: float
    loss_history: List[np.ndarray] = field(default_factory=list)
    scheme: str = ""


def multistep_target(stack: TrainedStack, batch: PathBatch, i: int) -> np.ndarray:
    """Per-path running target A_i = g(X_N) + sum_{j>i} [f_j dt_j - Z_j . dW_j],
    computed by one backward sweep over the frozen nets."""
    X, dW = batch.X, batch.dW
    times, steps = stack.grid.times, stack.grid.steps
    N = stack.n_steps
    prob = stack.problem
    A = stack._terminal_value(X[:, N])
    for j in range(N - 1, i, -1):
        xj = X[:, j]
        yj = stack.u(j, xj)
        zj = stack.z(j, xj)
        A = A + prob.f(float(times[j]), xj, yj, zj) * steps[j] \
            - np.sum(zj * dW[:, j], axis=-1)
    return A


def dadm_empirical_loss(i: int, candidate: ShallowNet, stack: TrainedStack,
                        batch: PathBatch):
    """Multistep loss at step i and its exact parameter gradient.

    Z_i is frozen (built from the already-trained U_{i+1}), so the candidate's
    parameters enter only through U_i and the y-argument of f.
    """
    for j in range(i + 1, stack.n_steps):
        if stack.nets[j] is None:
            raise ContractError(f"future step {j} not trained")
    prob = stack.problem
    t = float(stack.grid.times[i])
    dt = stack.grid.steps[i]
    xi = batch.X[:, i]
    M = batch.n_paths

    A = multistep_target(stack, batch, i)
    zi = stack.z(i, xi)
    u = nn.forward(candidate, xi)[:, 0]
    fi = prob.f(t, xi, u, zi)
    r = A - u + fi * dt - np.sum(zi * batch.dW[:, i], axis=-1)
    loss = float(np.mean(r * r))

    dfdy = prob.f_dy(t, xi, u, zi)
    upstream = (-2.0 / M) * r * (1.0 - dt * dfdy)
    grad = nn.grad_params(candidate, xi, upstream[:, None])
    return loss, grad


def dbdp2_empirical_loss(i: int, candidate: ShallowNet, stack: TrainedStack,
                         batch: PathBatch):
    """One-step DBDP2 loss; Z uses the input gradient of the net being trained,
    so the parameter gradient includes the mixed d_theta d_x path."""
    prob = stack.problem
    t = float(stack.grid.times[i])
    dt = stack.grid.steps[i]
    xi = batch.X[:, i]
    dw = batch.dW[:, i]
    M = batch.n_paths

    target = stack.u(i + 1, batch.X[:, i + 1])
    u = nn.forward(candidate, xi)[:, 0]
    D = nn.grad_input(candidate, xi)[:, 0, :]
    z = prob.sigma_t_dot(t, xi, D)
    fi = prob.f(t, xi, u, z)
    r = target - u + fi * dt - np.sum(z * dw, axis=-1)
    loss = float(np.mean(r * r))

    dfdy = prob.f_dy(t, xi, u, z)
    dfdz = prob.f_dz(t, xi, u, z)
    up_u = (-2.0 / M) * r * (1.0 - dt * dfdy)
    w = dw - dt * dfdz
    sig = prob.sigma_at(t, xi)
    if sig.ndim == 2:
        v = w @ sig.T
    else:
        v = np.einsum("...jl,...l->...j", sig, w)
    v *= (-2.0 / M) * r[:, None]
    grad = nn.grad_params(candidate, xi, up_u[:, None])
    grad.add_(nn.grad_input_params(candidate, xi, v))
    return loss, grad


def dbdp1_empirical_loss(i: int, u_net: ShallowNet, z_net: ShallowNet,
                         stack: TrainedStack, batch: PathBatch):
    """One-step DBDP1 loss over a (U_i, Z_i) network pair; returns the loss
    and the gradients for both nets."""
    prob = stack.problem
    t = float(stack.grid.times[i])
    dt = stack.grid.steps[i]
    xi = batch.X[:, i]
    dw = batch.dW[:, i]
    M = batch.n_paths

    target = stack.u(i + 1, batch.X[:, i + 1])
    u = nn.forward(u_net, xi)[:, 0]
    z = nn.forward(z_net, xi)
    fi = prob.f(t, xi, u, z)
    r = target - u + fi * dt - np.sum(z * dw, axis=-1)
    loss = float(np.mean(r * r))

    dfdy = prob.f_dy(t, xi, u, z)
    dfdz = prob.f_dz(t, xi, u, z)
    up_u = (-2.0 / M) * r * (1.0 - dt * dfdy)
    up_z = (-2.0 / M) * r[:, None] * (dw - dt * dfdz)
    return loss, nn.grad_params(u_net, xi, up_u[:, None]), nn.grad_params(z_net, xi, up_z)


def deep_bsde_loss(u0_net: ShallowNet, z_nets: List[ShallowNet], problem: BsdeProblem,
                   grid: TimeGrid, batch: PathBatch):
    """Global terminal loss E|Y_N - g(X_N)|^2 of the controlled forward process,
    with gradients for the initial-value net and every Z net."""
    X, dW = batch.X, batch.dW
    times, steps = grid.times, grid.steps
    N = grid.n_steps
    M = batch.n_paths

    Y = nn.forward(u0_net, X[:, 0])[:, 0]
    cache = []
    for i in range(N):
        t = float(times[i])
        xi = X[:, i]
        zi = nn.forward(z_nets[i], xi)
        fi = problem.f(t, xi, Y, zi)
        cache.append((xi, Y, zi))
        Y = Y - fi * steps[i] + np.sum(zi * dW[:, i], axis=-1)
    r = Y - problem.g(X[:, N])
    loss = float(np.mean(r * r))

    lam = (2.0 / M) * r
    grads_z: List[Optional[ParamGradient]] = [None] * N
    for i in reversed(range(N)):
        t = float(times[i])
        xi, yi, zi = cache[i]
        dfdy = problem.f_dy(t, xi, yi, zi)
        dfdz = problem.f_dz(t, xi, yi, zi)
        up_z = lam[:, None] * (dW[:, i] - steps[i] * dfdz)
        grads_z[i] = nn.grad_params(z_nets[i], xi, up_z)
        lam = lam * (1.0 - steps[i] * dfdy)
    grad_u0 = nn.grad_params(u0_net, X[:, 0], lam[:, None])
    return loss, grad_u0, grads_z


def fit_terminal(problem: BsdeProblem, grid: TimeGrid, config: TrainConfig,
                 rng: Rng) -> ShallowNet:
    """Regression of a shallow net onto g(X_N); the fallback terminal
    representation when no analytic grad g is available."""
    m = config_hidden_width(config, problem.d)
    net = nn.init_params(problem.d, m, 1, nn.Activation(config_activation(config)),
                         rng.next_seed())
    state = make_state(config)
    smoother = LossSmoother()
    for _ in range(config.iterations):
        batch = simulate_paths(problem, grid, config.batch_size, rng)
        xN = batch.X[:, -1]
        u = nn.forward(net, xN)[:, 0]
        r = u - problem.g(xN)
        loss = float(np.mean(r * r))
        grad = nn.grad_params(net, xN, (2.0 / batch.n_paths) * r[:, None])
        scheduler_update(state, smoother.update(loss))
        step(state, net, grad)
    return net


def config_hidden_width(config: TrainConfig, d: int) -> int:
    return getattr(config, "hidden_width", None) or d + 10


def config_activation(config: TrainConfig) -> str:
    return getattr(config, "activation", None) or "tanh"


def _maybe_project(net: ShallowNet, theory_mode: bool, gamma) -> ShallowNet:
    if theory_mode:
        return nn.project_weights(net, nn.WeightConstraint(gamma))
    return net


def _finish(y0, z0, step_losses, history, t_start, scheme, diverged=False) -> SolveResult:
    finite = all(np.isfinite(l) for l in step_losses)
    converged = finite and not diverged
    return SolveResult(y0=float(y0), z0=np.asarray(z0, dtype=float),
                       step_losses=step_losses, converged=converged,
                       wall_time=time.perf_counter() - t_start,
                       loss_history=history, scheme=scheme)


def _train_single_net(loss_fn, net, config, n_iters, theory_mode, gamma):
    """Generic per-step loop: fresh batch, loss+grad, scheduler, update."""
    state = make_state(config)
    smoother = LossSmoother()
    hist = np.empty(n_iters)
    for it in range(n_iters):
        loss, grad = loss_fn(net)
        hist[it] = loss
        if not np.isfinite(loss):
            return net, hist[:it + 1], False
        scheduler_update(state, smoother.update(loss))
        step(state, net, grad)
        net = _maybe_project(net, theory_mode, gamma)
    blown = hist[-1] > BLOWUP_FACTOR * max(hist[0], 1e-12)
    return net, hist, not blown


def solve_dadm(problem: BsdeProblem, grid: TimeGrid, config: TrainConfig, rng: Rng,
               theory_mode: bool = False, gamma: float = 1.0):
    """Backward induction with the multistep loss and warm starts; returns the
    run summary and the trained stack."""
    t_start = time.perf_counter()
    N = grid.n_steps
    d = problem.d
    m = config_hidden_width(config, d)
    act = nn.Activation(config_activation(config))
    stack = TrainedStack(problem, grid, [None] * N)
    if problem.grad_g is None:
        stack.terminal_net = fit_terminal(problem, grid, config, rng)

    history: List[np.ndarray] = []
    step_losses: List[float] = []
    for i in reversed(range(N)):
        if i == N - 1:
            net = nn.init_params(d, m, 1, act, rng.next_seed())
            n_it = config.iterations
        else:
            net = warm_start(stack.nets[i + 1])
            n_it = config.subsequent_iterations

        def loss_fn(candidate, _i=i):
            batch = simulate_paths(problem, grid, config.batch_size, rng)
            return dadm_empirical_loss(_i, candidate, stack, batch)

        net, hist, ok = _train_single_net(loss_fn, net, config, n_it,
                                          theory_mode, gamma)
        history.append(hist)
        step_losses.append(float(hist[-1]))
        stack.nets[i] = net
        if not ok:
            return _finish(np.nan, np.full(d, np.nan), step_losses, history,
                           t_start, "dadm", diverged=True), stack

    x0 = problem.x0[None, :]
    y0 = stack.u(0, x0)[0]
    z0 = stack.z(0, x0)[0]
    return _finish(y0, z0, step_losses, history, t_start, "dadm"), stack


def solve_dbdp2(problem: BsdeProblem, grid: TimeGrid, config: TrainConfig, rng: Rng,
                theory_mode: bool = False, gamma: float = 1.0):
    """One-step backward induction where Z is the input gradient of the net
    being trained; returns the run summary and the trained stack."""
    t_start = time.perf_counter()
    N = grid.n_steps
    d = problem.d
    m = config_hidden_width(config, d)
    act = nn.Activation(config_activation(config))
    stack = TrainedStack(problem, grid, [None] * N)
    if problem.grad_g is None:
        stack.terminal_net = fit_terminal(problem, grid, config, rng)

    history: List[np.ndarray] = []
    step_losses: List[float] = []
    for i in reversed(range(N)):
        if i == N - 1:
            net = nn.init_params(d, m, 1, act, rng.next_seed())
            n_it = config.iterations
        else:
            net = warm_start(stack.nets[i + 1])
            n_it = config.subsequent_iterations

        def loss_fn(candidate, _i=i):
            batch = simulate_paths(problem, grid, config.batch_size, rng)
            return dbdp2_empirical_loss(_i, candidate, stack, batch)

        net, hist, ok = _train_single_net(loss_fn, net, config, n_it,
                                          theory_mode, gamma)
        history.append(hist)
        step_losses.append(float(hist[-1]))
        stack.nets[i] = net
        if not ok:
            return _finish(np.nan, np.full(d, np.nan), step_losses, history,
                           t_start, "dbdp2", diverged=True), stack

    x0 = problem.x0[None, :]
    y0 = stack.u(0, x0)[0]
    # DBDP2 reports Z_0 = sigma^T D_x U_0, the gradient of its own step net
    t0 = float(grid.times[0])
    z0 = problem.sigma_t_dot(t0, x0, nn.grad_input(stack.nets[0], x0)[:, 0, :])[0]
    return _finish(y0, z0, step_losses, history, t_start, "dbdp2"), stack


def solve_dbdp1(problem: BsdeProblem, grid: TimeGrid, config: TrainConfig, rng: Rng):
    """One-step backward induction training a scalar U net and a d-vector Z net
    jointly at every step."""
    t_start = time.perf_counter()
    N = grid.n_steps
    d = problem.d
    m = config_hidden_width(config, d)
    act = nn.Activation(config_activation(config))
    stack = TrainedStack(problem, grid, [None] * N)
    if problem.grad_g is None:
        stack.terminal_net = fit_terminal(problem, grid, config, rng)

    history: List[np.ndarray] = []
    step_losses: List[float] = []
    z_net_prev = None
    z0 = np.full(d, np.nan)
    for i in reversed(range(N)):
        if i == N - 1:
            u_net = nn.init_params(d, m, 1, act, rng.next_seed())
            z_net = nn.init_params(d, m, d, act, rng.next_seed())
            n_it = config.iterations
        else:
            u_net = warm_start(stack.nets[i + 1])
            z_net = warm_start(z_net_prev)
            n_it = config.subsequent_iterations

        u_state = make_state(config)
        z_state = make_state(config)
        smoother = LossSmoother()
        hist = np.empty(n_it)
        diverged = False
        for it in range(n_it):
            batch = simulate_paths(problem, grid, config.batch_size, rng)
            loss, g_u, g_z = dbdp1_empirical_loss(i, u_net, z_net, stack, batch)
            hist[it] = loss
            if not np.isfinite(loss):
                hist = hist[:it + 1]
                diverged = True
                break
            smooth = smoother.update(loss)
            scheduler_update(u_state, smooth)
            scheduler_update(z_state, smooth)
            step(u_state, u_net, g_u)
            step(z_state, z_net, g_z)
        history.append(hist)
        step_losses.append(float(hist[-1]))
        stack.nets[i] = u_net
        z_net_prev = z_net
        if i == 0:
            z0 = nn.forward(z_net, problem.x0[None, :])[0]
        if diverged or hist[-1] > BLOWUP_FACTOR * max(hist[0], 1e-12):
            return _finish(np.nan, np.full(d, np.nan), step_losses, history,
                           t_start, "dbdp1", diverged=True)

    y0 = stack.u(0, problem.x0[None, :])[0]
    return _finish(y0, z0, step_losses, history, t_start, "dbdp1")


def solve_deep_bsde(problem: BsdeProblem, grid: TimeGrid, config: TrainConfig,
                    rng: Rng):
    """Global scheme: Y_0 net and per-step Z nets trained simultaneously on
    the terminal mismatch."""
    t_start = time.perf_counter()
    N = grid.n_steps
    d = problem.d
    m = config_hidden_width(config, d)
    act = nn.Activation(config_activation(config))
    u0_net = nn.init_params(d, m, 1, act, rng.next_seed())
    z_nets = [nn.init_params(d, m, d, act, rng.next_seed()) for _ in range(N)]
    u0_state = make_state(config)
    z_states = [make_state(config) for _ in range(N)]

    n_it = config.iterations
    hist = np.empty(n_it)
    smoother = LossSmoother()
    diverged = False
    for it in range(n_it):
        batch = simulate_paths(problem, grid, config.batch_size, rng)
        loss, g_u0, g_zs = deep_bsde_loss(u0_net, z_nets, problem, grid, batch)
        hist[it] = loss
        if not np.isfinite(loss):
            hist = hist[:it + 1]
            diverged = True
            break
        smooth = smoother.update(loss)
        scheduler_update(u0_state, smooth)
        step(u0_state, u0_net, g_u0)
        for st, znet, gz in zip(z_states, z_nets, g_zs):
            scheduler_update(st, smooth)
            step(st, znet, gz)
    diverged = diverged or hist[-1] > BLOWUP_FACTOR * max(hist[0], 1e-12)

    x0 = problem.x0[None, :]
    y0 = nn.forward(u0_net, x0)[0, 0]
    z0 = nn.forward(z_nets[0], x0)[0]
    if diverged:
        y0, z0 = np.nan, np.full(d, np.nan)
    return _finish(y0, z0, [float(hist[-1])], [hist], t_start, "deepbsde",
                   diverged=diverged)


SCHEME_KEYS = ("dadm", "dbdp1", "dbdp2", "deepbsde")


def solve(scheme: str, problem: BsdeProblem, grid: TimeGrid, config: TrainConfig,
          rng: Rng, theory_mode: bool = False, gamma: float = 1.0):
    """Scheme dispatch; returns (SolveResult, TrainedStack or None)."""
    if scheme == "dadm":
        return solve_dadm(problem, grid, config, rng, theory_mode, gamma)
    if scheme == "dbdp2":
        return solve_dbdp2(problem, grid, config, rng, theory_mode, gamma)
    if scheme == "dbdp1":
        return solve_dbdp1(problem, grid, config, rng), None
    if scheme == "deepbsde":
        return solve_deep_bsde(problem, grid, config, rng), None
    raise ContractError(f"unknown scheme key {scheme!r}")


def martingale_residuals(stack: TrainedStack, M: int, rng: Rng):
    """Weak one-step residual mean and standard error per step on fresh paths.

    residual_i = U_{i+1}(X_{i+1}) - U_i(X_i) + f(t_i, X_i, U_i, Z_i) dt_i
                 - Z_i(X_i) . dW_i
    """
    prob = stack.problem
    grid = stack.grid
    batch = simulate_paths(prob, grid, M, rng)
    out = []
    for i in range(stack.n_steps):
        t = float(grid.times[i])
        xi = batch.X[:, i]
        yi = stack.u(i, xi)
        zi = stack.z(i, xi)
        res = stack.u(i + 1, batch.X[:, i + 1]) - yi \
            + prob.f(t, xi, yi, zi) * grid.steps[i] \
            - np.sum(zi * batch.dW[:, i], axis=-1)
        out.append((float(res.mean()), float(res.std(ddof=1) / np.sqrt(M))))
    return out


def evaluate_slice(stack: TrainedStack, i: int, xs) -> dict:
    """Pointwise table of (U_i, Z_i, exact u, exact Z) at the given points."""
    xs = np.asarray(xs, dtype=float).reshape(-1, stack.problem.d)
    t = float(stack.grid.times[i])
    out = {"x": xs}
    if xs.shape[0] == 0:
        out["u_hat"] = np.zeros(0)
        out["z_hat"] = np.zeros((0, stack.problem.d))
        return out
    out["u_hat"] = stack.u(i, xs)
    out["z_hat"] = stack.z(i, xs)
    if stack.problem.exact_u is not None:
        out["u_exact"] = np.asarray(stack.problem.exact_u(t, xs), dtype=float)
    if stack.problem.exact_grad_u is not None:
        out["z_exact"] = stack.problem.exact_z(t, xs)
    return out
