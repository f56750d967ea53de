"""Time grids, counter-based random streams and Euler-Maruyama path simulation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nets import ContractError


class SimulationError(RuntimeError):
    """Raised when coefficient evaluation produces non-finite values."""


@dataclass(frozen=True)
class TimeGrid:
    times: np.ndarray        # (N+1,) strictly increasing, t_0 = 0, t_N = T

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ContractError("grid needs at least two time points")
        if not np.all(np.diff(t) > 0.0):
            raise ContractError("grid times must be strictly increasing")
        object.__setattr__(self, "times", t)

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def mesh(self) -> float:
        return float(self.steps.max())

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


def make_uniform_grid(N: int, T: float) -> TimeGrid:
    if N < 1:
        raise ContractError("N must be a positive integer")
    if not T > 0.0:
        raise ContractError("T must be positive")
    return TimeGrid(np.linspace(0.0, T, N + 1))


class Rng:
    """Philox-backed (counter-based) stream; identical seed gives identical draws."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniform(self, low, high, shape) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def next_seed(self) -> int:
        """Derive a fresh child seed; deterministic in the stream position."""
        return int(self._gen.integers(0, 2**63 - 1))


@dataclass
class PathBatch:
    """M Euler paths and the Brownian increments that generated them.

    X has shape (M, n+1, d) over the grid's points; dW has shape (M, n, d)
    with dW[:, i] ~ N(0, dt_i I). start_index records which grid point the
    paths start from (0 for full paths, i for restarted flows).
    """

    X: np.ndarray
    dW: np.ndarray
    grid: TimeGrid
    seed: int
    start_index: int = 0

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]


def _euler_sweep(problem, grid: TimeGrid, start_index: int, x_start: np.ndarray,
                 dW: np.ndarray) -> np.ndarray:
    """Run the Euler recursion from stored increments; bitwise reproducible."""
    times = grid.times
    steps = grid.steps
    M = dW.shape[0]
    n_local = dW.shape[1]
    d = problem.d
    X = np.empty((M, n_local + 1, d))
    X[:, 0] = x_start
    for j in range(n_local):
        i = start_index + j
        t = float(times[i])
        xi = X[:, j]
        b = np.broadcast_to(np.asarray(problem.drift(t, xi), dtype=float), xi.shape)
        sig = np.asarray(problem.diffusion(t, xi), dtype=float)
        if not (np.isfinite(b).all() and np.isfinite(sig).all()):
            raise SimulationError(f"non-finite coefficients at step {i} (t={t:g})")
        if sig.ndim == 2:
            dx = dW[:, j] @ sig.T
        else:
            dx = np.einsum("...jk,...k->...j", sig, dW[:, j])
        X[:, j + 1] = xi + b * steps[i] + dx
        if not np.isfinite(X[:, j + 1]).all():
            raise SimulationError(f"non-finite state after step {i} (t={t:g})")
    return X


def simulate_paths(problem, grid: TimeGrid, M: int, rng: Rng) -> PathBatch:
    """Simulate M Euler-Maruyama paths of the forward SDE from x0."""
    if M < 1:
        raise ContractError("M must be positive")
    d = problem.d
    n = grid.n_steps
    dW = rng.normal((M, n, d)) * np.sqrt(grid.steps)[None, :, None]
    x0 = np.broadcast_to(np.asarray(problem.x0, dtype=float), (M, d))
    X = _euler_sweep(problem, grid, 0, x0, dW)
    return PathBatch(X, dW, grid, rng.seed, start_index=0)


def flow_from(problem, grid: TimeGrid, i: int, x: np.ndarray, M: int, rng: Rng) -> PathBatch:
    """Euler flow restarted from state x at grid index i, covering steps i..N."""
    n = grid.n_steps
    if not 0 <= i < n:
        raise ContractError("start index out of range")
    d = problem.d
    dW = rng.normal((M, n - i, d)) * np.sqrt(grid.steps[i:])[None, :, None]
    x_start = np.broadcast_to(np.asarray(x, dtype=float), (M, d))
    X = _euler_sweep(problem, grid, i, x_start, dW)
    return PathBatch(X, dW, grid, rng.seed, start_index=i)


def replay_paths(problem, batch: PathBatch) -> np.ndarray:
    """Recompute the states from the stored increments (bitwise identical)."""
    return _euler_sweep(problem, batch.grid, batch.start_index, batch.X[:, 0], batch.dW)
