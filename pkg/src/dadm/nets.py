"""One-hidden-layer networks with closed-form forward, input-gradient and
parameter-gradient evaluation.

All operations are vectorized over a leading batch axis and work in float64.
The network is U(x) = c @ rho(a @ x + b) + b0 with inner weights a (m x d),
inner bias b (m,), outer weights c (d1 x m) and outer bias b0 (d1,).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np


class Activation:
    """Scalar activation with first and second derivative rules.

    relu uses the subgradient convention rho'(0) = 0; its second derivative
    is taken as 0 everywhere (the kink set has measure zero under the
    Monte Carlo losses this library trains on).
    """

    KINDS = ("relu", "tanh")

    def __init__(self, kind: str):
        if kind not in self.KINDS:
            raise ValueError(f"unknown activation kind {kind!r}")
        self.kind = kind

    def value(self, x):
        if self.kind == "relu":
            return np.maximum(x, 0.0)
        return np.tanh(x)

    def deriv(self, x):
        if self.kind == "relu":
            return np.where(x > 0.0, 1.0, 0.0)
        t = np.tanh(x)
        return 1.0 - t * t

    def deriv2(self, x):
        if self.kind == "relu":
            return np.zeros_like(x)
        t = np.tanh(x)
        return -2.0 * t * (1.0 - t * t)

    def __repr__(self):
        return f"Activation({self.kind!r})"


RELU = Activation("relu")
TANH = Activation("tanh")


class ContractError(ValueError):
    """Raised on dimension mismatches and other precondition violations."""


@dataclass
class ShallowNet:
    a: np.ndarray          # (m, d) inner weights
    b: np.ndarray          # (m,)   inner bias
    c: np.ndarray          # (d1, m) outer weights
    b0: np.ndarray         # (d1,)  outer bias
    activation: Activation = field(default_factory=lambda: Activation("tanh"))

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        self.b0 = np.asarray(self.b0, dtype=float)
        m, d = self.a.shape
        if self.b.shape != (m,):
            raise ContractError("inner bias shape mismatch")
        if self.c.shape[1] != m:
            raise ContractError("outer weight shape mismatch")
        if self.b0.shape != (self.c.shape[0],):
            raise ContractError("outer bias shape mismatch")

    @property
    def input_dim(self) -> int:
        return self.a.shape[1]

    @property
    def hidden_width(self) -> int:
        return self.a.shape[0]

    @property
    def output_dim(self) -> int:
        return self.c.shape[0]

    def param_count(self) -> int:
        return self.a.size + self.b.size + self.c.size + self.b0.size

    def is_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in (self.a, self.b, self.c, self.b0))

    def copy(self) -> "ShallowNet":
        return ShallowNet(self.a.copy(), self.b.copy(), self.c.copy(),
                          self.b0.copy(), self.activation)

    # flat-vector views, used by finite-difference checks
    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.a.ravel(), self.b, self.c.ravel(), self.b0])

    def set_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=float)
        if vec.size != self.param_count():
            raise ContractError("flat parameter vector has wrong length")
        m, d = self.a.shape
        d1 = self.output_dim
        i = 0
        self.a = vec[i:i + m * d].reshape(m, d).copy(); i += m * d
        self.b = vec[i:i + m].copy(); i += m
        self.c = vec[i:i + d1 * m].reshape(d1, m).copy(); i += d1 * m
        self.b0 = vec[i:].copy()


@dataclass
class ParamGradient:
    """Gradient accumulator shaped like a ShallowNet's parameters."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    b0: np.ndarray

    @classmethod
    def zeros_like(cls, net: ShallowNet) -> "ParamGradient":
        return cls(np.zeros_like(net.a), np.zeros_like(net.b),
                   np.zeros_like(net.c), np.zeros_like(net.b0))

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.a.ravel(), self.b, self.c.ravel(), self.b0])

    def scaled(self, lam: float) -> "ParamGradient":
        return ParamGradient(lam * self.a, lam * self.b, lam * self.c, lam * self.b0)

    def add_(self, other: "ParamGradient") -> "ParamGradient":
        self.a += other.a
        self.b += other.b
        self.c += other.c
        self.b0 += other.b0
        return self

    def is_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in (self.a, self.b, self.c, self.b0))


@dataclass
class WeightConstraint:
    """Bound gamma on max row norm of inner weights and l1 norm of outer weights."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise ContractError("gamma must be positive")


def forward(net: ShallowNet, x: np.ndarray) -> np.ndarray:
    """Evaluate the network; x has shape (..., d), result (..., d1)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.input_dim:
        raise ContractError(f"input dim {x.shape[-1]} != {net.input_dim}")
    h = x @ net.a.T + net.b
    return net.activation.value(h) @ net.c.T + net.b0


def grad_input(net: ShallowNet, x: np.ndarray) -> np.ndarray:
    """Jacobian of forward w.r.t. x; result shape (..., d1, d)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.input_dim:
        raise ContractError(f"input dim {x.shape[-1]} != {net.input_dim}")
    h = x @ net.a.T + net.b
    s = net.activation.deriv(h)                       # (..., m)
    return np.einsum("oi,...i,ij->...oj", net.c, s, net.a)


def grad_params(net: ShallowNet, x: np.ndarray, upstream: np.ndarray) -> ParamGradient:
    """Reverse-mode parameter gradient of sum_k upstream_k . U(x_k).

    x has shape (..., d) and upstream (..., d1); batch axes are summed over,
    so the result is the gradient of the upstream-weighted batch total.
    """
    x = np.asarray(x, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    if x.shape[-1] != net.input_dim or upstream.shape[-1] != net.output_dim:
        raise ContractError("shape mismatch in grad_params")
    h = x @ net.a.T + net.b
    act = net.activation.value(h)
    s = net.activation.deriv(h)
    xb = x.reshape(-1, net.input_dim)
    ub = upstream.reshape(-1, net.output_dim)
    hb = act.reshape(-1, net.hidden_width)
    sb = s.reshape(-1, net.hidden_width)

    g_b0 = ub.sum(axis=0)
    g_c = ub.T @ hb                                   # (d1, m)
    t = (ub @ net.c) * sb                             # (B, m)
    g_a = t.T @ xb                                    # (m, d)
    g_b = t.sum(axis=0)
    return ParamGradient(g_a, g_b, g_c, g_b0)


def grad_input_params(net: ShallowNet, x: np.ndarray, upstream: np.ndarray) -> ParamGradient:
    """Parameter gradient of sum_k upstream_k . D_x U(x_k) for scalar-output nets.

    This is the mixed second derivative path needed when a loss contains the
    network's own input gradient (DBDP2-style losses). upstream has shape
    (..., d), weighting the input-gradient components.
    """
    if net.output_dim != 1:
        raise ContractError("grad_input_params requires a scalar-output net")
    x = np.asarray(x, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    if x.shape[-1] != net.input_dim or upstream.shape[-1] != net.input_dim:
        raise ContractError("shape mismatch in grad_input_params")
    h = x @ net.a.T + net.b
    s = net.activation.deriv(h)
    s2 = net.activation.deriv2(h)
    c = net.c[0]                                      # (m,)
    xb = x.reshape(-1, net.input_dim)
    vb = upstream.reshape(-1, net.input_dim)
    sb = s.reshape(-1, net.hidden_width)
    s2b = s2.reshape(-1, net.hidden_width)
    av = vb @ net.a.T                                 # (B, m): (a v)_i

    g_c = np.zeros_like(net.c)
    g_c[0] = (sb * av).sum(axis=0)
    w = c * s2b * av                                  # (B, m)
    g_a = (c * sb).T @ vb + w.T @ xb                  # (m, d)
    g_b = w.sum(axis=0)
    g_b0 = np.zeros_like(net.b0)
    return ParamGradient(g_a, g_b, g_c, g_b0)


def project_weights(net: ShallowNet, constraint: WeightConstraint) -> ShallowNet:
    """Project onto the constrained class: max_i |a_i| <= gamma, sum_i |c_i| <= gamma.

    Rows of a exceeding the bound are rescaled to norm gamma; the outer
    weights are scaled uniformly when their l1 norm exceeds gamma. A net
    already inside the feasible set is returned unchanged (same object).
    """
    if net.output_dim != 1:
        raise ContractError("weight projection is defined for scalar-output nets")
    gamma = constraint.gamma
    row_norms = np.linalg.norm(net.a, axis=1)
    c_l1 = np.abs(net.c).sum()
    if row_norms.max(initial=0.0) <= gamma and c_l1 <= gamma:
        return net
    out = net.copy()
    over = row_norms > gamma
    if over.any():
        out.a[over] *= (gamma / row_norms[over])[:, None]
    if c_l1 > gamma:
        out.c *= gamma / c_l1
    return out


def init_params(d: int, m: int, d1: int, activation: Activation, rng_seed: int) -> ShallowNet:
    """Fan-based uniform initialization with zero biases, deterministic in the seed."""
    if d < 1 or m < 1 or d1 < 1:
        raise ContractError("dimensions must be positive")
    gen = np.random.Generator(np.random.Philox(key=int(rng_seed)))
    lim_in = np.sqrt(6.0 / (d + m))
    lim_out = np.sqrt(6.0 / (m + d1))
    a = gen.uniform(-lim_in, lim_in, size=(m, d))
    c = gen.uniform(-lim_out, lim_out, size=(d1, m))
    return ShallowNet(a, np.zeros(m), c, np.zeros(d1), activation)
