"""Plain gradient descent on K-matrix parameters.

The loss is ``sum_l ||y_l - g(K x_l)||^2`` over training pairs, left
unnormalized. Gradients treat the real and imaginary part of every
diagonal coefficient as independent real parameters and are packed back
into one complex array: ``grad.real`` holds the partials with respect to
the real parts, ``grad.imag`` those with respect to the imaginary parts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
import numpy as np

from .butterfly import KMatrix, kmatrix_mvm, pair_indices, param_count, random_kmatrix
from .numfield import DTYPE, as_dense, log2_exact

NONLINEARITIES = ("identity", "relu")


class DivergedError(ArithmeticError):
    def __init__(self, iteration: int, message: str = "non-finite update"):
        super().__init__(f"{message} at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class TrainConfig:
    eta: float
    eps: float = 0.0
    max_iters: int = 100
    seed: int = 0
    nonlinearity: str = "identity"

    def __post_init__(self):
        if not (math.isfinite(self.eta) and self.eta >= 0):
            raise ValueError(f"learning rate must be finite and non-negative, got {self.eta}")
        if not self.eps >= 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")


@dataclass(frozen=True)
class TrainState:
    model: KMatrix
    iter: int = 0
    loss_history: tuple = field(default_factory=tuple)


def stack_pairs(data, n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Training pairs as column matrices ``(X, Y)``."""
    if isinstance(data, tuple) and len(data) == 2 and np.ndim(data[0]) == 2:
        X, Y = (np.asarray(a, dtype=DTYPE) for a in data)
    else:
        pairs = list(data)
        if not pairs:
            raise ValueError("no training pairs")
        X = np.stack([np.asarray(x, dtype=DTYPE) for x, _ in pairs], axis=1)
        Y = np.stack([np.asarray(y, dtype=DTYPE) for _, y in pairs], axis=1)
    if X.shape[1] != Y.shape[1]:
        raise ValueError("inputs and targets disagree on sample count")
    if n is not None and (X.shape[0] != n or Y.shape[0] != n):
        raise ValueError(f"training pairs must have length {n}, got {X.shape[0]} -> {Y.shape[0]}")
    return X, Y


def _activation(U: np.ndarray, g: str) -> tuple[np.ndarray, np.ndarray | None]:
    if g == "identity":
        return U, None
    if g == "relu":
        active = U.real > 0
        return np.where(active, U.real, 0.0).astype(DTYPE), active
    raise ValueError(f"unknown nonlinearity {g!r}")


def _check_real(X, Y, g):
    if g == "relu" and (np.any(X.imag != 0) or np.any(Y.imag != 0)):
        raise ValueError("relu is only defined for real-valued data")


def loss(model: KMatrix, data, g: str = "identity") -> float:
    X, Y = stack_pairs(data, model.n)
    _check_real(X, Y, g)
    out, _ = _activation(kmatrix_mvm(model, X), g)
    return float(np.sum(np.abs(Y - out) ** 2))


def loss_gradient(model: KMatrix, data, g: str = "identity") -> np.ndarray:
    """Gradient of :func:`loss` over all diagonal coefficients, in ``model.params()`` order.

    With ``u = K x`` the loss changes by ``Re(sum z * du)`` where
    ``z = -2 conj(y - u)`` for the identity and ``z = -2 (y - relu(u)) [Re u > 0]``
    for relu. One reverse sweep through the cached factor inputs turns ``z``
    into per-coefficient partials, summed over samples.
    """
    X, Y = stack_pairs(data, model.n)
    _check_real(X, Y, g)
    N = model.size
    levels = log2_exact(N)
    v = np.zeros((N, X.shape[1]), dtype=DTYPE)
    v[: model.n] = X
    tape = []
    for s, which, i, f, adjoint in model.applied_factors():
        tape.append((s, which, i, f, adjoint, v))
        v = f.apply(v, adjoint)
    U = v[: model.n]
    out, active = _activation(U, g)
    resid = Y - out
    if g == "identity":
        z = -2 * resid.conj()
    else:
        z = -2 * resid.real * active
    adj = np.zeros_like(v)
    adj[: model.n] = z
    grad = np.zeros(param_count(model), dtype=DTYPE)
    per = 2 * N
    for s, which, i, f, adjoint, xin in reversed(tape):
        top, bot = pair_indices(f.n, f.k)
        c = f.coefficients(adjoint)[:, :, None]
        at, ab = adj[top], adj[bot]
        xt, xb = xin[top], xin[bot]
        gc = np.stack([
            np.sum(at * xt, axis=1),
            np.sum(at * xb, axis=1),
            np.sum(ab * xt, axis=1),
            np.sum(ab * xb, axis=1),
        ])
        if adjoint:
            # applied coefficients are conj(D1), conj(D3), conj(D2), conj(D4)
            gd = gc[[0, 2, 1, 3]]
        else:
            gd = gc.conj()
        pos = ((2 * s + which) * levels + i) * per
        grad[pos : pos + per] = gd.ravel()
        new = np.empty_like(adj)
        new[top] = c[0] * at + c[2] * ab
        new[bot] = c[1] * at + c[3] * ab
        adj = new
    return grad


def gd_step(state: TrainState, data, config: TrainConfig) -> TrainState:
    """One update ``theta <- theta - eta * grad``; records the new loss."""
    theta = state.model.params()
    it = state.iter + 1
    with np.errstate(over="ignore", invalid="ignore"):
        step = theta - config.eta * loss_gradient(state.model, data, config.nonlinearity)
        if not np.all(np.isfinite(step)):
            raise DivergedError(it)
        model = state.model.with_params(step)
        value = loss(model, data, config.nonlinearity)
    if not math.isfinite(value):
        raise DivergedError(it, "non-finite loss")
    history = state.loss_history or (loss(state.model, data, config.nonlinearity),)
    return TrainState(model, it, history + (value,))


def basis_data(W, probes: int = 0, seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Pairs ``(e_j, W e_j)`` for every column, plus optional random probe vectors."""
    W = as_dense(W)
    n = W.shape[1]
    X = np.eye(n, dtype=DTYPE)
    if probes:
        rng = np.random.default_rng(seed)
        X = np.concatenate([X, rng.standard_normal((n, probes)).astype(DTYPE)], axis=1)
    return X, W @ X


def initial_state(model: KMatrix, data, g: str = "identity") -> TrainState:
    return TrainState(model, 0, (loss(model, data, g),))


def train(
    target,
    n: int,
    w: int = 1,
    e: int = 1,
    config: TrainConfig | None = None,
    init: KMatrix | None = None,
    probes: int = 0,
) -> TrainState:
    """Gradient descent until the loss drops below ``eps`` or ``max_iters`` steps ran.

    ``target`` is either a square matrix, fitted through basis probes, or a
    sequence of ``(x, y)`` pairs.
    """
    config = config or TrainConfig(eta=0.01)
    if isinstance(target, np.ndarray) and target.ndim == 2:
        data = basis_data(target, probes, config.seed)
    else:
        data = stack_pairs(target, n)
    model = init if init is not None else random_kmatrix(n, w, e, config.seed)
    if model.n != n:
        raise ValueError(f"initial model has size {model.n}, expected {n}")
    state = initial_state(model, data, config.nonlinearity)
    while state.loss_history[-1] >= config.eps and state.iter < config.max_iters:
        state = gd_step(state, data, config)
    return state
