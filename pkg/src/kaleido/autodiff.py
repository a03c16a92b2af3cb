"""Reverse-mode differentiation of circuits and the transposition transform.

Gradients are holomorphic derivatives: for an input ``theta_k`` the partial
with respect to its real part is ``grad[k]`` and with respect to its
imaginary part is ``1j * grad[k]``.

Operation counting: a LinComb gate costs 3 forward operations (two
multiplies, one add) and a Mul gate costs 1. Every adjoint contribution
``d[src] += local * d[gate]`` costs 2 (a multiply and an add).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, Input, LinComb, NonLinearCircuit, forward_values, is_linear
from .numfield import DTYPE, as_vector

AUDIT_CONSTANT = 6


class MultiOutput(ValueError):
    pass


@dataclass(frozen=True)
class GradientResult:
    grad: np.ndarray
    op_count: int


def forward_op_count(c: Circuit) -> int:
    return sum(3 if isinstance(g, LinComb) else 1 for g in c.gates if not isinstance(g, Input))


def backprop(c: Circuit, a) -> GradientResult:
    """Gradient of a single-output circuit at ``a``: one forward pass, one reverse sweep."""
    if c.n_outputs != 1:
        raise MultiOutput(f"backprop needs exactly one output, circuit has {c.n_outputs}")
    a = as_vector(a, c.n_inputs)
    vals = forward_values(c, a)
    d = np.zeros(len(c.gates), dtype=DTYPE)
    d[c.outputs[0]] = 1
    ops = 0
    # gate ids are a topological order, so descending ids visit every parent first
    for i in range(len(c.gates) - 1, c.n_inputs - 1, -1):
        g = c.gates[i]
        if isinstance(g, LinComb):
            d[g.src1] += g.alpha * d[i]
            d[g.src2] += g.beta * d[i]
        else:
            d[g.src1] += vals[g.src2] * d[i]
            d[g.src2] += vals[g.src1] * d[i]
        ops += 4
    return GradientResult(d[: c.n_inputs].copy(), ops)


def gradient_op_audit(c: Circuit) -> tuple[int, int]:
    """``(forward_ops, reverse_ops)`` for differentiating ``c``."""
    if c.n_outputs != 1:
        raise MultiOutput(f"audit needs exactly one output, circuit has {c.n_outputs}")
    return forward_op_count(c), 4 * c.size()


def scalarize(c: Circuit, z) -> Circuit:
    """Single-output circuit computing ``z . c(x)`` by appending an inner-product chain."""
    if not is_linear(c):
        raise NonLinearCircuit("scalarize needs a linear circuit")
    z = as_vector(z, c.n_outputs)
    gates = list(c.gates)
    outs = c.outputs
    if len(outs) == 1:
        gates.append(LinComb(complex(z[0]), outs[0], 0j, outs[0]))
    else:
        gates.append(LinComb(complex(z[0]), outs[0], complex(z[1]), outs[1]))
        for k in range(2, len(outs)):
            gates.append(LinComb(1 + 0j, len(gates) - 1, complex(z[k]), outs[k]))
    return Circuit(c.n_inputs, gates, [len(gates) - 1])


def transpose_with_count(c: Circuit, y) -> GradientResult:
    """``W^T y`` for the linear map ``W`` of ``c``, via the gradient of ``y . W x``.

    The map is linear, so the gradient does not depend on the evaluation
    point; the zero vector is used.
    """
    if not is_linear(c):
        raise NonLinearCircuit("transpose needs a linear circuit")
    sc = scalarize(c, y)
    return backprop(sc, np.zeros(c.n_inputs, dtype=DTYPE))


def transpose_apply(c: Circuit, y) -> np.ndarray:
    return transpose_with_count(c, y).grad
