"""Arithmetic-circuit IR: gates, validation, evaluation, densification, builders.

A circuit is a topologically indexed list of two-input gates. The first
``n_inputs`` gates are :class:`Input` gates in slot order; every other gate
only reads gates with a smaller id. Constants live in :class:`LinComb`
coefficients, so there are no constant gates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

from .numfield import (
    DTYPE,
    FormatError,
    NonFiniteError,
    as_dense,
    content_lines,
    format_scalar,
    is_power_of_two,
    log2_exact,
    parse_count,
    parse_scalar,
    root_of_unity,
)


class CircuitError(ValueError):
    pass


class ForwardReference(CircuitError):
    pass


class EmptyOutputs(CircuitError):
    pass


class BadInputPrefix(CircuitError):
    pass


class NonLinearCircuit(CircuitError):
    pass


class Input(NamedTuple):
    slot: int


class LinComb(NamedTuple):
    """``alpha * g[src1] + beta * g[src2]``."""

    alpha: complex
    src1: int
    beta: complex
    src2: int


class Mul(NamedTuple):
    src1: int
    src2: int


Gate = Union[Input, LinComb, Mul]


@dataclass(frozen=True)
class Circuit:
    n_inputs: int
    gates: tuple
    outputs: tuple

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        object.__setattr__(self, "outputs", tuple(int(o) for o in self.outputs))

    @property
    def n_outputs(self) -> int:
        return len(self.outputs)

    def size(self) -> int:
        """Number of non-input gates."""
        return len(self.gates) - self.n_inputs

    def layers(self) -> list[int]:
        """Longest-path depth of every gate; inputs sit at layer 0."""
        depth = [0] * len(self.gates)
        for i, g in enumerate(self.gates):
            if not isinstance(g, Input):
                depth[i] = 1 + max(depth[g.src1], depth[g.src2])
        return depth

    def depth(self) -> int:
        return max(self.layers(), default=0)


def validate(c: Circuit) -> None:
    """Raise a :class:`CircuitError` subclass unless ``c`` is well formed."""
    if c.n_inputs < 0 or len(c.gates) < c.n_inputs:
        raise BadInputPrefix(f"{c.n_inputs} inputs declared but only {len(c.gates)} gates")
    for i, g in enumerate(c.gates):
        if i < c.n_inputs:
            if not isinstance(g, Input) or g.slot != i:
                raise BadInputPrefix(f"gate {i} must be Input({i}), got {g!r}")
            continue
        if isinstance(g, Input):
            raise BadInputPrefix(f"input gate {i} after the input prefix")
        if not isinstance(g, (LinComb, Mul)):
            raise CircuitError(f"gate {i} has unknown kind {g!r}")
        for src in (g.src1, g.src2):
            if not 0 <= src < i:
                raise ForwardReference(f"gate {i} reads gate {src}")
    if not c.outputs:
        raise EmptyOutputs("circuit has no outputs")
    for o in c.outputs:
        if not 0 <= o < len(c.gates):
            raise ForwardReference(f"output refers to missing gate {o}")


def is_linear(c: Circuit) -> bool:
    return not any(isinstance(g, Mul) for g in c.gates)


def forward_values(c: Circuit, x) -> np.ndarray:
    """Values of every gate. ``x`` may carry a trailing batch axis."""
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim == 0 or x.shape[0] != c.n_inputs:
        raise ValueError(f"circuit takes {c.n_inputs} inputs, got shape {x.shape}")
    vals = np.empty((len(c.gates),) + x.shape[1:], dtype=DTYPE)
    vals[: c.n_inputs] = x
    with np.errstate(all="ignore"):
        for i in range(c.n_inputs, len(c.gates)):
            g = c.gates[i]
            if isinstance(g, LinComb):
                vals[i] = g.alpha * vals[g.src1] + g.beta * vals[g.src2]
            else:
                vals[i] = vals[g.src1] * vals[g.src2]
    if not np.all(np.isfinite(vals)):
        raise NonFiniteError("non-finite intermediate value")
    return vals


def evaluate(c: Circuit, x) -> np.ndarray:
    vals = forward_values(c, x)
    return vals[list(c.outputs)]


def densify(c: Circuit) -> np.ndarray:
    """The ``m x n`` matrix of a linear circuit, column j = evaluate(c, e_j)."""
    if not is_linear(c):
        raise NonLinearCircuit("densify needs a linear circuit")
    return evaluate(c, np.eye(c.n_inputs, dtype=DTYPE))


def metrics(c: Circuit) -> tuple[int, int]:
    """``(s, d)``: gate count including inputs, and depth."""
    return len(c.gates), c.depth()


def identity_circuit(n: int = 1) -> Circuit:
    return Circuit(n, [Input(i) for i in range(n)], list(range(n)))


def _bit_reverse(i: int, bits: int) -> int:
    r = 0
    for _ in range(bits):
        r = (r << 1) | (i & 1)
        i >>= 1
    return r


def build_fft(n: int) -> Circuit:
    """Radix-2 decimation-in-time circuit for ``F_n @ x``.

    The bit-reversal reordering is wiring only: stage one reads the input
    gates in bit-reversed order. Each of the log2(n) stages adds n gates.
    """
    if not is_power_of_two(n):
        raise ValueError(f"FFT size must be a power of two, got {n}")
    bits = log2_exact(n)
    gates: list[Gate] = [Input(i) for i in range(n)]
    cur = [_bit_reverse(i, bits) for i in range(n)]
    span = 2
    while span <= n:
        nxt = [0] * n
        half = span // 2
        for start in range(0, n, span):
            for j in range(half):
                w = root_of_unity(j, span)
                top, bot = cur[start + j], cur[start + j + half]
                nxt[start + j] = len(gates)
                gates.append(LinComb(1 + 0j, top, w, bot))
                nxt[start + j + half] = len(gates)
                gates.append(LinComb(1 + 0j, top, -w, bot))
        cur = nxt
        span *= 2
    return Circuit(n, gates, cur)


def build_from_dense(W) -> Circuit:
    """Naive row-by-row accumulation circuit, one gate chain per row."""
    W = as_dense(W)
    m, n = W.shape
    if n == 0:
        raise ValueError("matrix needs at least one column")
    gates: list[Gate] = [Input(i) for i in range(n)]
    outputs = []
    for i in range(m):
        row = W[i]
        if n == 1:
            gates.append(LinComb(complex(row[0]), 0, 0j, 0))
        else:
            gates.append(LinComb(complex(row[0]), 0, complex(row[1]), 1))
            for j in range(2, n):
                gates.append(LinComb(1 + 0j, len(gates) - 1, complex(row[j]), j))
        outputs.append(len(gates) - 1)
    return Circuit(n, gates, outputs)


# ---------------------------------------------------------------------------
# text format

def dump_circuit(c: Circuit) -> str:
    lines = [f"inputs {c.n_inputs}"]
    for i in range(c.n_inputs, len(c.gates)):
        g = c.gates[i]
        if isinstance(g, LinComb):
            lines.append(
                f"gate {i} lin {format_scalar(g.alpha)} {g.src1} {format_scalar(g.beta)} {g.src2}"
            )
        else:
            lines.append(f"gate {i} mul {g.src1} {g.src2}")
    lines.append("outputs " + " ".join(str(o) for o in c.outputs))
    return "\n".join(lines) + "\n"


def parse_circuit_lines(lines: Sequence[str]) -> Circuit:
    head = lines[0].split()
    if len(head) != 2 or head[0] != "inputs":
        raise FormatError(f"expected 'inputs <n>', got {lines[0]!r}")
    n = parse_count(head[1], "input count")
    gates: list[Gate] = [Input(i) for i in range(n)]
    outputs = None
    for line in lines[1:]:
        toks = line.split()
        if outputs is not None:
            raise FormatError(f"content after outputs line: {line!r}")
        if toks[0] == "outputs":
            outputs = [parse_count(t, "output id") for t in toks[1:]]
            continue
        if toks[0] != "gate" or len(toks) < 3:
            raise FormatError(f"bad circuit line {line!r}")
        gid = parse_count(toks[1], "gate id")
        if gid != len(gates):
            raise FormatError(f"gate ids must be dense and ascending: got {gid}, expected {len(gates)}")
        if toks[2] == "lin" and len(toks) == 7:
            gates.append(LinComb(parse_scalar(toks[3]), parse_count(toks[4]), parse_scalar(toks[5]), parse_count(toks[6])))
        elif toks[2] == "mul" and len(toks) == 5:
            gates.append(Mul(parse_count(toks[3]), parse_count(toks[4])))
        else:
            raise FormatError(f"bad gate line {line!r}")
    if outputs is None:
        raise FormatError("missing outputs line")
    c = Circuit(n, gates, outputs)
    try:
        validate(c)
    except CircuitError as exc:
        raise FormatError(str(exc)) from exc
    return c


def parse_circuit(text: str) -> Circuit:
    lines = content_lines(text)
    if not lines:
        raise FormatError("empty input")
    return parse_circuit_lines(lines)
