"""Compile a linear circuit into a product of layer-wise sparse matrices.

Gates are laid out in slots ordered by (layer, id). Slots ``0..n-1`` hold
the inputs and the working vector has length ``s'``, the smallest power of
two that is at least the gate count ``s``. The factor for layer ``k`` copies
the ``z_k`` slots already computed, writes the ``w_k`` gates of layer ``k``
and zeroes the rest. A selector list then picks the output slots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, NonLinearCircuit, is_linear
from .numfield import (
    DTYPE,
    FormatError,
    SparseMatrix,
    content_lines,
    parse_count,
    parse_sparse_lines,
    dump_sparse,
    sparse_mvm,
)


@dataclass(frozen=True)
class SparseProduct:
    n_inputs: int
    inner_dim: int
    factors: tuple  # SparseMatrix, applied first to last
    selector: tuple  # slot index for each output row

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "selector", tuple(int(i) for i in self.selector))
        if self.n_inputs > self.inner_dim:
            raise ValueError("inner dimension smaller than input count")
        for f in self.factors:
            if f.shape != (self.inner_dim, self.inner_dim):
                raise ValueError(f"factor shape {f.shape} != inner dim {self.inner_dim}")
        if len(set(self.selector)) != len(self.selector):
            raise ValueError("selector indices must be distinct")
        if any(not 0 <= i < self.inner_dim for i in self.selector):
            raise ValueError("selector index out of range")

    @property
    def n_outputs(self) -> int:
        return len(self.selector)

    @property
    def depth(self) -> int:
        return len(self.factors)


def next_power_of_two(s: int) -> int:
    p = 1
    while p < s:
        p *= 2
    return p


def slot_layout(c: Circuit) -> tuple[list[int], list[int], list[int]]:
    """``(layers, slot_of_gate, layer_widths)`` with ``layer_widths[k-1] == w_k``."""
    layers = c.layers()
    d = max(layers, default=0)
    order = sorted(range(c.n_inputs, len(c.gates)), key=lambda i: (layers[i], i))
    slot = list(range(len(c.gates)))
    for pos, gid in enumerate(order):
        slot[gid] = c.n_inputs + pos
    widths = [0] * d
    for gid in order:
        widths[layers[gid] - 1] += 1
    return layers, slot, widths


def compile_to_sparse_product(c: Circuit) -> SparseProduct:
    if not is_linear(c):
        raise NonLinearCircuit("only linear circuits compile to sparse products")
    if len(set(c.outputs)) != len(c.outputs):
        raise ValueError("repeated output gates cannot be selected by a truncated permutation")
    s = len(c.gates)
    s_pad = next_power_of_two(s)
    layers, slot, widths = slot_layout(c)
    by_slot = {slot[g]: g for g in range(c.n_inputs, s)}
    factors = []
    z = c.n_inputs
    for k, w in enumerate(widths, start=1):
        triples = [(i, i, 1) for i in range(z)]
        for row in range(z, z + w):
            g = c.gates[by_slot[row]]
            coef: dict[int, complex] = {}
            for a, src in ((g.alpha, g.src1), (g.beta, g.src2)):
                coef[slot[src]] = coef.get(slot[src], 0) + a
            triples += [(row, col, v) for col, v in coef.items() if v != 0]
        factors.append(SparseMatrix(s_pad, s_pad, triples))
        z += w
    return SparseProduct(c.n_inputs, s_pad, factors, [slot[o] for o in c.outputs])


def product_mvm(p: SparseProduct, x) -> np.ndarray:
    """Apply ``p`` to ``x`` (optionally a batch of column vectors)."""
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[0] != p.n_inputs:
        raise ValueError(f"product takes {p.n_inputs} inputs, got shape {x.shape}")
    v = np.zeros((p.inner_dim,) + x.shape[1:], dtype=DTYPE)
    v[: p.n_inputs] = x
    for f in p.factors:
        v = sparse_mvm(f, v)
    return v[list(p.selector)]


def product_densify(p: SparseProduct) -> np.ndarray:
    return product_mvm(p, np.eye(p.n_inputs, dtype=DTYPE))


def dump_sparse_product(p: SparseProduct) -> str:
    parts = [f"sparseproduct {p.n_inputs} {p.n_outputs} {p.inner_dim} {p.depth}\n"]
    parts += [dump_sparse(f) for f in p.factors]
    parts.append("selector " + " ".join(str(i) for i in p.selector) + "\n")
    return "".join(parts)


def parse_sparse_product(text: str) -> SparseProduct:
    lines = content_lines(text)
    if not lines:
        raise FormatError("empty input")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "sparseproduct":
        raise FormatError(f"expected 'sparseproduct <n> <m> <s'> <d>', got {lines[0]!r}")
    n, m, s_pad, d = (parse_count(t) for t in head[1:])
    pos = 1
    factors = []
    for _ in range(d):
        if pos >= len(lines):
            raise FormatError("sparse product truncated")
        f, used = parse_sparse_lines(lines[pos:])
        factors.append(f)
        pos += used
    if pos != len(lines) - 1:
        raise FormatError("expected a single selector line at the end")
    toks = lines[pos].split()
    if toks[0] != "selector" or len(toks) - 1 != m:
        raise FormatError(f"bad selector line {lines[pos]!r}")
    try:
        return SparseProduct(n, s_pad, factors, [parse_count(t) for t in toks[1:]])
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
