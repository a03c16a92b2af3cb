"""Decompositions into K-matrices.

* permutations route through a single BB* stage (Benes looping algorithm);
* horizontal step matrices become a single butterfly matrix;
* an n-sparse matrix factors as ``P1 H P2 V P3`` and lands in width 5;
* an s-sparse matrix is summed chunk by chunk at expansion 4;
* K-matrices are closed under products, which chains everything into the
  circuit-to-K-matrix pipeline.

Permutation convention: ``image[i]`` is where input ``i`` goes, so the
matrix has ``P[image[i], i] = 1`` and ``(P @ x)[image[i]] = x[i]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .butterfly import ButterflyFactor, ButterflyMatrix, KMatrix, embed_butterfly
from .circuit import Circuit, NonLinearCircuit, is_linear
from .numfield import (
    DTYPE,
    FormatError,
    SparseMatrix,
    content_lines,
    is_power_of_two,
    log2_exact,
    parse_count,
)
from .sparse_compile import compile_to_sparse_product

IDENTITY_SWITCH = (1, 0, 0, 1)
SWAP_SWITCH = (0, 1, 1, 0)


class StepViolation(ValueError):
    pass


class RoutingConflict(AssertionError):
    pass


class TooManyTriples(ValueError):
    pass


class NonSquare(ValueError):
    pass


@dataclass(frozen=True)
class Permutation:
    image: tuple

    def __post_init__(self):
        img = tuple(int(i) for i in self.image)
        if sorted(img) != list(range(len(img))):
            raise ValueError(f"not a permutation: {img}")
        object.__setattr__(self, "image", img)

    @property
    def n(self) -> int:
        return len(self.image)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(range(n))

    def inverse(self) -> "Permutation":
        inv = [0] * self.n
        for i, t in enumerate(self.image):
            inv[t] = i
        return Permutation(inv)

    def compose(self, other: "Permutation") -> "Permutation":
        """``self o other``: apply ``other`` first."""
        return Permutation([self.image[t] for t in other.image])

    def to_dense(self) -> np.ndarray:
        P = np.zeros((self.n, self.n), dtype=DTYPE)
        P[list(self.image), list(range(self.n))] = 1
        return P


def complete_permutation(partial: dict, n: int) -> Permutation:
    """Extend an injective partial map on ``range(n)``, filling leftovers in ascending order."""
    image = [None] * n
    for src, dst in partial.items():
        image[src] = dst
    free = iter(sorted(set(range(n)) - set(partial.values())))
    for i in range(n):
        if image[i] is None:
            image[i] = next(free)
    return Permutation(image)


def dump_perm(p: Permutation) -> str:
    return f"perm {p.n}\n" + " ".join(str(i) for i in p.image) + "\n"


def parse_perm(text: str) -> Permutation:
    lines = content_lines(text)
    if not lines:
        raise FormatError("empty input")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "perm":
        raise FormatError(f"expected 'perm <n>', got {lines[0]!r}")
    n = parse_count(head[1], "size")
    toks = [t for line in lines[1:] for t in line.split()]
    if len(toks) != n:
        raise FormatError(f"permutation lists {len(toks)} entries, expected {n}")
    try:
        return Permutation([parse_count(t, "image") for t in toks])
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Benes routing


def _butterfly_from_diags(n: int, diags: list) -> ButterflyMatrix:
    return ButterflyMatrix(n, [ButterflyFactor(n, n >> i, d) for i, d in enumerate(diags)])


def _identity_diags(n: int, levels: int) -> list:
    out = []
    for _ in range(levels):
        d = np.zeros((4, n // 2), dtype=DTYPE)
        d[0] = d[3] = 1
        out.append(d)
    return out


def route_permutation(p: Permutation) -> KMatrix:
    """A single BB* stage whose dense form is exactly ``p``'s permutation matrix.

    The input switches of a size-m subnetwork live in ``B2``'s block-m factor
    (applied through ``B2^*``; switches are real and symmetric), the output
    switches in ``B1``'s block-m factor. Size-2 subnetworks use only the
    ``B2`` switch, so ``B1``'s block-2 factor stays identity.
    """
    n = p.n
    if not is_power_of_two(n):
        raise ValueError(f"permutation size must be a power of two, got {n}")
    levels = log2_exact(n)
    outer = _identity_diags(n, levels)  # B1
    inner = _identity_diags(n, levels)  # B2

    def set_switch(diags, size, slot, swap):
        diags[levels - log2_exact(size)][:, slot] = SWAP_SWITCH if swap else IDENTITY_SWITCH

    def route(perm: Sequence[int], offset: int):
        size = len(perm)
        if size == 1:
            return
        if size == 2:
            set_switch(inner, 2, offset // 2, perm[0] == 1)
            return
        h = size // 2
        inv = [0] * size
        for i, t in enumerate(perm):
            inv[t] = i
        side = [-1] * size
        for start in range(size):
            if side[start] >= 0:
                continue
            cur, side[start] = start, 0
            while True:
                nxt = inv[perm[cur] ^ h]
                if side[nxt] >= 0:
                    break
                side[nxt] = 1 - side[cur]
                mate = nxt ^ h
                if side[mate] >= 0:
                    break
                side[mate] = side[cur]
                cur = mate
        sub = ([0] * h, [0] * h)
        for e in range(size):
            sub[side[e]][e % h] = perm[e] % h
        for j in range(h):
            set_switch(inner, size, offset // 2 + j, side[j] == 1)
            set_switch(outer, size, offset // 2 + j, side[inv[j]] == 1)
        route(sub[0], offset)
        route(sub[1], offset + h)

    route(list(p.image), 0)
    return KMatrix(n, 1, [(_butterfly_from_diags(n, outer), _butterfly_from_diags(n, inner))])


# ---------------------------------------------------------------------------
# horizontal step matrices


@dataclass(frozen=True)
class StepMatrix:
    """At most one nonzero per column: ``cols[j]`` is ``(row, value)`` or ``None``."""

    n: int
    cols: tuple

    def __post_init__(self):
        cols = tuple(None if c is None else (int(c[0]), complex(c[1])) for c in self.cols)
        if len(cols) != self.n:
            raise ValueError(f"expected {self.n} columns, got {len(cols)}")
        for j, c in enumerate(cols):
            if c is not None and not 0 <= c[0] < self.n:
                raise ValueError(f"column {j} row {c[0]} out of range")
        object.__setattr__(self, "cols", cols)

    def nonzero(self) -> list[tuple[int, int, complex]]:
        """``(col, row, value)`` for columns holding a nonzero entry."""
        return [(j, c[0], c[1]) for j, c in enumerate(self.cols) if c is not None and c[1] != 0]

    def to_dense(self) -> np.ndarray:
        H = np.zeros((self.n, self.n), dtype=DTYPE)
        for j, i, v in self.nonzero():
            H[i, j] = v
        return H

    @classmethod
    def from_dense(cls, H) -> "StepMatrix":
        H = np.asarray(H, dtype=DTYPE)
        cols = []
        for j in range(H.shape[1]):
            rows = np.flatnonzero(H[:, j])
            if len(rows) > 1:
                raise StepViolation(f"column {j} has {len(rows)} nonzero entries")
            cols.append((int(rows[0]), H[rows[0], j]) if len(rows) else None)
        return cls(H.shape[0], cols)


def validate_step(H: StepMatrix) -> None:
    """Check neighboring nonzero columns: the right entry is 0..gap rows below the left one."""
    nz = H.nonzero()
    for (j1, i1, _), (j2, i2, _) in zip(nz, nz[1:]):
        if not 0 <= i2 - i1 <= j2 - j1:
            raise StepViolation(
                f"columns {j1} (row {i1}) and {j2} (row {i2}): offset {i2 - i1} outside [0, {j2 - j1}]"
            )


def step_to_butterfly(H: StepMatrix) -> ButterflyMatrix:
    """A butterfly matrix equal to the step matrix ``H``.

    Column ``j`` with entry ``(i, v)`` is routed top-down: at the block-k
    factor it enters at local position ``(k/2 if j is in the block's right
    half else 0) + i mod k/2`` and leaves at local position ``i mod k``.
    Coarse factors carry weight 1 along used paths, the block-2 factor
    carries the value. Two columns may share an intermediate slot only if
    they agree on its destination.
    """
    validate_step(H)
    n = H.n
    if not is_power_of_two(n) or n < 2:
        raise ValueError(f"step matrix size must be a power of two >= 2, got {n}")
    levels = log2_exact(n)
    diags = _identity_diags(n, levels - 1) + [np.zeros((4, n // 2), dtype=DTYPE)]
    claimed = [dict() for _ in range(levels)]
    for j, i, v in H.nonzero():
        for lv in range(levels):
            k = n >> lv
            half = k // 2
            base = (j // k) * k
            in_loc = (half if j % k >= half else 0) + i % half
            out_loc = i % k
            src = base + in_loc
            prev = claimed[lv].get(src)
            if prev is not None:
                if prev != base + out_loc:
                    raise RoutingConflict(
                        f"block-{k} slot {src} needed for rows {prev} and {base + out_loc}"
                    )
                continue
            claimed[lv][src] = base + out_loc
            slot = (j // k) * half + in_loc % half
            from_bottom = in_loc >= half
            to_bottom = out_loc >= half
            # upper input feeds D1 (top) / D3 (bottom); lower input feeds D2 / D4
            roles = (1, 3) if from_bottom else (0, 2)
            weight = v if k == 2 else 1
            diags[lv][roles[0], slot] = 0 if to_bottom else weight
            diags[lv][roles[1], slot] = weight if to_bottom else 0
    return _butterfly_from_diags(n, diags)


# ---------------------------------------------------------------------------
# n-sparse matrices


@dataclass(frozen=True)
class StepForm:
    """``S = P1 @ H @ P2 @ V @ P3`` with ``H`` and ``V^T`` horizontal step matrices."""

    p1: Permutation
    h: StepMatrix
    p2: Permutation
    vt: StepMatrix
    p3: Permutation

    def v_dense(self) -> np.ndarray:
        return self.vt.to_dense().T

    def to_dense(self) -> np.ndarray:
        return (
            self.p1.to_dense() @ self.h.to_dense() @ self.p2.to_dense()
            @ self.v_dense() @ self.p3.to_dense()
        )


def sparse_to_step_form(S: SparseMatrix) -> StepForm:
    """Factor an n x n matrix with at most n nonzeros as ``P1 H P2 V P3``.

    ``H`` places the entries in row-major order, one per column, on the dense
    rank of their row; ``V`` gathers each entry's input column in column-major
    order; ``P2`` reorders column-major positions into row-major ones.
    """
    n = S.rows
    if S.cols != n:
        raise NonSquare(f"expected a square matrix, got {S.shape}")
    if S.nnz > n:
        raise TooManyTriples(f"{S.nnz} nonzeros exceed n = {n}")
    row_major = list(S.triples)
    col_major = sorted(S.triples, key=lambda t: (t[1], t[0]))
    row_rank = {r: k for k, r in enumerate(sorted({t[0] for t in row_major}))}
    col_rank = {c: k for k, c in enumerate(sorted({t[1] for t in row_major}))}
    pos_in_row_major = {(r, c): t for t, (r, c, _) in enumerate(row_major)}

    h_cols = [None] * n
    for t, (r, c, v) in enumerate(row_major):
        h_cols[t] = (row_rank[r], v)
    vt_cols = [None] * n
    for u, (r, c, v) in enumerate(col_major):
        vt_cols[u] = (col_rank[c], 1)

    p3 = complete_permutation(col_rank, n)
    p2 = complete_permutation({u: pos_in_row_major[(r, c)] for u, (r, c, _) in enumerate(col_major)}, n)
    p1 = complete_permutation({k: r for r, k in row_rank.items()}, n)
    return StepForm(p1, StepMatrix(n, h_cols), p2, StepMatrix(n, vt_cols), p3)


def nsparse_to_kmatrix(S: SparseMatrix) -> KMatrix:
    """Width-5, expansion-1 K-matrix for an n-sparse square matrix.

    Stages in application order: ``P3``, ``V`` (as ``I @ B_V^*`` with
    ``B_V`` realizing the real 0/1 matrix ``V^T``), ``P2``, ``H`` (as
    ``B_H @ I^*``), ``P1``.
    """
    n = S.rows
    if not is_power_of_two(n) or n < 2:
        raise ValueError(f"size must be a power of two >= 2, got {n}")
    form = sparse_to_step_form(S)
    ident = ButterflyMatrix.identity(n)
    stages = [
        route_permutation(form.p3).stages[0],
        (ident, step_to_butterfly(form.vt)),
        route_permutation(form.p2).stages[0],
        (step_to_butterfly(form.h), ident),
        route_permutation(form.p1).stages[0],
    ]
    return KMatrix(n, 1, stages)


def _embed_stage(stage, size: int, offset: int):
    b1, b2 = stage
    return embed_butterfly(b1, size, offset), embed_butterfly(b2, size, offset)


def _replace_factor(B: ButterflyMatrix, index: int, diags) -> ButterflyMatrix:
    factors = list(B.factors)
    factors[index] = ButterflyFactor(B.n, factors[index].k, diags)
    return ButterflyMatrix(B.n, factors)


def _track_factor(n4: int, k: int, coeffs_by_block: dict) -> np.ndarray:
    """Diagonals for a block-k factor of size n4 with per-block 2x2 switch coefficients."""
    d = np.zeros((4, n4 // 2), dtype=DTYPE)
    half = k // 2
    for b in range(n4 // k):
        d[:, b * half : (b + 1) * half] = np.array(coeffs_by_block.get(b, IDENTITY_SWITCH))[:, None]
    return d


def sparse_to_kmatrix(S: SparseMatrix) -> KMatrix:
    """Expansion-4 K-matrix for an arbitrary square sparse matrix.

    Nonzeros are split row-major into ``ceil(s/n)`` chunks of at most n.
    The padded space holds four tracks of length n: x, spare, work, acc.
    For each chunk, the first of its five stages starts by copying x into
    work (folded into ``B2``'s coarsest factor), the chunk's own stages act
    on work, and the last stage ends by adding work into acc and clearing
    work (folded into ``B1``'s block-2n factor). For the final chunk that
    factor instead leaves work + acc on the work track and the coarsest
    factor swaps it onto track 0.
    """
    n = S.rows
    if S.cols != n:
        raise NonSquare(f"expected a square matrix, got {S.shape}")
    if not is_power_of_two(n) or n < 2:
        raise ValueError(f"size must be a power of two >= 2, got {n}")
    N = 4 * n
    chunks = [S.triples[i : i + n] for i in range(0, S.nnz, n)]
    if len(chunks) <= 1:
        inner = nsparse_to_kmatrix(S)
        return KMatrix(n, 4, [_embed_stage(st, N, 0) for st in inner.stages])

    # block-N factor pairs track 0 with 2 and 1 with 3; block-2n pairs 0-1 and 2-3
    copy_stored = _track_factor(N, N, {})
    copy_stored[:, :n] = np.array([1, 1, 0, 0])[:, None]  # adjoint of "work := x"
    accumulate = _track_factor(N, 2 * n, {1: (0, 0, 1, 1)})
    final_sum = _track_factor(N, 2 * n, {1: (1, 1, 0, 0)})
    to_front = _track_factor(N, N, {})
    to_front[:, :n] = np.array(SWAP_SWITCH)[:, None]

    stages = []
    for idx, chunk in enumerate(chunks):
        part = nsparse_to_kmatrix(SparseMatrix(n, n, chunk))
        local = [_embed_stage(st, N, 2 * n) for st in part.stages]
        b1, b2 = local[0]
        local[0] = (b1, _replace_factor(b2, 0, copy_stored))
        b1, b2 = local[-1]
        if idx < len(chunks) - 1:
            b1 = _replace_factor(b1, 1, accumulate)
        else:
            b1 = _replace_factor(_replace_factor(b1, 1, final_sum), 0, to_front)
        local[-1] = (b1, b2)
        stages += local
    return KMatrix(n, 4, stages)


# ---------------------------------------------------------------------------
# closure and the circuit pipeline


def pad_expansion(K: KMatrix, e: int) -> KMatrix:
    """The same logical matrix at a larger expansion, padding every stage with identity."""
    if e == K.e:
        return K
    if e < K.e or e % K.e:
        raise ValueError(f"cannot pad expansion {K.e} to {e}")
    size = K.n * e
    return KMatrix(K.n, e, [_embed_stage(st, size, 0) for st in K.stages])


def projector_stage(n: int, size: int):
    """BB* stage for ``diag(I_n, 0)`` of the given size."""
    ident = ButterflyMatrix.identity(size)
    if size == 1:
        return ident, ident
    d = np.zeros((4, size // 2), dtype=DTYPE)
    pos = np.arange(size // 2)
    d[0] = 2 * pos < n
    d[3] = 2 * pos + 1 < n
    return _replace_factor(ident, len(ident.factors) - 1, d), ident


def kmatrix_product(K1: KMatrix, K2: KMatrix) -> KMatrix:
    """``K1 @ K2`` with width ``w1 + w2 + 1``: a truncation projector sits between them."""
    if K1.n != K2.n:
        raise ValueError(f"size mismatch: {K1.n} vs {K2.n}")
    e = max(K1.e, K2.e)
    A, B = pad_expansion(K1, e), pad_expansion(K2, e)
    return KMatrix(K1.n, e, B.stages + (projector_stage(K1.n, K1.n * e),) + A.stages)


def circuit_to_kmatrix(c: Circuit) -> KMatrix:
    """K-matrix for the square linear map of ``c`` via its layered sparse product."""
    if not is_linear(c):
        raise NonLinearCircuit("only linear circuits convert to K-matrices")
    n = c.n_inputs
    if c.n_outputs != n:
        raise NonSquare(f"circuit maps {n} inputs to {c.n_outputs} outputs")
    if not is_power_of_two(n):
        raise ValueError(f"circuit size must be a power of two, got {n}")
    prod = compile_to_sparse_product(c)
    s_pad = prod.inner_dim
    select = complete_permutation({slot: r for r, slot in enumerate(prod.selector)}, s_pad)
    acc = None
    for f in prod.factors:
        K = sparse_to_kmatrix(f)
        acc = K if acc is None else kmatrix_product(K, acc)
    routed = route_permutation(select)
    acc = routed if acc is None else kmatrix_product(routed, acc)
    return KMatrix(n, acc.e * s_pad // n, acc.stages)
