"""Butterfly factor matrices, butterfly matrices and K-matrices.

A butterfly factor matrix of size ``n`` and block size ``k`` is block
diagonal with ``n/k`` blocks ``[[D1, D2], [D3, D4]]`` of ``k/2``-diagonals.
Its four diagonals are stored as a ``(4, n/2)`` array: column
``p = b*(k/2) + j`` holds the coefficients acting on positions
``top = b*k + j`` and ``bottom = top + k/2``.

A :class:`KMatrix` holds ``w`` stages ``(B1, B2)`` in application order;
stage ``i`` acts as ``B1 @ B2^*`` on the ``n*e``-dimensional padded vector,
and the logical matrix is the leading ``n x n`` block of the product.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np

from .numfield import (
    DTYPE,
    FormatError,
    content_lines,
    format_scalar,
    is_power_of_two,
    log2_exact,
    parse_count,
    parse_scalar,
)


@lru_cache(maxsize=None)
def pair_indices(n: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top and bottom positions for every diagonal slot of a size-n, block-k factor."""
    half = k // 2
    p = np.arange(n // 2)
    top = (p // half) * k + p % half
    top.setflags(write=False)
    bot = top + half
    bot.setflags(write=False)
    return top, bot


class OpCounter:
    """Tally of multiply-adds performed by K-matrix application."""

    def __init__(self):
        self.madds = 0


@dataclass(frozen=True, eq=False)
class ButterflyFactor:
    n: int
    k: int
    diags: np.ndarray

    def __post_init__(self):
        if not is_power_of_two(self.n) or not is_power_of_two(self.k) or not 2 <= self.k <= self.n:
            raise ValueError(f"bad butterfly factor size n={self.n}, k={self.k}")
        d = np.array(self.diags, dtype=DTYPE)
        if d.shape != (4, self.n // 2):
            raise ValueError(f"diagonals must have shape (4, {self.n // 2}), got {d.shape}")
        d.setflags(write=False)
        object.__setattr__(self, "diags", d)

    @classmethod
    def identity(cls, n: int, k: int) -> "ButterflyFactor":
        d = np.zeros((4, n // 2), dtype=DTYPE)
        d[0] = d[3] = 1
        return cls(n, k, d)

    def conjugate_transpose(self) -> "ButterflyFactor":
        d = self.diags.conj()
        return ButterflyFactor(self.n, self.k, d[[0, 2, 1, 3]])

    def coefficients(self, adjoint: bool = False) -> np.ndarray:
        """Diagonals as applied: for ``adjoint`` those of the conjugate transpose."""
        if adjoint:
            return self.diags.conj()[[0, 2, 1, 3]]
        return self.diags

    def apply(self, x: np.ndarray, adjoint: bool = False) -> np.ndarray:
        top, bot = pair_indices(self.n, self.k)
        c = self.coefficients(adjoint)
        if x.ndim > 1:
            c = c.reshape(c.shape + (1,) * (x.ndim - 1))
        xt, xb = x[top], x[bot]
        y = np.empty_like(x)
        y[top] = c[0] * xt + c[1] * xb
        y[bot] = c[2] * xt + c[3] * xb
        return y

    def to_dense(self) -> np.ndarray:
        top, bot = pair_indices(self.n, self.k)
        M = np.zeros((self.n, self.n), dtype=DTYPE)
        M[top, top] = self.diags[0]
        M[top, bot] = self.diags[1]
        M[bot, top] = self.diags[2]
        M[bot, bot] = self.diags[3]
        return M


def factor_mvm(F: ButterflyFactor, x) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[0] != F.n:
        raise ValueError(f"factor of size {F.n} applied to length {x.shape[0]}")
    return F.apply(x)


@dataclass(frozen=True, eq=False)
class ButterflyMatrix:
    """``factors[0] @ factors[1] @ ...`` with block sizes ``n, n/2, ..., 2``."""

    n: int
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        levels = log2_exact(self.n)
        if len(self.factors) != levels:
            raise ValueError(f"butterfly of size {self.n} needs {levels} factors")
        for i, f in enumerate(self.factors):
            if f.n != self.n or f.k != self.n >> i:
                raise ValueError(f"factor {i} has size {f.n}, block {f.k}")

    @classmethod
    def identity(cls, n: int) -> "ButterflyMatrix":
        return cls(n, [ButterflyFactor.identity(n, n >> i) for i in range(log2_exact(n))])

    def apply(self, x: np.ndarray, counter: OpCounter | None = None) -> np.ndarray:
        for f in reversed(self.factors):
            x = f.apply(x)
            if counter is not None:
                counter.madds += 2 * self.n
        return x

    def apply_adjoint(self, x: np.ndarray, counter: OpCounter | None = None) -> np.ndarray:
        """``B^* x``: conjugate-transposed factors in reversed order."""
        for f in self.factors:
            x = f.apply(x, adjoint=True)
            if counter is not None:
                counter.madds += 2 * self.n
        return x

    def conjugate_transpose_factors(self) -> list[ButterflyFactor]:
        """The factors of ``B^*`` in product order (leftmost first)."""
        return [f.conjugate_transpose() for f in reversed(self.factors)]

    def to_dense(self) -> np.ndarray:
        return self.apply(np.eye(self.n, dtype=DTYPE))


def butterfly_mvm(B: ButterflyMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[0] != B.n:
        raise ValueError(f"butterfly of size {B.n} applied to length {x.shape[0]}")
    return B.apply(x)


def conjugate_transpose_stage(B: ButterflyMatrix, x) -> np.ndarray:
    """Apply ``B^*`` to ``x``."""
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[0] != B.n:
        raise ValueError(f"butterfly of size {B.n} applied to length {x.shape[0]}")
    return B.apply_adjoint(x)


def embed_butterfly(B: ButterflyMatrix, size: int, offset: int) -> ButterflyMatrix:
    """``B`` placed block-diagonally at ``offset`` inside a size-``size`` identity.

    ``offset`` must be a multiple of ``B.n``; factors coarser than ``B.n``
    stay identity.
    """
    m = B.n
    if size % m or offset % m or not 0 <= offset < size:
        raise ValueError(f"cannot embed size {m} at offset {offset} in {size}")
    factors = []
    for i in range(log2_exact(size)):
        k = size >> i
        f = ButterflyFactor.identity(size, k)
        if k <= m:
            d = np.array(f.diags)
            d[:, offset // 2 : (offset + m) // 2] = B.factors[log2_exact(m) - log2_exact(k)].diags
            f = ButterflyFactor(size, k, d)
        factors.append(f)
    return ButterflyMatrix(size, factors)


Stage = tuple  # (B1, B2) acting as B1 @ B2^*


@dataclass(frozen=True, eq=False)
class KMatrix:
    n: int
    e: int
    stages: tuple

    def __post_init__(self):
        if not is_power_of_two(self.n) or not is_power_of_two(self.e):
            raise ValueError(f"n={self.n} and e={self.e} must be powers of two")
        object.__setattr__(self, "stages", tuple(tuple(st) for st in self.stages))
        if not self.stages:
            raise ValueError("a K-matrix needs at least one stage")
        for b1, b2 in self.stages:
            if b1.n != self.size or b2.n != self.size:
                raise ValueError(f"stage size must be n*e = {self.size}")

    @property
    def size(self) -> int:
        return self.n * self.e

    @property
    def w(self) -> int:
        return len(self.stages)

    @classmethod
    def identity(cls, n: int, e: int = 1, w: int = 1) -> "KMatrix":
        ident = ButterflyMatrix.identity(n * e)
        return cls(n, e, [(ident, ident)] * w)

    def with_identity_stage(self) -> "KMatrix":
        ident = ButterflyMatrix.identity(self.size)
        return KMatrix(self.n, self.e, self.stages + ((ident, ident),))

    def applied_factors(self) -> Iterator[tuple[int, int, int, ButterflyFactor, bool]]:
        """``(stage, which, index, factor, adjoint)`` in application order.

        ``which`` is 0 for ``B1`` and 1 for ``B2``; ``index`` is the factor's
        position within its butterfly.
        """
        for s, (b1, b2) in enumerate(self.stages):
            for i, f in enumerate(b2.factors):
                yield s, 1, i, f, True
            for i in range(len(b1.factors) - 1, -1, -1):
                yield s, 0, i, b1.factors[i], False

    def apply_padded(self, v: np.ndarray, counter: OpCounter | None = None) -> np.ndarray:
        for b1, b2 in self.stages:
            v = b1.apply(b2.apply_adjoint(v, counter), counter)
        return v

    def params(self) -> np.ndarray:
        """All diagonal coefficients, stage by stage, B1 before B2, factors in product order."""
        chunks = [f.diags.ravel() for b1, b2 in self.stages for B in (b1, b2) for f in B.factors]
        return np.concatenate(chunks) if chunks else np.zeros(0, dtype=DTYPE)

    def with_params(self, theta) -> "KMatrix":
        theta = np.asarray(theta, dtype=DTYPE)
        if theta.shape != (param_count(self),):
            raise ValueError(f"expected {param_count(self)} parameters, got {theta.shape}")
        N = self.size
        per = 2 * N
        pos = 0
        stages = []
        for b1, b2 in self.stages:
            pair = []
            for B in (b1, b2):
                fs = []
                for f in B.factors:
                    fs.append(ButterflyFactor(N, f.k, theta[pos : pos + per].reshape(4, N // 2)))
                    pos += per
                pair.append(ButterflyMatrix(N, fs))
            stages.append(tuple(pair))
        return KMatrix(self.n, self.e, stages)


def kmatrix_mvm(K: KMatrix, x, counter: OpCounter | None = None) -> np.ndarray:
    """``K @ x``: pad to ``n*e``, run every stage, truncate to ``n``."""
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[0] != K.n:
        raise ValueError(f"K-matrix of size {K.n} applied to length {x.shape[0]}")
    v = np.zeros((K.size,) + x.shape[1:], dtype=DTYPE)
    v[: K.n] = x
    return K.apply_padded(v, counter)[: K.n]


def kmatrix_densify(K: KMatrix) -> np.ndarray:
    return kmatrix_mvm(K, np.eye(K.n, dtype=DTYPE))


def param_count(K: KMatrix) -> int:
    N = K.size
    return 4 * K.w * N * log2_exact(N)


def random_kmatrix(n: int, w: int, e: int = 1, seed=None) -> KMatrix:
    """Diagonals with real and imaginary parts uniform in ``[-sigma, sigma]``, ``sigma = (n*e)**-0.5``."""
    if not is_power_of_two(n) or not is_power_of_two(e) or w < 1:
        raise ValueError(f"bad K-matrix shape n={n}, w={w}, e={e}")
    rng = np.random.default_rng(seed)
    N = n * e
    sigma = N ** -0.5
    stages = []
    for _ in range(w):
        pair = []
        for _ in range(2):
            fs = []
            for i in range(log2_exact(N)):
                re = rng.uniform(-sigma, sigma, (4, N // 2))
                im = rng.uniform(-sigma, sigma, (4, N // 2))
                fs.append(ButterflyFactor(N, N >> i, re + 1j * im))
            pair.append(ButterflyMatrix(N, fs))
        stages.append(tuple(pair))
    return KMatrix(n, e, stages)


# ---------------------------------------------------------------------------
# text format

def _dump_butterfly(B: ButterflyMatrix) -> list[str]:
    lines = [f"butterfly {B.n}"]
    for f in B.factors:
        half = f.k // 2
        vals = []
        for b in range(f.n // f.k):
            for role in range(4):
                vals += [format_scalar(v) for v in f.diags[role, b * half : (b + 1) * half]]
        lines.append(f"factor {f.k} " + " ".join(vals))
    return lines


def dump_kmatrix(K: KMatrix) -> str:
    lines = [f"kmatrix {K.n} {K.e} {K.w}"]
    for b1, b2 in K.stages:
        lines += _dump_butterfly(b1)
        lines += _dump_butterfly(b2)
    return "\n".join(lines) + "\n"


def _parse_butterfly(lines, pos: int, N: int) -> tuple[ButterflyMatrix, int]:
    if pos >= len(lines):
        raise FormatError("K-matrix truncated: missing butterfly block")
    head = lines[pos].split()
    if len(head) != 2 or head[0] != "butterfly" or parse_count(head[1]) != N:
        raise FormatError(f"expected 'butterfly {N}', got {lines[pos]!r}")
    pos += 1
    factors = []
    for i in range(log2_exact(N)):
        if pos >= len(lines):
            raise FormatError("butterfly truncated")
        toks = lines[pos].split()
        k = N >> i
        if len(toks) != 2 + 2 * N or toks[0] != "factor" or parse_count(toks[1]) != k:
            raise FormatError(f"expected 'factor {k}' with {2 * N} scalars, got {lines[pos][:40]!r}")
        vals = [parse_scalar(t) for t in toks[2:]]
        half = k // 2
        d = np.zeros((4, N // 2), dtype=DTYPE)
        it = iter(vals)
        for b in range(N // k):
            for role in range(4):
                d[role, b * half : (b + 1) * half] = [next(it) for _ in range(half)]
        factors.append(ButterflyFactor(N, k, d))
        pos += 1
    return ButterflyMatrix(N, factors), pos


def parse_kmatrix(text: str) -> KMatrix:
    lines = content_lines(text)
    if not lines:
        raise FormatError("empty input")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "kmatrix":
        raise FormatError(f"expected 'kmatrix <n> <e> <w>', got {lines[0]!r}")
    n, e, w = (parse_count(t) for t in head[1:])
    if not is_power_of_two(n) or not is_power_of_two(e) or w < 1:
        raise FormatError(f"bad K-matrix header {lines[0]!r}")
    pos = 1
    stages = []
    for _ in range(w):
        b1, pos = _parse_butterfly(lines, pos, n * e)
        b2, pos = _parse_butterfly(lines, pos, n * e)
        stages.append((b1, b2))
    if pos != len(lines):
        raise FormatError("trailing content after K-matrix")
    return KMatrix(n, e, stages)
