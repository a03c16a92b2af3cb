"""Scalars, dense/sparse containers, reference matrix generators and rank checks.

Every scalar is a complex double. Dense matrices and vectors are plain
``numpy`` arrays of dtype ``complex128``; sparse matrices are coordinate
listings held in :class:`SparseMatrix`.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DTYPE = np.complex128


class FormatError(ValueError):
    """Malformed text input."""


class NonFiniteError(ArithmeticError):
    """A computation produced NaN or Inf."""


def is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


def log2_exact(n: int) -> int:
    if not is_power_of_two(n):
        raise ValueError(f"{n} is not a power of two")
    return int(n).bit_length() - 1


def as_vector(x, length: int | None = None) -> np.ndarray:
    v = np.asarray(x, dtype=DTYPE)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {v.shape}")
    if length is not None and v.shape[0] != length:
        raise ValueError(f"vector length {v.shape[0]} != {length}")
    return v


def as_dense(W) -> np.ndarray:
    M = np.asarray(W, dtype=DTYPE)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {M.shape}")
    return M


def check_finite(a: np.ndarray, what: str = "value") -> None:
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"non-finite {what}")


def root_of_unity(k: int, n: int) -> complex:
    """``exp(-2*pi*i*k/n)``, exact at multiples of a quarter turn."""
    k %= n
    if (4 * k) % n == 0:
        return (1 + 0j, -1j, -1 + 0j, 1j)[4 * k // n]
    return cmath.exp(-2j * math.pi * k / n)


@dataclass(frozen=True)
class SparseMatrix:
    """Coordinate listing of the nonzero entries of a ``rows x cols`` matrix.

    Triples are kept sorted row-major. Duplicate positions, out-of-range
    indices and stored zeros are rejected.
    """

    rows: int
    cols: int
    triples: tuple[tuple[int, int, complex], ...]

    def __init__(self, rows: int, cols: int, triples: Iterable = ()):
        if rows < 0 or cols < 0:
            raise ValueError("negative dimension")
        seen = set()
        clean = []
        for r, c, v in triples:
            r, c, v = int(r), int(c), complex(v)
            if not (0 <= r < rows and 0 <= c < cols):
                raise ValueError(f"index ({r}, {c}) out of range for {rows}x{cols}")
            if (r, c) in seen:
                raise ValueError(f"duplicate entry at ({r}, {c})")
            if v == 0:
                raise ValueError(f"stored zero at ({r}, {c})")
            if not cmath.isfinite(v):
                raise NonFiniteError(f"non-finite entry at ({r}, {c})")
            seen.add((r, c))
            clean.append((r, c, v))
        clean.sort(key=lambda t: (t[0], t[1]))
        object.__setattr__(self, "rows", int(rows))
        object.__setattr__(self, "cols", int(cols))
        object.__setattr__(self, "triples", tuple(clean))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return len(self.triples)

    @classmethod
    def from_dense(cls, W) -> "SparseMatrix":
        M = as_dense(W)
        rs, cs = np.nonzero(M)
        return cls(M.shape[0], M.shape[1], [(r, c, M[r, c]) for r, c in zip(rs, cs)])

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(n, n, [(i, i, 1) for i in range(n)])

    def to_dense(self) -> np.ndarray:
        M = np.zeros((self.rows, self.cols), dtype=DTYPE)
        for r, c, v in self.triples:
            M[r, c] = v
        return M

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix(self.cols, self.rows, [(c, r, v) for r, c, v in self.triples])


def densify_sparse(S: SparseMatrix) -> np.ndarray:
    return S.to_dense()


def _cmul(a, b) -> np.ndarray:
    """Complex product from separately rounded real operations.

    numpy's vectorized complex multiply may round differently from its
    scalar path; spelling it out keeps dense and sparse kernels bit-identical.
    """
    a, b = np.asarray(a, dtype=DTYPE), np.asarray(b, dtype=DTYPE)
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=DTYPE)
    out.real = a.real * b.real - a.imag * b.imag
    out.imag = a.real * b.imag + a.imag * b.real
    return out


def dense_mvm(W, x) -> np.ndarray:
    """``W @ x`` summed in ascending column order.

    ``x`` may also be a 2-d array whose columns are separate vectors.
    """
    W = as_dense(W)
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[0] != W.shape[1]:
        raise ValueError(f"dimension mismatch: {W.shape} @ {x.shape}")
    y = np.zeros((W.shape[0],) + x.shape[1:], dtype=DTYPE)
    bcast = (-1,) + (1,) * (x.ndim - 1)
    for j in range(W.shape[1]):
        y += _cmul(W[:, j].reshape(bcast), x[j])
    return y


def sparse_mvm(S: SparseMatrix, x) -> np.ndarray:
    """``S @ x`` touching only the stored triples, same summation order as dense_mvm."""
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[0] != S.cols:
        raise ValueError(f"dimension mismatch: {S.shape} @ {x.shape}")
    y = np.zeros((S.rows,) + x.shape[1:], dtype=DTYPE)
    for r, c, v in S.triples:
        y[r] += _cmul(v, x[c])
    return y


def gen_fourier(n: int) -> np.ndarray:
    if not is_power_of_two(n):
        raise ValueError(f"Fourier size must be a power of two, got {n}")
    idx = np.arange(n)
    F = np.empty((n, n), dtype=DTYPE)
    for i in idx:
        for j in idx:
            F[i, j] = root_of_unity(int(i * j), n)
    return F


def gen_vandermonde(a, n: int) -> np.ndarray:
    a = as_vector(a)
    if len(set(complex(v) for v in a)) != len(a):
        raise ValueError("Vandermonde nodes must be pairwise distinct")
    V = np.empty((len(a), n), dtype=DTYPE)
    if n:
        V[:, 0] = 1  # 0**0 == 1
    for j in range(1, n):
        V[:, j] = V[:, j - 1] * a
    return V


def gen_cauchy(s, t) -> np.ndarray:
    s, t = as_vector(s), as_vector(t)
    if len(set(complex(v) for v in s)) != len(s):
        raise ValueError("Cauchy s entries must be distinct")
    if len(set(complex(v) for v in t)) != len(t):
        raise ValueError("Cauchy t entries must be distinct")
    diff = s[:, None] - t[None, :]
    if np.any(diff == 0):
        raise ValueError("Cauchy s and t must not share a value")
    return 1 / diff


def gen_shift(n: int) -> SparseMatrix:
    """``Z[i, j] = 1`` iff ``i == j - 1``: ``Z @ x`` shifts entries up by one."""
    if n < 1:
        raise ValueError("shift size must be >= 1")
    return SparseMatrix(n, n, [(i, i + 1, 1) for i in range(n - 1)])


def gen_lowrank(L, R) -> np.ndarray:
    L, R = np.asarray(L, dtype=DTYPE), np.asarray(R, dtype=DTYPE)
    if L.ndim != 2 or R.ndim != 2 or L.shape[1] != R.shape[0]:
        raise ValueError(f"inner dimensions disagree: {L.shape} x {R.shape}")
    return L @ R


def displacement_residual(W, L, R) -> np.ndarray:
    W, L, R = as_dense(W), as_dense(L), as_dense(R)
    n = W.shape[0]
    if any(M.shape != (n, n) for M in (W, L, R)):
        raise ValueError("displacement residual needs three n x n matrices")
    return L @ W - W @ R


def numeric_rank(M, tol: float = 1e-9) -> int:
    """Rank by Gaussian elimination with complete pivoting.

    A pivot counts while its magnitude exceeds ``tol`` times the largest
    magnitude of the original matrix.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = np.array(as_dense(M), dtype=DTYPE)
    if A.size == 0:
        return 0
    scale = np.abs(A).max()
    if scale == 0:
        return 0
    threshold = tol * scale
    rank = 0
    rows, cols = A.shape
    for k in range(min(rows, cols)):
        sub = np.abs(A[k:, k:])
        i, j = np.unravel_index(np.argmax(sub), sub.shape)
        if sub[i, j] <= threshold:
            break
        i += k
        j += k
        A[[k, i]] = A[[i, k]]
        A[:, [k, j]] = A[:, [j, k]]
        A[k + 1 :, k:] -= np.outer(A[k + 1 :, k] / A[k, k], A[k, k:])
        rank += 1
    return rank


def frobenius_distance(A, B, relative: bool = False) -> float:
    A, B = as_dense(A), as_dense(B)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    d = float(np.sqrt(np.sum(np.abs(A - B) ** 2)))
    if relative:
        d /= max(1.0, float(np.sqrt(np.sum(np.abs(A) ** 2))))
    return d


# ---------------------------------------------------------------------------
# text formats

def format_scalar(v: complex) -> str:
    v = complex(v)
    v = complex(v.real + 0.0, v.imag + 0.0)  # print -0 as 0
    if v.imag == 0:
        return f"{v.real:.17g}"
    return f"{v.real:.17g}:{v.imag:.17g}"


def parse_scalar(tok: str) -> complex:
    try:
        if ":" in tok:
            re_, im_ = tok.split(":")
            v = complex(float(re_), float(im_))
        else:
            v = complex(float(tok), 0.0)
    except ValueError as exc:
        raise FormatError(f"bad scalar {tok!r}") from exc
    if not cmath.isfinite(v):
        raise FormatError(f"non-finite scalar {tok!r}")
    return v


def parse_count(tok: str, what: str = "count") -> int:
    try:
        n = int(tok)
    except ValueError as exc:
        raise FormatError(f"bad {what} {tok!r}") from exc
    if n < 0:
        raise FormatError(f"negative {what} {n}")
    return n


def content_lines(text: str) -> list[str]:
    """Non-blank lines with ``#`` comments stripped."""
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(line)
    return out


def dump_dense(W) -> str:
    W = as_dense(W)
    lines = [f"dense {W.shape[0]} {W.shape[1]}"]
    lines += [" ".join(format_scalar(v) for v in row) for row in W]
    return "\n".join(lines) + "\n"


def parse_dense_lines(lines: Sequence[str]) -> tuple[np.ndarray, int]:
    head = lines[0].split()
    if len(head) != 3 or head[0] != "dense":
        raise FormatError(f"expected 'dense <rows> <cols>', got {lines[0]!r}")
    rows, cols = parse_count(head[1], "rows"), parse_count(head[2], "cols")
    if len(lines) < 1 + rows:
        raise FormatError("dense matrix truncated")
    W = np.zeros((rows, cols), dtype=DTYPE)
    for i in range(rows):
        toks = lines[1 + i].split()
        if len(toks) != cols:
            raise FormatError(f"row {i} has {len(toks)} entries, expected {cols}")
        W[i] = [parse_scalar(t) for t in toks]
    return W, 1 + rows


def parse_dense(text: str) -> np.ndarray:
    lines = content_lines(text)
    if not lines:
        raise FormatError("empty input")
    W, used = parse_dense_lines(lines)
    if used != len(lines):
        raise FormatError("trailing content after dense matrix")
    return W


def dump_sparse(S: SparseMatrix) -> str:
    lines = [f"sparse {S.rows} {S.cols} {S.nnz}"]
    lines += [f"{r} {c} {format_scalar(v)}" for r, c, v in S.triples]
    return "\n".join(lines) + "\n"


def parse_sparse_lines(lines: Sequence[str]) -> tuple[SparseMatrix, int]:
    head = lines[0].split()
    if len(head) != 4 or head[0] != "sparse":
        raise FormatError(f"expected 'sparse <rows> <cols> <nnz>', got {lines[0]!r}")
    rows, cols, nnz = (parse_count(t) for t in head[1:])
    if len(lines) < 1 + nnz:
        raise FormatError("sparse matrix truncated")
    triples = []
    for line in lines[1 : 1 + nnz]:
        toks = line.split()
        if len(toks) != 3:
            raise FormatError(f"bad triple line {line!r}")
        triples.append((parse_count(toks[0], "row"), parse_count(toks[1], "col"), parse_scalar(toks[2])))
    try:
        S = SparseMatrix(rows, cols, triples)
    except (ValueError, NonFiniteError) as exc:
        raise FormatError(str(exc)) from exc
    return S, 1 + nnz


def parse_sparse(text: str) -> SparseMatrix:
    lines = content_lines(text)
    if not lines:
        raise FormatError("empty input")
    S, used = parse_sparse_lines(lines)
    if used != len(lines):
        raise FormatError("trailing content after sparse matrix")
    return S


def dump_vector(x) -> str:
    x = as_vector(x)
    body = " ".join(format_scalar(v) for v in x)
    return f"vector {len(x)}\n{body}\n"


def parse_vector(text: str) -> np.ndarray:
    lines = content_lines(text)
    if not lines:
        raise FormatError("empty input")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "vector":
        raise FormatError(f"expected 'vector <len>', got {lines[0]!r}")
    n = parse_count(head[1], "length")
    toks = [t for line in lines[1:] for t in line.split()]
    if len(toks) != n:
        raise FormatError(f"vector has {len(toks)} entries, expected {n}")
    return np.array([parse_scalar(t) for t in toks], dtype=DTYPE)
