"""Random instance generators and independent reference oracles for the tests."""

from __future__ import annotations

import numpy as np

from kaleido.butterfly import KMatrix
from kaleido.circuit import Circuit, Input, LinComb, Mul
from kaleido.numfield import SparseMatrix

XP = np.clongdouble  # extended precision for finite-difference oracles


def rel_err(A, B) -> float:
    A, B = np.asarray(A), np.asarray(B)
    return float(np.linalg.norm(A - B) / max(1.0, np.linalg.norm(A)))


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_linear_circuit(rng, n: int, s_max: int, d_max: int, m: int | None = None) -> Circuit:
    """Layered linear circuit with exactly ``d`` layers and at most ``s_max`` gates in total.

    Each gate reads one gate from the previous layer (fixing the depth)
    and one random earlier gate.
    """
    d = int(rng.integers(1, d_max + 1))
    budget = s_max - n
    d = min(d, budget)
    counts = np.ones(d, dtype=int)
    extra = int(rng.integers(0, budget - d + 1))
    counts += np.bincount(rng.integers(0, d, extra), minlength=d)
    gates = [Input(i) for i in range(n)]
    prev = list(range(n))
    for k in range(d):
        cur = []
        ready = len(gates)  # gates of earlier layers only
        for _ in range(counts[k]):
            a = prev[int(rng.integers(len(prev)))]
            b = int(rng.integers(ready))
            alpha, beta = (complex(v) for v in crandn(rng, 2) / 2)
            if rng.random() < 0.5:
                a, b = b, a
            cur.append(len(gates))
            gates.append(LinComb(alpha, a, beta, b))
        prev = cur
    pool = list(range(n, len(gates)))
    if m is None:
        m = int(rng.integers(1, min(len(pool), 8) + 1))
    outputs = [int(o) for o in rng.choice(pool, size=min(m, len(pool)), replace=False)]
    return Circuit(n, gates, outputs)


def random_square_circuit(rng, n: int, s_max: int, d_max: int) -> Circuit:
    """Linear circuit with ``n`` distinct outputs, including the last layer."""
    c = random_linear_circuit(rng, n, s_max, d_max, m=n)
    while len(c.outputs) < n:
        c = random_linear_circuit(rng, n, s_max, d_max, m=n)
    return c


def random_mixed_circuit(rng, n: int, s_max: int) -> Circuit:
    """Single-output circuit mixing LinComb and Mul gates with values kept O(1).

    Coefficients satisfy ``|alpha| + |beta| <= 1`` and inputs lie in the unit
    disk, so every intermediate value stays in the unit disk.
    """
    s = int(rng.integers(n + 1, s_max + 1))
    gates = [Input(i) for i in range(n)]
    while len(gates) < s:
        i = len(gates)
        a = int(rng.integers(max(0, i - 8), i))  # a recent gate keeps the graph deep
        b = int(rng.integers(i))
        if rng.random() < 0.35:
            gates.append(Mul(a, b))
        else:
            w = crandn(rng, 2)
            w = w / (np.abs(w).sum() * rng.uniform(1.0, 1.3))
            gates.append(LinComb(complex(w[0]), a, complex(w[1]), b))
    return Circuit(n, gates, [len(gates) - 1])


def random_point(rng, n: int) -> np.ndarray:
    r = np.sqrt(rng.uniform(0.25, 1.0, n))
    return r * np.exp(2j * np.pi * rng.random(n))


def eval_circuit_xp(c: Circuit, x) -> np.ndarray:
    """Straight-line evaluation in extended precision, independent of the package evaluator."""
    vals = [XP(v) for v in x]
    for g in c.gates[c.n_inputs :]:
        if isinstance(g, LinComb):
            vals.append(XP(g.alpha) * vals[g.src1] + XP(g.beta) * vals[g.src2])
        else:
            vals.append(vals[g.src1] * vals[g.src2])
    return np.array([vals[o] for o in c.outputs])


def circuit_fd(c: Circuit, a, h: float = 1e-5) -> tuple[np.ndarray, np.ndarray]:
    """Central differences of the single output with respect to re and im of each input."""
    a = np.asarray(a, dtype=complex)
    d_re = np.zeros(len(a), dtype=complex)
    d_im = np.zeros(len(a), dtype=complex)
    for k in range(len(a)):
        for step, out in ((h, d_re), (1j * h, d_im)):
            p, m = a.copy(), a.copy()
            p[k] += step
            m[k] -= step
            out[k] = complex((eval_circuit_xp(c, p)[0] - eval_circuit_xp(c, m)[0]) / XP(2 * h))
    return d_re, d_im


def componentwise_ok(analytic, fd, rtol: float = 1e-6, floor: float = 1e-8) -> np.ndarray:
    """Relative agreement, with absolute comparison where ``|fd| < floor``."""
    analytic, fd = np.asarray(analytic), np.asarray(fd)
    scale = np.where(np.abs(fd) < floor, 1.0, np.abs(fd))
    return np.abs(analytic - fd) <= rtol * scale


# ---------------------------------------------------------------------------
# K-matrix reference: dense products built straight from the parameter vector

def _factor_slots(N: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column of every diagonal coefficient of a block-``k`` factor, shape (4, N/2)."""
    half = k // 2
    top = np.array([b + j for b in range(0, N, k) for j in range(half)])
    bot = top + half
    return np.stack([top, top, bot, bot]), np.stack([top, bot, top, bot])


def dense_factors(K: KMatrix, theta, dtype=XP) -> list[list[np.ndarray]]:
    """Per (stage, B1/B2) the dense factors in block-size order ``N, N/2, ..., 2``.

    Parameters are laid out stage by stage, B1 then B2, factors in block-size
    order with the four diagonals of each factor stacked.
    """
    N = K.size
    levels = N.bit_length() - 1
    theta = np.asarray(theta)
    per = 2 * N
    out = []
    for blk in range(2 * K.w):
        mats = []
        for i in range(levels):
            pos = (blk * levels + i) * per
            F = np.zeros((N, N), dtype=dtype)
            rows, cols = _factor_slots(N, N >> i)
            F[rows, cols] = theta[pos : pos + per].reshape(4, N // 2).astype(dtype)
            mats.append(F)
        out.append(mats)
    return out


def _chain(mats, N: int) -> np.ndarray:
    out = np.eye(N, dtype=XP)
    for M in mats:
        out = out @ M
    return out


def dense_from_factors(K: KMatrix, mats) -> np.ndarray:
    N = K.size
    E = np.eye(N, dtype=XP)
    for s in range(K.w):
        B1, B2 = (_chain(mats[2 * s + which], N) for which in range(2))
        E = B1 @ B2.conj().T @ E
    return E[: K.n, : K.n]


def kmatrix_dense_from_params(K: KMatrix, theta, dtype=XP) -> np.ndarray:
    return dense_from_factors(K, dense_factors(K, theta, dtype))


def _loss_of(W, X, Y, g: str):
    U = W @ X
    if g == "relu":
        U = np.where(U.real > 0, U.real, 0).astype(W.dtype)
    return np.sum(np.abs(Y - U) ** 2)


def relu_margin_ok(K: KMatrix, X, margin: float = 1e-3) -> bool:
    """True when no relu pre-activation lies within ``margin`` of the kink.

    Central differences straddling the kink are not derivatives, so
    finite-difference draws closer than this are resampled.
    """
    from kaleido.butterfly import kmatrix_mvm

    return bool(np.min(np.abs(kmatrix_mvm(K, X).real)) > margin)


def _prefix_suffix(mats):
    """``pre[i] = M_0 ... M_{i-1}`` and ``suf[i] = M_{i+1} ... M_last``."""
    eye = np.eye(mats[0].shape[0], dtype=mats[0].dtype)
    pre, suf = [eye], [eye]
    for M in mats[:-1]:
        pre.append(pre[-1] @ M)
    for M in mats[:0:-1]:
        suf.append(M @ suf[-1])
    return pre, suf[::-1]


def trainer_fd(K: KMatrix, X, Y, g: str, h: float = 1e-5) -> np.ndarray:
    """Packed central-difference gradient: ``.real`` from re steps, ``.imag`` from im steps.

    Losses are evaluated in extended precision so cancellation noise stays
    far below the comparison tolerance. Prefix and suffix products of the
    untouched factors are cached, so each perturbed loss costs a few
    matrix products.
    """
    theta = K.params()
    N = K.size
    levels = N.bit_length() - 1
    per = 2 * N
    mats = dense_factors(K, theta)
    Xp, Yp = X.astype(XP), Y.astype(XP)
    Bs = [_chain(m, N) for m in mats]
    stages = [Bs[2 * s] @ Bs[2 * s + 1].conj().T for s in range(K.w)]
    # stage s is applied after stages 0..s-1: W = stages[w-1] ... stages[0]
    after, before = _prefix_suffix(stages[::-1])  # over reversed order
    fd = np.zeros(len(theta), dtype=complex)
    slots = [_factor_slots(N, N >> i) for i in range(levels)]
    cache = {}
    for k in range(len(theta)):
        blk, rem = divmod(k, levels * per)
        i, q = divmod(rem, per)
        d, p = divmod(q, N // 2)
        r, c = slots[i][0][d, p], slots[i][1][d, p]
        if blk not in cache:
            cache[blk] = _prefix_suffix(mats[blk])
        pre, suf = cache[blk]
        s_idx, which = divmod(blk, 2)
        j = K.w - 1 - s_idx
        parts = []
        for step in (XP(h), XP(1j) * XP(h)):
            losses = []
            for sign in (1, -1):
                F = mats[blk][i].copy()
                F[r, c] += sign * step
                B = pre[i] @ F @ suf[i]
                if which == 0:
                    M = B @ Bs[2 * s_idx + 1].conj().T
                else:
                    M = Bs[2 * s_idx] @ B.conj().T
                W = (after[j] @ M @ before[j])[: K.n, : K.n]
                losses.append(_loss_of(W, Xp, Yp, g))
            parts.append(float((losses[0] - losses[1]) / (2 * np.longdouble(h))))
        fd[k] = complex(parts[0], parts[1])
    return fd


# ---------------------------------------------------------------------------
# sparse and step instances

def random_sparse(rng, n: int, nnz: int, cols: int | None = None) -> SparseMatrix:
    cols = n if cols is None else cols
    flat = rng.choice(n * cols, size=nnz, replace=False)
    vals = crandn(rng, nnz)
    return SparseMatrix(n, cols, [(int(f // cols), int(f % cols), complex(v)) for f, v in zip(flat, vals)])


def random_step_dense(rng, n: int) -> np.ndarray:
    """Random horizontal step matrix: each column at most one entry, rows stepping down by at most the gap."""
    H = np.zeros((n, n), dtype=complex)
    cols = np.sort(rng.choice(n, size=int(rng.integers(0, n + 1)), replace=False))
    row, last = None, None
    for j in cols:
        if row is None:
            row = int(rng.integers(0, n))
        else:
            row = min(n - 1, row + int(rng.integers(0, j - last + 1)))
        H[row, j] = crandn(rng, 1)[0]
        last = j
    return H


def brute_step_ok(H) -> bool:
    """The step condition checked over every pair of nonzero columns."""
    H = np.asarray(H)
    if np.any((H != 0).sum(axis=0) > 1):
        return False
    nz = [(int(np.flatnonzero(H[:, j])[0]), j) for j in range(H.shape[1]) if np.any(H[:, j] != 0)]
    for a in range(len(nz)):
        for b in range(a + 1, len(nz)):
            (i1, j1), (i2, j2) = nz[a], nz[b]
            if not 0 <= i2 - i1 <= j2 - j1:
                return False
    return True
