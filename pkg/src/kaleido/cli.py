"""Command-line entry point.

Exit codes: 0 success, 2 usage or bad parameters, 3 parse/format or I/O
errors, 4 verification failure, 5 training divergence.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import autodiff, butterfly, circuit, kfactor, numfield, sparse_compile, trainer
from .numfield import DTYPE, FormatError, content_lines, parse_scalar

EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_VERIFY = 4
EXIT_DIVERGED = 5

FORMATS = ("dense", "sparse", "kmatrix", "sparseproduct", "perm", "inputs", "pairs", "vector")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# file handling

def read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text()


def write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def sniff(text: str) -> str:
    lines = content_lines(text)
    if not lines:
        raise FormatError("empty input")
    kind = lines[0].split()[0]
    if kind not in FORMATS:
        raise FormatError(f"unrecognized header {lines[0]!r}")
    return kind


def load(path: str, fmt: str | None = None):
    """``(kind, object)`` for any supported file, sniffing the header unless ``fmt`` is given."""
    text = read_text(path)
    kind = fmt or sniff(text)
    parsers = {
        "dense": numfield.parse_dense,
        "sparse": numfield.parse_sparse,
        "kmatrix": butterfly.parse_kmatrix,
        "sparseproduct": sparse_compile.parse_sparse_product,
        "perm": kfactor.parse_perm,
        "inputs": circuit.parse_circuit,
        "pairs": parse_pairs,
        "vector": numfield.parse_vector,
    }
    if kind not in parsers:
        raise FormatError(f"unknown format {kind!r}")
    return kind, parsers[kind](text)


def densify_any(kind: str, obj) -> np.ndarray:
    if kind == "dense":
        return obj
    if kind == "sparse":
        return obj.to_dense()
    if kind == "kmatrix":
        return butterfly.kmatrix_densify(obj)
    if kind == "sparseproduct":
        return sparse_compile.product_densify(obj)
    if kind == "perm":
        return obj.to_dense()
    if kind == "inputs":
        return circuit.densify(obj)
    raise CliError(f"cannot densify a {kind} file", EXIT_USAGE)


def parse_pairs(text: str):
    lines = content_lines(text)
    head = lines[0].split()
    if len(head) != 4 or head[0] != "pairs":
        raise FormatError(f"expected 'pairs <L> <n> <m>', got {lines[0]!r}")
    L, n, m = (numfield.parse_count(t) for t in head[1:])
    if len(lines) != 1 + 2 * L:
        raise FormatError(f"expected {2 * L} vector lines, got {len(lines) - 1}")
    X = np.zeros((n, L), dtype=DTYPE)
    Y = np.zeros((m, L), dtype=DTYPE)
    for l in range(L):
        xs, ys = lines[1 + 2 * l].split(), lines[2 + 2 * l].split()
        if len(xs) != n or len(ys) != m:
            raise FormatError(f"pair {l} has lengths {len(xs)}, {len(ys)}")
        X[:, l] = [parse_scalar(t) for t in xs]
        Y[:, l] = [parse_scalar(t) for t in ys]
    return X, Y


def dump_pairs(X, Y) -> str:
    lines = [f"pairs {X.shape[1]} {X.shape[0]} {Y.shape[0]}"]
    for l in range(X.shape[1]):
        lines.append(" ".join(numfield.format_scalar(v) for v in X[:, l]))
        lines.append(" ".join(numfield.format_scalar(v) for v in Y[:, l]))
    return "\n".join(lines) + "\n"


def scalar_list(text: str) -> np.ndarray:
    return np.array([parse_scalar(t) for t in text.replace(",", " ").split()], dtype=DTYPE)


# ---------------------------------------------------------------------------
# commands

def cmd_gen(args) -> int:
    kind = args.kind
    if kind == "fourier":
        out = numfield.dump_dense(numfield.gen_fourier(_need(args, "n")))
    elif kind == "vandermonde":
        a = scalar_list(_need(args, "a"))
        out = numfield.dump_dense(numfield.gen_vandermonde(a, args.n if args.n is not None else len(a)))
    elif kind == "cauchy":
        out = numfield.dump_dense(numfield.gen_cauchy(scalar_list(_need(args, "s")), scalar_list(_need(args, "t"))))
    elif kind == "shift":
        out = numfield.dump_sparse(numfield.gen_shift(_need(args, "n")))
    else:
        out = numfield.dump_sparse(numfield.SparseMatrix.identity(_need(args, "n")))
    write_text(args.out, out)
    return 0


def _need(args, name):
    value = getattr(args, name)
    if value is None:
        raise CliError(f"--{name} is required for gen {args.kind}", EXIT_USAGE)
    return value


def cmd_compile(args) -> int:
    _, c = load(args.circuit, "inputs")
    s, d = circuit.metrics(c)
    prod = sparse_compile.compile_to_sparse_product(c)
    if args.target == "sparseproduct":
        write_text(args.out, sparse_compile.dump_sparse_product(prod))
        width = expansion = params = "-"
    else:
        K = kfactor.circuit_to_kmatrix(c)
        write_text(args.out, butterfly.dump_kmatrix(K))
        width, expansion, params = K.w, K.e, butterfly.param_count(K)
    stats = f"s={s} d={d} s'={prod.inner_dim} width={width} expansion={expansion} params={params}"
    print(stats, file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return 0


def cmd_check(args) -> int:
    A = densify_any(*load(args.original, args.format))
    B = densify_any(*load(args.factorization))
    if A.shape != B.shape:
        raise CliError(f"shape mismatch: {A.shape} vs {B.shape}", EXIT_VERIFY)
    dist = numfield.frobenius_distance(A, B, relative=True)
    ok = dist <= args.tol
    print(f"distance={dist:.6e} tol={args.tol:g} {'pass' if ok else 'fail'}")
    return 0 if ok else EXIT_VERIFY


def cmd_route(args) -> int:
    _, p = load(args.perm, "perm")
    write_text(args.out, butterfly.dump_kmatrix(kfactor.route_permutation(p)))
    return 0


def cmd_train(args) -> int:
    if not (math.isfinite(args.eta) and args.eta >= 0):
        raise CliError(f"--eta must be finite and non-negative, got {args.eta}", EXIT_USAGE)
    kind, target = load(args.target, args.format)
    if kind == "pairs":
        data = target
        n = target[0].shape[0]
    else:
        W = densify_any(kind, target)
        n = W.shape[0]
        data = trainer.basis_data(W, args.probes, args.seed)
    if args.n is not None and args.n != n:
        raise CliError(f"--n {args.n} disagrees with target size {n}", EXIT_USAGE)
    config = trainer.TrainConfig(
        eta=args.eta, eps=args.eps, max_iters=args.iters, seed=args.seed, nonlinearity=args.nonlinearity
    )
    state = trainer.train(data, n, args.w, args.e, config)
    write_text(args.out, butterfly.dump_kmatrix(state.model))
    if args.loss_csv:
        rows = ["iter,loss"] + [f"{i},{v:.17g}" for i, v in enumerate(state.loss_history)]
        Path(args.loss_csv).write_text("\n".join(rows) + "\n")
    first, last = state.loss_history[0], state.loss_history[-1]
    ratio = last / first if first else 0.0
    summary = f"iters={state.iter} initial_loss={first:.17g} final_loss={last:.17g} ratio={ratio:.6e}"
    print(summary, file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return 0


def cmd_mvm(args) -> int:
    kind, op = load(args.operator, args.format)
    _, x = load(args.vector, "vector")
    if kind == "dense":
        y, ops = numfield.dense_mvm(op, x), op.size
    elif kind == "sparse":
        y, ops = numfield.sparse_mvm(op, x), op.nnz
    elif kind == "kmatrix":
        counter = butterfly.OpCounter()
        y = butterfly.kmatrix_mvm(op, x, counter)
        ops = counter.madds
    elif kind == "sparseproduct":
        y, ops = sparse_compile.product_mvm(op, x), sum(f.nnz for f in op.factors)
    elif kind == "perm":
        y, ops = op.to_dense() @ x, 0
    elif kind == "inputs":
        y, ops = circuit.evaluate(op, x), autodiff.forward_op_count(op)
    else:
        raise CliError(f"cannot multiply by a {kind} file", EXIT_USAGE)
    write_text(args.out, numfield.dump_vector(y))
    if args.count_ops:
        print(f"ops={ops}", file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return 0


def cmd_grad(args) -> int:
    _, c = load(args.circuit, "inputs")
    _, a = load(args.point, "vector")
    res = autodiff.backprop(c, a)
    write_text(args.out, numfield.dump_vector(res.grad))
    return 0


def cmd_transpose(args) -> int:
    _, c = load(args.circuit, "inputs")
    _, y = load(args.vector, "vector")
    write_text(args.out, numfield.dump_vector(autodiff.transpose_apply(c, y)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kaleido", description="Kaleidoscope-matrix and arithmetic-circuit toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a reference matrix")
    p.add_argument("kind", choices=["fourier", "vandermonde", "cauchy", "shift", "identity"])
    p.add_argument("--n", type=int)
    p.add_argument("--a", help="Vandermonde nodes, comma separated re[:im]")
    p.add_argument("--s", help="Cauchy row nodes")
    p.add_argument("--t", help="Cauchy column nodes")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("compile", help="compile a linear circuit")
    p.add_argument("circuit")
    p.add_argument("--target", choices=["sparseproduct", "kmatrix"], default="sparseproduct")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("check", help="compare two operators by densification")
    p.add_argument("original")
    p.add_argument("factorization")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--format", choices=FORMATS)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("route", help="route a permutation into a BB* stage")
    p.add_argument("perm")
    p.add_argument("--out")
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("train", help="fit a K-matrix by gradient descent")
    p.add_argument("target")
    p.add_argument("--n", type=int)
    p.add_argument("--w", type=int, default=1)
    p.add_argument("--e", type=int, default=1)
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--probes", type=int, default=0)
    p.add_argument("--nonlinearity", choices=trainer.NONLINEARITIES, default="identity")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--out")
    p.add_argument("--loss-csv")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("mvm", help="multiply an operator file by a vector file")
    p.add_argument("operator")
    p.add_argument("vector")
    p.add_argument("--count-ops", action="store_true")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_mvm)

    p = sub.add_parser("grad", help="gradient of a single-output circuit")
    p.add_argument("circuit")
    p.add_argument("point")
    p.add_argument("--out")
    p.set_defaults(func=cmd_grad)

    p = sub.add_parser("transpose", help="apply the transpose of a linear circuit")
    p.add_argument("circuit")
    p.add_argument("vector")
    p.add_argument("--out")
    p.set_defaults(func=cmd_transpose)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except trainer.DivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (FormatError, OSError, circuit.CircuitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
