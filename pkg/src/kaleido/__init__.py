"""Kaleidoscope (BB*) structured-matrix toolkit.

Arithmetic circuits, their compilation to sparse products and K-matrices,
Beneš routing, reverse-mode gradients and a gradient-descent trainer.
"""

from .numfield import DTYPE, FormatError, NonFiniteError, SparseMatrix
from .circuit import Circuit, Input, LinComb, Mul, build_fft, densify, evaluate
from .butterfly import ButterflyFactor, ButterflyMatrix, KMatrix, kmatrix_densify, kmatrix_mvm
from .kfactor import Permutation, circuit_to_kmatrix, route_permutation

__all__ = [
    "DTYPE", "FormatError", "NonFiniteError", "SparseMatrix",
    "Circuit", "Input", "LinComb", "Mul", "build_fft", "densify", "evaluate",
    "ButterflyFactor", "ButterflyMatrix", "KMatrix", "kmatrix_densify", "kmatrix_mvm",
    "Permutation", "circuit_to_kmatrix", "route_permutation",
]
