"""Exact solution of ``(I + c K*K) d = b`` for the Neumann gradient.

The Neumann Laplacian ``K*K`` is diagonalized by the orthonormal 2-D
DCT-II; eigenvalue ``(j, i)`` is
``4 sin^2(pi i / (2 w)) + 4 sin^2(pi j / (2 h))``. Dense helpers at the
bottom materialize small operators for test oracles.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .linops import normal_apply

__all__ = ["dct2_forward", "dct2_inverse", "DctPlan", "make_plan",
           "solve_elliptic", "dense_materialize", "dense_solve",
           "SingularMatrixError", "MATERIALIZE_LIMIT", "sparse_normal_matrix",
           "DirectSolver"]

MATERIALIZE_LIMIT = 4096


class SingularMatrixError(np.linalg.LinAlgError):
    pass


def dct2_forward(u, workers=None):
    """Orthonormal 2-D DCT-II."""
    return scipy.fft.dctn(np.asarray(u, dtype=float), type=2, norm="ortho",
                          workers=workers)


def dct2_inverse(coeffs, workers=None):
    """Inverse of :func:`dct2_forward`."""
    return scipy.fft.idctn(np.asarray(coeffs, dtype=float), type=2,
                           norm="ortho", workers=workers)


@dataclass(frozen=True)
class DctPlan:
    """Precomputed spectrum of ``I + c K*K`` on a ``height x width`` grid."""

    width: int
    height: int
    c: float
    eigenvalues: np.ndarray

    @property
    def shape(self):
        return (self.height, self.width)


def make_plan(shape, c):
    """Build a :class:`DctPlan` for images of `shape` ``(h, w)``."""
    h, w = shape
    if c < 0:
        raise ValueError("c must be nonnegative")
    lx = 4.0 * np.sin(np.pi * np.arange(w) / (2.0 * w)) ** 2
    ly = 4.0 * np.sin(np.pi * np.arange(h) / (2.0 * h)) ** 2
    eig = 1.0 + c * (ly[:, None] + lx[None, :])
    eig.setflags(write=False)
    return DctPlan(width=w, height=h, c=float(c), eigenvalues=eig)


def solve_elliptic(b, plan, workers=None):
    """Return ``d`` with ``(I + c K*K) d = b``."""
    b = np.asarray(b, dtype=float)
    if b.shape != plan.shape:
        raise ValueError(f"shape mismatch: {b.shape} vs plan {plan.shape}")
    if plan.c == 0:
        return b.copy()
    return dct2_inverse(dct2_forward(b, workers) / plan.eigenvalues, workers)


def dense_materialize(op, width, height):
    """Matrix of a linear operator on ``height x width`` images.

    Columns are images of the canonical basis vectors (row-major pixel
    order); vector-valued outputs are flattened in C order, so a dual field
    stacks all of component 0 before component 1.
    """
    n = width * height
    if n > MATERIALIZE_LIMIT:
        raise ValueError(f"grid with {n} pixels exceeds the dense limit "
                         f"of {MATERIALIZE_LIMIT}")
    cols = []
    e = np.zeros((height, width))
    for k in range(n):
        e.flat[k] = 1.0
        cols.append(np.asarray(op(e.copy()), dtype=float).ravel())
        e.flat[k] = 0.0
    return np.column_stack(cols)


def dense_solve(A, b, pivot_tol=1e-12):
    """Solve ``A x = b`` by LU with partial pivoting.

    Raises :class:`SingularMatrixError` if a pivot falls below
    ``pivot_tol * max|A|``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    with warnings.catch_warnings():
        # singularity is reported below with our own error
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    scale = max(np.abs(A).max(), np.finfo(float).tiny)
    if np.min(np.abs(np.diag(lu))) <= pivot_tol * scale:
        raise SingularMatrixError("matrix is singular to working tolerance")
    return scipy.linalg.lu_solve((lu, piv), b)


def sparse_normal_matrix(shape, c):
    """``I + c K*K`` as a sparse CSC matrix (row-major pixel order)."""
    h, w = shape

    def diff(n):
        # forward difference with zero last row
        main = -np.ones(n)
        main[-1] = 0.0
        return scipy.sparse.diags([main, np.ones(n - 1)], [0, 1],
                                  shape=(n, n))

    Dx = scipy.sparse.kron(scipy.sparse.identity(h), diff(w))
    Dy = scipy.sparse.kron(diff(h), scipy.sparse.identity(w))
    L = Dx.T @ Dx + Dy.T @ Dy
    return (scipy.sparse.identity(h * w) + c * L).tocsc()


class DirectSolver:
    """Factorize the materialized ``I + c K*K`` once and reuse it.

    This is the operator-agnostic exact solve, used where no fast transform
    is assumed.
    """

    def __init__(self, shape, c):
        self.shape = tuple(shape)
        self.c = float(c)
        self._solve = scipy.sparse.linalg.factorized(
            sparse_normal_matrix(shape, c))

    def __call__(self, b):
        return self._solve(np.asarray(b, dtype=float).ravel()).reshape(
            self.shape)


def check_plan(plan):
    """Cross-check a plan against :func:`normal_apply` on a random image."""
    rng = np.random.default_rng(0)
    b = rng.standard_normal(plan.shape)
    d = solve_elliptic(b, plan)
    r = normal_apply(d, plan.c) - b
    return float(np.linalg.norm(r) / np.linalg.norm(b))
