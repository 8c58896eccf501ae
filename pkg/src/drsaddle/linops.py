"""Finite-difference operators on regular 2-D grids.

Images are arrays of shape ``(height, width)``; dual fields are arrays of
shape ``(2, height, width)``. Component 0 holds differences along the width
(axis 1), component 1 differences along the height (axis 0). The gradient
uses forward differences with homogeneous Neumann boundary handling, i.e.
the last difference in each direction is zero.
"""

import math

import numpy as np

__all__ = ["grad", "div", "normal_apply", "neighbor_sum", "power_norm",
           "GRAD_NORM_BOUND"]

#: Upper bound for the norm of the 2-D forward-difference gradient.
GRAD_NORM_BOUND = math.sqrt(8.0)


def grad(u, out=None):
    """Forward-difference gradient with Neumann boundary.

    Parameters
    ----------
    u : ndarray, shape (h, w)
    out : ndarray, shape (2, h, w), optional

    Returns
    -------
    ndarray, shape (2, h, w)
    """
    u = np.asarray(u, dtype=float)
    if out is None:
        out = np.empty((2,) + u.shape)
    np.subtract(u[:, 1:], u[:, :-1], out=out[0, :, :-1])
    out[0, :, -1] = 0.0
    np.subtract(u[1:, :], u[:-1, :], out=out[1, :-1, :])
    out[1, -1, :] = 0.0
    return out


def div(p, out=None):
    """Divergence, the negative adjoint of :func:`grad`.

    Backward differences where the first row/column takes the value of the
    field and the last one its negative, so that
    ``<grad u, p> = -<u, div p>`` holds exactly.
    """
    p = np.asarray(p, dtype=float)
    p1, p2 = p[0], p[1]
    if out is None:
        out = np.empty(p1.shape)
    out[...] = 0.0
    out[:, :-1] += p1[:, :-1]
    out[:, 1:] -= p1[:, :-1]
    out[:-1, :] += p2[:-1, :]
    out[1:, :] -= p2[:-1, :]
    return out


def normal_apply(u, c):
    """Apply ``T = I + c K*K`` with ``K = grad``, i.e. ``u - c div(grad u)``."""
    u = np.asarray(u, dtype=float)
    if c == 0:
        return u.copy()
    return u - c * div(grad(u))


def neighbor_sum(u):
    """Sum of the (up to four) in-grid neighbours of every pixel."""
    s = np.zeros_like(u)
    s[:, :-1] += u[:, 1:]
    s[:, 1:] += u[:, :-1]
    s[:-1, :] += u[1:, :]
    s[1:, :] += u[:-1, :]
    return s


def power_norm(apply, adjoint, shape, iters=100, seed=0):
    """Estimate ``||K||`` by power iteration on ``K*K``.

    The returned value is the largest Rayleigh-type ratio ``||K v|| / ||v||``
    seen so far, so it is nondecreasing in `iters` and bounded by the true
    norm up to round-off.

    Parameters
    ----------
    apply, adjoint : callable
        ``K`` and ``K*``.
    shape : tuple
        Shape of the domain of ``K``.
    iters : int
        Number of ``K*K`` applications, at least one.
    seed : int
        Seed of the starting vector.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    v = np.random.default_rng(seed).standard_normal(shape)
    while not np.any(v):
        seed += 1
        v = np.random.default_rng(seed).standard_normal(shape)
    v /= np.linalg.norm(v)
    best = 0.0
    for _ in range(iters):
        kv = apply(v)
        best = max(best, float(np.linalg.norm(kv)))
        w = adjoint(kv)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        v = w / nw
    return best
