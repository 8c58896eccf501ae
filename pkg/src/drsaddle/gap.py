"""Primal-dual gaps and error functionals.

For ``L(x, y) = <K x, y> + F(x) - G(y)`` the primal energy is
``F(x) + G*(K x)`` and the dual energy ``G(y) + F*(-K* y)``; their sum is
the primal-dual gap, zero exactly at saddle points. For the denoising
models ``K = grad`` so ``-K* p = div p``.
"""

from typing import NamedTuple

import numpy as np

from .linops import div, grad
from .prox import pixel_norms

__all__ = ["GapReport", "rof_gap", "huber_gap", "huber_value",
           "feasibility_violation", "lagrangian", "restricted_gap",
           "restricted_errors", "full_errors"]

#: Relative tolerance (times alpha) for the dual constraint.
INDICATOR_TOL = 1e-9


class GapReport(NamedTuple):
    """Energies of a primal-dual pair.

    ``gap = primal_energy + dual_energy``; the dual energy is ``inf`` when
    the dual iterate violates its constraint beyond tolerance.
    """

    primal_energy: float
    dual_energy: float
    gap: float
    per_pixel_gap: float
    feasibility_violation: float


def feasibility_violation(p, alpha):
    """``max_i max(0, |p_i| - alpha)``."""
    return float(max(0.0, pixel_norms(p).max() - alpha))


def _check_shapes(u, p, f):
    u = np.asarray(u, dtype=float)
    p = np.asarray(p, dtype=float)
    f = np.asarray(f, dtype=float)
    if u.shape != f.shape or p.shape != (2,) + f.shape:
        raise ValueError(f"shape mismatch: u {u.shape}, p {p.shape}, "
                         f"f {f.shape}")
    return u, p, f


def _clip_dual(p, alpha):
    viol = feasibility_violation(p, alpha)
    if viol > INDICATOR_TOL * alpha:
        return None, viol
    if viol > 0.0:
        p = p / np.maximum(1.0, pixel_norms(p) / alpha)
    return p, viol


def _dual_fidelity(p, f):
    # F*(div p) for F = |u - f|^2 / 2
    return 0.5 * float(np.sum((div(p) + f) ** 2)) - 0.5 * float(np.sum(f * f))


def _report(primal, dual, npix, viol):
    gap = primal + dual
    return GapReport(primal, dual, gap, gap / npix, viol)


def rof_gap(u, p, f, alpha):
    """Gap of the ROF model ``min_u |u - f|^2/2 + alpha TV(u)``.

    Parameters
    ----------
    u : ndarray, shape (h, w)
    p : ndarray, shape (2, h, w)
    f : ndarray, shape (h, w)
    alpha : float

    Returns
    -------
    GapReport
    """
    u, p, f = _check_shapes(u, p, f)
    primal = (0.5 * float(np.sum((u - f) ** 2))
              + alpha * float(np.sum(pixel_norms(grad(u)))))
    pc, viol = _clip_dual(p, alpha)
    dual = np.inf if pc is None else _dual_fidelity(pc, f)
    return _report(primal, dual, f.size, viol)


def huber_value(q, alpha, lam):
    """Per-pixel Huber function of the 2-vectors in `q`.

    ``|q|^2 / (2 lam)`` for ``|q| <= alpha lam`` and
    ``alpha |q| - lam alpha^2 / 2`` beyond.
    """
    n = pixel_norms(q)
    return np.where(n <= alpha * lam, n * n / (2.0 * lam),
                    alpha * n - 0.5 * lam * alpha * alpha)


def huber_gap(u, p, f, alpha, lam):
    """Gap of the Huber-TV model with the same indicator handling as
    :func:`rof_gap`."""
    u, p, f = _check_shapes(u, p, f)
    if not (alpha > 0 and lam > 0):
        raise ValueError("alpha and lam must be positive")
    primal = (0.5 * float(np.sum((u - f) ** 2))
              + float(np.sum(huber_value(grad(u), alpha, lam))))
    pc, viol = _clip_dual(p, alpha)
    if pc is None:
        dual = np.inf
    else:
        dual = _dual_fidelity(pc, f) + 0.5 * lam * float(np.sum(pc * pc))
    return _report(primal, dual, f.size, viol)


def lagrangian(problem, x, y):
    """``<K x, y> + F(x) - G(y)`` using the problem's functional values."""
    F = problem.prox_f.value
    G = problem.prox_g.value
    if F is None or G is None:
        raise ValueError("problem does not provide functional values")
    return float(np.vdot(problem.K(x), y)) + F(x) - G(y)


def _nonempty(*sets):
    for s in sets:
        if len(s) == 0:
            raise ValueError("restricted sets must be nonempty")


def restricted_gap(problem, x, y, X0, Y0):
    """``max over X0 x Y0 of L(x, y') - L(x', y)`` by enumeration."""
    _nonempty(X0, Y0)
    best_y = max(lagrangian(problem, x, yp) for yp in Y0)
    best_x = min(lagrangian(problem, xp, y) for xp in X0)
    return best_y - best_x


def restricted_errors(problem, x, y, X0, Y0, saddle):
    """Restricted primal and dual errors ``(E^p_{Y0}(x), E^d_{X0}(y))``.

    `saddle` is a pair ``(x*, y*)``.
    """
    _nonempty(X0, Y0)
    xs, ys = saddle
    F = problem.prox_f.value
    G = problem.prox_g.value
    K, Kt = problem.K, problem.K_adjoint

    def primal(v):
        Kv = K(v)
        return F(v) + max(float(np.vdot(Kv, yp)) - G(yp) for yp in Y0)

    def dual(w):
        Ktw = Kt(w)
        return G(w) + max(-float(np.vdot(Ktw, xp)) - F(xp) for xp in X0)

    return primal(x) - primal(xs), dual(y) - dual(ys)


def full_errors(report, saddle_report):
    """Full primal and dual errors from two :class:`GapReport` objects."""
    return (report.primal_energy - saddle_report.primal_energy,
            report.dual_energy - saddle_report.dual_energy)
