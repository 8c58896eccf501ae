"""Proximal mappings for the denoising models.

The total-variation constraint ``||p||_inf <= alpha`` is isotropic: the
bound applies to the Euclidean norm of the 2-vector at each pixel.

Huber dual resolvent
--------------------
For ``G(p) = I{|p_i| <= alpha} + lam/2 ||p||^2`` the resolvent
``(I + tau dG)^{-1}(q)`` minimizes, pixel by pixel,
``|p - q|^2 / (2 tau) + lam/2 |p|^2`` over the disc ``|p| <= alpha``.
Completing the square gives
``(1 + tau lam)/(2 tau) |p - q/(1 + tau lam)|^2 + const``, so the minimizer
is the projection of ``q / (1 + tau lam)`` onto the disc. The KKT
conditions ``(p - q)/tau + lam p + mu p/|p| = 0`` with ``mu >= 0`` lead to
the same point: ``p`` is a nonnegative multiple of ``q``.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = ["ProxMap", "prox_quadratic_fidelity", "project_inf_ball",
           "prox_huber_dual", "pixel_norms"]


@dataclass(frozen=True)
class ProxMap:
    """Resolvent of a convex functional together with its value.

    Attributes
    ----------
    evaluate : callable
        ``evaluate(point, step)`` returns ``(I + step dF)^{-1}(point)``.
    strong_convexity : float
        Modulus of strong convexity of the functional.
    value : callable, optional
        Functional value, ``inf`` outside the domain.
    """

    evaluate: Callable
    strong_convexity: float = 0.0
    value: Optional[Callable] = None

    def __call__(self, point, step):
        return self.evaluate(point, step)


def pixel_norms(p):
    """Euclidean norm of the 2-vector at each pixel."""
    return np.sqrt(p[0] ** 2 + p[1] ** 2)


def prox_quadratic_fidelity(xhat, f, sigma):
    """Resolvent of ``||x - f||^2 / 2``: ``(xhat + sigma f) / (1 + sigma)``."""
    xhat = np.asarray(xhat, dtype=float)
    f = np.asarray(f, dtype=float)
    if xhat.shape != f.shape:
        raise ValueError(f"shape mismatch: {xhat.shape} vs {f.shape}")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return (xhat + sigma * f) / (1.0 + sigma)


def project_inf_ball(phat, alpha):
    """Project every pixel 2-vector onto the disc of radius `alpha`."""
    phat = np.asarray(phat, dtype=float)
    scale = np.maximum(1.0, pixel_norms(phat) / alpha)
    return phat / scale


def prox_huber_dual(phat, alpha, lam, tau):
    """Resolvent of ``I{|p_i| <= alpha} + lam/2 ||p||^2`` with step `tau`.

    Scaling by ``1/(1 + tau lam)`` followed by the radial projection; see
    the module docstring for the derivation. ``lam = 0`` gives
    :func:`project_inf_ball` exactly.
    """
    phat = np.asarray(phat, dtype=float)
    if tau * lam == 0:
        return project_inf_ball(phat, alpha)
    return project_inf_ball(phat / (1.0 + tau * lam), alpha)
