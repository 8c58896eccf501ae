"""Problem builders and reproducible test data."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .gap import INDICATOR_TOL, feasibility_violation, huber_gap, rof_gap
from .linops import GRAD_NORM_BOUND, div, grad
from .prox import (ProxMap, project_inf_ball, prox_huber_dual,
                   prox_quadratic_fidelity)
from .solvers import SaddleProblem

__all__ = ["DenoiseSpec", "build_rof", "build_huber", "build_denoise",
           "build_quadratic_pair", "add_gaussian_noise", "synthetic_image",
           "neg_div"]


def neg_div(p):
    """Adjoint of the gradient, ``-div p``."""
    return -div(p)


@dataclass(frozen=True)
class DenoiseSpec:
    """Denoising model: ``tv`` (ROF) or ``huber``."""

    model: str
    alpha: float
    f: np.ndarray
    lam: Optional[float] = None

    def __post_init__(self):
        if self.model not in ("tv", "huber"):
            raise ValueError(f"unknown model {self.model!r}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.model == "huber" and not (self.lam is not None and self.lam > 0):
            raise ValueError("huber model needs lam > 0")


def _fidelity(f):
    def value(u):
        return 0.5 * float(np.sum((u - f) ** 2))
    return ProxMap(lambda xh, s: prox_quadratic_fidelity(xh, f, s), 1.0, value)


def _ball_indicator(p, alpha):
    return np.inf if feasibility_violation(p, alpha) > INDICATOR_TOL * alpha else 0.0


def _check_image(f):
    f = np.asarray(f, dtype=float)
    if f.ndim != 2 or f.size == 0:
        raise ValueError("f must be a nonempty 2-D array")
    if not np.all(np.isfinite(f)):
        raise ValueError("f must be finite")
    return f


def build_rof(f, alpha):
    """``min_u |u - f|^2/2 + alpha TV(u)`` as a saddle problem.

    ``F(u) = |u - f|^2/2``, ``G`` the indicator of ``|p_i| <= alpha`` and
    ``K = grad``. The initial guess is ``(f, 0)``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    f = _check_image(f)
    prox_g = ProxMap(lambda p, t: project_inf_ball(p, alpha), 0.0,
                     lambda p: _ball_indicator(p, alpha))
    return SaddleProblem(
        prox_f=_fidelity(f), prox_g=prox_g, K=grad, K_adjoint=neg_div,
        normK_bound=GRAD_NORM_BOUND, gamma1=1.0, gamma2=0.0,
        x0=f.copy(), y0=np.zeros((2,) + f.shape),
        gap=lambda u, p: rof_gap(u, p, f, alpha), grid_operator=True,
        name="rof")


def build_huber(f, alpha, lam):
    """Huber-TV model; ``G(p) = I{|p_i| <= alpha} + lam/2 |p|^2``."""
    if not (alpha > 0 and lam > 0):
        raise ValueError("alpha and lam must be positive")
    f = _check_image(f)

    def g_value(p):
        return _ball_indicator(p, alpha) + 0.5 * lam * float(np.sum(p * p))

    prox_g = ProxMap(lambda p, t: prox_huber_dual(p, alpha, lam, t), lam,
                     g_value)
    return SaddleProblem(
        prox_f=_fidelity(f), prox_g=prox_g, K=grad, K_adjoint=neg_div,
        normK_bound=GRAD_NORM_BOUND, gamma1=1.0, gamma2=float(lam),
        x0=f.copy(), y0=np.zeros((2,) + f.shape),
        gap=lambda u, p: huber_gap(u, p, f, alpha, lam), grid_operator=True,
        name="huber")


def build_denoise(spec):
    if spec.model == "tv":
        return build_rof(spec.f, spec.alpha)
    return build_huber(spec.f, spec.alpha, spec.lam)


def build_quadratic_pair(f, k=1.0):
    """``F(x) = |x - f|^2/2``, ``G(y) = |y|^2/2``, ``K = k I``.

    The saddle point is ``x* = f / (1 + k^2)``, ``y* = k x*``; both moduli
    equal one. Useful for checks against closed forms.
    """
    f = np.atleast_1d(np.asarray(f, dtype=float))
    k = float(k)

    def gap(x, y):
        from .gap import GapReport
        primal = 0.5 * float(np.sum((x - f) ** 2)) + 0.5 * k * k * float(np.sum(x * x))
        # -inf_x L(x, y) = -(k <f, y> - (1 + k^2)|y|^2 / 2)
        dual = 0.5 * (1 + k * k) * float(np.sum(y * y)) - k * float(np.sum(f * y))
        g = primal + dual
        return GapReport(primal, dual, g, g / f.size, 0.0)

    return SaddleProblem(
        prox_f=_fidelity(f),
        prox_g=ProxMap(lambda y, t: y / (1.0 + t), 1.0,
                       lambda y: 0.5 * float(np.sum(y * y))),
        K=lambda x: k * x, K_adjoint=lambda y: k * y, normK_bound=abs(k),
        gamma1=1.0, gamma2=1.0, x0=np.zeros_like(f), y0=np.zeros_like(f),
        gap=gap, elliptic=lambda c, method="dct": (lambda b: b / (1.0 + c * k * k)),
        name="quadratic")


def add_gaussian_noise(img, stddev, seed):
    """Add Gaussian noise generated by the Box-Muller transform.

    Uniform deviates come from ``numpy.random.Generator(PCG64(seed))``;
    pairs ``(u1, u2)`` give ``sqrt(-2 ln(1 - u1)) * (cos, sin)(2 pi u2)``
    filling the image in row-major order. The result is not clipped.
    """
    img = np.asarray(img, dtype=float)
    if not stddev >= 0:
        raise ValueError("stddev must be nonnegative")
    if stddev == 0:
        return img.copy()
    n = img.size
    m = (n + 1) // 2
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.random((m, 2))
    r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    ang = 2.0 * np.pi * u[:, 1]
    z = np.column_stack((r * np.cos(ang), r * np.sin(ang))).ravel()[:n]
    return img + stddev * z.reshape(img.shape)


def synthetic_image(width, height):
    """Piecewise smooth test image with values in [0, 1].

    A dark background with a bright rectangle, a mid-grey disc and a
    horizontal ramp in the bottom band.
    """
    jj, ii = np.mgrid[0:height, 0:width]
    x = (ii + 0.5) / width
    y = (jj + 0.5) / height
    img = np.full((height, width), 0.2)
    img[(x > 0.15) & (x < 0.55) & (y > 0.1) & (y < 0.45)] = 0.85
    img[(x - 0.68) ** 2 + (y - 0.4) ** 2 < 0.2 ** 2] = 0.55
    band = y > 0.7
    img[band] = (0.1 + 0.8 * x)[band]
    return img
