"""Feasible preconditioners for ``T = I + c K*K``.

A preconditioner ``M`` replaces the exact solve of ``T d = b`` by the
splitting step ``d + M^{-1}(b - T d)``. It is *feasible* when it is
symmetric, invertible and ``M - T`` is positive semi-definite.

Gauss-Seidel type splittings use red-black ordering of the five-point
stencil: ``T = D - E - E*`` where ``E`` couples black rows to red columns,
so forward sweeps update red pixels first and then black ones.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .exactsolve import MATERIALIZE_LIMIT, dense_materialize, make_plan, solve_elliptic
from .linops import GRAD_NORM_BOUND, neighbor_sum, normal_apply

log = logging.getLogger(__name__)

__all__ = [
    "FeasibilityError", "FeasibilityWarning", "StencilData", "SplitPreconditioner",
    "precond_step", "build_exact", "build_richardson", "build_damped_jacobi",
    "build_sgs_redblack", "build_ssor", "combine_nfold", "combine_symmetrized",
    "combine_additive", "forward_gs_sweep", "backward_gs_sweep",
    "check_feasible", "FeasibilityCertificate", "materialize_preconditioner",
    "nfold_norm_bound", "gamma_fixed_point", "GammaResult", "sgs_norm_model",
    "exact_norm_model", "sgs_mt_estimate", "from_spec", "norm_model_from_spec",
]

KINDS = ("exact", "richardson", "damped_jacobi", "sym_gauss_seidel_rb", "ssor",
         "nfold", "symmetrized", "additive")


class FeasibilityError(ValueError):
    """A preconditioner could not be certified feasible."""


class FeasibilityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class StencilData:
    """Five-point stencil of ``T = I + c K*K`` on a ``(h, w)`` grid.

    Off-diagonal entries all equal ``-c``; the diagonal is ``1 + c * deg``
    with ``deg`` the number of in-grid neighbours.
    """

    shape: tuple
    c: float
    diagonal: np.ndarray
    red: np.ndarray
    red_f: np.ndarray = field(init=False, repr=False, compare=False)
    black_f: np.ndarray = field(init=False, repr=False, compare=False)
    inv_diagonal: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name, arr in (("red_f", self.red.astype(float)),
                          ("black_f", (~self.red).astype(float)),
                          ("inv_diagonal", 1.0 / self.diagonal)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def for_gradient(cls, shape, c):
        h, w = shape
        deg = neighbor_sum(np.ones((h, w)))
        jj, ii = np.indices((h, w))
        red = (ii + jj) % 2 == 0
        diag = 1.0 + c * deg
        diag.setflags(write=False)
        red.setflags(write=False)
        return cls(shape=(h, w), c=float(c), diagonal=diag, red=red)

    @property
    def black(self):
        return ~self.red

    @property
    def max_offdiag(self):
        return self.c

    def offdiag_apply(self, u):
        """``(T - D) u``."""
        return -self.c * neighbor_sum(u)

    def gershgorin_offdiag(self):
        """Upper bound for ``lambda_max(T - D)`` from row sums."""
        return float(self.c * neighbor_sum(np.ones(self.shape)).max())


@dataclass(frozen=True)
class SplitPreconditioner:
    """Action of ``M^{-1}`` plus the metadata the solvers need.

    Attributes
    ----------
    apply_inverse : callable
        ``r -> M^{-1} r``.
    kind : str
    norm_estimate : float
        Estimate of ``||M||`` used for the acceleration factor.
    c : float
        ``T = I + c K*K`` this preconditioner was built for.
    shape : tuple
    params : dict
    """

    apply_inverse: Callable
    kind: str
    norm_estimate: float
    c: float
    shape: tuple
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown preconditioner kind {self.kind!r}")

    def T(self, d):
        return normal_apply(d, self.c)

    def step(self, d, b):
        return d + self.apply_inverse(b - self.T(d))


def precond_step(d, b, M, c=None):
    """One splitting step ``d + M^{-1}(b - T d)`` with ``T = I + c K*K``."""
    c = M.c if c is None else c
    return d + M.apply_inverse(b - normal_apply(d, c))


def normT_estimate(c):
    """``1 + c L^2`` with ``L = sqrt(8)``."""
    return 1.0 + c * GRAD_NORM_BOUND ** 2


def build_exact(shape, c):
    """``M = T``, applied through the DCT."""
    plan = make_plan(shape, c)
    return SplitPreconditioner(lambda r: solve_elliptic(r, plan), "exact",
                               normT_estimate(c), float(c), tuple(shape))


def build_richardson(c, normT_bound, shape=None):
    """``M = lambda I`` with ``lambda = normT_bound >= ||T||``."""
    lam = float(normT_bound)
    if not lam > 0:
        raise ValueError("normT_bound must be positive")
    if lam < normT_estimate(c):
        log.info("Richardson lambda=%g is below 1 + 8c=%g; feasibility "
                 "not guaranteed", lam, normT_estimate(c))
    return SplitPreconditioner(lambda r: r / lam, "richardson", lam, float(c),
                               shape, {"lambda": lam})


def build_damped_jacobi(stencil, lam=None, strict=True):
    """``M = (lam + 1) D`` with ``lam >= lambda_max(T - D)``.

    `lam` defaults to the Gershgorin bound. A smaller value raises
    :class:`FeasibilityError` in strict mode and warns otherwise.
    """
    bound = stencil.gershgorin_offdiag()
    lam = bound if lam is None else float(lam)
    params = {"lambda": lam, "gershgorin": bound}
    if lam < bound:
        msg = (f"damped Jacobi lambda={lam:g} below Gershgorin bound "
               f"{bound:g}; feasibility not certified")
        if strict:
            raise FeasibilityError(msg)
        warnings.warn(msg, FeasibilityWarning)
        params["feasibility_warning"] = msg
    scaled = (lam + 1.0) * stencil.diagonal
    return SplitPreconditioner(lambda r: r / scaled, "damped_jacobi",
                               float(scaled.max()), stencil.c, stencil.shape,
                               params)


def _ssor_inverse(r, st, omega):
    # masked full-array updates; same-colour pixels are independent
    inv, red, black, c = st.inv_diagonal, st.red_f, st.black_f, st.c
    # (D/w - E) z = r, red then black
    z = red * (omega * r * inv)
    z += black * (omega * (r + c * neighbor_sum(z)) * inv)
    # ((2-w)/w D) scaling
    wv = ((2.0 - omega) / omega) * st.diagonal * z
    # (D/w - E*) v = wv, black then red
    v = black * (omega * wv * inv)
    v += red * (omega * (wv + c * neighbor_sum(v)) * inv)
    return v


def forward_gs_sweep(stencil):
    """``r -> (D - E)^{-1} r``: one Gauss-Seidel sweep, red then black."""
    D, red, black = stencil.diagonal, stencil.red, stencil.black

    def apply(r):
        z = np.zeros_like(r)
        z[red] = r[red] / D[red]
        z[black] = (r - stencil.offdiag_apply(z))[black] / D[black]
        return z
    return apply


def backward_gs_sweep(stencil):
    """``r -> (D - E*)^{-1} r``: the adjoint sweep, black then red."""
    D, red, black = stencil.diagonal, stencil.red, stencil.black

    def apply(r):
        z = np.zeros_like(r)
        z[black] = r[black] / D[black]
        z[red] = (r - stencil.offdiag_apply(z))[red] / D[red]
        return z
    return apply


def sgs_mt_estimate(c):
    """Closed-form estimate ``4 c^2 / (1 + 4 c)`` of ``||M - T||`` for SGS."""
    return 4.0 * c * c / (1.0 + 4.0 * c)


def build_sgs_redblack(stencil, norm_estimate=None):
    """Symmetric red-black Gauss-Seidel, ``M = (D - E) D^{-1} (D - E*)``.

    The default norm estimate is ``1 + 8c + 4c^2/(1 + 4c)``. It is the
    estimate used for the denoising experiments and is not a certified
    bound: on small grids with large ``c`` the true norm exceeds it by a
    few percent. Pass `norm_estimate` to override.
    """
    st = stencil
    if norm_estimate is None:
        norm_estimate = normT_estimate(st.c) + sgs_mt_estimate(st.c)
    return SplitPreconditioner(lambda r: _ssor_inverse(r, st, 1.0),
                               "sym_gauss_seidel_rb", float(norm_estimate),
                               st.c, st.shape, {"omega": 1.0})


def ssor_norm_bound(stencil, omega):
    """Certified upper bound of ``||M_SSOR||``.

    ``M - T = w/(2-w) B* B`` with ``B = (1-w)/w D^{1/2} + D^{-1/2} E*`` and
    ``||B||^2 <= ||B||_1 ||B||_inf`` (max column sum times max row sum).
    """
    st = stencil
    D = st.diagonal
    a = abs((1.0 - omega) / omega)
    sd = np.sqrt(D)
    # rows of D^{-1/2} E*: red pixels couple to black neighbours
    nb = neighbor_sum(np.ones(st.shape))
    row = a * sd + np.where(st.red, st.c * nb / sd, 0.0)
    # columns: black pixel j collects c / sqrt(D_i) from red neighbours i
    col = a * sd + np.where(st.black, st.c * neighbor_sum(np.where(st.red, 1.0 / sd, 0.0)), 0.0)
    Bsq = float(row.max() * col.max())
    return normT_estimate(st.c) + omega / (2.0 - omega) * Bsq


def build_ssor(stencil, omega):
    """Symmetric SOR with relaxation ``omega`` in (0, 2).

    ``M = (D/w - E) ((2-w)/w D)^{-1} (D/w - E*)``; ``omega = 1`` performs
    the same sweeps as :func:`build_sgs_redblack`.
    """
    omega = float(omega)
    if not 0.0 < omega < 2.0:
        raise ValueError(f"omega must lie in (0, 2), got {omega}")
    st = stencil
    return SplitPreconditioner(lambda r: _ssor_inverse(r, st, omega), "ssor",
                               ssor_norm_bound(st, omega), st.c, st.shape,
                               {"omega": omega})


def combine_nfold(M, n):
    """``n`` consecutive splitting steps with `M` as one preconditioner."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return M
    inner = M.apply_inverse
    c = M.c

    def apply(r):
        d = inner(r)
        for _ in range(n - 1):
            d = d + inner(r - normal_apply(d, c))
        return d
    params = dict(M.params, n=n, base=M.kind)
    return SplitPreconditioner(apply, "nfold", M.norm_estimate, c, M.shape,
                               params)


def combine_symmetrized(forward, adjoint, c, shape, check=True, seed=0,
                        norm_estimate=np.inf):
    """Forward step with ``M0`` followed by an adjoint step with ``M0*``.

    `forward` and `adjoint` compute ``M0^{-1} r`` and ``M0^{-*} r``. With
    `check`, their adjointness is verified on random pairs. No general
    norm bound is available, so `norm_estimate` defaults to ``inf``.
    """
    if check:
        rng = np.random.default_rng(seed)
        for _ in range(3):
            a, b = rng.standard_normal((2,) + tuple(shape))
            lhs = np.vdot(forward(a), b)
            rhs = np.vdot(a, adjoint(b))
            if abs(lhs - rhs) > 1e-10 * max(1.0, abs(lhs)):
                raise ValueError("sweeps are not adjoint: "
                                 f"{lhs!r} vs {rhs!r}")

    def apply(r):
        z = forward(r)
        return z + adjoint(r - normal_apply(z, c))
    return SplitPreconditioner(apply, "symmetrized", float(norm_estimate),
                               float(c), tuple(shape))


def combine_additive(M, T2, c, norm_estimate=np.inf):
    """Preconditioner for ``T = T1 + T2`` from `M` feasible for ``T1``.

    Runs the two half-updates
    ``d' = d + M^{-1}(b - T2 d - T1 d)`` and
    ``d'' = d + M^{-1}(b - T2 d' - T1 d)``; only forward evaluations of
    `T2` are needed. The induced inverse is ``M^{-1}(M - T2)M^{-1}``, which
    requires ``M - T2`` positive definite.
    """
    inner = M.apply_inverse

    def apply(r):
        z = inner(r)
        return z - inner(T2(z))
    return SplitPreconditioner(apply, "additive", norm_estimate, float(c),
                               M.shape, {"base": M.kind})


def materialize_preconditioner(M, shape=None):
    """Dense ``M`` (not ``M^{-1}``) of a preconditioner on a small grid."""
    h, w = M.shape if shape is None else shape
    Minv = dense_materialize(M.apply_inverse, w, h)
    return np.linalg.inv(Minv)


class FeasibilityCertificate(NamedTuple):
    min_eig: float
    invertibility_margin: float
    asymmetry: float
    feasible: bool


def check_feasible(M_dense, T_dense, tol=1e-9):
    """Certify ``M - T >= 0`` and invertibility of ``M`` densely."""
    M_dense = np.asarray(M_dense, dtype=float)
    T_dense = np.asarray(T_dense, dtype=float)
    if M_dense.shape != T_dense.shape or M_dense.shape[0] != M_dense.shape[1]:
        raise ValueError("matrices must be square and of equal size")
    if M_dense.shape[0] > MATERIALIZE_LIMIT:
        raise ValueError("matrix exceeds the dense size limit")
    scale = max(1.0, np.abs(M_dense).max())
    asym = float(np.abs(M_dense - M_dense.T).max() / scale)
    S = M_dense - T_dense
    min_eig = float(np.linalg.eigvalsh(0.5 * (S + S.T)).min())
    margin = float(np.linalg.svd(M_dense, compute_uv=False).min())
    feasible = (min_eig >= -tol and margin > tol and asym <= max(tol, 1e-10))
    return FeasibilityCertificate(min_eig, margin, asym, feasible)


def nfold_norm_bound(normT, normMinv, rho, n):
    """Bound ``||M_n|| <= ||T|| / (1 - max(1, ||M^{-1}||) rho^n)``.

    With ``rho`` the spectral radius of ``I - M^{-1} T`` one has
    ``M_n = T^{1/2} (I - S^n)^{-1} T^{1/2}`` for a symmetric ``S`` with
    spectrum in ``[0, rho]``, hence ``M_n <= T / (1 - rho^n)``. The factor
    ``||M^{-1}||`` alone is not enough when it is below one (SGS with
    ``c = 15`` on a 6x6 grid already violates it), so it is capped from
    below by one. Returns ``None`` when the denominator is not positive.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    denom = 1.0 - max(1.0, normMinv) * rho ** n
    if denom <= 0.0:
        return None
    return normT / denom


def exact_norm_model(sigma, tau, L=GRAD_NORM_BOUND):
    """``theta -> (||T_theta||_est, 0)`` for ``M = T``."""
    return lambda theta: (1.0 + theta ** 2 * sigma * tau * L ** 2, 0.0)


def sgs_norm_model(sigma, tau, L=GRAD_NORM_BOUND):
    """Symmetric Gauss-Seidel norm model for ``T = I + theta^2 s t K*K``."""
    def model(theta):
        c = theta ** 2 * sigma * tau
        return 1.0 + c * L ** 2, sgs_mt_estimate(c)
    return model


class GammaResult(NamedTuple):
    gamma: float
    theta: float
    history: list


def gamma_fixed_point(sigma, tau, gamma1, L=GRAD_NORM_BOUND, norm_model=None,
                      rounds=10):
    """Acceleration factor for the preconditioned strongly convex variant.

    Starting from ``theta = 1`` repeat `rounds` times::

        gamma <- 2 g1 / (1 + (1 + 2 s g1) theta^-2 (||M_theta||_est - 1))
        theta <- 1 / (1 + s gamma)

    `norm_model` maps ``theta`` to ``(||T_theta||_est, ||M_theta - T_theta||_est)``
    and must describe a theta-norm-monotone family; a decreasing ``gamma``
    sequence reveals a violation and raises ``ValueError``. Defaults to
    :func:`sgs_norm_model`.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if norm_model is None:
        norm_model = sgs_norm_model(sigma, tau, L)
    theta = 1.0
    history = []
    for _ in range(rounds):
        nT, nMT = norm_model(theta)
        excess = (nT + nMT - 1.0) / theta ** 2
        gamma = 2.0 * gamma1 / (1.0 + (1.0 + 2.0 * sigma * gamma1) * excess)
        if history and gamma < history[-1] * (1.0 - 1e-12):
            raise ValueError("norm model is not theta-norm-monotone: gamma "
                             f"decreased from {history[-1]!r} to {gamma!r}")
        history.append(gamma)
        theta = 1.0 / (1.0 + sigma * gamma)
    return GammaResult(gamma, theta, history)


def from_spec(spec, shape, c, strict=True):
    """Build a preconditioner from a short description.

    ``"exact"``, ``"richardson[:lam]"``, ``"jacobi[:lam]"``, ``"gs<n>"``
    (n-fold symmetric red-black Gauss-Seidel) or ``"ssor:<omega>:<n>"``.
    """
    spec = spec.strip().lower()
    parts = spec.split(":")
    head = parts[0]
    try:
        if head == "exact" and len(parts) == 1:
            return build_exact(shape, c)
        if head == "richardson" and len(parts) <= 2:
            lam = float(parts[1]) if len(parts) == 2 else normT_estimate(c)
            return build_richardson(c, lam, tuple(shape))
        st = StencilData.for_gradient(shape, c)
        if head == "jacobi" and len(parts) <= 2:
            lam = float(parts[1]) if len(parts) == 2 else None
            return build_damped_jacobi(st, lam, strict=strict)
        if head.startswith("gs") and len(parts) == 1:
            n = int(head[2:] or 1)
            return combine_nfold(build_sgs_redblack(st), n)
        if head == "ssor" and len(parts) in (2, 3):
            n = int(parts[2]) if len(parts) == 3 else 1
            return combine_nfold(build_ssor(st, float(parts[1])), n)
    except ValueError as exc:
        if isinstance(exc, FeasibilityError):
            raise
        raise ValueError(f"invalid preconditioner spec {spec!r}: {exc}") from exc
    raise ValueError(f"invalid preconditioner spec {spec!r}")


def norm_model_from_spec(spec, shape, sigma, tau):
    """Norm model ``theta -> (||M_theta||_est, 0)`` for a spec string.

    SSOR with ``omega != 1`` is refused: it is not theta-norm-monotone in
    general.
    """
    parts = spec.strip().lower().split(":")
    if parts[0] == "ssor" and len(parts) >= 2 and float(parts[1]) != 1.0:
        raise ValueError("SSOR with omega != 1 is not theta-norm-monotone; "
                         "give gamma explicitly")
    if parts[0].startswith("gs"):
        return sgs_norm_model(sigma, tau)
    return lambda theta: (from_spec(spec, shape, theta ** 2 * sigma * tau)
                          .norm_estimate, 0.0)
