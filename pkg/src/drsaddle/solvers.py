"""Douglas-Rachford iterations for ``min_x max_y <Kx,y> + F(x) - G(y)``.

Six drivers share one state layout:

* ``dr`` / ``pdr``: basic iteration, exact or preconditioned linear step.
* ``adr`` / ``padr``: accelerated iteration for strongly convex ``F`` with
  step sizes ``sigma_k -> 0``, ``tau_k -> inf`` and ``sigma_k tau_k``
  constant.
* ``adrsc`` / ``padrsc``: constant steps for strongly convex ``F`` and
  ``G`` with linear convergence.

The linear step solves ``(I + c K*K) d = b``; the preconditioned variants
replace it by ``d + M^{-1}(b - T d)`` with ``d`` carried across iterations.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np

from . import precond as _precond
from .exactsolve import DirectSolver, make_plan, solve_elliptic
from .linops import normal_apply

log = logging.getLogger(__name__)

__all__ = [
    "SaddleProblem", "IterateState", "StepSchedule", "ErgodicAverage",
    "RunConfig", "RunResult", "LogEntry", "ConfigurationError",
    "DivergenceError", "dr_step", "pdr_step", "adr_step", "padr_step",
    "adrsc_step", "padrsc_step", "schedule_update", "initial_schedule",
    "adrsc_params_heuristic", "adr_gamma_bound", "adrsc_gamma_bound",
    "padrsc_gamma_bound", "initial_state", "fixed_point", "run", "ALGORITHMS",
]

ALGORITHMS = ("dr", "pdr", "adr", "padr", "adrsc", "padrsc")


class ConfigurationError(ValueError):
    """Invalid parameters for the selected algorithm."""


class DivergenceError(ArithmeticError):
    """A nonfinite value appeared in the iterates."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"nonfinite iterate at iteration {iteration}")


def _gradient_elliptic(shape, c, method="dct", workers=None):
    if method == "dct":
        plan = make_plan(shape, c)
        return lambda b: solve_elliptic(b, plan, workers)
    if method == "direct":
        return DirectSolver(shape, c)
    raise ConfigurationError(f"unknown elliptic method {method!r}")


@dataclass(frozen=True)
class SaddleProblem:
    """Data of ``min_x max_y <K x, y> + F(x) - G(y)``.

    Attributes
    ----------
    prox_f, prox_g : ProxMap
        Resolvents of ``F`` and ``G``.
    K, K_adjoint : callable
    normK_bound : float
        Upper bound ``L`` for ``||K||``.
    gamma1, gamma2 : float
        Strong convexity moduli of ``F`` and ``G``.
    x0, y0 : ndarray
        Default initial guesses for ``xbar`` and ``ybar``.
    gap : callable, optional
        ``(x, y) -> GapReport``.
    elliptic : callable, optional
        ``(c, method) -> solver`` returning ``d`` with ``(I + cK*K) d = b``.
        Defaults to the DCT/direct solvers for the image gradient.
    normal : callable, optional
        ``(d, c) -> (I + c K*K) d``.
    grid_operator : bool
        True when ``K`` is the image gradient, enabling stencil
        preconditioners.
    """

    prox_f: object
    prox_g: object
    K: Callable
    K_adjoint: Callable
    normK_bound: float
    gamma1: float
    gamma2: float
    x0: np.ndarray
    y0: np.ndarray
    gap: Optional[Callable] = None
    elliptic: Optional[Callable] = None
    normal: Optional[Callable] = None
    grid_operator: bool = False
    name: str = ""

    @property
    def shape(self):
        return np.shape(self.x0)

    def apply_normal(self, d, c):
        if self.normal is not None:
            return self.normal(d, c)
        if self.grid_operator:
            return normal_apply(d, c)
        return d + c * self.K_adjoint(self.K(d))

    def make_elliptic(self, c, method="dct", workers=None):
        if self.elliptic is not None:
            return self.elliptic(c, method)
        if self.grid_operator:
            return _gradient_elliptic(self.shape, c, method, workers)
        raise ConfigurationError("problem has no elliptic solver")


@dataclass
class IterateState:
    """Iterates of one Douglas-Rachford run.

    ``xbar``/``ybar`` hold the auxiliary variables (``xhat``/``yhat`` for
    the accelerated iteration), ``x``/``y`` the latest resolvent outputs and
    ``d`` the linear-step variable.
    """

    xbar: np.ndarray
    ybar: np.ndarray
    x: np.ndarray
    y: np.ndarray
    d: np.ndarray
    k: int = 0


def initial_state(problem, xbar=None, ybar=None):
    """State with ``xbar = x0``, ``ybar = y0`` and ``d = xbar``."""
    xbar = np.array(problem.x0 if xbar is None else xbar, dtype=float)
    ybar = np.array(problem.y0 if ybar is None else ybar, dtype=float)
    return IterateState(xbar=xbar, ybar=ybar, x=xbar.copy(), y=ybar.copy(),
                        d=xbar.copy(), k=0)


def fixed_point(x_star, y_star, K, K_adjoint, sigma, tau):
    """Fixed point ``(x* - sigma K* y*, y* + tau K x*)`` of the DR iteration."""
    return x_star - sigma * K_adjoint(y_star), y_star + tau * K(x_star)


def _finite_or_raise(state):
    if not (np.isfinite(np.sum(state.xbar)) and np.isfinite(np.sum(state.ybar))):
        raise DivergenceError(state.k)


def _linear_step(problem, d, b, c, solver, M):
    if M is None:
        return solver(b)
    return d + M.apply_inverse(b - problem.apply_normal(d, c))


def _dr_core(state, problem, sigma, tau, solver, M):
    x = problem.prox_f(state.xbar, sigma)
    y = problem.prox_g(state.ybar, tau)
    b = (2.0 * x - state.xbar) - sigma * problem.K_adjoint(2.0 * y - state.ybar)
    d = _linear_step(problem, state.d, b, sigma * tau, solver, M)
    return IterateState(xbar=state.xbar - x + d, ybar=y + tau * problem.K(d),
                        x=x, y=y, d=d, k=state.k + 1)


def dr_step(state, problem, sigma, tau, elliptic):
    """One basic Douglas-Rachford step.

    ``elliptic`` solves ``(I + sigma tau K*K) d = b``.
    """
    return _dr_core(state, problem, sigma, tau, elliptic, None)


def pdr_step(state, problem, sigma, tau, M):
    """Preconditioned step; `M` must be feasible for ``I + sigma tau K*K``."""
    return _dr_core(state, problem, sigma, tau, None, M)


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes of the accelerated iteration at index ``k``.

    ``lam`` is the ergodic weight ``lambda_k`` and ``lam_sum`` the sum
    ``lambda_0 + ... + lambda_{k-1}``, the reciprocal of ``nu_k``.
    """

    sigma: float
    tau: float
    theta: float
    gamma: float
    lam: float = 1.0
    lam_sum: float = 0.0
    k: int = 0

    @property
    def nu(self):
        return 1.0 / self.lam_sum if self.lam_sum > 0 else math.inf


def initial_schedule(sigma0, tau0, gamma):
    return StepSchedule(sigma=float(sigma0), tau=float(tau0),
                        theta=1.0 / math.sqrt(1.0 + sigma0 * gamma),
                        gamma=float(gamma))


def schedule_update(s):
    """Advance the schedule by one iteration."""
    sigma = s.theta * s.sigma
    return StepSchedule(sigma=sigma, tau=s.tau / s.theta,
                        theta=1.0 / math.sqrt(1.0 + sigma * s.gamma),
                        gamma=s.gamma, lam=s.lam / s.theta,
                        lam_sum=s.lam_sum + s.lam, k=s.k + 1)


def _adr_core(state, schedule, problem, c0, solver, M):
    s, t, th = schedule.sigma, schedule.tau, schedule.theta
    x = problem.prox_f(state.xbar, s)
    y = problem.prox_g(state.ybar, t)
    b = (((1.0 + th) * x - th * state.xbar)
         - s * problem.K_adjoint((1.0 + th) * y - state.ybar))
    d = _linear_step(problem, state.d, b, c0, solver, M)
    new = IterateState(xbar=th * (state.xbar - x) + d,
                       ybar=y + (t / th) * problem.K(d),
                       x=x, y=y, d=d, k=state.k + 1)
    return new, schedule_update(schedule)


def adr_step(state, schedule, problem, elliptic, c0=None):
    """One accelerated step; `elliptic` solves with ``c0 = sigma0 tau0``.

    Returns the new state and the advanced schedule.
    """
    c0 = schedule.sigma * schedule.tau if c0 is None else c0
    return _adr_core(state, schedule, problem, c0, elliptic, None)


def padr_step(state, schedule, problem, M):
    """Preconditioned accelerated step; `M` is feasible for ``I + c0 K*K``."""
    return _adr_core(state, schedule, problem, M.c, None, M)


def _adrsc_core(state, problem, sigma, tau, theta, solver, M):
    x = problem.prox_f(state.xbar, sigma)
    y = problem.prox_g(state.ybar, tau)
    r = (1.0 + theta) / theta
    b = (r * x - state.xbar) - theta * sigma * problem.K_adjoint(r * y - state.ybar)
    c = theta * theta * sigma * tau
    d = _linear_step(problem, state.d, b, c, solver, M)
    return IterateState(xbar=state.xbar - x / theta + d,
                        ybar=y + theta * tau * problem.K(d),
                        x=x, y=y, d=d, k=state.k + 1)


def adrsc_step(state, problem, sigma, tau, theta, elliptic):
    """Strongly convex-concave step; `elliptic` uses ``c = theta^2 sigma tau``."""
    return _adrsc_core(state, problem, sigma, tau, theta, elliptic, None)


def padrsc_step(state, problem, sigma, tau, theta, M):
    """Preconditioned strongly convex-concave step."""
    return _adrsc_core(state, problem, sigma, tau, theta, None, M)


class ErgodicAverage:
    """Streaming weighted mean ``sum w_k x_k / sum w_k``.

    Weights may be passed as logarithms, which keeps geometrically growing
    weights representable.
    """

    def __init__(self):
        self.mean = None
        self.log_total = -math.inf
        self.count = 0

    def update(self, x, weight=1.0, log_weight=None):
        if log_weight is None:
            if not weight > 0:
                raise ValueError("weight must be positive")
            log_weight = math.log(weight)
        new_total = np.logaddexp(self.log_total, log_weight)
        frac = math.exp(log_weight - new_total)
        if self.mean is None:
            self.mean = np.array(x, dtype=float)
        else:
            self.mean += frac * (x - self.mean)
        self.log_total = float(new_total)
        self.count += 1
        return self

    @property
    def total(self):
        return math.exp(self.log_total)


def adrsc_params_heuristic(gamma1, gamma2, L):
    """Step sizes from the dropped-cubic approximation.

    Returns
    -------
    sigma, tau, gamma, gamma_prime : float
    """
    if not (gamma1 > 0 and gamma2 > 0 and L > 0):
        raise ValueError("gamma1, gamma2 and L must be positive")
    root = math.sqrt(gamma1 * gamma2)
    sigma = math.sqrt(gamma2 / (gamma1 * L * L))
    tau = math.sqrt(gamma1 / (gamma2 * L * L))
    return sigma, tau, gamma1 * L / (L + root), gamma2 * L / (L + root)


def adr_gamma_bound(gamma1, sigma0, tau0, L):
    """Strict upper bound ``2 gamma1 / (1 + sigma0 tau0 L^2)``."""
    return 2.0 * gamma1 / (1.0 + sigma0 * tau0 * L * L)


def adrsc_gamma_bound(gamma1, sigma, tau, L):
    """Bound ``2 gamma1 / (1 + (1 + 2 sigma gamma1) sigma tau L^2)``."""
    return 2.0 * gamma1 / (1.0 + (1.0 + 2.0 * sigma * gamma1) * sigma * tau * L * L)


def padrsc_gamma_bound(gamma1, sigma, theta, normM):
    """Bound ``2 g1 / (1 + (1 + 2 sigma g1) theta^-2 (||M|| - 1))``."""
    return 2.0 * gamma1 / (1.0 + (1.0 + 2.0 * sigma * gamma1)
                           * (normM - 1.0) / theta ** 2)


DEFAULT_TAU0 = 15.0


@dataclass
class RunConfig:
    """Parameters of :func:`run`.

    ``tau0`` defaults to 15, except for ``adrsc``/``padrsc`` where it
    follows from ``sigma gamma1 = tau gamma2``. ``gamma`` defaults to half the admissible
    bound for ``adr``, to ``2 gamma1 / ||M||_est`` for ``padr``, to the
    admissible bound for ``adrsc`` and to the fixed-point procedure for
    ``padrsc``. ``precond`` is a spec string or a prebuilt preconditioner.
    """

    algorithm: str = "dr"
    sigma0: float = 1.0
    tau0: Optional[float] = None
    gamma: Optional[float] = None
    precond: Union[str, object, None] = None
    max_iter: int = 1000
    gap_tol: float = 0.0
    log_every: int = 10
    elliptic: str = "dct"
    track_ergodic: bool = True
    workers: Optional[int] = None
    strict: bool = True


@dataclass(frozen=True)
class LogEntry:
    k: int
    gap_per_pixel: float
    primal_energy: float
    dual_energy: float
    ergodic_gap_per_pixel: float
    elapsed: float


@dataclass(frozen=True)
class RunResult:
    x: np.ndarray
    y: np.ndarray
    x_erg: np.ndarray
    y_erg: np.ndarray
    iterations: int
    wall_time: float
    history: List[LogEntry]
    converged: bool
    state: IterateState
    schedule: Optional[StepSchedule] = None
    params: dict = field(default_factory=dict)

    @property
    def final_gap(self):
        return self.history[-1].gap_per_pixel if self.history else math.nan


def _build_precond(problem, spec, c, strict):
    if spec is None:
        spec = "exact"
    if not isinstance(spec, str):
        if getattr(spec, "c", c) != c and not math.isclose(spec.c, c, rel_tol=1e-12):
            raise ConfigurationError(f"preconditioner built for c={spec.c}, "
                                     f"needs c={c}")
        return spec
    if spec.strip().lower() == "exact" and not problem.grid_operator:
        solve = problem.make_elliptic(c)
        L = problem.normK_bound
        return _precond.SplitPreconditioner(solve, "exact", 1.0 + c * L * L,
                                            c, problem.shape)
    if not problem.grid_operator:
        raise ConfigurationError("stencil preconditioners need the image "
                                 "gradient operator")
    try:
        return _precond.from_spec(spec, problem.shape, c, strict=strict)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc


def _positive(name, v):
    if v is None or not v > 0 or not math.isfinite(v):
        raise ConfigurationError(f"{name} must be positive and finite, got {v!r}")


def _prepare(problem, cfg):
    """Validate `cfg` and return the step closure plus parameters."""
    algo = cfg.algorithm
    if algo not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm {algo!r}")
    if cfg.max_iter < 0:
        raise ConfigurationError("max_iter must be >= 0")
    if cfg.log_every < 1:
        raise ConfigurationError("log_every must be >= 1")
    L = problem.normK_bound
    g1, g2 = problem.gamma1, problem.gamma2
    sigma = cfg.sigma0
    _positive("sigma0", sigma)
    params = {"algorithm": algo, "sigma0": sigma}

    if algo in ("adrsc", "padrsc"):
        if not (g1 > 0 and g2 > 0):
            raise ConfigurationError(f"{algo} needs gamma1, gamma2 > 0, got "
                                     f"{g1}, {g2}")
        tau = cfg.tau0 if cfg.tau0 is not None else sigma * g1 / g2
        _positive("tau0", tau)
        if not math.isclose(sigma * g1, tau * g2, rel_tol=1e-12):
            raise ConfigurationError("step sizes must satisfy sigma gamma1 = "
                                     f"tau gamma2 (got {sigma * g1} vs {tau * g2})")
    else:
        tau = DEFAULT_TAU0 if cfg.tau0 is None else cfg.tau0
        _positive("tau0", tau)
    params["tau0"] = tau

    if algo in ("dr", "pdr"):
        c = sigma * tau
        if algo == "dr":
            solver = problem.make_elliptic(c, cfg.elliptic, cfg.workers)
            step = lambda st, sch: (dr_step(st, problem, sigma, tau, solver), sch)
        else:
            M = _build_precond(problem, cfg.precond, c, cfg.strict)
            params["precond"] = M.kind
            step = lambda st, sch: (pdr_step(st, problem, sigma, tau, M), sch)
        return step, None, params

    if algo in ("adr", "padr"):
        if not g1 > 0:
            raise ConfigurationError(f"{algo} needs gamma1 > 0")
        c0 = sigma * tau
        gamma = cfg.gamma
        if algo == "adr":
            bound = adr_gamma_bound(g1, sigma, tau, L)
            gamma = 0.5 * bound if gamma is None else gamma
            if not 0 < gamma < bound:
                raise ConfigurationError(f"gamma={gamma!r} must lie in (0, "
                                         f"{bound!r})")
            solver = problem.make_elliptic(c0, cfg.elliptic, cfg.workers)
            step = lambda st, sch: adr_step(st, sch, problem, solver, c0)
        else:
            M = _build_precond(problem, cfg.precond, c0, cfg.strict)
            bound = 2.0 * g1 / M.norm_estimate
            gamma = bound if gamma is None else gamma
            if not 0 < gamma <= bound:
                raise ConfigurationError(f"gamma={gamma!r} must lie in (0, "
                                         f"{bound!r}]")
            params["precond"] = M.kind
            step = lambda st, sch: padr_step(st, sch, problem, M)
        params["gamma"] = gamma
        return step, initial_schedule(sigma, tau, gamma), params

    # adrsc / padrsc
    gamma = cfg.gamma
    if algo == "adrsc":
        bound = adrsc_gamma_bound(g1, sigma, tau, L)
        gamma = bound if gamma is None else gamma
        if not 0 <= gamma <= bound * (1 + 1e-12):
            raise ConfigurationError(f"gamma={gamma!r} must lie in [0, {bound!r}]")
        theta = 1.0 / (1.0 + sigma * gamma)
        solver = problem.make_elliptic(theta * theta * sigma * tau,
                                       cfg.elliptic, cfg.workers)
        step = lambda st, sch: (adrsc_step(st, problem, sigma, tau, theta,
                                           solver), sch)
    else:
        spec = cfg.precond if cfg.precond is not None else "exact"
        if gamma is None:
            if not isinstance(spec, str):
                raise ConfigurationError("a prebuilt preconditioner needs an "
                                         "explicit gamma")
            try:
                if problem.grid_operator:
                    model = _precond.norm_model_from_spec(spec, problem.shape,
                                                          sigma, tau)
                elif spec.strip().lower() == "exact":
                    model = _precond.exact_norm_model(sigma, tau, L)
                else:
                    raise ValueError("stencil preconditioners need the "
                                     "image gradient operator")
                res = _precond.gamma_fixed_point(sigma, tau, g1, L, model)
            except ValueError as exc:
                raise ConfigurationError(str(exc)) from exc
            gamma = res.gamma
            params["gamma_history"] = res.history
        theta = 1.0 / (1.0 + sigma * gamma)
        M = _build_precond(problem, spec, theta * theta * sigma * tau,
                           cfg.strict)
        bound = padrsc_gamma_bound(g1, sigma, theta, M.norm_estimate)
        if not 0 <= gamma <= bound * (1 + 1e-12):
            raise ConfigurationError(f"gamma={gamma!r} exceeds the admissible "
                                     f"bound {bound!r} for ||M||_est="
                                     f"{M.norm_estimate!r}")
        params["precond"] = M.kind
        step = lambda st, sch: (padrsc_step(st, problem, sigma, tau, theta, M),
                                sch)
    params["gamma"] = gamma
    params["theta"] = theta
    return step, None, params


def run(problem, config, callback=None, state=None):
    """Iterate until the per-pixel gap drops to ``config.gap_tol``.

    Wall time includes the setup of the linear solver. The gap of the
    current iterate ``(x^k, y^k)`` is evaluated at ``k = 1``
    and every ``log_every`` iterations; the run stops at the first logged
    iteration meeting the tolerance or after ``max_iter`` iterations.

    Parameters
    ----------
    problem : SaddleProblem
    config : RunConfig
    callback : callable, optional
        Called as ``callback(state, schedule)`` after every iteration.
    state : IterateState, optional
        Starting point; defaults to :func:`initial_state`.

    Returns
    -------
    RunResult

    Raises
    ------
    ConfigurationError
        Inadmissible parameters, raised before the first iteration.
    DivergenceError
        A nonfinite iterate, carrying the iteration index.
    """
    t0 = time.perf_counter()
    step, schedule, params = _prepare(problem, config)
    st = initial_state(problem) if state is None else state
    algo = config.algorithm
    theta = params.get("theta")
    erg_x, erg_y = ErgodicAverage(), ErgodicAverage()
    history = []
    converged = False
    log_w = 0.0
    done = 0
    for k in range(1, config.max_iter + 1):
        if schedule is not None:
            log_w = math.log(schedule.lam)
        st, schedule = step(st, schedule)
        _finite_or_raise(st)
        done = k
        if config.track_ergodic:
            erg_x.update(st.x, log_weight=log_w)
            erg_y.update(st.y, log_weight=log_w)
            if theta is not None:
                # weights theta^{-k'} for the strongly convex variants
                log_w -= math.log(theta)
        if callback is not None:
            callback(st, schedule)
        if problem.gap is not None and (k == 1 or k % config.log_every == 0
                                        or k == config.max_iter):
            rep = problem.gap(st.x, st.y)
            erg = (problem.gap(erg_x.mean, erg_y.mean).per_pixel_gap
                   if config.track_ergodic else math.nan)
            history.append(LogEntry(k, rep.per_pixel_gap, rep.primal_energy,
                                    rep.dual_energy, erg,
                                    time.perf_counter() - t0))
            if rep.per_pixel_gap <= config.gap_tol:
                converged = True
                break
    wall = time.perf_counter() - t0
    if done == 0:
        x, y = st.xbar.copy(), st.ybar.copy()
    else:
        x, y = st.x, st.y
    x_erg = erg_x.mean if erg_x.mean is not None else x
    y_erg = erg_y.mean if erg_y.mean is not None else y
    log.debug("%s finished after %d iterations (%.3fs)", algo, done, wall)
    return RunResult(x=x, y=y, x_erg=x_erg, y_erg=y_erg, iterations=done,
                     wall_time=wall, history=history, converged=converged,
                     state=st, schedule=schedule, params=params)
