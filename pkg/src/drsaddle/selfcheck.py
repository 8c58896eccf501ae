"""Invariant checks behind ``drsaddle selftest``.

Each check returns ``(ok, detail)``; all of them use small grids and dense
oracles so the whole suite runs in a few seconds.
"""

import math

import numpy as np

from . import linops
from .exactsolve import dense_materialize, dense_solve, make_plan, solve_elliptic
from .precond import (StencilData, build_damped_jacobi, build_richardson,
                      build_sgs_redblack, build_ssor, check_feasible,
                      combine_nfold, materialize_preconditioner)
from .problems import build_quadratic_pair
from .solvers import (adrsc_step, dr_step, fixed_point, initial_schedule,
                      initial_state, schedule_update)

__all__ = ["run_checks"]


def _adjointness(div_op, rng):
    worst = 0.0
    for shape in ((4, 4), (16, 16), (9, 5)):
        for _ in range(20):
            u = rng.standard_normal(shape)
            p = rng.standard_normal((2,) + shape)
            lhs = np.vdot(linops.grad(u), p) + np.vdot(u, div_op(p))
            worst = max(worst, abs(lhs) / (np.linalg.norm(u) * np.linalg.norm(p)))
    return worst <= 1e-10, f"max rel defect {worst:.1e}"


def _power_norm():
    v = linops.power_norm(linops.grad, lambda p: -linops.div(p), (32, 32), 200)
    return 7.0 < v * v <= 8.0 + 1e-9, f"||grad||^2 ~ {v * v:.6f}"


def _elliptic(rng):
    worst = 0.0
    for c in (1.0, 15.0):
        b = rng.standard_normal((8, 8))
        T = dense_materialize(lambda u: linops.normal_apply(u, c), 8, 8)
        ref = dense_solve(T, b.ravel()).reshape(8, 8)
        worst = max(worst, np.abs(solve_elliptic(b, make_plan((8, 8), c)) - ref).max())
    return worst <= 1e-10, f"max diff {worst:.1e}"


def _feasibility():
    bad = []
    for c in (1.0, 15.0):
        st = StencilData.for_gradient((6, 6), c)
        T = dense_materialize(lambda u: linops.normal_apply(u, c), 6, 6)
        builders = {
            "richardson": build_richardson(c, 1 + 8 * c, (6, 6)),
            "jacobi": build_damped_jacobi(st),
            "sgs": build_sgs_redblack(st),
            "ssor1.5": build_ssor(st, 1.5),
            "gs2": combine_nfold(build_sgs_redblack(st), 2),
        }
        for name, M in builders.items():
            if not check_feasible(materialize_preconditioner(M), T, 1e-9).feasible:
                bad.append(f"{name}@c={c:g}")
    return not bad, "all feasible" if not bad else "infeasible: " + ", ".join(bad)


def _fixed_points():
    prob = build_quadratic_pair(np.array([1.0]), 1.0)
    xs, ys = np.array([0.5]), np.array([0.5])
    xb, yb = fixed_point(xs, ys, prob.K, prob.K_adjoint, 1.0, 1.0)
    solver = prob.make_elliptic(1.0)
    st = initial_state(prob, xb, yb)
    for _ in range(10):
        st = dr_step(st, prob, 1.0, 1.0, solver)
    drift = max(abs(st.xbar - xb).max(), abs(st.ybar - yb).max())
    theta = 1.0 / (1.0 + 0.25)
    solver = prob.make_elliptic(theta ** 2)
    st = initial_state(prob, xb, yb)
    for _ in range(10):
        st = adrsc_step(st, prob, 1.0, 1.0, theta, solver)
    drift = max(drift, abs(st.xbar - xb).max(), abs(st.ybar - yb).max())
    return drift <= 1e-12, f"drift {drift:.1e}"


def _schedule():
    ok = True
    for sigma0, gamma in ((1.0, 0.5), (1.0, 1.0 / 121)):
        s = initial_schedule(sigma0, 15.0 / sigma0, gamma)
        q = sigma0 * gamma
        for k in range(1, 1001):
            s = schedule_update(s)
            lo = 1 + k * q / (math.sqrt(1 + q) + 1)
            hi = 1 + k * q / 2
            nu_hi = 1.0 / (k + (k - 1) * k * q / (2 * (math.sqrt(1 + q) + 1)))
            ok &= lo * (1 - 1e-12) <= s.lam <= hi * (1 + 1e-12)
            ok &= s.nu <= nu_hi * (1 + 1e-12)
            ok &= math.isclose(s.sigma * s.tau, 15.0, rel_tol=1e-12)
    return ok, "k <= 1000"


def run_checks(inject_div_sign=False, seed=0):
    """Run all checks; returns a list of ``(name, ok, detail)``."""
    rng = np.random.default_rng(seed)
    div_op = (lambda p: -linops.div(p)) if inject_div_sign else linops.div
    checks = [
        ("adjointness", lambda: _adjointness(div_op, rng)),
        ("power_norm", _power_norm),
        ("elliptic_solve", lambda: _elliptic(rng)),
        ("feasibility", _feasibility),
        ("fixed_points", _fixed_points),
        ("schedule_bounds", _schedule),
    ]
    out = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
