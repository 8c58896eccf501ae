import dataclasses
import math

import numpy as np
import pytest

from drsaddle.precond import build_exact
from drsaddle.problems import build_quadratic_pair, build_rof
from drsaddle.prox import ProxMap
from drsaddle.solvers import (ConfigurationError, DivergenceError,
                              ErgodicAverage, RunConfig, adr_gamma_bound,
                              adr_step, adrsc_gamma_bound, adrsc_params_heuristic,
                              adrsc_step, dr_step, fixed_point, initial_schedule,
                              initial_state, padr_step, padrsc_step, pdr_step,
                              run, schedule_update)

import _refs

SQ8 = math.sqrt(8.0)


@pytest.fixture
def scalar():
    return build_quadratic_pair(np.array([1.0]), 1.0)


def test_scalar_dr_fixed_point(scalar):
    xb, yb = fixed_point(np.array([0.5]), np.array([0.5]), scalar.K,
                         scalar.K_adjoint, 1.0, 1.0)
    assert (xb[0], yb[0]) == (0.0, 1.0)
    st = dr_step(initial_state(scalar, xb, yb), scalar, 1.0, 1.0,
                 scalar.make_elliptic(1.0))
    assert (st.x[0], st.y[0], st.d[0]) == (0.5, 0.5, 0.5)
    assert (st.xbar[0], st.ybar[0]) == (0.0, 1.0)


def test_scalar_dr_from_origin(scalar):
    st = dr_step(initial_state(scalar, [0.0], [0.0]), scalar, 1.0, 1.0,
                 scalar.make_elliptic(1.0))
    assert (st.x[0], st.y[0], st.d[0]) == (0.5, 0.0, 0.5)
    assert (st.xbar[0], st.ybar[0]) == (0.0, 0.5)


@pytest.mark.parametrize("theta", [1.0, 0.9, 0.5])
def test_scalar_adrsc_fixed_point(scalar, theta):
    st0 = initial_state(scalar, [0.0], [1.0])
    st = adrsc_step(st0, scalar, 1.0, 1.0, theta, scalar.make_elliptic(theta ** 2))
    assert abs(st.xbar[0]) <= 1e-14 and abs(st.ybar[0] - 1.0) <= 1e-14


def test_adrsc_theta_one_is_dr(rng):
    P = _refs.rof(16)
    st = initial_state(P, ybar=rng.standard_normal((2, 16, 16)) * 0.3)
    solver = P.make_elliptic(15.0)
    a = dr_step(st, P, 1.0, 15.0, solver)
    b = adrsc_step(st, P, 1.0, 15.0, 1.0, solver)
    for name in ("xbar", "ybar", "x", "y", "d"):
        np.testing.assert_allclose(getattr(a, name), getattr(b, name),
                                   atol=1e-14, rtol=0)


def test_rof_constant_image_stays_put():
    P = build_rof(np.full((6, 5), 0.3), 0.5)
    st = initial_state(P)
    for _ in range(5):
        st = dr_step(st, P, 1.0, 15.0, P.make_elliptic(15.0))
    np.testing.assert_allclose(st.x, 0.3, atol=1e-14)
    np.testing.assert_allclose(st.y, 0.0, atol=1e-14)
    assert P.gap(st.x, st.y).gap <= 1e-13


def test_schedule_first_steps():
    s = initial_schedule(1.0, 2.0, 1.0)
    assert s.theta == pytest.approx(1 / math.sqrt(2), rel=1e-15)
    s1 = schedule_update(s)
    assert s1.sigma == pytest.approx(1 / math.sqrt(2), rel=1e-15)
    assert s1.tau == pytest.approx(2.0 * math.sqrt(2), rel=1e-15)
    assert s1.lam == pytest.approx(math.sqrt(2), rel=1e-15)
    assert s1.theta == pytest.approx(1 / math.sqrt(1 + 1 / math.sqrt(2)), rel=1e-15)
    lower = 1 + 1.0 / (math.sqrt(2) + 1)
    assert s1.lam == pytest.approx(lower, rel=1e-15)


def test_schedule_reference_theta():
    s = initial_schedule(1.0, 15.0, 1 / 121)
    assert s.theta == pytest.approx(math.sqrt(121 / 122), rel=1e-15)


@pytest.mark.parametrize("sigma0,gamma", [(1.0, 0.5), (1.0, 1 / 121), (3.0, 0.02)])
def test_schedule_bounds(sigma0, gamma):
    s = initial_schedule(sigma0, 2.0, gamma)
    q = sigma0 * gamma
    for k in range(1, 1001):
        s = schedule_update(s)
        assert 1 + k * q / (math.sqrt(1 + q) + 1) <= s.lam * (1 + 1e-12)
        assert s.lam <= (1 + k * q / 2) * (1 + 1e-12)
        assert s.nu <= (1 + 1e-12) / (k + (k - 1) * k * q / (2 * (math.sqrt(1 + q) + 1)))


def test_step_product_conserved():
    s = initial_schedule(1.0, 15.0, 1 / 121)
    for _ in range(10000):
        s = schedule_update(s)
    assert s.sigma * s.tau == pytest.approx(15.0, rel=1e-12)


def test_ergodic_average(rng):
    xs = rng.standard_normal((5, 3))
    a = ErgodicAverage()
    for x in xs:
        a.update(x)
    np.testing.assert_allclose(a.mean, xs.mean(axis=0), atol=1e-15)
    b = ErgodicAverage().update(xs[0], 2.5)
    np.testing.assert_array_equal(b.mean, xs[0])
    s = initial_schedule(1.0, 1.0, 1.0)
    w = []
    c = ErgodicAverage()
    for x in xs:
        w.append(s.lam)
        c.update(x, s.lam)
        s = schedule_update(s)
    w = np.array(w)
    np.testing.assert_allclose(c.mean, (w[:, None] * xs).sum(0) / w.sum(), atol=1e-14)
    assert c.total == pytest.approx(w.sum(), rel=1e-14)
    with pytest.raises(ValueError):
        c.update(xs[0], 0.0)


def test_heuristic_params():
    s, t, g, gp = adrsc_params_heuristic(1.0, 1.0, 1.0)
    assert (s, t, g, gp) == (1.0, 1.0, 0.5, 0.5)
    s, t, g, gp = adrsc_params_heuristic(1.0, 0.05, SQ8)
    assert s == pytest.approx(math.sqrt(0.05 / 8), rel=1e-15)
    assert s * g == pytest.approx(t * gp, rel=1e-14)
    with pytest.raises(ValueError):
        adrsc_params_heuristic(0.0, 1.0, 1.0)


def test_default_gamma_values():
    assert adr_gamma_bound(1.0, 1.0, 15.0, SQ8) == pytest.approx(2 / 121)
    assert adrsc_gamma_bound(1.0, 0.2, 4.0, SQ8) == pytest.approx(2 / 9.96)
    res = run(_refs.rof(16), RunConfig(algorithm="padr", sigma0=1, tau0=15,
                                       precond="gs2", max_iter=1))
    assert res.params["gamma"] == pytest.approx(2 / (121 + 900 / 61), rel=1e-14)
    res = run(_refs.huber(16), RunConfig(algorithm="adrsc", sigma0=0.2, max_iter=1))
    assert res.params["tau0"] == pytest.approx(4.0)
    assert res.params["gamma"] == pytest.approx(2 / 9.96)


def _trajectory(P, cfg, n):
    out = []
    run(P, dataclasses.replace(cfg, max_iter=n, log_every=10 ** 9,
                               track_ergodic=False),
        callback=lambda st, sc: out.append((st.xbar.copy(), st.ybar.copy())))
    return out


@pytest.mark.parametrize("plain,pre", [
    (RunConfig(algorithm="dr", sigma0=1, tau0=15),
     RunConfig(algorithm="pdr", sigma0=1, tau0=15, precond="exact")),
    (RunConfig(algorithm="adr", sigma0=1, tau0=15, gamma=1 / 121),
     RunConfig(algorithm="padr", sigma0=1, tau0=15, gamma=1 / 121, precond="exact")),
])
def test_exact_preconditioner_degeneracy(plain, pre):
    P = _refs.rof(16)
    for (a, b), (c, d) in zip(_trajectory(P, plain, 100), _trajectory(P, pre, 100)):
        assert np.abs(a - c).max() <= 1e-12 and np.abs(b - d).max() <= 1e-12


def test_exact_preconditioner_degeneracy_sc():
    P = _refs.huber(16)
    plain = RunConfig(algorithm="adrsc", sigma0=0.2, gamma=0.2)
    pre = RunConfig(algorithm="padrsc", sigma0=0.2, gamma=0.2, precond="exact")
    for (a, b), (c, d) in zip(_trajectory(P, plain, 100), _trajectory(P, pre, 100)):
        assert np.abs(a - c).max() <= 1e-12 and np.abs(b - d).max() <= 1e-12


def test_step_functions_direct():
    P = _refs.rof(8)
    st = initial_state(P)
    M = build_exact(P.shape, 15.0)
    a = pdr_step(st, P, 1.0, 15.0, M)
    assert np.abs(a.d - dr_step(st, P, 1.0, 15.0, P.make_elliptic(15.0)).d).max() < 1e-12
    s = initial_schedule(1.0, 15.0, 1 / 121)
    b, s1 = padr_step(st, s, P, M)
    c, s2 = adr_step(st, s, P, P.make_elliptic(15.0))
    assert s1 == s2 and np.abs(b.xbar - c.xbar).max() < 1e-12
    H = _refs.huber(8)
    th = 1 / (1 + 0.2 * 0.1)
    Mh = build_exact(H.shape, th * th * 0.8)
    e = padrsc_step(initial_state(H), H, 0.2, 4.0, th, Mh)
    f = adrsc_step(initial_state(H), H, 0.2, 4.0, th, H.make_elliptic(th * th * 0.8))
    assert np.abs(e.ybar - f.ybar).max() < 1e-12


def test_pdr_gs2_close_to_exact():
    P = _refs.rof(32)
    a = run(P, RunConfig(algorithm="dr", sigma0=1, tau0=15, max_iter=500, log_every=500))
    b = run(P, RunConfig(algorithm="pdr", sigma0=1, tau0=15, precond="gs2",
                         max_iter=500, log_every=500))
    assert b.final_gap <= 10 * a.final_gap


def test_run_zero_iterations():
    P = _refs.rof(8)
    res = run(P, RunConfig(algorithm="dr", tau0=15, max_iter=0))
    assert res.iterations == 0 and not res.history
    np.testing.assert_array_equal(res.x, P.x0)


def test_run_constant_image_stops_at_one():
    P = build_rof(np.full((8, 8), 0.7), 0.5)
    res = run(P, RunConfig(algorithm="dr", tau0=15, max_iter=100, gap_tol=1e-12))
    assert res.iterations == 1 and res.converged and res.final_gap == 0.0


def test_run_is_deterministic():
    P = _refs.rof(16)
    cfg = RunConfig(algorithm="padr", sigma0=1, tau0=15, precond="gs2", max_iter=50,
                    log_every=5)
    a, b = run(P, cfg), run(P, cfg)
    assert [e.gap_per_pixel for e in a.history] == [e.gap_per_pixel for e in b.history]
    assert np.array_equal(a.x, b.x)


def test_ergodic_accumulator_matches_definition():
    P = _refs.rof(8)
    xs, ws = [], []

    def cb(st, sc):
        xs.append(st.x.copy())

    cfg = RunConfig(algorithm="adr", sigma0=1, tau0=15, gamma=1 / 121, max_iter=30)
    res = run(P, cfg, callback=cb)
    s = initial_schedule(1.0, 15.0, 1 / 121)
    for _ in xs:
        ws.append(s.lam)
        s = schedule_update(s)
    ws = np.array(ws)
    ref = np.tensordot(ws, np.array(xs), axes=1) / ws.sum()
    np.testing.assert_allclose(res.x_erg, ref, atol=1e-12)
    assert res.schedule.lam_sum == pytest.approx(ws.sum(), rel=1e-14)


def test_configuration_errors():
    P = _refs.rof(8)
    bad = [
        RunConfig(algorithm="nope", tau0=1),
        RunConfig(algorithm="dr", tau0=math.inf),
        RunConfig(algorithm="dr", sigma0=-1, tau0=1),
        RunConfig(algorithm="adr", sigma0=1, tau0=15, gamma=2 / 121),
        RunConfig(algorithm="adr", sigma0=1, tau0=15, gamma=0.0),
        RunConfig(algorithm="adrsc", sigma0=0.2),
        RunConfig(algorithm="dr", tau0=1, log_every=0),
        RunConfig(algorithm="pdr", tau0=1, precond="bogus"),
        RunConfig(algorithm="dr", tau0=1, elliptic="fft"),
    ]
    for cfg in bad:
        with pytest.raises(ConfigurationError):
            run(P, cfg)
    H = _refs.huber(8)
    with pytest.raises(ConfigurationError):
        run(H, RunConfig(algorithm="adrsc", sigma0=0.2, tau0=5.0))
    with pytest.raises(ConfigurationError):
        run(H, RunConfig(algorithm="adrsc", sigma0=0.2, gamma=0.3))
    with pytest.raises(ConfigurationError):
        run(H, RunConfig(algorithm="padrsc", sigma0=0.2, precond="ssor:1.5:1"))
    with pytest.raises(ConfigurationError):
        run(H, RunConfig(algorithm="padrsc", sigma0=0.2, precond="gs1", gamma=1.0))
    assert run(P, RunConfig(algorithm="dr", max_iter=1)).params["tau0"] == 15.0
    weak = dataclasses.replace(P, gamma1=0.0)
    with pytest.raises(ConfigurationError):
        run(weak, RunConfig(algorithm="adr", sigma0=1, tau0=15))


def test_divergence_reports_iteration():
    P = _refs.rof(8)
    calls = {"n": 0}

    def poisoned(x, s):
        calls["n"] += 1
        return x + (np.nan if calls["n"] == 3 else 0.0)

    bad = dataclasses.replace(P, prox_f=ProxMap(poisoned))
    with pytest.raises(DivergenceError) as info:
        run(bad, RunConfig(algorithm="dr", tau0=15, max_iter=10))
    assert info.value.iteration == 3


def test_direct_solver_matches_dct():
    P = _refs.rof(16)
    a = run(P, RunConfig(algorithm="adr", tau0=15, gamma=1 / 121, max_iter=50))
    b = run(P, RunConfig(algorithm="adr", tau0=15, gamma=1 / 121, max_iter=50,
                         elliptic="direct"))
    np.testing.assert_allclose(a.x, b.x, atol=1e-10)


def test_gap_history_decreases():
    P = _refs.rof(16)
    res = run(P, RunConfig(algorithm="dr", tau0=15, max_iter=300, log_every=10))
    assert res.history[-1].gap_per_pixel < res.history[0].gap_per_pixel


def test_fixed_point_invariance_quadratic_field(rng):
    f = rng.standard_normal((4, 5))
    k = 1.7
    P = build_quadratic_pair(f, k)
    xs = f / (1 + k * k)
    ys = k * xs
    sigma, tau = 0.8, 1.3
    xb, yb = fixed_point(xs, ys, P.K, P.K_adjoint, sigma, tau)
    st = initial_state(P, xb, yb)
    for _ in range(10):
        st = dr_step(st, P, sigma, tau, P.make_elliptic(sigma * tau))
    assert np.abs(st.xbar - xb).max() <= 1e-12 and np.abs(st.ybar - yb).max() <= 1e-12


def test_adr_distance_is_o_one_over_k_squared():
    P = _refs.rof(32)
    xs, _ = _refs.rof_saddle(32)
    d = _refs.distances(P, RunConfig(algorithm="adr", sigma0=1, tau0=1, gamma=1 / 9,
                                     max_iter=2000, log_every=10 ** 9,
                                     track_ergodic=False), xs)
    k = np.arange(1, 2001)
    tail = (k ** 2 * d)[99:]
    assert np.all(np.isfinite(tail))
    assert tail.max() <= 50 * tail[0]


def test_padrsc_linear_rate():
    H = _refs.huber(32)
    xs, _ = _refs.huber_solution()
    res = run(H, RunConfig(algorithm="padrsc", sigma0=0.15, precond="gs3", max_iter=1))
    theta = res.params["theta"]
    d = _refs.distances(H, RunConfig(algorithm="padrsc", sigma0=0.15, precond="gs3",
                                     max_iter=300, log_every=10 ** 9,
                                     track_ergodic=False), xs)
    k = np.arange(1, 301)
    m = k >= 50
    slope = np.polyfit(k[m], np.log(d[m]), 1)[0]
    assert slope <= math.log(theta) + 0.05
