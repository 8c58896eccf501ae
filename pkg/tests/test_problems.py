import math

import numpy as np
import pytest

from drsaddle.linops import GRAD_NORM_BOUND
from drsaddle.problems import (DenoiseSpec, add_gaussian_noise, build_denoise,
                               build_huber, build_quadratic_pair, build_rof,
                               synthetic_image)
from drsaddle.solvers import RunConfig, adr_gamma_bound, run


def _adjoint_ok(P, rng):
    x = rng.standard_normal(P.shape)
    y = rng.standard_normal(np.shape(P.y0))
    a, b = np.vdot(P.K(x), y), np.vdot(x, P.K_adjoint(y))
    return abs(a - b) <= 1e-10 * max(1.0, abs(a))


def test_build_rof(rng):
    f = rng.uniform(size=(5, 6))
    P = build_rof(f, 0.5)
    assert P.gamma1 == 1.0 and P.gamma2 == 0.0 and P.normK_bound == GRAD_NORM_BOUND
    assert _adjoint_ok(P, rng)
    c = np.full((5, 6), 0.5)
    Pc = build_rof(c, 0.5)
    assert Pc.gap(c, np.zeros((2, 5, 6))).gap == 0.0
    assert adr_gamma_bound(P.gamma1, 1.0, 15.0, P.normK_bound) == pytest.approx(2 / 121)
    with pytest.raises(ValueError):
        build_rof(f, 0.0)
    with pytest.raises(ValueError):
        build_rof(np.array([np.nan, 1.0]).reshape(1, 2), 1.0)


def test_build_huber(rng):
    f = rng.uniform(size=(4, 4))
    P = build_huber(f, 1.0, 0.05)
    assert P.gamma2 == 0.05 and P.prox_g.strong_convexity == 0.05
    assert 0.2 * P.gamma1 / P.gamma2 == pytest.approx(4.0)
    assert _adjoint_ok(P, rng)
    c = np.full((4, 4), 0.1)
    assert build_huber(c, 1.0, 0.05).gap(c, np.zeros((2, 4, 4))).gap == 0.0
    with pytest.raises(ValueError):
        build_huber(f, 1.0, 0.0)


def test_denoise_spec(rng):
    f = rng.uniform(size=(3, 3))
    assert build_denoise(DenoiseSpec("tv", 0.5, f)).name == "rof"
    assert build_denoise(DenoiseSpec("huber", 0.5, f, 0.1)).name == "huber"
    with pytest.raises(ValueError):
        DenoiseSpec("huber", 0.5, f)
    with pytest.raises(ValueError):
        DenoiseSpec("l1", 0.5, f)


def test_quadratic_pair(rng):
    P = build_quadratic_pair(rng.standard_normal(4), 2.0)
    assert _adjoint_ok(P, rng)


def test_noise_zero_and_determinism():
    img = synthetic_image(20, 10)
    out = add_gaussian_noise(img, 0.0, 3)
    assert np.array_equal(out, img) and out is not img
    a = add_gaussian_noise(img, 0.1, 7)
    b = add_gaussian_noise(img, 0.1, 7)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, add_gaussian_noise(img, 0.1, 8))
    with pytest.raises(ValueError):
        add_gaussian_noise(img, -1.0, 0)


def test_noise_statistics():
    img = np.zeros((256, 256))
    z = add_gaussian_noise(img, 0.25, 11)
    assert abs(z.std() - 0.25) <= 0.05 * 0.25
    assert abs(z.mean()) < 0.01
    # not clipped
    assert z.min() < 0


def test_noise_odd_size_uses_box_muller():
    img = np.zeros((1, 3))
    z = add_gaussian_noise(img, 1.0, 5)
    u = np.random.Generator(np.random.PCG64(5)).random((2, 2))
    r = np.sqrt(-2 * np.log1p(-u[:, 0]))
    ref = np.array([r[0] * np.cos(2 * np.pi * u[0, 1]), r[0] * np.sin(2 * np.pi * u[0, 1]),
                    r[1] * np.cos(2 * np.pi * u[1, 1])])
    np.testing.assert_array_equal(z.ravel(), ref)


def test_synthetic_image_range():
    img = synthetic_image(64, 48)
    assert img.shape == (48, 64) and 0 <= img.min() and img.max() <= 1


def test_huber_small_lambda_matches_rof():
    f = add_gaussian_noise(synthetic_image(16, 16), 0.1, 2)
    cfg = RunConfig(algorithm="dr", sigma0=1, tau0=15, max_iter=3000, gap_tol=1e-12,
                    log_every=50, track_ergodic=False)
    a = run(build_rof(f, 0.5), cfg)
    b = run(build_huber(f, 0.5, 1e-8), cfg)
    assert np.abs(a.x - b.x).max() <= 1e-3
