"""Trading an exact linear solve for a few Gauss-Seidel sweeps.

Each iteration of the basic and accelerated methods solves a linear system
with ``T = I + sigma tau grad* grad``. A feasible preconditioner ``M`` (one
with ``M - T`` positive semidefinite) replaces that solve by one cheap
update ``d + M^{-1}(b - T d)`` while keeping convergence. This script
first checks feasibility on a tiny grid with dense matrices and then times
full runs on a larger image.
"""

import numpy as np

from drsaddle import RunConfig, run
from drsaddle.exactsolve import dense_materialize
from drsaddle.linops import normal_apply
from drsaddle.precond import check_feasible, from_spec, materialize_preconditioner
from drsaddle.problems import add_gaussian_noise, build_rof, synthetic_image

SPECS = ["exact", "richardson:121", "jacobi", "gs1", "gs2", "ssor:1.5:1"]


def feasibility_table(shape=(6, 6), c=15.0):
    T = dense_materialize(lambda u: normal_apply(u, c), shape[1], shape[0])
    print(f"feasibility on a {shape[0]}x{shape[1]} grid, c = {c:g}")
    for spec in SPECS:
        M = from_spec(spec, shape, c)
        Md = materialize_preconditioner(M)
        cert = check_feasible(Md, T)
        print(f"  {spec:14s} min eig(M - T) {cert.min_eig:+.2e}   "
              f"||M|| {np.linalg.norm(Md, 2):8.2f}   estimate {M.norm_estimate:8.2f}")


def timings(n=128, tol=1e-6):
    f = add_gaussian_noise(synthetic_image(n, n), 0.1, seed=3)
    problem = build_rof(f, 0.5)
    runs = [("aDR, DCT solve", dict(algorithm="adr")),
            ("aDR, sparse LU", dict(algorithm="adr", elliptic="direct")),
            ("paDR, gs1", dict(algorithm="padr", precond="gs1")),
            ("paDR, gs2", dict(algorithm="padr", precond="gs2")),
            ("paDR, gs3", dict(algorithm="padr", precond="gs3"))]
    print(f"\n{n}x{n} image, stopping at gap per pixel {tol:g}")
    for label, kw in runs:
        res = run(problem, RunConfig(sigma0=1.0, tau0=15.0, gap_tol=tol,
                                     max_iter=20000, log_every=10,
                                     track_ergodic=False, **kw))
        print(f"  {label:16s} {res.iterations:5d} iterations  {res.wall_time:6.2f}s")


if __name__ == "__main__":
    feasibility_table()
    timings()
