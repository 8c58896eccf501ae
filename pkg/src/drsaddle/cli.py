"""Command-line front end: ``denoise``, ``bench`` and ``selftest``.

Exit codes: 0 success, 1 selftest failure, 2 configuration error,
3 divergence, 4 I/O error.
"""

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass, fields
from typing import Optional, Tuple

import numpy as np

from .pgm import PGMError, read_pgm, write_pgm
from .problems import add_gaussian_noise, build_huber, build_rof, synthetic_image
from .solvers import ALGORITHMS, ConfigurationError, DivergenceError, RunConfig, run

log = logging.getLogger("drsaddle")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3, 4
CSV_HEADER = ["iter", "gap_per_pixel", "primal_energy", "dual_energy",
              "elapsed_ms"]


@dataclass
class CliConfig:
    """Effective command-line configuration.

    :meth:`to_args` serializes it so that parsing the result yields an
    equal config.
    """

    subcommand: str = "denoise"
    input: Optional[str] = None
    synthetic: Optional[str] = None
    output: Optional[str] = None
    model: str = "tv"
    alpha: float = 0.5
    lam: float = 0.05
    algorithm: str = "dr"
    sigma0: float = 1.0
    tau0: Optional[float] = None
    gamma: Optional[float] = None
    precond: Optional[str] = None
    elliptic: str = "dct"
    tol: float = 1e-6
    max_iter: int = 10000
    seed: int = 0
    noise: Optional[float] = None
    csv: Optional[str] = None
    log_every: int = 10
    threads: Optional[int] = None
    algorithms: Tuple[str, ...] = ("dr", "adr")
    tols: Tuple[float, ...] = (1e-5, 1e-7)
    verbose: bool = False

    def to_args(self):
        args = [self.subcommand]
        default = CliConfig(subcommand=self.subcommand)
        for f in fields(self):
            name = f.name
            if name in ("subcommand",) or name not in _OPTIONS_BY_SUB[self.subcommand]:
                continue
            v = getattr(self, name)
            if v == getattr(default, name):
                continue
            flag = "--" + name.replace("_", "-")
            if isinstance(v, bool):
                if v:
                    args.append(flag)
            elif isinstance(v, tuple):
                args.append(flag + "=" + ",".join(
                    repr(x) if isinstance(x, float) else str(x) for x in v))
            else:
                args.append(flag + "=" + (repr(v) if isinstance(v, float)
                                          else str(v)))
        return args


def _floats(text):
    return tuple(float(t) for t in text.split(",") if t.strip())


def _names(text):
    return tuple(t.strip() for t in text.split(",") if t.strip())


_COMMON = ("input", "synthetic", "model", "alpha", "lam", "sigma0", "tau0",
           "gamma", "max_iter", "seed", "noise", "threads", "verbose",
           "elliptic")
_OPTIONS_BY_SUB = {
    "denoise": _COMMON + ("output", "algorithm", "precond", "tol", "csv",
                          "log_every"),
    "bench": _COMMON + ("algorithms", "tols", "csv"),
    "selftest": ("verbose",),
}


def build_parser():
    p = argparse.ArgumentParser(
        prog="drsaddle",
        description="Douglas-Rachford saddle-point solvers for TV denoising.")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp):
        src = sp.add_argument_group("input image")
        src.add_argument("--input", help="PGM file (P2 or P5)")
        src.add_argument("--synthetic", metavar="WxH",
                         help="use the built-in synthetic test image")
        src.add_argument("--noise", type=float,
                         help="add Gaussian noise with this standard deviation")
        src.add_argument("--seed", type=int, default=0, help="noise seed")
        m = sp.add_argument_group("model")
        m.add_argument("--model", choices=("tv", "huber"), default="tv")
        m.add_argument("--alpha", type=float, default=0.5)
        m.add_argument("--lam", type=float, default=0.05,
                       help="Huber parameter (huber model only)")
        s = sp.add_argument_group("solver")
        s.add_argument("--sigma0", type=float, default=1.0)
        s.add_argument("--tau0", type=float,
                       help="default 15, or sigma0*gamma1/gamma2 for the "
                            "strongly convex variants")
        s.add_argument("--gamma", type=float, help="acceleration factor")
        s.add_argument("--max-iter", type=int, default=10000)
        s.add_argument("--elliptic", choices=("dct", "direct"), default="dct",
                       help="exact solver for the linear step")
        s.add_argument("--threads", type=int,
                       help="worker threads for transforms; 1 is deterministic")
        sp.add_argument("-v", "--verbose", action="store_true")

    d = sub.add_parser("denoise", help="denoise one image")
    common(d)
    d.add_argument("--output", help="output PGM path")
    d.add_argument("--algorithm", choices=ALGORITHMS, default="dr")
    d.add_argument("--precond", help='preconditioner: "exact", '
                   '"richardson:<l>", "jacobi:<l>", "gs<n>", "ssor:<w>:<n>"')
    d.add_argument("--tol", type=float, default=1e-6,
                   help="stopping tolerance for the gap per pixel")
    d.add_argument("--csv", help="convergence log")
    d.add_argument("--log-every", type=int, default=10)

    b = sub.add_parser("bench", help="iterations and time per tolerance")
    common(b)
    b.add_argument("--algorithms", type=_names, default=("dr", "adr"),
                   help='comma separated, e.g. "dr,adr,padr@gs2,adr@direct"')
    b.add_argument("--tols", type=_floats, default=(1e-5, 1e-7))
    b.add_argument("--csv", help="table output (default stdout)")

    t = sub.add_parser("selftest", help="run the built-in invariant checks")
    t.add_argument("-v", "--verbose", action="store_true")
    t.add_argument("--inject-div-sign", action="store_true",
                   help=argparse.SUPPRESS)
    return p


def parse_config(argv):
    """Parse `argv` into a :class:`CliConfig` (and hidden extras)."""
    ns = build_parser().parse_args(argv)
    kw = {k: v for k, v in vars(ns).items()
          if k in {f.name for f in fields(CliConfig)}}
    cfg = CliConfig(**kw)
    return cfg, ns


def _load_image(cfg):
    if (cfg.input is None) == (cfg.synthetic is None):
        raise ConfigurationError("give exactly one of --input and --synthetic")
    if cfg.input is not None:
        f = read_pgm(cfg.input)
    else:
        try:
            w, h = (int(t) for t in cfg.synthetic.lower().split("x"))
        except ValueError:
            raise ConfigurationError(f"bad --synthetic size {cfg.synthetic!r}")
        if w < 1 or h < 1:
            raise ConfigurationError("synthetic size must be positive")
        f = synthetic_image(w, h)
    if cfg.noise:
        if cfg.noise < 0:
            raise ConfigurationError("--noise must be nonnegative")
        f = add_gaussian_noise(f, cfg.noise, cfg.seed)
    return f


def _problem(cfg, f):
    try:
        if cfg.model == "tv":
            return build_rof(f, cfg.alpha)
        return build_huber(f, cfg.alpha, cfg.lam)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc


def _run_config(cfg, algorithm, precond, elliptic, tol, log_every):
    if algorithm in ("adrsc", "padrsc") and cfg.model != "huber":
        raise ConfigurationError(f"{algorithm} needs a strongly convex dual "
                                 "(use --model huber)")
    return RunConfig(algorithm=algorithm, sigma0=cfg.sigma0, tau0=cfg.tau0,
                     gamma=cfg.gamma, precond=precond, max_iter=cfg.max_iter,
                     gap_tol=tol, log_every=log_every, elliptic=elliptic,
                     track_ergodic=False, workers=cfg.threads)


def _fmt(v):
    return "%.17g" % v


def write_csv_log(history, path):
    """Write the convergence log with strictly increasing ``elapsed_ms``."""
    prev = -math.inf
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for e in history:
            ms = e.elapsed * 1e3
            if ms <= prev:
                ms = float(np.nextafter(prev, math.inf))
            prev = ms
            w.writerow([str(e.k), _fmt(e.gap_per_pixel), _fmt(e.primal_energy),
                        _fmt(e.dual_energy), _fmt(ms)])


def run_denoise(cfg):
    f = _load_image(cfg)
    problem = _problem(cfg, f)
    if cfg.algorithm in ("pdr", "padr", "padrsc"):
        precond = cfg.precond or "exact"
    elif cfg.precond is not None:
        raise ConfigurationError(f"{cfg.algorithm} takes no preconditioner")
    else:
        precond = None
    rc = _run_config(cfg, cfg.algorithm, precond, cfg.elliptic, cfg.tol,
                     cfg.log_every)
    res = run(problem, rc)
    if cfg.output:
        write_pgm(res.x, cfg.output)
    if cfg.csv:
        write_csv_log(res.history, cfg.csv)
    print(f"iterations={res.iterations} time={res.wall_time:.3f}s "
          f"gap_per_pixel={res.final_gap:.3e} converged={res.converged}")
    return EXIT_OK


def _parse_entry(entry):
    """``algo[@option]``: option is a preconditioner or ``dct``/``direct``."""
    algo, _, opt = entry.partition("@")
    if algo not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm {algo!r}")
    if opt in ("dct", "direct"):
        return algo, None, opt
    if opt and algo not in ("pdr", "padr", "padrsc"):
        raise ConfigurationError(f"{algo} takes no preconditioner")
    if algo in ("pdr", "padr", "padrsc"):
        return algo, opt or "exact", "dct"
    return algo, None, "dct"


def run_bench(cfg, out=None):
    """Iterations and milliseconds to reach each tolerance.

    Every algorithm runs once down to the smallest tolerance with the gap
    evaluated at each iteration.
    """
    if not cfg.tols or not cfg.algorithms:
        raise ConfigurationError("need at least one algorithm and tolerance")
    f = _load_image(cfg)
    problem = _problem(cfg, f)
    entries = [(a,) + _parse_entry(a) for a in cfg.algorithms]
    tmin = min(cfg.tols)
    rows = []
    for name, algo, precond, elliptic in entries:
        rc = _run_config(cfg, algo, precond, elliptic, tmin, 1)
        res = run(problem, rc)
        cells = []
        for tol in cfg.tols:
            hit = next((e for e in res.history if e.gap_per_pixel <= tol), None)
            if hit is None:
                cells.append("NA")
            else:
                cells.append(f"{hit.k},{hit.elapsed * 1e3:.1f}")
        rows.append([name] + cells)
    header = ["algorithm"] + [repr(t) for t in cfg.tols]
    fh = open(cfg.csv, "w", newline="") if cfg.csv else (out or sys.stdout)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if cfg.csv:
            fh.close()
    return EXIT_OK


def run_selftest(cfg, inject_div_sign=False, out=None):
    from .selfcheck import run_checks
    out = out or sys.stdout
    results = run_checks(inject_div_sign=inject_div_sign)
    width = max(len(name) for name, _, _ in results)
    for name, ok, detail in results:
        out.write(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}\n")
    failed = sum(not ok for _, ok, _ in results)
    out.write(f"{len(results) - failed}/{len(results)} checks passed\n")
    return EXIT_OK if failed == 0 else EXIT_FAIL


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg, ns = parse_config(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if cfg.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if cfg.subcommand == "denoise":
            return run_denoise(cfg)
        if cfg.subcommand == "bench":
            return run_bench(cfg)
        return run_selftest(cfg, getattr(ns, "inject_div_sign", False))
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, PGMError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
