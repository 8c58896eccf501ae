"""Douglas-Rachford solvers for convex-concave saddle-point problems.

Plain and accelerated iterations for
``min_x max_y <K x, y> + F(x) - G(y)``, each with an optional
matrix-splitting preconditioner, plus the TV and Huber-TV denoising models.
"""

from .linops import GRAD_NORM_BOUND, div, grad, normal_apply, power_norm
from .problems import (add_gaussian_noise, build_huber, build_quadratic_pair,
                       build_rof, synthetic_image)
from .solvers import (ConfigurationError, DivergenceError, RunConfig,
                      RunResult, SaddleProblem, run)

__version__ = "0.1.0"

__all__ = [
    "GRAD_NORM_BOUND", "div", "grad", "normal_apply", "power_norm",
    "add_gaussian_noise", "build_huber", "build_quadratic_pair", "build_rof",
    "synthetic_image", "ConfigurationError", "DivergenceError", "RunConfig",
    "RunResult", "SaddleProblem", "run",
]
