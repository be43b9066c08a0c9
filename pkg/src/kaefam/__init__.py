"""Fiberwise twisted Kähler-Einstein metrics on torus fibrations over a disk.

Solves the fiber equation spectrally, assembles the relative form over the
family by implicit differentiation, checks the positivity statements for it,
and models the weighted Bergman-kernel approximation of psh weights.
"""

__version__ = "0.1.0"

from .bergman import BergmanChart, bergman_kernel_diag, convergence_study
from .errors import (
    ConditioningFailure,
    ConfigError,
    ConvergenceFailure,
    KaefamError,
    KahlerClassViolation,
    ParseError,
    SemiPositivityViolation,
)
from .expr import (
    BackgroundForm,
    BetaEval,
    TwistForm,
    check_semipositive,
    differentiate,
    eval_beta,
    parse_potential,
)
from .family import Family, analyze_base_point
from .geometry import (
    assemble_rho,
    beta_along_lift,
    compute_t_derivatives,
    geodesic_curvature,
    horizontal_lift,
    relative_canonical_curvature,
)
from .solver import FiberSolution, solve_fiber_ke, solve_linearized
from .torus import TorusGrid, integrate, spectral_derivative
from .verify import (
    check_bound_35,
    check_identity_34,
    check_positivity,
    epsilon_sweep,
    verify_family,
)
