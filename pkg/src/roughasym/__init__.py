"""Precise small-noise call-price asymptotics for classical and rough
stochastic volatility models: variational rate functions, iterated-integral
model space, second-order noise expansions, importance-sampled Monte Carlo,
and the closed-form expansion formulas they validate."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .asymptotics import (
    ScalingRegime,
    bs_asymptotic_call,
    bs_exact_call,
    bsabs_sandwich,
    ldp_digital_bound,
    precise_ldp_price,
    precise_mdp_price,
)
from .errors import (
    DegenerateMinimizer,
    DegenerateSpec,
    GridMismatch,
    LevelMismatch,
    NonConvergence,
    QuadratureError,
    WeightDegeneracyWarning,
)
from .expansion import (
    RemainderSweep,
    TaylorTerms,
    phi0,
    phi_eps,
    remainder_scaling_check,
    taylor_terms,
)
from .fbm import (
    CameronMartinPair,
    FractionalKernel,
    Grid,
    GridPath,
    cm_norm_sq,
    correlate,
    fractional_integral_bm,
    fractional_integral_cm,
    kernel_value,
)
from .mc import (
    MCEstimate,
    ShiftDecomposition,
    decompose_shift,
    digital_is,
    estimate_A,
    price_call_is,
    price_call_plain,
    sample_g1_g2,
    sample_g1_values,
    simulate_noise,
)
from .models import (
    ItoModel,
    ModelParams,
    canonical_lift,
    choose_levels,
    dilate,
    homogeneous_norm,
    lift_ito,
    model_distance,
    model_from_text,
    model_norm,
    model_to_text,
    translate,
)
from .rate import (
    RateFunctionSolution,
    SolveOptions,
    check_nondegeneracy,
    dphi1,
    g1_variance_analytic,
    lambda_prime_check,
    phi1_cm,
    solve_rate,
)
from .volmodel import (
    ConstantSigma,
    ExpSigma,
    LinearSigma,
    SigmaFunction,
    VolModelSpec,
    sigma_from_name,
)
