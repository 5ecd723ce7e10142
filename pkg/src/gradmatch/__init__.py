"""ODE parameter estimation by mean-field variational inference over
Gaussian-process gradient matching.

The public surface mirrors the pipeline: kernels -> per-state GP layer ->
coordinate-ascent inference, with a bundled simulator for data generation and
validation and a text format for user-defined mass-action systems.
"""

from .errors import (
    ConfigError,
    DimensionMismatch,
    GradmatchError,
    NonFiniteEncountered,
    NonFiniteState,
    NotPositiveDefinite,
    OptimFailed,
    Singular,
)
from .gp_layer import DerivOps, GpState, StatePosterior, build_gp_layer, derivative_ops, state_posterior
from .kernels import (
    DerivKernelSet,
    KernelSpec,
    TimeGrid,
    build_deriv_kernels,
    fit_hyperparameters,
    kernel_derivatives,
    kernel_eval,
    log_marginal_likelihood,
    neural_net,
    rbf,
)
from .model_text import ModelFormatError, format_model, parse_model
from .moments import (
    FactorizedGaussian,
    entropy,
    expected_gaussian_logdensity,
    expected_monomial,
    expected_monomial_product,
)
from .ode_model import (
    Monomial,
    OdeSystem,
    Term,
    affine_in_state,
    builtin_lotka_volterra,
    builtin_protein_pathway,
    design_matrix,
    evaluate,
)
from .selection import default_candidates, select_kernels
from .simulator import SimConfig, add_noise, integrate_rk4, make_dataset
from .vi_engine import (
    InferenceConfig,
    InferenceResult,
    ThetaPosterior,
    combine_proxies,
    e_step_sweep,
    elbo,
    obs_proxy,
    ode_proxy,
    run_inference,
    update_theta,
)

__version__ = "0.1.0"
