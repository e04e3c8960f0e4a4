"""Koopman generator estimation for stochastic systems via resolvent integrals.

The package simulates SDE sample paths with first-exit stopping, estimates
the Koopman infinitesimal generator on a monomial dictionary through
exponentially weighted trajectory integrals (RT-EDMD, with a modified
variant for low sampling rates), compares against EDMD and gEDMD baselines,
extracts spectra, identifies drift/diffusion coefficients, and reconstructs
trajectories under identical noise realizations.
"""

__version__ = "0.1.0"

from .baselines import KoopmanMatrix, fit_koopman, gedmd_fdm, generator_from_log
from .dictionary import (
    Dictionary,
    analytic_generator_action,
    analytic_generator_matrix,
    monomials_up_to_degree,
)
from .errors import (
    ClosureError,
    ConditioningError,
    ConfigError,
    DictionaryError,
    EmptyDataError,
    IntegrationDivergedError,
    KoopgenError,
    KoopmanLogError,
    NumericalError,
    RankDeficientError,
)
from .generator import GeneratorMatrix, load_generator, save_generator
from .models import (
    Domain,
    SdeModel,
    gaussian_moment,
    make_lotka_volterra,
    make_ou,
    ou_conditional_moment,
)
from .resolvent import (
    RtConfig,
    build_matrices,
    fit_generator,
    generator_from_means,
    integrand_matrix,
    mean_observables,
    resolvent_to_generator,
    rt_generator,
    rt_generator_modified,
    trapezoid_integrate,
)
from .sde import (
    SimConfig,
    TrajectoryEnsemble,
    apply_stopping,
    ensemble_to_csv,
    load_ensemble,
    save_ensemble,
    simulate_paths,
)
from .spectral import (
    SpectrumResult,
    eigendecompose,
    eigenfunction_values,
    match_and_mae,
    spectrum_mae,
)
from .sysid import (
    IdentifiedModel,
    identify,
    model_from_identified,
    reconstruct_paths,
    recover_diffusion,
    recover_drift,
)

__all__ = [name for name in dir() if not name.startswith("_")]
