"""Shrinkage priors and Bayesian predictive spectral densities for complex AR(p) processes."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CommonRootError,
    InvalidPrior,
    InvalidRoots,
    MissingDerivatives,
    NearSingular,
    NonpositiveSpectrum,
    NotPositiveDefinite,
    SampleTooShort,
    SpecShrinkError,
    TooFewDraws,
)
from .gaussian_core import (  # noqa: E402
    ComplexSample,
    RngSeed,
    build_toeplitz,
    exact_log_likelihood,
    periodogram,
    sample_ar_path,
    sample_standard_complex_normal,
    score_moment_estimates,
    whittle_log_likelihood,
)
from .inference import McmcOptions, MleOptions, estimative_psd, mle, posterior_sample, predictive_psd  # noqa: E402
from .kahler_geometry import (  # noqa: E402
    PriorSpec,
    fisher_metric_ar,
    jeffreys_prior,
    kappa_prior,
    leading_risk_gap,
    phi,
    q_limit,
)
from .spectral_model import (  # noqa: E402
    ArmaSpec,
    ArRoots,
    SpectralGrid,
    autocovariances,
    kl_divergence,
    psd_from_arma,
    psd_from_roots,
    roots_to_coeffs,
)
