"""Age of information for status updates over unreliable slotted multiaccess channels."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    UNBOUNDED,
    AgeReport,
    AlohaConfig,
    AoiError,
    ChannelProfile,
    InterUpdateMoments,
    NumericalError,
    SfConfig,
    ValidationError,
    age_from_moments,
    network_age,
)
from .aloha_analytic import aloha_age, aloha_age_lower_bound, aloha_rates, foc_residual  # noqa: E402
from .optimize import sf_sweep, tau_approx, tau_exact_two, tau_numeric  # noqa: E402
from .sf_analytic import sf_age, sf_homogeneous_mean, sf_moments, sf_moments_oracle, turn_pmfs  # noqa: E402
from .symmetric import (  # noqa: E402
    beta_star,
    symmetric_aloha,
    symmetric_compare,
    symmetric_sf_age,
    theorem_bounds,
)
from .sim import SimConfig, empirical_age, replicate, simulate  # noqa: E402
