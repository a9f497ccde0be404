"""Stochastic samplers sharing the marginals of a deterministic Gaussian flow."""

__version__ = "0.1.0"

from .errors import ConfigError, DomainError, FlowSDEError
from .flow import (LINEAR, FlowField, GaussianEndpoint, GaussianMixtureEndpoint, Schedule,
                   analytic_score_gaussian, analytic_score_mixture, cfg_velocity, guided_field,
                   mixture_field, score_from_velocity, toy_endpoints, two_gaussian_field,
                   velocity_mixture, velocity_two_gaussian)
from .sde import (DiffusionSchedule, Family, GammaSchedule, SdeCoefficients, TimeDirection,
                  noise_rescaled_coefficients, family_coefficients, fused_score_product, g_tilde,
                  reverse_coefficients, reverse_time_coefficients, singular_sde_coefficients,
                  marginal_preserving_transform)
from .integrator import (RngSpec, TimeGrid, TrajectoryEnsemble, sample_prior, simulate_ode,
                         simulate_reverse)
from .stats import (AnalyticMarginal, MarginalReport, analytic_marginal, estimate_marginals,
                    gaussian_kl)
