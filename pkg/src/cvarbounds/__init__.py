"""CVaR bounds from CDF discrepancies, sample concentration and surrogate variables."""

from .bounds import (BoundReport, Envelope, SupportBounds, construct_lower_cdf,
                     construct_upper_cdf, density_h_to_g, g_envelope_lower_cdf,
                     general_g_bounds, uniform_lower_bound, uniform_upper_bound)
from .concentration import (DiscrepancyBudget, brown_deviation_bounds, dkw_epsilon, ecdf,
                            ecdf_cvar_bounds, order_stat_lower_bound, order_stat_upper_bound,
                            surrogate_cvar_bounds)
from .distributions import DistributionSpec
from .riskcore import (SampleBatch, StepCdf, cvar_function, cvar_inf_form, cvar_of_cdf,
                       cvar_sorted_form, mean_of_cdf, var_of_cdf)

__version__ = "0.1.0"

__all__ = [
    "BoundReport", "Envelope", "SupportBounds", "construct_lower_cdf", "construct_upper_cdf",
    "density_h_to_g", "g_envelope_lower_cdf", "general_g_bounds", "uniform_lower_bound",
    "uniform_upper_bound", "DiscrepancyBudget", "brown_deviation_bounds", "dkw_epsilon", "ecdf",
    "ecdf_cvar_bounds", "order_stat_lower_bound", "order_stat_upper_bound",
    "surrogate_cvar_bounds", "DistributionSpec", "SampleBatch", "StepCdf", "cvar_function",
    "cvar_inf_form", "cvar_of_cdf", "cvar_sorted_form", "mean_of_cdf", "var_of_cdf",
]
