"""Grid discretization of magnetic Schrödinger operators and spectral functionals."""
from .grid import GridOperator, GridSpec, LocalPairing, discretize, load_matrix, make_local_pair
from .hs import AlmostAnalyticExtension, HSReport, almost_analytic_extension, hs_apply
from .spectra import (SmoothedDensity, SpectralData, eigensolve_below, function_of, inertia_count,
                      local_agreement_norm, localization_norms, localized_trace, mollified_operator_gap,
                      operator_lipschitz_constant, smoothed_density, surface_density, weyl_count)
