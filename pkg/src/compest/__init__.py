"""Compressive estimation of sinusoid frequencies: bounds, isometry analysis, estimation."""
from .bounds import (BoundCurve, FisherMatrix, QuadratureSpec, bayesian_information_matrix, crb_curve,
                     crb_frequency, detection_error_probability, fisher_matrix, required_measurements,
                     valley_fill, zzb_curve, zzb_single_sinusoid, zzb_threshold)
from .estimator import (CompressiveFrequencyEstimator, EstimateResult, EstimatorConfig, coarse_detect,
                        estimate, newton_refine, periodic_error)
from .harness import ExperimentConfig, run_bounds_report, run_isometry_sweep, run_rmse_sweep, run_sufficiency_report
from .isometry import (IsometryReport, SamplerSpec, empirical_isometry, pair_singular_value_closed_form,
                       single_sinusoid_regime_constants, smallest_singular_value, sufficient_measurements_mixture,
                       tangent_matrix, taylor_error_bounds)
from .measurement import (CompressiveProjection, Distribution, MeasurementMatrix, NoiseModel, apply,
                          concentration_audit, concentration_bound, identity_matrix, sample_matrix,
                          whitened_effective_matrix)
from .signal_manifold import (MixtureParams, SinusoidManifold, mixture, sinusoid, sinusoid_derivative,
                              window_spectrum, window_spectrum_derivatives)

__version__ = "0.1.0"

__all__ = [
    "BoundCurve",
    "FisherMatrix",
    "QuadratureSpec",
    "bayesian_information_matrix",
    "crb_curve",
    "crb_frequency",
    "detection_error_probability",
    "fisher_matrix",
    "required_measurements",
    "valley_fill",
    "zzb_curve",
    "zzb_single_sinusoid",
    "zzb_threshold",
    "CompressiveFrequencyEstimator",
    "EstimateResult",
    "EstimatorConfig",
    "coarse_detect",
    "estimate",
    "newton_refine",
    "periodic_error",
    "ExperimentConfig",
    "run_bounds_report",
    "run_isometry_sweep",
    "run_rmse_sweep",
    "run_sufficiency_report",
    "IsometryReport",
    "SamplerSpec",
    "empirical_isometry",
    "pair_singular_value_closed_form",
    "single_sinusoid_regime_constants",
    "smallest_singular_value",
    "sufficient_measurements_mixture",
    "tangent_matrix",
    "taylor_error_bounds",
    "CompressiveProjection",
    "Distribution",
    "MeasurementMatrix",
    "NoiseModel",
    "apply",
    "concentration_audit",
    "concentration_bound",
    "identity_matrix",
    "sample_matrix",
    "whitened_effective_matrix",
    "MixtureParams",
    "SinusoidManifold",
    "mixture",
    "sinusoid",
    "sinusoid_derivative",
    "window_spectrum",
    "window_spectrum_derivatives",
]
