"""Decomposition of localization disparities into parameterized error components.

Two independent localizers watching the same vehicle disagree by an amount
that carries information: a miscalibrated sensor offset rotates with the
vehicle, a shifted map does not, a scaled map errs proportionally to
position.  This package models the measured difference between the two
position estimates as a sum of such components, estimates the component
parameters online with an Unscented Kalman Filter, checks beforehand
whether a given combination of components is separable along a trajectory,
and ships a Monte Carlo harness that measures estimation error over
repeated simulated runs.
"""

from .error_models import (CompositeModel, ErrorComponent, KinematicInput,
                           PlanarTransform, body_offset, deformation_component,
                           evaluate_difference_model, map_rotation, map_scale,
                           map_shear, map_translation, measured_difference,
                           rotation_about, scale_about, shear_along,
                           transform_difference)
from .estimator import (DifferenceObservation, GaussianBelief, SigmaPoints,
                        UkfConfig, compose_measurement_covariance,
                        generate_sigma_points, predict, run_filter, update)
from .exceptions import (CholeskyFailure, ConfigError, DimensionMismatch,
                         ExperimentRunError, FilterStepError, NonMonotoneTime,
                         NotPSD, ParseError, SingularTransform, ZeroTurnRate)
from .frames import (Heading, body_to_nav, heading_rates, nav_to_body,
                     normalize_angle, rotation_matrix)
from .harness import (ExperimentConfig, FileTrajectory, MseSeries,
                      SyntheticTrajectory, build_trajectory, derive_run_seed,
                      emit_results, load_config, parse_config, run_experiment)
from .observability import (ObservabilityReport, closed_form_decomposition,
                            difference_rates, numerical_rank_test,
                            stacked_output_map)
from .simulation import (InjectedStep, InjectionConfig, TrajectorySample,
                         inject_errors, load_trajectory, synthesize_trajectory,
                         to_kinematic_inputs)

__version__ = "0.1.0"

__all__ = [
    "Heading", "body_to_nav", "heading_rates", "nav_to_body",
    "normalize_angle", "rotation_matrix",
    "CompositeModel", "ErrorComponent", "KinematicInput", "PlanarTransform",
    "body_offset", "deformation_component", "evaluate_difference_model",
    "map_rotation", "map_scale", "map_shear", "map_translation",
    "measured_difference", "rotation_about", "scale_about", "shear_along",
    "transform_difference",
    "DifferenceObservation", "GaussianBelief", "SigmaPoints", "UkfConfig",
    "compose_measurement_covariance", "generate_sigma_points", "predict",
    "run_filter", "update",
    "ObservabilityReport", "closed_form_decomposition", "difference_rates",
    "numerical_rank_test", "stacked_output_map",
    "InjectedStep", "InjectionConfig", "TrajectorySample", "inject_errors",
    "load_trajectory", "synthesize_trajectory", "to_kinematic_inputs",
    "ExperimentConfig", "FileTrajectory", "MseSeries", "SyntheticTrajectory",
    "build_trajectory", "derive_run_seed", "emit_results", "load_config",
    "parse_config", "run_experiment",
    "CholeskyFailure", "ConfigError", "DimensionMismatch", "ExperimentRunError",
    "FilterStepError", "NonMonotoneTime", "NotPSD", "ParseError",
    "SingularTransform", "ZeroTurnRate",
]
