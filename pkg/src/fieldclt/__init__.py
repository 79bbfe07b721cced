"""Simulation and exact checks for limit theorems of stationary random fields on Z^2."""

from .coefficients import CoefficientFamily, coefficient
from .config import ExperimentConfig, parse_config
from .errors import (BoundsError, CapacityError, ConfigError, DegeneracyError, DimensionError,
                     DivergenceError, DomainError, FieldCLTError, ParameterError, PreconditionError,
                     UnsupportedModelError)
from .lattice import FieldArray, Rect, SummedAreaTable, build_summed_area, rect_sum, sheet_value
from .limit import (EstimatorReport, TestResult, estimate_sigma2_scaling, estimate_sigma2_series,
                    fdd_covariance_check, ks_normality_test, product_normal_reference)
from .models import (FieldModel, Functional, InnovationSpec, WindowG, apply_functional,
                     builtin_functional, builtin_g, generate_innovations, generate_linear_field,
                     generate_orthomartingale_field, m_dependent_approx, simulate_batch,
                     simulate_counterexample, simulate_field)
from .oracle import (ExactRandomVariable, FiniteSpace, exact_conditional_expectation,
                     exact_distribution_S, moment_inequality_ratio, verify_commuting)
from .projective import (ProjectiveReport, TailSumTable, condition_series_partial, delta_tilde_partial,
                         estimate_conditional_norm, tail_sum_A)
from .rng import RngStream
from .runner import RunReport, run_experiment

__version__ = "0.1.0"
