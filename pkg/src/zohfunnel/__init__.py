"""Sampled-data output funnel tracking for relative-degree-two systems.

Derives a feedback gain and a provably sufficient sampling period from
worst-case plant bounds, runs the zero-order-hold closed loop (derivative-
free or derivative-based error feedback), and re-checks recorded runs
against every guaranteed bound.
"""

from ._kernel import backend_name, compiled_available
from .controller import (ControlLawConfig, ControllerState, Variant, composite_error,
                         controller_step, difference_surrogate, error_series,
                         feedback_law, weighted_error)
from .design import (DesignParameters, TauBreakdown, WorstCaseBounds,
                     derive_design_parameters, design_for_linear_plant, explain_tau,
                     solve_xi)
from .exceptions import (ConfigError, FunnelViolation, InfeasibleDesign,
                         NumericalBlowup, ZohFunnelError)
from .plant import (AdditiveDisturbance, LinearIOPlant, PlantModel, SinusoidSignal,
                    bibs_state_bound, mass_on_car, spectral_norm, worst_case_bounds)
from .signals import (ConstantFunnel, ConstantReference, ExponentialFunnel, Funnel,
                      FunnelNorms, GainMap, ReciprocalGain, Reference, SinusoidReference)
from .sim import (SimConfig, Trace, VariantComparison, compare_variants,
                  integrate_hold, n_sampling_instants, simulate)
from .traceio import (certificate_mapping, params_from_certificate, read_certificate,
                      read_trace, write_certificate, write_trace)
from .verify import (SurrogateStudy, VerificationReport, check_trace,
                     surrogate_consistency_study)

__version__ = "0.1.0"

__all__ = [
    "AdditiveDisturbance", "ConfigError", "ConstantFunnel", "ConstantReference",
    "ControlLawConfig", "ControllerState", "DesignParameters", "ExponentialFunnel",
    "Funnel", "FunnelNorms", "FunnelViolation", "GainMap", "InfeasibleDesign",
    "LinearIOPlant", "NumericalBlowup", "PlantModel", "ReciprocalGain", "Reference",
    "SimConfig", "SinusoidReference", "SinusoidSignal", "SurrogateStudy",
    "TauBreakdown", "Trace", "VariantComparison", "VerificationReport", "Variant",
    "WorstCaseBounds", "ZohFunnelError", "backend_name", "bibs_state_bound",
    "certificate_mapping", "check_trace", "compare_variants", "compiled_available",
    "composite_error", "controller_step", "derive_design_parameters",
    "design_for_linear_plant", "difference_surrogate", "error_series", "explain_tau",
    "feedback_law", "integrate_hold", "mass_on_car", "n_sampling_instants",
    "params_from_certificate", "read_certificate", "read_trace", "simulate",
    "solve_xi", "spectral_norm", "surrogate_consistency_study", "weighted_error",
    "worst_case_bounds", "write_certificate", "write_trace",
]
