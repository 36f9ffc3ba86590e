"""Worst-case (robust superhedging) prices under drift and volatility uncertainty.

The price of a claim ``int_0^T g(X) ds + l(X_T)`` is approximated by a
worst-case backward recursion over a controlled two-atom Markov chain.
"""
from .chain import FeedbackControl, extract_greedy_control, interpolate, monte_carlo_value, simulate
from .engine import Grid, PricingResult, ValueFunction, apply_S_h, price, sweep, worst_case_expectation
from .errors import BandError, ConfigError, ContractViolation, InvalidKernelError, NumericError
from .kernels import KernelKind, KernelSpec, approx_moments, support, tail_mass, verify_convergence
from .model import CoefficientBand, ControlGrid, drift, lipschitz_estimate, sigma
from .payoff import PayoffSpec, discrete_payoff, payoff_bound

__all__ = [
    "BandError", "CoefficientBand", "ConfigError", "ContractViolation", "ControlGrid", "FeedbackControl",
    "Grid", "InvalidKernelError", "KernelKind", "KernelSpec", "NumericError", "PayoffSpec", "PricingResult",
    "ValueFunction", "apply_S_h", "approx_moments", "discrete_payoff", "drift", "extract_greedy_control",
    "interpolate", "lipschitz_estimate", "monte_carlo_value", "payoff_bound", "price", "sigma", "simulate",
    "support", "sweep", "tail_mass", "verify_convergence", "worst_case_expectation",
]
