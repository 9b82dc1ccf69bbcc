"""Nodal electricity spot-market equilibria (optimal, competitive, oligopolistic,
price-capped, incentive mechanism) backed by the C++ library."""

from ._core import (
    DomainError,
    InfeasibleError,
    NonConvergenceError,
    Scenario,
    SpotMarketError,
    ValidationError,
    emit_curves,
    incentive_payments,
    load_scenario,
    nodal_price,
    parse_scenario,
    run,
    solve,
    solve_capped,
    solve_mechanism,
    solve_multi,
    utility_value,
    verify,
    verify_incentive_compatibility,
)

__all__ = [
    "DomainError",
    "InfeasibleError",
    "NonConvergenceError",
    "Scenario",
    "SpotMarketError",
    "ValidationError",
    "emit_curves",
    "incentive_payments",
    "load_scenario",
    "nodal_price",
    "parse_scenario",
    "run",
    "solve",
    "solve_capped",
    "solve_mechanism",
    "solve_multi",
    "utility_value",
    "verify",
    "verify_incentive_compatibility",
]
