"""Partial-identification bounds on ATE/CATE from fused trial and observational data."""

from ._core import (
    FusionBoundsError,
    __version__,
    bounds,
    compat,
    frontier,
    oracle_ate,
    scenario_names,
    simulate,
)

__all__ = [
    "FusionBoundsError",
    "__version__",
    "bounds",
    "compat",
    "frontier",
    "oracle_ate",
    "scenario_names",
    "simulate",
]
