"""Decentralized energy management for networked microgrids.

Centralized MILP dispatch, objective-based ADMM coordination of microgrid
agents, and proportional exchange allocation of the resulting trades.
"""

__version__ = "0.1.0"

from .analytics import moving_average, normalized_objective, sweep_penalty  # noqa: E402
from .microgrid_model import ExchangeLedger, build_cem, build_standalone, build_subproblem  # noqa: E402
from .obadmm import AdmmConfig, run_obadmm, run_reference_admm  # noqa: E402
from .pea import apply_pea, classify, pea_objective_report  # noqa: E402
from .scenario import NetworkScenario, bundled_case, load_scenario, validate_scenario  # noqa: E402

__all__ = [
    "__version__", "moving_average", "normalized_objective", "sweep_penalty", "ExchangeLedger",
    "build_cem", "build_standalone", "build_subproblem", "AdmmConfig", "run_obadmm",
    "run_reference_admm", "apply_pea", "classify", "pea_objective_report", "NetworkScenario",
    "bundled_case", "load_scenario", "validate_scenario",
]
