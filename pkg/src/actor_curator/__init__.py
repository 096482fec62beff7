"""Self-driven curriculum learning on tabular bandit problems.

A tabular softmax actor learns a bank of multiple-choice problems; a curator
picks which problems the actor trains on each step, scoring them by an
importance-weighted estimate of how much each update raises exact performance.
"""

from .actor import TabularPolicy, actor_update, exact_performance, init_policy, rollout
from .bank import BankSpec, ProblemBank, generate_bank, load_bank, save_bank
from .config import RunConfig, config_from_dict, load_yaml
from .curator_approx import CuratorParams, clipped_loss, curator_update, induced_conditional, surrogate_loss
from .curator_tabular import CuratorDistribution, conditional_distribution, floor_project, osmd_step
from .errors import (
    ConfigurationError,
    DegenerateDistributionError,
    InfeasibleFloorError,
    LogicError,
    NumericError,
    StateError,
)
from .harness import run_curriculum, verify
from .sleeping import BanditConfig, run_sleeping_osmd

__version__ = "0.1.0"

__all__ = [
    "BankSpec", "ProblemBank", "generate_bank", "load_bank", "save_bank",
    "TabularPolicy", "init_policy", "rollout", "actor_update", "exact_performance",
    "CuratorDistribution", "floor_project", "osmd_step", "conditional_distribution",
    "CuratorParams", "induced_conditional", "surrogate_loss", "clipped_loss", "curator_update",
    "BanditConfig", "run_sleeping_osmd",
    "RunConfig", "config_from_dict", "load_yaml", "run_curriculum", "verify",
    "ConfigurationError", "DegenerateDistributionError", "InfeasibleFloorError",
    "LogicError", "NumericError", "StateError",
]
