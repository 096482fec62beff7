"""Per-problem policy-improvement utilities and their bandit estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Callable

import numpy as np

from .actor import RolloutGroup, TabularPolicy, group_advantage, reward_table
from .bank import ProblemBank
from .errors import ConfigurationError, LogicError, NumericError, StateError


@dataclass
class UtilityFeedback:
    problem_id: int
    selected: bool
    in_candidates: bool
    q: float
    cond_p: float
    a_hat: float
    u_hat: float
    eval_weight: float

    def __post_init__(self):
        if self.selected and not self.in_candidates:
            raise LogicError(f"problem {self.problem_id} selected outside the candidate set")
        if not self.selected and self.u_hat != 0.0:
            raise LogicError(f"unselected problem {self.problem_id} carries nonzero u_hat")

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in _FEEDBACK_FIELDS}


_FEEDBACK_FIELDS = tuple(f.name for f in fields(UtilityFeedback))


def importance_advantage(group: RolloutGroup) -> float:
    """Mean of (pi_new / pi_old) * A over the group, with group-mean advantages."""
    if group.logprob_new is None:
        raise StateError("logprob_new is not populated")
    adv = group_advantage(group.rewards, "mean")
    ratio = np.exp(group.logprob_new - group.logprob_old)
    return float(np.mean(ratio * adv))


def expected_importance_advantage(
    old_row: np.ndarray, new_row: np.ndarray, reward_row: np.ndarray
) -> float:
    """Rollout expectation of the ratio-weighted true-mean advantage at one problem."""
    mu = old_row @ reward_row
    return float(new_row @ reward_row - mu)


def exact_utility(
    policy_old: TabularPolicy,
    policy_new: TabularPolicy,
    bank: ProblemBank,
    problem_id: int,
    rewards: np.ndarray | None = None,
) -> float:
    """u_x by enumeration; the importance-sampled and reward-difference forms must agree."""
    if rewards is None:
        rewards = reward_table(policy_old, bank)
    pi_old = policy_old.probs()[problem_id]
    pi_new = policy_new.probs()[problem_id]
    r = rewards[problem_id]
    p_x = bank.p_eval[problem_id]
    adv = r - pi_old @ r
    is_form = p_x * np.sum(pi_old * (pi_new / pi_old) * adv)
    diff_form = p_x * (pi_new @ r - pi_old @ r)
    if not abs(is_form - diff_form) <= 1e-10:
        raise NumericError(
            "utility forms disagree", problem_id=problem_id, is_form=is_form, diff_form=diff_form
        )
    return float(diff_form)


def exact_utilities(
    policy_old: TabularPolicy,
    policy_new: TabularPolicy,
    bank: ProblemBank,
    rewards: np.ndarray | None = None,
) -> np.ndarray:
    """Vector of u_x over the whole bank (difference form)."""
    if rewards is None:
        rewards = reward_table(policy_old, bank)
    delta = ((policy_new.probs() - policy_old.probs()) * rewards).sum(axis=1)
    return bank.p_eval * delta


def estimate_single_stage(
    eval_weight: float, sampling_prob: float, selected: bool, a_hat: float
) -> float:
    if not selected:
        return 0.0
    if sampling_prob <= 0:
        raise LogicError("selected problem has zero sampling probability")
    return eval_weight * a_hat / sampling_prob


def estimate_two_stage(
    eval_weight: float,
    q: float,
    cond_p: float,
    selected: bool,
    a_hat: float,
    q_min: float = 1e-12,
) -> float:
    if q < q_min or q <= 0:
        raise ConfigurationError(f"proposal inclusion probability {q} below q_min={q_min}")
    if not selected:
        return 0.0
    if cond_p <= 0:
        raise LogicError("selected problem has zero conditional selection probability")
    return eval_weight * a_hat / (q * cond_p)


def draw_inclusion(cond_p, draws: int):
    """Probability of appearing at least once in ``draws`` i.i.d. draws."""
    return 1.0 - (1.0 - np.asarray(cond_p, dtype=float)) ** draws


def uniform_inclusion(candidate_size: int, bank_size: int) -> float:
    """Marginal inclusion probability of uniform sampling without replacement."""
    if not 1 <= candidate_size <= bank_size:
        raise ConfigurationError("candidate size must lie in [1, bank size]")
    return candidate_size / bank_size


def monte_carlo_inclusion(
    propose: Callable[[np.random.Generator], np.ndarray],
    bank_size: int,
    rng: np.random.Generator,
    n_draws: int = 100_000,
) -> np.ndarray:
    """Estimate q(x) for an arbitrary proposal by repeated draws."""
    counts = np.zeros(bank_size)
    for _ in range(n_draws):
        counts[np.unique(propose(rng))] += 1
    return counts / n_draws


def mean_abs_advantage(p: float) -> float:
    """Expected |A| of std-normalized Bernoulli(p) advantages: 2 sqrt(p (1 - p))."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    return 2.0 * math.sqrt(p * (1.0 - p))
