"""Tabular softmax actor: rollouts, group advantages, updates and exact evaluation."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bank import ProblemBank, topological_buckets
from .errors import ConfigurationError, NumericError, StateError

UPDATE_RULES = ("reinforce_mean_baseline", "grpo_std_normalized", "gspo_sequence")
_ADVANTAGE_RULE = {
    "reinforce_mean_baseline": "mean",
    "grpo_std_normalized": "std",
    "gspo_sequence": "std",
    "mean": "mean",
    "std": "std",
}


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


@dataclass
class TabularPolicy:
    """Per-problem softmax over a finite answer set."""

    logits: np.ndarray
    learning_rate: float = 1.0
    update_rule: str = "reinforce_mean_baseline"
    clip_range: tuple[float, float] | None = None
    baseline: str = "group"
    step: int = 0

    def __post_init__(self):
        self.logits = np.array(self.logits, dtype=float)
        if self.logits.ndim != 2:
            raise ConfigurationError("logits must be a [problems, answers] matrix")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.update_rule not in UPDATE_RULES:
            raise ConfigurationError(f"unknown update_rule {self.update_rule!r}")
        if self.baseline not in ("group", "true"):
            raise ConfigurationError("baseline must be 'group' or 'true'")
        if self.clip_range is not None:
            lo, hi = self.clip_range
            if not lo < 1.0 < hi:
                raise ConfigurationError("clip_range must satisfy low < 1 < high")
            self.clip_range = (float(lo), float(hi))

    def probs(self) -> np.ndarray:
        return softmax(self.logits)

    def log_probs(self) -> np.ndarray:
        return log_softmax(self.logits)

    def replace(self, **changes) -> "TabularPolicy":
        return dataclasses.replace(self, **changes)


def init_policy(
    bank: ProblemBank,
    skill: float = 2.0,
    learning_rate: float = 1.0,
    update_rule: str = "reinforce_mean_baseline",
    clip_range: tuple[float, float] | None = None,
    baseline: str = "group",
) -> TabularPolicy:
    """Start with a correct-answer logit of ``skill * (0.5 - difficulty)``."""
    logits = np.zeros((len(bank), bank.answer_count))
    rows = np.arange(len(bank))
    logits[rows, bank.correct_answers] = skill * (0.5 - bank.difficulties)
    return TabularPolicy(logits, learning_rate, update_rule, clip_range, baseline)


# -- rewards and exact evaluation ------------------------------------------

def gate_state(probs: np.ndarray, bank: ProblemBank) -> np.ndarray:
    """Open/closed flag per bucket, from exact per-bucket success probabilities."""
    is_open = np.ones(bank.n_buckets, dtype=bool)
    if bank.structure != "prerequisite":
        return is_open
    success = probs[np.arange(len(bank)), bank.correct_answers]
    prereqs = bank.prerequisite_map()
    bucket_success = np.zeros(bank.n_buckets)
    for b in topological_buckets(bank):
        is_open[b] = all(is_open[a] and bucket_success[a] > bank.gate for a in prereqs.get(b, ()))
        members = bank.buckets == b
        if members.any():
            bucket_success[b] = success[members].mean() if is_open[b] else 0.0
    return is_open


def reward_table(policy: TabularPolicy, bank: ProblemBank) -> np.ndarray:
    """R[x, y] under the gate state induced by ``policy``."""
    table = np.zeros((len(bank), bank.answer_count))
    is_open = gate_state(policy.probs(), bank)
    rows = np.arange(len(bank))
    table[rows, bank.correct_answers] = is_open[bank.buckets].astype(float)
    return table


def exact_performance(
    policy: TabularPolicy, bank: ProblemBank, rewards: np.ndarray | None = None
) -> float:
    """J(pi) by enumeration over problems and answers."""
    if rewards is None:
        rewards = reward_table(policy, bank)
    per_problem = (policy.probs() * rewards).sum(axis=1)
    return float(bank.p_eval @ per_problem)


def success_probabilities(policy: TabularPolicy, bank: ProblemBank) -> np.ndarray:
    return (policy.probs() * reward_table(policy, bank)).sum(axis=1)


# -- rollouts ---------------------------------------------------------------

@dataclass
class RolloutGroup:
    problem_id: int
    answers: np.ndarray
    rewards: np.ndarray
    logprob_old: np.ndarray
    logprob_new: np.ndarray | None = None
    # sequence lengths; all ones for single-answer solutions
    lengths: np.ndarray | None = None
    expected_reward: float | None = None

    def __post_init__(self):
        self.answers = np.asarray(self.answers, dtype=int)
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.logprob_old = np.asarray(self.logprob_old, dtype=float)
        n = len(self.answers)
        if n < 1 or len(self.rewards) != n or len(self.logprob_old) != n:
            raise ConfigurationError("answers, rewards and logprob_old must share a length >= 1")
        if np.any(self.rewards < 0) or np.any(self.rewards > 1):
            raise ConfigurationError("rewards must lie in [0, 1]")
        if self.logprob_new is not None:
            self.logprob_new = np.asarray(self.logprob_new, dtype=float)
        self.lengths = np.ones(n) if self.lengths is None else np.asarray(self.lengths, dtype=float)

    def __len__(self) -> int:
        return len(self.answers)


def sample_answers(row: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(row)
    idx = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    return np.minimum(idx, len(row) - 1)


def rollout(
    policy: TabularPolicy,
    bank: ProblemBank,
    problem_id: int,
    group_size: int,
    rng: np.random.Generator,
    rewards: np.ndarray | None = None,
) -> RolloutGroup:
    if group_size < 1:
        raise ConfigurationError("group_size must be >= 1")
    if not 0 <= problem_id < len(bank):
        raise IndexError(f"unknown problem id {problem_id}")
    if rewards is None:
        rewards = reward_table(policy, bank)
    logp = log_softmax(policy.logits[problem_id])
    row = np.exp(logp)
    answers = sample_answers(row, group_size, rng)
    return RolloutGroup(
        problem_id=problem_id,
        answers=answers,
        rewards=rewards[problem_id, answers],
        logprob_old=logp[answers],
        expected_reward=float(row @ rewards[problem_id]),
    )


# -- advantages and ratios --------------------------------------------------

def group_advantage(rewards, rule: str = "mean") -> np.ndarray:
    """Group-relative advantages; all-equal rewards give a zero vector."""
    try:
        kind = _ADVANTAGE_RULE[rule]
    except KeyError:
        raise ConfigurationError(f"unknown advantage rule {rule!r}") from None
    r = np.asarray(getattr(rewards, "rewards", rewards), dtype=float)
    centered = r - r.mean()
    std = r.std()
    if std == 0.0:
        return np.zeros_like(r)
    return centered if kind == "mean" else centered / std


def sequence_ratio(group: RolloutGroup) -> np.ndarray:
    """Length-normalized sequence ratio exp((log pi_new - log pi_old) / |y|)."""
    if group.logprob_new is None:
        raise StateError("logprob_new is not populated; run actor_update first")
    return np.exp((group.logprob_new - group.logprob_old) / group.lengths)


# -- updates ----------------------------------------------------------------

@dataclass
class UpdateResult:
    policy: TabularPolicy
    groups: list[RolloutGroup]
    grad_norm: float


def _advantages(policy: TabularPolicy, group: RolloutGroup) -> np.ndarray:
    if policy.baseline == "true" and policy.update_rule == "reinforce_mean_baseline":
        if group.expected_reward is None:
            raise StateError("true-mean baseline needs expected_reward on the group")
        return group.rewards - group.expected_reward
    return group_advantage(group.rewards, policy.update_rule)


def surrogate_gradient(policy: TabularPolicy, dataset: list[RolloutGroup]) -> np.ndarray:
    """Gradient of sum over groups of the mean (clipped) ratio-weighted advantage."""
    grad = np.zeros_like(policy.logits)
    logp_all = log_softmax(policy.logits)
    for g in dataset:
        x = g.problem_id
        logp = logp_all[x]
        pi = np.exp(logp)
        adv = _advantages(policy, g)
        log_ratio = logp[g.answers] - g.logprob_old
        if policy.update_rule == "gspo_sequence":
            log_ratio = log_ratio / g.lengths
            scale = 1.0 / g.lengths
        else:
            scale = np.ones(len(g))
        ratio = np.exp(log_ratio)
        weight = ratio * adv * scale
        if policy.clip_range is not None:
            lo, hi = policy.clip_range
            # zero gradient where the clipped branch is the active minimum
            active = ratio * adv <= np.clip(ratio, lo, hi) * adv
            weight = np.where(active, weight, 0.0)
        n = len(g)
        # d ratio_i / d logits = ratio_i * (e_{y_i} - pi)
        row = np.bincount(g.answers, weights=weight, minlength=len(pi)) - weight.sum() * pi
        grad[x] += row / n
    return grad


def actor_update(policy: TabularPolicy, dataset: list[RolloutGroup]) -> UpdateResult:
    """One plain gradient-ascent step; fills ``logprob_new`` on every group."""
    if not dataset:
        raise ConfigurationError("actor_update needs a nonempty dataset")
    grad = surrogate_gradient(policy, dataset)
    if not np.all(np.isfinite(grad)):
        bad = np.argwhere(~np.isfinite(grad))
        raise NumericError("non-finite actor gradient", rows=sorted({int(r) for r, _ in bad}))
    logits = policy.logits + policy.learning_rate * grad
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits after update", step=policy.step)
    new = policy.replace(logits=logits, step=policy.step + 1)
    logp_new = log_softmax(logits)
    groups = [dataclasses.replace(g, logprob_new=logp_new[g.problem_id, g.answers]) for g in dataset]
    return UpdateResult(new, groups, float(np.linalg.norm(grad)))


def expected_step_gains(
    policy: TabularPolicy,
    bank: ProblemBank,
    ids: np.ndarray,
    group_size: int,
    rewards: np.ndarray | None = None,
) -> np.ndarray:
    """p_X-weighted reward gain from the expected mean-baseline step on each problem alone."""
    if rewards is None:
        rewards = reward_table(policy, bank)
    ids = np.asarray(ids, dtype=int)
    pi = policy.probs()[ids]
    r = rewards[ids]
    mu = (pi * r).sum(axis=1, keepdims=True)
    # E[(1/n) sum_i A_i (e_{y_i} - pi)] with a group-mean baseline
    step = policy.learning_rate * (1.0 - 1.0 / group_size) * pi * (r - mu)
    new_pi = softmax(policy.logits[ids] + step)
    return bank.p_eval[ids] * ((new_pi * r).sum(axis=1) - mu[:, 0])


def first_order_utility(
    policy_old: TabularPolicy,
    policy_new: TabularPolicy,
    bank: ProblemBank,
    problem_id: int,
    rewards: np.ndarray | None = None,
) -> float:
    """Utility with the ratio linearized as 1 + log(pi_new / pi_old)."""
    if rewards is None:
        rewards = reward_table(policy_old, bank)
    lp_old = log_softmax(policy_old.logits[problem_id])
    lp_new = log_softmax(policy_new.logits[problem_id])
    pi = np.exp(lp_old)
    r = rewards[problem_id]
    adv = r - pi @ r
    return float(bank.p_eval[problem_id] * (pi * (lp_new - lp_old) * adv).sum())


# -- checkpoints ------------------------------------------------------------

def policy_to_dict(policy: TabularPolicy) -> dict:
    return {
        "logits": policy.logits.tolist(),
        "learning_rate": policy.learning_rate,
        "update_rule": policy.update_rule,
        "clip_range": list(policy.clip_range) if policy.clip_range else None,
        "baseline": policy.baseline,
        "step": policy.step,
    }


def policy_from_dict(d: dict) -> TabularPolicy:
    clip = d.get("clip_range")
    return TabularPolicy(
        logits=np.array(d["logits"], dtype=float),
        learning_rate=d["learning_rate"],
        update_rule=d["update_rule"],
        clip_range=tuple(clip) if clip else None,
        baseline=d.get("baseline", "group"),
        step=d["step"],
    )


def save_policy(policy: TabularPolicy, path: str | Path) -> None:
    Path(path).write_text(json.dumps(policy_to_dict(policy)))


def load_policy(path: str | Path) -> TabularPolicy:
    return policy_from_dict(json.loads(Path(path).read_text()))
