"""Comparison curricula: uniform, SEC bucket TD, PCL threshold, regression and abs-advantage."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .actor import RolloutGroup, group_advantage, softmax
from .bank import ProblemBank
from .curator_approx import design
from .errors import ConfigurationError


def _check_batch(batch: int, available: int) -> None:
    if batch < 0:
        raise ConfigurationError("batch must be nonnegative")
    if batch > available:
        raise ConfigurationError(f"batch {batch} exceeds the {available} available problems")


def uniform_select(bank: ProblemBank | int, batch: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample without replacement."""
    size = bank if isinstance(bank, int) else len(bank)
    _check_batch(batch, size)
    return rng.choice(size, size=batch, replace=False)


# -- SEC --------------------------------------------------------------------

@dataclass
class SecState:
    q_values: np.ndarray
    td_rate: float = 0.5
    temperature: float = 0.1

    def __post_init__(self):
        self.q_values = np.asarray(self.q_values, dtype=float)
        if not 0.0 < self.td_rate <= 1.0:
            raise ConfigurationError("td_rate must lie in (0, 1]")
        if self.temperature <= 0:
            raise ConfigurationError("temperature must be positive")
        if not np.all(np.isfinite(self.q_values)):
            raise ConfigurationError("q_values must be finite")

    @classmethod
    def zeros(cls, n_buckets: int, **kwargs) -> "SecState":
        return cls(np.zeros(n_buckets), **kwargs)

    def bucket_probs(self) -> np.ndarray:
        return softmax(self.q_values / self.temperature)


def sec_update(state: SecState, bucket: int, reward: float) -> SecState:
    """Q(c) <- a r + (1 - a) Q(c) for one bucket."""
    if not 0 <= bucket < len(state.q_values):
        raise IndexError(f"unknown bucket {bucket}")
    q = state.q_values.copy()
    q[bucket] = state.td_rate * reward + (1.0 - state.td_rate) * q[bucket]
    return dataclasses.replace(state, q_values=q)


def sec_rewards(groups: list[RolloutGroup], bank: ProblemBank) -> dict[int, float]:
    """Mean absolute std-normalized advantage per bucket present in the batch."""
    per_bucket: dict[int, list[float]] = {}
    for g in groups:
        per_bucket.setdefault(int(bank.buckets[g.problem_id]), []).append(abs_adv_utility(g))
    return {b: float(np.mean(v)) for b, v in sorted(per_bucket.items())}


def sec_conditional(state: SecState, bank: ProblemBank, candidate_ids) -> np.ndarray:
    """Selection probability over candidates: bucket softmax, then uniform within bucket.

    Buckets with no candidate are dropped and the bucket softmax renormalized.
    """
    ids = np.asarray(candidate_ids, dtype=int)
    buckets = bank.buckets[ids]
    counts = np.bincount(buckets, minlength=len(state.q_values))
    probs = state.bucket_probs() * (counts > 0)
    probs = probs / probs.sum()
    return probs[buckets] / counts[buckets]


def sec_select(
    state: SecState,
    bank: ProblemBank,
    batch: int,
    rng: np.random.Generator,
    candidate_ids=None,
) -> np.ndarray:
    """Draw ``batch`` distinct problems: a bucket from the Boltzmann policy, then a uniform member."""
    ids = np.arange(len(bank)) if candidate_ids is None else np.asarray(candidate_ids, dtype=int)
    _check_batch(batch, len(ids))
    remaining = {b: list(ids[bank.buckets[ids] == b]) for b in range(len(state.q_values))}
    probs = state.bucket_probs()
    chosen = []
    while len(chosen) < batch:
        live = np.array([len(remaining[b]) > 0 for b in range(len(probs))])
        w = probs * live
        b = int(rng.choice(len(probs), p=w / w.sum()))
        pick = int(rng.integers(len(remaining[b])))
        chosen.append(remaining[b].pop(pick))
    return np.array(chosen, dtype=int)


# -- PCL --------------------------------------------------------------------

@dataclass
class ValueModel:
    """Linear success-rate predictor over problem features (plus bias)."""

    theta: np.ndarray
    target: float = 0.5
    pool_multiplier: int = 4
    lr: float = 0.1
    epochs: int = 1

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if not 0.0 < self.target < 1.0:
            raise ConfigurationError("target must lie in (0, 1)")
        if self.pool_multiplier < 1:
            raise ConfigurationError("pool_multiplier must be >= 1")

    @classmethod
    def zeros(cls, n_features: int, **kwargs) -> "ValueModel":
        return cls(np.zeros(n_features + 1), **kwargs)

    def raw_predict(self, features: np.ndarray) -> np.ndarray:
        return design(features) @ self.theta

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.clip(self.raw_predict(features), 0.0, 1.0)


def pcl_select(model: ValueModel, candidate_ids, features: np.ndarray, m: int) -> np.ndarray:
    """The ``m`` candidates whose predicted success is nearest the target; ties to lower id."""
    ids = np.asarray(candidate_ids, dtype=int)
    _check_batch(m, len(ids))
    dist = np.abs(model.predict(features) - model.target)
    order = np.lexsort((ids, dist))
    return ids[order[:m]]


def pcl_loss(model: ValueModel, features: np.ndarray, targets: np.ndarray) -> float:
    resid = model.raw_predict(features) - np.asarray(targets, dtype=float)
    return float(np.mean(resid**2))


def pcl_update(model: ValueModel, features: np.ndarray, success_rates) -> ValueModel:
    """Gradient steps on the mean squared error of predictions against observed success."""
    X = design(features)
    y = np.asarray(success_rates, dtype=float)
    theta = model.theta.copy()
    for _ in range(model.epochs):
        resid = X @ theta - y
        theta = theta - model.lr * 2.0 * X.T @ resid / len(y)
    return dataclasses.replace(model, theta=theta)


# -- utility substitutes ----------------------------------------------------

def abs_adv_utility(group: RolloutGroup | np.ndarray) -> float:
    """Mean |A_i| under std-normalized group advantages."""
    return float(np.mean(np.abs(group_advantage(group, "std"))))


def boltzmann_conditional(predictions: np.ndarray, eta: float) -> np.ndarray:
    """p proportional to exp(prediction / eta) over candidates."""
    if eta <= 0:
        raise ConfigurationError("eta must be positive")
    return softmax(np.asarray(predictions, dtype=float) / eta)


def regression_curator_select(
    predictions: np.ndarray,
    candidate_ids,
    batch: int,
    eta: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample ``batch`` distinct candidates from the Boltzmann transform of predicted utilities."""
    ids = np.asarray(candidate_ids, dtype=int)
    _check_batch(batch, len(ids))
    if batch == 0:
        return ids[:0]
    p = boltzmann_conditional(predictions, eta)
    return rng.choice(ids, size=batch, replace=False, p=p)
