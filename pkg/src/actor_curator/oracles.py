"""Independent oracles: enumeration, grid search, finite differences and Monte-Carlo drivers.

These back the ``verify`` suites and the test-suite; none of them reuse the
code path they check beyond the public function under test.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .actor import TabularPolicy, reward_table, softmax
from .bank import BankSpec, ProblemBank, generate_bank


# -- a small fixed curriculum instance --------------------------------------

@dataclass
class SelectionInstance:
    """Fixed old/new policies plus curator weights on a tiny independent bank."""

    bank: ProblemBank
    old: TabularPolicy
    new: TabularPolicy
    curator_weights: np.ndarray
    a_hat: np.ndarray
    utilities: np.ndarray


def selection_instance(size: int = 6, answers: int = 3, seed: int = 0) -> SelectionInstance:
    rng = np.random.default_rng(seed)
    raw = rng.uniform(0.5, 1.5, size)
    bank = generate_bank(BankSpec(size=size, answer_count=answers, structure="independent",
                                  difficulty_law="uniform", seed=seed,
                                  eval_weights=tuple(raw / raw.sum())))
    logits = rng.normal(0.0, 1.0, (size, answers))
    old = TabularPolicy(logits)
    new = TabularPolicy(logits + rng.normal(0.0, 0.7, (size, answers)))
    rewards = reward_table(old, bank)
    # analytic rollout expectation of the ratio-weighted advantage
    a_hat = ((new.probs() - old.probs()) * rewards).sum(axis=1)
    weights = rng.uniform(0.2, 1.0, size)
    return SelectionInstance(bank, old, new, weights / weights.sum(), a_hat, bank.p_eval * a_hat)


def enumerate_two_stage(inst: SelectionInstance, k: int, draws: int) -> np.ndarray:
    """Exact E[U_hat] over every candidate set and every ordered draw sequence."""
    K = len(inst.bank)
    q = k / K
    n_sets = math.comb(K, k)
    expect = np.zeros(K)
    for cand in itertools.combinations(range(K), k):
        cand = np.array(cand)
        cond = inst.curator_weights[cand] / inst.curator_weights[cand].sum()
        incl = 1.0 - (1.0 - cond) ** draws
        for seq in itertools.product(range(k), repeat=draws):
            prob = np.prod(cond[list(seq)]) / n_sets
            for j in set(seq):
                x = cand[j]
                expect[x] += prob * inst.bank.p_eval[x] * inst.a_hat[x] / (q * incl[j])
    return expect


def monte_carlo_two_stage(
    inst: SelectionInstance, k: int, draws: int, reps: int, rng: np.random.Generator,
    single_stage: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of U_hat per problem over ``reps`` replications.

    With ``single_stage`` the candidate set is the whole bank and q = 1.
    """
    K = len(inst.bank)
    if single_stage:
        k = K
        cand = np.tile(np.arange(K), (reps, 1))
    else:
        cand = np.argsort(rng.random((reps, K)), axis=1)[:, :k]
    q = k / K
    w = inst.curator_weights[cand]
    cond = w / w.sum(axis=1, keepdims=True)
    cdf = np.cumsum(cond, axis=1)
    u = rng.random((reps, draws)) * cdf[:, -1:]
    picks = np.minimum((u[:, :, None] >= cdf[:, None, :]).sum(axis=2), k - 1)
    selected = np.zeros((reps, k), dtype=bool)
    np.put_along_axis(selected, picks, True, axis=1)
    incl = 1.0 - (1.0 - cond) ** draws
    vals = np.where(selected, inst.bank.p_eval[cand] * inst.a_hat[cand] / (q * incl), 0.0)
    est = np.zeros((reps, K))
    np.put_along_axis(est, cand, vals, axis=1)
    return est.mean(axis=0), est.std(axis=0, ddof=1) / math.sqrt(reps)


# -- floored-simplex projection by grid search ------------------------------

def simplex_grid(dim: int, resolution: int) -> np.ndarray:
    """All compositions of ``resolution`` into ``dim`` parts, scaled to sum 1."""
    rows = []
    for cuts in itertools.combinations(range(resolution + dim - 1), dim - 1):
        parts = np.diff(np.concatenate([[-1], cuts, [resolution + dim - 1]])) - 1
        rows.append(parts)
    return np.array(rows, dtype=float) / resolution


def grid_floor_projection(p: np.ndarray, alpha: float, resolution: int = 40) -> tuple[np.ndarray, float]:
    """Minimize KL(v || p) over a grid of the alpha-floored simplex.

    Returns the best grid point and the grid spacing in probability units.
    """
    dim = len(p)
    free = 1.0 - dim * alpha
    pts = alpha + free * simplex_grid(dim, resolution)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = np.where(pts > 0, pts * np.log(pts / p), 0.0).sum(axis=1)
    return pts[np.argmin(kl)], free / resolution


# -- finite differences -----------------------------------------------------

def central_difference(fn, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        grad[i] = (fn(x + e) - fn(x - e)) / (2.0 * step)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


# -- sleeping-bandit second moment ------------------------------------------

def second_moment_samples(
    p: np.ndarray, losses: np.ndarray, k: int, s: int, rounds: int, rng: np.random.Generator
) -> np.ndarray:
    """Per-round sum_j p_j L_j^2 with random availability and ``s`` i.i.d. pulls."""
    K = len(p)
    avail = np.argsort(rng.random((rounds, K)), axis=1)[:, :k]
    pa = p[avail]
    z = pa.sum(axis=1, keepdims=True)
    cond = pa / z
    cdf = np.cumsum(cond, axis=1)
    u = rng.random((rounds, s)) * cdf[:, -1:]
    picks = np.minimum((u[:, :, None] >= cdf[:, None, :]).sum(axis=2), k - 1)
    counts = np.zeros((rounds, k))
    np.add.at(counts, (np.arange(rounds)[:, None], picks), 1.0)
    est = counts * losses[avail] / (s * cond)
    return (pa * est**2).sum(axis=1)


def expected_second_moment_uniform_availability(p: np.ndarray, losses: np.ndarray, k: int, s: int) -> float | None:
    """Exact expectation over every availability set (only for small K)."""
    K = len(p)
    if math.comb(K, k) > 50_000:
        return None
    total = 0.0
    for avail in itertools.combinations(range(K), k):
        a = np.array(avail)
        c = p[a] / p[a].sum()
        total += float((p[a] * losses[a] ** 2 * ((1.0 - c) / (s * c) + 1.0)).sum())
    return total / math.comb(K, k)


def random_floored_distribution(K: int, alpha: float, rng: np.random.Generator) -> np.ndarray:
    p = softmax(rng.normal(0.0, 1.5, K))
    return alpha + (1.0 - K * alpha) * p
