"""Sleeping online mirror descent with regret and drift instrumentation.

Each round a uniformly random set of ``k`` arms out of ``K`` is available.
The learner restricts its global distribution to that set, pulls ``s`` arms
i.i.d., builds an importance-weighted loss estimate and takes a
negative-entropy mirror step onto the alpha-floored simplex.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .curator_tabular import mirror_step
from .errors import ConfigurationError, LogicError

LOSS_MODELS = ("piecewise_constant", "bounded_random_walk", "abrupt_switch")
ABRUPT_LOW, ABRUPT_HIGH = 0.1, 0.9


@dataclass
class BanditConfig:
    K: int = 20
    k: int = 5
    s: int = 1
    T: int = 2000
    eta: float = 0.1
    alpha: float = 0.01
    restart_block_length: int | None = None
    loss_model: str = "abrupt_switch"
    seed: int = 0
    n_switches: int = 4
    # "tuned" derives eta and the block length from the drift of the loss table
    schedule: str = "fixed"

    def validate(self) -> None:
        if not 1 <= self.k <= self.K:
            raise ConfigurationError("need 1 <= k <= K")
        if self.s < 1:
            raise ConfigurationError("need s >= 1")
        if self.T < 1:
            raise ConfigurationError("need T >= 1")
        if not 0 < self.alpha < 1.0 / self.k:
            raise ConfigurationError("alpha must lie in (0, 1/k)")
        if self.alpha * self.K > 1.0:
            raise ConfigurationError("alpha * K must not exceed 1 for the global floor")
        if self.eta < 0:
            raise ConfigurationError("eta must be nonnegative")
        if self.loss_model not in LOSS_MODELS:
            raise ConfigurationError(f"unknown loss_model {self.loss_model!r}")
        if self.restart_block_length is not None and self.restart_block_length < 1:
            raise ConfigurationError("restart_block_length must be >= 1")
        if self.schedule not in ("fixed", "tuned"):
            raise ConfigurationError("schedule must be 'fixed' or 'tuned'")


@dataclass
class RegretLedger:
    config: dict
    # expectations over the pulls given the played distribution and available set
    best_arm_regret: np.ndarray
    best_available_regret: np.ndarray
    realized_best_arm_regret: np.ndarray
    drift_total: float
    drift_steps: np.ndarray
    block_starts: list[int]
    chosen: np.ndarray
    chosen_losses: np.ndarray
    second_moment: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eta: float = 0.0
    final_distribution: np.ndarray = field(default_factory=lambda: np.zeros(0))
    losses_last: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def T(self) -> int:
        return len(self.best_available_regret)


# -- loss processes ---------------------------------------------------------

def make_losses(
    model: str, T: int, K: int, rng: np.random.Generator, n_switches: int = 4
) -> np.ndarray:
    """Loss table of shape (T, K) with entries in [0, 1]."""
    if model == "abrupt_switch":
        # one good arm at a time; its identity jumps at equally spaced switch points
        table = np.full((T, K), ABRUPT_HIGH)
        bounds = np.linspace(0, T, n_switches + 2).round().astype(int)
        best = rng.permutation(K)[: n_switches + 1]
        for seg, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
            table[a:b, best[seg]] = ABRUPT_LOW
        return table
    if model == "piecewise_constant":
        bounds = np.linspace(0, T, n_switches + 2).round().astype(int)
        table = np.empty((T, K))
        for a, b in zip(bounds[:-1], bounds[1:]):
            table[a:b] = rng.uniform(0.0, 1.0, K)
        return table
    # bounded random walk reflected into [0, 1]
    steps = rng.normal(0.0, 0.01, (T, K))
    walk = rng.uniform(0.2, 0.8, K) + np.cumsum(steps, axis=0)
    walk = np.mod(walk, 2.0)
    return np.where(walk > 1.0, 2.0 - walk, walk)


def drift(loss_table: np.ndarray) -> tuple[float, np.ndarray]:
    """V_T = sum_{t>=2} max_i |l_t,i - l_{t-1},i| and the per-step increments."""
    table = np.asarray(loss_table, dtype=float)
    if len(table) < 2:
        return 0.0, np.zeros(len(table))
    deltas = np.concatenate([[0.0], np.abs(np.diff(table, axis=0)).max(axis=1)])
    return float(deltas.sum()), deltas


def tuned_schedule(T: int, V: float | None, s: int, k: int, alpha: float) -> tuple[int, float | None]:
    """Block length and step size that balance restart cost against drift.

    Returns ``(ceil(T^(2/3)), None)`` when no drift estimate is available.
    """
    log_a = math.log(1.0 / alpha)
    if V is None or V <= 0:
        return math.ceil(T ** (2.0 / 3.0)), None
    length = ((T / V) * math.sqrt(s * k * log_a / 2.0)) ** (2.0 / 3.0)
    eta = 2 ** (2.0 / 3.0) * log_a ** (1.0 / 3.0) * (s * k) ** (-2.0 / 3.0) * (V / T) ** (1.0 / 3.0)
    return max(1, min(T, math.ceil(length))), eta


# -- estimator --------------------------------------------------------------

def loss_estimator(cond_p: np.ndarray, pulls, losses: np.ndarray, s: int | None = None) -> np.ndarray:
    """Importance-weighted loss estimate over all arms.

    ``cond_p`` and ``losses`` are full-length arm vectors (zero probability
    off the available set).
    """
    pulls = np.asarray(pulls, dtype=int)
    s = len(pulls) if s is None else s
    cond_p = np.asarray(cond_p, dtype=float)
    if np.any(cond_p[pulls] <= 0):
        raise LogicError("pulled an arm with zero conditional probability")
    counts = np.bincount(pulls, minlength=len(cond_p))
    est = np.zeros(len(cond_p))
    hit = counts > 0
    est[hit] = counts[hit] * np.asarray(losses, dtype=float)[hit] / (s * cond_p[hit])
    return est


def second_moment(p: np.ndarray, estimates: np.ndarray) -> tuple[float, float]:
    """Mean and standard error of sum_j p_j L_j^2 over rows of ``estimates``.

    ``p`` is either one weight vector or one row per sample.
    """
    est = np.atleast_2d(estimates)
    vals = (np.asarray(p) * est**2).sum(axis=1)
    se = vals.std(ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else 0.0
    return float(vals.mean()), float(se)


def expected_second_moment(p: np.ndarray, avail, losses: np.ndarray, s: int) -> float:
    """Closed-form E[sum_j p_j L_j^2 | available set] for the estimator above."""
    avail = np.asarray(avail, dtype=int)
    c = p[avail] / p[avail].sum()
    l2 = np.asarray(losses, dtype=float)[avail] ** 2
    return float((p[avail] * l2 * ((1.0 - c) / (s * c) + 1.0)).sum())


def comparator_loss(available_losses: np.ndarray, alpha: float) -> float:
    """Loss of the mixture (1 - k alpha) e_best + alpha * 1_available."""
    l_av = np.asarray(available_losses, dtype=float)
    return float((1.0 - len(l_av) * alpha) * l_av.min() + alpha * l_av.sum())


# -- the algorithm ----------------------------------------------------------

def run_sleeping_osmd(
    config: BanditConfig,
    losses: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
    drift_estimate: float | None = None,
    track_second_moment: bool = False,
) -> RegretLedger:
    config.validate()
    K, k, s, T = config.K, config.k, config.s, config.T
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if losses is None:
        losses = make_losses(config.loss_model, T, K, rng, config.n_switches)
    losses = np.asarray(losses, dtype=float)
    if losses.shape != (T, K):
        raise ConfigurationError(f"loss table must have shape {(T, K)}")
    v_total, v_steps = drift(losses)

    eta = config.eta
    block = config.restart_block_length
    if config.schedule == "tuned":
        block, tuned_eta = tuned_schedule(T, drift_estimate if drift_estimate is not None else v_total,
                                          s, k, config.alpha)
        if tuned_eta is not None:
            eta = tuned_eta

    alpha = config.alpha
    uniform = np.full(K, 1.0 / K)
    p = uniform.copy()
    # availability sets and pull uniforms are drawn up front in bulk
    avail_all = np.sort(np.argsort(rng.random((T, K)), axis=1)[:, :k], axis=1)
    u_all = rng.random((T, s))
    l_av_all = np.take_along_axis(losses, avail_all, axis=1)
    l_star_all = l_av_all.min(axis=1)
    comparator_all = (1.0 - k * alpha) * l_star_all + alpha * l_av_all.sum(axis=1)
    ba = np.empty(T)
    exp_best = np.empty(T)
    chosen = np.empty((T, s), dtype=int)
    moments = np.empty(T) if track_second_moment else np.zeros(0)
    block_starts = [0]

    for t in range(T):
        if block is not None and t > 0 and t % block == 0:
            p = uniform.copy()
            block_starts.append(t)
        avail = avail_all[t]
        p_av = p[avail]
        z = p_av.sum()
        cdf = np.cumsum(p_av)
        local = np.minimum(np.searchsorted(cdf, u_all[t] * z, side="right"), k - 1)
        pulls = avail[local]
        chosen[t] = pulls
        played = (p_av @ l_av_all[t]) / z
        ba[t] = played - comparator_all[t]
        exp_best[t] = s * (played - l_star_all[t])

        if track_second_moment or eta > 0:
            # importance-weighted estimate; repeated pulls accumulate
            est = np.zeros(K)
            np.add.at(est, pulls, losses[t, pulls] * z / (s * p[pulls]))
            if track_second_moment:
                moments[t] = p @ est**2
            if eta > 0:
                p, _ = mirror_step(p, est, eta, alpha, direction=-1.0, cap=None)

    chosen_loss = np.take_along_axis(losses, chosen, axis=1)
    best = chosen_loss.sum(axis=1) - s * l_star_all

    cfg = asdict(config)
    return RegretLedger(
        config=cfg,
        best_arm_regret=np.cumsum(exp_best),
        best_available_regret=np.cumsum(ba),
        realized_best_arm_regret=np.cumsum(best),
        drift_total=v_total,
        drift_steps=v_steps,
        block_starts=block_starts,
        chosen=chosen,
        chosen_losses=chosen_loss,
        second_moment=moments,
        eta=eta,
        final_distribution=p,
        losses_last=losses[-1].copy(),
    )


def log_checkpoints(T: int, n: int = 8) -> list[int]:
    pts = np.unique(np.geomspace(min(10, T), T, n).round().astype(int))
    return [int(x) for x in pts]


def loglog_slope(ts, values) -> float:
    """Least-squares slope of log(value) against log(t)."""
    ts = np.asarray(ts, dtype=float)
    vals = np.maximum(np.asarray(values, dtype=float), 1e-12)
    return float(np.polyfit(np.log(ts), np.log(vals), 1)[0])


def regret_report(ledger: RegretLedger, checkpoints: list[int] | None = None) -> dict:
    """Summary of both regret notions at logarithmic checkpoints."""
    T = ledger.T
    if checkpoints is None:
        checkpoints = log_checkpoints(T)
    ba = [float(ledger.best_available_regret[c - 1]) for c in checkpoints]
    best = [float(ledger.best_arm_regret[c - 1]) for c in checkpoints]
    tail = [i for i, c in enumerate(checkpoints) if c >= max(10, T // 10)]
    slope = loglog_slope([checkpoints[i] for i in tail], [ba[i] for i in tail]) if len(tail) >= 2 else float("nan")
    return {
        "config": ledger.config,
        "eta": ledger.eta,
        "drift": ledger.drift_total,
        "block_starts": len(ledger.block_starts),
        "checkpoints": checkpoints,
        "best_arm_regret": best,
        "best_available_regret": ba,
        "final_best_arm_regret": float(ledger.best_arm_regret[-1]),
        "final_best_available_regret": float(ledger.best_available_regret[-1]),
        "slope_best_available": slope,
    }
